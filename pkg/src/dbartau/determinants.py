"""Traces and regularized determinants of Nyström matrices.

Two independent routes to ``det2(I - A) = det((I - A) exp(A))``:

* the trace series ``log det2 = -sum_{n>=2} Tr(A^n) / n`` fed by matrix
  powers, and
* the eigenvalue product ``prod (1 - lam) exp(lam)``,

plus the Fredholm determinant ``det(I - A)`` from an LU factorization, which
satisfies ``det2 = det(I - A) exp(Tr A)`` exactly at the matrix level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .geometry import QuadratureGrid
from .kernel import DiscreteOperator, KernelPair

__all__ = [
    "N_MAX_CAP",
    "SeriesDivergenceError",
    "SeriesFallbackWarning",
    "TraceSequence",
    "Det2Result",
    "trace_K",
    "trace_powers",
    "det2_series",
    "log_det2_series",
    "det2_eigen",
    "log_det2_eigen",
    "fredholm_det",
    "log_fredholm_det",
    "continue_branch",
    "determinant_report",
]

N_MAX_CAP = 400


class SeriesDivergenceError(ArithmeticError):
    """The trace series failed its ratio test and no operator was given to fall back on."""


class SeriesFallbackWarning(RuntimeWarning):
    """The trace series was abandoned in favour of the eigenvalue product."""


def _matrix(A) -> np.ndarray:
    M = A.matrix if isinstance(A, DiscreteOperator) else np.asarray(A)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    return M.astype(complex, copy=False)


@dataclass(frozen=True)
class TraceSequence:
    """``values[n-1] = Tr(A^n)`` for ``n = 1..len(values)``.

    ``n_max`` is the requested length; ``values`` may be shorter when the
    sequence dropped below roundoff and the computation stopped early.
    """

    values: np.ndarray
    n_max: int
    method: str = "power"

    @property
    def converged(self) -> bool:
        return len(self.values) < self.n_max

    def radius_estimate(self) -> float:
        """Spectral radius proxy from the last two non-negligible traces."""
        v = np.abs(self.values)
        nz = np.nonzero(v > 1e-300)[0]
        if len(nz) == 0:
            return 0.0
        if len(nz) == 1:
            return float(v[nz[0]] ** (1.0 / (nz[0] + 1)))
        i, j = nz[-2], nz[-1]
        return float((v[j] / v[i]) ** (1.0 / (j - i)))


def trace_K(grid: QuadratureGrid, p: KernelPair) -> complex:
    """Quadrature of the diagonal ``K(z, z) = (df/dz)^T g``."""
    _, G, DF = p.values(grid.nodes)
    diag = np.einsum("kra,kra->k", DF, G)
    return complex(np.sum(grid.weights * diag))


def trace_powers(A, n_max: int = 40, method: str = "power", early_stop: bool = True,
                 cap: int = N_MAX_CAP) -> TraceSequence:
    """``Tr(A^n)``, ``n = 1..n_max``.

    ``method="power"`` multiplies out ``A^1..A^m`` and reads off
    ``Tr(A^(a+b)) = sum(A^a * (A^b).T)``, so ``m - 1`` products reach
    ``n = 2m``.  ``method="eigen"`` sums ``lam^n``.  With ``early_stop`` the
    sequence ends once two consecutive terms fall below roundoff relative to
    the running series.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    if n_max > cap:
        raise ValueError(f"n_max={n_max} exceeds the cap {cap}")
    M = _matrix(A)
    out = []
    if method == "eigen":
        lam = np.linalg.eigvals(M)
        pw = np.ones_like(lam)
        for _ in range(n_max):
            pw = pw * lam
            out.append(complex(pw.sum()))
        return TraceSequence(np.array(out), n_max, "eigen")
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    powers = [None, M]
    series = 0j
    small = 0
    for n in range(1, n_max + 1):
        b = n // 2
        a = n - b
        while len(powers) <= a:
            powers.append(powers[-1] @ M)
        if b == 0:
            tr = complex(np.trace(M))
        else:
            tr = complex(np.sum(powers[a] * powers[b].T))
        out.append(tr)
        if n >= 2:
            series -= tr / n
        if early_stop and n >= 2:
            small = small + 1 if abs(tr) / n <= 1e-17 * max(1.0, abs(series)) else 0
            if small >= 2:
                break
    return TraceSequence(np.array(out), n_max, "power")


@dataclass(frozen=True)
class Det2Result:
    log_value: complex
    truncation: float
    terms: int
    fallback: bool = False

    @property
    def value(self) -> complex:
        return complex(np.exp(self.log_value))


def log_det2_series(ts: TraceSequence, operator=None, tol: float = 1e-13) -> Det2Result:
    """``log det2`` from the trace series, with a ratio-test convergence check.

    The truncation estimate is the geometric tail implied by the last
    retained term.  If the series does not converge the eigenvalue product
    is used when ``operator`` is given (with :class:`SeriesFallbackWarning`),
    otherwise :class:`SeriesDivergenceError` is raised.
    """
    v = np.asarray(ts.values)
    n = np.arange(1, len(v) + 1)
    logd = complex(-np.sum(v[1:] / n[1:]))
    r = ts.radius_estimate()
    last = float(np.max(np.abs(v[-2:]) / n[-2:])) if len(v) >= 2 else 0.0
    if ts.converged or last == 0.0:
        trunc = last
        ok = True
    elif r < 1.0:
        trunc = last * r / (1.0 - r)
        ok = trunc <= tol * max(1.0, abs(logd))
    else:
        trunc = np.inf
        ok = False
    if ok:
        return Det2Result(logd, float(trunc), len(v))
    msg = f"trace series not converged after {len(v)} terms (radius estimate {r:.3g})"
    if operator is None:
        raise SeriesDivergenceError(msg)
    warnings.warn(msg + "; using the eigenvalue product", SeriesFallbackWarning, stacklevel=2)
    return Det2Result(log_det2_eigen(operator), 0.0, len(v), True)


def det2_series(ts: TraceSequence, operator=None, tol: float = 1e-13) -> complex:
    return log_det2_series(ts, operator, tol).value


def log_det2_eigen(A) -> complex:
    M = _matrix(A)
    if M.size == 0:
        return 0j
    try:
        lam = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"eigenvalue computation failed: {exc}") from exc
    return complex(np.sum(np.log(1.0 - lam) + lam))


def det2_eigen(A) -> complex:
    """``prod (1 - lam) exp(lam)`` over the eigenvalues of ``A``."""
    return complex(np.exp(log_det2_eigen(A)))


def log_fredholm_det(A) -> complex:
    M = _matrix(A)
    if M.size == 0:
        return 0j
    lu, piv = sla.lu_factor(np.eye(len(M)) - M, check_finite=False)
    d = np.diag(lu)
    swaps = int(np.sum(piv != np.arange(len(piv))))
    return complex(np.sum(np.log(d.astype(complex))) + 1j * np.pi * (swaps % 2))


def fredholm_det(A) -> complex:
    """``det(I - A)`` by LU."""
    return complex(np.exp(log_fredholm_det(A)))


def continue_branch(log_value: complex, reference: complex) -> complex:
    """Shift ``log_value`` by a multiple of ``2 pi i`` to land nearest ``reference``."""
    k = np.round((reference.imag - log_value.imag) / (2 * np.pi))
    return complex(log_value + 2j * np.pi * k)


def determinant_report(A, n_max: int = 40) -> dict:
    """All determinant paths and their mutual discrepancies."""
    M = _matrix(A)
    ts = trace_powers(M, n_max)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SeriesFallbackWarning)
        ser = log_det2_series(ts, M)
    le = log_det2_eigen(M)
    lf = log_fredholm_det(M)
    tr = complex(np.trace(M))
    d_eig = np.exp(le)
    d_ser = np.exp(ser.log_value)
    d_fr = np.exp(lf + tr)
    scale = max(abs(d_eig), 1e-300)
    return {
        "size": int(M.shape[0]),
        "trace": tr,
        "det2_series": complex(d_ser),
        "det2_eigen": complex(d_eig),
        "fredholm_det": complex(np.exp(lf)),
        "log_det2": le,
        "series_terms": ser.terms,
        "series_truncation": ser.truncation,
        "series_fallback": ser.fallback or bool(caught),
        "series_vs_eigen": float(abs(d_ser - d_eig) / scale),
        "fredholm_vs_eigen": float(abs(d_fr - d_eig) / scale),
        "radius_estimate": ts.radius_estimate(),
    }
