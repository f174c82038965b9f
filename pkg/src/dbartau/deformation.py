"""Isomonodromic-style deformations of a 2x2 dbar-problem.

Times ``t = (t_1..t_J)`` enter through ``xi(z) = sum_j z^j t_j`` and the
dressing ``M = e^{xi sigma3 / 2} M0 e^{-xi sigma3 / 2}``.  The Malgrange form

    omega_j = -(1/pi) int Tr(Gamma^{-1} dGamma/dz dM/dt_j) dA

is closed, and for nilpotent fields coming from a kernel pair its potential
is ``log det2(I - K)``.  Miwa shifts ``t -> t -/+ [1/zeta]`` are applied
exactly as rational conjugations of ``M``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dbar import (FieldError, GammaField, MatrixField, SolverError, evaluate_gamma, patch_operators,
                   solve_gamma)
from .determinants import continue_branch, log_fredholm_det
from .geometry import QuadratureGrid, cached_grid, circle_contour
from .kernel import KernelPair, discretize, dress_pair

__all__ = [
    "J_CAP",
    "OVERFLOW_GUARD",
    "MiwaSingularityError",
    "TimeVector",
    "DeformationState",
    "ShiftMatrices",
    "dress",
    "dress_kernel",
    "dt_M",
    "malgrange_component",
    "malgrange_form",
    "log_det2",
    "tau_along_path",
    "miwa_shift_M",
    "miwa_shift_pair",
    "shift_matrices",
    "connection_check",
    "gamma_fn",
    "tau_ratio",
    "tau_ratio_check",
    "tau_ratio_composition",
    "hirota_residue",
    "kp_log_tau_stencil",
    "kp_residual",
    "kp_richardson",
]

J_CAP = 8
OVERFLOW_GUARD = 200.0


class MiwaSingularityError(ArithmeticError):
    """The pivot entry of Gamma at the shift point vanishes."""


@dataclass(frozen=True)
class TimeVector:
    """Finitely many active times ``t_1..t_J``."""

    t: tuple

    def __post_init__(self):
        vals = tuple(complex(v) for v in np.atleast_1d(self.t))
        if not 1 <= len(vals) <= J_CAP:
            raise ValueError(f"need 1 <= J <= {J_CAP} times, got {len(vals)}")
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("times must be finite")
        object.__setattr__(self, "t", vals)

    @classmethod
    def zeros(cls, J: int = 3) -> "TimeVector":
        return cls((0.0,) * J)

    @property
    def J(self) -> int:
        return len(self.t)

    def array(self) -> np.ndarray:
        return np.array(self.t, dtype=complex)

    def xi(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for j, tj in enumerate(self.t, start=1):
            out = out + tj * z**j
        return out

    def dxi(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for j, tj in enumerate(self.t, start=1):
            out = out + j * tj * z ** (j - 1)
        return out

    def shifted(self, j: int, h: complex) -> "TimeVector":
        """Move ``t_j`` by ``h`` (1-based ``j``), padding with zeros if needed."""
        v = list(self.t) + [0j] * max(0, j - self.J)
        v[j - 1] += h
        return TimeVector(tuple(v))

    def __add__(self, other) -> "TimeVector":
        a, b = self.array(), TimeVector(other).array() if not isinstance(other, TimeVector) else other.array()
        n = max(len(a), len(b))
        return TimeVector(tuple(np.pad(a, (0, n - len(a))) + np.pad(b, (0, n - len(b)))))


def _as_times(t) -> TimeVector:
    return t if isinstance(t, TimeVector) else TimeVector(tuple(np.atleast_1d(t)))


def _check_2x2(M0: MatrixField):
    if M0.shape != (2, 2):
        raise FieldError("deformations are defined for 2x2 fields")


def dress(M0: MatrixField, t) -> MatrixField:
    """``e^{xi sigma3/2} M0 e^{-xi sigma3/2}``: scale (1,2) by ``e^xi`` and (2,1) by ``e^-xi``."""
    _check_2x2(M0)
    t = _as_times(t)

    def func(z):
        M = M0(z).copy()
        xi = t.xi(z)
        live = np.abs(M[:, 0, 1]) + np.abs(M[:, 1, 0]) > 0
        if np.any(live & (np.abs(xi.real) > OVERFLOW_GUARD)):
            k = int(np.argmax(live & (np.abs(xi.real) > OVERFLOW_GUARD)))
            raise FieldError(f"|Re xi| = {abs(xi[k].real):.1f} exceeds the overflow guard at z = {z[k]:.6g}")
        e = np.exp(np.where(live, xi, 0.0))
        M[:, 0, 1] *= e
        M[:, 1, 0] /= e
        return M

    return MatrixField(func, (2, 2), M0.support, M0.traceless, M0.nilpotent, name=f"{M0.name}@t")


def dress_kernel(p: KernelPair, t) -> KernelPair:
    """Pair form of :func:`dress`: ``f -> E f``, ``g -> E^{-1} g``, ``E = diag(e^{xi/2}, e^{-xi/2})``."""
    t = _as_times(t)

    def E(z):
        h = np.exp(0.5 * t.xi(z))
        return np.stack([h, 1.0 / h], axis=1)

    def dE(z):
        d = 0.5 * t.dxi(z)
        return E(z) * np.stack([d, -d], axis=1)

    return dress_pair(p, E, dE, p.name)


def dt_M(M: MatrixField, j: int) -> MatrixField:
    """``dM/dt_j = (z^j / 2) [sigma3, M]``."""
    if j < 1:
        raise ValueError("time indices start at 1")

    def func(z):
        A = M(z)
        zj = np.asarray(z, dtype=complex) ** j
        out = np.zeros_like(A)
        out[:, 0, 1] = zj * A[:, 0, 1]
        out[:, 1, 0] = -zj * A[:, 1, 0]
        return out

    return MatrixField(func, (2, 2), M.support, True, False, name=f"d{M.name}/dt{j}")


@dataclass
class DeformationState:
    """Base field, current times, accumulated ``log tau`` and a cached solution.

    ``pair`` (optional) is the kernel pair that induces ``M0``; it makes the
    determinant side of the identities available.
    """

    M0: MatrixField
    grid: QuadratureGrid
    t: TimeVector = field(default_factory=TimeVector.zeros)
    pair: KernelPair | None = None
    log_tau: complex = 0j
    _gamma: GammaField | None = field(default=None, repr=False)

    def __post_init__(self):
        _check_2x2(self.M0)
        self.t = _as_times(self.t)

    @classmethod
    def from_pair(cls, p: KernelPair, grid: QuadratureGrid, t=None) -> "DeformationState":
        M0 = MatrixField(lambda z: np.pi * np.einsum("kra,ksa->krs", *p.values(z)[:2]), (p.r, p.r), p.support,
                         True, True, name=p.name)
        return cls(M0, grid, _as_times(t) if t is not None else TimeVector.zeros(), p)

    @property
    def M(self) -> MatrixField:
        return dress(self.M0, self.t)

    @property
    def gamma(self) -> GammaField:
        if self._gamma is None:
            self._gamma = solve_gamma(self.grid, self.M)
        return self._gamma

    def at(self, t) -> "DeformationState":
        return DeformationState(self.M0, self.grid, _as_times(t), self.pair)

    def move_to(self, t) -> None:
        self.t = _as_times(t)
        self._gamma = None


def malgrange_component(state: DeformationState, j: int) -> complex:
    """``omega_j`` at the current times."""
    g = state.gamma
    G = g.values
    dG = g.dz_values
    dM = dt_M(state.M, j)(state.grid.nodes)
    Ginv = np.linalg.inv(G)
    integrand = np.einsum("kab,kbc,kca->k", Ginv, dG, dM)
    return complex(-np.sum(state.grid.weights * integrand) / np.pi)


def malgrange_form(state: DeformationState, js: Sequence[int] | None = None) -> np.ndarray:
    js = range(1, state.t.J + 1) if js is None else js
    return np.array([malgrange_component(state, j) for j in js])


def log_det2(state: DeformationState, reference: complex | None = None) -> complex:
    """``log det2(I - K_t)`` of the dressed pair, branch-continued toward ``reference``."""
    if state.pair is None:
        raise FieldError("the determinant needs the kernel pair behind M0")
    A = discretize(dress_kernel(state.pair, state.t), state.grid).matrix
    val = log_fredholm_det(A) + complex(np.trace(A))
    return continue_branch(val, reference) if reference is not None else val


_GL8 = np.polynomial.legendre.leggauss(8)


def tau_along_path(state: DeformationState, path, steps: int = 1) -> complex:
    """Integrate ``omega`` along a polyline in t-space and add it to ``state.log_tau``.

    Each of the ``steps`` sub-segments of every leg uses 8-point Gauss.  The
    state ends at the last vertex.
    """
    verts = [_as_times(v) for v in path]
    if not verts:
        return 0j
    J = max(v.J for v in verts)
    pts = [np.pad(v.array(), (0, J - v.J)) for v in verts]
    x, w = _GL8
    total = 0j
    for a, b in zip(pts[:-1], pts[1:]):
        for s in range(steps):
            lo = a + (b - a) * s / steps
            hi = a + (b - a) * (s + 1) / steps
            d = hi - lo
            if not np.any(d):
                continue
            active = [j + 1 for j in range(J) if d[j] != 0]
            for xq, wq in zip(x, w):
                tq = TimeVector(tuple(lo + 0.5 * (xq + 1.0) * d))
                st = state.at(tq)
                try:
                    om = malgrange_form(st, active)
                except SolverError as exc:
                    raise SolverError(f"solve failed along the path at t = {tq.t}: {exc}") from exc
                total += 0.5 * wq * np.sum(om * d[np.array(active) - 1])
    state.log_tau += total
    state.move_to(TimeVector(tuple(pts[-1])))
    return complex(total)


# -- Miwa shifts -------------------------------------------------------------------------

def _sign(sign) -> int:
    s = {"+": 1, "-": -1, 1: 1, -1: -1}.get(sign)
    if s is None:
        raise ValueError("sign must be '+' or '-'")
    return s


def _check_outside(support, zeta):
    if support is not None and bool(np.any(support.contains(np.array([zeta])))):
        raise FieldError(f"zeta = {zeta} lies in the support")


def miwa_shift_M(M: MatrixField, zeta: complex, sign) -> MatrixField:
    """``M(t +/- [1/zeta]) = (1 - z/zeta)^{-/+ sigma3/2} M (1 - z/zeta)^{+/- sigma3/2}``."""
    s = _sign(sign)
    zeta = complex(zeta)
    _check_outside(M.support, zeta)

    def func(z):
        A = M(z).copy()
        q = (1.0 - np.asarray(z, dtype=complex) / zeta) ** (-s)
        A[:, 0, 1] *= q
        A[:, 1, 0] /= q
        return A

    return MatrixField(func, M.shape, M.support, M.traceless, M.nilpotent, name=f"{M.name}{'+' if s > 0 else '-'}")


def miwa_shift_pair(p: KernelPair, zeta: complex, sign) -> KernelPair:
    """Pair form: ``D = diag(1 - z/zeta, 1)`` for ``-``, ``diag(1, 1 - z/zeta)`` for ``+``."""
    s = _sign(sign)
    zeta = complex(zeta)
    _check_outside(p.support, zeta)
    k = 0 if s < 0 else 1

    def E(z):
        out = np.ones((len(z), 2), complex)
        out[:, k] = 1.0 - z / zeta
        return out

    def dE(z):
        out = np.zeros((len(z), 2), complex)
        out[:, k] = -1.0 / zeta
        return out

    return dress_pair(p, E, dE, p.name)


@dataclass(frozen=True)
class ShiftMatrices:
    """Shift factors and connection matrices at one ``zeta``."""

    zeta: complex
    gamma_zeta: np.ndarray
    gamma1: np.ndarray

    def D(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.zeros((len(z), 2, 2), complex)
        out[:, 0, 0] = 1.0 - z / self.zeta
        out[:, 1, 1] = 1.0
        return out

    def D_tilde(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.zeros((len(z), 2, 2), complex)
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 1.0 - z / self.zeta
        return out

    def C(self, z) -> np.ndarray:
        """Connection matrix for the ``-`` shift."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        G, g1, zeta = self.gamma_zeta, self.gamma1, self.zeta
        if abs(G[0, 0]) < 1e-12:
            raise MiwaSingularityError(f"Gamma_11({zeta}) vanishes")
        r = G[1, 0] / G[0, 0]
        out = np.zeros((len(z), 2, 2), complex)
        out[:, 0, 0] = 1.0 - z / zeta - g1[0, 1] * r / zeta
        out[:, 0, 1] = g1[0, 1] / zeta
        out[:, 1, 0] = -r
        out[:, 1, 1] = 1.0
        return out

    def C_tilde(self, z) -> np.ndarray:
        """Connection matrix for the ``+`` shift."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        G, g1, zeta = self.gamma_zeta, self.gamma1, self.zeta
        if abs(G[1, 1]) < 1e-12:
            raise MiwaSingularityError(f"Gamma_22({zeta}) vanishes")
        r = G[0, 1] / G[1, 1]
        out = np.zeros((len(z), 2, 2), complex)
        out[:, 0, 0] = 1.0
        out[:, 0, 1] = -r
        out[:, 1, 0] = g1[1, 0] / zeta
        out[:, 1, 1] = 1.0 - z / zeta - g1[1, 0] * r / zeta
        return out


def shift_matrices(g: GammaField, zeta: complex) -> ShiftMatrices:
    return ShiftMatrices(complex(zeta), evaluate_gamma(g, complex(zeta)), g.gamma1)


def _default_probes(grid: QuadratureGrid, zeta: complex) -> np.ndarray:
    inner = grid.nodes[:: max(1, grid.size // 24)]
    R = 1.5 * grid.domain.radius + 0.5
    outer = R * np.exp(2j * np.pi * (np.arange(8) + 0.25) / 8)
    pts = np.concatenate([inner, outer])
    return pts[np.abs(pts - zeta) > 1e-3 * max(1.0, abs(zeta))]


def connection_check(state: DeformationState, zeta: complex, sign, probes=None) -> float:
    """``sup ||Gamma_shifted - C Gamma D^{-1}||`` over probe points.

    The left side is a fresh solve with the shifted field.
    """
    s = _sign(sign)
    zeta = complex(zeta)
    g = state.gamma
    shifted = solve_gamma(state.grid, miwa_shift_M(state.M, zeta, -1 if s < 0 else 1))
    sm = shift_matrices(g, zeta)
    z = _default_probes(state.grid, zeta) if probes is None else np.atleast_1d(np.asarray(probes, complex))
    G = evaluate_gamma(g, z)
    Gs = evaluate_gamma(shifted, z)
    if s < 0:
        C, Dm = sm.C(z), sm.D(z)
    else:
        C, Dm = sm.C_tilde(z), sm.D_tilde(z)
    pred = C @ G @ np.linalg.inv(Dm)
    return float(np.max(np.linalg.norm(Gs - pred, axis=(1, 2))))


def _continuous_log_ratio(grid: QuadratureGrid, zeta: complex) -> np.ndarray:
    """``log(zeta / (zeta - z))`` at the nodes on a branch continuous over each patch."""
    out = np.empty(grid.size, complex)
    for rule in grid.rules:
        c = rule.patch.center
        z = grid.nodes[rule.slice].reshape(rule.n_rho, rule.n_theta)
        base = np.log(zeta / (zeta - c))
        ph = np.angle((zeta - z) / (zeta - c))
        ph = np.unwrap(np.vstack([np.zeros((1, rule.n_theta)), ph]), axis=0)[1:]
        val = base - (np.log(np.abs((zeta - z) / (zeta - c))) + 1j * ph)
        out[rule.slice] = val.ravel()
    return out


def gamma_fn(M0: MatrixField, zeta: complex, grid: QuadratureGrid | None = None) -> complex:
    """``(1/pi) int log(zeta / (zeta - z)) (dM0/dz)_11 dA``; vanishes as ``zeta -> oo``."""
    zeta = complex(zeta)
    _check_outside(M0.support, zeta)
    if grid is None:
        if M0.support is None:
            raise FieldError("gamma_fn needs a grid or a supported field")
        grid = cached_grid(M0.support, 24, 48)
    if M0.dz is not None:
        d11 = np.asarray(M0.dz(grid.nodes))[:, 0, 0]
    else:
        vals = M0(grid.nodes)[:, 0, 0]
        d11 = np.empty(grid.size, complex)
        for op in patch_operators(grid):
            d11[op.rule.slice] = op.dz_nodes(vals[op.rule.slice])
    if not np.any(d11):
        return 0j
    L = _continuous_log_ratio(grid, zeta)
    return complex(np.sum(grid.weights * L * d11) / np.pi)


def tau_ratio(state: DeformationState, zeta: complex, sign) -> tuple[complex, complex]:
    """Both sides of ``tau(t -/+ [1/zeta]) / tau(t)``.

    Returns ``(determinant side, Gamma side)``; the Gamma side is
    ``Gamma_11(zeta) e^{gamma}`` for ``-`` and ``(Gamma^{-1})_11(zeta) e^{-gamma}``
    for ``+``.
    """
    s = _sign(sign)
    zeta = complex(zeta)
    if state.pair is None:
        raise FieldError("the determinant side needs the kernel pair behind M0")
    base = log_det2(state)
    shifted_pair = miwa_shift_pair(dress_kernel(state.pair, state.t), zeta, -1 if s < 0 else 1)
    A = discretize(shifted_pair, state.grid).matrix
    lhs = np.exp(log_fredholm_det(A) + np.trace(A) - base)
    G = evaluate_gamma(state.gamma, zeta)
    gam = gamma_fn(state.M0, zeta, state.grid)
    if s < 0:
        if abs(G[0, 0]) < 1e-12:
            raise MiwaSingularityError(f"Gamma_11({zeta}) vanishes")
        rhs = G[0, 0] * np.exp(gam)
    else:
        Gi = np.linalg.inv(G)
        rhs = Gi[0, 0] * np.exp(-gam)
    return complex(lhs), complex(rhs)


def tau_ratio_check(state: DeformationState, zeta: complex, sign) -> float:
    lhs, rhs = tau_ratio(state, zeta, sign)
    return float(abs(lhs - rhs) / max(abs(rhs), 1e-300))


def tau_ratio_composition(state: DeformationState, zeta: complex) -> dict:
    """Shift by ``-`` and back by ``+``.

    Reports the field mismatch after the round trip and the deviation from 1
    of the product of the two Gamma-side ratios, which uses the solution at
    the shifted times.
    """
    zeta = complex(zeta)
    Mm = miwa_shift_M(state.M, zeta, "-")
    Mback = miwa_shift_M(Mm, zeta, "+")
    nodes = state.grid.nodes
    field_err = float(np.max(np.abs(Mback(nodes) - state.M(nodes))))
    g_minus = solve_gamma(state.grid, Mm)
    G0 = evaluate_gamma(state.gamma, zeta)
    G1 = evaluate_gamma(g_minus, zeta)
    gam = gamma_fn(state.M0, zeta, state.grid)
    down = G0[0, 0] * np.exp(gam)
    up = np.linalg.inv(G1)[0, 0] * np.exp(-gam)
    return {"field_roundtrip": field_err, "ratio_product": complex(down * up),
            "composition_error": float(abs(down * up - 1.0))}


# -- Hirota and KP -----------------------------------------------------------------------

def hirota_residue(M0: MatrixField, grid: QuadratureGrid, t, s, R: float, n: int = 256) -> complex:
    """``(1/2 pi i) oint_{|z|=R} Gamma_12(z, t) Gamma_21(z, s) dz`` by the trapezoid rule."""
    if M0.support is not None and R <= 1.5 * M0.support.radius:
        raise ValueError(f"R = {R} is too close to the support (need > {1.5 * M0.support.radius:.3g})")
    gt = solve_gamma(grid, dress(M0, t))
    gs = gt if _as_times(t) == _as_times(s) else solve_gamma(grid, dress(M0, s))
    c = circle_contour(R, n)
    Gt = evaluate_gamma(gt, c.nodes)
    Gs = evaluate_gamma(gs, c.nodes)
    return complex(np.sum(Gt[:, 0, 1] * Gs[:, 1, 0] * c.weights) / (2j * np.pi))


def _d_coeffs(order: int):
    """Second-order central weights on offsets ``-p..p``."""
    table = {
        1: [-0.5, 0.0, 0.5],
        2: [1.0, -2.0, 1.0],
        3: [-0.5, 1.0, 0.0, -1.0, 0.5],
        4: [1.0, -4.0, 6.0, -4.0, 1.0],
        6: [1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0],
    }
    w = np.array(table[order])
    p = len(w) // 2
    return np.arange(-p, p + 1), w


def kp_log_tau_stencil(state: DeformationState, h: float) -> dict:
    """``log det2`` at the points of the 7x3x3 KP stencil around ``state.t``."""
    t0 = state.t if state.t.J >= 3 else TimeVector(tuple(state.t.t) + (0.0,) * (3 - state.t.J))
    pts = {(i, j, 0) for i in range(-3, 4) for j in (-1, 0, 1)}
    pts |= {(i, 0, k) for i in range(-2, 3) for k in (-1, 1)}
    center = log_det2(state.at(t0))
    out = {}
    for key in sorted(pts, key=lambda q: (abs(q[0]) + abs(q[1]) + abs(q[2]), q)):
        tv = t0
        for axis, off in enumerate(key, start=1):
            if off:
                tv = tv.shifted(axis, off * h)
        try:
            out[key] = center if key == (0, 0, 0) else log_det2(state.at(tv), center)
        except SolverError as exc:
            raise SolverError(f"KP stencil left the solvable region at t = {tv.t}: {exc}") from exc
    return out


def kp_residual(state: DeformationState, h: float) -> float:
    """``|3 u_22 - d_1(4 u_3 - u_111 - 6 u u_1)|`` with ``u = 2 d_1^2 log tau``.

    All derivatives are second-order central differences of ``log det2``.
    KP is invariant under ``t_j -> c^j t_j``, so the ``i/2`` time rescaling
    between conventions does not change the residual.
    """
    L = kp_log_tau_stencil(state, h)

    def d1(order, j=0, k=0):
        offs, w = _d_coeffs(order)
        return sum(wi * L[(int(o), j, k)] for o, wi in zip(offs, w)) / h**order

    u = 2 * d1(2)
    u1 = 2 * d1(3)
    u11 = 2 * d1(4)
    u1111 = 2 * d1(6)
    u22 = 2 * (d1(2, 1) - 2 * d1(2, 0) + d1(2, -1)) / h**2
    u13 = 2 * (d1(3, 0, 1) - d1(3, 0, -1)) / (2 * h)
    res = 3 * u22 - (4 * u13 - u1111 - 6 * (u1 * u1 + u * u11))
    return float(abs(res))


def kp_richardson(state: DeformationState, h: float = 5e-2) -> dict:
    r1 = kp_residual(state, h)
    r2 = kp_residual(state, h / 2)
    slope = float(np.log2(r1 / r2)) if r1 > 0 and r2 > 0 else float("nan")
    return {"h": h, "residual_h": r1, "residual_h2": r2, "slope": slope}
