"""Nyström solver for the matrix dbar-problem.

Solves ``dbar Gamma = Gamma M`` with ``Gamma -> 1`` at infinity through the
integral form

    Gamma(z) = 1 - (1/pi) * integral Gamma(w) M(w) / (w - z) dA(w).

The singular self-patch integrals are done by product integration (see
``_cauchy``) so node values converge spectrally for smooth ``M`` on each
patch.  Unknowns are the rows of ``Gamma``; all rows share one matrix.
Only the entries ``Gamma[:, mu]`` at nodes where row ``mu`` of ``M`` is
nonzero enter the right-hand side, and the system is restricted to them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.linalg import lapack, lu_factor, lu_solve

from ._cauchy import PatchOperator
from .geometry import DomainSpec, QuadratureGrid

__all__ = [
    "FieldError",
    "SolverError",
    "MatrixField",
    "GammaField",
    "grid_operators",
    "patch_operators",
    "cauchy_matrix",
    "nystrom_solve",
    "solve_gamma",
    "evaluate_gamma",
    "dz_gamma",
    "unimodularity_residual",
    "dbar_residual",
]

RCOND_MIN = 1e-13


class FieldError(ValueError):
    """A matrix field violates one of its declared properties."""


class SolverError(RuntimeError):
    """The discretized operator ``Id - K`` is numerically singular."""


class MatrixField:
    """Complex matrix-valued function on the plane.

    ``func`` maps an array of points of shape ``(N,)`` to an array of shape
    ``(N, r, c)``.  ``dz`` (optional) returns the holomorphic derivative.
    """

    def __init__(self, func: Callable, shape: tuple[int, int], support: DomainSpec | None = None,
                 traceless: bool = False, nilpotent: bool = False, schwarz_symmetric: bool = False,
                 dz: Callable | None = None, name: str = ""):
        self.func = func
        self.shape = tuple(shape)
        self.support = support
        self.traceless = traceless
        self.nilpotent = nilpotent
        self.schwarz_symmetric = schwarz_symmetric
        self.dz = dz
        self.name = name

    def __call__(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.asarray(self.func(z), dtype=complex)
        return out.reshape((len(z),) + self.shape)

    def __repr__(self):
        return f"MatrixField({self.name or 'anonymous'}, shape={self.shape})"

    @classmethod
    def zero(cls, r: int = 2) -> "MatrixField":
        return cls(lambda z: np.zeros((len(z), r, r), complex), (r, r), None, True, True, True,
                   dz=lambda z: np.zeros((len(z), r, r), complex), name="zero")

    @classmethod
    def constant(cls, C, support: DomainSpec, name: str = "constant") -> "MatrixField":
        C = np.asarray(C, dtype=complex)
        nil = bool(np.allclose(C @ C, 0, atol=1e-14 * max(1.0, np.abs(C).max() ** 2)))
        tl = abs(np.trace(C)) <= 1e-14 * max(1.0, np.abs(C).max())

        def func(z):
            return support.contains(z)[:, None, None] * C[None]

        return cls(func, C.shape, support, tl, nil, name=name,
                   dz=lambda z: np.zeros((len(z),) + C.shape, complex))

    @classmethod
    def from_table(cls, nodes, values, support: DomainSpec | None = None, **flags) -> "MatrixField":
        """Field known only at tabulated points (looked up exactly)."""
        nodes = np.asarray(nodes, dtype=complex)
        values = np.asarray(values, dtype=complex)
        index = {complex(z): k for k, z in enumerate(nodes)}

        def func(z):
            try:
                return values[[index[complex(x)] for x in z]]
            except KeyError as exc:
                raise FieldError(f"point {exc.args[0]} is not a tabulated node") from None

        return cls(func, values.shape[1:], support, name=flags.pop("name", "table"), **flags)

    def check(self, grid: QuadratureGrid, tol: float = 1e-12) -> None:
        """Verify the declared flags at the grid nodes."""
        M = self(grid.nodes)
        nrm = np.linalg.norm(M, axis=(1, 2))
        if self.traceless and M.shape[1] == M.shape[2]:
            bad = np.abs(np.trace(M, axis1=1, axis2=2)) > tol * np.maximum(nrm, 1e-300)
            if np.any(bad & (nrm > 0)):
                raise FieldError(f"trace does not vanish at node {int(np.argmax(bad))}")
        if self.nilpotent and M.shape[1] == M.shape[2]:
            sq = np.linalg.norm(M @ M, axis=(1, 2))
            bad = (sq > tol * nrm**2) & (nrm > 0)
            if np.any(bad):
                raise FieldError(f"field is not nilpotent at node {int(np.argmax(bad))}")
        if self.support is not None:
            R = 1.5 * self.support.radius + 1.0
            far = R * np.exp(2j * np.pi * np.arange(16) / 16)
            if np.any(np.abs(self(far)) > 0):
                raise FieldError("field does not vanish outside its support")


@dataclass
class GammaField:
    """Discrete solution of the dbar-problem."""

    grid: QuadratureGrid
    values: np.ndarray  # (N, r, r)
    source: MatrixField
    M_nodes: np.ndarray  # (N, r, r)
    rcond: float = 1.0
    extra: dict = field(default_factory=dict)

    @cached_property
    def GM(self) -> np.ndarray:
        return np.einsum("kab,kbc->kac", self.values, self.M_nodes)

    @cached_property
    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        w = self.grid.weights[:, None, None] / np.pi
        g1 = np.sum(w * self.GM, axis=0)
        g2 = np.sum(w * self.GM * self.grid.nodes[:, None, None], axis=0)
        return g1, g2

    @property
    def gamma1(self) -> np.ndarray:
        return self.moments[0]

    @property
    def gamma2(self) -> np.ndarray:
        return self.moments[1]

    @cached_property
    def dz_values(self) -> np.ndarray:
        out = np.empty_like(self.values)
        for op in patch_operators(self.grid):
            sl = op.rule.slice
            out[sl] = op.dz_nodes(self.values[sl])
        return out

    def __call__(self, z):
        return evaluate_gamma(self, z)

    def to_table(self) -> np.ndarray:
        N, r, _ = self.values.shape
        v = self.values.reshape(N, r * r)
        cols = [np.arange(N)]
        for q in range(r * r):
            cols += [v[:, q].real, v[:, q].imag]
        return np.column_stack(cols)


def patch_operators(grid: QuadratureGrid) -> list[PatchOperator]:
    if "ops" not in grid.cache:
        grid.cache["ops"] = [PatchOperator(r, grid.weights[r.slice], grid.nodes[r.slice]) for r in grid.rules]
    return grid.cache["ops"]


def grid_operators(grid: QuadratureGrid):
    """Per-patch operators and the dense Cauchy matrix of a grid (cached)."""
    return patch_operators(grid), cauchy_matrix(grid)


def cauchy_matrix(grid: QuadratureGrid) -> np.ndarray:
    """Matrix ``C`` with ``C @ phi ~= (1/pi) integral phi(w)/(w - z_j) dA`` at every node."""
    if "cauchy" in grid.cache:
        return grid.cache["cauchy"]
    ops = patch_operators(grid)
    N = grid.size
    C = np.empty((N, N), dtype=complex)
    nb = len(ops) // 2 if grid.mirror_index is not None else len(ops)
    for p, tgt in enumerate(ops):
        for q, src in enumerate(ops):
            if p == q:
                if p >= nb:
                    # mirrored patch: reflect the block of its base patch
                    base = ops[p - nb].rule.slice
                    m = grid.mirror_index[tgt.rule.slice] - base.start
                    S = np.conj(C[base, base][np.ix_(m, m)])
                else:
                    S = tgt.self_rows / np.pi
                C[tgt.rule.slice, src.rule.slice] = S
            else:
                C[tgt.rule.slice, src.rule.slice] = src.exterior_rows(tgt.nodes) / np.pi
    grid.cache["cauchy"] = C
    return C


def nystrom_solve(C: np.ndarray, M: np.ndarray, rcond_min: float = RCOND_MIN):
    """Solve ``G_j = 1 - sum_k C[j, k] G_k M_k`` for 2-D arrays of matrices.

    Returns ``(G, rcond)``.  Raises ``SolverError`` when the reciprocal
    condition number of the reduced system is below ``rcond_min``.
    """
    N, r, _ = M.shape
    I = np.eye(r, dtype=complex)
    active = np.any(M != 0, axis=2)  # (k, mu): row mu of M_k is nonzero
    nodes, comps = np.nonzero(active)
    if len(nodes) == 0:
        return np.broadcast_to(I, (N, r, r)).copy(), 1.0
    A = C[np.ix_(nodes, nodes)] * M[nodes[None, :], comps[None, :], comps[:, None]]
    A[np.diag_indices_from(A)] += 1.0
    anorm = np.abs(A).sum(axis=0).max()
    lu, piv = lu_factor(A, check_finite=False)
    rcond, info = lapack.zgecon(lu, anorm, norm="1")
    if not np.isfinite(rcond) or rcond < rcond_min:
        raise SolverError(f"operator Id-K not invertible at this discretization (rcond={rcond:.2e})")
    rhs = (comps[:, None] == np.arange(r)[None, :]).astype(complex)  # [(j,beta), alpha]
    X = lu_solve((lu, piv), rhs, check_finite=False)
    G_act = np.zeros((N, r, r), dtype=complex)
    G_act[nodes, :, comps] = X
    GM = np.einsum("kam,kmb->kab", G_act, M)
    G = I[None] - np.einsum("jk,kab->jab", C, GM)
    return G, float(rcond)


def solve_gamma(grid: QuadratureGrid, M: MatrixField, rcond_min: float = RCOND_MIN) -> GammaField:
    """Solve the dbar-problem for ``M`` on ``grid``."""
    Mv = M(grid.nodes)
    if Mv.shape[1] != Mv.shape[2]:
        raise FieldError("M must be square")
    C = cauchy_matrix(grid)
    G, rc = nystrom_solve(C, Mv, rcond_min)
    return GammaField(grid, G, M, Mv, rc)


def _classify(grid: QuadratureGrid, z: np.ndarray):
    """Patch index (or -1) and patch radius coordinate of each point."""
    ops = patch_operators(grid)
    where = np.full(z.shape, -1, dtype=int)
    rho = np.full(z.shape, np.inf)
    for k, op in enumerate(ops):
        r, _ = op.patch.to_polar(z)
        hit = r < rho
        rho[hit] = r[hit]
        where[hit & (r <= 1.0)] = k
    return where, rho


def evaluate_gamma(g: GammaField, z) -> np.ndarray:
    """Gamma at arbitrary points; shape ``(r, r)`` for scalar ``z``."""
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
    r = g.values.shape[1]
    ops = patch_operators(g.grid)
    out = np.empty((len(z), r, r), dtype=complex)
    where, _ = _classify(g.grid, z)
    for k, op in enumerate(ops):
        m = where == k
        if np.any(m):
            out[m] = np.einsum("jk,kab->jab", op.interp_rows(z[m]), g.values[op.rule.slice])
    ext = where < 0
    if np.any(ext):
        acc = np.broadcast_to(np.eye(r, dtype=complex), (int(ext.sum()), r, r)).copy()
        for op in ops:
            GM = g.GM[op.rule.slice]
            if np.any(GM):
                acc -= np.einsum("jk,kab->jab", op.exterior_rows(z[ext]), GM) / np.pi
        out[ext] = acc
    return out[0] if scalar else out


def dz_gamma(g: GammaField, z) -> np.ndarray:
    """Holomorphic derivative of Gamma at arbitrary points off the boundary."""
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
    r = g.values.shape[1]
    ops = patch_operators(g.grid)
    where, rho = _classify(g.grid, z)
    if np.any(np.abs(rho - 1.0) < 1e-12):
        raise ValueError("dz_gamma is not defined on the domain boundary")
    out = np.zeros((len(z), r, r), dtype=complex)
    for k, op in enumerate(ops):
        m = where == k
        if np.any(m):
            out[m] = np.einsum("jk,kab->jab", op.interp_rows(z[m]), g.dz_values[op.rule.slice])
    ext = where < 0
    if np.any(ext):
        for op in ops:
            GM = g.GM[op.rule.slice]
            if np.any(GM):
                out[ext] -= np.einsum("jk,kab->jab", op.exterior_rows(z[ext], 2), GM) / np.pi
    return out[0] if scalar else out


def unimodularity_residual(g: GammaField) -> float:
    """Largest ``|det Gamma(z_k) - 1|`` over the nodes."""
    return float(np.max(np.abs(np.linalg.det(g.values) - 1.0)))


def dbar_residual(g: GammaField) -> float:
    """Local least-squares check of ``dbar Gamma = Gamma M`` at interior nodes.

    Each node is fitted with a quadratic in ``(x, y)`` over the 3 x 5
    neighbourhood of rings ``i-1..i+1`` and angles ``l-2..l+2``.
    """
    ops = patch_operators(g.grid)
    worst = 0.0
    for op in ops:
        nr, nt = op.nr, op.nt
        if nr < 3:
            continue
        Z = op.nodes.reshape(nr, nt)
        V = g.values[op.rule.slice].reshape(nr, nt, -1)
        T = g.GM[op.rule.slice].reshape(nr, nt, -1)
        for i in range(1, nr - 1):
            for l in range(nt):
                ii = np.repeat(np.arange(i - 1, i + 2), 5)
                ll = np.tile((np.arange(l - 2, l + 3)) % nt, 3)
                d = Z[ii, ll] - Z[i, l]
                x, y = d.real, d.imag
                A = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
                coef = np.linalg.lstsq(A, V[ii, ll], rcond=None)[0]
                dbar = 0.5 * (coef[1] + 1j * coef[2])
                worst = max(worst, float(np.linalg.norm(dbar - T[i, l])))
    return worst
