"""Integrable kernels ``K(z, w) = f(z)^T g(w) / (z - w)`` on planar domains.

``f`` and ``g`` are ``r x n`` matrix functions with ``f^T g = 0`` pointwise,
so ``M = pi f g^T`` is nilpotent and the kernel has a finite diagonal
``K(z, z) = (df/dz)^T g``.  The resolvent is again integrable, with ``f``
and ``g`` replaced by ``Gamma f`` and ``Gamma^{-T} g``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, svds

from . import kernels
from .dbar import FieldError, GammaField, MatrixField, dz_gamma, evaluate_gamma, solve_gamma
from .geometry import DomainSpec, QuadratureGrid

__all__ = [
    "KernelPair",
    "DiscreteOperator",
    "dress_pair",
    "scale_pair",
    "constant_nilpotent_pair",
    "two_disk_pair",
    "user_table_pair",
    "kernel_eval",
    "m_from_pair",
    "discretize",
    "resolvent_eval",
    "resolvent_matrix",
    "resolvent_identity_residual",
    "neumann_remainder",
    "spectral_norm",
]

SPLIT = 1e-4


def _zeros_like_fn(shape):
    return lambda z: np.zeros((len(z),) + shape, complex)


@dataclass(frozen=True)
class KernelPair:
    """The pair ``(f, g)``; each callable maps ``(N,)`` points to ``(N, r, n)``.

    ``df`` is the holomorphic derivative of ``f``; ``dbar_f`` is optional and
    only used by :meth:`check`.
    """

    f: Callable
    g: Callable
    df: Callable
    r: int
    n: int
    support: DomainSpec | None = None
    dbar_f: Callable | None = None
    name: str = ""

    def values(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        shp = (len(z), self.r, self.n)
        return (np.asarray(self.f(z), complex).reshape(shp),
                np.asarray(self.g(z), complex).reshape(shp),
                np.asarray(self.df(z), complex).reshape(shp))

    def check(self, grid: QuadratureGrid, tol: float = 1e-12) -> None:
        """Verify ``f^T g = 0`` (and ``dbar f^T g = 0`` if available) at the nodes."""
        F, G, _ = self.values(grid.nodes)
        nf = np.linalg.norm(F, axis=(1, 2))
        ng = np.linalg.norm(G, axis=(1, 2))
        prod = np.linalg.norm(np.einsum("kra,krb->kab", F, G), axis=(1, 2))
        bad = prod > tol * np.maximum(nf * ng, 1e-300)
        if np.any(bad):
            raise FieldError(f"f^T g does not vanish at node {int(np.argmax(bad))}")
        if self.dbar_f is not None:
            DB = np.asarray(self.dbar_f(grid.nodes), complex).reshape(F.shape)
            p2 = np.linalg.norm(np.einsum("kra,krb->kab", DB, G), axis=(1, 2))
            bad = p2 > 1e-8 * np.maximum(np.linalg.norm(DB, axis=(1, 2)) * ng, 1e-300)
            if np.any(bad):
                raise FieldError(f"(dbar f)^T g does not vanish at node {int(np.argmax(bad))}")


@dataclass(frozen=True)
class DiscreteOperator:
    """Nyström matrix ``sqrt(w_k) K(z_k, z_l) sqrt(w_l)`` in ``(node, component)`` order."""

    matrix: np.ndarray
    grid: QuadratureGrid | None = None
    n: int = 1

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def dress_pair(p: KernelPair, E: Callable, dE: Callable, name: str = "") -> KernelPair:
    """Conjugate by a diagonal factor: ``f -> E f``, ``g -> E^{-1} g``.

    ``E`` and ``dE`` return ``(N, r)`` arrays with the diagonal of the factor
    and its holomorphic derivative.
    """

    def f(z):
        return E(z)[:, :, None] * p.values(z)[0]

    def g(z):
        return p.values(z)[1] / E(z)[:, :, None]

    def df(z):
        F, _, DF = p.values(z)
        return dE(z)[:, :, None] * F + E(z)[:, :, None] * DF

    return KernelPair(f, g, df, p.r, p.n, p.support, None, name or p.name)


def scale_pair(p: KernelPair, eps: complex) -> KernelPair:
    """Multiply ``f`` by ``eps``."""
    return KernelPair(lambda z: eps * p.values(z)[0], lambda z: p.values(z)[1],
                      lambda z: eps * p.values(z)[2], p.r, p.n, p.support, None, p.name)


def constant_nilpotent_pair(c1: complex, c2: complex, support: DomainSpec) -> KernelPair:
    """``f = (c1, 0) chi``, ``g = (0, c2) chi``: a kernel that vanishes identically."""

    def f(z):
        out = np.zeros((len(z), 2, 1), complex)
        out[:, 0, 0] = c1 * support.contains(z)
        return out

    def g(z):
        out = np.zeros((len(z), 2, 1), complex)
        out[:, 1, 0] = c2 * support.contains(z)
        return out

    return KernelPair(f, g, _zeros_like_fn((2, 1)), 2, 1, support, _zeros_like_fn((2, 1)), "constant-nilpotent")


def two_disk_pair(domain: DomainSpec, beta1: complex, beta2: complex) -> KernelPair:
    """Rank-one nilpotent pair on two disjoint components.

    Gives ``M = [[0, beta1 chi_1], [beta2 chi_2, 0]]`` with ``n = 1``.
    """
    if domain.kind != "union":
        raise ValueError("two_disk_pair needs a union of two components")
    p1, p2 = domain.patches()
    s1 = np.sqrt(complex(beta1)) / np.sqrt(np.pi)
    s2 = np.sqrt(complex(beta2)) / np.sqrt(np.pi)

    def f(z):
        out = np.zeros((len(z), 2, 1), complex)
        out[:, 0, 0] = s1 * p1.contains(z)
        out[:, 1, 0] = s2 * p2.contains(z)
        return out

    def g(z):
        out = np.zeros((len(z), 2, 1), complex)
        out[:, 0, 0] = s2 * p2.contains(z)
        out[:, 1, 0] = s1 * p1.contains(z)
        return out

    return KernelPair(f, g, _zeros_like_fn((2, 1)), 2, 1, domain, _zeros_like_fn((2, 1)), "two-disk")


def user_table_pair(nodes, F, G, DF=None, support: DomainSpec | None = None) -> KernelPair:
    """Pair tabulated at grid nodes only."""
    nodes = np.asarray(nodes, complex)
    F = np.asarray(F, complex)
    G = np.asarray(G, complex)
    DF = np.zeros_like(F) if DF is None else np.asarray(DF, complex)
    index = {complex(z): k for k, z in enumerate(nodes)}

    def look(tab):
        def fn(z):
            try:
                return tab[[index[complex(x)] for x in z]]
            except KeyError as exc:
                raise FieldError(f"point {exc.args[0]} is not a tabulated node") from None
        return fn

    return KernelPair(look(F), look(G), look(DF), F.shape[1], F.shape[2], support, None, "user-table")


def kernel_eval(p: KernelPair, z: complex, w: complex, diameter: float | None = None) -> np.ndarray:
    """``K(z, w)`` as an ``n x n`` matrix, with the Taylor form near the diagonal."""
    diam = diameter if diameter is not None else (p.support.diameter if p.support is not None else 1.0)
    Fz, _, DFz = p.values(z)
    _, Gw, _ = p.values(w)
    if abs(z - w) < SPLIT * diam:
        return DFz[0].T @ Gw[0]
    return Fz[0].T @ Gw[0] / (z - w)


def m_from_pair(p: KernelPair) -> MatrixField:
    """``M = pi f g^T`` (traceless and nilpotent by construction)."""

    def func(z):
        F, G, _ = p.values(z)
        return np.pi * np.einsum("kra,ksa->krs", F, G)

    return MatrixField(func, (p.r, p.r), p.support, True, True, name=f"M[{p.name}]")


def _split(grid: QuadratureGrid) -> float:
    return SPLIT * grid.domain.diameter


def discretize(p: KernelPair, grid: QuadratureGrid) -> DiscreteOperator:
    F, G, DF = p.values(grid.nodes)
    A = kernels.integrable_kernel_matrix(grid.nodes, F, G, DF, np.sqrt(grid.weights), _split(grid))
    return DiscreteOperator(A, grid, p.n)


def _dressed_by_gamma(p: KernelPair, gam: np.ndarray, dgam: np.ndarray, z):
    F, G, DF = p.values(z)
    GF = np.einsum("kab,kbn->kan", gam, F)
    GG = np.linalg.solve(np.transpose(gam, (0, 2, 1)), G)
    DGF = np.einsum("kab,kbn->kan", dgam, F) + np.einsum("kab,kbn->kan", gam, DF)
    return GF, GG, DGF


def resolvent_eval(p: KernelPair, g: GammaField, z: complex, w: complex) -> np.ndarray:
    """Resolvent kernel ``f^T(z) Gamma^T(z) Gamma^{-T}(w) g(w) / (z - w)``."""
    diam = g.grid.domain.diameter
    gz, gw = evaluate_gamma(g, np.array([z, w]))
    if abs(z - w) < SPLIT * diam:
        dgz = dz_gamma(g, np.array([z]))
        GF, GG, DGF = _dressed_by_gamma(p, gz[None], dgz, np.array([z]))
        _, GGw, _ = _dressed_by_gamma(p, gw[None], dgz, np.array([w]))
        return DGF[0].T @ GGw[0]
    GF, _, _ = _dressed_by_gamma(p, gz[None], np.zeros_like(gz[None]), np.array([z]))
    _, GG, _ = _dressed_by_gamma(p, gw[None], np.zeros_like(gw[None]), np.array([w]))
    return GF[0].T @ GG[0] / (z - w)


def resolvent_matrix(p: KernelPair, g: GammaField) -> np.ndarray:
    """Weighted Nyström matrix of the resolvent on the solution's grid."""
    grid = g.grid
    GF, GG, DGF = _dressed_by_gamma(p, g.values, g.dz_values, grid.nodes)
    return kernels.integrable_kernel_matrix(grid.nodes, GF, GG, DGF, np.sqrt(grid.weights), _split(grid))


def resolvent_identity_residual(p: KernelPair, g: GammaField, grid: QuadratureGrid | None = None) -> float:
    """Spectral norm of ``(I + R)(I - K) - I`` at the discrete level."""
    grid = grid or g.grid
    if grid is not g.grid:
        raise ValueError("the resolvent is assembled on the grid of the solution")
    A = discretize(p, grid).matrix
    R = resolvent_matrix(p, g)
    X = R - A - R @ A
    return spectral_norm(X)


def neumann_remainder(p: KernelPair, grid: QuadratureGrid, eps: float) -> float:
    """``||R - K - K^2||`` for the pair with ``f`` scaled by ``eps``; third order in ``eps``."""
    ps = scale_pair(p, eps)
    g = solve_gamma(grid, m_from_pair(ps))
    A = discretize(ps, grid).matrix
    return spectral_norm(resolvent_matrix(ps, g) - A - A @ A)


def spectral_norm(X: np.ndarray, iters: int = 500, rtol: float = 1e-8) -> float:
    """Largest singular value (Lanczos with a fixed start vector; power iteration fallback)."""
    n = X.shape[1]
    if not np.any(X):
        return 0.0
    if min(X.shape) > 8:
        try:
            s = svds(X, k=1, v0=np.ones(n, dtype=X.dtype), tol=rtol, return_singular_vectors=False)
            return float(s[0])
        except (ArpackNoConvergence, ArpackError):
            pass
    elif min(X.shape) > 0:
        return float(np.linalg.norm(X, 2))
    v = np.exp(1j * np.arange(n)) + 1.0
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iters):
        u = X @ v
        w = X.conj().T @ u
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        s_new = np.sqrt(nw)
        v = w / nw
        if abs(s_new - s) <= rtol * s_new:
            return float(s_new)
        s = s_new
    return float(s)
