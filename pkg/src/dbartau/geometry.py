"""Planar domains, area quadrature and contours.

Every domain is a finite union of *patches*.  A patch is the affine image
of the closed unit disk

    w = center + exp(i*rotation) * (a*rho*cos(theta) + i*b*rho*sin(theta)),

so disks (a == b) and ellipses share one chart.  Area grids are tensor
rules: Gauss-Legendre in ``rho`` and the periodic trapezoid rule in
``theta``.  Node ``(i, l)`` of a patch lives at flat index ``i*n_theta + l``.
"""

from __future__ import annotations

import warnings
from functools import lru_cache
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "GeometryError",
    "DomainSpec",
    "Patch",
    "QuadratureGrid",
    "ContourGrid",
    "disk",
    "ellipse",
    "union",
    "build_grid",
    "cached_grid",
    "boundary_contour",
    "circle_contour",
    "schwarz_ellipse",
    "schwarz_patch",
    "mother_body",
]


class GeometryError(ValueError):
    """Invalid domain parameters."""


@dataclass(frozen=True)
class Patch:
    """One elliptic component in patch coordinates."""

    center: complex
    a: float
    b: float
    rotation: float = 0.0

    @property
    def is_disk(self) -> bool:
        return abs(self.a - self.b) <= 1e-14 * max(self.a, self.b)

    @property
    def area(self) -> float:
        return float(np.pi * self.a * self.b)

    @property
    def rot(self) -> complex:
        return complex(np.exp(1j * self.rotation))

    def mirror(self) -> "Patch":
        return Patch(complex(self.center).conjugate(), self.a, self.b, -self.rotation)

    def to_local(self, z):
        """Map global points to the unrotated, centred frame."""
        return (np.asarray(z, dtype=complex) - self.center) * np.conj(self.rot)

    def to_polar(self, z):
        """Return patch coordinates ``(rho, theta)`` of global points."""
        p = self.to_local(z)
        u = p.real / self.a
        v = p.imag / self.b
        return np.hypot(u, v), np.arctan2(v, u)

    def from_polar(self, rho, theta):
        rho = np.asarray(rho, dtype=float)
        theta = np.asarray(theta, dtype=float)
        loc = self.a * rho * np.cos(theta) + 1j * self.b * rho * np.sin(theta)
        return self.center + self.rot * loc

    def contains(self, z, closed: bool = True):
        rho, _ = self.to_polar(z)
        return rho <= 1.0 if closed else rho < 1.0

    def boundary_distance(self, z):
        """Distance from points to the boundary curve (sampled, accurate to ~1e-6)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        th = np.linspace(0.0, 2 * np.pi, 2048, endpoint=False)
        bd = self.from_polar(np.ones_like(th), th)
        d = np.abs(z[:, None] - bd[None, :])
        k = np.argmin(d, axis=1)
        # refine around the nearest coarse sample
        best = d[np.arange(len(z)), k]
        fine = th[k][:, None] + np.linspace(-1, 1, 41)[None, :] * (2 * np.pi / 2048)
        bdf = self.from_polar(np.ones_like(fine), fine)
        return np.minimum(best, np.abs(z[:, None] - bdf).min(axis=1))

    @property
    def min_curvature_radius(self) -> float:
        lo, hi = min(self.a, self.b), max(self.a, self.b)
        return lo * lo / hi


@dataclass(frozen=True)
class DomainSpec:
    """A disk, an ellipse, or a union of two of them.

    ``conjugate_closed`` means the domain stands for ``D ∪ conj(D)`` with the
    base component ``D`` in the open upper half-plane.
    """

    kind: str
    center: complex = 0j
    a: float = 1.0
    b: float = 1.0
    rotation: float = 0.0
    conjugate_closed: bool = False
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("disk", "ellipse", "union"):
            raise GeometryError(f"unknown domain kind {self.kind!r}")
        if self.kind == "union":
            if len(self.components) != 2:
                raise GeometryError("a union needs exactly two components")
            for c in self.components:
                if c.kind == "union" or c.conjugate_closed:
                    raise GeometryError("union components must be plain disks or ellipses")
        else:
            if not (self.a > 0 and self.b > 0):
                raise GeometryError(f"degenerate axes a={self.a}, b={self.b}")
            if self.kind == "disk" and self.a != self.b:
                raise GeometryError("a disk needs a == b")
        pats = self.patches()
        if self.conjugate_closed:
            for p in self.base_patches():
                if _min_imag(p) <= 0.0:
                    raise GeometryError("conjugate-closed base component must lie strictly in the upper half-plane")
        for i in range(len(pats)):
            for j in range(i + 1, len(pats)):
                if _patch_gap(pats[i], pats[j]) <= 0.0:
                    raise GeometryError("domain components overlap or touch")

    def base_patches(self) -> list[Patch]:
        if self.kind == "union":
            return [Patch(complex(c.center), float(c.a), float(c.b), float(c.rotation)) for c in self.components]
        return [Patch(complex(self.center), float(self.a), float(self.b), float(self.rotation))]

    def patches(self) -> list[Patch]:
        base = self.base_patches()
        if self.conjugate_closed:
            return base + [p.mirror() for p in base]
        return base

    @property
    def area(self) -> float:
        return float(sum(p.area for p in self.patches()))

    @property
    def diameter(self) -> float:
        pts = np.concatenate([p.from_polar(np.ones(256), np.linspace(0, 2 * np.pi, 256, endpoint=False))
                              for p in self.patches()])
        return float(np.max(np.abs(pts[:, None] - pts[None, :])))

    @property
    def radius(self) -> float:
        """Largest modulus of a point of the domain."""
        return float(max(abs(p.center) + max(p.a, p.b) for p in self.patches()))

    def contains(self, z, closed: bool = True):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=bool)
        for p in self.patches():
            out |= p.contains(z, closed)
        return out

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "conjugate_closed": self.conjugate_closed}
        if self.kind == "union":
            d["components"] = [c.to_dict() for c in self.components]
        else:
            d.update(center=[self.center.real, self.center.imag], a=self.a, b=self.b, rotation=self.rotation)
        return d


def _min_imag(p: Patch) -> float:
    th = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    return float(p.from_polar(np.ones_like(th), th).imag.min())


def _patch_gap(p: Patch, q: Patch) -> float:
    """Lower bound proxy for the separation of two patches (0 if they meet)."""
    th = np.linspace(0, 2 * np.pi, 1024, endpoint=False)
    bp = p.from_polar(np.ones_like(th), th)
    bq = q.from_polar(np.ones_like(th), th)
    if np.any(q.contains(bp)) or np.any(p.contains(bq)):
        return 0.0
    return float(np.abs(bp[:, None] - bq[None, :]).min())


def disk(center=0j, radius=1.0, conjugate_closed=False) -> DomainSpec:
    return DomainSpec("disk", complex(center), float(radius), float(radius), 0.0, conjugate_closed)


def ellipse(a, b, center=0j, rotation=0.0, conjugate_closed=False) -> DomainSpec:
    return DomainSpec("ellipse", complex(center), float(a), float(b), float(rotation), conjugate_closed)


def union(first: DomainSpec, second: DomainSpec) -> DomainSpec:
    return DomainSpec("union", components=(first, second))


@dataclass(frozen=True)
class ContourGrid:
    """Oriented contour with complex ``dz`` weights and optional jump data."""

    nodes: np.ndarray
    weights: np.ndarray
    closed: bool = True
    anticlockwise: bool = True
    jump: np.ndarray | None = None

    def integrate(self, h) -> complex:
        vals = h(self.nodes) if callable(h) else np.asarray(h)
        if self.jump is not None:
            vals = vals * self.jump
        return complex(np.sum(vals * self.weights))

    def to_table(self) -> np.ndarray:
        cols = [self.nodes.real, self.nodes.imag, self.weights.real, self.weights.imag]
        if self.jump is not None:
            cols += [self.jump.real, self.jump.imag]
        return np.column_stack(cols)


@dataclass(frozen=True)
class PatchRule:
    """Tensor rule on one patch."""

    patch: Patch
    rho: np.ndarray  # Gauss-Legendre nodes on (0, 1)
    rho_weights: np.ndarray  # matching weights on (0, 1)
    n_theta: int
    start: int  # offset into the grid's flat node array

    @property
    def n_rho(self) -> int:
        return len(self.rho)

    @property
    def size(self) -> int:
        return self.n_rho * self.n_theta

    @property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def slice(self) -> slice:
        return slice(self.start, self.start + self.size)


@dataclass(frozen=True)
class QuadratureGrid:
    """Area nodes and weights (for dA) on a domain, with per-patch rules."""

    nodes: np.ndarray
    weights: np.ndarray
    domain: DomainSpec
    rules: tuple
    boundary: ContourGrid
    mirror_index: np.ndarray | None = None
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.boundary.nodes

    @property
    def boundary_weights(self) -> np.ndarray:
        return self.boundary.weights

    @property
    def shape(self) -> tuple[int, int]:
        r = self.rules[0]
        return (r.n_rho, r.n_theta)

    def integrate(self, values) -> complex:
        vals = values(self.nodes) if callable(values) else np.asarray(values)
        return np.tensordot(self.weights, vals, axes=(0, 0))

    def patch_of(self, z) -> np.ndarray:
        """Index of the patch containing each point (closed), or -1."""
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, -1, dtype=int)
        for k, r in enumerate(self.rules):
            out[(out < 0) & r.patch.contains(z)] = k
        return out

    def to_table(self) -> np.ndarray:
        return np.column_stack([self.nodes.real, self.nodes.imag, self.weights])


def _gauss_unit(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def build_grid(domain: DomainSpec, radial_points: int, angular_points: int,
               boundary_points: int = 128) -> QuadratureGrid:
    """Tensor Gauss-Legendre x trapezoid grid on every patch of ``domain``.

    The angular count is rounded up to an even number.  Mirrored patches of
    a conjugate-closed domain reuse the conjugated base nodes, so the node
    set is closed under conjugation bit for bit.
    """
    if radial_points < 2 or angular_points < 4:
        raise GeometryError("need radial_points >= 2 and angular_points >= 4")
    nt = int(angular_points) + (int(angular_points) % 2)
    rho, rw = _gauss_unit(int(radial_points))
    th = 2 * np.pi * np.arange(nt) / nt
    base = domain.base_patches()
    nodes, weights, rules = [], [], []
    start = 0
    for p in base:
        z = p.from_polar(rho[:, None], th[None, :]).ravel()
        w = np.repeat(p.a * p.b * rho * rw * (2 * np.pi / nt), nt)
        nodes.append(z)
        weights.append(w)
        rules.append(PatchRule(p, rho, rw, nt, start))
        start += z.size
    mirror = None
    if domain.conjugate_closed:
        nb = start
        perm = (-np.arange(nt)) % nt
        for p, z, w in list(zip(base, nodes, weights)):
            zz = np.conj(z.reshape(len(rho), nt)[:, perm]).ravel()
            nodes.append(zz)
            weights.append(w.copy())
            rules.append(PatchRule(p.mirror(), rho, rw, nt, start))
            start += zz.size
        idx = np.arange(nb).reshape(len(base), len(rho), nt)
        partner = idx[:, :, perm].ravel() + nb
        mirror = np.concatenate([partner, partner - nb])
    nodes = np.concatenate(nodes)
    weights = np.concatenate(weights)
    diam = domain.diameter
    if len(nodes) > 1:
        dmin = cKDTree(np.column_stack([nodes.real, nodes.imag])).query(
            np.column_stack([nodes.real, nodes.imag]), k=2)[0][:, 1].min()
        if dmin <= 1e-12 * diam:
            raise GeometryError("coincident quadrature nodes")
    bnd = boundary_contour(domain, boundary_points)
    return QuadratureGrid(nodes, weights, domain, tuple(rules), bnd, mirror)


@lru_cache(maxsize=16)
def cached_grid(domain: DomainSpec, radial_points: int, angular_points: int) -> QuadratureGrid:
    """Shared grid instance, so operators cached on it are reused across solves."""
    return build_grid(domain, radial_points, angular_points)


def boundary_contour(domain: DomainSpec, n: int) -> ContourGrid:
    """Anticlockwise trapezoid contour around every patch of ``domain``."""
    if n < 16:
        warnings.warn(f"boundary contour with only {n} nodes", RuntimeWarning, stacklevel=2)
    th = 2 * np.pi * np.arange(n) / n
    zs, ws = [], []
    for p in domain.patches():
        zs.append(p.from_polar(np.ones(n), th))
        dz = p.rot * (-p.a * np.sin(th) + 1j * p.b * np.cos(th))
        ws.append(dz * (2 * np.pi / n))
    return ContourGrid(np.concatenate(zs), np.concatenate(ws), True, True)


def circle_contour(radius: float, n: int, center: complex = 0j) -> ContourGrid:
    th = 2 * np.pi * np.arange(n) / n
    e = np.exp(1j * th)
    return ContourGrid(center + radius * e, 1j * radius * e * (2 * np.pi / n), True, True)


def _sqrt_branch(z, c):
    """sqrt(z^2 - c^2) with cut on [-c, c], asymptotic to z at infinity."""
    return np.sqrt(z - c) * np.sqrt(z + c)


def schwarz_ellipse(a: float, b: float, z):
    """Schwarz function of the centred ellipse with semi-axes ``a > b``."""
    if not a > b > 0:
        raise GeometryError("schwarz_ellipse needs a > b > 0")
    c = np.sqrt(a * a - b * b)
    z = np.asarray(z, dtype=complex)
    on_cut = (np.abs(z.imag) == 0.0) & (np.abs(z.real) < c)
    if np.any(on_cut):
        raise GeometryError("point on the focal segment (branch cut)")
    s = _sqrt_branch(z, c)
    out = ((a * a + b * b) * z - 2 * a * b * s) / (c * c)
    return out if out.ndim else complex(out)


def schwarz_patch(p: Patch, w):
    """Schwarz function of a rotated and translated ellipse patch."""
    s0 = schwarz_ellipse(p.a, p.b, p.to_local(w))
    return np.conj(p.center) + np.conj(p.rot) * s0


def mother_body(a: float, b: float, n: int, center: complex = 0j,
                rotation: float = 0.0) -> ContourGrid:
    """Focal segment of the ellipse with the jump of its Schwarz function.

    The segment is oriented from ``-c`` to ``c`` (rotated with the ellipse).
    Nodes are Gauss-Chebyshev points of the second kind; ``weights`` are
    ``dz`` weights and ``jump`` holds ``S_- - S_+``, so ``integrate(h)``
    equals the boundary integral of ``h*S`` for analytic ``h``.
    """
    if not a > b > 0:
        raise GeometryError("mother body needs a > b > 0 (circles have a point mother body)")
    c = np.sqrt(a * a - b * b)
    k = np.arange(n, 0, -1)
    th = k * np.pi / (n + 1)
    x = c * np.cos(th)
    rot = np.exp(1j * rotation)
    nodes = center + rot * x
    weights = rot * c * np.pi / (n + 1) * np.sin(th)
    jump = np.conj(rot) * (4j * a * b / c) * np.sin(th)
    return ContourGrid(nodes.astype(complex), weights.astype(complex), False, True, jump.astype(complex))
