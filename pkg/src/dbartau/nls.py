"""Focusing NLS from a Schwarz-symmetric dbar-problem on ``D ∪ conj(D)``.

With ``xi = z x + z^2 t + z^3 t3`` the dressed field is

    M = [[0, beta e^{-2 i xi} chi_D], [-beta* e^{2 i xi} chi_conj(D), 0]],

``beta*(z) = conj(beta(conj z))``, and ``psi = 2i (Gamma_1)_12`` solves
``i psi_t + psi_xx / 2 + |psi|^2 psi = 0``.  The field comes from the
nilpotent pair ``f = (sqrt(beta) chi_D, -sqrt(beta*) chi_Dbar) / sqrt(pi)``,
``g = (sqrt(beta*) chi_Dbar, sqrt(beta) chi_D) / sqrt(pi)``, so the
Hilbert-Carleman determinant is available alongside Gamma.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .dbar import FieldError, GammaField, MatrixField, evaluate_gamma, solve_gamma
from .determinants import log_fredholm_det
from .geometry import DomainSpec, GeometryError, cached_grid, mother_body
from .kernel import KernelPair, discretize, dress_pair

__all__ = [
    "OVERFLOW_GUARD",
    "Beta",
    "beta_constant",
    "beta_gaussian",
    "beta_polynomial",
    "beta_from_spec",
    "NLSScenario",
    "build_nls_M",
    "nls_pair",
    "solve_nls",
    "psi_extract",
    "psi_at",
    "schwarz_residual",
    "LaxPair",
    "lax_matrices",
    "a_equation_residual",
    "zero_curvature_residual",
    "nls_residual",
    "cmkdv_residual",
    "log_tau",
    "det2_psi_check",
    "richardson_slope",
    "RHSolution",
    "rh_reduce_ellipse",
]

OVERFLOW_GUARD = 200.0
SIGMA2 = np.array([[0, -1j], [1j, 0]])


@dataclass(frozen=True)
class Beta:
    """Scalar weight ``beta(z, zbar)`` with its holomorphic derivative."""

    name: str
    func: Callable
    dz: Callable
    analytic: bool
    params: dict = field(default_factory=dict, compare=False)

    def __call__(self, z):
        return np.asarray(self.func(np.asarray(z, dtype=complex)), dtype=complex) * np.ones(np.shape(z))

    def star(self, z):
        """``beta*(z) = conj(beta(conj z))``."""
        return np.conj(self(np.conj(z)))

    def dz_star(self, z):
        return np.conj(np.asarray(self.dz(np.conj(np.asarray(z, dtype=complex)))) * np.ones(np.shape(z)))


def beta_constant(c: complex = 1.0) -> Beta:
    c = complex(c)
    return Beta("constant", lambda z: c + 0 * z, lambda z: 0 * z, True, {"value": c})


def beta_gaussian(amplitude: complex = 1.0, center: complex = 1j, width: float = 0.5) -> Beta:
    """``amplitude * exp(-|z - center|^2 / width^2)`` (not analytic)."""
    A, c, w2 = complex(amplitude), complex(center), float(width) ** 2

    def f(z):
        return A * np.exp(-np.abs(z - c) ** 2 / w2)

    def dz(z):
        return -np.conj(z - c) / w2 * f(z)

    return Beta("gaussian", f, dz, False, {"amplitude": A, "center": c, "width": float(width)})


def beta_polynomial(coefficients, center: complex = 0j) -> Beta:
    """``sum_k c_k (z - center)^k``."""
    cs = np.asarray(coefficients, dtype=complex)
    c0 = complex(center)
    dcs = cs[1:] * np.arange(1, len(cs)) if len(cs) > 1 else np.zeros(1, complex)
    return Beta("polynomial", lambda z: np.polyval(cs[::-1], z - c0), lambda z: np.polyval(dcs[::-1], z - c0),
                True, {"coefficients": cs.tolist(), "center": c0})


def beta_from_spec(spec) -> Beta:
    """Build a weight from a config entry such as ``{"kind": "gaussian", "width": 0.3}``."""
    if isinstance(spec, Beta):
        return spec
    if isinstance(spec, (int, float, complex)):
        return beta_constant(spec)
    spec = dict(spec)
    kind = spec.pop("kind", "constant")
    if kind == "constant":
        return beta_constant(_c(spec.get("value", 1.0)))
    if kind == "gaussian":
        return beta_gaussian(_c(spec.get("amplitude", 1.0)), _c(spec.get("center", 1j)), float(spec.get("width", 0.5)))
    if kind == "polynomial":
        return beta_polynomial([_c(v) for v in spec.get("coefficients", [1.0])], _c(spec.get("center", 0.0)))
    raise FieldError(f"unknown beta kind {kind!r}")


def _c(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


@dataclass(frozen=True)
class NLSScenario:
    """Domain ``D`` in the upper half-plane, weight ``beta`` and times.

    ``mirror_scale`` multiplies the lower-left entry; any value other than 1
    breaks the Schwarz symmetry and exists for negative controls.
    """

    domain: DomainSpec
    beta: Beta = field(default_factory=beta_constant)
    x: float = 0.0
    t: float = 0.0
    t3: float = 0.0
    radial: int = 20
    angular: int = 40
    mirror_scale: complex = 1.0

    def __post_init__(self):
        if not self.domain.conjugate_closed:
            d = self.domain
            if d.kind == "union":
                raise GeometryError("the NLS domain must be a single disk or ellipse")
            object.__setattr__(self, "domain", DomainSpec(d.kind, d.center, d.a, d.b, d.rotation, True))

    @property
    def grid(self):
        return cached_grid(self.domain, self.radial, self.angular)

    def at(self, **kw) -> "NLSScenario":
        return replace(self, **kw)

    def xi(self, z):
        return z * self.x + z**2 * self.t + z**3 * self.t3

    def dxi(self, z):
        return self.x + 2 * z * self.t + 3 * z**2 * self.t3


def _base_patches(s: NLSScenario):
    p, q = s.domain.patches()
    return p, q


def _sqrt_checked(v, what):
    """Principal square root, refusing values on or across the negative axis."""
    nz = np.abs(v) > 0
    if np.any(nz & (np.abs(np.angle(v)) > np.pi - 1e-6)):
        raise FieldError(f"{what} reaches the negative real axis; its square root has no continuous branch")
    return np.sqrt(v)


def _guard(s: NLSScenario):
    nodes = s.grid.nodes
    g = 2 * np.abs(np.imag(s.xi(nodes)))
    if np.max(g) > OVERFLOW_GUARD:
        k = int(np.argmax(g))
        raise FieldError(f"dressing exponent {g[k]:.1f} exceeds the overflow guard at node {nodes[k]:.4g}")


def nls_pair(s: NLSScenario) -> KernelPair:
    """Dressed ``(f, g)`` pair with ``pi f g^T`` equal to the NLS field."""
    _guard(s)
    p, q = _base_patches(s)
    beta = s.beta
    ms = complex(s.mirror_scale)
    rpi = np.sqrt(np.pi)

    def parts(z):
        inD = p.contains(z)
        inB = q.contains(z)
        sb = np.where(inD, _sqrt_checked(np.where(inD, beta(z), 1.0), "beta"), 0.0) / rpi
        sbs = np.where(inB, _sqrt_checked(np.where(inB, beta.star(z), 1.0), "beta*"), 0.0) / rpi
        return inD, inB, sb, sbs

    def f(z):
        _, _, sb, sbs = parts(z)
        o = np.zeros((len(z), 2, 1), complex)
        o[:, 0, 0] = sb
        o[:, 1, 0] = -ms * sbs
        return o

    def g(z):
        _, _, sb, sbs = parts(z)
        o = np.zeros((len(z), 2, 1), complex)
        o[:, 0, 0] = sbs
        o[:, 1, 0] = sb
        return o

    def df(z):
        inD, inB, sb, sbs = parts(z)
        o = np.zeros((len(z), 2, 1), complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = np.where(inD & (sb != 0), beta.dz(z) / (2 * np.pi * sb), 0.0)
            d2 = np.where(inB & (sbs != 0), beta.dz_star(z) / (2 * np.pi * sbs), 0.0)
        o[:, 0, 0] = d1
        o[:, 1, 0] = -ms * d2
        return o

    base = KernelPair(f, g, df, 2, 1, s.domain, None, f"nls[{beta.name}]")

    def E(z):
        e = np.exp(1j * s.xi(z))
        return np.stack([1.0 / e, e], axis=1)

    def dE(z):
        d = 1j * s.dxi(z)
        return E(z) * np.stack([-d, d], axis=1)

    return dress_pair(base, E, dE)


def build_nls_M(s: NLSScenario) -> MatrixField:
    """Dressed NLS field on ``D ∪ conj(D)``."""
    _guard(s)
    p, q = _base_patches(s)
    beta = s.beta
    ms = complex(s.mirror_scale)

    def func(z):
        o = np.zeros((len(z), 2, 2), complex)
        inD, inB = p.contains(z), q.contains(z)
        e = np.exp(2j * s.xi(z))
        o[:, 0, 1] = np.where(inD, beta(z) / np.where(inD, e, 1.0), 0.0)
        o[:, 1, 0] = np.where(inB, -ms * beta.star(z) * np.where(inB, e, 1.0), 0.0)
        return o

    return MatrixField(func, (2, 2), s.domain, True, True, ms == 1.0, name=f"nls[{beta.name}]")


def solve_nls(s: NLSScenario) -> GammaField:
    return solve_gamma(s.grid, build_nls_M(s))


def psi_extract(g: GammaField) -> tuple[complex, complex]:
    """``(psi, a)`` with ``psi = 2i (Gamma_1)_12`` and ``a = (Gamma_1)_11``."""
    G1 = g.gamma1
    return complex(2j * G1[0, 1]), complex(G1[0, 0])


def psi_at(s: NLSScenario, **times) -> complex:
    return psi_extract(solve_nls(s.at(**times) if times else s))[0]


def schwarz_residual(g: GammaField) -> float:
    """``max ||Gamma(z) - sigma2 conj(Gamma(conj z)) sigma2||`` over mirrored node pairs."""
    mi = g.grid.mirror_index
    if mi is None:
        raise GeometryError("Schwarz residual needs a conjugate-closed grid")
    G = g.values
    refl = SIGMA2 @ np.conj(G[mi]) @ SIGMA2
    return float(np.max(np.linalg.norm(G - refl, axis=(1, 2))))


@dataclass(frozen=True)
class LaxPair:
    """Zakharov-Shabat pair at one ``(x, t)``."""

    psi: complex
    psi_x: complex

    def U(self, z) -> np.ndarray:
        return np.array([[-1j * z, self.psi], [-np.conj(self.psi), 1j * z]])

    def V(self, z) -> np.ndarray:
        p, px = self.psi, self.psi_x
        m = abs(p) ** 2
        return np.array([[-1j * z * z + 0.5j * m, z * p + 0.5j * px],
                         [-z * np.conj(p) + 0.5j * np.conj(px), 1j * z * z - 0.5j * m]])


def _psi_x_stencil(s: NLSScenario, h: float, offsets) -> dict:
    return {k: psi_at(s, x=s.x + k * h) for k in offsets}


def lax_matrices(s: NLSScenario, h: float = 1e-3) -> LaxPair:
    """``U, V`` at ``(s.x, s.t)``; ``psi_x`` by a central difference of step ``h``."""
    ps = _psi_x_stencil(s, h, (-1, 0, 1))
    return LaxPair(ps[0], (ps[1] - ps[-1]) / (2 * h))


def a_equation_residual(s: NLSScenario, h: float = 1e-3) -> float:
    """``|d_x (Gamma_1)_11 + 2i |(Gamma_1)_12|^2|`` by central differences."""
    vals = {k: psi_extract(solve_nls(s.at(x=s.x + k * h))) for k in (-1, 0, 1)}
    ax = (vals[1][1] - vals[-1][1]) / (2 * h)
    b = vals[0][0] / 2j
    return float(abs(ax + 2j * abs(b) ** 2))


def zero_curvature_residual(s: NLSScenario, h: float = 1e-3, probes=(1.0, 2.0 + 1.0j)) -> float:
    """``max_z ||U_t - V_x + [U, V]||`` with all derivatives by central differences."""
    px = _psi_x_stencil(s, h, (-2, -1, 0, 1, 2))
    pt = {k: psi_at(s, t=s.t + k * h) for k in (-1, 1)}
    pt[0] = px[0]
    lax0 = LaxPair(px[0], (px[1] - px[-1]) / (2 * h))
    lax_xp = LaxPair(px[1], (px[2] - px[0]) / (2 * h))
    lax_xm = LaxPair(px[-1], (px[0] - px[-2]) / (2 * h))
    lax_tp = LaxPair(pt[1], 0j)
    lax_tm = LaxPair(pt[-1], 0j)
    worst = 0.0
    for z in probes:
        Ut = (lax_tp.U(z) - lax_tm.U(z)) / (2 * h)
        Vx = (lax_xp.V(z) - lax_xm.V(z)) / (2 * h)
        U, V = lax0.U(z), lax0.V(z)
        worst = max(worst, float(np.linalg.norm(Ut - Vx + U @ V - V @ U)))
    return worst


def nls_residual(s: NLSScenario, hx: float = 1e-2, ht: float | None = None) -> float:
    """``|i psi_t + psi_xx / 2 + |psi|^2 psi|`` at ``(s.x, s.t)``."""
    ht = hx if ht is None else ht
    p0 = psi_at(s)
    pxp, pxm = psi_at(s, x=s.x + hx), psi_at(s, x=s.x - hx)
    ptp, ptm = psi_at(s, t=s.t + ht), psi_at(s, t=s.t - ht)
    psi_t = (ptp - ptm) / (2 * ht)
    psi_xx = (pxp - 2 * p0 + pxm) / hx**2
    return float(abs(1j * psi_t + 0.5 * psi_xx + abs(p0) ** 2 * p0))


def cmkdv_residual(s: NLSScenario, hx: float = 2e-2, h3: float | None = None) -> float:
    """``|psi_t3 + psi_xxx / 4 + (3/2) |psi|^2 psi_x|`` at ``(s.x, s.t3)``."""
    h3 = hx if h3 is None else h3
    px = _psi_x_stencil(s, hx, (-2, -1, 0, 1, 2))
    p3p, p3m = psi_at(s, t3=s.t3 + h3), psi_at(s, t3=s.t3 - h3)
    psi_3 = (p3p - p3m) / (2 * h3)
    psi_x = (px[1] - px[-1]) / (2 * hx)
    psi_xxx = (px[2] - 2 * px[1] + 2 * px[-1] - px[-2]) / (2 * hx**3)
    return float(abs(psi_3 + 0.25 * psi_xxx + 1.5 * abs(px[0]) ** 2 * psi_x))


def log_tau(s: NLSScenario) -> complex:
    """``log det2`` of the discretized operator, via ``det(I - A) e^{Tr A}``."""
    A = discretize(nls_pair(s), s.grid).matrix
    return log_fredholm_det(A) + complex(np.trace(A))


def det2_psi_check(s: NLSScenario, hx: float = 1e-2) -> dict:
    """Compare the second x-difference of ``log det2`` with ``|psi|^2``."""
    lt = {k: log_tau(s.at(x=s.x + k * hx)) for k in (-1, 0, 1)}
    d2 = (lt[1] - 2 * lt[0] + lt[-1]) / hx**2
    psi = psi_at(s)
    return {"d2_log_tau": complex(d2), "abs_psi_sq": abs(psi) ** 2, "discrepancy": float(abs(d2 - abs(psi) ** 2))}


def richardson_slope(r_coarse: float, r_fine: float, ratio: float = 2.0) -> float:
    """Observed order from residuals at steps ``h`` and ``h / ratio``."""
    if r_fine <= 0.0 or r_coarse <= 0.0:
        return float("nan")
    return float(np.log(r_coarse / r_fine) / np.log(ratio))


# -- Riemann-Hilbert reduction for ellipses ---------------------------------------------

@dataclass
class RHSolution:
    """Contour solution on the focal segments of ``D`` and ``conj(D)``.

    ``A`` holds the first column of Gamma on the upper segment and ``B`` the
    second column on the lower one.  Valid outside ``D ∪ conj(D)`` only.
    """

    scenario: NLSScenario
    nodes_upper: np.ndarray
    nodes_lower: np.ndarray
    mu: np.ndarray
    A: np.ndarray
    B: np.ndarray
    m12: np.ndarray
    m21: np.ndarray
    rcond: float

    def __call__(self, z) -> np.ndarray:
        scalar = np.ndim(z) == 0
        z = np.atleast_1d(np.asarray(z, dtype=complex)).ravel()
        if np.any(self.scenario.domain.contains(z)):
            raise ValueError("the contour solution represents Gamma only outside the domain")
        out = np.zeros((len(z), 2, 2), complex)
        out[:, 0, 0] = out[:, 1, 1] = 1.0
        cu = self.mu / (self.nodes_upper[None, :] - z[:, None]) / (2j * np.pi)
        cl = self.mu / (self.nodes_lower[None, :] - z[:, None]) / (2j * np.pi)
        # column 1 picks up the lower segment, column 2 the upper one
        out[:, :, 0] -= cl @ (self.B * self.m21[:, None])
        out[:, :, 1] -= cu @ (self.A * self.m12[:, None])
        return out[0] if scalar else out

    @property
    def gamma1(self) -> np.ndarray:
        G1 = np.zeros((2, 2), complex)
        G1[:, 0] = (self.mu * self.m21) @ self.B / (2j * np.pi)
        G1[:, 1] = (self.mu * self.m12) @ self.A / (2j * np.pi)
        return G1

    @property
    def psi(self) -> complex:
        return complex(2j * self.gamma1[0, 1])


def rh_reduce_ellipse(s: NLSScenario, n: int = 64) -> RHSolution:
    """Collapse the area problem onto the focal segments and solve the contour system."""
    d = s.domain
    if d.kind != "ellipse" or not d.a > d.b > 0:
        raise GeometryError("the contour reduction needs an ellipse with a > b > 0")
    if not s.beta.analytic:
        raise FieldError(f"beta '{s.beta.name}' is not analytic; the area integral does not collapse")
    if complex(s.mirror_scale) != 1.0:
        raise FieldError("the contour reduction assumes the Schwarz-symmetric field")
    p, q = d.patches()
    up = mother_body(p.a, p.b, n, p.center, p.rotation)
    lo = mother_body(q.a, q.b, n, q.center, q.rotation)
    mu = up.weights * up.jump
    mu_lo = lo.weights * lo.jump
    if not np.allclose(mu, mu_lo, rtol=1e-13, atol=0):
        raise GeometryError("mirrored segment weights disagree")
    wu, wl = up.nodes, lo.nodes
    xu, xl = s.xi(wu), s.xi(wl)
    if max(np.max(np.abs(2 * xu.imag)), np.max(np.abs(2 * xl.imag))) > OVERFLOW_GUARD:
        raise FieldError("dressing exponent exceeds the overflow guard on the focal segment")
    m12 = s.beta(wu) * np.exp(-2j * xu)
    m21 = -s.beta.star(wl) * np.exp(2j * xl)
    # A(w_j) = e1 - sum_k cl[j,k] B_k m21_k,  B(w_j) = e2 - sum_k cu[j,k] A_k m12_k
    Kul = mu[None, :] / (wl[None, :] - wu[:, None]) / (2j * np.pi) * m21[None, :]
    Klu = mu[None, :] / (wu[None, :] - wl[:, None]) / (2j * np.pi) * m12[None, :]
    I = np.eye(n)
    S = np.block([[I, Kul], [Klu, I]])
    rhs = np.zeros((2 * n, 2), complex)
    rhs[:n, 0] = 1.0
    rhs[n:, 1] = 1.0
    lu = sla.lu_factor(S)
    rc = sla.lapack.zgecon(lu[0], np.linalg.norm(S, 1))[0]
    sol = sla.lu_solve(lu, rhs)
    return RHSolution(s, wu, wl, mu, sol[:n], sol[n:], m12, m21, float(rc))
