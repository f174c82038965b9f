"""Area Cauchy transforms on a single patch.

For node values ``phi_k`` of a density that is smooth on the closed patch
these routines return row matrices ``rows`` with

    rows @ phi  ~=  integral over the patch of phi(w) / (w - z) dA(w)

for a set of targets ``z``.  Disk patches use an exact Fourier-Laurent
product rule; ellipses use target-centred polar coordinates in which the
Cauchy kernel becomes ``exp(-i*theta)`` times a smooth function.  Off the
patch the integrand is smooth and plain (upsampled) quadrature is used.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from . import kernels
from .geometry import PatchRule

_PANEL_GL = 24


def _gauss_unit(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def bary_weights(x):
    x = np.asarray(x, dtype=float)
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    # scale each factor to keep the products in range
    lam = 1.0 / np.prod(d * (len(x) / 2.0), axis=1)
    return lam / np.max(np.abs(lam))


def lagrange_matrix(x, lam, t):
    """Values of the Lagrange basis on nodes ``x`` at points ``t``: shape (len(t), len(x))."""
    t = np.asarray(t, dtype=float).ravel()
    diff = t[:, None] - x[None, :]
    hit = diff == 0.0
    diff[hit] = 1.0
    q = lam[None, :] / diff
    out = q / q.sum(axis=1, keepdims=True)
    rows = np.any(hit, axis=1)
    if np.any(rows):
        out[rows] = hit[rows].astype(float)
    return out


def lagrange_diff(x, lam):
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    D = (lam[None, :] / lam[:, None]) / d
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def trig_matrix(n, t):
    """Band-limited interpolation on ``n`` (even) equispaced angles: shape (len(t), n)."""
    t = np.asarray(t, dtype=float).ravel()
    th = 2 * np.pi * np.arange(n) / n
    x = np.remainder(t[:, None] - th[None, :] + np.pi, 2 * np.pi) - np.pi
    zero = x == 0.0
    x[zero] = 1.0
    out = np.sin(0.5 * n * x) / (n * np.tan(0.5 * x))
    out[zero] = 1.0
    return out


def trig_diff(n):
    h = 2 * np.pi / n
    k = np.arange(n)
    d = (k[:, None] - k[None, :]) % n
    with np.errstate(divide="ignore", invalid="ignore"):
        D = 0.5 * np.where(d % 2 == 0, 1.0, -1.0) / np.tan(0.5 * d * h)
    D[d == 0] = 0.0
    return D


class PatchOperator:
    """Quadrature operators attached to one patch of a grid."""

    def __init__(self, rule: PatchRule, weights: np.ndarray, nodes: np.ndarray):
        self.rule = rule
        self.patch = rule.patch
        self.weights = weights
        self.nodes = nodes
        self.nr = rule.n_rho
        self.nt = rule.n_theta
        self.lam = bary_weights(rule.rho)

    # -- interpolation and differentiation -------------------------------
    def interp_rows(self, z):
        rho, th = self.patch.to_polar(z)
        L = lagrange_matrix(self.rule.rho, self.lam, rho)
        T = trig_matrix(self.nt, th)
        return (L[:, :, None] * T[:, None, :]).reshape(len(L), -1)

    @cached_property
    def _dmats(self):
        return lagrange_diff(self.rule.rho, self.lam), trig_diff(self.nt)

    def dz_nodes(self, values):
        """Holomorphic derivative of node values (first axis = nodes)."""
        v = np.asarray(values)
        tail = v.shape[1:]
        f = v.reshape(self.nr, self.nt, -1)
        Dr, Dt = self._dmats
        fr = np.einsum("ij,jlq->ilq", Dr, f)
        ft = np.einsum("lm,imq->ilq", Dt, f)
        rho = self.rule.rho[:, None, None]
        th = self.rule.theta[None, :, None]
        c, s = np.cos(th), np.sin(th)
        fu = (c * fr - s * ft / rho) / self.patch.a
        fv = (s * fr + c * ft / rho) / self.patch.b
        out = np.conj(self.patch.rot) * 0.5 * (fu - 1j * fv)
        return out.reshape((self.nr * self.nt,) + tail)

    # -- Cauchy rows at the patch nodes -------------------------------------
    @cached_property
    def self_rows(self):
        if self.patch.is_disk:
            return self._disk_self_rows()
        return self.polar_rows(self.nodes)

    def _disk_self_rows(self):
        nr, N = self.nr, self.nt
        K = N // 2
        x = self.rule.rho
        lam = self.lam
        ks = np.arange(K)
        W1 = np.empty((nr, K, nr))
        W2 = np.empty((nr, K, nr))
        s, sw = _gauss_unit((nr + K) // 2 + 4)
        pg, pw = _gauss_unit(_PANEL_GL)
        for t, r0 in enumerate(x):
            L = lagrange_matrix(x, lam, r0 * s)
            pows = s[:, None] ** (ks + 1)[None, :]
            W1[t] = r0 * np.einsum("m,mk,mi->ki", sw, pows, L)
            P = max(1, int(np.ceil(np.log2(1.0 / r0))))
            edges = r0 * (1.0 / r0) ** (np.arange(P + 1) / P)
            lo, hi = edges[:-1, None], edges[1:, None]
            pts = (lo + (hi - lo) * pg[None, :]).ravel()
            wts = ((hi - lo) * pw[None, :]).ravel()
            L = lagrange_matrix(x, lam, pts)
            pows = (r0 / pts)[:, None] ** ks[None, :]
            W2[t] = np.einsum("m,mk,mi->ki", wts, pows, L)
        d = np.arange(N)
        ph = 2 * np.pi * np.outer(ks, d) / N
        A1 = np.einsum("tki,kd->tid", W1, np.exp(-1j * ph))
        A2 = np.einsum("tki,kd->tid", W2, np.exp(1j * ph))
        th = self.rule.theta
        dd = (d[:, None] - d[None, :]) % N  # [l0, l]
        a1 = A1[:, :, dd]  # [t, i, l0, l]
        a2 = A2[:, :, dd]
        S = -np.exp(-1j * th)[None, None, :, None] * a1 + np.exp(-1j * th)[None, None, None, :] * a2
        S = S.transpose(0, 2, 1, 3).reshape(nr * N, nr * N)
        return S * (self.patch.a * 2 * np.pi / N * np.conj(self.patch.rot))

    def polar_rows(self, z, n_radial=24):
        """Cauchy rows for interior targets by target-centred polar integration."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        p = self.patch
        rho_t, _ = p.to_polar(z)
        if np.any(rho_t >= 1.0):
            raise ValueError("polar rows need interior targets")
        xg, wg = _gauss_unit(n_radial)
        out = np.empty((len(z), self.nr * self.nt), dtype=complex)
        delta = np.maximum((1.0 - rho_t) * min(p.a, p.b), 1e-14)
        kappa = p.min_curvature_radius
        for j, zj in enumerate(z):
            nq = 2 * np.pi * 10.0 / np.sqrt(2.0 * delta[j] / kappa)
            nq = int(np.clip(2 * np.ceil(nq / 2), 64, 4096))
            th = 2 * np.pi * np.arange(nq) / nq
            R = self._ray_length(zj, th)
            pts = zj + (R[:, None] * xg[None, :]) * np.exp(1j * th)[:, None]
            c = ((2 * np.pi / nq) * np.exp(-1j * th) * R)[:, None] * wg[None, :]
            rr, tt = p.to_polar(pts.ravel())
            rr = np.minimum(rr, 1.0)
            L = lagrange_matrix(self.rule.rho, self.lam, rr)
            T = trig_matrix(self.nt, tt)
            out[j] = ((L * c.ravel()[:, None]).T @ T).ravel()
        return out

    def _ray_length(self, z, th):
        p = self.patch
        q = p.to_local(z)
        d = np.exp(1j * th) * np.conj(p.rot)
        A = (d.real / p.a) ** 2 + (d.imag / p.b) ** 2
        B = 2 * (q.real * d.real / p.a**2 + q.imag * d.imag / p.b**2)
        C = (q.real / p.a) ** 2 + (q.imag / p.b) ** 2 - 1.0
        disc = np.sqrt(B * B - 4 * A * C)
        return np.where(B > 0, -2 * C / (B + disc), (disc - B) / (2 * A))

    # -- exterior targets ---------------------------------------------------
    @cached_property
    def _moment_weights(self):
        # E[k, i] = int_0^1 l_i(rho) rho^(k+1) d rho
        K = self.nt // 2
        s, sw = _gauss_unit((self.nr + K) // 2 + 4)
        L = lagrange_matrix(self.rule.rho, self.lam, s)
        pows = s[:, None] ** (np.arange(K) + 1)[None, :]
        return np.einsum("m,mk,mi->ki", sw, pows, L)

    def _laurent_exterior(self, z, power):
        p = self.patch
        v0 = p.to_local(z) / p.a
        E = self._moment_weights
        K, N = E.shape[0], self.nt
        ks = np.arange(K)
        Q = np.exp(1j * np.outer(ks, self.rule.theta))  # [k, l]
        if power == 1:
            P = v0[:, None] ** (-(ks + 1))[None, :]
            fac = -2 * np.pi / N * p.a * np.conj(p.rot)
        else:
            P = (ks + 1)[None, :] * v0[:, None] ** (-(ks + 2))[None, :]
            fac = 2 * np.pi / N * np.conj(p.rot) ** 2
        rows = np.einsum("jk,ki,kl->jil", P, E, Q)
        return fac * rows.reshape(len(v0), -1)

    def exterior_rows(self, z, power=1):
        """Rows of the transform (power 1) or its z-derivative (power 2) off the patch."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        if self.patch.is_disk:
            return self._laurent_exterior(z, power)
        dist = self.patch.boundary_distance(z)
        h = max(self.patch.a, self.patch.b) * 2 * np.pi / self.nt
        out = np.empty((len(z), self.nr * self.nt), dtype=complex)
        far = dist > 6 * h
        if np.any(far):
            # d/dz of 1/(w-z) is 1/(w-z)^2
            out[far] = kernels.cauchy_matrix(z[far], self.nodes, self.weights, power)
        if np.any(~far):
            up = int(np.clip(np.ceil(6 * h / np.maximum(dist[~far].min(), 1e-3 * h)), 2, 8))
            out[~far] = self._upsampled(z[~far], up, power)
        return out

    def _upsampled(self, z, up, power):
        nr_f, nt_f = up * self.nr, up * self.nt
        rho_f, rw_f = _gauss_unit(nr_f)
        th_f = 2 * np.pi * np.arange(nt_f) / nt_f
        p = self.patch
        w_f = np.outer(p.a * p.b * rho_f * rw_f, np.full(nt_f, 2 * np.pi / nt_f))
        nodes_f = p.from_polar(rho_f[:, None], th_f[None, :])
        L = lagrange_matrix(self.rule.rho, self.lam, rho_f)
        T = trig_matrix(self.nt, th_f)
        c = kernels.cauchy_matrix(z, nodes_f.ravel(), w_f.ravel(), power).reshape(len(z), nr_f, nt_f)
        return np.einsum("jpq,pi,ql->jil", c, L, T).reshape(len(z), -1)
