"""Pure NumPy versions of the hot kernels (used when the extension is absent)."""

from __future__ import annotations

import numpy as np

_CHUNK = 2048


def cauchy_matrix(targets, sources, weights, power=1, skip_self=False):
    """``out[j, k] = weights[k] / (sources[k] - targets[j])**power``."""
    t = np.ascontiguousarray(targets, dtype=complex)
    s = np.ascontiguousarray(sources, dtype=complex)
    w = np.ascontiguousarray(weights, dtype=complex)
    d = s[None, :] - t[:, None]
    if skip_self:
        hit = d == 0
        d[hit] = 1.0
    out = w[None, :] / d**power if power != 1 else w[None, :] / d
    if skip_self:
        out[hit] = 0.0
    return out


def cauchy_sum(targets, sources, coeffs, power=1):
    """``out[j, :] = sum_k coeffs[k, :] / (sources[k] - targets[j])**power``."""
    t = np.ascontiguousarray(targets, dtype=complex)
    s = np.ascontiguousarray(sources, dtype=complex)
    c = np.asarray(coeffs, dtype=complex).reshape(len(s), -1)
    out = np.empty((len(t), c.shape[1]), dtype=complex)
    for a in range(0, len(t), _CHUNK):
        d = s[None, :] - t[a:a + _CHUNK, None]
        out[a:a + _CHUNK] = (d ** (-power)) @ c
    return out


def integrable_kernel_matrix(z, F, G, DF, sqrt_w, split):
    """Symmetrically weighted matrix of ``f^T(z_k) g(z_l) / (z_k - z_l)``.

    ``F``, ``G``, ``DF`` have shape ``(N, r, n)``.  Pairs closer than
    ``split`` use the Taylor form ``df^T(z_k) g(z_l)``.
    """
    z = np.asarray(z, dtype=complex)
    N, r, n = F.shape
    num = np.einsum("kra,lrb->kalb", F, G)
    d = z[:, None] - z[None, :]
    near = np.abs(d) < split
    d[near] = 1.0
    K = num / d[:, None, :, None]
    if np.any(near):
        tay = np.einsum("kra,lrb->kalb", DF, G)
        m = near[:, None, :, None] & np.ones((1, n, 1, n), dtype=bool)
        K[m] = tay[m]
    sw = np.asarray(sqrt_w, dtype=float)
    K *= sw[:, None, None, None] * sw[None, None, :, None]
    return K.reshape(N * n, N * n)
