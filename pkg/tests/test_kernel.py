import numpy as np
import pytest

from dbartau.dbar import FieldError, MatrixField, solve_gamma
from dbartau.determinants import trace_K
from dbartau.geometry import cached_grid, disk
from dbartau.kernel import (KernelPair, constant_nilpotent_pair, discretize, kernel_eval, m_from_pair,
                            neumann_remainder, resolvent_eval, resolvent_identity_residual, scale_pair,
                            two_disk_pair, user_table_pair)
from dbartau.nls import build_nls_M, nls_pair


def _zero_pair(support=None):
    z0 = lambda z: np.zeros((len(z), 2, 1), complex)  # noqa: E731
    return KernelPair(z0, z0, z0, 2, 1, support)


def _smooth_pair():
    def f(z):
        out = np.zeros((len(z), 2, 1), complex)
        out[:, 0, 0] = np.exp(z)
        return out

    def g(z):
        out = np.zeros((len(z), 2, 1), complex)
        out[:, 1, 0] = z * z + 1
        return out

    def df(z):
        return f(z)

    return KernelPair(f, g, df, 2, 1, disk(0, 1))


def test_kernel_diagonal_uses_derivative():
    p = _smooth_pair()
    z = 0.2 + 0.1j
    _, G, DF = p.values(z)
    assert np.allclose(kernel_eval(p, z, z), DF[0].T @ G[0])


def test_kernel_off_diagonal_formula():
    p = _smooth_pair()
    z, w = 0.3, -0.2j
    expect = 0 * np.exp(z) / (z - w)  # f and g live in different rows
    assert abs(kernel_eval(p, z, w)[0, 0] - expect) == 0
    F, _, _ = p.values(z)
    _, G, _ = p.values(w)
    assert np.allclose(kernel_eval(p, z, w), F[0].T @ G[0] / (z - w))


def test_nls_kernel_vanishes_on_diagonal(nls_base):
    p = nls_pair(nls_base)
    for z in nls_base.grid.nodes[::97]:
        assert np.all(kernel_eval(p, z, z) == 0)


def test_m_from_pair_is_traceless(nls_base):
    M = m_from_pair(nls_pair(nls_base))
    V = M(nls_base.grid.nodes)
    assert np.all(np.trace(V, axis1=1, axis2=2) == 0)
    M.check(nls_base.grid)


def test_nls_field_matches_direct_construction(nls_base):
    z = nls_base.grid.nodes[::37]
    A = m_from_pair(nls_pair(nls_base))(z)
    B = build_nls_M(nls_base)(z)
    assert np.max(np.abs(A - B)) <= 1e-13 * max(1.0, np.abs(B).max())


def test_zero_pair():
    grid = cached_grid(disk(0, 1), 6, 12)
    p = _zero_pair(disk(0, 1))
    assert not np.any(m_from_pair(p)(grid.nodes))
    assert not np.any(discretize(p, grid).matrix)
    g = solve_gamma(grid, MatrixField.zero())
    assert resolvent_identity_residual(p, g) == 0.0


def test_resolvent_of_trivial_field_is_kernel():
    grid = cached_grid(disk(0, 1), 6, 12)
    p = _smooth_pair()
    g = solve_gamma(grid, MatrixField.zero())
    for z, w in [(2.0, 0.1j), (0.5, -0.5)]:
        assert np.allclose(resolvent_eval(p, g, z, w), kernel_eval(p, z, w))


def test_trace_matches_trace_K(two_disk_domain, two_disk_grid):
    p = _smooth_pair()
    grid = cached_grid(disk(0, 1), 10, 20)
    A = discretize(p, grid).matrix
    assert abs(np.trace(A) - trace_K(grid, p)) <= 1e-12 * max(1.0, abs(np.trace(A)))


def test_nls_trace_zero(nls_base):
    A = discretize(nls_pair(nls_base), nls_base.grid).matrix
    assert np.trace(A) == 0


def test_orthogonality_check():
    grid = cached_grid(disk(0, 1), 6, 12)
    p = _smooth_pair()
    bad = KernelPair(p.f, p.f, p.df, 2, 1, disk(0, 1))
    with pytest.raises(FieldError):
        bad.check(grid)
    constant_nilpotent_pair(1, 2, disk(0, 1)).check(grid)


def test_table_pair_agrees(two_disk_domain, two_disk_grid):
    p = two_disk_pair(two_disk_domain, 1.0, 0.8 + 0.2j)
    F, G, DF = p.values(two_disk_grid.nodes)
    q = user_table_pair(two_disk_grid.nodes, F, G, DF, two_disk_domain)
    assert np.array_equal(discretize(p, two_disk_grid).matrix, discretize(q, two_disk_grid).matrix)


def test_two_disk_resolvent_identity(two_disk_domain, two_disk_grid):
    p = two_disk_pair(two_disk_domain, 1.0, 0.8 + 0.2j)
    g = solve_gamma(two_disk_grid, m_from_pair(p))
    assert resolvent_identity_residual(p, g) <= 1e-6


def test_neumann_third_order(two_disk_domain, two_disk_grid):
    p = two_disk_pair(two_disk_domain, 1.0, 0.8 + 0.2j)
    r2, r3 = (neumann_remainder(p, two_disk_grid, e) for e in (1e-2, 1e-3))
    assert np.log10(r2 / r3) >= 2.7


def test_scaled_field_scales_linearly(two_disk_domain, two_disk_grid):
    p = two_disk_pair(two_disk_domain, 1.0, 1.0)
    A = discretize(p, two_disk_grid).matrix
    B = discretize(scale_pair(p, 1e-3), two_disk_grid).matrix
    assert np.allclose(B, 1e-3 * A, rtol=1e-14, atol=0)
