import numpy as np
import pytest

from dbartau.dbar import FieldError, MatrixField, solve_gamma
from dbartau.deformation import (DeformationState, TimeVector, connection_check, dress, dress_kernel, dt_M,
                                 gamma_fn, hirota_residue, kp_residual, log_det2, malgrange_component,
                                 miwa_shift_M, miwa_shift_pair, tau_along_path, tau_ratio)
from dbartau.geometry import build_grid, cached_grid, disk
from dbartau.kernel import constant_nilpotent_pair, discretize, m_from_pair, two_disk_pair

E12 = np.array([[0, 1], [0, 0]], complex)
HALF = disk(1j, 0.5)


def _upper(beta=1.0):
    return MatrixField.constant(beta * E12, HALF)


def _diag():
    return MatrixField.constant(np.diag([1.0, -1.0]), HALF)


@pytest.fixture(scope="module")
def small_state(two_disk_domain):
    grid = cached_grid(two_disk_domain, 10, 20)
    return DeformationState.from_pair(two_disk_pair(two_disk_domain, 1.0, 0.8 + 0.2j), grid,
                                      TimeVector((0.1, 0.05, 0.02)))


def test_time_vector_bounds():
    with pytest.raises(ValueError):
        TimeVector(tuple([0.0] * 9))
    with pytest.raises(ValueError):
        TimeVector((np.nan,))
    assert TimeVector((1.0,)).shifted(3, 0.5).t == (1, 0, 0.5)


def test_dress_identity_cases():
    z = build_grid(HALF, 6, 12).nodes
    M = _upper()
    assert np.array_equal(dress(M, TimeVector.zeros())(z), M(z))
    D = _diag()
    assert np.array_equal(dress(D, (0.3, -0.2, 0.1))(z), D(z))


def test_dress_scales_upper_entry():
    z = build_grid(HALF, 6, 12).nodes
    V = dress(_upper(), (0.1,))(z)
    assert np.max(np.abs(V[:, 0, 1] - np.exp(0.1 * z))) <= 1e-15


def test_dress_overflow_guard():
    with pytest.raises(FieldError):
        dress(_upper(), (1000.0,))(np.array([0.3 + 1j]))


def test_dt_M_closed_forms():
    z = build_grid(HALF, 6, 12).nodes
    assert not np.any(dt_M(_diag(), 2)(z))
    V = dt_M(_upper(), 3)(z)
    assert np.allclose(V[:, 0, 1], z**3, rtol=1e-15, atol=0)


@pytest.mark.parametrize("j", [1, 2, 3])
def test_dt_M_finite_difference(two_disk_domain, j):
    z = build_grid(two_disk_domain, 6, 12).nodes
    M0 = m_from_pair(two_disk_pair(two_disk_domain, 1.0, 0.8 + 0.2j))
    t = TimeVector((0.1, 0.05, 0.02))
    h = 1e-5
    fd = (dress(M0, t.shifted(j, h))(z) - dress(M0, t.shifted(j, -h))(z)) / (2 * h)
    assert np.max(np.abs(fd - dt_M(dress(M0, t), j)(z))) <= 1e-9


def test_dress_kernel_matches_field(two_disk_domain):
    z = build_grid(two_disk_domain, 6, 12).nodes
    p = two_disk_pair(two_disk_domain, 1.0, 0.8 + 0.2j)
    t = (0.1, 0.05)
    assert np.allclose(m_from_pair(dress_kernel(p, t))(z), dress(m_from_pair(p), t)(z), rtol=1e-14, atol=1e-15)


def test_zero_field_form_and_path():
    grid = cached_grid(HALF, 6, 12)
    st = DeformationState(MatrixField.zero(), grid, TimeVector((0.1, 0.2)))
    assert malgrange_component(st, 1) == 0
    assert tau_along_path(st, [(0.1, 0.2), (0.1, 0.2)]) == 0
    assert tau_along_path(st, [(0.1, 0.2), (0.3, 0.0)]) == 0


def test_omega_matches_determinant_difference(small_state):
    h = 1e-4
    for j in (1, 2):
        ref = log_det2(small_state)
        up = log_det2(small_state.at(small_state.t.shifted(j, h)), ref)
        dn = log_det2(small_state.at(small_state.t.shifted(j, -h)), ref)
        assert abs(malgrange_component(small_state, j) - (up - dn) / (2 * h)) <= 1e-5


def test_segment_increment_is_determinant_increment(small_state):
    st = small_state.at(small_state.t)
    start = log_det2(st)
    target = (0.2, 0.0, 0.02)
    inc = tau_along_path(st, [st.t, target])
    assert st.t == TimeVector(target)
    assert abs(inc - (log_det2(st, start) - start)) <= 1e-5
    assert st.log_tau == inc


def test_miwa_shift_entries():
    z = build_grid(HALF, 6, 12).nodes
    zeta = 3.0
    assert np.array_equal(miwa_shift_M(_diag(), zeta, "-")(z), _diag()(z))
    Vm = miwa_shift_M(_upper(), zeta, "-")(z)
    Vp = miwa_shift_M(_upper(), zeta, "+")(z)
    assert np.allclose(Vm[:, 0, 1], 1 - z / zeta, rtol=1e-15)
    assert np.allclose(Vp[:, 0, 1], 1 / (1 - z / zeta), rtol=1e-15)
    back = miwa_shift_M(miwa_shift_M(_upper(), zeta, "+"), zeta, "-")(z)
    assert np.max(np.abs(back - _upper()(z))) <= 1e-15


def test_miwa_shift_pair_matches_field(two_disk_domain):
    z = build_grid(two_disk_domain, 6, 12).nodes
    p = two_disk_pair(two_disk_domain, 1.0, 0.8 + 0.2j)
    for sign in "+-":
        A = m_from_pair(miwa_shift_pair(p, 3.0, sign))(z)
        B = miwa_shift_M(m_from_pair(p), 3.0, sign)(z)
        assert np.allclose(A, B, rtol=1e-14, atol=1e-15)


def test_miwa_rejects_point_in_support():
    with pytest.raises(FieldError):
        miwa_shift_M(_upper(), 1j, "-")
    with pytest.raises(ValueError):
        miwa_shift_M(_upper(), 3.0, "*")


def test_connection_trivial_field():
    st = DeformationState(MatrixField.zero(), cached_grid(HALF, 6, 12), TimeVector((0.0,)))
    for sign in "+-":
        assert connection_check(st, 3.0, sign) <= 1e-15


def test_connection_nilpotent_disk_field():
    st = DeformationState(_upper(0.7), cached_grid(HALF, 12, 24), TimeVector((0.1,)))
    for sign in "+-":
        assert connection_check(st, 3.0, sign) <= 1e-6


def test_tau_ratio_trivial():
    p = constant_nilpotent_pair(1.0, 1.0, HALF)
    st = DeformationState.from_pair(p, cached_grid(HALF, 6, 12), TimeVector((0.1,)))
    for sign in "+-":
        lhs, rhs = tau_ratio(st, 3.0, sign)
        assert lhs == pytest.approx(1.0, abs=1e-14)
        assert rhs == pytest.approx(1.0, abs=1e-14)


def test_gamma_vanishes_without_diagonal():
    assert gamma_fn(_upper(), 3.0) == 0


def test_gamma_vanishes_for_antiholomorphic_entry():
    def f(z):
        out = np.zeros((len(z), 2, 2), complex)
        out[:, 0, 0] = np.conj(z) * disk(0, 1).contains(z)
        return out

    M = MatrixField(f, (2, 2), disk(0, 1), name="zbar")
    assert abs(gamma_fn(M, 3.0, cached_grid(disk(0, 1), 16, 32))) <= 1e-12


@pytest.mark.parametrize("zeta", [3.0, 10.0, 100.0j])
def test_gamma_mean_value_oracle(zeta):
    # (M0)_11 = z on a disk: the log integrand is harmonic, so gamma = rho^2 log(zeta / (zeta - c))
    c, rho = 0.5 + 0.2j, 0.6
    D = disk(c, rho)

    def f(z):
        out = np.zeros((len(z), 2, 2), complex)
        out[:, 0, 0] = z * D.contains(z)
        return out

    M = MatrixField(f, (2, 2), D, name="z")
    val = gamma_fn(M, zeta, cached_grid(D, 16, 32))
    assert abs(val + rho**2 * np.log(1 - c / zeta)) <= 1e-12
    assert abs(val) <= 2 * rho**2 * abs(c) / abs(zeta)


def test_hirota_trivial_and_guard():
    grid = cached_grid(HALF, 6, 12)
    assert hirota_residue(MatrixField.zero(), grid, (0.1,), (0.2,), 8.0) == 0
    with pytest.raises(ValueError):
        hirota_residue(_upper(), grid, (0.1,), (0.2,), 1.0)


def test_hirota_same_times(two_disk_domain):
    grid = cached_grid(two_disk_domain, 10, 20)
    M0 = m_from_pair(two_disk_pair(two_disk_domain, 1.0, 0.8 + 0.2j))
    assert abs(hirota_residue(M0, grid, (0.1,), (0.1,), 8.0)) <= 1e-6


def test_kp_trivial_pair():
    p = constant_nilpotent_pair(1.0, 2.0, HALF)
    st = DeformationState.from_pair(p, cached_grid(HALF, 6, 12), TimeVector.zeros())
    assert not np.any(discretize(p, st.grid).matrix)
    assert kp_residual(st, 5e-2) == 0
