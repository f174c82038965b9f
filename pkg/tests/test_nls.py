import numpy as np
import pytest

from dbartau.dbar import FieldError, evaluate_gamma
from dbartau.geometry import GeometryError, disk, ellipse
from dbartau.nls import (LaxPair, NLSScenario, a_equation_residual, beta_constant, beta_from_spec,
                         beta_gaussian, beta_polynomial, build_nls_M, cmkdv_residual, det2_psi_check, nls_pair,
                         nls_residual, psi_at, psi_extract, rh_reduce_ellipse, richardson_slope,
                         schwarz_residual, solve_nls, zero_curvature_residual)


@pytest.fixture(scope="module")
def zero_beta():
    return NLSScenario(disk(1j, 0.5), beta_constant(0.0), x=0.3, t=0.1, radial=8, angular=16)


@pytest.fixture(scope="module")
def solved(nls_base):
    return solve_nls(nls_base)


def test_zero_weight_everything_vanishes(zero_beta):
    assert not np.any(build_nls_M(zero_beta)(zero_beta.grid.nodes))
    assert psi_at(zero_beta) == 0
    assert zero_curvature_residual(zero_beta, 1e-2) == 0
    assert nls_residual(zero_beta, 1e-2) == 0
    assert cmkdv_residual(zero_beta, 1e-2) == 0
    assert det2_psi_check(zero_beta)["discrepancy"] == 0


def test_characteristic_functions_at_origin():
    s = NLSScenario(disk(1j, 0.5), beta_constant(1.0), radial=8, angular=16)
    z = s.grid.nodes
    M = build_nls_M(s)(z)
    up = disk(1j, 0.5).contains(z)
    assert np.allclose(M[:, 0, 1], up.astype(float), rtol=0, atol=1e-15)
    assert np.allclose(M[:, 1, 0], -(~up).astype(float), rtol=0, atol=1e-15)
    assert not np.any(M[:, 0, 0]) and not np.any(M[:, 1, 1])


def test_domain_made_conjugate_closed(nls_base):
    assert nls_base.domain.conjugate_closed
    with pytest.raises(GeometryError):
        NLSScenario(disk(0.1j, 0.5))


def test_schwarz_symmetry(solved):
    assert schwarz_residual(solved) <= 1e-12


def test_reality_of_moment(solved):
    G1 = solved.gamma1
    assert abs(G1[1, 0] + np.conj(G1[0, 1])) <= 1e-12
    assert abs(G1[0, 0] + G1[1, 1]) <= 1e-10


def test_far_field_matches_moment(solved):
    psi = psi_extract(solved)[0]
    z = 1e3 * np.exp(0.7j)
    far = 2j * z * (evaluate_gamma(solved, z) - np.eye(2))[0, 1]
    assert abs(far - psi) <= 1e-2 * abs(psi)


def test_broken_mirror_detected(nls_base):
    g = solve_nls(nls_base.at(mirror_scale=2.0))
    assert schwarz_residual(g) > 0.1


def test_lax_pair_trivial():
    L = LaxPair(0j, 0j)
    z = 1.3 - 0.4j
    s3 = np.diag([1, -1])
    assert np.allclose(L.U(z), -1j * z * s3)
    assert np.allclose(L.V(z), -1j * z * z * s3)
    assert np.trace(LaxPair(0.3 + 0.1j, -0.2j).V(z)) == 0


def test_a_equation(nls_base):
    assert a_equation_residual(nls_base, 1e-3) <= 1e-4


def test_probe_independence(nls_base):
    r1 = zero_curvature_residual(nls_base, 2e-2, probes=(1.0,))
    r2 = zero_curvature_residual(nls_base, 2e-2, probes=(2.0 + 1.0j,))
    assert 0.1 <= r1 / r2 <= 10


def test_small_amplitude_scaling(nls_base):
    p1 = psi_at(nls_base.at(beta=beta_constant(1e-3)))
    p2 = psi_at(nls_base.at(beta=beta_constant(2e-3)))
    assert abs(p2 / p1 - 2) <= 1e-4
    d1 = det2_psi_check(nls_base.at(beta=beta_constant(1e-3)))
    d2 = det2_psi_check(nls_base.at(beta=beta_constant(2e-3)))
    assert abs(d2["abs_psi_sq"] / d1["abs_psi_sq"] - 4) <= 1e-3
    assert abs(d2["d2_log_tau"] / d1["d2_log_tau"] - 4) <= 1e-2


def test_det2_matches_modulus(nls_base):
    assert det2_psi_check(nls_base, 1e-2)["discrepancy"] <= 1e-3


def test_weight_parsing():
    assert beta_from_spec(2.0)(1j) == 2.0
    g = beta_from_spec({"kind": "gaussian", "width": 0.3})
    assert not g.analytic and g(1j) == pytest.approx(1.0)
    p = beta_from_spec({"kind": "polynomial", "coefficients": [1, [0, 1]], "center": [0, 1]})
    assert p.analytic and p(1.5j) == pytest.approx(0.5)
    with pytest.raises(FieldError):
        beta_from_spec({"kind": "bogus"})


def test_weight_star():
    b = beta_polynomial([1.0, 2.0 + 1j])
    z = 0.4 + 0.9j
    assert b.star(z) == pytest.approx(np.conj(b(np.conj(z))))


def test_weight_without_continuous_root():
    # z - i winds around 0 on the disk, so no square root branch is continuous there
    s = NLSScenario(disk(1j, 0.5), beta_polynomial([0.0, 1.0], 1j), radial=6, angular=12)
    with pytest.raises(FieldError):
        nls_pair(s).values(s.grid.nodes)


def test_overflow_guard():
    with pytest.raises(FieldError):
        solve_nls(NLSScenario(disk(1j, 0.5), x=500.0, radial=6, angular=12))


def test_richardson_slope():
    assert richardson_slope(4.0, 1.0) == pytest.approx(2.0)
    assert np.isnan(richardson_slope(0.0, 1.0))


def test_rh_trivial_weight():
    s = NLSScenario(ellipse(0.5, 0.25, 1j), beta_constant(0.0), radial=6, angular=12)
    rh = rh_reduce_ellipse(s, 16)
    assert np.allclose(rh(np.array([3.0, 5j])), np.eye(2))
    assert rh.psi == 0


def test_rh_preconditions(nls_base):
    with pytest.raises(GeometryError):
        rh_reduce_ellipse(nls_base)
    e = ellipse(0.5, 0.25, 1j)
    with pytest.raises(FieldError):
        rh_reduce_ellipse(NLSScenario(e, beta_gaussian(), radial=6, angular=12))
    with pytest.raises(FieldError):
        rh_reduce_ellipse(NLSScenario(e, mirror_scale=2.0, radial=6, angular=12))
    rh = rh_reduce_ellipse(NLSScenario(e, radial=6, angular=12), 16)
    with pytest.raises(ValueError):
        rh(1j)
