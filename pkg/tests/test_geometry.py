import numpy as np
import pytest

from dbartau.geometry import (GeometryError, boundary_contour, build_grid, circle_contour, disk, ellipse,
                              mother_body, schwarz_ellipse, union)


def test_unit_disk_area():
    g = build_grid(disk(0, 1), 20, 40)
    assert abs(g.weights.sum() - np.pi) <= 1e-12 * np.pi


def test_ellipse_area():
    g = build_grid(ellipse(2, 1), 20, 40)
    assert abs(g.weights.sum() - 2 * np.pi) <= 1e-12 * 2 * np.pi


def test_rotated_union_area():
    d = union(ellipse(0.6, 0.3, 1 + 1j, 0.7), disk(-1 - 1j, 0.4))
    g = build_grid(d, 12, 24)
    exact = np.pi * (0.6 * 0.3 + 0.4**2)
    assert abs(g.weights.sum() - exact) <= 1e-12 * exact


def test_conjugate_closed_nodes_are_mirrored():
    g = build_grid(disk(1j, 0.5, conjugate_closed=True), 20, 40)
    mi = g.mirror_index
    assert np.array_equal(g.nodes[mi], np.conj(g.nodes))
    assert np.array_equal(g.weights[mi], g.weights)
    assert sorted(map(complex, g.nodes), key=lambda z: (z.real, z.imag)) == \
        sorted(map(complex, np.conj(g.nodes)), key=lambda z: (z.real, z.imag))


def test_nodes_distinct():
    g = build_grid(ellipse(0.5, 0.25, 1j, 0.3, True), 10, 20)
    assert len(np.unique(g.nodes)) == g.size


def test_odd_angular_count_rounds_up():
    assert build_grid(disk(0, 1), 4, 7).shape == (4, 8)


@pytest.mark.parametrize("build", [
    lambda: disk(0, -1.0),
    lambda: ellipse(0.0, 1.0),
    lambda: disk(0.1j, 0.5, conjugate_closed=True),
    lambda: union(disk(0, 1), disk(1.5, 1)),
])
def test_invalid_domains_rejected(build):
    with pytest.raises(GeometryError):
        build()


def test_unit_circle_residue():
    c = boundary_contour(disk(0, 1), 64)
    assert abs(c.integrate(lambda z: 1 / z) - 2j * np.pi) <= 1e-12
    assert abs(c.integrate(lambda z: z)) <= 1e-12


def test_ellipse_schwarz_contour_area():
    c = boundary_contour(ellipse(2, 1), 128)
    val = c.integrate(lambda w: schwarz_ellipse(2, 1, w)) / (2j * np.pi)
    assert abs(val - 2.0) <= 1e-10


def test_schwarz_on_boundary():
    assert abs(schwarz_ellipse(2, 1, 2.0 + 0j) - 2.0) <= 1e-14
    th = np.pi / 3
    z = 2 * np.cos(th) + 1j * np.sin(th)
    assert abs(schwarz_ellipse(2, 1, z) - np.conj(z)) <= 1e-12


def test_schwarz_branch_at_infinity():
    # S(z) ~ (a - b)^2 / c^2 * z for the branch with sqrt(z^2 - c^2) / z -> 1
    for z in (1e4, 1e4j, -1e4 + 3e3j):
        assert abs(schwarz_ellipse(2, 1, z) / z - 1 / 3) <= 1e-6


def test_schwarz_rejects_focal_segment():
    with pytest.raises(GeometryError):
        schwarz_ellipse(2, 1, 0.5)


@pytest.mark.parametrize("k", range(5))
def test_mother_body_moments(k):
    mb = mother_body(2, 1, 64)
    g = build_grid(ellipse(2, 1), 20, 40)
    contour = mb.integrate(lambda w: w**k) / (2j * np.pi)
    area = g.integrate(g.nodes**k) / np.pi
    assert abs(contour - area) <= 1e-8


@pytest.mark.parametrize("k", range(5))
def test_shifted_rotated_mother_body(k):
    c, rot = 0.3 + 1j, 0.4
    mb = mother_body(0.5, 0.25, 64, c, rot)
    g = build_grid(ellipse(0.5, 0.25, c, rot), 20, 40)
    h = lambda w: (w - 0.1) ** k  # noqa: E731
    assert abs(mb.integrate(h) / (2j * np.pi) - g.integrate(h(g.nodes)) / np.pi) <= 1e-8


def test_circle_contour_length():
    c = circle_contour(3.0, 32, 1j)
    assert abs(np.sum(np.abs(c.weights)) - 6 * np.pi) <= 1e-12
