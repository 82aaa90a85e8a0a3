import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bubblepot import domains as dom


def upper_half_plane():
    return dom.HalfSpace((0.0, -1.0), 0.0)


VARIANTS = [
    dom.Ellipsoid((2.0, 1.0)),
    dom.Ellipsoid((1.0, 1.5, 0.7), center=(0.2, -0.1, 0.3)),
    upper_half_plane(),
    dom.HalfSpace((0.0, 0.6, 0.8), 0.5),
    dom.Strip((0.0, 1.0), -1.0, 1.0),
    dom.Strip((0.6, 0.0, 0.8), -0.5, 1.0),
    dom.Paraboloid((1.0,)),
    dom.Paraboloid((1.0, 2.0)),
    dom.CylinderOverEllipsoid((1.0, 2.0), (0, 1), 3),
    dom.CylinderOverEllipsoid((1.5,), (0,), 3),
    dom.CylinderOverParaboloid((1.0,), axis=2, dim=3, base_axes=(0,)),
]


def test_contains_examples():
    assert dom.Ellipsoid((1.0, 1.0)).contains((0.5, 0)) == "inside"
    assert upper_half_plane().contains((7, -1)) == "outside"
    assert dom.Paraboloid((1.0,)).contains((1, 1)) == "boundary"
    assert dom.WholeSpace(3).contains((1e9, 0, 0)) == "inside"


def test_outward_normal_examples():
    np.testing.assert_allclose(dom.Ellipsoid((1.0, 1.0)).outward_normal((1.0, 0.0)), [1, 0], atol=1e-14)
    np.testing.assert_allclose(upper_half_plane().outward_normal((3.0, 0.0)), [0, -1], atol=1e-14)
    np.testing.assert_allclose(dom.Paraboloid((1.0,)).outward_normal((1.0, 1.0)),
                               np.array([2, -1]) / math.sqrt(5), atol=1e-14)
    with pytest.raises(dom.BoundaryPointError):
        dom.Ellipsoid((1.0, 1.0)).outward_normal((0.5, 0.0))


def test_paraboloid_normal_by_finite_differences():
    g = lambda x: x[0] ** 2 - x[1]
    h = 1e-6
    x = np.array([1.0, 1.0])
    grad = np.array([(g(x + h * e) - g(x - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(dom.Paraboloid((1.0,)).outward_normal(x), grad / np.linalg.norm(grad), atol=1e-9)


def test_invalid_specs():
    with pytest.raises(ValueError):
        dom.Ellipsoid((1.0, -1.0))
    with pytest.raises(ValueError):
        dom.Strip((0.0, 1.0), 1.0, -1.0)
    with pytest.raises(ValueError):
        dom.Paraboloid((0.0,))


def test_boundary_samples_weights():
    circle = dom.Ellipsoid((1.0, 1.0)).boundary_samples(360)
    assert sum(s.patch_weight for s in circle) == pytest.approx(2 * math.pi, abs=1e-6)
    ell = dom.Ellipsoid((2.0, 1.0)).boundary_samples(400)
    assert sum(s.patch_weight for s in ell) == pytest.approx(9.688448220547675, rel=1e-9)
    strip = dom.Strip((0.0, 1.0), -1.0, 1.0).boundary_samples(40, extent=10.0)
    assert sum(s.patch_weight for s in strip) == pytest.approx(40.0, abs=1e-9)


def test_ellipse_perimeter_oracle():
    from scipy.integrate import quad
    per, _ = quad(lambda t: math.hypot(2 * math.sin(t), math.cos(t)), 0, 2 * math.pi, epsabs=1e-13)
    assert per == pytest.approx(9.688448220547675, rel=1e-12)


def test_sphere_area_from_samples():
    S = dom.Ellipsoid((1.0, 1.0, 1.0)).boundary_samples(600)
    assert sum(s.patch_weight for s in S) == pytest.approx(4 * math.pi, rel=1e-6)


def test_missing_extent():
    with pytest.raises(dom.MissingExtentError):
        upper_half_plane().boundary_samples(10)
    with pytest.raises(ValueError):
        dom.Ellipsoid((1.0, 1.0)).boundary_samples(3)


@pytest.mark.parametrize("D", VARIANTS, ids=lambda D: D.variant + str(D.n))
def test_boundary_samples_on_boundary_with_consistent_normals(D):
    samples = D.boundary_samples(100, None if D.bounded else 3.0)
    assert len(samples) >= 4
    for s in samples:
        assert abs(np.linalg.norm(s.normal) - 1) < 1e-12
        assert abs(D.level(s.point)) < 1e-12 * max(1.0, float(np.linalg.norm(s.point)) ** 2)
        assert D.contains(s.point + 1e-6 * s.normal) == "outside"
        assert D.contains(s.point - 1e-6 * s.normal) == "inside"
        assert s.patch_weight > 0


@pytest.mark.parametrize("D", VARIANTS, ids=lambda D: D.variant + str(D.n))
def test_json_round_trip(D):
    text = D.to_json()
    E = dom.from_json(text)
    assert E == D
    assert json.loads(E.to_json()) == json.loads(text)


def test_from_dict_errors():
    with pytest.raises(ValueError):
        dom.from_dict({"variant": "Torus"})
    with pytest.raises(ValueError):
        dom.from_dict({"schema": "domain.v0", "variant": "Ellipsoid", "semiaxes": [1, 1]})


def test_volume_in_ball_examples():
    for rho in (0.5, 2.0, 7.0):
        assert upper_half_plane().volume_in_ball(rho) == pytest.approx(0.5 * math.pi * rho ** 2, rel=1e-12)
    assert dom.Ellipsoid((1.0, 1.0)).volume_in_ball(2.0) == pytest.approx(math.pi, rel=1e-12)
    assert dom.Ellipsoid((1.0, 1.0, 1.0)).volume_in_ball(0.5) == pytest.approx(4 / 3 * math.pi / 8, rel=1e-6)


def test_paraboloid_volume_monte_carlo():
    D = dom.Paraboloid((1.0,))
    rng = np.random.default_rng(7)
    hits = total = 0
    for _ in range(10):
        p = rng.uniform(-4, 4, size=(1_000_000, 2))
        inb = np.sum(p * p, axis=1) < 16
        total += inb.sum()
        hits += (inb & (p[:, 1] > p[:, 0] ** 2)).sum()
    mc = 64.0 * hits / 1e7
    assert D.volume_in_ball(4.0) == pytest.approx(mc, rel=2e-3)


def test_strip_volume_closed_form():
    D = dom.Strip((0.0, 1.0), -1.0, 1.0)
    rho = 3.0
    exact = 2 * (math.sqrt(rho ** 2 - 1) + rho ** 2 * math.asin(1 / rho))
    assert D.volume_in_ball(rho) == pytest.approx(exact, rel=1e-6)


@given(st.floats(0.1, 10.0), st.floats(0.01, 5.0))
def test_volume_monotone(rho, drho):
    for D in (dom.Paraboloid((1.0,)), dom.Ellipsoid((2.0, 1.0)), dom.Strip((0.0, 1.0), -1.0, 1.0)):
        assert D.volume_in_ball(rho + drho) >= D.volume_in_ball(rho) * (1 - 1e-7)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2 * math.pi))
def test_ray_interval_endpoints_on_boundary(x, y, th):
    D = dom.Ellipsoid((2.0, 1.0))
    o = np.array([x, y])
    w = np.array([math.cos(th), math.sin(th)])
    lo, hi = D.ray_interval(o, w[:, None])
    lo, hi = float(lo[0]), float(hi[0])
    if math.isnan(lo):
        return
    for r in (lo, hi):
        if r > 0:
            assert abs(D.level(o + r * w)) < 1e-9
    mid = 0.5 * (max(lo, 0) + hi)
    if hi > max(lo, 0) + 1e-9:
        assert D.level(o + mid * w) < 0


def test_distance_to_boundary():
    assert dom.Ellipsoid((1.0, 1.0)).distance_to_boundary((0.3, 0.4)) == pytest.approx(0.5, abs=1e-9)
    assert dom.Ellipsoid((1.0, 1.0)).distance_to_boundary((3.0, 4.0)) == pytest.approx(4.0, abs=1e-9)
    assert upper_half_plane().distance_to_boundary((5.0, 2.0)) == pytest.approx(2.0)
    assert dom.Ellipsoid((2.0, 1.0)).distance_to_boundary((0.0, 0.0)) == pytest.approx(1.0, abs=1e-9)


def test_interior_samples_are_inside():
    for D in VARIANTS:
        pts = D.interior_samples(20)
        assert pts.shape == (20, D.n)
        assert all(D.contains(p) == "inside" for p in pts)


def test_structural_flags():
    assert dom.Strip((0.0, 1.0), -1.0, 1.0).within_parallel_hyperplanes()
    assert dom.Ellipsoid((1.0, 2.0)).within_parallel_hyperplanes()
    assert dom.CylinderOverEllipsoid((1.0,), (0,), 3).within_parallel_hyperplanes()
    assert not dom.Paraboloid((1.0,)).within_parallel_hyperplanes()
    assert not upper_half_plane().within_parallel_hyperplanes()
    assert dom.Ellipsoid((1.0, 2.0)).bounded and not dom.Paraboloid((1.0,)).bounded
