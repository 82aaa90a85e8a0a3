import math

import numpy as np
import pytest

from bubblepot import domains as dom
from bubblepot import nullquad as nq
from bubblepot import quadrature as quad

DISK = dom.Ellipsoid((1.0, 1.0))
UPPER = dom.HalfSpace((0.0, -1.0), 0.0)
SQUARE = dom.Box((-1.0, -1.0), (1.0, 1.0))

CANONICAL = {
    "halfspace": (UPPER, "HalfSpaceLike"),
    "halfspace3d": (dom.HalfSpace((0.0, 0.0, 1.0), 0.5), "HalfSpaceLike"),
    "ellipse": (dom.Ellipsoid((2.0, 1.0)), "EllipsoidOrCylinder"),
    "strip": (dom.Strip((0.0, 1.0), -1.0, 1.0), "EllipsoidOrCylinder"),
    "cylinder3d": (dom.CylinderOverEllipsoid((1.0, 2.0), (0, 1), 3), "EllipsoidOrCylinder"),
    "paraboloid": (dom.Paraboloid((1.0,)), "ConvexEpigraphLike"),
    "paraboloid3d": (dom.Paraboloid((1.0, 2.0)), "ConvexEpigraphLike"),
}


def test_null_quadrature_disk():
    res = nq.null_quadrature_test(DISK, [(0.3, 0.2)])
    assert res.max_abs <= 1e-6


def test_null_quadrature_half_plane():
    res = nq.null_quadrature_test(UPPER, [(0.0, 1.0)])
    assert res.max_abs <= 1e-5
    assert res.tail_bound <= 1e-5 / 20 * 1.01


def test_null_quadrature_square_fails():
    res = nq.null_quadrature_test(SQUARE, [(0.3, 0.2), (-0.4, 0.5)])
    assert res.max_abs > 1e-3


def test_null_quadrature_rejects_exterior_center():
    with pytest.raises(quad.DomainError):
        nq.null_quadrature_test(DISK, [(2.0, 0.0)])


def test_null_quadrature_records_every_center_and_alpha():
    res = nq.null_quadrature_test(DISK, [(0.3, 0.2), (0.0, -0.5)])
    assert len(res.values) == 2 * 4
    assert res.l1_scale == max(v[3] for v in res.values)
    d = res.to_dict()
    assert len(d["values"]) == 8 and d["truncation_radius"] == res.truncation_radius


def test_volume_density_examples():
    radii = [2.0, 4.0, 8.0, 16.0, 32.0]
    half = nq.volume_density(dom.HalfSpace((0.0, 1.0), 0.0), radii)
    np.testing.assert_allclose(half.ratios, 0.5, atol=1e-9)
    assert half.limit == pytest.approx(0.5, abs=1e-6)
    ell = nq.volume_density(dom.Ellipsoid((2.0, 1.0)), radii)
    np.testing.assert_allclose(ell.ratios, [2 / r ** 2 for r in radii], rtol=1e-8)
    assert ell.limit <= 1e-3


def test_paraboloid_density_decays_like_inverse_square_root():
    res = nq.volume_density(dom.Paraboloid((1.0,)), nq.DEFAULT_RADII)
    assert res.limit <= 1e-3
    r = np.array(res.radii)
    slope = np.polyfit(np.log(r), np.log(res.ratios), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_volume_density_input_errors():
    with pytest.raises(ValueError):
        nq.volume_density(DISK, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        nq.volume_density(DISK, [1.0, 3.0, 2.0, 4.0])


def test_is_internal_quadratic_examples():
    disk = nq.is_internal_quadratic(DISK, tol=1e-6)
    assert disk.quadratic and disk.max_residual <= 1e-6
    square = nq.is_internal_quadratic(SQUARE)
    assert not square.quadratic
    with pytest.raises(ValueError):
        nq.is_internal_quadratic(DISK, tol=0.0)


@pytest.mark.parametrize("name", sorted(CANONICAL))
def test_classify_canonical_variants(name):
    D, label = CANONICAL[name]
    res = nq.classify(D)
    assert res.label == label
    assert (res.label == "HalfSpaceLike") == (res.density_limit > nq.DENSITY_FLOOR)


def test_classify_square_is_not_quadratic():
    res = nq.classify(SQUARE)
    assert res.label == "NotQuadratic"
    assert res.quadratic_residual > 1e-4


def test_classification_result_validates_label():
    with pytest.raises(ValueError):
        nq.ClassificationResult("Sphere", 0.0, True, 0.0, 1e-4)
    d = nq.classify(DISK).to_dict()
    assert d["schema"] == "classification.v1" and d["label"] == "EllipsoidOrCylinder"


def _dilate(D, f):
    if isinstance(D, dom.Ellipsoid):
        return dom.Ellipsoid(tuple(f * a for a in D.semiaxes), tuple(f * c for c in D.center))
    if isinstance(D, dom.HalfSpace):
        return dom.HalfSpace(D.normal, f * D.offset)
    if isinstance(D, dom.Strip):
        return dom.Strip(D.normal, f * D.lower, f * D.upper)
    if isinstance(D, dom.Box):
        return dom.Box(tuple(f * v for v in D.lower), tuple(f * v for v in D.upper))
    if isinstance(D, dom.Paraboloid):
        # x_axis > sum (x_j / a_j)^2 maps to x_axis > sum (x_j / (a_j sqrt f))^2
        return dom.Paraboloid(tuple(a * math.sqrt(f) for a in D.semiaxes))
    raise TypeError(D)


@pytest.mark.parametrize("name", ["halfspace", "ellipse", "strip", "paraboloid", "square"])
@pytest.mark.parametrize("factor", [0.5, 2.0, 5.0])
def test_label_invariant_under_dilation(name, factor):
    D = SQUARE if name == "square" else CANONICAL[name][0]
    assert nq.classify(_dilate(D, factor)).label == nq.classify(D).label


@pytest.mark.parametrize("D,centers", [(DISK, [(0.3, 0.2)]), (UPPER, [(0.0, 1.0)]),
                                       (dom.Ellipsoid((2.0, 1.0)), [(0.5, 0.3)]),
                                       (dom.Strip((0.0, 1.0), -1.0, 1.0), [(0.0, 0.2)]),
                                       (SQUARE, [(0.3, 0.2)])], ids=["disk", "halfplane", "ellipse", "strip",
                                                                     "square"])
def test_null_quadrature_agrees_with_quadratic_certification(D, centers):
    tol = 1e-5
    nullq = nq.null_quadrature_test(D, centers, tol=tol).max_abs <= tol
    assert nullq == nq.is_internal_quadratic(D, tol=10 * tol).quadratic
    assert nullq == (nq.classify(D).label != "NotQuadratic")
