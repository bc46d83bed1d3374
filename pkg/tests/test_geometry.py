import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate as sp_integrate
from shapely.geometry import Polygon

from refractor_forge.exceptions import ConfigError, NumericalError
from refractor_forge.geometry import (
    PlanarDomain,
    QuadratureRule,
    SourceDomain,
    build_cap_quadrature,
    build_polygon_quadrature,
    check_unit,
    clip_halfplane,
    geodesic_distance,
    integrate,
    orthonormal_frame,
    polygon_area,
    polygon_centroid,
    unit,
)

from scenarios import cap


def test_cap_area_matches_polar_integral():
    for a in (0.1, np.deg2rad(20), 1.2):
        expected, _ = sp_integrate.quad(lambda t: 2 * np.pi * np.sin(t), 0, a)
        assert SourceDomain(np.array([0, 0, 1.0]), a).area() == pytest.approx(expected, rel=1e-12)


def test_arc_length_in_2d():
    dom = SourceDomain(np.array([0.0, 1.0]), 0.3, n=2)
    assert dom.area() == pytest.approx(0.6)


def test_quadrature_integrates_height_over_cap():
    a = np.deg2rad(20)
    dom = cap(a)
    rule = build_cap_quadrature(dom, 20000)
    # int cos(theta) dOmega over the cap = pi sin^2(a)
    assert integrate(rule, lambda x: x[:, 2]) == pytest.approx(np.pi * np.sin(a) ** 2, rel=1e-6)
    assert rule.total_weight == pytest.approx(dom.area(), rel=1e-14)
    assert np.all(dom.contains(rule.nodes, strict=True))


def test_quadrature_reference_integrals():
    hemi = SourceDomain(np.array([0, 0, 1.0]), np.pi / 2)
    small = SourceDomain(np.array([0, 0, 1.0]), np.pi / 6)
    cases = [
        (hemi, lambda x: np.ones(len(x)), 2 * np.pi),
        (small, lambda x: np.ones(len(x)), 2 * np.pi * (1 - np.cos(np.pi / 6))),
        (hemi, lambda x: x[:, 2], np.pi),
    ]
    assert cases[1][2] == pytest.approx(0.8418, abs=1e-4)
    for dom, g, exact in cases:
        for n in (1000, 2000, 4000, 10_000):
            # equal-area bands integrate functions linear in the height exactly
            assert integrate(build_cap_quadrature(dom, n), g) == pytest.approx(exact, rel=1e-13)


def test_quadrature_error_shrinks_with_resolution():
    dom = SourceDomain(np.array([0, 0, 1.0]), np.pi / 2)
    exact = 2 * np.pi / 3
    errs = [abs(integrate(build_cap_quadrature(dom, n), lambda x: x[:, 2] ** 2) - exact) for n in (1000, 2000, 4000, 8000)]
    assert all(e1 <= e0 / 2 for e0, e1 in zip(errs, errs[1:]))


def test_quadrature_on_tilted_cap_stays_inside():
    dom = SourceDomain(np.array([1.0, 1.0, 0.3]), 0.25)
    rule = build_cap_quadrature(dom, 500)
    assert np.all(dom.contains(rule.nodes))
    assert np.allclose(np.linalg.norm(rule.nodes, axis=1), 1.0)


def test_quadrature_resolution_floor():
    with pytest.raises(ConfigError):
        build_cap_quadrature(cap(), 8)


def test_integrate_reports_bad_node():
    rule = build_cap_quadrature(cap(), 32)
    vals = np.ones(32)
    vals[7] = np.nan
    with pytest.raises(NumericalError) as info:
        integrate(rule, vals)
    assert info.value.index == 7


def test_quadrature_rule_is_read_only():
    rule = QuadratureRule(np.zeros((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        rule.weights[0] = 3.0
    with pytest.raises(ValueError):
        QuadratureRule(np.zeros((2, 3)), np.array([1.0, -1.0]))


def test_sample_is_uniform_on_cap():
    a = np.deg2rad(30)
    dom = cap(a)
    x = dom.sample(200000, np.random.default_rng(0))
    assert np.all(dom.contains(x))
    # mean height of a uniform cap sample is (1 + cos a)/2
    assert x[:, 2].mean() == pytest.approx((1 + np.cos(a)) / 2, abs=3e-4)
    assert abs(x[:, 0].mean()) < 2e-3


def test_polar_grid_layout():
    dom = cap()
    pts, ang = dom.polar_grid(3, 8)
    assert pts.shape == (25, 3)
    assert np.allclose(pts[0], [0, 0, 1])
    assert ang[-1] == pytest.approx(dom.half_angle)
    pts2, th = SourceDomain(np.array([0.0, 1.0]), 0.4, n=2).polar_grid(5, 0)
    assert len(th) == 11 and np.all(np.diff(th) > 0)


def test_bad_domains_rejected():
    with pytest.raises(ConfigError):
        SourceDomain(np.array([0, 0, 1.0]), 0.0)
    with pytest.raises(ConfigError):
        SourceDomain(np.array([0, 1.0]), 0.2)


def test_frame_is_orthonormal_with_axis_last():
    for axis in ([0, 0, 1.0], [1.0, 0, 0], [0.3, -0.2, 0.9]):
        F = orthonormal_frame(axis)
        assert np.allclose(F.T @ F, np.eye(3), atol=1e-14)
        assert np.allclose(F[:, -1], unit(axis))


def test_check_unit():
    check_unit(np.array([0.6, 0.8]))
    with pytest.raises(ValueError):
        check_unit(np.array([1.0, 1.0]))


@given(st.floats(0.0, 3.1), st.floats(0.0, 6.28))
def test_geodesic_distance_matches_arccos(theta, phi):
    x = np.array([0.0, 0.0, 1.0])
    y = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    assert geodesic_distance(x, y) == pytest.approx(theta, abs=1e-7)


def test_geodesic_distance_small_angles():
    x = np.array([0.0, 0.0, 1.0])
    y = unit(np.array([1e-9, 0.0, 1.0]))
    assert geodesic_distance(x, y) == pytest.approx(1e-9, rel=1e-6)


convex_polys = st.lists(
    st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=3, max_size=12
).map(lambda pts: Polygon(pts).convex_hull)


@settings(max_examples=200, deadline=None)
@given(convex_polys, st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2))
def test_clip_halfplane_matches_shapely(poly, nx, ny, off):
    if poly.geom_type != "Polygon" or poly.area < 1e-6 or nx * nx + ny * ny < 1e-4:
        return
    v = np.asarray(poly.exterior.coords)[:-1]
    piece = clip_halfplane(v, [nx, ny], off)
    # half-plane as a big box clipped polygon, built with shapely only
    big = 100.0
    n = np.array([nx, ny]) / np.hypot(nx, ny)
    o = off / np.hypot(nx, ny)
    t = np.array([-n[1], n[0]])
    half = Polygon([o * n + big * t, o * n - big * t, o * n - big * t - big * n, o * n + big * t - big * n])
    expected = poly.intersection(half).area
    got = abs(polygon_area(piece)) if len(piece) >= 3 else 0.0
    assert got == pytest.approx(expected, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(convex_polys)
def test_polygon_area_and_centroid_match_shapely(poly):
    if poly.geom_type != "Polygon" or poly.area < 1e-6:
        return
    v = np.asarray(poly.exterior.coords)[:-1]
    assert abs(polygon_area(v)) == pytest.approx(poly.area, rel=1e-10)
    c = polygon_centroid(v)
    assert np.allclose(c, [poly.centroid.x, poly.centroid.y], atol=1e-9)


def test_planar_domain_orientation_and_convexity():
    cw = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=float)
    dom = PlanarDomain(cw)
    assert polygon_area(dom.vertices) > 0
    with pytest.raises(ConfigError):
        PlanarDomain(np.array([[0, 0], [2, 0], [1, 0.2], [1, 2]], dtype=float))
    with pytest.raises(ConfigError):
        PlanarDomain(np.array([[0, 0], [1, 1], [2, 2]], dtype=float))


def test_polygon_quadrature_is_exact_for_linear_functions():
    dom = PlanarDomain(np.array([[0, 0], [2, 0], [2.5, 1.5], [0.5, 2]], dtype=float))
    rule = build_polygon_quadrature(dom, 400)
    poly = Polygon(dom.vertices)
    assert rule.total_weight == pytest.approx(poly.area, rel=1e-12)
    # the centroid of each cell integrates affine functions exactly
    assert integrate(rule, lambda x: 3 * x[:, 0] - x[:, 1] + 2) == pytest.approx(
        poly.area * (3 * poly.centroid.x - poly.centroid.y + 2), rel=1e-12
    )


def test_planar_sample_inside():
    dom = PlanarDomain(np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]))
    x = dom.sample(1000, np.random.default_rng(1))
    assert x.shape == (1000, 2)
    assert np.all(np.abs(x) <= 0.5)
