import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import Polygon, box

from refractor_forge.blocks import AffineFamily
from refractor_forge.exceptions import ConfigError, InfeasibleAnchor, NonConvergence
from refractor_forge.geometry import PlanarDomain, build_cap_quadrature
from refractor_forge.refractor import SceneConfig
from refractor_forge.solver import (
    QuadratureMasses,
    SolveOptions,
    anchor_interval,
    check_monotone,
    cluster_equal_mass,
    solve,
    solve_dirac,
    solve_general,
    solve_second_bvp,
)

from scenarios import cap, disk_cloud, mid_anchor, near_scene, solved

SQUARE = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])


def symmetric_pair(kappa):
    dom = cap()
    t = np.array([[0.4, 0.0, 5.0], [-0.4, 0.0, 5.0]])
    w = np.full(2, dom.area() / 2)
    mode = "near_lt1" if kappa < 1 else "near_gt1"
    return SceneConfig(kappa, dom, t, w, mode, r0=0.6 if kappa < 1 else 0.4, tau=0.2)


@pytest.mark.parametrize("kappa", [2 / 3, 1.5])
def test_symmetric_pair_gets_equal_parameters(kappa):
    scene = symmetric_pair(kappa)
    lo, hi = anchor_interval(scene.family(), scene.targets[0])
    refr, rep = solve_dirac(scene, opts=SolveOptions(b1=0.5 * (lo + hi), mass_tol=1e-4))
    assert rep.max_deficit <= 1e-4 * scene.domain.area()
    # mirror symmetry: the second oval must match the anchor
    assert abs(rep.params[1] - rep.params[0]) < 1e-3 * (hi - lo)


@pytest.mark.parametrize("kappa", [2 / 3, 1.5])
def test_five_targets_converge(kappa):
    scene, refr, rep = solved(kappa)
    om = scene.domain.area()
    assert rep.converged and rep.max_deficit <= 1e-3 * om
    # no target other than the anchor ever exceeds its weight
    assert np.all(rep.masses[1:] <= rep.weights[1:] + 1e-15)
    rule = build_cap_quadrature(scene.domain, 20000)
    assert np.allclose(refr.measure(rule), rep.masses, atol=1e-15 * om)
    refr.check(rule, scene.r0)
    assert rep.history[-1] == pytest.approx(rep.max_deficit)


def test_determinism():
    a = solved(2 / 3)[2]
    b = solved(2 / 3)[2]
    assert np.array_equal(a.params, b.params) and a.evaluations == b.evaluations


@pytest.mark.parametrize("kappa", [2 / 3, 1.5])
def test_monotone_in_anchor(kappa):
    scene = near_scene(kappa)
    lo, hi = anchor_interval(scene.family(), scene.targets[0])
    opts = SolveOptions(b1=0.5 * (lo + hi))
    rep = check_monotone(scene, opts=opts, delta_b1=0.02 * (hi - lo))
    assert rep.ordered and rep.min_gap >= 0
    same = check_monotone(scene, opts=opts, delta_b1=0.0)
    assert np.array_equal(same.params_low, same.params_high)


def test_infeasible_anchor():
    scene = near_scene(2 / 3)
    lo, hi = anchor_interval(scene.family(), scene.targets[0])
    with pytest.raises(InfeasibleAnchor) as info:
        solve_dirac(scene, opts=SolveOptions(b1=hi + 1e-3))
    assert info.value.interval == (lo, hi)


def test_iteration_cap():
    scene = near_scene(2 / 3)
    with pytest.raises(NonConvergence) as info:
        solve_dirac(scene, opts=SolveOptions(b1=mid_anchor(scene), max_iters=1))
    assert len(info.value.history) >= 1


def test_options_validation():
    with pytest.raises(ConfigError):
        SolveOptions(mass_tol=0.5)
    with pytest.raises(ConfigError):
        SolveOptions(resolution=4)
    opts = SolveOptions.from_dict({"mass_tol": 1e-4, "unknown": 1})
    assert opts.mass_tol == 1e-4 and SolveOptions.from_dict(opts.to_dict()) == opts


def test_exact_step_agrees_with_mass_function():
    scene = near_scene(2 / 3)
    rule = build_cap_quadrature(scene.domain, 5000)
    fam = scene.family()
    oracle = QuadratureMasses(fam, scene.targets, rule.nodes, rule.weights)
    b0 = mid_anchor(scene)
    params = np.array([b0] + [fam.interval(y)[1] - 1e-9 for y in scene.targets[1:]])
    # start: everything goes to the anchor
    assert oracle.masses(params)[0] == pytest.approx(rule.total_weight)
    g = 0.3 * rule.total_weight
    band = 2 * rule.weights[0]
    t, m = oracle.exact_step(2, params, g, band)
    assert g - band <= m <= g
    moved = params.copy()
    moved[2] = t
    assert oracle.masses(moved)[2] == pytest.approx(m)
    assert oracle.coordinate(2, params)(t) == pytest.approx(m)


def test_second_bvp_bisector():
    dom = PlanarDomain(SQUARE + 0.5)
    refr, rep = solve_second_bvp(dom, np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5]))
    # u = max(-x + b1, x + b2) must switch at x = 1/2, so b1 - b2 = 1
    assert rep.params[0] - rep.params[1] == pytest.approx(1.0, abs=1e-7)
    assert refr.assign(np.array([[0.49, 0.3], [0.51, 0.7]])).tolist() == [0, 1]


def _cells(slopes, params):
    out = []
    for i in range(len(slopes)):
        cell = box(-0.5, -0.5, 0.5, 0.5)
        for j in range(len(slopes)):
            if j == i:
                continue
            d = slopes[j] - slopes[i]
            c = params[i] - params[j]
            # half-plane x . d <= c as a large polygon
            n = d / np.linalg.norm(d)
            o = c / np.linalg.norm(d)
            t = np.array([-n[1], n[0]])
            big = 50.0
            cell = cell.intersection(
                Polygon([o * n + big * t, o * n - big * t, o * n - big * t - big * n, o * n + big * t - big * n])
            )
        out.append(cell.area)
    return np.array(out)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=3, max_size=5, unique=True), st.integers(0, 10**6))
def test_second_bvp_matches_shapely(slopes, seed):
    slopes = np.array(slopes)
    d = np.linalg.norm(slopes[:, None] - slopes[None], axis=2) + np.eye(len(slopes))
    if d.min() < 0.2:
        return
    w = np.random.default_rng(seed).random(len(slopes)) + 0.2
    w = w / w.sum()
    refr, rep = solve_second_bvp(PlanarDomain(SQUARE), slopes, w)
    assert np.allclose(_cells(slopes, rep.params), w, atol=2e-7)


def test_ma_bvp_via_scene_dispatch():
    dom = PlanarDomain(SQUARE)
    scene = SceneConfig(2.0, dom, np.array([[-1.0, 0.0], [1.0, 0.2], [0.1, 1.0]]), np.array([0.3, 0.45, 0.25]), "ma_bvp")
    refr, rep = solve(scene, SolveOptions(mass_tol=1e-7))
    assert isinstance(refr.family, AffineFamily)
    assert np.allclose(rep.masses, scene.weights, atol=1e-7)


def test_ma_bvp_with_linear_density_uses_quadrature():
    dom = PlanarDomain(SQUARE, density=lambda x: 1.0 + 0.5 * x[:, 0])
    scene = SceneConfig(2.0, dom, np.array([[-1.0, 0.0], [1.0, 0.0]]), np.array([0.5, 0.5]), "ma_bvp")
    refr, rep = solve(scene, SolveOptions(mass_tol=1e-3, resolution=40000))
    # heavier on the right, so the switch line moves right of x = 0
    split = -(rep.params[1] - rep.params[0]) / 2
    assert split > 0.0
    # left mass int_{-1/2}^{s} (1 + x/2) dx = 1/2  <=>  s^2/4 + s - 1/16 = 0
    exact = 2 * (np.sqrt(1.0625) - 1)
    assert split == pytest.approx(exact, abs=2e-3)


@pytest.mark.parametrize("kappa", [2 / 3, 1.5])
def test_far_field_solves(kappa):
    dom = cap()
    m = np.array([[0.0, 0.0, 1.0], [0.08, 0.0, 1.0], [0.0, -0.08, 1.0]])
    m = m / np.linalg.norm(m, axis=1, keepdims=True)
    w = np.array([0.5, 0.3, 0.2]) * dom.area()
    mode = "far_lt1" if kappa < 1 else "far_gt1"
    delta = 0.0 if kappa < 1 else 0.05
    if kappa < 1:
        dom = cap(np.deg2rad(30))
        w = np.array([0.5, 0.3, 0.2]) * dom.area()
    scene = SceneConfig(kappa, dom, m, w, mode, delta=delta)
    refr, rep = solve(scene, SolveOptions(b1=1.0, mass_tol=1e-4, resolution=80000))
    assert rep.max_deficit <= 1e-4 * dom.area()


def test_stall_names_the_quadrature_limit():
    scene = near_scene(2 / 3)
    with pytest.raises(NonConvergence, match="raise the resolution"):
        solve_dirac(scene, opts=SolveOptions(b1=mid_anchor(scene), mass_tol=1e-4, resolution=1000))


def test_cluster_equal_mass():
    pts = disk_cloud()
    w = np.full(len(pts), 1.0 / len(pts))
    for n in (1, 4, 7, 16):
        c, m, labels = cluster_equal_mass(pts, w, n)
        assert len(c) == n and m.sum() == pytest.approx(1.0)
        assert m.max() - m.min() <= 3.0 / len(pts)
        assert np.array_equal(np.bincount(labels, minlength=n), np.round(m * len(pts)).astype(int))
    with pytest.raises(ConfigError):
        cluster_equal_mass(pts, w, 0)


def test_solve_general_small_schedule():
    dom = cap()
    pts = disk_cloud(side=41)
    w = np.full(len(pts), dom.area() / len(pts))
    scene = SceneConfig(2 / 3, dom, pts, w, "near_lt1", r0=0.6, tau=0.2, density_grid=True)
    X0 = 0.003 * np.array([0.05, 0.02, 1.0]) / np.linalg.norm([0.05, 0.02, 1.0])
    rep = solve_general(scene, [2, 4], X0, SolveOptions(mass_tol=5e-3, resolution=5000))
    assert max(rep.anchor_residuals) <= 1e-8
    assert len(rep.sup_differences) == 1
    x0 = X0 / np.linalg.norm(X0)
    for r in rep.refractors:
        assert r.radius(x0) == pytest.approx(np.linalg.norm(X0), abs=1e-12)
    with pytest.raises(ConfigError):
        solve_general(scene, [2], 10 * X0, SolveOptions(mass_tol=5e-3, resolution=5000))
