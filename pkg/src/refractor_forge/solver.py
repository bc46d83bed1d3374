"""Semi-discrete refractor solvers.

``solve_dirac`` fixes the parameter of one anchor target and adjusts the
others one coordinate at a time.  It starts from the state in which the
anchor's block serves every direction, then repeatedly takes the target
with the largest mass deficit and bisects its parameter until its mass
just reaches its weight from below.  Growing one block only takes mass
from the others, so no target other than the anchor ever holds more than
its weight, and the anchor holds the surplus.

All families are handled in min-envelope form (see
``BuildingBlockFamily.canonical``), so the same loop serves ovals,
far-field blocks and affine functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .blocks import AffineFamily, BuildingBlockFamily, OvalFamily
from .exceptions import ConfigError, InfeasibleAnchor, NonConvergence
from .geometry import PlanarDomain, QuadratureRule, clip_halfplane, polygon_area
from .refractor import PolyBlockRefractor, SceneConfig, default_rule, validate_scene

BRACKET_STEPS = 200


@dataclass(frozen=True)
class SolveOptions:
    mass_tol: float = 1e-3
    max_iters: int = 20000
    b1: Optional[float] = None
    bisection_tol: float = 1e-13
    seed: int = 0
    resolution: int = 20000
    anchor_index: int = 0

    def __post_init__(self):
        if not 1e-8 < self.mass_tol < 1e-1:
            raise ConfigError("mass_tol must lie in (1e-8, 1e-1)", assumption="solver")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be positive", assumption="solver")
        if self.bisection_tol <= 0:
            raise ConfigError("bisection_tol must be positive", assumption="solver")
        if self.resolution < 16:
            raise ConfigError("resolution must be at least 16", assumption="solver")

    @classmethod
    def from_dict(cls, d: dict) -> "SolveOptions":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class SolveReport:
    params: np.ndarray
    masses: np.ndarray
    weights: np.ndarray
    iterations: int
    evaluations: int
    history: list = field(default_factory=list)
    anchor_index: int = 0
    converged: bool = True

    @property
    def max_deficit(self) -> float:
        return float(np.max(np.abs(self.masses - self.weights)))

    def to_dict(self) -> dict:
        return {
            "params": self.params.tolist(),
            "masses": self.masses.tolist(),
            "weights": self.weights.tolist(),
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "anchor_index": self.anchor_index,
            "converged": self.converged,
            "max_deficit": self.max_deficit,
        }


def anchor_interval(family: BuildingBlockFamily, y) -> tuple[float, float]:
    """Anchor parameters from which the all-mass-to-anchor start exists."""
    if isinstance(family, OvalFamily):
        k, p, r0 = family.kappa, float(np.linalg.norm(y)), family.r0
        if k < 1:
            return k * p, k * p + r0 * (1 - k) ** 2 / (1 + k)
        sigma = (k - 1) * r0**4 / (8 * family.sup_norm**3)
        return k * p - sigma, k * p
    return family.interval(y)


# --- mass oracles ----------------------------------------------------------


class QuadratureMasses:
    """Masses from a fixed quadrature rule.

    The canonical value matrix of the last parameter vector is cached, so a
    coordinate move only re-evaluates one column.
    """

    def __init__(self, family: BuildingBlockFamily, targets, nodes, energies):
        self.family = family
        self.targets = np.asarray(targets, dtype=float)
        self.dots = np.asarray(nodes, dtype=float) @ self.targets.T
        self.y2 = np.einsum("ij,ij->i", self.targets, self.targets)
        self.energies = np.asarray(energies, dtype=float)
        self.total = float(self.energies.sum())
        self.atom = float(self.energies.max())
        self._params = None
        self._c = None
        self._last_col = None

    def column(self, i, t):
        key = (i, float(t))
        if self._last_col is not None and self._last_col[0] == key:
            return self._last_col[1]
        col = self.family.canonical(self.family.block_from_dot(self.dots[:, i], self.y2[i], t))
        self._last_col = (key, col)
        return col

    def matrix(self, params):
        """Canonical value matrix for ``params`` (cached, do not modify)."""
        self._sync(params)
        return self._c

    def _reset(self, params):
        vals = self.family.block_from_dot(self.dots, self.y2[None, :], params[None, :])
        self._c = self.family.canonical(vals)
        self._owner = np.argmin(self._c, axis=1)
        self._best = self._c[np.arange(len(self._c)), self._owner]
        self._params = params

    def _sync(self, params):
        params = np.array(params, dtype=float)
        if self._params is None or self._params.shape != params.shape:
            self._reset(params)
            return
        changed = np.flatnonzero(self._params != params)
        if len(changed) == 0:
            return
        if len(changed) > 1:
            self._reset(params)
            return
        i = int(changed[0])
        col = self.column(i, params[i])
        if np.any(col > self._c[:, i]):
            # the block shrank somewhere: owners may move anywhere
            self._reset(params)
            return
        self._c[:, i] = col
        take = (col < self._best) | ((col == self._best) & (i < self._owner))
        self._owner[take] = i
        mine = self._owner == i
        self._best[mine] = col[mine]
        self._params = params

    def masses(self, params):
        self._sync(params)
        return np.bincount(self._owner, weights=self.energies, minlength=len(self._params))

    def _envelope_of_others(self, i, params):
        self._sync(params)
        env = self._best.copy()
        j = self._owner.copy()
        rows = np.flatnonzero(j == i)
        if len(rows):
            sub = self._c[rows].copy()
            sub[:, i] = np.inf
            jj = np.argmin(sub, axis=1)
            j[rows] = jj
            env[rows] = sub[np.arange(len(rows)), jj]
        return env, j

    def coordinate(self, i, params):
        """Mass of target ``i`` as a function of its own parameter."""
        env, j = self._envelope_of_others(i, params)
        wins_tie = i < j

        def mass(t):
            col = self.column(i, t)
            won = (col < env) | ((col == env) & wins_tie)
            return float(np.dot(self.energies, won))

        return mass

    def exact_step(self, i, params, g, band):
        """Parameter putting the mass of ``i`` in ``[g - band, g]`` in one shot.

        Each node changes hands at the parameter whose block meets the
        envelope of the other blocks there; sorting those thresholds gives
        the mass as a step function of the parameter.  Returns ``None`` when
        the result cannot be confirmed, so the caller can fall back to
        bisection.
        """
        fam = self.family
        env, j = self._envelope_of_others(i, params)
        value = env if fam.envelope == "min" else -env
        with np.errstate(invalid="ignore", divide="ignore"):
            tstar = fam.threshold(self.dots[:, i], self.y2[i], value)
        s = fam.grow_sign
        u = s * tstar
        u = np.where(np.isnan(u), np.inf, u)
        us, cum = _sorted_prefix(u, self.energies, g)
        m = int(np.searchsorted(cum, g, side="right"))
        if m == 0 or not np.isfinite(us[m - 1]):
            return None
        if m < len(us) and np.isfinite(us[m]):
            target = 0.5 * (us[m - 1] + us[m])
        else:
            target = us[m - 1] + 1e-9 * max(1.0, abs(us[m - 1]))
        t_new = s * target
        t_old = params[i]
        lo, hi = fam.interval(self.targets[i])
        if s * t_new <= s * t_old or not lo < t_new < hi:
            return None
        col = self.column(i, t_new)
        won = (col < env) | ((col == env) & (i < j))
        mass = float(np.dot(self.energies, won))
        if not g - band <= mass <= g:
            return None
        return t_new, mass

    def loses_everywhere(self, i, t, j, tj):
        return bool(np.all(self.column(i, t) > self.column(j, tj)))


def _sorted_prefix(u, w, g):
    """Sorted values of ``u`` and cumulative weights, far enough to pass ``g``.

    Only the smallest entries matter; a partial partition avoids sorting the
    whole array when the weight ``g`` is reached early.
    """
    k = len(u)
    want = min(k, int(g / max(float(w.min()), 1e-300)) + 2)
    while want < k:
        idx = np.argpartition(u, want)[: want + 1]
        idx = idx[np.argsort(u[idx], kind="stable")]
        cum = np.cumsum(w[idx])
        if cum[-2] > g:
            return u[idx], cum
        want = min(k, 2 * want)
    order = np.argsort(u, kind="stable")
    return u[order], np.cumsum(w[order])


class PolygonMasses:
    """Exact cell areas of a max-affine function on a convex polygon (f = 1)."""

    def __init__(self, targets, vertices):
        self.targets = np.asarray(targets, dtype=float)
        self.vertices = np.asarray(vertices, dtype=float)
        self.total = polygon_area(self.vertices)
        self.atom = 0.0

    def cell(self, i, params):
        piece = self.vertices
        p, b = self.targets, params
        for j in range(len(b)):
            if j == i:
                continue
            # x . p_j + b_j <= x . p_i + b_i
            piece = clip_halfplane(piece, p[j] - p[i], b[i] - b[j])
            if len(piece) < 3:
                return np.empty((0, 2))
        return piece

    def cell_area(self, i, params):
        piece = self.cell(i, params)
        return polygon_area(piece) if len(piece) >= 3 else 0.0

    def masses(self, params):
        return np.array([self.cell_area(i, params) for i in range(len(params))])

    def coordinate(self, i, params):
        params = np.array(params, dtype=float)

        def mass(t):
            params[i] = t
            return self.cell_area(i, params)

        return mass

    def loses_everywhere(self, i, t, j, tj):
        d = self.targets[i] - self.targets[j]
        return bool(np.all(self.vertices @ d + t < tj))


# --- the coordinate loop ---------------------------------------------------


def _step_toward(t, end, direction, k, scale):
    """Point ``k`` halvings from ``t`` toward a finite ``end``, or ``2^k`` scales past ``t``."""
    if math.isfinite(end):
        return end - (end - t) * 0.5**k
    return t + direction * scale * 2.0**k


class _Counter:
    def __init__(self):
        self.n = 0


def _initial_params(family, oracle, targets, anchor, b_anchor, counter):
    """Every non-anchor block pushed toward its losing end until it serves nothing."""
    n = len(targets)
    params = np.empty(n)
    params[anchor] = b_anchor
    s = family.grow_sign
    for i in range(n):
        if i == anchor:
            continue
        lo, hi = family.interval(targets[i])
        lose_end = lo if s > 0 else hi
        if isinstance(family, OvalFamily) and family.kappa < 1:
            k = family.kappa
            sigma = family.r0 - (b_anchor - k * np.linalg.norm(targets[anchor])) * (1 + k) / (1 - k) ** 2
            t = k * np.linalg.norm(targets[i]) + (family.r0 - sigma) * (1 - k)
        elif math.isfinite(lo) and math.isfinite(hi):
            t = 0.5 * (lo + hi)
        elif math.isfinite(lose_end):
            t = lose_end + (b_anchor - lose_end) if b_anchor != lose_end else lose_end - s
        else:
            t = b_anchor
        scale = max(1.0, abs(t))
        for k in range(BRACKET_STEPS):
            cand = _step_toward(t, lose_end, -s, k, scale) if k else t
            counter.n += 1
            if oracle.loses_everywhere(i, cand, anchor, b_anchor):
                params[i] = cand
                break
        else:
            raise InfeasibleAnchor(
                f"could not find a start where target {anchor} serves every direction",
                interval=anchor_interval(family, targets[anchor]),
            )
    return params


def _raise_coordinate(mass, t, g, band, family, y, bisection_tol, counter):
    """Move ``t`` in the growing direction so that ``mass(t)`` lands in ``[g - band, g]``.

    Returns the new parameter and its mass; never returns a value with
    mass above ``g``.
    """
    s = family.grow_sign
    lo, hi = family.interval(y)
    gain_end = hi if s > 0 else lo
    scale = max(1.0, abs(t))
    t_low, m_low = t, mass(t)
    counter.n += 1
    if m_low >= g - band:
        return t_low, m_low
    t_high = None
    for k in range(1, BRACKET_STEPS):
        cand = _step_toward(t, gain_end, s, k, scale)
        if cand == t_low:
            break
        m = mass(cand)
        counter.n += 1
        if m > g:
            t_high = cand
            break
        t_low, m_low = cand, m
        if m >= g - band:
            return t_low, m_low
    if t_high is None:
        return t_low, m_low
    while abs(t_high - t_low) > bisection_tol * max(1.0, abs(t_low)):
        mid = 0.5 * (t_low + t_high)
        if mid in (t_low, t_high):
            break
        m = mass(mid)
        counter.n += 1
        if m > g:
            # overshoot: keep the feasible side and halve the step
            t_high = mid
        else:
            t_low, m_low = mid, m
            if m >= g - band:
                break
    return t_low, m_low


def solve_semidiscrete(
    family: BuildingBlockFamily,
    targets,
    weights,
    oracle,
    opts: SolveOptions,
    b_anchor: float,
    anchor: int = 0,
) -> SolveReport:
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    g = np.asarray(weights, dtype=float)
    n = len(g)
    omega = oracle.total
    tol = opts.mass_tol * omega
    counter = _Counter()
    if n == 1:
        return SolveReport(np.array([b_anchor]), np.array([omega]), g, 0, 0, [abs(omega - g[0])], anchor)

    params = _initial_params(family, oracle, targets, anchor, b_anchor, counter)
    masses = oracle.masses(params)
    counter.n += 1
    band = max(tol / (2 * (n - 1)), 1.01 * oracle.atom)
    history = [float(np.max(np.abs(masses - g)))]
    stuck: set = set()
    iters = 0
    others = np.array([i for i in range(n) if i != anchor])
    while history[-1] > tol:
        if iters >= opts.max_iters:
            raise NonConvergence(f"no convergence after {iters} coordinate steps", history=history)
        deficit = g[others] - masses[others]
        order = others[np.argsort(-deficit, kind="stable")]
        i = next((j for j in order if j not in stuck and g[j] - masses[j] > band), None)
        if i is None:
            msg = "coordinate moves stalled before reaching mass_tol"
            if (n - 1) * oracle.atom >= tol:
                msg += f"; single quadrature nodes carry {oracle.atom / omega:.2e} of the energy, raise the resolution"
            raise NonConvergence(msg, history=history)
        step = None
        if hasattr(oracle, "exact_step"):
            counter.n += 1
            step = oracle.exact_step(i, params, g[i], band)
        if step is not None:
            t_new, m_new = step
        else:
            mass = oracle.coordinate(i, params)
            t_new, m_new = _raise_coordinate(mass, params[i], g[i], band, family, targets[i], opts.bisection_tol, counter)
        if t_new == params[i]:
            stuck.add(i)
        else:
            stuck.clear()
            params[i] = t_new
            masses = oracle.masses(params)
            counter.n += 1
        iters += 1
        history.append(float(np.max(np.abs(masses - g))))
    return SolveReport(params, masses, g, iters, counter.n, history, anchor)


def _make_oracle(scene: SceneConfig, family: BuildingBlockFamily, rule: Optional[QuadratureRule], opts: SolveOptions):
    dom = scene.domain
    if isinstance(family, AffineFamily) and isinstance(dom, PlanarDomain) and dom.uniform:
        return PolygonMasses(scene.targets, dom.vertices), None
    if rule is None:
        rule = default_rule(dom, opts.resolution)
    energies = rule.weights * dom.f(rule.nodes)
    return QuadratureMasses(family, scene.targets, rule.nodes, energies), rule


def solve_dirac(
    scene: SceneConfig,
    family: Optional[BuildingBlockFamily] = None,
    opts: Optional[SolveOptions] = None,
    rule: Optional[QuadratureRule] = None,
    validate: bool = True,
):
    """Refractor whose masses match the scene weights, with the anchor fixed.

    Returns ``(refractor, report)``.
    """
    opts = opts or SolveOptions.from_dict(scene.solver)
    family = family or scene.family()
    if validate:
        validate_scene(scene, rule)
    a = opts.anchor_index
    if not 0 <= a < len(scene.targets):
        raise ConfigError("anchor_index out of range", assumption="solver")
    lo, hi = anchor_interval(family, scene.targets[a])
    b1 = opts.b1
    if b1 is None:
        b1 = default_anchor(family, scene.targets[a])
    if not lo < b1 < hi:
        raise InfeasibleAnchor(f"anchor b1 = {b1!r} outside the admissible interval ({lo!r}, {hi!r})", interval=(lo, hi))
    oracle, rule = _make_oracle(scene, family, rule, opts)
    report = solve_semidiscrete(family, scene.targets, scene.weights, oracle, opts, float(b1), a)
    refr = PolyBlockRefractor(family, scene.targets, report.params, scene.domain)
    return refr, report


def default_anchor(family: BuildingBlockFamily, y) -> float:
    lo, hi = anchor_interval(family, y)
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    if math.isfinite(lo):
        return lo + 1.0
    return 0.0


def solve_second_bvp(source: PlanarDomain, targets, weights, opts: Optional[SolveOptions] = None):
    """Max-affine ``u(x) = max(x . p_i + b_i)`` whose cells carry the given weights."""
    scene = SceneConfig(kappa=2.0, domain=source, targets=targets, weights=weights, mode="ma_bvp")
    opts = opts or SolveOptions(b1=0.0, mass_tol=1e-7)
    if opts.b1 is None:
        opts = replace(opts, b1=0.0)
    return solve_dirac(scene, AffineFamily(), opts)


def solve(scene: SceneConfig, opts: Optional[SolveOptions] = None, rule=None):
    """Dispatch on ``scene.mode``."""
    opts = opts or SolveOptions.from_dict(scene.solver)
    if scene.mode == "ma_bvp" and opts.b1 is None:
        opts = replace(opts, b1=0.0)
    return solve_dirac(scene, scene.family(), opts, rule)


# --- anchor monotonicity ---------------------------------------------------


@dataclass
class MonotoneReport:
    params_low: np.ndarray
    params_high: np.ndarray
    min_gap: float
    ordered: bool
    violations: list

    def to_dict(self):
        return {
            "params_low": self.params_low.tolist(),
            "params_high": self.params_high.tolist(),
            "min_gap": self.min_gap,
            "ordered": self.ordered,
            "violations": self.violations,
        }


def check_monotone(scene: SceneConfig, family=None, opts: Optional[SolveOptions] = None, delta_b1: float = 0.0, rule=None):
    """Solve at anchors ``b1`` and ``b1 + delta_b1`` and compare.

    Parameters must be ordered componentwise (up to ``bisection_tol``) and
    the envelopes pointwise on the quadrature nodes, in the direction the
    blocks move (so a larger anchor gives a lower surface when blocks
    shrink with their parameter).
    """
    opts = opts or SolveOptions.from_dict(scene.solver)
    family = family or scene.family()
    if rule is None and not family.planar:
        rule = default_rule(scene.domain, opts.resolution)
    b1 = opts.b1 if opts.b1 is not None else default_anchor(family, scene.targets[opts.anchor_index])
    r_lo, rep_lo = solve_dirac(scene, family, replace(opts, b1=b1), rule)
    r_hi, rep_hi = solve_dirac(scene, family, replace(opts, b1=b1 + delta_b1), rule, validate=False)
    sign = 1.0 if delta_b1 >= 0 else -1.0
    slack = opts.bisection_tol * np.maximum(1.0, np.abs(rep_lo.params))
    diff = sign * (rep_hi.params - rep_lo.params)
    violations = [int(i) for i in np.flatnonzero(diff < -slack)]
    nodes = rule.nodes if rule is not None else scene.domain.sample(4096, np.random.default_rng(opts.seed))
    rho_sign = sign if family.increasing else -sign
    gap = float(np.min(rho_sign * (r_hi.radius(nodes) - r_lo.radius(nodes))))
    return MonotoneReport(rep_lo.params, rep_hi.params, gap, not violations, violations)


# --- continuous targets ----------------------------------------------------


def cluster_equal_mass(points, masses, n_clusters: int):
    """Split a weighted point cloud into ``n_clusters`` groups of near-equal mass.

    Recursive bisection at the weighted median along the widest axis.
    Returns ``(centroids, cluster_masses, labels)``; cluster masses sum to
    the total exactly (up to summation order).
    """
    points = np.asarray(points, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if n_clusters < 1 or n_clusters > len(points):
        raise ConfigError("cluster count must lie between 1 and the number of points", assumption="targets")
    labels = np.empty(len(points), dtype=int)
    groups = [(np.arange(len(points)), n_clusters)]
    out = []
    while groups:
        idx, k = groups.pop(0)
        if k == 1:
            out.append(idx)
            continue
        pts = points[idx]
        axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        order = idx[np.argsort(pts[:, axis], kind="stable")]
        k_left = k // 2
        cum = np.cumsum(masses[order])
        target = cum[-1] * k_left / k
        cut = int(np.searchsorted(cum, target))
        # keep enough points on each side for the sub-splits
        cut = min(max(cut + 1, k_left), len(order) - (k - k_left))
        groups.append((order[:cut], k_left))
        groups.append((order[cut:], k - k_left))
    centroids, cmass = [], []
    for c, idx in enumerate(out):
        labels[idx] = c
        w = masses[idx]
        cmass.append(w.sum())
        centroids.append((points[idx] * w[:, None]).sum(axis=0) / w.sum())
    return np.asarray(centroids), np.asarray(cmass), labels


@dataclass
class GeneralReport:
    sizes: list
    refractors: list
    reports: list
    sup_differences: list
    anchor_residuals: list

    def to_dict(self):
        return {
            "sizes": self.sizes,
            "sup_differences": self.sup_differences,
            "anchor_residuals": self.anchor_residuals,
            "params": [r.params.tolist() for r in self.reports],
        }


def anchor_radius_bound(family: BuildingBlockFamily, targets) -> float:
    """Upper bound on ``|X0|`` for anchoring a continuous-target solve."""
    if not isinstance(family, OvalFamily):
        raise ConfigError("anchoring through a point needs near-field ovals", assumption="anchor")
    k, r0 = family.kappa, family.r0
    if k < 1:
        return ((1 - k) / (1 + k)) ** 3 * r0
    sigma = (k - 1) * r0**4 / (8 * family.sup_norm**3)
    return sigma / (k - 1)


def _solve_through(scene, family, opts, rule, x0, r_anchor):
    """Solve so that the envelope passes through ``r_anchor * x0``.

    The anchor moves to whichever target's block supports the envelope at
    ``x0`` and gets the parameter of the block through ``X0``; this repeats
    until the anchor's block is the supporting one.
    """
    X0 = r_anchor * x0
    seen = []
    # the target seen closest to x0 is the likeliest supporter there
    dirs = scene.targets / np.linalg.norm(scene.targets, axis=1, keepdims=True)
    a = int(np.argmax(dirs @ x0))
    for _ in range(len(scene.targets) + 1):
        b = float(family.param_through(X0, scene.targets[a]))
        refr, rep = solve_dirac(scene, family, replace(opts, b1=b, anchor_index=a), rule, validate=False)
        j = int(refr.assign(x0[None, :])[0])
        if j == a or refr.radius(x0) == r_anchor:
            return refr, rep
        seen.append(a)
        if j in seen:
            break
        a = j
    return _solve_through_bisection(scene, family, opts, rule, x0, r_anchor)


def _solve_through_bisection(scene, family, opts, rule, x0, r_anchor):
    """Fallback: bisect the anchor parameter of target 0 on the monotone map b -> rho(x0)."""
    lo, hi = anchor_interval(family, scene.targets[0])
    increasing = family.increasing
    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        refr, rep = solve_dirac(scene, family, replace(opts, b1=mid, anchor_index=0), rule, validate=False)
        r = refr.radius(x0)
        best = (refr, rep)
        if abs(r - r_anchor) <= opts.bisection_tol or hi - lo <= opts.bisection_tol * max(1.0, abs(mid)):
            break
        if (r < r_anchor) == increasing:
            lo = mid
        else:
            hi = mid
    return best


def solve_general(
    scene: SceneConfig,
    sizes: Sequence[int],
    X0,
    opts: Optional[SolveOptions] = None,
    rule: Optional[QuadratureRule] = None,
) -> GeneralReport:
    """Solve for a continuous target density through a chain of discretizations.

    ``scene.targets``/``scene.weights`` describe the density as a weighted
    point cloud.  Each stage clusters it into ``N`` equal-mass atoms and
    solves the discrete problem through the point ``X0``.
    """
    opts = opts or SolveOptions.from_dict(scene.solver)
    validate_scene(scene, rule)
    family = scene.family()
    X0 = np.asarray(X0, dtype=float)
    r_anchor = float(np.linalg.norm(X0))
    bound = anchor_radius_bound(family, scene.targets)
    if not 0 < r_anchor < bound:
        raise ConfigError(f"|X0| = {r_anchor} must lie in (0, {bound:.6g})", assumption="anchor")
    x0 = X0 / r_anchor
    if not scene.domain.contains(x0):
        raise ConfigError("X0 direction lies outside the source domain", assumption="anchor")
    if rule is None:
        rule = default_rule(scene.domain, opts.resolution)
    refrs, reports, residuals = [], [], []
    for n in sizes:
        pts, w, _ = cluster_equal_mass(scene.targets, scene.weights, int(n))
        sub = replace_targets(scene, pts, w)
        refr, rep = _solve_through(sub, sub.family(), opts, rule, x0, r_anchor)
        refrs.append(refr)
        reports.append(rep)
        residuals.append(float(abs(refr.radius(x0) - r_anchor)))
    diffs = [float(np.max(np.abs(b.radius(rule.nodes) - a.radius(rule.nodes)))) for a, b in zip(refrs, refrs[1:])]
    return GeneralReport([int(n) for n in sizes], refrs, reports, diffs, residuals)


def replace_targets(scene: SceneConfig, targets, weights) -> SceneConfig:
    return SceneConfig(
        kappa=scene.kappa,
        domain=scene.domain,
        targets=targets,
        weights=weights,
        mode=scene.mode,
        r0=scene.r0,
        tau=scene.tau,
        delta=scene.delta,
        screen=scene.screen,
        solver=scene.solver,
    )
