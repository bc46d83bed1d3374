"""Scenes, admissibility checks and envelope refractors.

A refractor is the pointwise min (or max) of finitely many building
blocks, one per target.  Each direction is served by the block that
supports the envelope there; the mass a target receives is the source
energy over the directions its block serves.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .blocks import (
    MIN,
    AffineFamily,
    BuildingBlockFamily,
    EllipsoidFamily,
    HyperboloidFamily,
    OvalFamily,
)
from .exceptions import ConfigError
from .geometry import (
    PlanarDomain,
    QuadratureRule,
    SourceDomain,
    build_cap_quadrature,
    geodesic_distance,
    integrate,
    orthonormal_frame,
    unit,
)

MODES = ("near_lt1", "near_gt1", "far_lt1", "far_gt1", "ma_bvp")
CONSERVATION_RTOL = 1e-9
DEFAULT_TIE_TOL = 1e-9


# --- target screens --------------------------------------------------------


@dataclass(frozen=True)
class PlaneScreen:
    """Hyperplane ``{X : X . normal = offset}``."""

    normal: np.ndarray
    offset: float

    kind = "plane"

    def intersect(self, origins, dirs):
        """Ray parameter ``s >= 0`` of the first hit, NaN when the ray misses."""
        denom = dirs @ self.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (self.offset - origins @ self.normal) / denom
        return np.where((np.abs(denom) > 1e-15) & (s >= 0), s, np.nan)

    def to_dict(self):
        return {"type": "plane", "normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True)
class SphereScreen:
    """Sphere ``{X : |X - center| = radius}``."""

    center: np.ndarray
    radius: float

    kind = "sphere"

    def intersect(self, origins, dirs):
        d = origins - self.center
        bq = np.einsum("ij,ij->i", d, dirs)
        cq = np.einsum("ij,ij->i", d, d) - self.radius**2
        disc = bq * bq - cq
        with np.errstate(invalid="ignore"):
            root = np.sqrt(disc)
        s_far = -bq + root
        s_near = -bq - root
        s = np.where(s_near >= 0, s_near, s_far)
        return np.where((disc >= 0) & (s >= 0), s, np.nan)

    def to_dict(self):
        return {"type": "sphere", "center": self.center.tolist(), "radius": self.radius}


Screen = Union[PlaneScreen, SphereScreen]


def screen_from_dict(d: dict) -> Screen:
    kind = d.get("type")
    if kind == "plane":
        return PlaneScreen(unit(d["normal"]), float(d["offset"]))
    if kind == "sphere":
        return SphereScreen(np.asarray(d["center"], dtype=float), float(d["radius"]))
    raise ConfigError(f"unsupported screen type {kind!r}; only plane and sphere screens are handled", assumption="screen")


def infer_plane(points, prefer=None) -> Optional[PlaneScreen]:
    """Hyperplane through all ``points``, or None if they span the space.

    When the points under-determine the plane, its normal is taken as close
    as possible to ``prefer`` (default: the mean point direction).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]
    diffs = pts[1:] - pts[0]
    scale = max(1.0, float(np.abs(pts).max()))
    if len(diffs):
        _, s, vt = np.linalg.svd(diffs, full_matrices=True)
        rank = int(np.sum(s > 1e-10 * scale))
    else:
        vt, rank = np.eye(n), 0
    if rank >= n:
        return None
    span = vt[:rank]
    pref = unit(pts.mean(axis=0)) if prefer is None else unit(prefer)
    if rank == n - 1:
        normal = vt[n - 1]
    else:
        normal = pref - span.T @ (span @ pref)
        if np.linalg.norm(normal) < 1e-12:
            normal = vt[rank]
        normal = unit(normal)
    if normal @ pref < 0:
        normal = -normal
    offset = float(np.mean(pts @ normal))
    return PlaneScreen(normal, offset)


# --- scenes ----------------------------------------------------------------


@dataclass
class SceneConfig:
    """Everything needed to pose one design problem.

    ``targets`` are focus points (near field), unit directions (far field)
    or slopes (``ma_bvp``).  ``density_grid`` optionally replaces the
    discrete targets with a weighted point cloud describing a continuous
    target density; ``targets``/``weights`` then hold the cloud itself.
    """

    kappa: float
    domain: Union[SourceDomain, PlanarDomain]
    targets: np.ndarray
    weights: np.ndarray
    mode: str
    r0: Optional[float] = None
    tau: Optional[float] = None
    delta: float = 0.0
    screen: Optional[Screen] = None
    density_grid: bool = False
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.kappa = float(self.kappa)
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}", assumption="mode")

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def near_field(self) -> bool:
        return self.mode.startswith("near")

    @property
    def far_field(self) -> bool:
        return self.mode.startswith("far")

    def total_energy(self, rule: Optional[QuadratureRule] = None) -> float:
        """Source energy: the integral of ``f`` over the domain."""
        if isinstance(self.domain, PlanarDomain) and self.domain.uniform:
            return self.domain.area()
        if isinstance(self.domain, SourceDomain) and self.domain.density is None:
            return self.domain.area()
        if rule is None:
            rule = default_rule(self.domain)
        return integrate(rule, self.domain.f)

    def family(self) -> BuildingBlockFamily:
        if self.mode in ("near_lt1", "near_gt1"):
            sup = float(np.max(np.linalg.norm(self.targets, axis=1)))
            return OvalFamily(self.kappa, float(self.r0), sup)
        if self.mode == "far_lt1":
            return EllipsoidFamily(self.kappa)
        if self.mode == "far_gt1":
            return HyperboloidFamily(self.kappa, self.delta)
        return AffineFamily()

    def effective_screen(self) -> Optional[Screen]:
        if self.screen is not None or not self.near_field:
            return self.screen
        return infer_plane(self.targets, prefer=self.domain.axis)


def default_rule(domain, resolution: int = 20000) -> QuadratureRule:
    if isinstance(domain, PlanarDomain):
        from .geometry import build_polygon_quadrature

        return build_polygon_quadrature(domain, resolution)
    return build_cap_quadrature(domain, resolution)


@dataclass
class ValidationReport:
    mode: str
    checks: dict
    warnings: list = field(default_factory=list)

    def lines(self):
        out = [f"mode: {self.mode}"]
        out += [f"{name}: ok ({detail})" for name, detail in self.checks.items()]
        out += [f"warning: {w}" for w in self.warnings]
        return out


def _min_cos_over_cap(domain: SourceDomain, dirs):
    """Exact min over the closed cap of ``x . d`` for unit ``d`` (row-wise)."""
    c = np.clip(np.atleast_2d(dirs) @ domain.axis, -1.0, 1.0)
    ang = np.arccos(c) + domain.half_angle
    return np.cos(np.minimum(ang, np.pi))


def _max_cos_over_cap(domain: SourceDomain, d):
    ang = np.arccos(np.clip(float(np.asarray(d) @ domain.axis), -1.0, 1.0))
    return float(np.cos(max(0.0, ang - domain.half_angle)))


def _argmin_witness(domain: SourceDomain, d):
    """Cap point realizing the minimum of ``x . d`` (for error messages)."""
    d = np.asarray(d, dtype=float)
    a = domain.axis
    perp = d - (d @ a) * a
    if np.linalg.norm(perp) < 1e-14:
        perp = orthonormal_frame(a)[:, 0]
    perp = unit(perp)
    return np.cos(domain.half_angle) * a - np.sin(domain.half_angle) * perp


def _fail(msg, assumption, witness=None):
    raise ConfigError(f"{assumption} violated: {msg}", assumption=assumption, witness=witness)


def check_conservation(scene: SceneConfig, rule=None) -> float:
    omega = scene.total_energy(rule)
    total = float(scene.weights.sum())
    if np.any(scene.weights < 0) or not np.all(np.isfinite(scene.weights)):
        _fail("target weights must be finite and non-negative", "conservation")
    rel = abs(total - omega) / omega
    if rel > CONSERVATION_RTOL:
        _fail(f"sum of weights {total:.12g} differs from source energy {omega:.12g} (relative {rel:.3e})", "conservation")
    return rel


def _check_ray_uniqueness(scene: SceneConfig, assumption: str):
    """Rays from the cone ``Q_r0`` must meet the target screen at most once."""
    dom, r0 = scene.domain, float(scene.r0)
    screen = scene.effective_screen()
    if screen is None:
        _fail("targets do not lie on a plane and no sphere screen is given", assumption)
    if screen.kind == "plane":
        pts = scene.targets @ screen.normal - screen.offset
        if np.max(np.abs(pts)) > 1e-9 * max(1.0, abs(screen.offset)):
            _fail("targets are not on the declared plane screen", assumption)
        c = screen.offset
        if c == 0:
            hit = _min_cos_over_cap(dom, screen.normal)[0] <= 0 <= _max_cos_over_cap(dom, screen.normal)
        else:
            d = screen.normal if c > 0 else -screen.normal
            hit = _max_cos_over_cap(dom, d) * r0 >= abs(c)
        if hit:
            _fail("the target plane intersects the cone Q_r0", assumption, witness=screen.to_dict())
        return "target plane misses the cone Q_r0"
    ctr = screen.center
    dist = np.linalg.norm(scene.targets - ctr, axis=1) - screen.radius
    if np.max(np.abs(dist)) > 1e-9 * screen.radius:
        _fail("targets are not on the declared sphere screen", assumption)
    cn = float(np.linalg.norm(ctr))
    min_dot = cn * float(_min_cos_over_cap(dom, unit(ctr))[0]) if cn > 0 else 0.0
    far2 = max(cn * cn, r0 * r0 - 2 * r0 * min_dot + cn * cn)
    if far2 >= screen.radius**2:
        _fail("the cone Q_r0 is not strictly inside the sphere screen", assumption, witness=screen.to_dict())
    return "cone Q_r0 lies inside the sphere screen"


def validate_scene(scene: SceneConfig, rule: Optional[QuadratureRule] = None) -> ValidationReport:
    """Check the standing assumptions of the scene's mode.

    Raises ConfigError naming the violated assumption (``H1``..``H4``,
    ``far-field``, ``domain``, ``conservation``) with a witness.
    """
    checks: dict = {}
    k = scene.kappa
    if scene.targets.shape[0] < 1:
        _fail("at least one target is required", "targets")
    if scene.weights.shape[0] != scene.targets.shape[0]:
        _fail("one weight per target is required", "targets")
    if scene.targets.shape[1] != scene.n:
        _fail("targets have the wrong dimension", "targets")
    if scene.mode == "ma_bvp":
        if not isinstance(scene.domain, PlanarDomain):
            _fail("ma_bvp needs a planar convex source domain", "domain")
        if len(np.unique(np.round(scene.targets, 14), axis=0)) != len(scene.targets):
            _fail("target slopes must be distinct", "targets")
        checks["conservation"] = f"relative error {check_conservation(scene, rule):.2e}"
        return ValidationReport(scene.mode, checks)

    if not isinstance(scene.domain, SourceDomain):
        _fail("this mode needs a spherical cap source domain", "domain")
    dom = scene.domain
    if scene.mode in ("near_lt1", "far_lt1") and not 0 < k < 1:
        _fail(f"mode {scene.mode} needs 0 < kappa < 1", "mode")
    if scene.mode in ("near_gt1", "far_gt1") and not k > 1:
        _fail(f"mode {scene.mode} needs kappa > 1", "mode")

    if scene.far_field:
        m = scene.targets
        if np.max(np.abs(np.linalg.norm(m, axis=1) - 1)) > 1e-12:
            _fail("far-field targets must be unit directions", "far-field")
        lows = _min_cos_over_cap(dom, m)
        bound = k if k < 1 else 1 / k + scene.delta
        if k > 1 and scene.delta <= 0:
            _fail("far-field kappa > 1 needs a positive margin delta", "far-field")
        i = int(np.argmin(lows))
        if lows[i] < bound:
            _fail(
                f"x . m = {lows[i]:.6f} < {bound:.6f} for target {i}",
                "far-field",
                witness=(_argmin_witness(dom, m[i]).tolist(), m[i].tolist()),
            )
        checks["far-field"] = f"min x . m = {lows.min():.6f} >= {bound:.6f}"
        checks["conservation"] = f"relative error {check_conservation(scene, rule):.2e}"
        return ValidationReport(scene.mode, checks)

    tau, r0 = scene.tau, scene.r0
    if tau is None or r0 is None:
        _fail("near-field scenes need tau and r0", "H1" if k < 1 else "H3")
    norms = np.linalg.norm(scene.targets, axis=1)
    if np.any(norms <= 0):
        _fail("targets must not contain the origin", "H1" if k < 1 else "H3")
    dirs = scene.targets / norms[:, None]
    lows = _min_cos_over_cap(dom, dirs)
    i = int(np.argmin(lows))
    witness = (_argmin_witness(dom, dirs[i]).tolist(), scene.targets[i].tolist())
    if k < 1:
        if not 0 < tau < 1 - k:
            _fail(f"tau = {tau} must lie in (0, 1 - kappa) = (0, {1 - k:.6g})", "H1")
        if lows[i] < k + tau:
            _fail(f"x . P/|P| = {lows[i]:.6f} < kappa + tau = {k + tau:.6f} for target {i}", "H1", witness)
        checks["H1"] = f"min x . P/|P| = {lows[i]:.6f} >= {k + tau:.6f}"
        bound = tau * norms.min() / (1 + k)
        if not 0 < r0 <= bound * (1 + 1e-12):
            _fail(f"r0 = {r0} must lie in (0, {bound:.6g}]", "H2")
        checks["H2"] = f"r0 = {r0} <= {bound:.6g}; " + _check_ray_uniqueness(scene, "H2")
    else:
        if not 0 < tau < 1 - 1 / k:
            _fail(f"tau = {tau} must lie in (0, 1 - 1/kappa) = (0, {1 - 1 / k:.6g})", "H3")
        if lows[i] < 1 / k + tau:
            _fail(f"x . P/|P| = {lows[i]:.6f} < 1/kappa + tau = {1 / k + tau:.6f} for target {i}", "H3", witness)
        checks["H3"] = f"min x . P/|P| = {lows[i]:.6f} >= {1 / k + tau:.6f}"
        bound = k * k * tau * tau / (4 * (k - 1) ** 2) * norms.min()
        if not 0 < r0 < bound:
            _fail(f"r0 = {r0} must lie in (0, {bound:.6g})", "H4")
        checks["H4"] = f"r0 = {r0} < {bound:.6g}; " + _check_ray_uniqueness(scene, "H4")
    checks["conservation"] = f"relative error {check_conservation(scene, rule):.2e}"
    return ValidationReport(scene.mode, checks)


# --- envelope refractors ---------------------------------------------------


@dataclass
class PolyBlockRefractor:
    """Envelope of one block per target.

    ``radius`` is the envelope value (a polar radius, or ``u(x)`` for the
    affine family).  Ties between blocks go to the smaller index.
    """

    family: BuildingBlockFamily
    targets: np.ndarray
    params: np.ndarray
    domain: Union[SourceDomain, PlanarDomain]

    def __post_init__(self):
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        self.params = np.asarray(self.params, dtype=float).reshape(-1)
        if self.params.shape[0] != self.targets.shape[0]:
            raise ValueError("one parameter per target is required")
        self._y2 = np.einsum("ij,ij->i", self.targets, self.targets)

    @property
    def size(self) -> int:
        return self.targets.shape[0]

    def block_values(self, x) -> np.ndarray:
        """``(k, N)`` matrix of block values at directions ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        dots = x @ self.targets.T
        return self.family.block_from_dot(dots, self._y2[None, :], self.params[None, :])

    def assign(self, x) -> np.ndarray:
        """Index of the supporting block at each direction (ties to the smallest)."""
        return np.argmin(self.family.canonical(self.block_values(x)), axis=1)

    def radius(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = self.family.canonical(self.block_values(x))
        v = c.min(axis=1)
        v = np.where(np.isinf(v), np.nan, v)
        out = v if self.family.envelope == MIN else -v
        return out[0] if x.ndim == 1 else out

    def surface(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.radius(x)[:, None] * x

    def refractor_map(self, x, tie_tol: float = DEFAULT_TIE_TOL):
        """Indices of all blocks within ``tie_tol`` (relative) of the envelope.

        Returns a set for a single direction, a list of sets for a batch.
        """
        x = np.asarray(x, dtype=float)
        vals = self.block_values(np.atleast_2d(x))
        rho = self.radius(np.atleast_2d(x))
        close = np.abs(vals - rho[:, None]) <= tie_tol * np.abs(rho[:, None])
        sets = [set(np.flatnonzero(row).tolist()) for row in close]
        return sets[0] if x.ndim == 1 else sets

    def measure(self, rule: QuadratureRule, f_values=None) -> np.ndarray:
        """Energy delivered to each target by the quadrature rule."""
        if f_values is None:
            f_values = self.domain.f(rule.nodes)
        idx = self.assign(rule.nodes)
        return np.bincount(idx, weights=rule.weights * f_values, minlength=self.size)

    def normal(self, x) -> np.ndarray:
        """Normal of the supporting block at each surface point."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = self.assign(x)
        return self.family.normal(self.surface(x), self.targets[idx])

    def check(self, rule: QuadratureRule, r0: Optional[float] = None) -> None:
        """Raise ConfigError unless the envelope is finite, positive and inside ``Q_r0``."""
        rho = self.radius(rule.nodes)
        if not np.all(np.isfinite(rho)):
            bad = int(np.flatnonzero(~np.isfinite(rho))[0])
            raise ConfigError("envelope undefined at a domain node", assumption="refractor", witness=rule.nodes[bad].tolist())
        if self.family.planar:
            return
        if r0 is not None:
            if rho.min() < 1e-9 * r0:
                raise ConfigError("refractor degenerates toward the origin", assumption="refractor")
            if isinstance(self.family, OvalFamily) and rho.max() > r0 * (1 + 1e-9):
                raise ConfigError("refractor leaves the cone Q_r0", assumption="refractor")
        if isinstance(self.family, OvalFamily) and self.family.kappa > 1:
            # every supporting oval must see the whole domain
            if np.any(np.isnan(self.block_values(rule.nodes))):
                raise ConfigError("domain not inside every oval aperture", assumption="refractor")

    def lipschitz_probe(self, samples: int = 2000, seed: int = 0, step: float = 1e-4) -> float:
        """Empirical Lipschitz constant of the envelope w.r.t. geodesic distance.

        Each sample pairs a random direction with nearby directions along
        random tangents, plus one long-range random partner.
        """
        if not isinstance(self.domain, SourceDomain):
            raise ValueError("lipschitz_probe needs a spherical domain")
        rng = np.random.default_rng(seed)
        dom = self.domain
        x = dom.sample(samples, rng)
        tang = rng.standard_normal(x.shape)
        tang -= np.einsum("ij,ij->i", tang, x)[:, None] * x
        tang /= np.linalg.norm(tang, axis=1, keepdims=True)
        y_near = unit(x + step * tang)
        y_far = dom.sample(samples, rng)
        ratios = []
        for y in (y_near, y_far):
            keep = dom.contains(y)
            d = geodesic_distance(x[keep], y[keep])
            ok = d > 0
            diff = np.abs(self.radius(x[keep][ok]) - self.radius(y[keep][ok]))
            ratios.append(diff / d[ok])
        return float(np.nanmax(np.concatenate(ratios)))


def radius(refr: PolyBlockRefractor, x):
    return refr.radius(x)


def refractor_map(refr: PolyBlockRefractor, x, tie_tol: float = DEFAULT_TIE_TOL):
    return refr.refractor_map(x, tie_tol)


def refractor_measure(refr: PolyBlockRefractor, rule: QuadratureRule) -> np.ndarray:
    return refr.measure(rule)


def lipschitz_probe(refr: PolyBlockRefractor, samples: int = 2000, seed: int = 0) -> float:
    return refr.lipschitz_probe(samples, seed)
