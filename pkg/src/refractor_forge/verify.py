"""Independent checks of a designed refractor.

``raytrace`` pushes Monte-Carlo rays through the surface with Snell's law
and bins them on the target screen; it shares no code with the solver's
mass computation beyond the envelope itself.  ``forward_map`` and
``ma_residual`` test the Jacobian equation satisfied by a smooth refractor
that sends rays onto the plane ``x_n = 0``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .blocks import AffineFamily
from .exceptions import ConfigError
from .geometry import SourceDomain
from .refractor import DEFAULT_TIE_TOL, PlaneScreen, PolyBlockRefractor
from .snell import phi, refract_batch

BATCH = 200_000


def worker_count() -> int:
    """Thread cap from ``REFRACTOR_THREADS`` (default: up to 4 CPUs)."""
    env = os.environ.get("REFRACTOR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"REFRACTOR_THREADS must be an integer, got {env!r}", assumption="environment")
    return max(1, min(4, os.cpu_count() or 1))


def _map_batches(fn, n_rays: int, seed: int, batch: int = BATCH):
    """Run ``fn(count, rng)`` over batches with independent seeded streams, in order."""
    counts = [batch] * (n_rays // batch)
    if n_rays % batch:
        counts.append(n_rays % batch)
    streams = np.random.SeedSequence(seed).spawn(len(counts))
    rngs = [np.random.default_rng(s) for s in streams]
    workers = worker_count()
    if workers == 1 or len(counts) == 1:
        return [fn(c, r) for c, r in zip(counts, rngs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, counts, rngs))


@dataclass
class RayTraceReport:
    hit_mass: np.ndarray
    miss_mass: float
    tir_mass: float
    tir_count: int
    miss_count: int
    ridge_count: int
    agree_count: int
    n_rays: int
    seed: int
    total_energy: float

    @property
    def traced_energy(self) -> float:
        return float(self.hit_mass.sum() + self.miss_mass + self.tir_mass)

    def to_dict(self) -> dict:
        return {
            "hit_mass": self.hit_mass.tolist(),
            "miss_mass": self.miss_mass,
            "tir_mass": self.tir_mass,
            "tir_count": self.tir_count,
            "miss_count": self.miss_count,
            "ridge_count": self.ridge_count,
            "agree_count": self.agree_count,
            "n_rays": self.n_rays,
            "seed": self.seed,
            "total_energy": self.total_energy,
        }


def _ridge(refr: PolyBlockRefractor, x, tie_tol):
    c = np.sort(refr.family.canonical(refr.block_values(x)), axis=1)
    if c.shape[1] < 2:
        return np.zeros(len(x), dtype=bool)
    return np.abs(c[:, 1] - c[:, 0]) <= tie_tol * np.abs(c[:, 0])


def trace_rays(refr: PolyBlockRefractor, x, screen=None):
    """Surface points, refracted directions and screen hits for directions ``x``.

    Returns ``(X, m, Z, idx)`` where ``m`` rows are NaN under total internal
    reflection and ``Z`` rows are NaN when the screen is missed (or for
    far-field refractors, where no screen exists).
    """
    x = np.atleast_2d(x)
    idx = refr.assign(x)
    X = refr.radius(x)[:, None] * x
    nu = refr.family.normal(X, refr.targets[idx])
    m = refract_batch(x, nu, refr.family.kappa)
    Z = np.full_like(X, np.nan)
    if screen is not None:
        ok = ~np.isnan(m[:, 0])
        s = np.full(len(x), np.nan)
        s[ok] = screen.intersect(X[ok], m[ok])
        Z = X + s[:, None] * m
    return X, m, Z, idx


def raytrace(
    refr: PolyBlockRefractor,
    targets=None,
    n_rays: int = 1_000_000,
    capture_radius: float = 1e-6,
    seed: int = 0,
    screen=None,
    tie_tol: float = DEFAULT_TIE_TOL,
) -> RayTraceReport:
    """Monte-Carlo energy delivered to each target.

    Directions are uniform on the cap and each ray carries energy
    ``f(x) * area / n_rays``.  Near-field hits are decided by distance on
    the screen, far-field hits by the angle between the refracted direction
    and the target direction, both against ``capture_radius``.  For the
    affine family the "ray" is the gradient of the active piece.
    """
    if capture_radius <= 0:
        raise ValueError("capture_radius must be positive")
    targets = refr.targets if targets is None else np.atleast_2d(np.asarray(targets, dtype=float))
    dom = refr.domain
    area = dom.area()
    fam = refr.family
    n_t = len(targets)
    if not fam.far_field and not fam.planar and screen is None:
        raise ConfigError("near-field ray tracing needs a target screen", assumption="screen")

    def run(count, rng):
        x = dom.sample(count, rng)
        w = dom.f(x) * (area / n_rays)
        ridge = _ridge(refr, x, tie_tol)
        if fam.planar:
            hit = refr.assign(x)
            tir = np.zeros(count, dtype=bool)
            agree = np.ones(count, dtype=bool)
        else:
            _, m, Z, idx = trace_rays(refr, x, None if fam.far_field else screen)
            tir = np.isnan(m[:, 0])
            if fam.far_field:
                chord = np.linalg.norm(np.nan_to_num(m)[:, None, :] - targets[None, :, :], axis=2)
                j = np.argmin(chord, axis=1)
                # angle from the chord; arccos of a cosine near 1 loses half the digits
                dist = 2 * np.arcsin(np.minimum(1.0, chord[np.arange(count), j] / 2))
            else:
                d = np.linalg.norm(np.nan_to_num(Z, nan=np.inf)[:, None, :] - targets[None, :, :], axis=2)
                j = np.argmin(d, axis=1)
                dist = d[np.arange(count), j]
            hit = np.where(~tir & (dist <= capture_radius), j, -1)
            agree = hit == idx
        hit_mass = np.bincount(hit[hit >= 0], weights=w[hit >= 0], minlength=n_t)
        miss = (hit < 0) & ~tir
        return (
            hit_mass,
            float(w[miss].sum()),
            float(w[tir].sum()),
            int(tir.sum()),
            int(miss.sum()),
            int(ridge.sum()),
            int(agree.sum()),
            float(w.sum()),
        )

    parts = _map_batches(run, int(n_rays), seed)
    return RayTraceReport(
        hit_mass=np.sum([p[0] for p in parts], axis=0),
        miss_mass=float(sum(p[1] for p in parts)),
        tir_mass=float(sum(p[2] for p in parts)),
        tir_count=sum(p[3] for p in parts),
        miss_count=sum(p[4] for p in parts),
        ridge_count=sum(p[5] for p in parts),
        agree_count=sum(p[6] for p in parts),
        n_rays=int(n_rays),
        seed=int(seed),
        total_energy=float(sum(p[7] for p in parts)),
    )


# --- Jacobian equation for a planar target ---------------------------------


def lift(xp):
    """Point on the upper hemisphere over the projected coordinates ``x'``."""
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    return np.column_stack([xp, np.sqrt(np.maximum(0.0, 1.0 - np.sum(xp * xp, axis=1)))])


def F_coefficient(xp, u, p, kappa):
    """``F(x', u, p)``, the factor with ``Z' = F * D(rho^2)``."""
    xp = np.atleast_2d(xp)
    p = np.atleast_2d(p)
    u = np.asarray(u, dtype=float)
    px = np.sum(p * xp, axis=1)
    G = np.sqrt(u * u + np.sum(p * p, axis=1) - px * px)
    ph = phi(u / G, kappa)
    return 0.5 * ph / (-G + (u + px) * ph)


def _check_smooth(refr, xp, h):
    """Reject points whose stencil touches more than one block."""
    n1 = xp.shape[1]
    pts = [xp]
    for j in range(n1):
        e = np.zeros(n1)
        e[j] = 2 * h
        pts += [xp + e, xp - e]
    idx = np.stack([refr.assign(lift(p)) for p in pts])
    ok = np.all(idx == idx[0], axis=0) & ~_ridge(refr, lift(xp), DEFAULT_TIE_TOL)
    if not np.all(ok):
        raise ConfigError("point on or near a ridge between blocks", assumption="smoothness", witness=xp[~ok][0].tolist())


def radial(refr: PolyBlockRefractor):
    """``rho`` as a function of the projected coordinates."""
    return lambda xp: refr.radius(lift(xp))


def grad_fd(fn, xp, h):
    xp = np.atleast_2d(xp)
    n1 = xp.shape[1]
    out = np.empty_like(xp)
    for j in range(n1):
        e = np.zeros(n1)
        e[j] = h
        out[:, j] = (fn(xp + e) - fn(xp - e)) / (2 * h)
    return out


def hessian_fd(fn, xp, h):
    xp = np.atleast_2d(xp)
    n1 = xp.shape[1]
    H = np.empty((len(xp), n1, n1))
    f0 = fn(xp)
    for i in range(n1):
        ei = np.zeros(n1)
        ei[i] = h
        H[:, i, i] = (fn(xp + ei) - 2 * f0 + fn(xp - ei)) / (h * h)
        for j in range(i + 1, n1):
            ej = np.zeros(n1)
            ej[j] = h
            v = (fn(xp + ei + ej) - fn(xp + ei - ej) - fn(xp - ei + ej) + fn(xp - ei - ej)) / (4 * h * h)
            H[:, i, j] = H[:, j, i] = v
    return H


def forward_map(refr: PolyBlockRefractor, xp, h_fd: float = 1e-4, check: bool = True):
    """Screen point ``Z`` on ``{x_n = 0}`` reached from projected direction ``x'``.

    Uses the closed form ``Z' = F(x', rho, D rho) D(rho^2)`` with ``D rho``
    from central differences.
    """
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    if check:
        _check_smooth(refr, xp, h_fd)
    rho_fn = radial(refr)
    rho = rho_fn(xp)
    Drho = grad_fd(rho_fn, xp, h_fd)
    F = F_coefficient(xp, rho, Drho, refr.family.kappa)
    Zp = (F * 2 * rho)[:, None] * Drho
    return np.column_stack([Zp, np.zeros(len(xp))])


def jacobian_fd(refr, xp, h_fd):
    """``DZ`` by central differences of ``forward_map`` (same step for both levels)."""
    xp = np.atleast_2d(xp)
    n1 = xp.shape[1]
    J = np.empty((len(xp), n1, n1))
    for j in range(n1):
        e = np.zeros(n1)
        e[j] = h_fd
        zp = forward_map(refr, xp + e, h_fd, check=False)[:, :n1]
        zm = forward_map(refr, xp - e, h_fd, check=False)[:, :n1]
        J[:, :, j] = (zp - zm) / (2 * h_fd)
    return J


def ma_operator(refr: PolyBlockRefractor, xp, h_fd: float = 1e-3):
    """Direct evaluation of the Monge-Ampere form of the Jacobian equation.

    Returns ``(det(D^2 rho + A), factor)`` where ``factor`` is
    ``(2 rho)^(n-1) F^(n-2) (F + D rho . D_p F)``, so that their product
    equals ``det DZ``.  Derivatives of ``F`` are taken by central
    differences of its closed form.
    """
    xp = np.atleast_2d(np.asarray(xp, dtype=float))
    k = refr.family.kappa
    n1 = xp.shape[1]
    rho_fn = radial(refr)
    rho = rho_fn(xp)
    Drho = grad_fd(rho_fn, xp, h_fd)
    H = hessian_fd(rho_fn, xp, h_fd)
    F = F_coefficient(xp, rho, Drho, k)
    eps = 1e-6
    Fu = (F_coefficient(xp, rho + eps, Drho, k) - F_coefficient(xp, rho - eps, Drho, k)) / (2 * eps)
    Fp = np.empty_like(xp)
    Fx = np.empty_like(xp)
    for j in range(n1):
        e = np.zeros(n1)
        e[j] = eps
        Fp[:, j] = (F_coefficient(xp, rho, Drho + e, k) - F_coefficient(xp, rho, Drho - e, k)) / (2 * eps)
        Fx[:, j] = (F_coefficient(xp + e, rho, Drho, k) - F_coefficient(xp - e, rho, Drho, k)) / (2 * eps)
    denom = F + np.sum(Drho * Fp, axis=1)
    outer = np.einsum("ki,kj->kij", Drho, Drho)
    A = ((F + rho * Fu)[:, None, None] * outer + rho[:, None, None] * np.einsum("ki,kj->kij", Drho, Fx)) / (rho * denom)[
        :, None, None
    ]
    lhs = np.linalg.det(H + A)
    factor = (2 * rho) ** n1 * F ** (n1 - 1) * denom
    return lhs, factor


@dataclass
class HistogramDensity:
    """Piecewise-bilinear density estimate on a uniform plane grid."""

    origin: np.ndarray
    step: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def __call__(self, Z):
        Z = np.atleast_2d(Z)[:, :2]
        # cell-centered bilinear interpolation
        u = (Z - self.origin) / self.step - 0.5
        i0 = np.floor(u).astype(int)
        fr = u - i0
        nx, ny = self.values.shape
        out = np.zeros(len(Z))
        wsum = np.zeros(len(Z))
        for di in (0, 1):
            for dj in (0, 1):
                ii, jj = i0[:, 0] + di, i0[:, 1] + dj
                w = (fr[:, 0] if di else 1 - fr[:, 0]) * (fr[:, 1] if dj else 1 - fr[:, 1])
                inside = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
                v = np.zeros(len(Z))
                v[inside] = self.values[ii[inside], jj[inside]]
                out += w * v
                wsum += w * inside
        return np.where(wsum > 0.999, out, np.nan)

    def interior(self, Z, min_count: int):
        """Whether the four interpolation cells around ``Z`` are well populated."""
        Z = np.atleast_2d(Z)[:, :2]
        u = (Z - self.origin) / self.step - 0.5
        i0 = np.floor(u).astype(int)
        nx, ny = self.counts.shape
        ok = np.ones(len(Z), dtype=bool)
        for di in (0, 1):
            for dj in (0, 1):
                ii, jj = i0[:, 0] + di, i0[:, 1] + dj
                inside = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
                c = np.zeros(len(Z))
                c[inside] = self.counts[ii[inside], jj[inside]]
                # a cell straddling the footprint edge is partly empty
                ok &= inside & (c >= min_count)
        return ok


def estimate_plane_density(refr: PolyBlockRefractor, n_rays: int = 10_000_000, seed: int = 0, screen=None):
    """Histogram estimate of the screen density ``g`` on ``{x_n = 0}``.

    Cell size follows Scott's rule for a 2D histogram,
    ``h_j = sigma_j * n^(-1/6)``.
    """
    if refr.domain.n != 3:
        raise ConfigError("plane density estimation needs n = 3", assumption="dimension")
    screen = screen or PlaneScreen(np.array([0.0, 0.0, 1.0]), 0.0)
    dom = refr.domain
    area = dom.area()

    def run(count, rng):
        x = dom.sample(count, rng)
        _, _, Z, _ = trace_rays(refr, x, screen)
        return Z[:, :2], dom.f(x) * (area / n_rays)

    parts = _map_batches(run, int(n_rays), seed)
    Z = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    ok = np.all(np.isfinite(Z), axis=1)
    Z, w = Z[ok], w[ok]
    sigma = Z.std(axis=0)
    step = sigma * len(Z) ** (-1.0 / 6.0)
    lo = Z.min(axis=0) - step
    hi = Z.max(axis=0) + step
    nbins = np.ceil((hi - lo) / step).astype(int)
    counts, _, _ = np.histogram2d(Z[:, 0], Z[:, 1], bins=nbins, range=[[lo[0], lo[0] + nbins[0] * step[0]], [lo[1], lo[1] + nbins[1] * step[1]]])
    mass, _, _ = np.histogram2d(
        Z[:, 0], Z[:, 1], bins=nbins, weights=w, range=[[lo[0], lo[0] + nbins[0] * step[0]], [lo[1], lo[1] + nbins[1] * step[1]]]
    )
    return HistogramDensity(lo, step, mass / (step[0] * step[1]), counts)


@dataclass
class ResidualField:
    points: np.ndarray
    Z: np.ndarray
    det_dz: np.ndarray
    g: np.ndarray
    f: np.ndarray
    residual: np.ndarray
    interior: np.ndarray
    h: float
    direct: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def relative(self) -> np.ndarray:
        return np.abs(self.residual) / self.f

    def pass_fraction(self, tol: float = 0.05) -> float:
        rel = self.relative[self.interior]
        return float(np.mean(rel <= tol)) if rel.size else 0.0


def projected_grid(domain: SourceDomain, count: int, margin: float = 0.1):
    """Square grid of projected points whose lifts lie inside the cap, away from its rim."""
    if domain.n != 3:
        raise ConfigError("projected grids need n = 3", assumption="dimension")
    a = domain.axis
    inner = np.cos(domain.half_angle * (1 - margin))
    rim, _ = domain.polar_grid(1, 256)
    lo, hi = rim[:, :2].min(axis=0), rim[:, :2].max(axis=0)
    side = int(np.ceil(np.sqrt(count * 4 / np.pi))) + 2
    u = np.linspace(lo[0], hi[0], side)
    v = np.linspace(lo[1], hi[1], side)
    pts = np.array([[p, q] for p in u for q in v])
    pts = pts[np.sum(pts * pts, axis=1) < 1]
    pts = pts[lift(pts) @ a >= inner]
    return pts


def ma_residual(
    refr: PolyBlockRefractor,
    f: Optional[Callable] = None,
    grid=None,
    h_fd: float = 1e-3,
    g_estimator: Optional[Callable] = None,
    direct: bool = False,
    min_count: int = 200,
) -> ResidualField:
    """Residual of ``det DZ * g(Z) * sqrt(1 - |x'|^2) = f`` on a grid of projected points.

    ``g_estimator`` maps screen points to the target density; by default a
    histogram of traced rays is used.  With ``direct`` the Monge-Ampere form
    is also evaluated and stored for comparison with ``det DZ``.
    """
    if isinstance(refr.family, AffineFamily):
        raise ConfigError("the Jacobian residual applies to refractors", assumption="mode")
    dom = refr.domain
    grid = projected_grid(dom, 400) if grid is None else np.atleast_2d(np.asarray(grid, dtype=float))
    _check_smooth(refr, grid, h_fd)
    if g_estimator is None:
        g_estimator = estimate_plane_density(refr)
    f_fn = f if f is not None else dom.f
    Z = forward_map(refr, grid, h_fd, check=False)
    J = jacobian_fd(refr, grid, h_fd)
    det = np.linalg.det(J)
    g = np.asarray(g_estimator(Z), dtype=float)
    fv = np.asarray(f_fn(lift(grid)), dtype=float)
    # the sign of det DZ only reflects the orientation of the chart
    res = np.abs(det) * g * np.sqrt(1 - np.sum(grid * grid, axis=1)) - fv
    interior = np.isfinite(res)
    if isinstance(g_estimator, HistogramDensity):
        interior &= g_estimator.interior(Z, min_count)
    out = ResidualField(grid, Z, det, g, fv, res, interior, h_fd)
    if direct:
        lhs, factor = ma_operator(refr, grid, h_fd)
        out.direct = lhs * factor
    return out


def dz_convergence(refr: PolyBlockRefractor, xp, steps=(4e-3, 2e-3, 1e-3)):
    """Observed order of ``DZ`` under step halving: ``log2(e1/e2)`` with successive differences."""
    Js = [jacobian_fd(refr, xp, h) for h in steps]
    e = [np.max(np.abs(Js[i + 1] - Js[i]), axis=(1, 2)) for i in range(len(Js) - 1)]
    return np.log2(e[0] / e[1])
