"""Directions, spherical caps, planar convex domains and their quadrature.

All point sets are numpy arrays whose last axis holds the coordinates, so a
single direction is shape ``(n,)`` and a batch is ``(k, n)``.  Dimensions 2
and 3 are supported throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigError, NumericalError

UNIT_TOL = 1e-12
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

Density = Callable[[np.ndarray], np.ndarray]


def unit(v) -> np.ndarray:
    """Normalize ``v`` along its last axis."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def check_unit(v, tol: float = UNIT_TOL) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    err = np.abs(np.linalg.norm(v, axis=-1) - 1.0)
    if np.any(err > tol):
        raise ValueError(f"vector is not unit length (|norm - 1| = {err.max():.3e})")
    return v


def orthonormal_frame(axis) -> np.ndarray:
    """Rotation matrix whose last column is ``axis``.

    Local coordinates ``u`` map to world coordinates as ``frame @ u``.
    """
    a = unit(axis)
    n = a.shape[0]
    if n == 2:
        return np.array([[a[1], a[0]], [-a[0], a[1]]])
    if n != 3:
        raise ValueError("only dimensions 2 and 3 are supported")
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit(helper - np.dot(helper, a) * a)
    e2 = np.cross(a, e1)
    return np.column_stack([e1, e2, a])


def geodesic_distance(x, y) -> np.ndarray:
    """Great-circle distance between unit vectors (rows of ``x`` and ``y``)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cross = np.linalg.norm(x - y, axis=-1)
    # 2 asin(|x-y|/2) is accurate for nearby points, unlike acos(x.y)
    return 2.0 * np.arcsin(np.clip(cross / 2.0, 0.0, 1.0))


def uniform_density(x: np.ndarray) -> np.ndarray:
    return np.ones(np.asarray(x).shape[:-1])


@dataclass(frozen=True)
class SourceDomain:
    """Spherical cap of directions with an emitted intensity ``density``.

    ``density`` maps an ``(k, n)`` array of directions to ``(k,)`` values;
    ``None`` means the uniform intensity 1.
    """

    axis: np.ndarray
    half_angle: float
    density: Optional[Density] = None
    n: int = 3

    def __post_init__(self):
        axis = unit(np.asarray(self.axis, dtype=float))
        if axis.shape != (self.n,):
            raise ConfigError(f"axis must have {self.n} components", assumption="domain")
        if self.n not in (2, 3):
            raise ConfigError("dimension must be 2 or 3", assumption="domain")
        if not 0.0 < self.half_angle < np.pi / 2 + 1e-15:
            raise ConfigError("half_angle must lie in (0, pi/2]", assumption="domain")
        object.__setattr__(self, "axis", axis)

    @property
    def cos_half_angle(self) -> float:
        return float(np.cos(self.half_angle))

    def area(self) -> float:
        """Solid angle (n=3) or arc length (n=2) of the cap."""
        if self.n == 3:
            return 2.0 * np.pi * (1.0 - np.cos(self.half_angle))
        return 2.0 * self.half_angle

    def f(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.density is None:
            return uniform_density(x)
        return np.asarray(self.density(x), dtype=float)

    def contains(self, x, strict: bool = False) -> np.ndarray:
        c = np.asarray(x, dtype=float) @ self.axis
        return c > self.cos_half_angle if strict else c >= self.cos_half_angle - 1e-15

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Directions distributed uniformly (by solid angle) on the cap."""
        frame = orthonormal_frame(self.axis)
        if self.n == 3:
            z = 1.0 - rng.random(count) * (1.0 - self.cos_half_angle)
            phi = 2.0 * np.pi * rng.random(count)
            r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
            local = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
        else:
            theta = (2.0 * rng.random(count) - 1.0) * self.half_angle
            local = np.column_stack([np.sin(theta), np.cos(theta)])
        return local @ frame.T

    def polar_grid(self, rings: int, segments: int) -> tuple[np.ndarray, np.ndarray]:
        """Directions on concentric rings, including the axis and the rim.

        Returns ``(points, polar_angles)`` with the axis first, then ring by
        ring.  In 2D ``segments`` is ignored and the arc is sampled at
        ``2 * rings + 1`` ordered angles.
        """
        frame = orthonormal_frame(self.axis)
        if self.n == 2:
            theta = np.linspace(-self.half_angle, self.half_angle, 2 * rings + 1)
            local = np.column_stack([np.sin(theta), np.cos(theta)])
            return local @ frame.T, theta
        pts = [np.array([0.0, 0.0, 1.0])]
        angles = [0.0]
        for r in range(1, rings + 1):
            t = self.half_angle * r / rings
            phi = 2.0 * np.pi * np.arange(segments) / segments
            ring = np.column_stack(
                [np.sin(t) * np.cos(phi), np.sin(t) * np.sin(phi), np.full(segments, np.cos(t))]
            )
            pts.extend(ring)
            angles.extend([t] * segments)
        return np.asarray(pts) @ frame.T, np.asarray(angles)


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or weights.shape != (nodes.shape[0],):
            raise ValueError("nodes must be (k, n) and weights (k,)")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


def build_cap_quadrature(domain: SourceDomain, resolution: int) -> QuadratureRule:
    """Equal-weight rule on the cap.

    Nodes sit on a Fibonacci spiral with equal-area latitude bands (n=3) or
    at arc midpoints (n=2); none lies on the rim.
    """
    resolution = int(resolution)
    if resolution < 16:
        raise ConfigError("quadrature resolution must be at least 16", assumption="quadrature")
    i = np.arange(resolution, dtype=float)
    if domain.n == 3:
        z = 1.0 - (1.0 - domain.cos_half_angle) * (i + 0.5) / resolution
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = i * GOLDEN_ANGLE
        local = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        theta = -domain.half_angle + (i + 0.5) * (2.0 * domain.half_angle / resolution)
        local = np.column_stack([np.sin(theta), np.cos(theta)])
    nodes = local @ orthonormal_frame(domain.axis).T
    weights = np.full(resolution, domain.area() / resolution)
    return QuadratureRule(nodes, weights)


def integrate(rule: QuadratureRule, g) -> float:
    """Weighted sum of ``g`` over the rule's nodes.

    ``g`` is either a callable evaluated on the node array or an array of
    node values.
    """
    values = g(rule.nodes) if callable(g) else g
    values = np.broadcast_to(np.asarray(values, dtype=float), rule.weights.shape)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericalError(f"integrand is not finite at node {bad[0]}", index=int(bad[0]))
    return float(np.dot(rule.weights, values))


# --- planar convex domains -------------------------------------------------


def polygon_area(vertices) -> float:
    """Signed shoelace area of a closed polygon given by its vertex list."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_halfplane(vertices, normal, offset) -> np.ndarray:
    """Keep the part of a convex polygon where ``normal . X <= offset``."""
    v = np.asarray(vertices, dtype=float)
    if len(v) == 0:
        return v
    s = v @ np.asarray(normal, dtype=float) - offset
    out = []
    for k in range(len(v)):
        a, b = v[k], v[(k + 1) % len(v)]
        sa, sb = s[k], s[(k + 1) % len(v)]
        if sa <= 0:
            out.append(a)
        if (sa < 0 < sb) or (sb < 0 < sa):
            out.append(a + (sa / (sa - sb)) * (b - a))
    return np.asarray(out).reshape(-1, 2)


@dataclass(frozen=True)
class PlanarDomain:
    """Convex polygon in the plane with density ``f`` (``None`` = uniform).

    Vertices are stored counter-clockwise.
    """

    vertices: np.ndarray
    density: Optional[Density] = None
    n: int = field(default=2, init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ConfigError("polygon needs at least three 2D vertices", assumption="domain")
        if polygon_area(v) < 0:
            v = v[::-1]
        if polygon_area(v) <= 0:
            raise ConfigError("polygon has no area", assumption="domain")
        edges = np.roll(v, -1, axis=0) - v
        turn = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(turn < -1e-12):
            raise ConfigError("polygon is not convex", assumption="domain")
        object.__setattr__(self, "vertices", v)

    @property
    def uniform(self) -> bool:
        return self.density is None

    def area(self) -> float:
        return polygon_area(self.vertices)

    def f(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.density is None:
            return uniform_density(x)
        return np.asarray(self.density(x), dtype=float)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = self.vertices
        edges = np.roll(v, -1, axis=0) - v
        rel = x[:, None, :] - v[None, :, :]
        cross = edges[None, :, 0] * rel[..., 1] - edges[None, :, 1] * rel[..., 0]
        return np.all(cross >= -1e-12, axis=1)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        out = np.empty((0, 2))
        while len(out) < count:
            cand = lo + (hi - lo) * rng.random((2 * (count - len(out)) + 16, 2))
            out = np.vstack([out, cand[self.contains(cand)]])
        return out[:count]


# additive recurrence for the plastic number, well spread in the unit square
_PLASTIC = 1.32471795724474602596
R2_STEP = np.array([1.0 / _PLASTIC, 1.0 / _PLASTIC**2])


def build_polygon_quadrature(domain: PlanarDomain, resolution: int) -> QuadratureRule:
    """Paired-node rule on a square grid clipped to the polygon.

    Interior cells carry two half-weight nodes placed symmetrically about
    the cell center, with offsets from an additive low-discrepancy sequence.
    The pair is exact for affine integrands like the midpoint rule, but no
    two nodes share a coordinate, so grid lines never tie in the mass
    functions.  Cut cells keep one node at the centroid of the clipped piece
    and its exact area, so the weights sum to the polygon area.
    """
    if resolution < 16:
        raise ConfigError("quadrature resolution must be at least 16", assumption="quadrature")
    lo, hi = domain.vertices.min(axis=0), domain.vertices.max(axis=0)
    h = np.sqrt(2.0 * domain.area() / resolution)
    nx = max(1, int(np.ceil((hi[0] - lo[0]) / h)))
    ny = max(1, int(np.ceil((hi[1] - lo[1]) / h)))
    hx, hy = (hi[0] - lo[0]) / nx, (hi[1] - lo[1]) / ny
    v = domain.vertices
    edges = np.roll(v, -1, axis=0) - v
    normals = np.column_stack([edges[:, 1], -edges[:, 0]])
    offsets = np.einsum("ij,ij->i", normals, v)
    nodes, weights = [], []
    for a in range(nx):
        for b in range(ny):
            x0, y0 = lo[0] + a * hx, lo[1] + b * hy
            cell = np.array([[x0, y0], [x0 + hx, y0], [x0 + hx, y0 + hy], [x0, y0 + hy]])
            corners_in = domain.contains(cell)
            if corners_in.all():
                k = len(weights) + 1
                d = (np.mod(0.5 + k * R2_STEP, 1.0) - 0.5) * 0.5 * np.array([hx, hy])
                c = np.array([x0 + hx / 2, y0 + hy / 2])
                nodes.extend([c + d, c - d])
                weights.extend([hx * hy / 2, hx * hy / 2])
                continue
            piece = cell
            for nrm, off in zip(normals, offsets):
                piece = clip_halfplane(piece, nrm, off)
                if len(piece) < 3:
                    break
            area = polygon_area(piece) if len(piece) >= 3 else 0.0
            if area > 1e-14 * hx * hy:
                nodes.append(polygon_centroid(piece))
                weights.append(area)
    return QuadratureRule(np.asarray(nodes), np.asarray(weights))


def polygon_centroid(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)
