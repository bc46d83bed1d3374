"""Cartesian ovals ``|X| + kappa |X - P| = b`` as polar graphs over directions.

A ray leaving the origin along ``x`` meets the refracting branch of the
oval at distance ``h(x)`` and is then refracted straight into the focus
``P``.  Directions where that branch does not exist or would not refract
are outside the aperture; radii there are reported as NaN rather than
raised, because envelope evaluation probes such directions all the time.

The low-level functions take ``t = x . P`` and broadcast over numpy arrays,
so one call can evaluate many ovals at many directions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .snell import check_kappa

DELTA_CLAMP = 1e-14


def _delta(t, p2, b, kappa):
    k2 = kappa * kappa
    d = (b - k2 * t) ** 2 - (1.0 - k2) * (b * b - k2 * p2)
    # roundoff at the aperture rim, where the two roots merge
    return np.where((d < 0) & (d >= -DELTA_CLAMP * b * b), 0.0, d)


def radius_from_t(t, p2, b, kappa, restrict: bool = True):
    """Polar radius of the refracting branch.

    ``t`` is ``x . P`` and ``p2`` is ``|P|^2``.  With ``restrict`` (the
    default) directions outside the aperture give NaN.  For ``kappa < 1``
    the branch exists in every direction, and ``restrict=False`` returns it
    everywhere.
    """
    t = np.asarray(t, dtype=float)
    k2 = kappa * kappa
    d = _delta(t, p2, b, kappa)
    with np.errstate(invalid="ignore", divide="ignore"):
        root = np.sqrt(d)
        if kappa < 1:
            # rationalized smaller root; stable as b -> kappa|P|
            h = (b * b - k2 * p2) / ((b - k2 * t) + root)
            if restrict:
                h = np.where(t >= b, h, np.nan)
        else:
            s = k2 * t - b
            h = (k2 * p2 - b * b) / (s + root)
            h = np.where((d >= 0) & (s >= 0), h, np.nan)
    return h


def aperture_threshold(norm_p, b, kappa):
    """Cosine threshold ``c``: the aperture is ``{x : x . P/|P| >= c}``."""
    if kappa < 1:
        return b / norm_p
    k2 = kappa * kappa
    return (b + np.sqrt(np.maximum((k2 - 1.0) * (k2 * norm_p**2 - b * b), 0.0))) / (k2 * norm_p)


def param_through(X, P, kappa):
    """Parameter ``b`` of the oval with focus ``P`` passing through ``X``."""
    X = np.asarray(X, dtype=float)
    return np.linalg.norm(X, axis=-1) + kappa * np.linalg.norm(X - np.asarray(P, dtype=float), axis=-1)


def normal_at(X, P, kappa):
    """Unit normal at surface points ``X`` of ovals with foci ``P``.

    Oriented so that ``x . nu > 0`` for ``x = X/|X|``.  Both arguments
    broadcast row-wise.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    r = np.linalg.norm(X, axis=-1, keepdims=True)
    d = X - P
    g = X / r + kappa * d / np.linalg.norm(d, axis=-1, keepdims=True)
    if kappa > 1:
        g = -g
    return g / np.linalg.norm(g, axis=-1, keepdims=True)


@dataclass(frozen=True)
class OvalBounds:
    min_radius: float
    max_radius: float
    min_target_dist: float
    max_target_dist: float
    # coarse a-priori bracket for the distance to the focus (kappa > 1)
    target_dist_bracket: tuple


@dataclass(frozen=True)
class Aperture:
    axis: np.ndarray
    cos_threshold: float

    def contains(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.axis >= self.cos_threshold


@dataclass(frozen=True)
class CartesianOval:
    focus: np.ndarray
    b: float
    kappa: float
    # allow the degenerate end b = kappa|P| (oval collapsed to the origin)
    allow_degenerate: bool = False

    def __post_init__(self):
        focus = np.asarray(self.focus, dtype=float)
        kappa = check_kappa(self.kappa)
        norm = float(np.linalg.norm(focus))
        if norm <= 0:
            raise ValueError("focus must differ from the origin")
        b = float(self.b)
        kp = kappa * norm
        if kappa < 1:
            ok = (kp <= b if self.allow_degenerate else kp < b) and b < norm
        else:
            ok = norm < b and (b <= kp if self.allow_degenerate else b < kp)
        if not ok:
            raise ValueError(f"b={b} outside the admissible range for |P|={norm}, kappa={kappa}")
        focus.setflags(write=False)
        object.__setattr__(self, "focus", focus)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "kappa", kappa)

    @property
    def norm_p(self) -> float:
        return float(np.linalg.norm(self.focus))

    @property
    def n(self) -> int:
        return self.focus.shape[0]

    def radius(self, x, restrict: bool = True):
        x = np.asarray(x, dtype=float)
        return radius_from_t(x @ self.focus, self.norm_p**2, self.b, self.kappa, restrict)

    def point(self, x):
        x = np.asarray(x, dtype=float)
        return self.radius(x)[..., None] * x

    def aperture(self) -> Aperture:
        return Aperture(self.focus / self.norm_p, float(aperture_threshold(self.norm_p, self.b, self.kappa)))

    def normal(self, x):
        """Unit normal at the surface point over each admissible direction."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h = self.radius(x)
        if np.any(np.isnan(h)):
            raise ValueError("direction outside the oval's aperture")
        return normal_at(h[:, None] * x, self.focus, self.kappa)

    def bounds(self) -> OvalBounds:
        k, p, b = self.kappa, self.norm_p, self.b
        if k < 1:
            max_r = (b - k * p) / (1 - k)
            return OvalBounds(
                min_radius=(b - k * p) / (1 + k),
                max_radius=max_r,
                min_target_dist=(p - b) / (1 - k),
                max_target_dist=float(np.sqrt(p * p - b * b) / np.sqrt(1 - k * k)),
                target_dist_bracket=((p - b) / (1 - k), float(np.sqrt(p * p - b * b) / np.sqrt(1 - k * k))),
            )
        max_r = float(np.sqrt(k * k * p * p - b * b) / np.sqrt(k * k - 1))
        return OvalBounds(
            min_radius=(k * p - b) / (k - 1),
            max_radius=max_r,
            # on the oval |X - P| = (b - |X|)/kappa, so the extremes are exact
            min_target_dist=(b - max_r) / k,
            max_target_dist=(b - p) / (k - 1),
            target_dist_bracket=((b - p) / k, (b - p) / (k - 1)),
        )


def radius_lt1(x, oval: CartesianOval):
    if oval.kappa >= 1:
        raise ValueError("radius_lt1 needs kappa < 1")
    return oval.radius(x)


def radius_gt1(x, oval: CartesianOval):
    if oval.kappa <= 1:
        raise ValueError("radius_gt1 needs kappa > 1")
    return oval.radius(x)


def aperture(oval: CartesianOval) -> Aperture:
    return oval.aperture()


def bounds(oval: CartesianOval) -> OvalBounds:
    return oval.bounds()


def oval_normal(x, oval: CartesianOval):
    return oval.normal(x)
