"""Building-block families whose envelopes form refractors.

Every family here depends on a direction ``x`` only through ``x . y`` for
the target ``y`` (a focus, a far-field direction, or a slope), which lets
the solver cache one dot-product matrix and re-evaluate single columns
cheaply.  A family declares:

* ``envelope``: ``"min"`` or ``"max"``,
* ``increasing``: whether blocks grow as the parameter grows,
* ``interval(y)``: the open parameter interval for target ``y``.

``canonical`` turns any family into min-envelope form by negating values
of max families, so the solver only ever minimizes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ovals
from .exceptions import ConfigError
from .snell import check_kappa

MIN = "min"
MAX = "max"


class BuildingBlockFamily:
    envelope: str = MIN
    increasing: bool = True
    kind: str = "abstract"
    far_field: bool = False
    planar: bool = False

    def block_from_dot(self, dot, y_norm2, t):
        raise NotImplementedError

    def interval(self, y) -> tuple[float, float]:
        raise NotImplementedError

    def evaluate(self, x, y, t):
        """Block value at directions ``x`` for target ``y`` and parameter ``t``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.block_from_dot(x @ y, float(y @ y), t)

    def evaluate_all(self, x, targets, params):
        """``(k, N)`` matrix of block values."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        targets = np.atleast_2d(np.asarray(targets, dtype=float))
        dots = x @ targets.T
        y2 = np.einsum("ij,ij->i", targets, targets)
        return self.block_from_dot(dots, y2[None, :], np.asarray(params, dtype=float)[None, :])

    @property
    def grow_sign(self) -> float:
        """Sign of a parameter change that enlarges the block's share of mass."""
        grows = 1.0 if self.increasing else -1.0
        return grows if self.envelope == MAX else -grows

    @property
    def zero_end(self) -> str:
        """Interval end where blocks vanish (``"low"`` or ``"high"``)."""
        return "low" if self.increasing else "high"

    def canonical(self, values):
        """Values in min-envelope form, with inadmissible (NaN) entries at +inf."""
        v = values if self.envelope == MIN else -values
        return np.where(np.isnan(v), np.inf, v)

    def normal(self, X, y):
        """Unit refracting normal at points ``X`` supported by blocks with targets ``y``."""
        raise NotImplementedError

    def param_through(self, X, y):
        """Parameter of the block for target ``y`` passing through point ``X``."""
        raise NotImplementedError

    def threshold(self, dot, y_norm2, value):
        """Parameter at which the block takes ``value`` at directions with ``x . y = dot``."""
        raise NotImplementedError


@dataclass(frozen=True)
class OvalFamily(BuildingBlockFamily):
    """Cartesian ovals with foci at the targets; ``t`` is the oval parameter ``b``."""

    kappa: float
    r0: float
    sup_norm: Optional[float] = None

    kind = "oval"

    def __post_init__(self):
        object.__setattr__(self, "kappa", check_kappa(self.kappa))
        if self.r0 <= 0:
            raise ConfigError("r0 must be positive", assumption="H2" if self.kappa < 1 else "H4")
        if self.kappa > 1 and (self.sup_norm is None or self.sup_norm <= 0):
            raise ConfigError("kappa > 1 oval family needs sup |P| over the targets", assumption="H4")

    @property
    def envelope(self):
        return MIN if self.kappa < 1 else MAX

    @property
    def increasing(self):
        return self.kappa < 1

    def block_from_dot(self, dot, y_norm2, t):
        return ovals.radius_from_t(dot, y_norm2, t, self.kappa)

    def interval(self, y):
        k = self.kappa
        p = float(np.linalg.norm(y))
        if k < 1:
            return k * p, k * p + (1 - k) * self.r0
        return k * p - (k - 1) * self.r0**2 / (2 * self.sup_norm), k * p

    def normal(self, X, y):
        return ovals.normal_at(X, y, self.kappa)

    def param_through(self, X, y):
        return ovals.param_through(X, y, self.kappa)

    def threshold(self, dot, y_norm2, value):
        with np.errstate(invalid="ignore"):
            b = value + self.kappa * np.sqrt(value * value - 2 * value * dot + y_norm2)
        if self.kappa < 1:
            # the block only exists where x . P >= b
            b = np.minimum(b, dot)
        return b


@dataclass(frozen=True)
class EllipsoidFamily(BuildingBlockFamily):
    """Far-field blocks ``b / (1 - kappa m . x)`` for ``kappa < 1``."""

    kappa: float

    kind = "ellipsoid"
    far_field = True
    envelope = MIN
    increasing = True

    def __post_init__(self):
        if not 0 < check_kappa(self.kappa) < 1:
            raise ConfigError("ellipsoids need kappa < 1", assumption="far-field")

    def block_from_dot(self, dot, y_norm2, t):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = t / (1.0 - self.kappa * dot)
        return np.where(dot >= self.kappa, v, np.nan)

    def interval(self, y):
        return 0.0, np.inf

    def normal(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        x = X / np.linalg.norm(X, axis=-1, keepdims=True)
        g = x - self.kappa * np.atleast_2d(y)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def param_through(self, X, y):
        X = np.asarray(X, dtype=float)
        r = np.linalg.norm(X, axis=-1)
        return r - self.kappa * (X @ np.asarray(y, dtype=float))

    def threshold(self, dot, y_norm2, value):
        return np.where(dot >= self.kappa, value * (1.0 - self.kappa * dot), np.nan)


@dataclass(frozen=True)
class HyperboloidFamily(BuildingBlockFamily):
    """Far-field blocks ``b / (kappa m . x - 1)`` for ``kappa > 1``.

    ``delta`` is the admissibility margin: blocks are only used where
    ``x . m >= 1/kappa + delta``.
    """

    kappa: float
    delta: float = 0.0

    kind = "hyperboloid"
    far_field = True
    envelope = MAX
    increasing = True

    def __post_init__(self):
        if check_kappa(self.kappa) <= 1:
            raise ConfigError("hyperboloids need kappa > 1", assumption="far-field")
        if self.delta < 0:
            raise ConfigError("delta must be non-negative", assumption="far-field")

    def block_from_dot(self, dot, y_norm2, t):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = t / (self.kappa * dot - 1.0)
        return np.where(dot > 1.0 / self.kappa, v, np.nan)

    def interval(self, y):
        return 0.0, np.inf

    def normal(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        x = X / np.linalg.norm(X, axis=-1, keepdims=True)
        g = self.kappa * np.atleast_2d(y) - x
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def param_through(self, X, y):
        X = np.asarray(X, dtype=float)
        return self.kappa * (X @ np.asarray(y, dtype=float)) - np.linalg.norm(X, axis=-1)

    def threshold(self, dot, y_norm2, value):
        return np.where(dot > 1.0 / self.kappa, value * (self.kappa * dot - 1.0), np.nan)


@dataclass(frozen=True)
class AffineFamily(BuildingBlockFamily):
    """Affine functions ``x . p + b`` on a planar domain (max envelope)."""

    kind = "affine"
    planar = True
    envelope = MAX
    increasing = True

    def block_from_dot(self, dot, y_norm2, t):
        return dot + t

    def interval(self, y):
        return -np.inf, np.inf

    def threshold(self, dot, y_norm2, value):
        return value - dot

    @property
    def zero_end(self):
        return "low"


def oval_family(kappa: float, r0: float, sup_norm: Optional[float] = None) -> OvalFamily:
    return OvalFamily(kappa, r0, sup_norm)


def ellipsoid_family(kappa: float) -> EllipsoidFamily:
    return EllipsoidFamily(kappa)


def hyperboloid_family(kappa: float, delta: float = 0.0) -> HyperboloidFamily:
    return HyperboloidFamily(kappa, delta)


def affine_family() -> AffineFamily:
    return AffineFamily()


@dataclass
class ConformanceReport:
    monotone: bool
    lipschitz: float
    smallness: float
    passed: bool


def check_conformance(
    family: BuildingBlockFamily,
    x,
    y,
    n_params: int = 64,
    shrink: float = 0.05,
    zero_fraction: float = 1e-6,
) -> ConformanceReport:
    """Sample monotonicity, parameter-Lipschitz bound and smallness at the zero end.

    ``x`` are probe directions where the block is admissible for the whole
    interval.  Infinite interval ends are replaced by finite stand-ins.
    """
    lo, hi = family.interval(y)
    lo_f = lo if np.isfinite(lo) else (0.0 if np.isfinite(hi) else -1.0)
    hi_f = hi if np.isfinite(hi) else (lo_f + 10.0 if np.isfinite(lo) else 1.0)
    if not np.isfinite(lo) and not np.isfinite(hi):
        lo_f, hi_f = -1.0, 1.0
    width = hi_f - lo_f
    ts = np.linspace(lo_f + shrink * width, hi_f - shrink * width, n_params)
    vals = np.array([family.evaluate(x, y, t) for t in ts])
    diffs = np.diff(vals, axis=0)
    monotone = bool(np.all(diffs > 0) if family.increasing else np.all(diffs < 0))
    lip = float(np.nanmax(np.abs(diffs) / np.diff(ts)[:, None]))
    if family.planar:
        small = 0.0
    else:
        end = lo_f if family.zero_end == "low" else hi_f
        t0 = end + (zero_fraction * width if family.zero_end == "low" else -zero_fraction * width)
        small = float(np.nanmax(np.abs(family.evaluate(x, y, t0))))
    passed = monotone and np.isfinite(lip) and (family.planar or small < 1e-3 * np.nanmax(np.abs(vals)))
    return ConformanceReport(monotone, lip, small, bool(passed))
