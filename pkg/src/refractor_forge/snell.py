"""Vector form of Snell's law at an interface between two isotropic media.

``kappa`` is the ratio n2/n1 of the refractive index after the interface to
the one before it.  Directions are unit row vectors; all functions accept a
single vector or a batch.
"""
from __future__ import annotations

import numpy as np


class TotalInternalReflection(ArithmeticError):
    """No refracted direction exists for the given incidence."""


def check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not np.isfinite(kappa) or kappa <= 0 or kappa == 1.0:
        raise ValueError(f"kappa must be positive and different from 1, got {kappa}")
    return kappa


def phi(t, kappa: float):
    """``t - kappa*sqrt(1 - (1 - t^2)/kappa^2)``; NaN where the root is imaginary."""
    t = np.asarray(t, dtype=float)
    disc = 1.0 - (1.0 - t * t) / (kappa * kappa)
    with np.errstate(invalid="ignore"):
        return np.where(disc >= 0, t - kappa * np.sqrt(np.maximum(disc, 0.0)), np.nan)


def refract_batch(x, nu, kappa: float) -> np.ndarray:
    """Refract each row of ``x`` through the matching row of ``nu``.

    Rows under total internal reflection come back as NaN.  Raises
    ``ValueError`` when some ray does not strike the interface from the
    incident side (``x . nu <= 0``).
    """
    kappa = check_kappa(kappa)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    nu = np.atleast_2d(np.asarray(nu, dtype=float))
    t = np.einsum("ij,ij->i", x, nu) if nu.shape == x.shape else x @ nu[0]
    if np.any(t <= 0):
        raise ValueError("incidence must satisfy x . nu > 0")
    p = phi(t, kappa)
    return (x - p[:, None] * nu) / kappa


def refract(x, nu, kappa: float) -> np.ndarray:
    """Refracted direction for a single ray; raises on total internal reflection."""
    m = refract_batch(x, nu, kappa)[0]
    if np.isnan(m[0]):
        raise TotalInternalReflection("incidence angle beyond the critical angle")
    return m


def can_refract_into(x, m, kappa: float):
    """Whether some interface refracts direction ``x`` into ``m``."""
    kappa = check_kappa(kappa)
    c = np.sum(np.asarray(x, dtype=float) * np.asarray(m, dtype=float), axis=-1)
    return c >= (kappa if kappa < 1 else 1.0 / kappa)
