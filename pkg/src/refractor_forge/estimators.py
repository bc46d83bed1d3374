"""scikit-learn style wrappers around the solvers.

``fit(X, sample_weight)`` takes target points as rows of ``X`` and their
weights; ``predict`` maps source directions (or planar points) to the index
of the target they are sent to.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import PlanarDomain, SourceDomain
from .refractor import PlaneScreen, SceneConfig, screen_from_dict
from .solver import SolveOptions, default_anchor, solve_dirac


def _weights(sample_weight, n, total, normalize):
    if sample_weight is None:
        return np.full(n, total / n)
    w = check_array(np.asarray(sample_weight, dtype=float).reshape(1, -1), ensure_all_finite=True).ravel()
    if w.shape[0] != n:
        raise ValueError(f"sample_weight has {w.shape[0]} entries for {n} targets")
    if np.any(w < 0):
        raise ValueError("sample_weight must be non-negative")
    return w * (total / w.sum()) if normalize else w


class _RefractorBase(BaseEstimator):
    def _fit_scene(self, scene: SceneConfig):
        opts = SolveOptions(
            mass_tol=self.mass_tol,
            b1=self.b1,
            resolution=self.resolution,
            max_iters=self.max_iters,
        )
        refr, report = solve_dirac(scene, scene.family(), opts)
        self.scene_ = scene
        self.refractor_ = refr
        self.report_ = report
        self.params_ = report.params
        self.masses_ = report.masses
        self.n_features_in_ = scene.targets.shape[1]
        return self

    def _directions(self, X):
        check_is_fitted(self, "refractor_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} coordinates, got {X.shape[1]}")
        return X / np.linalg.norm(X, axis=1, keepdims=True)

    def predict(self, X):
        """Index of the target each direction is refracted to."""
        x = self._directions(X)
        return self.refractor_.assign(x)

    def radius(self, X):
        """Polar radius of the refractor along each direction."""
        x = self._directions(X)
        return self.refractor_.radius(x)

    def transform(self, X):
        """Surface points over each direction."""
        x = self._directions(X)
        return self.refractor_.surface(x)


class NearFieldRefractor(_RefractorBase):
    """Refractor sending a point source into finitely many target points.

    ``kappa < 1`` builds a min of Cartesian ovals, ``kappa > 1`` a max.
    ``b1`` fixes the first target's oval; by default the middle of its
    admissible range is used.
    """

    def __init__(
        self,
        kappa=2 / 3,
        axis=(0.0, 0.0, 1.0),
        half_angle=np.deg2rad(20.0),
        r0=0.6,
        tau=0.2,
        b1=None,
        screen=None,
        mass_tol=1e-3,
        resolution=20000,
        max_iters=20000,
        normalize_weights=True,
    ):
        self.kappa = kappa
        self.axis = axis
        self.half_angle = half_angle
        self.r0 = r0
        self.tau = tau
        self.b1 = b1
        self.screen = screen
        self.mass_tol = mass_tol
        self.resolution = resolution
        self.max_iters = max_iters
        self.normalize_weights = normalize_weights

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, ensure_min_samples=1)
        dom = SourceDomain(np.asarray(self.axis, dtype=float), float(self.half_angle), n=X.shape[1])
        w = _weights(sample_weight, len(X), dom.area(), self.normalize_weights)
        screen = self.screen
        if isinstance(screen, dict):
            screen = screen_from_dict(screen)
        scene = SceneConfig(
            kappa=self.kappa,
            domain=dom,
            targets=X,
            weights=w,
            mode="near_lt1" if self.kappa < 1 else "near_gt1",
            r0=self.r0,
            tau=self.tau,
            screen=screen,
        )
        return self._fit_scene(scene)

    @property
    def screen_(self) -> PlaneScreen:
        check_is_fitted(self, "refractor_")
        return self.scene_.effective_screen()


class FarFieldRefractor(_RefractorBase):
    """Refractor sending a point source into finitely many far-field directions.

    Rows of ``X`` are target directions (normalized on input).
    """

    def __init__(
        self,
        kappa=2 / 3,
        axis=(0.0, 0.0, 1.0),
        half_angle=np.deg2rad(20.0),
        delta=0.05,
        b1=1.0,
        mass_tol=1e-3,
        resolution=20000,
        max_iters=20000,
        normalize_weights=True,
    ):
        self.kappa = kappa
        self.axis = axis
        self.half_angle = half_angle
        self.delta = delta
        self.b1 = b1
        self.mass_tol = mass_tol
        self.resolution = resolution
        self.max_iters = max_iters
        self.normalize_weights = normalize_weights

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, ensure_min_samples=1)
        X = X / np.linalg.norm(X, axis=1, keepdims=True)
        dom = SourceDomain(np.asarray(self.axis, dtype=float), float(self.half_angle), n=X.shape[1])
        w = _weights(sample_weight, len(X), dom.area(), self.normalize_weights)
        scene = SceneConfig(
            kappa=self.kappa,
            domain=dom,
            targets=X,
            weights=w,
            mode="far_lt1" if self.kappa < 1 else "far_gt1",
            delta=self.delta,
        )
        return self._fit_scene(scene)


class SecondBoundaryValueSolver(BaseEstimator):
    """Max-affine solution of the semi-discrete second boundary value problem.

    ``vertices`` is the convex source polygon (uniform density); rows of
    ``X`` in ``fit`` are the slopes ``p_i``.
    """

    def __init__(self, vertices=((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)), b1=0.0, mass_tol=1e-7, max_iters=20000):
        self.vertices = vertices
        self.b1 = b1
        self.mass_tol = mass_tol
        self.max_iters = max_iters

    def fit(self, X, y=None, sample_weight=None):
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != 2:
            raise ValueError("slopes must be 2D")
        dom = PlanarDomain(np.asarray(self.vertices, dtype=float))
        w = _weights(sample_weight, len(X), dom.area(), True)
        scene = SceneConfig(kappa=2.0, domain=dom, targets=X, weights=w, mode="ma_bvp")
        fam = scene.family()
        b1 = self.b1 if self.b1 is not None else default_anchor(fam, X[0])
        refr, report = solve_dirac(scene, fam, SolveOptions(mass_tol=self.mass_tol, b1=b1, max_iters=self.max_iters))
        self.refractor_ = refr
        self.report_ = report
        self.intercepts_ = report.params
        self.masses_ = report.masses
        self.n_features_in_ = 2
        return self

    def _points(self, X):
        check_is_fitted(self, "refractor_")
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError("points must be 2D")
        return X

    def decision_function(self, X):
        """Value of ``u(x) = max(x . p_i + b_i)``."""
        x = self._points(X)
        return self.refractor_.radius(x)

    def predict(self, X):
        """Index of the active affine piece, i.e. the slope in the subdifferential."""
        x = self._points(X)
        return self.refractor_.assign(x)
