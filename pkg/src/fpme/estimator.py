"""Estimator-style wrapper: ``fit`` solves for the profile, ``predict`` evaluates it."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import closedform as cf
from . import solver as S
from .kernel import Params, exponents


class SelfSimilarProfile(BaseEstimator):
    """Mass-M self-similar profile U_{alpha,m,M} of d_t^alpha u = Laplacian(u^m).

    ``fit`` ignores X and y; they are accepted so the object drops into
    pipelines and parameter searches. After fitting, ``predict(z)`` returns
    U(z) and the solver output is kept in ``profile_`` and ``report_``.
    """

    def __init__(
        self,
        alpha: float = 0.5,
        m: float = 2.0,
        d: int = 1,
        mass: float = 1.0,
        grid_size: int = 512,
        tol: float = 1e-10,
        max_iter: int = 100_000,
        z_min: float | None = None,
        z_max: float | None = None,
    ):
        self.alpha = alpha
        self.m = m
        self.d = d
        self.mass = mass
        self.grid_size = grid_size
        self.tol = tol
        self.max_iter = max_iter
        self.z_min = z_min
        self.z_max = z_max

    def _params(self) -> Params:
        return Params(alpha=float(self.alpha), m=float(self.m), d=int(self.d), mass=float(self.mass))

    def fit(self, X=None, y=None):
        p = self._params()
        canon = p.replace(mass=1.0)
        if p.regime == "slow":
            u, rep = S.solve_slow(canon, I=self.grid_size, tol=self.tol, max_iter=self.max_iter)
        elif p.regime == "fast":
            u, rep = S.solve_fast(
                canon, I=self.grid_size, z_min=self.z_min, z_max=self.z_max, tol=self.tol, max_iter=self.max_iter
            )
        else:
            z_max = 40.0 if self.z_max is None else float(self.z_max)
            u = S.sample_linear(canon, I=self.grid_size, z_max=z_max)
            rep = u.report
        self.canonical_ = u
        self.profile_ = S.rescale_to_mass(u, p.mass)
        self.report_ = rep
        self.regime_ = p.regime
        self.exponents_ = exponents(p)
        self.mass_ = S.mass(self.profile_)
        return self

    def _check(self):
        if not hasattr(self, "profile_"):
            raise NotFittedError("call fit before predict")

    def predict(self, X):
        """U at the radii in X (any shape; a single column is flattened)."""
        self._check()
        z = np.asarray(X, dtype=float)
        if z.ndim == 2 and z.shape[1] == 1:
            z = z[:, 0]
        if self.regime_ == "linear":
            # evaluate the closed form directly rather than interpolating
            return np.asarray(cf.linear_profile(self._params(), z))
        return np.asarray(self.profile_(z))

    def score(self, X, y) -> float:
        """Negative sup relative deviation from reference values y."""
        pred = self.predict(X)
        y = np.asarray(y, dtype=float).ravel()
        return -float(np.max(np.abs(pred - y) / np.maximum(np.abs(y), np.finfo(float).tiny)))

    def diagnostics(self) -> dict:
        """Flux and head constants at the origin of the fitted mass-M profile."""
        self._check()
        if self.regime_ == "linear":
            raise NotImplementedError("origin diagnostics are computed for the nonlinear regimes")
        return S.flux_and_head_diagnostics(self.profile_)
