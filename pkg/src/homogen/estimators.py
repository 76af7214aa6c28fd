"""scikit-learn style wrappers around the cell solver, the order fit and the studies."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cell import solve_cell
from .coefficients import CoefficientSpec
from .fields import build_grid, sample_coefficient_set
from .harness import StudyConfig, coefficient_spec_from_config, run_study
from .krylov import SolveOptions
from .report import ConfigError, fit_order


def check_eps(X) -> np.ndarray:
    """Validate a column of scales in ``(0, 1]`` and return it flattened."""
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single column of eps values, got {X.shape[1]} columns")
        X = X[:, 0]
    if np.any(X <= 0) or np.any(X > 1):
        raise ValueError("eps values must lie in (0, 1]")
    return X


def check_gradients(X) -> np.ndarray:
    """Validate an ``(n_samples, 3)`` array of macroscopic field vectors."""
    X = check_array(X, dtype=float)
    if X.shape[1] != 3:
        raise ValueError(f"expected 3 columns, got {X.shape[1]}")
    return X


class CellHomogenizer(TransformerMixin, BaseEstimator):
    """Solve the cell problems for one coefficient specification.

    Parameters
    ----------
    resolution : int
        Grid points per axis of the period cell.
    tol : float
        Relative tolerance of the Krylov solves.
    maxiter : int, optional

    Attributes
    ----------
    cell_ : CellData
    eta0_ : ndarray of shape (3, 3)
    nu_under_ : float
    g0_ : ndarray of shape (4, 4)

    Notes
    -----
    ``fit`` takes a :class:`CoefficientSpec`, a preset name or a config
    mapping in place of a data matrix.  ``predict`` maps macroscopic gradients
    ``E`` to effective fluxes ``eta0 E``; ``transform`` returns the
    homogenized constitutive response ``(eta0 E, eta0^{-1} E)`` side by side.
    """

    def __init__(self, resolution: int = 16, tol: float = 1e-10, maxiter: int | None = None):
        self.resolution = resolution
        self.tol = tol
        self.maxiter = maxiter

    def fit(self, X, y=None):
        spec = X if isinstance(X, CoefficientSpec) else coefficient_spec_from_config(X)
        if int(self.resolution) < 4:
            raise ValueError("resolution must be at least 4")
        coeff = sample_coefficient_set(spec, build_grid(int(self.resolution)))
        self.cell_ = solve_cell(coeff, SolveOptions(self.tol, self.maxiter))
        self.eta0_ = self.cell_.eta0
        self.nu_under_ = self.cell_.nuUnder
        self.g0_ = self.cell_.g0
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "eta0_")
        return check_gradients(X) @ self.eta0_.T

    def transform(self, X):
        check_is_fitted(self, "eta0_")
        X = check_gradients(X)
        return np.hstack([X @ self.eta0_.T, X @ self.g0_[:3, :3].T])


class RateEstimator(RegressorMixin, BaseEstimator):
    """Power law ``e = C eps^p`` fitted by least squares in log-log coordinates.

    Attributes
    ----------
    order_ : float
        Fitted exponent ``p``.
    intercept_ : float
        ``log C``.
    r2_ : float
        Coefficient of determination of the log-log fit.
    """

    def fit(self, X, y):
        eps = check_eps(X)
        y = check_array(y, ensure_2d=False, dtype=float)
        if y.shape != eps.shape:
            raise ValueError("X and y have inconsistent lengths")
        try:
            self.order_, self.intercept_, self.r2_ = fit_order(list(zip(eps, y)))
        except ConfigError as exc:
            raise ValueError(str(exc)) from exc
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "order_")
        return np.exp(self.intercept_) * check_eps(X) ** self.order_


class HomogenizationStudy(BaseEstimator):
    """Run a torus, cube or Maxwell convergence study from keyword parameters.

    ``fit`` ignores its arguments and runs the study described by the
    parameters; ``predict`` evaluates the fitted power law of every
    non-degenerate error column at new scales.
    """

    def __init__(self, study="torus", coefficients="laminate", setting="torus",
                 eps_ladder=(0.25, 0.125, 0.0625), resolution_per_cell=8, seed=0, tol=1e-10):
        self.study = study
        self.coefficients = coefficients
        self.setting = setting
        self.eps_ladder = eps_ladder
        self.resolution_per_cell = resolution_per_cell
        self.seed = seed
        self.tol = tol

    def _config(self) -> StudyConfig:
        return StudyConfig(study=self.study, coefficients=coefficient_spec_from_config(self.coefficients),
                           setting=self.setting, eps_ladder=tuple(self.eps_ladder),
                           resolution_per_cell=self.resolution_per_cell, source={"seed": int(self.seed)},
                           tol=self.tol)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        self.report_ = run_study(self.config_)
        self.orders_ = {k: (None if v is None else v["slope"]) for k, v in self.report_.fitted_orders.items()}
        return self

    def predict(self, X):
        check_is_fitted(self, "report_")
        eps = check_eps(X)
        cols = []
        for fo in self.report_.fitted_orders.values():
            cols.append(np.zeros_like(eps) if fo is None else np.exp(fo["intercept"]) * eps ** fo["slope"])
        return np.stack(cols, axis=1)
