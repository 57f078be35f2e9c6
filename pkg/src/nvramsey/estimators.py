"""scikit-learn style front ends for the fringe fitter.

:class:`RamseyFringeRegressor` fits one fringe (``X`` holds the sample times)
and predicts the model at new times.  :class:`FringeMapTransformer` turns a
stack of per-pixel fringes into a parameter matrix, one row per pixel.
"""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidArgumentError
from .fit_engine import PARAM_NAMES, fit_fringe, fit_grid, fringe_model


def _tau_column(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 1:
        raise InvalidArgumentError(f"X must hold one column of sample times, got shape {X.shape}")
    return X


class RamseyFringeRegressor(RegressorMixin, BaseEstimator):
    """Three-component decaying-sinusoid regressor.

    Parameters
    ----------
    hyperfine_spacing : float
        Expected spacing of the three lines for the automatic start, Hz.
    init : "auto" or FringeParams
    max_iter, ftol, gtol : optimizer limits.
    confidence : float
        Level of the reported confidence intervals.

    Attributes
    ----------
    params_ : FringeParams
    result_ : FitResult
    confidence_interval_ : ndarray of shape (10,)
    """

    def __init__(self, hyperfine_spacing=2.2e6, init="auto", max_iter=200, ftol=1e-10,
                 gtol=1e-8, confidence=0.95):
        self.hyperfine_spacing = hyperfine_spacing
        self.init = init
        self.max_iter = max_iter
        self.ftol = ftol
        self.gtol = gtol
        self.confidence = confidence

    def fit(self, X, y):
        tau = _tau_column(X)
        res = fit_fringe(tau, y, init=self.init, hyperfine_spacing=self.hyperfine_spacing,
                         max_iter=self.max_iter, ftol=self.ftol, gtol=self.gtol,
                         confidence=self.confidence)
        self.result_ = res
        self.params_ = res.params
        self.confidence_interval_ = res.confidence_interval
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return fringe_model(self.params_, _tau_column(X))


class FringeMapTransformer(TransformerMixin, BaseEstimator):
    """Fit every row of ``X`` (pixels x tau samples) and return parameters.

    The transformer is stateless: ``fit`` only validates ``tau``, and
    ``transform`` performs the per-pixel fits.  The full per-pixel result of
    the last ``transform`` call is kept in ``result_``.

    Parameters
    ----------
    tau : array_like
        Sample times shared by all rows.
    """

    def __init__(self, tau=None, hyperfine_spacing=2.2e6, init="auto", max_iter=200,
                 ftol=1e-10, gtol=1e-8, confidence=0.95, n_threads=None):
        self.tau = tau
        self.hyperfine_spacing = hyperfine_spacing
        self.init = init
        self.max_iter = max_iter
        self.ftol = ftol
        self.gtol = gtol
        self.confidence = confidence
        self.n_threads = n_threads

    def fit(self, X=None, y=None):
        if self.tau is None:
            raise InvalidArgumentError("tau must be set before fitting")
        self.tau_ = _tau_column(self.tau)
        if X is not None and np.asarray(X).shape[-1] != self.tau_.size:
            raise InvalidArgumentError("X columns do not match tau")
        self.n_features_in_ = self.tau_.size
        return self

    def transform(self, X):
        check_is_fitted(self, "tau_")
        res = fit_grid(self.tau_, X, init=self.init, hyperfine_spacing=self.hyperfine_spacing,
                       max_iter=self.max_iter, ftol=self.ftol, gtol=self.gtol,
                       confidence=self.confidence, n_threads=self.n_threads)
        self.result_ = res
        return res.params

    def get_feature_names_out(self, input_features=None):
        return np.asarray(PARAM_NAMES, dtype=object)
