"""scikit-learn estimators wrapping the federated solvers.

These let the consensus algorithms drop into ordinary pipelines: ``fit``
partitions the pooled samples across simulated clients, runs the chosen
algorithm to stationarity, and exposes the learned coefficients plus the
communication/iteration accounting as fitted attributes.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import partition
from .losses import CurvatureMode, LeastSquares, Logistic, _sigmoid
from .solvers import HyperParams, LogScaleRule, MultiplierRule, run


def _build_hyperparams(est, curvature):
    if est.sigma_rule is not None:
        rule = est.sigma_rule
    elif est.sigma_multiplier is not None:
        rule = MultiplierRule(est.sigma_multiplier)
    elif est.sigma_log_scale is not None:
        rule = LogScaleRule(est.sigma_log_scale)
    else:
        rule = None  # solver default for the chosen algorithm
    return HyperParams(
        k0=est.k0,
        sigma_rule=rule,
        curvature=curvature,
        gamma=est.gamma,
        max_iters=est.max_iters,
        tol_scale=est.tol_scale,
    )


class _ConsensusBase(BaseEstimator):
    def _fit_federation(self, X, y, model, curvature):
        fed = partition(X, y, self.n_clients, seed=self.random_state)
        hp = _build_hyperparams(self, curvature)
        result = run(self.algorithm, fed, model, hp)
        self.coef_ = result.y_final
        self.n_iter_ = result.iterations
        self.rounds_ = result.rounds
        self.converged_ = result.converged
        self.trace_ = result.trace
        self.n_features_in_ = X.shape[1]
        return result

    def _curvature(self):
        if self.curvature == "scalar":
            return CurvatureMode.scalar()
        if self.curvature == "scaled-gram":
            return CurvatureMode.scaled_gram(self.scaled_gram_r)
        if self.curvature == "gram":
            return CurvatureMode.gram()
        raise ValueError(f"unknown curvature {self.curvature!r}")


class ConsensusRegressor(_ConsensusBase, RegressorMixin):
    """Least-squares regression fitted by consensus ADMM over n_clients.

    Parameters mirror the solver: ``algorithm`` is one of fedavg/admm/
    ceadmm/liadmm/iadmm/iceadmm, ``k0`` is the gap between communication
    rounds, and exactly one of ``sigma_multiplier`` / ``sigma_log_scale`` /
    ``sigma_rule`` chooses the penalty schedule (all None picks the
    algorithm's default).
    """

    def __init__(self, algorithm="ceadmm", n_clients=1, k0=1,
                 sigma_multiplier=None, sigma_log_scale=None, sigma_rule=None,
                 curvature="scalar", scaled_gram_r=6.0, gamma=None,
                 max_iters=10_000, tol_scale=1e-9, random_state=0):
        self.algorithm = algorithm
        self.n_clients = n_clients
        self.k0 = k0
        self.sigma_multiplier = sigma_multiplier
        self.sigma_log_scale = sigma_log_scale
        self.sigma_rule = sigma_rule
        self.curvature = curvature
        self.scaled_gram_r = scaled_gram_r
        self.gamma = gamma
        self.max_iters = max_iters
        self.tol_scale = tol_scale
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self._fit_federation(X, y, LeastSquares(), self._curvature())
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_


class ConsensusClassifier(_ConsensusBase, ClassifierMixin):
    """Binary logistic classifier fitted by consensus ADMM over n_clients."""

    def __init__(self, algorithm="iceadmm", n_clients=1, k0=1, mu=0.01,
                 sigma_multiplier=None, sigma_log_scale=None, sigma_rule=None,
                 curvature="scaled-gram", scaled_gram_r=6.0, gamma=None,
                 max_iters=10_000, tol_scale=1e-7, random_state=0):
        self.algorithm = algorithm
        self.n_clients = n_clients
        self.k0 = k0
        self.mu = mu
        self.sigma_multiplier = sigma_multiplier
        self.sigma_log_scale = sigma_log_scale
        self.sigma_rule = sigma_rule
        self.curvature = curvature
        self.scaled_gram_r = scaled_gram_r
        self.gamma = gamma
        self.max_iters = max_iters
        self.tol_scale = tol_scale
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.shape[0] != 2:
            raise ValueError(
                f"binary classifier needs exactly 2 classes, got {self.classes_}"
            )
        targets = (y == self.classes_[1]).astype(float)
        self._fit_federation(X, targets, Logistic(mu=self.mu), self._curvature())
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_

    def predict_proba(self, X):
        p1 = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0.0).astype(int)]
