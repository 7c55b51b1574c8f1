"""scikit-learn style wrappers around the detectors.

Detection is treated as a regression with +/-1 coefficients: ``X`` is the
``N x K`` spreading matrix (rows are chips, columns users) and ``y`` the
received signal.  ``fit`` estimates the bits; ``coef_`` holds the soft
outputs and ``decisions_`` their signs.  ``predict(X)`` re-synthesizes the
noiseless signal ``X @ decisions_ / sqrt(N)`` so the estimators plug into
scoring and model-selection utilities.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .detector import Channel, DetectorConfig, bp_detect, detect, matched_filter
from .exceptions import DataError
from .model import BRUTE_FORCE_CAP, Instance, PosteriorQuery, exhaustive_mpm


def check_codes(X):
    """Validate a spreading matrix: 2-D, finite, entries in {-1, +1}."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=1, ensure_min_features=1)
    if not np.all(np.abs(X) == 1.0):
        raise DataError("spreading codes must contain only -1/+1 entries")
    return X


def check_codes_signal(X, y):
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    check_codes(X)
    return X, y


class _DetectorBase(RegressorMixin, BaseEstimator):
    def _store(self, X, soft, decisions):
        self.coef_ = np.asarray(soft, dtype=np.float64)
        self.decisions_ = np.asarray(decisions, dtype=np.int8)
        self.n_chips_ = X.shape[0]
        self.n_features_in_ = X.shape[1]

    def predict(self, X):
        check_is_fitted(self, "decisions_")
        X = check_codes(X)
        if X.shape[1] != self.n_features_in_:
            raise DataError(f"X has {X.shape[1]} users, fitted on {self.n_features_in_}")
        return X @ self.decisions_.astype(np.float64) / np.sqrt(self.n_chips_)

    def fit_instance(self, instance: Instance):
        """Fit on a generated :class:`~cdmasp.model.Instance`; keeps ground-truth diagnostics."""
        return self.fit(instance.codes, instance.y, _truth=instance.bits)


class SPDetector(_DetectorBase):
    """Survey-propagation multiuser detector.

    Parameters
    ----------
    sigma : float, default=1.0
        Noise standard deviation assumed by the receiver.
    x : float, default=0.5
        Replica-symmetry-breaking parameter in [0, 1].
    max_iter : int, default=100
    tol : float, default=1e-6
        Stop when the largest change of a soft output falls below this.
    damping : float, default=0.0
    quad_order : int, default=40
    init_q1 : float, default=0.0
        Initial second moment of every user; positive values start the
        recursion away from the BP manifold.

    Attributes
    ----------
    coef_ : ndarray of shape (n_users,)
        Soft bit estimates ``m_k``.
    decisions_ : ndarray of shape (n_users,)
        Hard decisions ``sgn(m_k)`` with ``sgn(0) = +1``.
    n_iter_ : int
    converged_ : bool
    trace_ : MacroTrace
    """

    _mode = "sp"

    def __init__(self, sigma=1.0, x=0.5, max_iter=100, tol=1e-6, damping=0.0, quad_order=40, init_q1=0.0):
        self.sigma = sigma
        self.x = x
        self.max_iter = max_iter
        self.tol = tol
        self.damping = damping
        self.quad_order = quad_order
        self.init_q1 = init_q1

    def _config(self) -> DetectorConfig:
        return DetectorConfig(sigma=self.sigma, x=self.x, max_iters=self.max_iter, tol=self.tol,
                              damping=self.damping, quad_order=self.quad_order, mode=self._mode,
                              init_q1=self.init_q1)

    def fit(self, X, y, _truth=None):
        X, y = check_codes_signal(X, y)
        cfg = self._config()
        run = bp_detect if self._mode == "bp" else detect
        res = run(Channel(X, y, _truth), cfg)
        self._store(X, res.soft, res.decisions)
        self.n_iter_ = res.iterations_used
        self.converged_ = res.converged
        self.trace_ = res.trace
        return self


class BPDetector(SPDetector):
    """Belief-propagation detector (deterministic fields, no survey width)."""

    _mode = "bp"


class MatchedFilterDetector(_DetectorBase):
    """Conventional single-user correlator."""

    def fit(self, X, y, _truth=None):
        X, y = check_codes_signal(X, y)
        res = matched_filter(Channel(X, y))
        self._store(X, res.soft, res.decisions)
        return self


class ExhaustiveMPMDetector(_DetectorBase):
    """Exact posterior-marginal detector by enumeration (small ``K`` only)."""

    def __init__(self, sigma=1.0, cap=BRUTE_FORCE_CAP):
        self.sigma = sigma
        self.cap = cap

    def fit(self, X, y, _truth=None):
        X, y = check_codes_signal(X, y)
        # the posterior needs only the codes and the received signal
        observed = SimpleNamespace(codes=X.astype(np.int8), y=y, n=X.shape[0], k=X.shape[1])
        m, dec = exhaustive_mpm(PosteriorQuery(observed, self.sigma), self.cap)
        self._store(X, m, dec)
        return self
