"""scikit-learn style localizers.

``X`` holds agent positions (one row per agent) and ``y`` the measured ranges
to a single target. ``predict`` maps new sensor positions to the ranges the
fitted target position would produce, so ``score`` is the R^2 of range fits.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from rangeloc import consensus as cons
from rangeloc.linmodel import WeightMode, analytic_bias, build_system, lifted_design, lifted_response, \
    row_weights, solve_centralized
from rangeloc.world import comm_graph_from_adjacency


def _check_positions(X, estimator):
    X = check_array(X, dtype=float, estimator=estimator)
    if X.shape[1] not in (2, 3):
        raise ValueError(f"agent positions must be 2- or 3-dimensional, got {X.shape[1]}")
    return X


class _RangeRegressorMixin(RegressorMixin):
    def predict(self, X):
        check_is_fitted(self, "position_")
        X = check_array(X, dtype=float, estimator=self)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} coordinates, got {X.shape[1]}")
        return np.linalg.norm(X - self.position_, axis=1)


class LinearRangeLocalizer(_RangeRegressorMixin, BaseEstimator):
    """Centralized weighted linear localizer.

    Parameters
    ----------
    weight_mode : {"unbiased", "quadratic"}
        Noise model behind the measurement weights.
    noise_scale : float
        Ratio of range noise standard deviation to distance. ``0`` fits
        ordinary least squares.
    min_dist : float
        Floor on the plug-in distance used inside the weights.
    """

    def __init__(self, weight_mode="unbiased", noise_scale=0.001, min_dist=1e-6):
        self.weight_mode = weight_mode
        self.noise_scale = noise_scale
        self.min_dist = min_dist

    def fit(self, X, y, dist_plugin=None):
        """Fit from agent positions ``X`` and ranges ``y``.

        ``dist_plugin`` replaces the measured ranges as the distance inside
        the weights (for instance distances to a previous estimate).
        """
        X, y = check_X_y(X, y, dtype=float, y_numeric=True, estimator=self)
        _check_positions(X, self)
        dist = y if dist_plugin is None else np.asarray(dist_plugin, dtype=float)
        dist = np.maximum(dist, self.min_dist)
        sigmas = self.noise_scale * dist
        system = build_system(X, y, sigmas, dist, self.weight_mode, noiseless=self.noise_scale == 0)
        est = solve_centralized(system)
        self.x_hat_ = est.x_hat
        self.covariance_ = est.cov
        self.position_ = est.p_hat
        if WeightMode(self.weight_mode) is WeightMode.QUADRATIC and self.noise_scale > 0:
            self.bias_ = analytic_bias(system, sigmas).bias
        self.n_features_in_ = X.shape[1]
        return self


class ConsensusRangeLocalizer(_RangeRegressorMixin, BaseEstimator):
    """Distributed localizer: each agent fuses its neighbours' information.

    Parameters
    ----------
    scheme : {"iseeu", "c", "ci", "mci"}
    n_rounds : int
        Consensus rounds. With one-dimensional ``y`` the same ranges are
        re-used in every round.
    comm_range : float or None
        Agents within this distance communicate. ``None`` means everyone
        talks to everyone.
    weight_mode, noise_scale, min_dist
        As for :class:`LinearRangeLocalizer`.

    Attributes
    ----------
    positions_ : ndarray (n_agents, d)
        Per-agent estimates; NaN where an agent's information is singular.
    covariances_ : ndarray (n_agents, d + 1, d + 1)
    position_ : ndarray (d,)
        Mean of the available per-agent estimates.
    """

    def __init__(self, scheme="iseeu", n_rounds=20, comm_range=None, weight_mode="unbiased",
                 noise_scale=0.001, min_dist=1e-6):
        self.scheme = scheme
        self.n_rounds = n_rounds
        self.comm_range = comm_range
        self.weight_mode = weight_mode
        self.noise_scale = noise_scale
        self.min_dist = min_dist

    def fit(self, X, y):
        X = _check_positions(X, self)
        y = np.asarray(y, dtype=float)
        n = X.shape[0]
        if y.ndim == 1:
            y = np.broadcast_to(y, (self.n_rounds, n))
        if y.shape != (self.n_rounds, n) or not np.all(np.isfinite(y)):
            raise ValueError(f"ranges must have shape ({n},) or ({self.n_rounds}, {n}) and be finite")
        if self.comm_range is None:
            adjacency = np.ones((n, n), dtype=bool)
        else:
            adjacency = np.linalg.norm(X[:, None] - X[None], axis=-1) <= self.comm_range
        graph = comm_graph_from_adjacency(list(range(n)), adjacency)
        W, B = graph.uniform_weights(), graph.indicator()
        A = lifted_design(X)
        state = cons.NetworkState.zeros(n, X.shape[1] + 1)
        for r in y:
            dist = np.maximum(r, self.min_dist)
            w = row_weights(dist, self.noise_scale * dist, self.weight_mode, noiseless=self.noise_scale == 0)
            M, v = cons.contributions(A, lifted_response(X, r), w)
            state = cons.step(self.scheme, state, W, B, M, v)
        x, cov, ok = cons.extract_estimates(state)
        self.info_matrices_ = state.P
        self.info_vectors_ = state.z
        self.positions_ = x[:, 1:]
        self.covariances_ = cov
        self.available_ = ok
        if not ok.any():
            raise ValueError("no agent accumulated enough information to localize")
        self.position_ = self.positions_[ok].mean(axis=0)
        self.n_features_in_ = X.shape[1]
        return self
