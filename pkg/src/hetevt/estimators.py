"""Estimator objects in the scikit-learn style.

``fit`` takes speeds (km/h) and, for the grouped estimators, one athlete
label per observation, the same way scikit-learn's group-aware splitters do.
Fitted attributes end in an underscore.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_sample, check_level, check_speeds
from .heterogeneity import default_u_grid, delta_hat, lambda_curve, ordinal_ranks, r_hat_grid
from .inference import (
    DEFAULT_LEVELS,
    TailContext,
    extrapolation_series,
    infer,
    lower_confidence_bound,
    sweep,
)
from .ingest import prepare_for_lambda, to_time
from .tail import fit_tail, resolve_k, sort_ascending


class MomentEndpointEstimator(BaseEstimator):
    """Moment estimator of the extreme value index and the right endpoint.

    Parameters
    ----------
    k : int, optional
        Number of upper order statistics. Mutually exclusive with ``k_frac``.
    k_frac : float, default=0.05
        ``k`` as a fraction of the sample size, used when ``k`` is None.
    distance_m : float, default=100.0
        Race distance used to express the endpoint as a time.
    """

    def __init__(self, k=None, k_frac=0.05, distance_m=100.0):
        self.k = k
        self.k_frac = k_frac
        self.distance_m = distance_m

    def fit(self, X, y=None):
        values = check_speeds(X)
        self.ordered_ = sort_ascending(values)
        self.n_samples_ = len(values)
        self.k_ = resolve_k(self.n_samples_, self.k, None if self.k is not None else self.k_frac)
        self.tail_fit_ = fit_tail(self.ordered_, self.k_)
        self.gamma_ = self.tail_fit_.gamma
        self.endpoint_ = self.tail_fit_.endpoint
        self.scale_ = self.tail_fit_.scale
        self.threshold_ = self.tail_fit_.threshold
        self.endpoint_time_ = to_time(self.endpoint_, self.distance_m)
        return self

    def extrapolation(self, max_rank=None):
        check_is_fitted(self, "tail_fit_")
        return extrapolation_series(self.tail_fit_, self.ordered_, max_rank)


class HeterogeneityFunction(BaseEstimator):
    """Rank-based estimate of the tail heterogeneity function from grouped data.

    Athletes with a single record are handled by ``singletons`` (``"drop"``
    or ``"duplicate"``) before ranking.
    """

    def __init__(self, k=None, k_frac=0.05, singletons="drop", grid_size=200):
        self.k = k
        self.k_frac = k_frac
        self.singletons = singletons
        self.grid_size = grid_size

    def fit(self, X, groups=None):
        sample = prepare_for_lambda(as_sample(X, groups), self.singletons)
        self.sample_ = sample
        self.ranks_ = ordinal_ranks(sample.values)
        self.k_ = resolve_k(sample.n, self.k, None if self.k is not None else self.k_frac)
        self.curve_ = lambda_curve(sample, self.ranks_, self.k_, default_u_grid(self.grid_size))
        self.lambda_at_1_ = self.curve_.lambda_at_1
        return self

    def evaluate(self, u):
        """lambda-hat at ``u`` (scalar or array)."""
        check_is_fitted(self, "curve_")
        return self.curve_(u)

    def r_hat(self, xs, ys):
        check_is_fitted(self, "curve_")
        return r_hat_grid(self.sample_, self.ranks_, self.k_, xs, ys)

    def variance_reduction(self, gamma):
        check_is_fitted(self, "curve_")
        return delta_hat(self.curve_, gamma)


class HeterogeneousEndpointEstimator(BaseEstimator):
    """Endpoint estimate with confidence bounds corrected for athlete heterogeneity.

    The tail fit uses every record. The variance reduction is estimated on
    the sample after the singleton policy, at ``lambda_k`` (default: the
    tail-fit ``k``). With ``use_delta=False`` the bounds are the i.i.d. ones.
    """

    def __init__(
        self,
        k=None,
        k_frac=0.05,
        levels=DEFAULT_LEVELS,
        singletons="drop",
        lambda_k=None,
        use_delta=True,
        distance_m=100.0,
    ):
        self.k = k
        self.k_frac = k_frac
        self.levels = levels
        self.singletons = singletons
        self.lambda_k = lambda_k
        self.use_delta = use_delta
        self.distance_m = distance_m

    def fit(self, X, groups=None):
        sample = as_sample(X, groups)
        levels = tuple(check_level(lv) for lv in self.levels)
        ctx = TailContext(sample, self.singletons, self.distance_m)
        self.context_ = ctx
        self.k_ = resolve_k(ctx.n, self.k, None if self.k is not None else self.k_frac)
        self.tail_fit_ = fit_tail(ctx.ordered, self.k_)
        lam_k = self.k_ if self.lambda_k is None else int(self.lambda_k)
        lam_k = min(lam_k, ctx.lambda_sample.n - 1)
        self.curve_ = lambda_curve(ctx.lambda_sample, ctx.lambda_ranks, lam_k)
        if self.use_delta:
            self.variance_reduction_ = delta_hat(self.curve_, self.tail_fit_.gamma)
            delta = self.variance_reduction_
        else:
            self.variance_reduction_ = None
            delta = 0.0
        self.result_ = infer(self.tail_fit_, delta, levels, self.distance_m)
        self.gamma_ = self.result_.gamma
        self.endpoint_ = self.result_.endpoint_speed
        self.endpoint_time_ = self.result_.endpoint_time
        self.delta_ = self.result_.delta
        self.lambda_at_1_ = self.curve_.lambda_at_1
        return self

    def confidence_bound(self, level):
        check_is_fitted(self, "result_")
        return lower_confidence_bound(self.tail_fit_, self.delta_, check_level(level), self.distance_m)

    def sweep(self, k_min_frac=0.03, k_max_frac=0.07, step=1):
        check_is_fitted(self, "context_")
        return sweep(
            self.context_.sample,
            k_min_frac,
            k_max_frac,
            step,
            tuple(self.levels),
            self.singletons,
            self.use_delta,
            self.distance_m,
            context=self.context_,
        )

    def extrapolation(self, max_rank=None):
        check_is_fitted(self, "tail_fit_")
        return extrapolation_series(self.tail_fit_, self.context_.ordered, max_rank)

    def lower_bounds_time(self):
        check_is_fitted(self, "result_")
        return dict(self.result_.lcb_time)


__all__ = ["HeterogeneityFunction", "HeterogeneousEndpointEstimator", "MomentEndpointEstimator"]
