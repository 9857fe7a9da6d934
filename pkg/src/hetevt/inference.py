"""Confidence bounds on the ultimate record, k-sweeps and the extrapolation line."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .exceptions import (
    DegenerateSpacingsError,
    HetEVTWarning,
    NoFiniteEndpointError,
    SweepError,
)
from .heterogeneity import VarianceReduction, delta_hat, lambda_curve, ordinal_ranks
from .ingest import SpeedSample, prepare_for_lambda, to_time
from .tail import OrderedSample, TailFit, fit_tail, sort_ascending

DEFAULT_LEVELS = (0.75, 0.95)
_STD_NORMAL = NormalDist()


def sigma2_iid(gamma: float) -> float:
    """Asymptotic variance factor of the log-endpoint statistic for i.i.d. data."""
    g = gamma
    den = (1 - 2 * g) * (1 - 3 * g) * (1 - 4 * g)
    if not den > 0 or not g < 0.25:
        raise ValueError(f"sigma2_iid undefined for gamma={gamma}")
    return (1 - g) ** 2 * (1 - 3 * g + 4 * g * g) / den


def normal_quantile(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    return _STD_NORMAL.inv_cdf(level)


def stat_scale(fit: TailFit) -> float:
    """Normalising factor ``(gamma^2 / (m1 * v_n) - gamma) * sqrt(k)``."""
    g = fit.gamma
    return (g * g / (fit.m1 * fit.v_n) - g) * math.sqrt(fit.k)


@dataclass(frozen=True)
class Bound:
    level: float
    ucb_speed: float
    lcb_time: float
    lcb_speed: float
    ucb_time: float


def lower_confidence_bound(fit: TailFit, delta: float, level: float, distance_m: float = 100.0) -> Bound:
    """One-sided bound on the ultimate record at ``level``.

    The upper bound on the speed endpoint is ``endpoint * exp(z * sd / S)``
    with ``sd = sqrt(sigma2_iid * (1 - delta))``; its time is the lower bound
    on the ultimate time. The mirrored pair (lower speed, upper time) is
    reported alongside.
    """
    if not fit.gamma < 0:
        raise NoFiniteEndpointError(f"gamma={fit.gamma:.4g} >= 0")
    if not 0 <= delta < 1:
        raise ValueError(f"delta={delta} outside [0, 1)")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    z = normal_quantile(level)
    half = z * math.sqrt(sigma2_iid(fit.gamma) * (1 - delta)) / stat_scale(fit)
    hi = fit.endpoint * math.exp(half)
    lo = fit.endpoint * math.exp(-half)
    return Bound(level, hi, to_time(hi, distance_m), lo, to_time(lo, distance_m))


def _level_key(level: float) -> str:
    return f"{level:g}"


@dataclass(frozen=True)
class InferenceResult:
    k: int
    gamma: float
    endpoint_speed: float
    endpoint_time: float
    sigma2_iid: float
    delta: float
    stat_scale: float
    lcb_time: dict
    ucb_speed: dict
    ucb_time: dict = field(default_factory=dict)
    lcb_speed: dict = field(default_factory=dict)
    fit: TailFit | None = field(default=None, repr=False)
    variance_reduction: VarianceReduction | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "k": self.k,
            "gamma": self.gamma,
            "endpoint_speed": self.endpoint_speed,
            "endpoint_time": self.endpoint_time,
            "sigma2_iid": self.sigma2_iid,
            "delta": self.delta,
            "stat_scale": self.stat_scale,
            "lcb_time": dict(self.lcb_time),
            "ucb_speed": dict(self.ucb_speed),
            "ucb_time": dict(self.ucb_time),
            "lcb_speed": dict(self.lcb_speed),
        }
        if self.fit is not None:
            out["tail_fit"] = self.fit.to_dict()
        if self.variance_reduction is not None:
            out["variance_reduction"] = self.variance_reduction.to_dict()
        return out


def infer(fit: TailFit, delta, levels=DEFAULT_LEVELS, distance_m: float = 100.0) -> InferenceResult:
    """Bundle point estimate and bounds; ``delta`` is a float or a VarianceReduction."""
    vr = delta if isinstance(delta, VarianceReduction) else None
    d = vr.delta if vr is not None else float(delta)
    bounds = [lower_confidence_bound(fit, d, lv, distance_m) for lv in levels]
    return InferenceResult(
        k=fit.k,
        gamma=fit.gamma,
        endpoint_speed=fit.endpoint,
        endpoint_time=to_time(fit.endpoint, distance_m),
        sigma2_iid=sigma2_iid(fit.gamma),
        delta=d,
        stat_scale=stat_scale(fit),
        lcb_time={_level_key(b.level): b.lcb_time for b in bounds},
        ucb_speed={_level_key(b.level): b.ucb_speed for b in bounds},
        ucb_time={_level_key(b.level): b.ucb_time for b in bounds},
        lcb_speed={_level_key(b.level): b.lcb_speed for b in bounds},
        fit=fit,
        variance_reduction=vr,
    )


def lower_median(values) -> float:
    """Median taking the lower middle element for even counts."""
    s = sorted(values)
    if not s:
        raise ValueError("median of an empty sequence")
    return s[(len(s) - 1) // 2]


@dataclass(frozen=True)
class SweepResult:
    rows: list
    median_endpoint_time: float
    median_lcb_time: dict
    excluded_k: list
    median_gamma: float = float("nan")
    median_delta: float = float("nan")
    clamped_k: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "k_min": self.rows[0].k,
            "k_max": self.rows[-1].k,
            "rows": len(self.rows),
            "median_gamma": self.median_gamma,
            "median_endpoint_time": self.median_endpoint_time,
            "median_lcb_time": dict(self.median_lcb_time),
            "median_delta": self.median_delta,
            "excluded_k": list(self.excluded_k),
            "clamped_k": list(self.clamped_k),
        }


def summarize_rows(rows, excluded_k=(), clamped_k=()) -> SweepResult:
    """Median summary over already-computed rows."""
    rows = sorted(rows, key=lambda r: r.k)
    if not rows:
        raise SweepError("every k in the sweep was excluded")
    levels = list(rows[0].lcb_time)
    return SweepResult(
        rows=rows,
        median_endpoint_time=lower_median(r.endpoint_time for r in rows),
        median_lcb_time={lv: lower_median(r.lcb_time[lv] for r in rows) for lv in levels},
        excluded_k=sorted(excluded_k),
        median_gamma=lower_median(r.gamma for r in rows),
        median_delta=lower_median(r.delta for r in rows),
        clamped_k=sorted(clamped_k),
    )


def k_grid(n: int, k_min_frac: float, k_max_frac: float, step: int = 1) -> range:
    if not 0 < k_min_frac < k_max_frac < 1:
        raise ValueError("need 0 < k_min_frac < k_max_frac < 1")
    lo = max(1, math.ceil(k_min_frac * n))
    hi = min(n - 1, math.floor(k_max_frac * n))
    return range(lo, hi + 1, int(step))


class TailContext:
    """Sorted data for the tail fit plus ranks of the lambda-ready sample.

    Built once and reused for every k of a sweep.
    """

    def __init__(self, sample: SpeedSample, policy: str = "drop", distance_m: float = 100.0):
        self.sample = sample
        self.ordered: OrderedSample = sort_ascending(sample.values)
        self.lambda_sample = prepare_for_lambda(sample, policy)
        self.lambda_ranks = ordinal_ranks(self.lambda_sample.values)
        self.distance_m = distance_m

    @property
    def n(self) -> int:
        return self.sample.n

    def fit(self, k: int) -> TailFit:
        return fit_tail(self.ordered, k)

    def variance_reduction(self, k: int, gamma: float, with_delta: bool = True):
        if not with_delta:
            return 0.0
        k_lam = min(k, self.lambda_sample.n - 1)
        curve = lambda_curve(self.lambda_sample, self.lambda_ranks, k_lam, u_grid=[1.0])
        return delta_hat(curve, gamma)

    def result(self, k: int, levels=DEFAULT_LEVELS, with_delta: bool = True) -> InferenceResult:
        fit = self.fit(k)
        if not fit.gamma < 0:
            raise NoFiniteEndpointError(f"gamma={fit.gamma:.4g} >= 0 at k={k}")
        vr = self.variance_reduction(k, fit.gamma, with_delta)
        return infer(fit, vr, levels, self.distance_m)


def sweep(
    sample: SpeedSample,
    k_min_frac: float = 0.03,
    k_max_frac: float = 0.07,
    step: int = 1,
    levels=DEFAULT_LEVELS,
    policy: str = "drop",
    with_delta: bool = True,
    distance_m: float = 100.0,
    context: TailContext | None = None,
) -> SweepResult:
    """Estimate at every k in the fractional range and summarise by medians.

    k values where the index estimate is non-negative (or spacings degenerate)
    are skipped and listed in ``excluded_k``.
    """
    ctx = context or TailContext(sample, policy, distance_m)
    rows, excluded, clamped = [], [], []
    for k in k_grid(ctx.n, k_min_frac, k_max_frac, step):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", HetEVTWarning)
                row = ctx.result(k, levels, with_delta)
        except (NoFiniteEndpointError, DegenerateSpacingsError):
            excluded.append(k)
            continue
        if row.variance_reduction is not None and row.variance_reduction.clamped:
            clamped.append(k)
        rows.append(row)
    if excluded:
        warnings.warn(f"{len(excluded)} k value(s) excluded: no finite endpoint", HetEVTWarning)
    if clamped:
        warnings.warn(f"delta clamped at {len(clamped)} k value(s)", HetEVTWarning)
    return summarize_rows(rows, excluded, clamped)


@dataclass(frozen=True)
class ExtrapolationSeries:
    rank: np.ndarray
    transformed_rank: np.ndarray
    speed: np.ndarray
    slope: float
    intercept: float
    gamma: float
    k: int

    def line(self, transformed_rank):
        return self.intercept + self.slope * np.asarray(transformed_rank, dtype=float)

    def sidecar(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "gamma": self.gamma, "k": self.k}


def extrapolation_series(fit: TailFit, ordered, max_rank: int | None = None) -> ExtrapolationSeries:
    """Top speeds against ``rank^(-gamma)`` with the fitted straight line.

    Rank 1 is the fastest record. The line has slope ``(a / gamma) * k^gamma``
    and meets the vertical axis at the endpoint estimate.
    """
    if not fit.gamma < 0:
        raise NoFiniteEndpointError(f"gamma={fit.gamma:.4g} >= 0")
    s = ordered.sorted if isinstance(ordered, OrderedSample) else np.sort(np.asarray(ordered, float))
    max_rank = fit.k if max_rank is None else min(int(max_rank), len(s))
    rank = np.arange(1, max_rank + 1)
    return ExtrapolationSeries(
        rank=rank,
        transformed_rank=rank ** (-fit.gamma),
        speed=s[::-1][:max_rank].copy(),
        slope=fit.scale / fit.gamma * fit.k**fit.gamma,
        intercept=fit.endpoint,
        gamma=fit.gamma,
        k=fit.k,
    )
