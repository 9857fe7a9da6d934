"""Tail heterogeneity across athletes: lambda-hat, the R-hat surface and variance reduction.

For athlete ``l`` with records ``j`` let ``d_j = n - R_j`` (zero for the maximum)
and ``A_j = [d_j < k]``. The ordered-pair count

    sum_{j1 != j2} [d_{j1} < k] [d_{j2} < k/u]

equals ``sum_j (a_l - A_j) [d_j < k/u]`` with ``a_l = sum_j A_j``. So lambda-hat
is a weighted count of observations whose depth falls below ``k/u``. Every
observation is a single jump of the step function, which gives ``m_lambda``
in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, HetEVTWarning
from .ingest import SpeedSample

DELTA_CLAMP = (0.0, 0.999)
_SNAP_RTOL = 1e-9


def _snap(t):
    """Round thresholds within float noise of an integer onto it.

    ``n - k/u`` is compared with integer ranks, so a value like 10.000000000000002
    that stands for an exact 10 must not flip a strict inequality.
    """
    t = np.asarray(t, dtype=float)
    r = np.round(t)
    return np.where(np.abs(t - r) <= _SNAP_RTOL * np.maximum(1.0, np.abs(t)), r, t)


def ordinal_ranks(values) -> np.ndarray:
    """Ascending 1-based ranks; exact ties (duplicated singletons) break by position."""
    x = np.asarray(getattr(values, "values", values), dtype=float)
    ranks = np.empty(len(x), dtype=np.int64)
    ranks[np.argsort(x, kind="stable")] = np.arange(1, len(x) + 1)
    return ranks


def _check_inputs(sample: SpeedSample, ranks, k):
    if sample.p and sample.group_sizes.min() < 2:
        raise DataError("every athlete needs >= 2 records; call prepare_for_lambda first")
    ranks = np.asarray(ranks, dtype=np.int64)
    n = sample.n
    if ranks.shape != (n,):
        raise DataError("ranks must have one entry per observation")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} outside [1, n-1] for n={n}")
    return ranks, n


_MAX_SCALE = 2**20


def _weight_scale(sizes) -> int:
    """Common denominator of the pair weights, or 0 if it would be too large."""
    scale = 1
    for m in np.unique(sizes):
        scale = math.lcm(scale, int(m) - 1)
        if scale > _MAX_SCALE:
            return 0
    return scale


def _pair_weights(sample, depth, k):
    """Jump weights as numerators over ``scale`` (integers when scale > 0)."""
    labels = sample.labels
    above = (depth < k).astype(np.int64)
    per_athlete = np.bincount(labels, weights=above, minlength=sample.p).astype(np.int64)
    count = per_athlete[labels] - above
    scale = _weight_scale(sample.group_sizes)
    if scale:
        return (count * (scale // (sample.group_sizes[labels] - 1))).astype(float), scale
    return count / (sample.group_sizes[labels] - 1), 1


def _step_representation(sample, ranks, k):
    """Sorted jump depths, weight numerators and their common denominator."""
    ranks, n = _check_inputs(sample, ranks, k)
    depth = n - ranks
    w, scale = _pair_weights(sample, depth, k)
    keep = w > 0
    order = np.argsort(depth[keep], kind="stable")
    return depth[keep][order], w[keep][order], scale


def _evaluate_steps(depths, weights, k, u, scale=1):
    # integer numerators keep the cumulative sum exact; one rounding at the end
    cum = np.concatenate(([0.0], np.cumsum(weights)))
    idx = np.searchsorted(depths, _snap(k / np.asarray(u, dtype=float)), side="left")
    return cum[idx] / (scale * k)


def lambda_hat(sample: SpeedSample, ranks, k: int, u):
    """Estimate lambda(u); ``u`` may be a scalar or an array of positive reals."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0):
        raise ValueError("u must be positive")
    depths, weights, scale = _step_representation(sample, ranks, k)
    out = _evaluate_steps(depths, weights, k, u_arr, scale)
    return float(out) if out.ndim == 0 else out


def _athlete_counts(sample, depth, thresholds):
    """Matrix (p, len(thresholds)) of per-athlete counts of ``depth < threshold``."""
    labels = sample.labels
    out = np.empty((sample.p, len(thresholds)))
    for i, t in enumerate(thresholds):
        out[:, i] = np.bincount(labels, weights=(depth < t), minlength=sample.p)
    return out


def r_hat_grid(sample: SpeedSample, ranks, k: int, xs, ys) -> np.ndarray:
    """R-hat on the outer grid ``xs x ys``; entry ``[i, j]`` is R-hat(xs[i], ys[j])."""
    ranks, n = _check_inputs(sample, ranks, k)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("x and y must be positive")
    depth = n - ranks
    levels = np.unique(np.concatenate((xs, ys)))
    counts = _athlete_counts(sample, depth, _snap(k * levels))
    inv = 1.0 / (sample.group_sizes - 1)
    ix = np.searchsorted(levels, xs)
    iy = np.searchsorted(levels, ys)
    cross = (counts[:, ix] * inv[:, None]).T @ counts[:, iy]
    diag = inv @ counts
    both = diag[np.minimum.outer(ix, iy)]
    return (cross - both) / k


def r_hat(sample: SpeedSample, ranks, k: int, x: float, y: float) -> float:
    """R-hat(x, y): the two-threshold generalisation of lambda-hat."""
    return float(r_hat_grid(sample, ranks, k, [x], [y])[0, 0])


def homogeneous_reference(n: int, k: int, u):
    """Expected lambda-hat(u) if all observations were exchangeable."""
    if n < 2 or k < 1:
        raise ValueError("need n >= 2 and k >= 1")
    u = np.asarray(u, dtype=float)
    out = np.minimum((np.ceil(_snap(k / u)) - 1) / (n - 1), 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class HeterogeneityCurve:
    """lambda-hat on a u-grid, optionally with its exact step representation."""

    k: int
    u_grid: np.ndarray
    lambda_hat: np.ndarray
    lambda_at_1: float
    n: int | None = None
    p: int | None = None
    jump_depths: np.ndarray | None = field(default=None, repr=False)
    jump_weights: np.ndarray | None = field(default=None, repr=False)
    jump_scale: int = 1

    def __call__(self, u):
        """Evaluate exactly if the step data are held, else interpolate the grid."""
        if self.jump_depths is not None:
            out = _evaluate_steps(self.jump_depths, self.jump_weights, self.k, u, self.jump_scale)
        else:
            out = np.interp(u, self.u_grid, self.lambda_hat)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def is_exact(self) -> bool:
        return self.jump_depths is not None

    def to_csv_rows(self):
        return [(float(u), float(v)) for u, v in zip(self.u_grid, self.lambda_hat)]

    def header(self) -> dict:
        return {"k": self.k, "n": self.n, "p": self.p, "lambda_at_1": self.lambda_at_1}


def default_u_grid(size: int = 200) -> np.ndarray:
    return np.linspace(1.0 / size, 1.0, size)


def lambda_curve(sample: SpeedSample, ranks, k: int, u_grid=None) -> HeterogeneityCurve:
    u_grid = default_u_grid() if u_grid is None else np.asarray(u_grid, dtype=float)
    if np.any(u_grid <= 0) or np.any(np.diff(u_grid) <= 0):
        raise ValueError("u_grid must be positive and strictly ascending")
    depths, weights, scale = _step_representation(sample, ranks, k)
    values = _evaluate_steps(depths, weights, k, u_grid, scale)
    return HeterogeneityCurve(
        k=int(k),
        u_grid=u_grid,
        lambda_hat=values,
        lambda_at_1=float(_evaluate_steps(depths, weights, k, 1.0, scale)),
        n=sample.n,
        p=sample.p,
        jump_depths=depths,
        jump_weights=weights,
        jump_scale=scale,
    )


def curve_from_function(func, k: int = 1, grid_size: int = 2000) -> HeterogeneityCurve:
    """Tabulate an arbitrary lambda on a uniform grid over (1/grid_size, 1]."""
    u = default_u_grid(grid_size)
    values = np.asarray(func(u), dtype=float)
    return HeterogeneityCurve(k=k, u_grid=u, lambda_hat=values, lambda_at_1=float(func(1.0)))


def m_lambda(curve: HeterogeneityCurve, x: float) -> float:
    """(1 + x) * integral_0^1 u^x lambda(u) du.

    Step curves integrate in closed form: each jump at ``u = k/d`` contributes
    ``w * min(k/d, 1)^(1+x) / k``. Tabulated curves use the trapezoid rule on
    their grid plus a constant extension of the first value down to zero.
    """
    if not x > -1:
        raise ValueError("m_lambda needs x > -1")
    if curve.is_exact:
        d = curve.jump_depths
        reach = np.where(d <= curve.k, 1.0, curve.k / np.maximum(d, 1))
        return float(np.sum(curve.jump_weights * reach ** (1 + x)) / (curve.jump_scale * curve.k))
    u, lam = curve.u_grid, curve.lambda_hat
    # lambda linear between grid points, u**x integrated exactly per cell
    a, b = u[:-1], u[1:]
    slope = np.diff(lam) / np.diff(u)
    p1 = b ** (1 + x) - a ** (1 + x)
    p2 = (1 + x) / (2 + x) * (b ** (2 + x) - a ** (2 + x))
    cells = (lam[:-1] - slope * a) * p1 + slope * p2
    head = lam[0] * u[0] ** (1 + x)
    return float(head + np.sum(cells))


def weights(gamma: float) -> tuple[float, float, float]:
    """Weights (w0, w1, w2) of the variance-reduction combination; they sum to one."""
    g = gamma
    denom = 1 - 3 * g + 4 * g * g
    w0 = (1 - 2 * g) * (1 - 3 * g) * (1 - 4 * g) / denom
    w1 = -2 * g * (1 - g) * (1 - 4 * g) / denom
    w2 = 8 * g * (1 - 2 * g) ** 2 / denom
    return w0, w1, w2


@dataclass(frozen=True)
class VarianceReduction:
    delta: float
    delta_raw: float
    clamped: bool
    weights: tuple[float, float, float]
    lambda_at_1: float
    m_neg_gamma: float
    m_neg_2gamma: float

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "delta_raw": self.delta_raw,
            "clamped": self.clamped,
            "weights": list(self.weights),
            "lambda_at_1": self.lambda_at_1,
            "m_neg_gamma": self.m_neg_gamma,
            "m_neg_2gamma": self.m_neg_2gamma,
        }


def delta_hat(curve: HeterogeneityCurve, gamma: float, clamp=DELTA_CLAMP) -> VarianceReduction:
    """Relative variance reduction of the endpoint estimator due to heterogeneity."""
    if not gamma < 0.5:
        raise ValueError("delta_hat needs gamma < 1/2")
    w = weights(gamma)
    m1 = m_lambda(curve, -gamma)
    m2 = m_lambda(curve, -2 * gamma)
    raw = w[0] * curve.lambda_at_1 + w[1] * m1 + w[2] * m2
    lo, hi = clamp
    clipped = min(max(raw, lo), hi)
    if clipped != raw:
        warnings.warn(
            f"delta estimate {raw:.4f} clamped to {clipped:.4f} (k={curve.k})", HetEVTWarning
        )
    return VarianceReduction(
        delta=clipped,
        delta_raw=raw,
        clamped=clipped != raw,
        weights=w,
        lambda_at_1=curve.lambda_at_1,
        m_neg_gamma=m1,
        m_neg_2gamma=m2,
    )


def lambda_at_one(sample: SpeedSample, ranks, k: int) -> float:
    return lambda_hat(sample, ranks, k, 1.0)


__all__ = [
    "HeterogeneityCurve",
    "VarianceReduction",
    "curve_from_function",
    "default_u_grid",
    "delta_hat",
    "homogeneous_reference",
    "lambda_at_one",
    "lambda_curve",
    "lambda_hat",
    "m_lambda",
    "ordinal_ranks",
    "r_hat",
    "r_hat_grid",
    "weights",
]
