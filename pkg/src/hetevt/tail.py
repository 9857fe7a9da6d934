"""Order statistics and the moment estimator of the extreme value index and endpoint."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import DataError, DegenerateSpacingsError, NoFiniteEndpointError

TAILFIT_FIELDS = ("k", "threshold", "m1", "m2", "v_n", "gamma", "endpoint", "scale")


@dataclass(frozen=True)
class OrderedSample:
    """Ascending order statistics plus the ascending rank of every input value."""

    sorted: np.ndarray
    ranks: np.ndarray

    @property
    def n(self) -> int:
        return len(self.sorted)


@dataclass(frozen=True)
class TailFit:
    k: int
    threshold: float
    m1: float
    m2: float
    v_n: float
    gamma: float
    endpoint: float
    scale: float

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> list:
        return [getattr(self, f) for f in TAILFIT_FIELDS]


def sort_ascending(values) -> OrderedSample:
    """Sort strictly distinct values; ``ranks[i]`` is the 1-based rank of ``values[i]``."""
    x = np.asarray(getattr(values, "values", values), dtype=float)
    order = np.argsort(x, kind="stable")
    s = x[order]
    if len(s) > 1 and np.any(np.diff(s) == 0):
        raise DataError("sample contains duplicate values; smooth ties first")
    ranks = np.empty(len(x), dtype=np.int64)
    ranks[order] = np.arange(1, len(x) + 1)
    return OrderedSample(s, ranks)


def _sorted_array(ordered):
    return ordered.sorted if isinstance(ordered, OrderedSample) else np.asarray(ordered, dtype=float)


def log_moments(ordered, k: int) -> tuple[float, float]:
    """First and second moments of the top-k log-spacings above ``X_{n-k,n}``."""
    s = _sorted_array(ordered)
    n = len(s)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} outside [1, n-1] for n={n}")
    top = s[n - k - 1:]
    if top[0] <= 0:
        raise DataError("log-moments need positive values")
    spacings = np.log(top[1:]) - np.log(top[0])
    return float(np.mean(spacings)), float(np.mean(spacings**2))


def moment_gamma(m1: float, m2: float) -> tuple[float, float]:
    """Return ``(v_n, gamma)`` of the moment estimator."""
    if not m2 > m1 * m1:
        raise DegenerateSpacingsError(f"m2={m2!r} must exceed m1^2={m1 * m1!r}")
    v_n = 0.5 / (1.0 - m1 * m1 / m2)
    return v_n, m1 + 1.0 - v_n


def endpoint(threshold: float, m1: float, v_n: float, gamma: float) -> float:
    if not gamma < 0:
        raise NoFiniteEndpointError(f"gamma={gamma:.4g} >= 0: no finite endpoint")
    return threshold * (1.0 - m1 * v_n / gamma)


def scale(threshold: float, m1: float, v_n: float) -> float:
    """Scale ``a`` for which ``endpoint == threshold - a / gamma``."""
    return threshold * m1 * v_n


def fit_tail(ordered, k: int) -> TailFit:
    """All tail statistics at ``k``; raises when ``gamma >= 0``."""
    s = _sorted_array(ordered)
    m1, m2 = log_moments(s, k)
    v_n, gamma = moment_gamma(m1, m2)
    threshold = float(s[len(s) - k - 1])
    return TailFit(
        k=int(k),
        threshold=threshold,
        m1=m1,
        m2=m2,
        v_n=v_n,
        gamma=gamma,
        endpoint=endpoint(threshold, m1, v_n, gamma),
        scale=scale(threshold, m1, v_n),
    )


def resolve_k(n: int, k=None, k_frac=None) -> int:
    """Pick k from an explicit count or a fraction of ``n`` (rounded)."""
    if (k is None) == (k_frac is None):
        raise ValueError("give exactly one of k and k_frac")
    if k is None:
        if not 0 < k_frac < 1:
            raise ValueError("k_frac must lie in (0, 1)")
        k = int(round(k_frac * n))
    k = int(k)
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} outside [1, n-1] for n={n}")
    return k
