import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import DataError
from .ingest import SpeedSample


def check_speeds(X) -> np.ndarray:
    """Flatten ``X`` to a 1-D float array of finite positive speeds."""
    arr = check_array(X, ensure_2d=False, dtype=np.float64, ensure_all_finite=True)
    if arr.ndim == 2:
        if arr.shape[1] != 1:
            raise DataError(f"expected a single feature column, got shape {arr.shape}")
        arr = arr[:, 0]
    if arr.size < 2:
        raise DataError("need at least two observations")
    if np.any(arr <= 0):
        raise DataError("speeds must be positive")
    return arr


def as_sample(X, groups=None) -> SpeedSample:
    """Accept a SpeedSample, or speeds plus one group label per observation."""
    if isinstance(X, SpeedSample):
        if groups is not None:
            raise ValueError("groups must be None when X is a SpeedSample")
        return X
    values = check_speeds(X)
    if groups is None:
        raise ValueError("groups (athlete labels) are required for grouped estimators")
    groups = np.asarray(groups)
    if groups.shape != values.shape:
        raise DataError(f"groups has shape {groups.shape}, expected {values.shape}")
    return SpeedSample.from_groups(values, groups)


def check_level(level) -> float:
    level = float(level)
    if not 0.5 <= level < 1:
        raise ValueError(f"confidence level {level} outside [0.5, 1)")
    return level
