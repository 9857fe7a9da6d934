"""Endpoint estimation for grouped, heterogeneous extreme-value data."""

from .estimators import HeterogeneityFunction, HeterogeneousEndpointEstimator, MomentEndpointEstimator
from .exceptions import (
    DataError,
    DegenerateSpacingsError,
    HetEVTError,
    HetEVTWarning,
    NoFiniteEndpointError,
    SweepError,
)
from .heterogeneity import (
    HeterogeneityCurve,
    VarianceReduction,
    delta_hat,
    homogeneous_reference,
    lambda_curve,
    lambda_hat,
    m_lambda,
    r_hat,
    weights,
)
from .inference import (
    InferenceResult,
    SweepResult,
    extrapolation_series,
    lower_confidence_bound,
    normal_quantile,
    sigma2_iid,
    sweep,
)
from .ingest import (
    RecordTable,
    SpeedSample,
    cap_per_athlete,
    group,
    parse_csv,
    prepare_for_lambda,
    smooth_ties,
    to_speed,
    to_time,
)
from .tail import TailFit, endpoint, fit_tail, log_moments, moment_gamma, scale, sort_ascending

__version__ = "0.1.0"
