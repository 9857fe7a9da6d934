"""Synthetic athletes with known endpoints, exact pre-limit oracles and Monte Carlo experiments.

Each athlete draws i.i.d. speeds from one mixture component with survival
function ``((endpoint - x) / scale) ** shape`` on ``[endpoint - scale, endpoint]``,
a generalised Pareto law with extreme value index ``-1 / shape``.

Randomness: replication ``r`` of a scenario with seed ``s`` uses one PCG64
stream seeded by ``SeedSequence([s, r])``. Uniforms are consumed in athlete
order, athlete ``l`` taking the ``l``-th block of ``m_l`` draws.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import DegenerateSpacingsError, HetEVTWarning, NoFiniteEndpointError
from .heterogeneity import (
    curve_from_function,
    delta_hat,
    lambda_curve,
    ordinal_ranks,
    r_hat_grid,
)
from .inference import TailContext, lower_confidence_bound
from .ingest import SpeedSample, to_time
from .tail import resolve_k

FAMILY = "reverse_weibull"


@dataclass(frozen=True)
class Component:
    share: float
    endpoint: float
    scale: float
    shape: float

    def __post_init__(self):
        if not (self.share > 0 and self.scale > 0 and self.shape > 0):
            raise ValueError(f"invalid component parameters: {self}")
        if not self.endpoint - self.scale > 0:
            raise ValueError("component support must stay on positive speeds")

    @property
    def gamma(self) -> float:
        return -1.0 / self.shape

    def sf(self, x):
        z = np.clip((self.endpoint - np.asarray(x, dtype=float)) / self.scale, 0.0, 1.0)
        return z**self.shape

    def sample(self, uniforms):
        return self.endpoint - self.scale * uniforms ** (1.0 / self.shape)


@dataclass(frozen=True)
class Scenario:
    p: int
    m: int | tuple = 5
    components: tuple = (Component(1.0, 38.0, 2.0, 5.0),)
    seed: int = 20240101
    name: str = ""

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Component) else Component(**c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if isinstance(self.m, (list, tuple, np.ndarray)):
            m = tuple(int(v) for v in self.m)
            if len(m) != self.p:
                raise ValueError("per-athlete m must have length p")
            object.__setattr__(self, "m", m)
        if self.p < 1 or min(self.sizes) < 1:
            raise ValueError("need p >= 1 and every m >= 1")
        if not comps:
            raise ValueError("scenario needs at least one component")

    @property
    def sizes(self) -> np.ndarray:
        if isinstance(self.m, tuple):
            return np.array(self.m, dtype=np.int64)
        return np.full(self.p, int(self.m), dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.sizes.sum())

    def athlete_components(self) -> np.ndarray:
        """Component index per athlete, assigned in contiguous blocks by share."""
        shares = np.array([c.share for c in self.components], dtype=float)
        raw = shares / shares.sum() * self.p
        counts = np.floor(raw).astype(int)
        short = self.p - counts.sum()
        # largest remainder, earlier component wins ties
        for i in np.argsort(-(raw - counts), kind="stable")[:short]:
            counts[i] += 1
        return np.repeat(np.arange(len(self.components)), counts)

    def observation_counts(self) -> np.ndarray:
        """Number of observations per component."""
        return np.bincount(
            self.athlete_components(), weights=self.sizes, minlength=len(self.components)
        ).astype(np.int64)

    @property
    def true_endpoint(self) -> float:
        active = self.observation_counts() > 0
        return max(c.endpoint for c, a in zip(self.components, active) if a)

    @property
    def true_gamma(self) -> float:
        """Index of the average tail: the heaviest component at the top endpoint."""
        top = self.true_endpoint
        active = self.observation_counts() > 0
        return max(c.gamma for c, a in zip(self.components, active) if a and c.endpoint == top)

    def true_time(self, distance_m: float = 100.0) -> float:
        return to_time(self.true_endpoint, distance_m)

    def with_n(self, n: int) -> "Scenario":
        """Same design with ``p`` rescaled so that ``n = p * m`` (constant m only)."""
        if isinstance(self.m, tuple):
            raise ValueError("with_n needs a constant m")
        return replace(self, p=max(1, int(n) // int(self.m)))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "p": self.p,
            "m": list(self.m) if isinstance(self.m, tuple) else self.m,
            "family": {"type": FAMILY, "components": [asdict(c) for c in self.components]},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        fam = doc.get("family", {})
        if fam.get("type", FAMILY) != FAMILY:
            raise ValueError(f"unsupported family {fam.get('type')!r}")
        m = doc.get("m", 5)
        return cls(
            p=int(doc["p"]),
            m=tuple(m) if isinstance(m, list) else int(m),
            components=tuple(Component(**c) for c in fam["components"]),
            seed=int(doc.get("seed", 20240101)),
            name=doc.get("name", ""),
        )


def load_scenario(path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def homogeneous_scenario(n: int = 50_000, m: int = 5, seed: int = 20240101) -> Scenario:
    return Scenario(
        p=n // m, m=m, components=(Component(1.0, 38.0, 2.0, 5.0),), seed=seed, name="homogeneous"
    )


def two_group_scenario(n: int = 20_000, m: int = 5, seed: int = 20240102) -> Scenario:
    """A small fast group whose tail dominates the top 5%, plus a slower majority.

    At k/n = 5% the fast group holds 8% of observations, so the pre-limit
    lambda(1) is about 0.625.
    """
    return Scenario(
        p=n // m,
        m=m,
        components=(Component(0.08, 38.0, 2.0, 5.0), Component(0.92, 36.0, 3.0, 5.0)),
        seed=seed,
        name="two_group",
    )


@dataclass(frozen=True)
class SimulatedSample:
    sample: SpeedSample
    true_endpoint: float
    true_gamma: float
    replication: int = 0


def rng_for(seed: int, replication: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(replication)])))


def generate(scenario: Scenario, replication: int = 0) -> SimulatedSample:
    """Draw one grouped sample; deterministic in ``(scenario.seed, replication)``."""
    sizes = scenario.sizes
    comp_of_obs = np.repeat(scenario.athlete_components(), sizes)
    u = rng_for(scenario.seed, replication).random(scenario.n)
    values = np.empty(scenario.n)
    for i, comp in enumerate(scenario.components):
        sel = comp_of_obs == i
        values[sel] = comp.sample(u[sel])
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    ids = tuple(f"a{i:06d}" for i in range(scenario.p))
    sample = SpeedSample(values, offsets, sizes, ids)
    return SimulatedSample(sample, scenario.true_endpoint, scenario.true_gamma, replication)


class TailOracle:
    """Exact pre-limit probabilities ``P(U_i < s)`` for a scenario's average law."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        counts = scenario.observation_counts()
        self.n = int(counts.sum())
        self.counts = counts
        self.weights = counts / self.n
        self.lo = min(c.endpoint - c.scale for c in scenario.components)
        self.hi = max(c.endpoint for c, w in zip(scenario.components, self.weights) if w > 0)

    def mixture_sf(self, x) -> float:
        return float(sum(w * c.sf(x) for w, c in zip(self.weights, self.scenario.components)))

    def quantile(self, s: float) -> float:
        """Speed ``q`` with average survival ``s``; bisection-grade precision."""
        if s >= 1:
            return self.lo
        if s <= 0:
            return self.hi
        lo, hi = self.lo, self.hi
        # mixture_sf is non-increasing; keep sf(lo) >= s > sf(hi)
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if self.mixture_sf(mid) >= s:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def exceed(self, s: float) -> np.ndarray:
        """Per-component probability that an observation's U falls below ``s``."""
        if s >= 1:
            return np.ones(len(self.counts))
        q = self.quantile(s)
        return np.array([float(c.sf(q)) for c in self.scenario.components])

    def r(self, k: int, x: float, y: float) -> float:
        px = self.exceed(k * x / self.n)
        py = px if x == y else self.exceed(k * y / self.n)
        return float(np.sum(self.counts * px * py) / k)

    def r_grid(self, k: int, xs, ys) -> np.ndarray:
        probs = {v: self.exceed(k * v / self.n) for v in set(map(float, xs)) | set(map(float, ys))}
        out = np.empty((len(xs), len(ys)))
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                out[i, j] = np.sum(self.counts * probs[float(x)] * probs[float(y)]) / k
        return out

    def lam(self, k: int, u):
        """Pre-limit lambda(u) = R(1, 1/u) at this scenario's n."""
        p1 = self.exceed(k / self.n)
        vals = np.array(
            [np.sum(self.counts * p1 * self.exceed(k / (self.n * v))) / k for v in np.atleast_1d(u)]
        )
        return float(vals[0]) if np.ndim(u) == 0 else vals

    def delta(self, k: int, gamma: float | None = None, grid_size: int = 2000) -> float:
        gamma = self.scenario.true_gamma if gamma is None else gamma
        curve = curve_from_function(lambda u: self.lam(k, u), k, grid_size)
        return delta_hat(curve, gamma, clamp=(-np.inf, np.inf)).delta_raw


def true_lambda_oracle(scenario: Scenario, n: int | None, k: int, u_grid) -> np.ndarray:
    """Pre-limit lambda at finite ``(n, k)``; ``n`` rescales the scenario when given."""
    sc = scenario if n is None or n == scenario.n else scenario.with_n(n)
    return TailOracle(sc).lam(k, u_grid)


def true_r_oracle(scenario: Scenario, k: int, xs, ys) -> np.ndarray:
    return TailOracle(scenario).r_grid(k, np.atleast_1d(xs), np.atleast_1d(ys))


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else float("nan")


@dataclass
class ExperimentResult:
    """Per-replication rows plus a JSON-ready summary."""

    name: str
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def write(self, directory, stem: str | None = None) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or self.name
        csv_path = directory / f"{stem}_replications.csv"
        json_path = directory / f"{stem}_summary.json"
        csv_path.write_text(self.csv_text(), encoding="utf-8")
        json_path.write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return csv_path, json_path

    def csv_text(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(_fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def coverage_experiment(
    scenario: Scenario,
    reps: int = 500,
    level: float = 0.95,
    k_frac: float = 0.05,
    levels=None,
) -> ExperimentResult:
    """Share of replications whose lower time bound lies below the true ultimate time.

    Each row carries the bound with the estimated variance reduction and the
    i.i.d. bound (delta = 0) from the same data, so paired comparisons come free.
    """
    if reps < 100:
        raise ValueError("coverage needs reps >= 100")
    levels = tuple(levels) if levels else (level,)
    true_time = scenario.true_time()
    columns = ["replication", "k", "gamma", "endpoint_time", "delta"]
    for lv in levels:
        columns += [f"lcb_time_{lv:g}", f"lcb_time_iid_{lv:g}"]
    res = ExperimentResult("coverage", columns)
    hits = {lv: 0 for lv in levels}
    hits_iid = {lv: 0 for lv in levels}
    tighter = {lv: 0 for lv in levels}
    failed = 0
    for r in range(reps):
        sim = generate(scenario, r)
        ctx = TailContext(sim.sample)
        k = resolve_k(ctx.n, k_frac=k_frac)
        try:
            fit = ctx.fit(k)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", HetEVTWarning)
                vr = ctx.variance_reduction(k, fit.gamma)
            row = [r, k, fit.gamma, to_time(fit.endpoint), vr.delta]
            for lv in levels:
                b = lower_confidence_bound(fit, vr.delta, lv).lcb_time
                b0 = lower_confidence_bound(fit, 0.0, lv).lcb_time
                row += [b, b0]
                hits[lv] += b < true_time
                hits_iid[lv] += b0 < true_time
                tighter[lv] += b > b0
        except (NoFiniteEndpointError, DegenerateSpacingsError):
            # counts as a miss: no finite bound was produced
            failed += 1
            row = [r, k, float("nan"), float("nan"), float("nan")] + [float("nan")] * (2 * len(levels))
        res.rows.append(row)
    res.summary = {
        "experiment": "coverage",
        "scenario": scenario.to_dict(),
        "reps": reps,
        "k_frac": k_frac,
        "true_endpoint": scenario.true_endpoint,
        "true_time": true_time,
        "failed_fits": failed,
        "coverage": {f"{lv:g}": hits[lv] / reps for lv in levels},
        "coverage_se": {f"{lv:g}": _binomial_se(hits[lv] / reps, reps) for lv in levels},
        "coverage_iid": {f"{lv:g}": hits_iid[lv] / reps for lv in levels},
        "tighter_with_delta": {f"{lv:g}": tighter[lv] / reps for lv in levels},
    }
    return res


def _rmse(est, truth) -> float:
    est = np.asarray(est, dtype=float)
    est = est[np.isfinite(est)]
    return float(np.sqrt(np.mean((est - truth) ** 2))) if len(est) else float("nan")


def estimator_bias_experiment(
    scenario: Scenario, n_grid=(2_000, 20_000, 200_000), reps: int = 200, k_frac: float = 0.05
) -> ExperimentResult:
    """RMSE of gamma, endpoint, lambda(1) and delta against their targets for each n."""
    if list(n_grid) != sorted(n_grid):
        raise ValueError("n_grid must be ascending")
    res = ExperimentResult(
        "bias", ["n", "replication", "k", "gamma", "endpoint", "lambda_at_1", "delta_raw"]
    )
    table = []
    for n in n_grid:
        sc = scenario.with_n(n)
        oracle = TailOracle(sc)
        k = resolve_k(sc.n, k_frac=k_frac)
        lam_true = oracle.lam(k, 1.0)
        delta_true = oracle.delta(k)
        cols = {"gamma": [], "endpoint": [], "lambda_at_1": [], "delta_raw": []}
        for r in range(reps):
            sim = generate(sc, r)
            ctx = TailContext(sim.sample)
            lam_k = min(k, ctx.lambda_sample.n - 1)
            lam1 = float(lambda_curve(ctx.lambda_sample, ctx.lambda_ranks, lam_k, [1.0]).lambda_at_1)
            try:
                fit = ctx.fit(k)
                g, e = fit.gamma, fit.endpoint
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", HetEVTWarning)
                    d = ctx.variance_reduction(k, g).delta_raw if g < 0.5 else float("nan")
            except (NoFiniteEndpointError, DegenerateSpacingsError):
                g = e = d = float("nan")
            if not g < 0:
                e = float("nan")
            for key, v in zip(cols, (g, e, lam1, d)):
                cols[key].append(v)
            res.rows.append([sc.n, r, k, g, e, lam1, d])
        endpoints = np.asarray(cols["endpoint"])
        bias_sign = np.sign(np.nanmedian(endpoints) - sc.true_endpoint)
        table.append(
            {
                "n": sc.n,
                "k": k,
                "rmse_gamma": _rmse(cols["gamma"], sc.true_gamma),
                "rmse_endpoint": _rmse(endpoints, sc.true_endpoint),
                "rmse_lambda_at_1": _rmse(cols["lambda_at_1"], lam_true),
                "rmse_delta": _rmse(cols["delta_raw"], delta_true),
                "median_endpoint_bias": float(np.nanmedian(endpoints) - sc.true_endpoint),
                "endpoint_bias_sign": int(bias_sign),
                "true_lambda_at_1": lam_true,
                "true_delta": delta_true,
                "homogeneous_reference_at_1": (k - 1) / (sc.n - 1),
            }
        )
    res.summary = {
        "experiment": "bias",
        "scenario": scenario.to_dict(),
        "reps": reps,
        "k_frac": k_frac,
        "true_gamma": scenario.true_gamma,
        "true_endpoint": scenario.true_endpoint,
        "table": table,
    }
    return res


def lemma_experiment(
    scenario: Scenario,
    n_grid=(2_000, 20_000, 200_000),
    reps: int = 50,
    k_frac: float = 0.05,
    box=(0.1, 2.0),
    grid_points: int = 20,
) -> ExperimentResult:
    """Sup-distance between R-hat and the pre-limit R over a square grid, per n."""
    grid = np.linspace(box[0], box[1], grid_points)
    res = ExperimentResult("lemma", ["n", "replication", "k", "sup_error"])
    table = []
    for n in n_grid:
        sc = scenario.with_n(n)
        k = resolve_k(sc.n, k_frac=k_frac)
        truth = true_r_oracle(sc, k, grid, grid)
        errs = []
        for r in range(reps):
            sample = generate(sc, r).sample
            est = r_hat_grid(sample, ordinal_ranks(sample.values), k, grid, grid)
            err = float(np.max(np.abs(est - truth)))
            errs.append(err)
            res.rows.append([sc.n, r, k, err])
        table.append({"n": sc.n, "k": k, "median_sup_error": float(np.median(errs))})
    res.summary = {
        "experiment": "lemma",
        "scenario": scenario.to_dict(),
        "reps": reps,
        "k_frac": k_frac,
        "box": list(box),
        "grid_points": grid_points,
        "table": table,
    }
    return res


def lambda_agreement_experiment(
    scenario: Scenario, reps: int = 50, k_frac: float = 0.05, u_grid=None
) -> ExperimentResult:
    """Mean lambda-hat over replications against the pre-limit oracle."""
    u_grid = np.linspace(0.1, 1.0, 10) if u_grid is None else np.asarray(u_grid, dtype=float)
    k = resolve_k(scenario.n, k_frac=k_frac)
    truth = true_lambda_oracle(scenario, None, k, u_grid)
    res = ExperimentResult("lambda", ["replication", "k"] + [f"u_{u:g}" for u in u_grid])
    draws = []
    for r in range(reps):
        sample = generate(scenario, r).sample
        lam = lambda_curve(sample, ordinal_ranks(sample.values), k, u_grid).lambda_hat
        draws.append(lam)
        res.rows.append([r, k] + [float(v) for v in lam])
    draws = np.array(draws)
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / math.sqrt(reps)
    diff = mean - truth
    # saturated points (lambda = 1 in every replication) have zero spread
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(np.abs(diff) <= 1e-12, 0.0, np.inf))
    res.summary = {
        "experiment": "lambda",
        "scenario": scenario.to_dict(),
        "reps": reps,
        "k": k,
        "u_grid": u_grid.tolist(),
        "oracle": truth.tolist(),
        "mean_lambda_hat": mean.tolist(),
        "mc_se": se.tolist(),
        "z": z.tolist(),
    }
    return res


EXPERIMENTS = {
    "coverage": coverage_experiment,
    "bias": estimator_bias_experiment,
    "lemma": lemma_experiment,
    "lambda": lambda_agreement_experiment,
}
