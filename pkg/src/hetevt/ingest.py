"""Record tables: parsing, per-athlete capping, tie smoothing and grouping.

The pipeline order is fixed as ``cap_per_athlete -> smooth_ties -> group``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, HetEVTWarning

KMH_PER_MS = 3.6


@dataclass(frozen=True)
class Record:
    athlete_id: str
    time_s: float
    wind: float | None = None
    year: int | None = None


@dataclass(frozen=True)
class RecordTable:
    """Raw per-athlete times, in input file order."""

    rows: tuple[Record, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        bad = [i for i, r in enumerate(self.rows) if not r.time_s > 0]
        if bad:
            raise DataError(f"non-positive times at row indices {bad}")

    def __len__(self):
        return len(self.rows)

    @property
    def times(self) -> np.ndarray:
        return np.array([r.time_s for r in self.rows], dtype=float)

    @property
    def athletes(self) -> list[str]:
        return sorted({r.athlete_id for r in self.rows})


@dataclass(frozen=True)
class ColumnConfig:
    athlete_id: str = "athlete_id"
    time_s: str = "time_s"
    wind: str = "wind"
    year: str = "year"


@dataclass(frozen=True)
class SpeedSample:
    """Speeds (km/h) grouped into consecutive per-athlete blocks.

    Athlete ``l`` owns ``values[group_offsets[l]:group_offsets[l] + group_sizes[l]]``.
    """

    values: np.ndarray
    group_offsets: np.ndarray
    group_sizes: np.ndarray
    athlete_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        sizes = np.ascontiguousarray(self.group_sizes, dtype=np.int64)
        offsets = np.ascontiguousarray(self.group_offsets, dtype=np.int64)
        if values.ndim != 1 or sizes.ndim != 1 or offsets.ndim != 1:
            raise DataError("values, group_offsets and group_sizes must be 1-D")
        if sizes.shape != offsets.shape:
            raise DataError("group_offsets and group_sizes differ in length")
        if np.any(sizes < 1):
            raise DataError("every athlete needs at least one record")
        expected = np.concatenate(([0], np.cumsum(sizes)[:-1])) if len(sizes) else sizes
        if not np.array_equal(offsets, expected) or int(sizes.sum()) != len(values):
            raise DataError("group blocks must partition [0, n) consecutively")
        if np.any(~np.isfinite(values)) or np.any(values <= 0):
            raise DataError("speeds must be finite and positive")
        ids = tuple(self.athlete_ids) or tuple(str(i) for i in range(len(sizes)))
        if len(ids) != len(sizes):
            raise DataError("athlete_ids length differs from the number of groups")
        for name, arr in (("values", values), ("group_offsets", offsets), ("group_sizes", sizes)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "athlete_ids", ids)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def p(self) -> int:
        return len(self.group_sizes)

    @property
    def labels(self) -> np.ndarray:
        """Athlete index for every observation."""
        return np.repeat(np.arange(self.p), self.group_sizes)

    @classmethod
    def from_groups(cls, values, groups) -> "SpeedSample":
        """Build a sample from a flat array plus per-observation group labels.

        Groups are ordered by sorted label; within-group order follows the input.
        """
        values = np.asarray(values, dtype=float)
        groups = np.asarray(groups)
        if values.shape != groups.shape:
            raise DataError("values and groups must have the same shape")
        uniq, inverse = np.unique(groups, return_inverse=True)
        order = np.argsort(inverse, kind="stable")
        sizes = np.bincount(inverse, minlength=len(uniq))
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])) if len(sizes) else sizes
        return cls(values[order], offsets, sizes, tuple(str(u) for u in uniq))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "values": self.values.tolist(),
            "group_offsets": self.group_offsets.tolist(),
            "group_sizes": self.group_sizes.tolist(),
            "athlete_ids": list(self.athlete_ids),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SpeedSample":
        try:
            return cls(
                np.asarray(doc["values"], dtype=float),
                np.asarray(doc["group_offsets"], dtype=np.int64),
                np.asarray(doc["group_sizes"], dtype=np.int64),
                tuple(doc.get("athlete_ids", ())),
            )
        except KeyError as exc:
            raise DataError(f"sample document lacks field {exc}") from None


def save_sample_json(sample: SpeedSample, path) -> None:
    Path(path).write_text(json.dumps(sample.to_dict()) + "\n", encoding="utf-8")


def load_sample_json(path) -> SpeedSample:
    path = Path(path)
    if not path.exists():
        raise DataError(f"sample file not found: {path}")
    return SpeedSample.from_dict(json.loads(path.read_text(encoding="utf-8")))


def save_sample_csv(sample: SpeedSample, values_path, groups_path) -> None:
    """Write the two-file form: one row per speed, one row per athlete."""
    labels = sample.labels
    with open(values_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["athlete_id", "speed_kmh"])
        for lab, v in zip(labels, sample.values):
            w.writerow([sample.athlete_ids[lab], repr(float(v))])
    with open(groups_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["athlete_id", "offset", "size"])
        for aid, off, size in zip(sample.athlete_ids, sample.group_offsets, sample.group_sizes):
            w.writerow([aid, int(off), int(size)])


def load_sample_csv(values_path, groups_path) -> SpeedSample:
    with open(values_path, newline="", encoding="utf-8") as fh:
        values = [float(row["speed_kmh"]) for row in csv.DictReader(fh)]
    ids, offsets, sizes = [], [], []
    with open(groups_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["athlete_id"])
            offsets.append(int(row["offset"]))
            sizes.append(int(row["size"]))
    return SpeedSample(np.array(values), np.array(offsets), np.array(sizes), tuple(ids))


def _optional_float(cell):
    cell = (cell or "").strip()
    return float(cell) if cell else None


def parse_csv(path, config: ColumnConfig | None = None) -> RecordTable:
    """Read a record table; every malformed time is reported with its line number."""
    config = config or ColumnConfig()
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (config.athlete_id, config.time_s) if c not in header]
        if missing:
            raise DataError(f"missing required column(s): {', '.join(missing)}")
        rows, bad = [], []
        # line 1 is the header
        for lineno, raw in enumerate(reader, start=2):
            try:
                t = float(raw[config.time_s])
                if not (math.isfinite(t) and t > 0):
                    raise ValueError
                wind = _optional_float(raw.get(config.wind)) if config.wind in header else None
                year_cell = (raw.get(config.year) or "").strip() if config.year in header else ""
                year = int(year_cell) if year_cell else None
            except (TypeError, ValueError):
                bad.append(lineno)
                continue
            rows.append(Record(raw[config.athlete_id].strip(), t, wind, year))
    if bad:
        raise DataError(f"malformed numeric cells on row(s) {', '.join(map(str, bad))}", rows=bad)
    return RecordTable(rows)


def cap_per_athlete(table: RecordTable, cap: int = 5) -> RecordTable:
    """Keep each athlete's ``cap`` fastest records, preserving input order."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    by_athlete = defaultdict(list)
    for i, r in enumerate(table.rows):
        by_athlete[r.athlete_id].append(i)
    keep = set()
    for idx in by_athlete.values():
        # stable: equal times at the cut keep the earlier row
        keep.update(sorted(idx, key=lambda i: table.rows[i].time_s)[:cap])
    return RecordTable(r for i, r in enumerate(table.rows) if i in keep)


def smooth_ties(table: RecordTable, resolution: float = 0.01) -> RecordTable:
    """Spread equal recorded times evenly over their rounding interval.

    The ``m`` rows recorded at time ``t`` become
    ``t - resolution/2 + resolution*(2j - 1)/(2m)``, ``j = 1..m``, where ``j``
    follows ascending wind; rows without wind come last in input order.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    ticks = {}
    for i, r in enumerate(table.rows):
        q = round(r.time_s / resolution)
        if abs(q * resolution - r.time_s) > 1e-9:
            raise DataError(f"time {r.time_s} at row index {i} is not a multiple of {resolution}")
        ticks.setdefault(q, []).append(i)

    new_times = [0.0] * len(table.rows)
    for q, idx in ticks.items():
        idx = sorted(idx, key=lambda i: (table.rows[i].wind is None, table.rows[i].wind or 0.0, i))
        m = len(idx)
        lo = q * resolution - resolution / 2
        for j, i in enumerate(idx, start=1):
            new_times[i] = lo + resolution * (2 * j - 1) / (2 * m)

    new_times = _separate_collisions(np.array(new_times))
    return RecordTable(
        Record(r.athlete_id, float(t), r.wind, r.year) for r, t in zip(table.rows, new_times)
    )


def _separate_collisions(times: np.ndarray) -> np.ndarray:
    """Nudge exactly equal values apart by one ulp each."""
    if len(times) < 2:
        return times
    order = np.argsort(times, kind="stable")
    s = times[order]
    if np.all(np.diff(s) > 0):
        return times
    warnings.warn("smoothed times collided; separating by the smallest representable step", HetEVTWarning)
    for i in range(1, len(s)):
        if s[i] <= s[i - 1]:
            s[i] = np.nextafter(s[i - 1], np.inf)
    out = np.empty_like(times)
    out[order] = s
    return out


def to_speed(time_s, distance_m: float = 100.0):
    """Average speed in km/h for a run of ``distance_m`` metres."""
    t = np.asarray(time_s, dtype=float)
    if np.any(t <= 0):
        raise ValueError("time must be positive")
    out = KMH_PER_MS * distance_m / t
    return float(out) if out.ndim == 0 else out


def to_time(speed_kmh, distance_m: float = 100.0):
    """Inverse of :func:`to_speed`."""
    v = np.asarray(speed_kmh, dtype=float)
    if np.any(v <= 0):
        raise ValueError("speed must be positive")
    out = KMH_PER_MS * distance_m / v
    return float(out) if out.ndim == 0 else out


def group(table: RecordTable, distance_m: float = 100.0) -> SpeedSample:
    """Convert to speeds and order athletes by id, keeping within-athlete order."""
    if not len(table):
        return SpeedSample(np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64), ())
    ids = [r.athlete_id for r in table.rows]
    return SpeedSample.from_groups(to_speed(table.times, distance_m), ids)


def prepare_for_lambda(sample: SpeedSample, policy: str = "drop") -> SpeedSample:
    """Ensure every athlete has at least two records.

    ``drop`` removes single-record athletes; ``duplicate`` repeats their record.
    """
    if policy not in ("drop", "duplicate"):
        raise ValueError(f"unknown singleton policy {policy!r}")
    single = sample.group_sizes == 1
    if not single.any():
        return sample
    keep_ids, chunks, sizes = [], [], []
    for aid, off, size, is_single in zip(
        sample.athlete_ids, sample.group_offsets, sample.group_sizes, single
    ):
        block = sample.values[off:off + size]
        if is_single:
            if policy == "drop":
                continue
            block = np.repeat(block, 2)
        keep_ids.append(aid)
        chunks.append(block)
        sizes.append(len(block))
    sizes = np.array(sizes, dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])) if len(sizes) else sizes
    values = np.concatenate(chunks) if chunks else np.empty(0)
    return SpeedSample(values, offsets, sizes, tuple(keep_ids))
