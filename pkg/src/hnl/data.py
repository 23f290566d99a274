"""Series ingestion, resampling, windowing and synthetic data.

Timestamps follow the interval-ending convention: a sample stamped ``t``
covers ``(t - dt, t]``.  CSV files carry ``timestamp,value[,feat...]`` with
ISO-8601 UTC stamps.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .metrics import block_downsample, integer_ratio

__all__ = [
    "RawSeries",
    "Normalizer",
    "AlignedDataset",
    "WindowSet",
    "SyntheticSpec",
    "DataError",
    "load_csv",
    "write_csv",
    "resample",
    "align",
    "build_windows",
    "synthesize_toy",
    "synthesize_energy",
]

_NS_PER_HOUR = 3_600_000_000_000
MAX_FILL_GAP = 3


class DataError(ValueError):
    pass


@dataclass
class RawSeries:
    timestamps: np.ndarray  # datetime64[ns], UTC
    values: np.ndarray
    resolution: float  # samples per hour
    exog: np.ndarray = None
    exog_names: tuple[str, ...] = ()
    name: str = "value"
    filled: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.exog is None:
            self.exog = np.zeros((len(self.values), 0))
        self.exog = np.asarray(self.exog, dtype=float).reshape(len(self.values), -1)

    def __len__(self):
        return len(self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", self.name, *self.exog_names])
        for ts, v, ex in zip(self.timestamps, self.values, self.exog):
            w.writerow([_format_ts(ts), repr(float(v)), *(repr(float(e)) for e in ex)])
        return buf.getvalue()


def _format_ts(ts: np.datetime64) -> str:
    return str(np.datetime_as_string(ts.astype("datetime64[s]"), unit="s")) + "Z"


def _parse_ts(text: str) -> np.datetime64:
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt, "ns")


def write_csv(series: RawSeries, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(series.to_csv())
    tmp.replace(path)
    return path


def _fill_gaps(col: np.ndarray, name: str, max_gap: int) -> int:
    bad = np.isnan(col)
    if not bad.any():
        return 0
    idx = np.flatnonzero(bad)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    for run in runs:
        if len(run) > max_gap:
            raise DataError(f"column {name!r}: {len(run)} consecutive missing values "
                            f"starting at data row {run[0] + 1} (limit {max_gap})")
        if run[0] == 0 or run[-1] == len(col) - 1:
            raise DataError(f"column {name!r}: cannot interpolate missing value at series edge")
    good = np.flatnonzero(~bad)
    col[bad] = np.interp(idx, good, col[good])
    return int(bad.sum())


def load_csv(path, value_column: str | None = None, timestamp_column: str = "timestamp",
             missing: str = "interpolate", max_gap: int = MAX_FILL_GAP) -> RawSeries:
    """Read ``timestamp,value[,feat...]``.

    The value column defaults to the first non-timestamp column; the remaining
    columns become exogenous features.  Missing cells are linearly
    interpolated when ``missing="interpolate"`` (up to ``max_gap`` in a row),
    otherwise they are an error.
    """
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    if timestamp_column not in header:
        raise DataError(f"{path}: no {timestamp_column!r} column in header {header}")
    ti = header.index(timestamp_column)
    others = [i for i in range(len(header)) if i != ti]
    if not others:
        raise DataError(f"{path}: no value column")
    vi = header.index(value_column) if value_column else others[0]
    fi = [i for i in others if i != vi]
    stamps, rows = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            stamps.append(_parse_ts(row[ti]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: unparsable timestamp {row[ti]!r}") from None
        vals = []
        for i in [vi, *fi]:
            cell = row[i].strip()
            if cell == "" or cell.lower() in ("nan", "na", "null"):
                if missing != "interpolate":
                    raise DataError(f"{path}:{lineno}: missing value in column {header[i]!r}")
                vals.append(math.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}:{lineno}: unparsable number {cell!r} "
                                f"in column {header[i]!r}") from None
        rows.append(vals)
    if len(stamps) < 2:
        raise DataError(f"{path}: need at least two rows")
    ts = np.array(stamps, dtype="datetime64[ns]")
    steps = np.diff(ts).astype(np.int64)
    if np.any(steps <= 0):
        bad = np.flatnonzero(steps <= 0) + 3
        raise DataError(f"{path}: duplicated or decreasing timestamps at lines {bad.tolist()}")
    if np.any(steps != steps[0]):
        bad = np.flatnonzero(steps != steps[0]) + 3
        raise DataError(f"{path}: non-uniform spacing at lines {bad.tolist()}")
    data = np.array(rows, dtype=float)
    filled = 0
    for j, i in enumerate([vi, *fi]):
        filled += _fill_gaps(data[:, j], header[i], max_gap)
    return RawSeries(ts, data[:, 0], _NS_PER_HOUR / steps[0], data[:, 1:],
                     tuple(header[i] for i in fi), header[vi], filled)


def resample(series: RawSeries, target_resolution: float) -> RawSeries:
    """Block-mean downsampling; the stamp of each block is its last sample's."""
    if target_resolution > series.resolution:
        raise DataError("upsampling is not supported")
    r = integer_ratio(series.resolution, target_resolution)
    n = (len(series) // r) * r
    return replace(
        series,
        timestamps=series.timestamps[r - 1:n:r].copy(),
        values=block_downsample(series.values[:n], series.resolution, target_resolution),
        exog=block_downsample(series.exog[:n].T, series.resolution, target_resolution).T.copy(),
        resolution=float(target_resolution),
    )


@dataclass
class Normalizer:
    """Per-column z-score statistics."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x) -> "Normalizer":
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(np.asarray(mean, dtype=float), np.asarray(std, dtype=float))

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse(self, z):
        return np.asarray(z, dtype=float) * self.std + self.mean


@dataclass
class AlignedDataset:
    timestamps: np.ndarray
    target: np.ndarray
    exog: np.ndarray
    resolution: float
    splits: dict[str, tuple[int, int]]
    target_stats: Normalizer
    exog_stats: Normalizer
    name: str = "value"

    @property
    def step_ns(self) -> int:
        return int(round(_NS_PER_HOUR / self.resolution))


def align(series: RawSeries, fractions=(0.7, 0.1, 0.2)) -> AlignedDataset:
    """Chronological train/val/test split; statistics from train only."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-9:
        raise DataError("split fractions must be three non-negative numbers summing to 1")
    n = len(series)
    a = int(round(fractions[0] * n))
    b = int(round((fractions[0] + fractions[1]) * n))
    splits = {"train": (0, a), "val": (a, b), "test": (b, n)}
    if a == 0:
        raise DataError("empty training split")
    tstats = Normalizer.fit(series.values[:a])
    estats = Normalizer.fit(series.exog[:a]) if series.exog.shape[1] else Normalizer(
        np.zeros(0), np.ones(0))
    return AlignedDataset(series.timestamps, series.values, series.exog, series.resolution,
                          splits, tstats, estats, series.name)


@dataclass
class WindowSet:
    """Forecast samples: history up to the origin, exogenous features and
    targets over the horizon, all at the dataset resolution."""

    origins: np.ndarray  # datetime64[ns]
    history: np.ndarray  # (n, window_steps)
    exog: np.ndarray  # (n, horizon_steps, n_feat)
    target: np.ndarray  # (n, horizon_steps)
    split: np.ndarray  # str labels
    resolution: float
    horizon: float
    target_stats: Normalizer = None
    exog_stats: Normalizer = None
    name: str = "value"

    def __len__(self):
        return len(self.origins)

    def subset(self, label: str) -> "WindowSet":
        m = self.split == label
        return replace(self, origins=self.origins[m], history=self.history[m],
                       exog=self.exog[m], target=self.target[m], split=self.split[m])

    def targets_at(self, resolution: float) -> np.ndarray:
        return block_downsample(self.target, self.resolution, resolution)


def build_windows(dataset: AlignedDataset, window_hours: float = 24.0, horizon_hours: float = 24.0,
                  stride_hours: float = 24.0) -> WindowSet:
    """Enumerate forecast origins on a grid of ``stride_hours`` anchored at
    midnight UTC.

    A window with origin ``o`` uses samples stamped in ``(o - window, o]`` as
    history and ``(o, o + horizon]`` as target.  Windows that would straddle a
    split boundary are dropped.
    """
    step = dataset.step_ns
    nw = window_hours * _NS_PER_HOUR / step
    nh = horizon_hours * _NS_PER_HOUR / step
    ns = stride_hours * _NS_PER_HOUR / step
    if any(abs(v - round(v)) > 1e-9 or round(v) < 1 for v in (nw, nh, ns)):
        raise DataError("window, horizon and stride must be positive multiples of the sample spacing")
    nw, nh, ns = int(round(nw)), int(round(nh)), int(round(ns))
    t0 = dataset.timestamps[0]
    midnight = t0.astype("datetime64[D]").astype("datetime64[ns]")
    stride_ns = ns * step
    n = len(dataset.target)
    # first origin o needs index(o) - nw + 1 >= 0
    first_ok = t0 + np.timedelta64((nw - 1) * step, "ns")
    k0 = -(-int((first_ok - midnight).astype(np.int64)) // stride_ns)
    origins, idxs = [], []
    k = k0
    while True:
        o = midnight + np.timedelta64(k * stride_ns, "ns")
        io_ = int((o - t0).astype(np.int64)) // step
        if io_ + nh > n - 1:
            break
        origins.append(o)
        idxs.append(io_)
        k += 1
    labels = []
    for io_ in idxs:
        lo, hi = io_ - nw + 1, io_ + nh
        lab = "none"
        for name, (a, b) in dataset.splits.items():
            if a <= lo and hi < b:
                lab = name
        labels.append(lab)
    keep = [i for i, lab in enumerate(labels) if lab != "none"]
    if not keep:
        raise DataError(
            f"no window of {window_hours}+{horizon_hours} h fits inside any split "
            f"({n} samples = {n * step / _NS_PER_HOUR:.1f} h available)")
    idxs = np.array([idxs[i] for i in keep], dtype=int)
    hist = np.stack([dataset.target[i - nw + 1:i + 1] for i in idxs])
    tgt = np.stack([dataset.target[i + 1:i + nh + 1] for i in idxs])
    ex = np.stack([dataset.exog[i + 1:i + nh + 1] for i in idxs])
    return WindowSet(np.array([origins[i] for i in keep], dtype="datetime64[ns]"), hist, ex, tgt,
                     np.array([labels[i] for i in keep]), dataset.resolution, float(horizon_hours),
                     dataset.target_stats, dataset.exog_stats, dataset.name)


@dataclass
class SyntheticSpec:
    kind: str = "energy"  # "toy" | "energy"
    duration: float = 60.0  # days for energy, time units for toy
    resolution: float = 12.0  # samples per hour (energy) or per unit (toy)
    seed: int = 0
    noise: float = 0.0
    amplitudes: tuple[float, ...] = (1.0, 1.0, 0.5)
    frequencies: tuple[float, ...] = (1.0, 2.0, 12.0)
    load_base: float = 150.0
    load_daily: float = 45.0
    wind_capacity: float = 100.0
    start: str = "2021-01-04T00:00:00"


def synthesize_toy(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """``sum a_j sin(w_j t)`` sampled at ``resolution`` per unit on ``[0, duration)``.

    Returns ``(t, y)``; Gaussian noise of std ``noise`` is added from ``seed``.
    """
    if spec.duration <= 0 or spec.resolution <= 0:
        raise DataError("duration and resolution must be positive")
    t = np.arange(int(round(spec.duration * spec.resolution))) / spec.resolution
    y = np.zeros_like(t)
    for a, w in zip(spec.amplitudes, spec.frequencies):
        y += a * np.sin(w * t)
    if spec.noise:
        y = y + np.random.default_rng(spec.seed).normal(0.0, spec.noise, size=t.shape)
    return t, y


def _ar1(rng, n, phi, sigma):
    return lfilter([1.0], [1.0, -phi], rng.normal(0.0, sigma, size=n))


def _smooth(x, width):
    k = np.ones(width) / width
    return np.convolve(np.pad(x, (width // 2, width - 1 - width // 2), mode="edge"), k, mode="valid")


def synthesize_energy(spec: SyntheticSpec) -> dict[str, RawSeries]:
    """Load-like and wind-like series with a noisy driver as exogenous feature.

    Load: base + daily shape driven by a temperature-like process + weekly
    dip + smooth and fast noise.  Wind: power curve of a smooth wind-speed
    process with gusts, clipped to ``[0, wind_capacity]``.  Each series gets
    one exogenous column, a noisy smoothed copy of its driver standing in
    for weather forecasts.
    """
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration * 24 * spec.resolution))
    step_h = 1.0 / spec.resolution
    hours = (np.arange(n) + 1) * step_h
    start = np.datetime64(spec.start, "ns")
    ts = start + (np.arange(1, n + 1) * (_NS_PER_HOUR / spec.resolution)).astype("timedelta64[ns]")
    per_hour = spec.resolution

    hod = hours % 24.0
    dow = (hours // 24.0) % 7
    temp = (8.0 * np.sin(2 * np.pi * (hod - 9.0) / 24.0)
            + _ar1(rng, n, math.exp(-step_h / 36.0), 0.35 * math.sqrt(step_h)))
    shape = (0.55 * np.sin(2 * np.pi * (hod - 7.0) / 24.0)
             + 0.25 * np.sin(4 * np.pi * (hod - 5.0) / 24.0)
             + 0.12 * np.sin(6 * np.pi * hod / 24.0))
    load = (spec.load_base + spec.load_daily * shape + 1.6 * temp
            - 0.08 * spec.load_base * (dow >= 5)
            + _ar1(rng, n, math.exp(-step_h / 3.0), 1.2 * math.sqrt(step_h))
            + rng.normal(0.0, 1.5 + spec.noise, size=n))
    load_exog = _smooth(temp + rng.normal(0.0, 1.0, size=n), max(1, int(per_hour)))

    smooth_speed = 8.0 + 1.2 * np.sin(2 * np.pi * (hod - 15.0) / 24.0) + _ar1(
        rng, n, math.exp(-step_h / 10.0), 0.9 * math.sqrt(step_h))
    gust = _ar1(rng, n, math.exp(-step_h / 0.25), 0.8 * math.sqrt(step_h))
    speed = np.maximum(smooth_speed + gust, 0.0)
    curve = np.clip((speed - 3.0) / (13.0 - 3.0), 0.0, 1.0) ** 2
    wind = np.clip(spec.wind_capacity * curve + rng.normal(0.0, 0.5 + spec.noise, size=n),
                   0.0, spec.wind_capacity)
    wind_exog = _smooth(smooth_speed + rng.normal(0.0, 0.6, size=n), max(1, int(per_hour)))

    return {
        "load": RawSeries(ts, load, spec.resolution, load_exog[:, None], ("temperature_fc",), "load"),
        "wind": RawSeries(ts, wind, spec.resolution, wind_exog[:, None], ("windspeed_fc",), "wind"),
    }
