"""Heart-rate series: CSV ingestion, synthetic generation, lag embedding and block splits."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    ColumnNotFound,
    ConfigError,
    DegenerateSplit,
    EmptySeries,
    SeriesTooShort,
)


@dataclass(frozen=True, eq=False)
class SeriesData:
    values: np.ndarray
    timestamps: Optional[np.ndarray] = None
    source_label: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("heart-rate values must be finite and positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.timestamps is not None:
            ts = np.array(self.timestamps, dtype=np.float64).reshape(-1)
            if ts.shape != values.shape:
                raise ValueError("timestamps and values differ in length")
            if np.any(ts < 0) or np.any(np.diff(ts) <= 0):
                raise ValueError("timestamps must be non-negative and strictly increasing")
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, SeriesData):
            return NotImplemented
        same_ts = (self.timestamps is None and other.timestamps is None) or (
            self.timestamps is not None
            and other.timestamps is not None
            and np.array_equal(self.timestamps, other.timestamps)
        )
        return (
            np.array_equal(self.values, other.values)
            and same_ts
            and self.source_label == other.source_label
        )


@dataclass(frozen=True)
class LagEmbedding:
    inputs: np.ndarray   # (N, n_lags)
    targets: np.ndarray  # (N,)
    first_target_index: int
    lags: tuple[int, ...]

    def __len__(self) -> int:
        return self.targets.size

    def rows(self, r: range) -> "LagEmbedding":
        return LagEmbedding(
            self.inputs[r.start:r.stop],
            self.targets[r.start:r.stop],
            self.first_target_index + r.start,
            self.lags,
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    validation_fraction: float
    test_fraction: float

    def __post_init__(self):
        fr = (self.train_fraction, self.validation_fraction, self.test_fraction)
        if any(not 0 < f < 1 for f in fr):
            raise ConfigError(f"split fractions must lie in (0, 1), got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fr)!r}")

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """Parse ``"0.3/0.35/0.35"`` or percentages such as ``"30/35/35"``."""
        parts = text.replace(",", "/").split("/")
        if len(parts) != 3:
            raise ConfigError(f"expected three fractions a/b/c, got {text!r}")
        try:
            nums = [float(p) for p in parts]
        except ValueError:
            raise ConfigError(f"non-numeric split {text!r}") from None
        if sum(nums) > 1.0 + 1e-9:
            nums = [x / 100.0 for x in nums]
        return cls(*nums)

    def label(self) -> str:
        return "/".join(f"{round(f * 100, 6):g}" for f in self.as_tuple())

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.train_fraction, self.validation_fraction, self.test_fraction)


@dataclass(frozen=True)
class SplitIndices:
    train_range: range
    validation_range: range
    test_range: range

    @property
    def counts(self) -> tuple[int, int, int]:
        return (len(self.train_range), len(self.validation_range), len(self.test_range))

    @property
    def n_total(self) -> int:
        return self.test_range.stop

    @property
    def t_train(self) -> int:
        return len(self.train_range)


def _round_half_away(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def split_block(n: int, spec: SplitSpec) -> SplitIndices:
    """Contiguous train/validation/test split; rounding remainder goes to training."""
    if n < 10:
        raise DegenerateSplit(f"need at least 10 samples, got {n}")
    n_val = _round_half_away(spec.validation_fraction * n)
    n_test = _round_half_away(spec.test_fraction * n)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise DegenerateSplit(f"split {spec.as_tuple()} of {n} leaves an empty block")
    return SplitIndices(
        range(0, n_train),
        range(n_train, n_train + n_val),
        range(n_train + n_val, n),
    )


def embed(series: Union[SeriesData, Sequence[float]], lags: Sequence[int]) -> LagEmbedding:
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    lags = tuple(int(l) for l in lags)
    max_lag = max(lags)
    if values.size <= max_lag:
        raise SeriesTooShort(f"series of length {values.size} too short for lag {max_lag}")
    n = values.size - max_lag
    targets = values[max_lag:].copy()
    inputs = np.column_stack([values[max_lag - l:max_lag - l + n] for l in lags])
    return LagEmbedding(inputs, targets, max_lag, lags)


def _parse_float(cell: str) -> Optional[float]:
    try:
        return float(cell.strip())
    except (ValueError, AttributeError):
        return None


def load_csv(
    path: Union[str, os.PathLike],
    column: Union[str, int] = 0,
    nan_policy: str = "DropRow",
    *,
    time_column: Union[str, int, None] = None,
    max_lag: int = 2,
) -> SeriesData:
    """Read one numeric column of a comma-separated file.

    The first row is a header iff the selected column's first cell is not
    numeric. ``column`` is an exact header name or a 0-based index. Rows
    whose cell is empty, non-numeric, non-finite or <= 0 are dropped.
    """
    if nan_policy != "DropRow":
        raise ConfigError(f"unsupported nan_policy {nan_policy!r}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise EmptySeries(f"{path} is empty")

    first = rows[0]

    def resolve(sel):
        if isinstance(sel, str):
            names = [c.strip() for c in first]
            if sel in names:
                return names.index(sel), True
            if not sel.strip().lstrip("-").isdigit():
                raise ColumnNotFound(f"column {sel!r} not in header {names}")
            sel = int(sel)
        if not 0 <= sel < len(first):
            raise ColumnNotFound(f"column index {sel} out of range (0..{len(first) - 1})")
        return sel, False

    col, by_name = resolve(column)
    has_header = by_name or _parse_float(first[col]) is None
    body = rows[1:] if has_header else rows
    tcol = resolve(time_column)[0] if time_column is not None else None

    values, times = [], []
    for row in body:
        v = _parse_float(row[col]) if col < len(row) else None
        if v is None or not math.isfinite(v) or v <= 0:
            continue
        if tcol is not None:
            t = _parse_float(row[tcol]) if tcol < len(row) else None
            if t is None or not math.isfinite(t):
                continue
            times.append(t)
        values.append(v)

    if len(values) < max_lag + 10:
        raise EmptySeries(
            f"{path}: only {len(values)} usable rows, need at least {max_lag + 10}"
        )
    return SeriesData(
        values=np.array(values),
        timestamps=np.array(times) if tcol is not None else None,
        source_label=os.fspath(path),
    )


def synth_heart_rate(
    seed: int,
    n: int = 6312,
    base_bpm: float = 75.0,
    drift_bpm_per_ks: float = 0.0,
    modulation_amp: float = 5.0,
    modulation_period_s: float = 240.0,
    noise_std: float = 1.0,
) -> SeriesData:
    """Sinusoidally modulated heart rate with linear drift and Gaussian noise.

    One sample per second. Noise comes from numpy's PCG64 generator seeded
    with ``seed``. Values are clamped to at least 20 bpm.
    """
    if n < 10:
        raise ConfigError("n must be at least 10")
    if not base_bpm > 0:
        raise ConfigError("base_bpm must be positive")
    if noise_std < 0 or modulation_period_s <= 0:
        raise ConfigError("noise_std must be >= 0 and modulation_period_s > 0")
    i = np.arange(n, dtype=np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.normal(0.0, noise_std, size=n) if noise_std > 0 else np.zeros(n)
    values = (
        base_bpm
        + drift_bpm_per_ks * (i / 1000.0)
        + modulation_amp * np.sin(2.0 * np.pi * i / modulation_period_s)
        + noise
    )
    return SeriesData(
        values=np.maximum(values, 20.0),
        timestamps=i,
        source_label=f"synth(seed={seed})",
    )


def write_csv(series: SeriesData, path: Union[str, os.PathLike]) -> None:
    """Write the canonical two-column dialect (``t_s``, ``hr_bpm``)."""
    ts = series.timestamps if series.timestamps is not None else np.arange(len(series))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "hr_bpm"])
        for t, v in zip(ts, series.values):
            w.writerow([repr(float(t)), repr(float(v))])
