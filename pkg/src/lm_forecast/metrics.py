"""
Forecast-error metrics and error diagnostics.

Errors are always ``target - prediction``. Inputs are in bpm unless the
caller says otherwise; the functions themselves are unit-agnostic.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from decimal import ROUND_DOWN, ROUND_HALF_UP, Decimal
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ZeroTarget, ZeroVariance


@dataclass(frozen=True, eq=False)
class EvaluationPair:
    targets: np.ndarray
    predictions: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        p = np.asarray(self.predictions, dtype=np.float64).reshape(-1)
        if y.shape != p.shape or y.size == 0:
            raise ValueError("targets and predictions must have equal non-zero length")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(p))):
            raise ValueError("targets and predictions must be finite")
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "predictions", p)

    @property
    def errors(self) -> np.ndarray:
        return self.targets - self.predictions


def _pair(pair_or_targets, predictions=None) -> EvaluationPair:
    if isinstance(pair_or_targets, EvaluationPair):
        return pair_or_targets
    return EvaluationPair(pair_or_targets, predictions)


def mse(pair, predictions=None) -> float:
    e = _pair(pair, predictions).errors
    return float(np.mean(e * e))


def mae(pair, predictions=None) -> float:
    return float(np.mean(np.abs(_pair(pair, predictions).errors)))


def mape(pair, predictions=None) -> float:
    p = _pair(pair, predictions)
    if np.any(p.targets == 0):
        raise ZeroTarget("MAPE undefined for zero targets")
    return float(np.mean(np.abs(p.errors / p.targets)) * 100.0)


def accuracy(mape_value: float) -> float:
    return 100.0 - mape_value


def efficiency(n_total: int, t_train: int) -> float:
    if t_train < 1 or n_total < t_train:
        raise ValueError(f"need 1 <= t_train <= n_total, got n={n_total}, t={t_train}")
    return n_total / t_train


def pearson_r(pair, predictions=None) -> float:
    p = _pair(pair, predictions)
    dy = p.targets - p.targets.mean()
    dp = p.predictions - p.predictions.mean()
    syy, spp = float(dy @ dy), float(dp @ dp)
    if syy == 0 or spp == 0:
        raise ZeroVariance("Pearson R undefined for a constant vector")
    r = float(dy @ dp) / np.sqrt(syy * spp)
    return float(min(1.0, max(-1.0, r)))


def r_squared(pair, predictions=None) -> float:
    p = _pair(pair, predictions)
    dy = p.targets - p.targets.mean()
    tss = float(dy @ dy)
    if tss == 0:
        raise ZeroVariance("R² undefined for constant targets")
    e = p.errors
    return 1.0 - float(e @ e) / tss


def truncate(x: float, places: int = 2) -> Decimal:
    """Cut ``x`` to ``places`` decimals without rounding (display only)."""
    return Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_DOWN)


def round_half_away(x: float, places: int = 2) -> Decimal:
    return Decimal(repr(float(x))).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class MetricsReport:
    """One row of results. ``mse`` in bpm², ``mae`` in bpm, percentages for mape/accuracy."""

    mse: float
    mae: float
    mape: float
    pearson_r: float
    r_squared: float
    accuracy: float
    efficiency: float
    n_total: int
    t_train: int
    n_samples: int = 0

    @property
    def counts(self) -> tuple[int, int]:
        return (self.n_total, self.t_train)

    @property
    def efficiency_display(self) -> str:
        return str(truncate(self.efficiency, 2))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["efficiency_display"] = self.efficiency_display
        return d


def evaluate(pair, n_total: int, t_train: int) -> MetricsReport:
    p = _pair(pair)
    m = mape(p)
    return MetricsReport(
        mse=mse(p),
        mae=mae(p),
        mape=m,
        pearson_r=pearson_r(p),
        r_squared=r_squared(p),
        accuracy=accuracy(m),
        efficiency=efficiency(n_total, t_train),
        n_total=n_total,
        t_train=t_train,
        n_samples=p.targets.size,
    )


class HistogramBin(NamedTuple):
    lower: float
    upper: float
    count: int


def error_histogram(errors: Sequence[float], bins: int = 20) -> list[HistogramBin]:
    """Equal-width bins over [min, max]; each bin is upper-exclusive except the last."""
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    if e.size == 0:
        raise ValueError("errors must be non-empty")
    if bins < 1:
        raise ValueError("bins must be positive")
    lo, hi = float(e.min()), float(e.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, e, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    return [
        HistogramBin(float(edges[k]), float(edges[k + 1]), int(counts[k])) for k in range(bins)
    ]


@dataclass(frozen=True)
class Autocorrelation:
    lags: np.ndarray
    values: np.ndarray
    confidence_limit: float

    def to_dict(self) -> dict:
        return {
            "lags": self.lags.tolist(),
            "values": self.values.tolist(),
            "confidence_limit": self.confidence_limit,
        }


def error_autocorrelation(errors: Sequence[float], max_lag: int) -> Autocorrelation:
    """Raw autocovariance c(k) = (1/N) Σ e_i e_{i+k}, no mean removal.

    ``c(0)`` is therefore the MSE of the errors. The 95% band is
    ``1.96/sqrt(N)`` scaled by ``c(0)`` so it can be drawn on the same axis.
    """
    e = np.asarray(errors, dtype=np.float64).reshape(-1)
    n = e.size
    if not 0 < max_lag < n:
        raise ValueError(f"need 0 < max_lag < N, got max_lag={max_lag}, N={n}")
    values = np.array([float(e[: n - k] @ e[k:]) / n for k in range(max_lag + 1)])
    return Autocorrelation(
        lags=np.arange(max_lag + 1),
        values=values,
        confidence_limit=1.96 / np.sqrt(n) * values[0],
    )
