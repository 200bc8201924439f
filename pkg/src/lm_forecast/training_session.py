"""
One training experiment end to end, plus the multi-scenario sweep.

The pipeline is embed -> split -> normalize on the training span -> LM fit
on the training rows with validation early stopping -> evaluate every
split in bpm.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, LmForecastError
from .lm_core import LeastSquaresProblem, LmConfig, StopReason, lm_fit
from .metrics import (
    Autocorrelation,
    EvaluationPair,
    HistogramBin,
    MetricsReport,
    error_autocorrelation,
    error_histogram,
    evaluate,
)
from .nar_model import (
    NarLayout,
    NarWeights,
    NormParams,
    apply_norm,
    batch_jacobian,
    denormalize,
    fit_norm,
    init_weights,
    predict,
)
from .series_data import LagEmbedding, SeriesData, SplitIndices, SplitSpec, embed, split_block

log = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")
HISTOGRAM_BINS = 20
AUTOCORR_MAX_LAG = 20


@dataclass(frozen=True)
class SessionConfig:
    layout: NarLayout = NarLayout()
    lm: LmConfig = LmConfig()
    split: SplitSpec = SplitSpec(0.70, 0.15, 0.15)
    max_fail: Optional[int] = 6  # None disables early stopping
    seed: int = 0

    def __post_init__(self):
        if self.max_fail is not None and self.max_fail < 1:
            raise ConfigError("max_fail must be >= 1 (or None to disable)")


class EpochRecord(NamedTuple):
    epoch: int
    train_mse: float
    validation_mse: float
    mu: float
    gradient_inf_norm: float


@dataclass
class TrainTrace:
    """Per-epoch history; MSE values are in normalized units."""

    records: list[EpochRecord]
    best_epoch: int
    stop_epoch: int
    stop_reason: StopReason
    restored_epoch: int

    @property
    def validation_mse(self) -> np.ndarray:
        return np.array([r.validation_mse for r in self.records])

    @property
    def train_mse(self) -> np.ndarray:
        return np.array([r.train_mse for r in self.records])

    def to_dict(self) -> dict:
        return {
            "units": "normalized",
            "best_epoch": self.best_epoch,
            "stop_epoch": self.stop_epoch,
            "restored_epoch": self.restored_epoch,
            "stop_reason": self.stop_reason.value,
            "epochs": [r._asdict() for r in self.records],
        }


def fit_with_early_stopping(
    problem: LeastSquaresProblem,
    init_params: np.ndarray,
    lm: LmConfig,
    validation_mse: Callable[[np.ndarray], float],
    max_fail: Optional[int] = 6,
) -> tuple[np.ndarray, TrainTrace]:
    """Run :func:`lm_fit` and watch validation MSE after every accepted epoch.

    Training stops once validation MSE has failed to beat its best value
    for ``max_fail`` consecutive epochs, and the parameters from the best
    epoch are returned. With ``max_fail=None`` the fit runs to its own
    stopping rule and the final parameters are returned.
    """
    best = {"val": validation_mse(init_params), "epoch": 0, "params": np.array(init_params)}
    val_history = [best["val"]]
    fails = 0

    def watch(epoch: int, params: np.ndarray) -> bool:
        nonlocal fails
        v = validation_mse(params)
        val_history.append(v)
        if v < best["val"]:
            best.update(val=v, epoch=epoch, params=params.copy())
            fails = 0
        else:
            fails += 1
        return max_fail is not None and fails >= max_fail

    outcome = lm_fit(problem, init_params, lm, external_stop=watch)
    n = problem.residual_count
    records = [
        EpochRecord(t.epoch, t.sse / n, val_history[t.epoch], t.mu, t.gradient_inf_norm)
        for t in outcome.trace
    ]
    if max_fail is None:
        params, restored = outcome.params, outcome.epochs_run
    else:
        params, restored = best["params"], best["epoch"]
    trace = TrainTrace(
        records=records,
        best_epoch=best["epoch"],
        stop_epoch=outcome.epochs_run,
        stop_reason=outcome.stop_reason,
        restored_epoch=restored,
    )
    return params, trace


@dataclass
class SessionResult:
    weights: NarWeights
    norm: NormParams
    reports: dict[str, MetricsReport]
    trace: TrainTrace
    histogram: list[HistogramBin]
    autocorrelation: Autocorrelation
    split: SplitIndices          # over embedded rows
    reported_counts: tuple[int, int, int]  # raw-series equivalent
    n_series: int
    layout: NarLayout
    split_spec: SplitSpec
    seed: int
    pairs: dict[str, EvaluationPair] = field(default_factory=dict, repr=False)
    first_target_index: int = 0

    def to_dict(self) -> dict:
        return {
            "split_spec": list(self.split_spec.as_tuple()),
            "seed": self.seed,
            "layout": {"lags": list(self.layout.lags), "hidden_units": self.layout.hidden_units},
            "n_series": self.n_series,
            "reported_counts": {
                "train": self.reported_counts[0],
                "validation": self.reported_counts[1],
                "test": self.reported_counts[2],
            },
            "embedded_counts": dict(zip(SPLITS, self.split.counts)),
            "first_target_index": self.first_target_index,
            "norm": {"y_min": self.norm.y_min, "y_max": self.norm.y_max},
            "weights": self.weights.to_dict(),
            "metrics_units": {"mse": "bpm^2", "mae": "bpm", "mape": "percent", "accuracy": "percent"},
            "reports": {k: v.to_dict() for k, v in self.reports.items()},
            "trace": self.trace.to_dict(),
            "diagnostics": {
                "error_histogram": [b._asdict() for b in self.histogram],
                "error_autocorrelation": self.autocorrelation.to_dict(),
            },
        }


def _nar_problem(layout: NarLayout, rows: LagEmbedding) -> LeastSquaresProblem:
    X, y = rows.inputs, rows.targets

    def residual(theta):
        return predict(NarWeights.unflatten(theta, layout), X) - y

    def jacobian(theta):
        return batch_jacobian(NarWeights.unflatten(theta, layout), X)[1]

    return LeastSquaresProblem(residual, jacobian, layout.param_count, len(rows))


def run_session(series: SeriesData, config: SessionConfig) -> SessionResult:
    layout = config.layout
    raw = embed(series, layout.lags)
    split = split_block(len(raw), config.split)
    reported = split_block(len(series), config.split)

    # training rows only ever see samples up to the last training target
    norm = fit_norm(series.values[: raw.first_target_index + split.t_train])
    zemb = embed(apply_norm(series.values, norm), layout.lags)
    z = {name: zemb.rows(r) for name, r in zip(SPLITS, (split.train_range, split.validation_range, split.test_range))}

    val = z["validation"]

    def validation_mse(theta):
        e = predict(NarWeights.unflatten(theta, layout), val.inputs) - val.targets
        return float(e @ e) / len(val)

    theta0 = init_weights(layout, config.seed).flatten()
    theta, trace = fit_with_early_stopping(
        _nar_problem(layout, z["train"]), theta0, config.lm, validation_mse, config.max_fail
    )
    weights = NarWeights.unflatten(theta, layout)
    log.debug("session %s: stop=%s at epoch %d, best %d",
              config.split.label(), trace.stop_reason.value, trace.stop_epoch, trace.best_epoch)

    n_total, t_train = len(series), reported.t_train
    pairs, reports = {}, {}
    for name, r in zip(SPLITS, (split.train_range, split.validation_range, split.test_range)):
        preds = denormalize(predict(weights, z[name].inputs), norm)
        pairs[name] = EvaluationPair(raw.targets[r.start:r.stop], preds)
        reports[name] = evaluate(pairs[name], n_total, t_train)

    test_errors = pairs["test"].errors
    return SessionResult(
        weights=weights,
        norm=norm,
        reports=reports,
        trace=trace,
        histogram=error_histogram(test_errors, HISTOGRAM_BINS),
        autocorrelation=error_autocorrelation(
            test_errors, min(AUTOCORR_MAX_LAG, test_errors.size - 1)
        ),
        split=split,
        reported_counts=reported.counts,
        n_series=len(series),
        layout=layout,
        split_spec=config.split,
        seed=config.seed,
        pairs=pairs,
        first_target_index=raw.first_target_index,
    )


@dataclass
class ScenarioRun:
    scenario_id: int
    spec: SplitSpec
    result: Optional[SessionResult] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.result is not None

    def row(self) -> dict:
        """Test-split metrics shaped like a results-table row."""
        row = {
            "scenario": self.scenario_id,
            "train_pct": self.spec.train_fraction * 100,
            "val_pct": self.spec.validation_fraction * 100,
            "test_pct": self.spec.test_fraction * 100,
        }
        if not self.ok:
            row["error"] = self.error
            return row
        rep = self.result.reports["test"]
        row.update(
            t_train=rep.t_train,
            mse=rep.mse,
            pearson_r=rep.pearson_r,
            r_squared=rep.r_squared,
            mae=rep.mae,
            mape=rep.mape,
            accuracy=rep.accuracy,
            efficiency_exact=rep.efficiency,
            efficiency_display=rep.efficiency_display,
        )
        return row


def _run_one(args) -> ScenarioRun:
    k, series, config = args
    try:
        return ScenarioRun(k, config.split, result=run_session(series, config))
    except (LmForecastError, ValueError) as exc:
        log.warning("scenario %d (%s) failed: %s", k, config.split.label(), exc)
        return ScenarioRun(k, config.split, error=f"{type(exc).__name__}: {exc}")


def run_scenarios(
    series: SeriesData,
    base_config: SessionConfig,
    scenarios: Sequence[SplitSpec],
    parallel: bool = False,
    max_workers: Optional[int] = None,
) -> list[ScenarioRun]:
    """Run one session per split spec with a shared seed and layout.

    Scenario ids are 1-based and follow the input order. A failing
    scenario yields an error row instead of aborting the sweep.
    """
    if not scenarios:
        raise ConfigError("scenario list is empty")
    jobs = [(k, series, replace(base_config, split=s)) for k, s in enumerate(scenarios, 1)]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


TABLE4_SCENARIOS = (
    SplitSpec(0.90, 0.05, 0.05),
    SplitSpec(0.80, 0.10, 0.10),
    SplitSpec(0.70, 0.15, 0.15),
    SplitSpec(0.60, 0.20, 0.20),
    SplitSpec(0.50, 0.25, 0.25),
    SplitSpec(0.40, 0.30, 0.30),
    SplitSpec(0.30, 0.35, 0.35),
)
TABLE7_SCENARIOS = (SplitSpec(0.70, 0.15, 0.15), SplitSpec(0.30, 0.35, 0.35))
PRESETS = {"table4": TABLE4_SCENARIOS, "table7": TABLE7_SCENARIOS}
