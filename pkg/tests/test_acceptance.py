"""Acceptance suite. Each test is one criterion; a summary line per criterion is
printed at the end of the pytest run."""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from lm_forecast.lm_core import LeastSquaresProblem, LmConfig, lm_fit
from lm_forecast.metrics import (
    EvaluationPair,
    accuracy,
    efficiency,
    error_autocorrelation,
    mae,
    mape,
    mse,
    r_squared,
    truncate,
)
from lm_forecast.nar_model import NarLayout, NarWeights, batch_jacobian, init_weights
from lm_forecast.series_data import SplitSpec, load_csv, split_block
from lm_forecast.training_session import (
    TABLE4_SCENARIOS,
    SessionConfig,
    fit_with_early_stopping,
    run_session,
)

UQ_ENV = "LM_FORECAST_UQ_CSV"
UQ_COLUMN_ENV = "LM_FORECAST_UQ_COLUMN"


def collect(checks):
    """Assert all (ok, message) pairs at once so every miss is reported."""
    failed = [msg for ok, msg in checks if not ok]
    assert not failed, "; ".join(failed)


@pytest.mark.criterion(1, "block split reproduction")
def test_split_reproduction():
    start = time.perf_counter()
    a = split_block(6312, SplitSpec(0.30, 0.35, 0.35)).counts
    b = split_block(17007, SplitSpec(0.70, 0.15, 0.15)).counts
    assert a == (1894, 2209, 2209)
    assert b == (11905, 2551, 2551)
    assert time.perf_counter() - start < 0.1


@pytest.mark.criterion(2, "efficiency column of the split sweep")
def test_efficiency_column():
    shown = []
    for spec in TABLE4_SCENARIOS:
        s = split_block(6312, spec)
        shown.append(str(truncate(efficiency(s.n_total, s.t_train))))
    assert shown == ["1.11", "1.24", "1.42", "1.66", "2.00", "2.50", "3.33"]


@pytest.mark.criterion(3, "optimizer suite")
def test_optimizer_suite():
    start = time.perf_counter()
    checks = []

    rng = np.random.default_rng(7)
    A = rng.normal(size=(30, 4))
    x_true = np.array([1.5, -2.0, 0.25, 3.0])
    b = A @ x_true
    lin = LeastSquaresProblem(lambda th: A @ th - b, lambda th: A, 4, 30)
    out = lm_fit(lin, np.zeros(4))
    rel = np.linalg.norm(out.params - x_true) / np.linalg.norm(x_true)
    checks.append((rel <= 1e-8 and out.epochs_run <= 3,
                   f"linear rel err {rel:.2e} in {out.epochs_run} epochs"))

    rosen = LeastSquaresProblem(
        lambda th: np.array([10.0 * (th[1] - th[0] ** 2), 1.0 - th[0]]),
        lambda th: np.array([[-20.0 * th[0], 10.0], [-1.0, 0.0]]),
        2, 2,
    )
    out = lm_fit(rosen, np.array([-1.2, 1.0]))
    err = np.max(np.abs(out.params - 1.0))
    checks.append((err <= 1e-6, f"rosenbrock err {err:.2e}"))

    t = np.round(np.arange(21) * 0.1, 10)
    y = np.exp(-0.5 * t)
    decay = LeastSquaresProblem(
        lambda k: np.exp(-k[0] * t) - y,
        lambda k: (-t * np.exp(-k[0] * t))[:, None],
        1, t.size,
    )
    out = lm_fit(decay, np.array([2.0]))
    err = abs(out.params[0] - 0.5)
    checks.append((err <= 1e-6, f"decay k err {err:.2e}"))

    elapsed = time.perf_counter() - start
    checks.append((elapsed < 1.0, f"runtime {elapsed:.2f}s"))
    collect(checks)


@pytest.mark.criterion(4, "analytic Jacobian vs central differences")
def test_jacobian_oracle():
    start = time.perf_counter()
    layout = NarLayout()
    h = 1e-6
    worst = 0.0
    for draw in range(100):
        rng = np.random.default_rng(1000 + draw)
        weights = init_weights(layout, seed=draw)
        theta = weights.flatten() * rng.uniform(0.5, 4.0)
        weights = NarWeights.unflatten(theta, layout)
        X = rng.uniform(-1, 1, size=(8, layout.n_inputs))
        _, J = batch_jacobian(weights, X)
        fd = np.empty_like(J)
        for j in range(theta.size):
            e = np.zeros_like(theta)
            e[j] = h
            plus, _ = batch_jacobian(NarWeights.unflatten(theta + e, layout), X)
            minus, _ = batch_jacobian(NarWeights.unflatten(theta - e, layout), X)
            fd[:, j] = (plus - minus) / (2 * h)
        tol = np.maximum(1e-4 * np.abs(fd), 1e-7)
        excess = np.abs(J - fd) / tol
        worst = max(worst, float(excess.max()))
    assert worst <= 1.0, f"worst error/tolerance ratio {worst:.3f}"
    assert time.perf_counter() - start < 5.0


def scalar_problem():
    return LeastSquaresProblem(lambda th: th - 9.0, lambda th: np.ones((1, 1)), 1, 1)


@pytest.mark.criterion(5, "early stopping at best + max_fail with weight restoration")
def test_early_stopping():
    start = time.perf_counter()
    best, max_fail = 17, 6
    seq = [1.0 - 0.05 * k for k in range(best + 1)]
    seq += [seq[-1] + 0.01 * k for k in range(1, 15)]
    lm = LmConfig(mu_init=50.0, mu_decrease=0.9, gradient_tol=1e-12)

    # record the deterministic parameter path, then map it onto the stub sequence
    path = [0.0]
    lm_fit(scalar_problem(), np.zeros(1), lm,
           external_stop=lambda epoch, p: path.append(p[0]) or epoch >= len(seq))
    thetas = np.array(path[: len(seq)])
    assert np.all(np.diff(thetas) > 0)

    def validation_mse(params):
        return float(np.interp(params[0], thetas, seq))

    params, trace = fit_with_early_stopping(scalar_problem(), np.zeros(1), lm, validation_mse,
                                            max_fail=max_fail)
    collect([
        (trace.stop_epoch == best + max_fail, f"stop epoch {trace.stop_epoch}"),
        (trace.best_epoch == best, f"best epoch {trace.best_epoch}"),
        (trace.stop_epoch - trace.best_epoch == max_fail, "validation checks"),
        (abs(validation_mse(params) - seq[best]) <= 1e-10, "restored validation MSE"),
    ])
    assert time.perf_counter() - start < 0.5


@pytest.mark.criterion(6, "metric identities")
def test_metric_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checks = []
    y = rng.uniform(50, 120, 200)

    checks.append((r_squared(y, y) == 1.0 and mape(y, y) == 0.0, "perfect predictions"))
    checks.append((abs(r_squared(y, np.full_like(y, y.mean()))) <= 1e-12, "mean predictor"))

    identity_ok = mae_ok = True
    for _ in range(1000):
        n = int(rng.integers(2, 50))
        t = rng.uniform(40, 180, n)
        p = t + rng.normal(0, rng.uniform(0.1, 10), n)
        pair = EvaluationPair(t, p)
        m = mape(pair)
        identity_ok &= accuracy(m) + m == 100.0
        mae_ok &= mae(pair) <= math.sqrt(mse(pair)) * (1 + 1e-12)
    checks.append((identity_ok, "accuracy + MAPE == 100"))
    checks.append((mae_ok, "MAE <= sqrt(MSE)"))

    e = rng.normal(0.1, 2.0, 2209)
    ac = error_autocorrelation(e, 20)
    m0 = mse(e, np.zeros_like(e))
    checks.append((abs(ac.values[0] - m0) <= 1e-12 * max(1.0, m0), "lag-0 autocovariance == MSE"))

    elapsed = time.perf_counter() - start
    checks.append((elapsed < 1.0, f"runtime {elapsed:.2f}s"))
    collect(checks)


def cli_run(out_dir):
    cmd = [sys.executable, "-m", "lm_forecast", "run", "--synth",
           "--synth-seed", "1", "--synth-n", "6312", "--synth-base-bpm", "75",
           "--synth-modulation-amp", "5", "--synth-modulation-period-s", "240",
           "--synth-noise-std", "1", "--scenario", "0.30/0.35/0.35", "--out", str(out_dir)]
    env = {k: v for k, v in os.environ.items() if k != "LM_FORECAST_SEED"}
    start = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
    return proc, time.perf_counter() - start


@pytest.mark.criterion(7, "synthetic end-to-end at the default network layout")
def test_synthetic_end_to_end(tmp_path):
    first, elapsed = cli_run(tmp_path / "a")
    assert first.returncode == 0, first.stderr
    second, _ = cli_run(tmp_path / "b")
    assert second.returncode == 0, second.stderr

    report = json.loads((tmp_path / "a" / "report.json").read_text())
    test = report["result"]["reports"]["test"]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("report.json", "report.txt"))
    collect([
        (elapsed < 60.0, f"runtime {elapsed:.1f}s"),
        (test["mape"] <= 3.0, f"test MAPE {test['mape']:.3f}%"),
        (test["accuracy"] >= 97.0, f"test accuracy {test['accuracy']:.3f}%"),
        (test["pearson_r"] >= 0.95, f"test R {test['pearson_r']:.4f} < 0.95"),
        (same, "byte-identical reruns"),
    ])


@pytest.mark.criterion(8, "optional external-data band (set LM_FORECAST_UQ_CSV)")
def test_external_data_band():
    path = os.environ.get(UQ_ENV)
    if not path:
        pytest.skip(f"{UQ_ENV} not set")
    series = load_csv(path, os.environ.get(UQ_COLUMN_ENV, "0"))
    res = run_session(series, SessionConfig(split=SplitSpec(0.30, 0.35, 0.35)))
    test = res.reports["test"]
    collect([
        (test.efficiency_display == "3.33", f"efficiency {test.efficiency_display}"),
        (abs(test.accuracy - 79.17) <= 3.0, f"test accuracy {test.accuracy:.2f}%"),
        (test.pearson_r >= 0.99, f"test R {test.pearson_r:.4f}"),
    ])
