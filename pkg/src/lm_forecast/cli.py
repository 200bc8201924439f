"""
Command-line entry point: ``lm-forecast synth|run|scenarios``.

Settings come from, in decreasing priority: command-line flags, the JSON
file given by ``--config``, the ``LM_FORECAST_SEED`` environment variable
(seed only) and built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import jsonschema

from . import plots
from .errors import ConfigError, LmForecastError
from .lm_core import LmConfig
from .metrics import round_half_away
from .nar_model import NarLayout
from .series_data import SeriesData, SplitSpec, load_csv, synth_heart_rate, write_csv
from .training_session import PRESETS, SPLITS, ScenarioRun, SessionConfig, run_scenarios

log = logging.getLogger("lm_forecast")

SEED_ENV = "LM_FORECAST_SEED"
CSV_PRECISION = 10  # decimals for float columns in scenarios.csv

SYNTH_DEFAULTS = {
    "seed": 1,
    "n": 6312,
    "base_bpm": 75.0,
    "drift_bpm_per_ks": 0.0,
    "modulation_amp": 5.0,
    "modulation_period_s": 240.0,
    "noise_std": 1.0,
}

_split_item = {
    "oneOf": [
        {"type": "string"},
        {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    ]
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "input": {"type": "string"},
        "column": {"type": ["string", "integer"]},
        "synth": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer"},
                "n": {"type": "integer", "minimum": 10},
                "base_bpm": {"type": "number", "exclusiveMinimum": 0},
                "drift_bpm_per_ks": {"type": "number"},
                "modulation_amp": {"type": "number"},
                "modulation_period_s": {"type": "number", "exclusiveMinimum": 0},
                "noise_std": {"type": "number", "minimum": 0},
            },
        },
        "lags": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "hidden_units": {"type": "integer", "minimum": 1},
        "lm": {
            "type": "object",
            "additionalProperties": False,
            "properties": {f.name: {"type": "number"} for f in fields(LmConfig)},
        },
        "preset": {"enum": sorted(PRESETS)},
        "scenarios": {"type": "array", "items": _split_item},
        "seed": {"type": "integer"},
        "max_fail": {"type": ["integer", "null"], "minimum": 1},
        "out": {"type": "string"},
        "plots": {"type": "boolean"},
        "parallel": {"type": "boolean"},
    },
}


@dataclass
class RunConfig:
    input: Optional[str] = None
    column: Union[str, int] = 0
    synth: Optional[dict] = None
    layout: NarLayout = NarLayout()
    lm: LmConfig = LmConfig()
    scenarios: list[SplitSpec] = field(default_factory=list)
    seed: int = 0
    max_fail: Optional[int] = 6
    out: str = "out"
    emit_plots: bool = False
    parallel: bool = False

    def __post_init__(self):
        if (self.input is None) == (self.synth is None):
            raise ConfigError("specify exactly one data source: --input FILE or --synth")

    def session_config(self) -> SessionConfig:
        return SessionConfig(
            layout=self.layout, lm=self.lm, split=self.scenarios[0],
            max_fail=self.max_fail, seed=self.seed,
        )

    def load_series(self) -> SeriesData:
        if self.input is not None:
            return load_csv(self.input, self.column, max_lag=self.layout.max_lag)
        return synth_heart_rate(**self.synth)


def _parse_split(item) -> SplitSpec:
    if isinstance(item, str):
        return SplitSpec.parse(item)
    return SplitSpec(*item)


def _parse_lags(text: str) -> list[int]:
    text = text.strip()
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.replace(" ", "").split(",") if x]


def _max_fail(text: str) -> Optional[int]:
    if text.lower() in ("none", "off", "inf"):
        return None
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("--max-fail must be >= 1 or 'none'")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_run_config(args: argparse.Namespace, require_scenarios: int = 1) -> RunConfig:
    cfg: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
        try:
            jsonschema.validate(cfg, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"{args.config}: {exc.message}") from None

    def pick(flag, key, default=None):
        return flag if flag is not None else cfg.get(key, default)

    input_path = pick(args.input, "input")
    synth = None
    if args.synth or (input_path is None and "synth" in cfg):
        synth = {**SYNTH_DEFAULTS, **cfg.get("synth", {})}
        for key in SYNTH_DEFAULTS:
            v = getattr(args, f"synth_{key}", None)
            if v is not None:
                synth[key] = v
        if args.synth and args.input is None:
            input_path = None

    seed = args.seed
    if seed is None:
        seed = cfg.get("seed")
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    seed = 0 if seed is None else seed

    lags = _parse_lags(args.lags) if args.lags else cfg.get("lags", [1, 2])
    layout = NarLayout(tuple(lags), pick(args.hidden, "hidden_units", 10))
    lm_kw = dict(cfg.get("lm", {}))
    if args.max_epochs is not None:
        lm_kw["max_epochs"] = args.max_epochs
    if "max_epochs" in lm_kw:
        lm_kw["max_epochs"] = int(lm_kw["max_epochs"])
    lm = LmConfig(**lm_kw)

    if args.scenario:
        scenarios = [_parse_split(s) for s in args.scenario]
    elif args.preset:
        scenarios = list(PRESETS[args.preset])
    elif "scenarios" in cfg:
        scenarios = [_parse_split(s) for s in cfg["scenarios"]]
    elif "preset" in cfg:
        scenarios = list(PRESETS[cfg["preset"]])
    else:
        scenarios = []
    if len(scenarios) < require_scenarios:
        raise ConfigError("no scenario given: use --scenario a/b/c or --preset table4|table7")

    max_fail = args.max_fail if args.max_fail is not None else cfg.get("max_fail", 6)
    if args.no_early_stop:
        max_fail = None

    return RunConfig(
        input=input_path,
        column=pick(args.column, "column", 0),
        synth=synth,
        layout=layout,
        lm=lm,
        scenarios=scenarios,
        seed=seed,
        max_fail=max_fail,
        out=pick(args.out, "out", "out"),
        emit_plots=bool(args.plots or cfg.get("plots", False)),
        parallel=bool(args.parallel or cfg.get("parallel", False)),
    )


def _fixed(x) -> str:
    return f"{x:.{CSV_PRECISION}f}"


CSV_COLUMNS = (
    "scenario", "train_pct", "val_pct", "test_pct", "t_train", "mse", "pearson_r",
    "r_squared", "mae", "mape", "accuracy", "efficiency_exact", "efficiency_display", "error",
)


def scenarios_csv(runs: Sequence[ScenarioRun]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for run in runs:
        row = run.row()
        out = []
        for col in CSV_COLUMNS:
            v = row.get(col, "")
            if col in ("train_pct", "val_pct", "test_pct"):
                v = f"{round(v, 6):g}"
            elif isinstance(v, float):
                v = _fixed(v)
            out.append(v)
        w.writerow(out)
    return buf.getvalue()


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def _run_metadata(cfg: RunConfig, series: SeriesData) -> dict:
    return {
        "source": series.source_label,
        "n_series": len(series),
        "seed": cfg.seed,
        "layout": {"lags": list(cfg.layout.lags), "hidden_units": cfg.layout.hidden_units},
        "lm": {f.name: getattr(cfg.lm, f.name) for f in fields(LmConfig)},
        "max_fail": cfg.max_fail,
        "count_note": (
            "reported counts/efficiency use the raw series length; training runs on "
            "lag-embedded rows (max lag fewer)"
        ),
    }


def _plot_files(runs: Sequence[ScenarioRun]) -> dict[str, str]:
    files = {}
    for run in runs:
        if not run.ok:
            continue
        for name, svg in plots.session_plots(run.result).items():
            files[f"plots/scenario_{run.scenario_id}_{name}.svg"] = svg
    return files


def _write_all(out_dir: Path, files: dict[str, str]) -> None:
    for rel, text in files.items():
        path = out_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def cmd_synth(args: argparse.Namespace) -> int:
    if args.n < 10:
        raise ConfigError("--n must be at least 10")
    series = synth_heart_rate(
        seed=args.seed, n=args.n, base_bpm=args.base, drift_bpm_per_ks=args.drift,
        modulation_amp=args.amp, modulation_period_s=args.period, noise_std=args.noise,
    )
    write_csv(series, args.out)
    log.info("wrote %d rows to %s", len(series), args.out)
    return 0


def cmd_scenarios(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    series = cfg.load_series()
    runs = run_scenarios(series, cfg.session_config(), cfg.scenarios, parallel=cfg.parallel)

    payload = _run_metadata(cfg, series)
    payload["scenarios"] = [
        {"scenario": r.scenario_id, "split": list(r.spec.as_tuple()), "row": r.row(),
         "result": r.result.to_dict() if r.ok else None}
        for r in runs
    ]
    files = {"scenarios.csv": scenarios_csv(runs), "scenarios.json": _dump_json(payload)}
    if cfg.emit_plots:
        files.update(_plot_files(runs))
    _write_all(Path(cfg.out), files)

    for r in runs:
        row = r.row()
        if r.ok:
            print(f"scenario {r.scenario_id} ({r.spec.label()}): t={row['t_train']} "
                  f"MSE={round_half_away(row['mse'])} R={round_half_away(row['pearson_r'], 4)} "
                  f"MAPE={round_half_away(row['mape'])}% Acc={round_half_away(row['accuracy'])}% "
                  f"Eff={row['efficiency_display']}")
        else:
            print(f"scenario {r.scenario_id} ({r.spec.label()}): FAILED {r.error}")
    return 0 if all(r.ok for r in runs) else 1


def best_scenario_report(result) -> str:
    """Text table with per-split counts and MSE/R, plus test-split summary metrics."""
    t, v, s = result.reported_counts
    spec = result.split_spec
    rep = result.reports
    pct = lambda f: f"{round(f * 100, 6):g}%"
    lines = [
        f"{'Data split':<12}{'Training':>12}{'Validation':>12}{'Testing':>12}",
        f"{'Percent':<12}{pct(spec.train_fraction):>12}{pct(spec.validation_fraction):>12}{pct(spec.test_fraction):>12}",
        f"{'Points':<12}{t:>12}{v:>12}{s:>12}",
        f"{'MSE (bpm^2)':<12}" + "".join(f"{str(round_half_away(rep[k].mse)):>12}" for k in SPLITS),
        f"{'R':<12}" + "".join(f"{str(round_half_away(rep[k].pearson_r, 4)):>12}" for k in SPLITS),
        f"{'MAE (bpm)':<12}{str(round_half_away(rep['test'].mae)):>12}",
        f"{'MAPE':<12}{str(round_half_away(rep['test'].mape)) + '%':>12}",
        f"{'Accuracy':<12}{str(round_half_away(rep['test'].accuracy)) + '%':>12}",
        f"{'Efficiency':<12}{rep['test'].efficiency_display:>12}",
    ]
    return "\n".join(lines) + "\n"


def cmd_run(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    if len(cfg.scenarios) != 1:
        raise ConfigError("run takes exactly one scenario; use `scenarios` for sweeps")
    series = cfg.load_series()
    run = run_scenarios(series, cfg.session_config(), cfg.scenarios)[0]
    if not run.ok:
        print(f"run failed: {run.error}", file=sys.stderr)
        return 1
    payload = _run_metadata(cfg, series)
    payload["result"] = run.result.to_dict()
    text = best_scenario_report(run.result)
    files = {"report.json": _dump_json(payload), "report.txt": text}
    if cfg.emit_plots:
        files.update(_plot_files([run]))
    _write_all(Path(cfg.out), files)
    print(text, end="")
    return 0


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_argument_group("data source")
    src.add_argument("--input", help="CSV file with a heart-rate column")
    src.add_argument("--column", help="header name or 0-based index (default 0)")
    src.add_argument("--synth", action="store_true", help="use the synthetic generator")
    for key, default in SYNTH_DEFAULTS.items():
        typ = int if isinstance(default, int) else float
        src.add_argument(f"--synth-{key.replace('_', '-')}", dest=f"synth_{key}", type=typ,
                         help=f"synthetic {key} (default {default})")
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--scenario", action="append", help="split a/b/c, fractions or percent (repeatable)")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--lags", help="lag list, e.g. 1,2 or 1:5 (default 1,2)")
    p.add_argument("--hidden", type=_positive_int, help="hidden units (default 10)")
    p.add_argument("--seed", type=int, help=f"weight-init seed (default ${SEED_ENV} or 0)")
    p.add_argument("--max-fail", type=_max_fail, help="validation checks before stopping (default 6)")
    p.add_argument("--no-early-stop", action="store_true", help="disable validation early stopping")
    p.add_argument("--max-epochs", type=_positive_int, help="epoch cap (default 1000)")
    p.add_argument("--out", help="output directory (default ./out)")
    p.add_argument("--plots", action="store_true", help="write SVG diagnostics")
    p.add_argument("--parallel", action="store_true", help="run scenarios in worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lm-forecast",
        description="One-step heart-rate forecasting with a Levenberg-Marquardt trained NAR network.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic heart-rate CSV")
    p.add_argument("--seed", type=int, default=SYNTH_DEFAULTS["seed"])
    p.add_argument("--n", type=_positive_int, default=SYNTH_DEFAULTS["n"])
    p.add_argument("--base", type=float, default=SYNTH_DEFAULTS["base_bpm"])
    p.add_argument("--drift", type=float, default=SYNTH_DEFAULTS["drift_bpm_per_ks"],
                   help="bpm per 1000 samples")
    p.add_argument("--amp", type=float, default=SYNTH_DEFAULTS["modulation_amp"])
    p.add_argument("--period", type=float, default=SYNTH_DEFAULTS["modulation_period_s"])
    p.add_argument("--noise", type=float, default=SYNTH_DEFAULTS["noise_std"])
    p.add_argument("--out", default="synth_hr.csv", help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="train and evaluate one split scenario")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("scenarios", help="sweep several split scenarios")
    _add_run_flags(p)
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        parser.error(str(exc))  # exits with status 2
    except LmForecastError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
