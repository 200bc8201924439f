"""
Static SVG diagnostics with no plotting dependency.

Only four primitives are drawn: polylines, scatter dots, stems and bars.
Output is deterministic text so reruns produce byte-identical files.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=20, top=40, bottom=55)
COLORS = {"train": "#1f77b4", "validation": "#2ca02c", "test": "#d62728", "fit": "#444444"}


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(step):
        out.append(0.0 if abs(v) < step * 1e-9 else v)
        v += step
    return out


def _log_ticks(lo: float, hi: float) -> list[float]:
    """Tick positions (in log10 units) at 1-2-5 multiples, decades only if crowded."""
    out = []
    for k in range(math.floor(lo), math.ceil(hi) + 1):
        for m in (1, 2, 5):
            t = k + math.log10(m)
            if lo <= t <= hi:
                out.append(t)
    decades = [t for t in out if float(t).is_integer()]
    return decades if len(out) > 8 and len(decades) >= 2 else out


def _label(v: float) -> str:
    return f"{v:.6g}"


class Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str,
                 xlim: tuple[float, float], ylim: tuple[float, float], logy: bool = False):
        self.logy = logy
        if logy:
            ylim = (math.log10(ylim[0]), math.log10(ylim[1]))
        self.xlim = _pad(xlim)
        self.ylim = _pad(ylim)
        self.parts: list[str] = []
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def px(self, x: float) -> float:
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * (self.x1 - self.x0)

    def py(self, y: float) -> float:
        if self.logy:
            y = math.log10(max(y, 1e-300))
        lo, hi = self.ylim
        return self.y0 - (y - lo) / (hi - lo) * (self.y0 - self.y1)

    def polyline(self, xs, ys, color: str, width: float = 1.5, dash: Optional[str] = None):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>'
        )

    def scatter(self, xs, ys, color: str, r: float = 1.6):
        for x, y in zip(xs, ys):
            self.parts.append(
                f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="{r}" '
                f'fill="{color}" fill-opacity="0.5"/>'
            )

    def stems(self, xs, ys, color: str):
        base = self.py(0.0)
        for x, y in zip(xs, ys):
            X, Y = _fmt(self.px(x)), _fmt(self.py(y))
            self.parts.append(f'<line x1="{X}" y1="{_fmt(base)}" x2="{X}" y2="{Y}" stroke="{color}"/>')
            self.parts.append(f'<circle cx="{X}" cy="{Y}" r="3" fill="{color}"/>')

    def bars(self, lowers, uppers, heights, color: str):
        for lo, hi, h in zip(lowers, uppers, heights):
            x, w = self.px(lo), self.px(hi) - self.px(lo)
            y = self.py(h)
            self.parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
                f'height="{_fmt(self.py(0.0) - y)}" fill="{color}" stroke="white" stroke-width="0.5"/>'
            )

    def hline(self, y: float, color: str, dash: str = "4,3"):
        self.polyline(self.xlim, (y, y), color, 1.0, dash)

    def vline(self, x: float, color: str, dash: str = "4,3"):
        Y0, Y1 = self.y0, self.y1
        X = _fmt(self.px(x))
        self.parts.append(
            f'<line x1="{X}" y1="{Y0}" x2="{X}" y2="{Y1}" stroke="{color}" stroke-dasharray="{dash}"/>'
        )

    def text(self, x_px: float, y_px: float, s: str, size: int = 12, anchor: str = "start"):
        self.parts.append(
            f'<text x="{_fmt(x_px)}" y="{_fmt(y_px)}" font-size="{size}" '
            f'text-anchor="{anchor}">{escape(s)}</text>'
        )

    def legend(self, entries: Sequence[tuple[str, str]]):
        for k, (label, color) in enumerate(entries):
            y = self.y1 + 14 + 16 * k
            self.parts.append(
                f'<rect x="{self.x1 - 150}" y="{y - 9}" width="10" height="10" fill="{color}"/>'
            )
            self.text(self.x1 - 135, y, label, 11)

    def render(self) -> str:
        axes = [
            f'<rect x="{self.x0}" y="{self.y1}" width="{self.x1 - self.x0}" '
            f'height="{self.y0 - self.y1}" fill="none" stroke="black"/>'
        ]
        for t in _ticks(*self.xlim):
            X = _fmt(self.px(t))
            axes.append(f'<line x1="{X}" y1="{self.y0}" x2="{X}" y2="{self.y0 + 5}" stroke="black"/>')
            axes.append(f'<text x="{X}" y="{self.y0 + 18}" font-size="11" text-anchor="middle">{_label(t)}</text>')
        for t in (_log_ticks(*self.ylim) if self.logy else _ticks(*self.ylim)):
            Y = _fmt(self.y0 - (t - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * (self.y0 - self.y1))
            lab = _label(10 ** t) if self.logy else _label(t)
            axes.append(f'<line x1="{self.x0 - 5}" y1="{Y}" x2="{self.x0}" y2="{Y}" stroke="black"/>')
            axes.append(f'<text x="{self.x0 - 8}" y="{Y}" font-size="11" text-anchor="end" dominant-baseline="middle">{lab}</text>')
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">'
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>'
        )
        labels = [
            f'<text x="{WIDTH / 2}" y="22" font-size="14" text-anchor="middle">{escape(self.title)}</text>',
            f'<text x="{(self.x0 + self.x1) / 2}" y="{HEIGHT - 12}" font-size="12" text-anchor="middle">{escape(self.xlabel)}</text>',
            f'<text x="16" y="{(self.y0 + self.y1) / 2}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 16 {(self.y0 + self.y1) / 2})">{escape(self.ylabel)}</text>',
        ]
        # clip data marks to the plot area
        clip = (
            f'<clipPath id="plot"><rect x="{self.x0}" y="{self.y1}" '
            f'width="{self.x1 - self.x0}" height="{self.y0 - self.y1}"/></clipPath>'
        )
        body = f'<g clip-path="url(#plot)">{"".join(self.parts)}</g>'
        return "\n".join([head, clip, *axes, body, *labels, "</svg>", ""])


def _pad(lim: tuple[float, float]) -> tuple[float, float]:
    lo, hi = float(lim[0]), float(lim[1])
    if hi <= lo:
        return lo - 0.5, hi + 0.5
    d = (hi - lo) * 0.04
    return lo - d, hi + d


def performance_curve(trace) -> str:
    """Train/validation MSE per epoch on a log axis, best epoch marked."""
    epochs = [r.epoch for r in trace.records]
    tr = [r.train_mse for r in trace.records]
    va = [r.validation_mse for r in trace.records]
    vals = [v for v in tr + va if v > 0] or [1.0]
    c = Canvas(
        f"Best validation performance {va[trace.best_epoch]:.4g} at epoch {trace.best_epoch}",
        f"{trace.stop_epoch} epochs",
        "Mean squared error (normalized)",
        (0, max(epochs[-1], 1)),
        (min(vals), max(vals)),
        logy=True,
    )
    c.polyline(epochs, tr, COLORS["train"])
    c.polyline(epochs, va, COLORS["validation"])
    c.vline(trace.best_epoch, "#888888")
    c.legend([("Train", COLORS["train"]), ("Validation", COLORS["validation"])])
    return c.render()


def error_histogram(bins, title: str = "Error histogram (test, 20 bins)") -> str:
    lowers = [b.lower for b in bins]
    uppers = [b.upper for b in bins]
    counts = [b.count for b in bins]
    c = Canvas(title, "Error = target - output (bpm)", "Instances",
               (lowers[0], uppers[-1]), (0, max(counts) or 1))
    c.bars(lowers, uppers, counts, COLORS["test"])
    c.vline(0.0, "#ff8c00", "2,2")
    return c.render()


def regression_scatter(pair, r_value: float, name: str = "Test") -> str:
    y, p = pair.targets, pair.predictions
    lo = float(min(y.min(), p.min()))
    hi = float(max(y.max(), p.max()))
    slope, intercept = np.polyfit(y, p, 1)
    c = Canvas(f"{name}: R={r_value:.4f}", "Target (bpm)",
               f"Output ~= {slope:.2f}*Target + {intercept:.2f}", (lo, hi), (lo, hi))
    c.scatter(y, p, "#000000", 1.4)
    c.polyline((lo, hi), (lo, hi), "#888888", 1.0, "4,3")
    c.polyline((lo, hi), (slope * lo + intercept, slope * hi + intercept), COLORS["test"], 2.0)
    c.legend([("Data", "#000000"), ("Fit", COLORS["test"]), ("Y = T", "#888888")])
    return c.render()


def response_series(pairs: dict, offsets: dict) -> str:
    """Targets, outputs and errors against sample index for every split."""
    xs_all, lo, hi = [], math.inf, -math.inf
    for name, pair in pairs.items():
        lo = min(lo, pair.targets.min(), pair.predictions.min(), pair.errors.min())
        hi = max(hi, pair.targets.max(), pair.predictions.max())
        xs_all.append(offsets[name] + len(pair.targets))
    c = Canvas("Response of output element 1 for time series 1", "Time (samples)",
               "Output and target (bpm), error", (0, max(xs_all)), (float(lo), float(hi)))
    for name, pair in pairs.items():
        xs = np.arange(len(pair.targets)) + offsets[name]
        c.polyline(xs, pair.targets, "#999999", 0.8)
        c.polyline(xs, pair.predictions, COLORS[name], 1.0)
        c.polyline(xs, pair.errors, "#ff8c00", 0.6)
    c.hline(0.0, "#000000", "1,2")
    c.legend([(f"{n} output", COLORS[n]) for n in pairs] + [("Targets", "#999999"), ("Errors", "#ff8c00")])
    return c.render()


def autocorrelation_stems(ac) -> str:
    """Symmetric stem plot of raw error autocovariance with the 95% band."""
    lags = np.concatenate([-ac.lags[:0:-1], ac.lags])
    vals = np.concatenate([ac.values[:0:-1], ac.values])
    band = ac.confidence_limit
    lo = float(min(vals.min(), -band, 0.0))
    hi = float(max(vals.max(), band))
    c = Canvas("Autocorrelation of error (raw, lag 0 = MSE)", "Lag", "Autocovariance (bpm^2)",
               (float(lags.min()), float(lags.max())), (lo, hi))
    c.hline(band, COLORS["test"])
    c.hline(-band, COLORS["test"])
    c.stems(lags, vals, COLORS["train"])
    c.legend([("Correlations", COLORS["train"]), ("Zero corr. 95% limit", COLORS["test"])])
    return c.render()


PLOT_NAMES = ("performance", "histogram", "regression", "response", "autocorrelation")


def session_plots(result) -> dict[str, str]:
    """Render all five diagnostics for one session, keyed by plot name."""
    offsets, k = {}, 0
    for name, pair in result.pairs.items():
        offsets[name] = k
        k += len(pair.targets)
    return {
        "performance": performance_curve(result.trace),
        "histogram": error_histogram(result.histogram),
        "regression": regression_scatter(result.pairs["test"], result.reports["test"].pearson_r),
        "response": response_series(result.pairs, offsets),
        "autocorrelation": autocorrelation_stems(result.autocorrelation),
    }
