"""
Nonlinear autoregressive (NAR) network: one tanh hidden layer, linear output.

    ŷ(t) = b_out + Σ_h w_out[h] · tanh(b_h[h] + Σ_j W_in[h, j] · y(t − lags[j]))

Weights flatten in a fixed order: ``W_in`` row-major, ``b_h``, ``w_out``,
``b_out``. Initial weights are uniform on [-0.5, 0.5], drawn in that order
from numpy's PCG64 bit generator (O'Neill 2014, the PCG-XSL-RR 128/64
variant) seeded with the integer seed, via ``Generator.uniform``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateSeries


@dataclass(frozen=True)
class NarLayout:
    lags: tuple[int, ...] = (1, 2)
    hidden_units: int = 10

    def __post_init__(self):
        lags = tuple(int(l) for l in self.lags)
        object.__setattr__(self, "lags", lags)
        if not lags:
            raise ConfigError("lags must be non-empty")
        if lags[0] < 1 or any(b <= a for a, b in zip(lags, lags[1:])):
            raise ConfigError(f"lags must be positive and strictly increasing, got {lags}")
        if self.hidden_units < 1:
            raise ConfigError("hidden_units must be positive")

    @property
    def n_inputs(self) -> int:
        return len(self.lags)

    @property
    def max_lag(self) -> int:
        return self.lags[-1]

    @property
    def param_count(self) -> int:
        return self.hidden_units * (self.n_inputs + 1) + self.hidden_units + 1


@dataclass(frozen=True, eq=False)
class NarWeights:
    input_weights: np.ndarray   # (hidden, n_inputs)
    hidden_bias: np.ndarray     # (hidden,)
    output_weights: np.ndarray  # (hidden,)
    output_bias: float

    def __post_init__(self):
        W = np.array(self.input_weights, dtype=np.float64)
        if W.ndim != 2:
            raise ValueError("input_weights must be 2-D")
        h = W.shape[0]
        b = np.array(self.hidden_bias, dtype=np.float64).reshape(-1)
        v = np.array(self.output_weights, dtype=np.float64).reshape(-1)
        if b.shape != (h,) or v.shape != (h,):
            raise ValueError("hidden_bias and output_weights must match hidden_units")
        for arr in (W, b, v):
            arr.setflags(write=False)
        object.__setattr__(self, "input_weights", W)
        object.__setattr__(self, "hidden_bias", b)
        object.__setattr__(self, "output_weights", v)
        object.__setattr__(self, "output_bias", float(self.output_bias))
        if not (np.all(np.isfinite(self.flatten()))):
            raise ValueError("weights must be finite")

    @property
    def hidden_units(self) -> int:
        return self.input_weights.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.input_weights.shape[1]

    def flatten(self) -> np.ndarray:
        return np.concatenate(
            [
                self.input_weights.reshape(-1),
                self.hidden_bias,
                self.output_weights,
                [self.output_bias],
            ]
        )

    @classmethod
    def unflatten(cls, theta: np.ndarray, layout: NarLayout) -> "NarWeights":
        theta = np.asarray(theta, dtype=np.float64)
        h, k = layout.hidden_units, layout.n_inputs
        if theta.shape != (layout.param_count,):
            raise ValueError(f"expected {layout.param_count} parameters, got {theta.shape}")
        n_w = h * k
        return cls(
            input_weights=theta[:n_w].reshape(h, k),
            hidden_bias=theta[n_w:n_w + h],
            output_weights=theta[n_w + h:n_w + 2 * h],
            output_bias=theta[-1],
        )

    def __eq__(self, other):
        if not isinstance(other, NarWeights):
            return NotImplemented
        a, b = self.flatten(), other.flatten()
        return a.shape == b.shape and bool(np.array_equal(a, b)) and (
            self.input_weights.shape == other.input_weights.shape
        )

    def to_dict(self) -> dict:
        return {
            "input_weights": self.input_weights.tolist(),
            "hidden_bias": self.hidden_bias.tolist(),
            "output_weights": self.output_weights.tolist(),
            "output_bias": self.output_bias,
        }


@dataclass(frozen=True)
class NormParams:
    y_min: float
    y_max: float

    def __post_init__(self):
        if not self.y_max > self.y_min:
            raise DegenerateSeries(f"need y_max > y_min, got [{self.y_min}, {self.y_max}]")


def init_weights(layout: NarLayout, seed: int) -> NarWeights:
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = rng.uniform(-0.5, 0.5, size=layout.param_count)
    return NarWeights.unflatten(theta, layout)


def fit_norm(values: Sequence[float]) -> NormParams:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DegenerateSeries("cannot normalize an empty series")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise DegenerateSeries(f"all values equal ({lo})")
    return NormParams(lo, hi)


def apply_norm(values: Sequence[float], params: NormParams) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return 2.0 * (values - params.y_min) / (params.y_max - params.y_min) - 1.0


def normalize(series) -> tuple[np.ndarray, NormParams]:
    """Map a series (or raw value vector) onto [-1, 1] using its own range."""
    values = getattr(series, "values", series)
    params = fit_norm(values)
    return apply_norm(values, params), params


def denormalize(values: Sequence[float], params: NormParams) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return (values + 1.0) * 0.5 * (params.y_max - params.y_min) + params.y_min


def forward(weights: NarWeights, lag_vector: Sequence[float]) -> float:
    x = np.asarray(lag_vector, dtype=np.float64)
    if x.shape != (weights.n_inputs,):
        raise ValueError(f"lag_vector must have length {weights.n_inputs}")
    hidden = np.tanh(weights.hidden_bias + weights.input_weights @ x)
    return float(weights.output_bias + weights.output_weights @ hidden)


def batch_jacobian(weights: NarWeights, lag_matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predictions and analytic d(prediction)/d(theta) for every row.

    Columns of the Jacobian follow the flattening order of
    :meth:`NarWeights.flatten`.
    """
    X = np.asarray(lag_matrix, dtype=np.float64).reshape(-1, weights.n_inputs)
    n, k = X.shape
    h = weights.hidden_units

    act = np.tanh(X @ weights.input_weights.T + weights.hidden_bias)  # (n, h)
    preds = weights.output_bias + act @ weights.output_weights

    d_bias = weights.output_weights * (1.0 - act * act)  # (n, h)
    J = np.empty((n, h * k + 2 * h + 1))
    J[:, : h * k] = (d_bias[:, :, None] * X[:, None, :]).reshape(n, h * k)
    J[:, h * k:h * k + h] = d_bias
    J[:, h * k + h:h * k + 2 * h] = act
    J[:, -1] = 1.0
    return preds, J


def predict(weights: NarWeights, lag_matrix: np.ndarray) -> np.ndarray:
    X = np.asarray(lag_matrix, dtype=np.float64).reshape(-1, weights.n_inputs)
    act = np.tanh(X @ weights.input_weights.T + weights.hidden_bias)
    return weights.output_bias + act @ weights.output_weights


def one_step_predictions(weights: NarWeights, embedded) -> np.ndarray:
    """Open-loop predictions: every row uses observed lags, never earlier outputs."""
    return predict(weights, embedded.inputs)
