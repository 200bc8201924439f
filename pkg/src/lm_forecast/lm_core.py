"""
Levenberg-Marquardt solver for nonlinear least squares.

Each step solves the damped normal equations

    (JᵀJ + μI) δ = −Jᵀr

where r is the residual vector and J its Jacobian. Small μ gives the
Gauss-Newton step, large μ gives a short steepest-descent step −Jᵀr/μ.
μ shrinks after every accepted step and grows after every rejected one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.linalg as la

from .errors import ConfigError, SolveFailure

JITTER_LADDER = (1e-12, 1e-9, 1e-6)


class StopReason(str, enum.Enum):
    GRADIENT_TOL = "GradientTol"
    STEP_TOL = "StepTol"
    MU_MAX = "MuMax"
    MAX_EPOCHS = "MaxEpochs"
    EXTERNAL_STOP = "ExternalStop"


@dataclass(frozen=True)
class LeastSquaresProblem:
    """Residual and Jacobian providers with their fixed dimensions."""

    residual_fn: Callable[[np.ndarray], np.ndarray]
    jacobian_fn: Callable[[np.ndarray], np.ndarray]
    param_count: int
    residual_count: int

    def __post_init__(self):
        if self.param_count < 1 or self.residual_count < 1:
            raise ConfigError("param_count and residual_count must be positive")

    def residuals(self, params: np.ndarray) -> np.ndarray:
        r = np.asarray(self.residual_fn(params), dtype=np.float64)
        if r.shape != (self.residual_count,):
            raise ValueError(
                f"residual_fn returned shape {r.shape}, expected ({self.residual_count},)"
            )
        return r

    def jacobian(self, params: np.ndarray) -> np.ndarray:
        J = np.asarray(self.jacobian_fn(params), dtype=np.float64)
        if J.shape != (self.residual_count, self.param_count):
            raise ValueError(
                f"jacobian_fn returned shape {J.shape}, "
                f"expected ({self.residual_count}, {self.param_count})"
            )
        return J


@dataclass(frozen=True)
class LmConfig:
    mu_init: float = 1e-3
    mu_increase: float = 10.0
    mu_decrease: float = 0.1
    mu_max: float = 1e10
    max_epochs: int = 1000
    gradient_tol: float = 1e-7
    step_tol: float = 1e-12

    def __post_init__(self):
        if not self.mu_init > 0:
            raise ConfigError("mu_init must be positive")
        if not self.mu_increase > 1:
            raise ConfigError("mu_increase must exceed 1")
        if not 0 < self.mu_decrease < 1:
            raise ConfigError("mu_decrease must lie in (0, 1)")
        if not self.mu_max > 0 or self.mu_init > self.mu_max:
            raise ConfigError("need 0 < mu_init <= mu_max")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be positive")
        if self.gradient_tol < 0 or self.step_tol < 0:
            raise ConfigError("tolerances must be non-negative")


class TraceEntry(NamedTuple):
    epoch: int
    sse: float
    mu: float
    gradient_inf_norm: float


@dataclass
class LmOutcome:
    params: np.ndarray
    final_sse: float
    epochs_run: int
    stop_reason: StopReason
    trace: list[TraceEntry] = field(default_factory=list)


def solve_damped_normal(JtJ: np.ndarray, mu: float, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(JtJ + mu*I) x = rhs`` by Cholesky factorization.

    If the factorization fails, the diagonal is bumped by each value in
    ``JITTER_LADDER`` in turn before giving up with :class:`SolveFailure`.
    """
    JtJ = np.asarray(JtJ, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = JtJ.shape[0]
    if JtJ.shape != (n, n) or rhs.shape != (n,):
        raise ValueError(f"shape mismatch: JtJ {JtJ.shape}, rhs {rhs.shape}")
    if mu < 0:
        raise ValueError("mu must be non-negative")
    if not (np.all(np.isfinite(JtJ)) and np.all(np.isfinite(rhs))):
        raise SolveFailure("non-finite entries in damped normal system")

    A = JtJ + mu * np.eye(n)
    for jitter in (0.0,) + JITTER_LADDER:
        try:
            factor = la.cho_factor(A + jitter * np.eye(n) if jitter else A, lower=True)
        except la.LinAlgError:
            continue
        return la.cho_solve(factor, rhs)
    raise SolveFailure(f"damped normal matrix not positive definite (mu={mu:g})")


def lm_step(problem: LeastSquaresProblem, params: np.ndarray, mu: float) -> np.ndarray:
    """Return the damped Gauss-Newton step at ``params``."""
    params = np.asarray(params, dtype=np.float64)
    r = problem.residuals(params)
    J = problem.jacobian(params)
    return solve_damped_normal(J.T @ J, mu, -(J.T @ r))


def lm_fit(
    problem: LeastSquaresProblem,
    init_params: np.ndarray,
    config: LmConfig = LmConfig(),
    external_stop: Optional[Callable[[int, np.ndarray], bool]] = None,
) -> LmOutcome:
    """Minimize the sum of squared residuals starting from ``init_params``.

    An epoch is one accepted update. ``external_stop(epoch, params)`` is
    called after every accepted epoch and ends the fit when it returns
    True. The trace holds one entry for the starting point (epoch 0) and
    one per accepted epoch.
    """
    params = np.array(init_params, dtype=np.float64)
    if params.shape != (problem.param_count,):
        raise ValueError(
            f"init_params has shape {params.shape}, expected ({problem.param_count},)"
        )

    mu = config.mu_init
    r = problem.residuals(params)
    sse = float(r @ r)
    J = problem.jacobian(params)
    grad = J.T @ r
    JtJ = J.T @ J
    grad_norm = float(np.max(np.abs(grad)))
    trace = [TraceEntry(0, sse, mu, grad_norm)]
    epoch = 0

    while True:
        if grad_norm <= config.gradient_tol:
            reason = StopReason.GRADIENT_TOL
            break

        # retry with growing damping until the step lowers the SSE
        accepted = False
        while True:
            delta = solve_damped_normal(JtJ, mu, -grad)
            if np.linalg.norm(delta) <= config.step_tol * (
                np.linalg.norm(params) + config.step_tol
            ):
                reason = StopReason.STEP_TOL
                break
            candidate = params + delta
            r_new = problem.residuals(candidate)
            sse_new = float(r_new @ r_new)
            if sse_new < sse:
                mu *= config.mu_decrease
                accepted = True
                break
            mu *= config.mu_increase
            if mu > config.mu_max:
                reason = StopReason.MU_MAX
                break
        if not accepted:
            break

        params, r, sse = candidate, r_new, sse_new
        J = problem.jacobian(params)
        grad = J.T @ r
        JtJ = J.T @ J
        grad_norm = float(np.max(np.abs(grad)))
        epoch += 1
        trace.append(TraceEntry(epoch, sse, mu, grad_norm))

        if external_stop is not None and external_stop(epoch, params):
            reason = StopReason.EXTERNAL_STOP
            break
        if epoch >= config.max_epochs:
            reason = StopReason.MAX_EPOCHS
            break

    return LmOutcome(
        params=params,
        final_sse=sse,
        epochs_run=epoch,
        stop_reason=reason,
        trace=trace,
    )
