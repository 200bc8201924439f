"""Heart-rate forecasting with a Levenberg-Marquardt trained NAR network."""

from .errors import *  # noqa: F401,F403
from .lm_core import LeastSquaresProblem, LmConfig, LmOutcome, StopReason, lm_fit, lm_step, solve_damped_normal
from .metrics import MetricsReport, evaluate
from .nar_model import NarLayout, NarWeights, NormParams, init_weights
from .series_data import SeriesData, SplitSpec, embed, load_csv, split_block, synth_heart_rate
from .training_session import SessionConfig, SessionResult, run_scenarios, run_session

__version__ = "0.1.0"
