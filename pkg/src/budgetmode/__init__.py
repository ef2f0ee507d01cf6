"""Controllable-reasoning budget modes at desk scale."""

__version__ = "0.1.0"

from .act import ACTReport, BaselineMeasurement, ModeMeasurement, act_score, build_report
from .dapo import DapoConfig, TrainingLog, clipped_surrogate, run_two_phase, surrogate_gradient
from .errors import BudgetModeError, ValidationError
from .rewards import ModeRewardConfig, RewardBreakdown, composite_reward, score_group
from .sft import TruncationConfig, build_dataset, sft_loss, truncate_thinking
from .toy import EnvConfig, ToyEnvironment, ToyPolicy
from .traces import Mode, ReasoningTrace, Tokenizer, parse_trace

__all__ = [
    "ACTReport", "BaselineMeasurement", "BudgetModeError", "DapoConfig", "EnvConfig",
    "Mode", "ModeMeasurement", "ModeRewardConfig", "ReasoningTrace", "RewardBreakdown",
    "Tokenizer", "ToyEnvironment", "ToyPolicy", "TrainingLog", "TruncationConfig",
    "ValidationError", "act_score", "build_dataset", "build_report", "clipped_surrogate",
    "composite_reward", "parse_trace", "run_two_phase", "score_group", "sft_loss",
    "surrogate_gradient", "truncate_thinking",
]
