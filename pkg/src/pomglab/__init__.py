"""Tabular laboratory for independent Nash learning in decoupled POMGs.

Finite-window surrogate ("superstate") games, independent soft policy
iteration from sampled episodes, and exact desk-scale oracles.
"""

from pomglab.model import PomgModel, validate_model, load_model, save_model
from pomglab.policy import (
    WindowCodec,
    FiniteWindowPolicy,
    PolicyProfile,
    mix_exploration,
    soft_update,
)
from pomglab.rng import SeededRng
from pomglab.superstate import build_superstate
from pomglab.learner import LearnerConfig, run_learning
from pomglab.oracle import measure_filter_stability, nash_gap
from pomglab.games import GameSpec, generate_game

__version__ = "0.1.0"

__all__ = [
    "PomgModel",
    "validate_model",
    "load_model",
    "save_model",
    "WindowCodec",
    "FiniteWindowPolicy",
    "PolicyProfile",
    "mix_exploration",
    "soft_update",
    "SeededRng",
    "build_superstate",
    "LearnerConfig",
    "run_learning",
    "measure_filter_stability",
    "nash_gap",
    "GameSpec",
    "generate_game",
    "__version__",
]
