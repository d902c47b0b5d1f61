"""Microgrid dispatch with a Q-network that is executed as a mixed-integer program.

Train ``Q(s, a)`` with deterministic-policy Q-learning, then at run time fix
the state, compile the ReLU network into a MIP, add the operational
constraints over the action inputs and maximise. The dispatched actions are
feasible by construction.
"""

from .dispatch import DispatchContext, build_constraints, dispatch_step, feasibility_check, run_day
from .errors import (
    CheckpointError,
    ConfigError,
    DomainError,
    InfeasibleError,
    MipDqnError,
    ParseError,
    SolverError,
    SolverTimeoutError,
    ValidationError,
)
from .microgrid import (
    Action,
    DgUnit,
    EnvState,
    EssUnit,
    MicrogridEnv,
    RewardParams,
    SystemConfig,
    default_system,
    large_system,
)
from .neural import DenseNet
from .oracle import HorizonProblem, solve_horizon, validate_schedule
from .profiles import DayProfile, load_csv, split_train_test, synthesize
from .training import FeatureMap, TrainConfig, load_agent, save_agent, train

__version__ = "0.1.0"

__all__ = [
    "Action", "CheckpointError", "ConfigError", "DayProfile", "DenseNet", "DgUnit", "DispatchContext",
    "DomainError", "EnvState", "EssUnit", "FeatureMap", "HorizonProblem", "InfeasibleError",
    "MicrogridEnv", "MipDqnError", "ParseError", "RewardParams", "SolverError", "SolverTimeoutError",
    "SystemConfig", "TrainConfig", "ValidationError", "build_constraints", "default_system",
    "dispatch_step", "feasibility_check", "large_system", "load_agent", "load_csv", "run_day",
    "save_agent", "solve_horizon", "split_train_test", "synthesize", "train", "validate_schedule",
]
