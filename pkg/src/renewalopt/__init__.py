"""Drift-plus-penalty control for renewal and weakly coupled stochastic systems.

The package is organized around flat modules:

- ``core``: frame outcome types, virtual queue updates, per-frame action selection.
- ``coupled``: slot-level simulator for several renewal systems sharing queues.
- ``lp``: dense two-phase simplex and the stationary benchmark LPs built on it.
- ``datacenter``: threshold admission, sleep/setup scheduling, trace-driven runs.
- ``bandit``: index policy for coupled download queues and its special cases.
- ``online``: statistics-free ratio optimization with a truncated pseudo average.
- ``ocmdp``: online projected updates over occupation-measure polytopes.
- ``harness`` / ``cli``: experiment configs, metrics files, seed handling.
- ``acceptance``: the end-to-end acceptance battery used by tests and the CLI.
"""

from renewalopt.core import (
    ActionModel,
    FrameOutcome,
    dpp_linear_select,
    dpp_ratio_select,
    queue_update_frame,
    queue_update_slot,
    sample_outcome,
)
from renewalopt.harness import (
    ConfigError,
    ExperimentConfig,
    RunSummary,
    load_config,
    run_experiment,
)
from renewalopt.lp import LpProblem, LpSolution, solve_lp

__all__ = [
    "ActionModel",
    "ConfigError",
    "ExperimentConfig",
    "FrameOutcome",
    "LpProblem",
    "LpSolution",
    "RunSummary",
    "dpp_linear_select",
    "dpp_ratio_select",
    "load_config",
    "queue_update_frame",
    "queue_update_slot",
    "run_experiment",
    "sample_outcome",
    "solve_lp",
]

__version__ = "0.1.0"
