"""Python bindings for the distance-learning core."""

from ._core import (
    BranchRow,
    EvalResult,
    Trainer,
    TrainerConfig,
    bfs_distances,
    branch_analysis,
    make_environment,
    run_cli,
    suite_names,
    verify,
)

__all__ = [
    "BranchRow",
    "EvalResult",
    "Trainer",
    "TrainerConfig",
    "bfs_distances",
    "branch_analysis",
    "make_environment",
    "run_cli",
    "suite_names",
    "verify",
]
