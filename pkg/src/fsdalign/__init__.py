"""Distributional preference alignment via first-order stochastic dominance.

Empirical reward distributions are compared through their quantile
functions. Violations of dominance become a one-dimensional optimal
transport cost with a convex penalty, which sorting solves exactly and a
Sinkhorn soft sort relaxes.
"""

__version__ = "0.1.0"

from .alignment import LossOutput, Mode, PreferenceBatch, Sort, aot_loss, dpo_loss, ipo_loss
from .data import PreferenceDataset, generate, read_dataset, write_dataset
from .dominance import DominanceReport, check_fsd, margin_curve, rate_experiment
from .measures import DomainError, EmpiricalMeasure, cdf, quantile, quantile_curve
from .ot1d import Coupling, ot_bruteforce, ot_sorted, ot_weighted
from .penalty import PenaltyFn, UnsupportedOperation
from .policy import TabularPolicy
from .softsort import SoftSortConfig, SoftSortConvergenceError, soft_sort, soft_sort_vjp
from .trainer import LossKind, RunMetrics, TrainConfig, TrainingDiverged, train

__all__ = [
    "Coupling",
    "DomainError",
    "DominanceReport",
    "EmpiricalMeasure",
    "LossKind",
    "LossOutput",
    "Mode",
    "PenaltyFn",
    "PreferenceBatch",
    "PreferenceDataset",
    "RunMetrics",
    "SoftSortConfig",
    "SoftSortConvergenceError",
    "Sort",
    "TabularPolicy",
    "TrainConfig",
    "TrainingDiverged",
    "UnsupportedOperation",
    "aot_loss",
    "cdf",
    "check_fsd",
    "dpo_loss",
    "generate",
    "ipo_loss",
    "margin_curve",
    "ot_bruteforce",
    "ot_sorted",
    "ot_weighted",
    "quantile",
    "quantile_curve",
    "rate_experiment",
    "read_dataset",
    "soft_sort",
    "soft_sort_vjp",
    "train",
    "write_dataset",
]
