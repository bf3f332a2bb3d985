"""Optimal response-adaptive randomization for two-stage SMART designs."""

from .design import (
    ArmProbs,
    ConstraintBudget,
    DesignParams,
    DomainError,
    ObjectiveKind,
    RatioTriple,
)
from .ratios import (
    allocation_probability,
    expected_failures_stage2,
    expected_failures_total,
    gamma_limit_ratio,
    optimal_ratio_triple,
    stage1_optimal_ratio,
    stage1_success_prob,
    stage2_optimal_ratio,
)

__all__ = [
    "ArmProbs",
    "ConstraintBudget",
    "DesignParams",
    "DomainError",
    "ObjectiveKind",
    "RatioTriple",
    "allocation_probability",
    "expected_failures_stage2",
    "expected_failures_total",
    "gamma_limit_ratio",
    "optimal_ratio_triple",
    "stage1_optimal_ratio",
    "stage1_success_prob",
    "stage2_optimal_ratio",
]

__version__ = "0.1.0"
