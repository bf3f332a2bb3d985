"""Brute-force cross-check of the closed-form allocation optima.

The optimization the closed forms solve is: minimize expected failures at a
randomization point subject to a fixed asymptotic variance of the chosen
contrast.  Substituting the constraint-implied cohort size into the failure
count leaves a one-dimensional objective in the allocation ratio, which is
minimized here by golden-section search.  The variance budgets cancel in
the optimum, so they default to 1 and only scale the objective.
"""

from __future__ import annotations

import math
from typing import Callable

from .design import ConstraintBudget, DesignParams, ObjectiveKind
from .ratios import arm_aggregates

_BRACKET = (1e-3, 1e3)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_minimize(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    iterations: int = 200,
) -> float:
    """Argmin of a unimodal ``f`` over ``[lo, hi]`` (searched on a log scale)."""
    a, b = math.log(lo), math.log(hi)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(math.exp(x1)), f(math.exp(x2))
    for _ in range(iterations):
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(math.exp(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(math.exp(x2))
    return math.exp(0.5 * (a + b))


def _gradient_weights(
    objective: ObjectiveKind, p1: float, p2: float
) -> tuple[float, float]:
    """Squared contrast gradients times binomial variances, per comparison arm.

    With these weights the constraint reads ``a/n1 + b/n2 = eps`` where
    ``n1``/``n2`` are the two cohort sizes.
    """
    q1, q2 = 1.0 - p1, 1.0 - p2
    if objective is ObjectiveKind.DIFFERENCE:
        return p1 * q1, p2 * q2
    if objective is ObjectiveKind.ODDS_RATIO:
        g = (p1 * q2) / (p2 * q1)
        return g * g / (p1 * q1), g * g / (p2 * q2)
    # relative risk q2/q1
    return p1 * q2 * q2 / q1**3, p2 * q2 / (q1 * q1)


def stage2_oracle_ratio(
    p_t2: float,
    p_t2star: float,
    objective: ObjectiveKind,
    budget: ConstraintBudget = ConstraintBudget(),
) -> float:
    """Second-stage optimum found by constrained numerical minimization."""
    a, b = _gradient_weights(objective, p_t2, p_t2star)
    q1, q2 = 1.0 - p_t2, 1.0 - p_t2star
    eps = budget.epsilon2

    def failures(tau: float) -> float:
        # cohort size implied by avar == eps at split tau, times failure mix
        n_nr = (1.0 + tau) * (a / tau + b) / eps
        return n_nr / (1.0 + tau) * (tau * q1 + q2)

    return golden_section_minimize(failures, *_BRACKET)


def stage1_oracle_ratio(
    design: DesignParams,
    tau_ac: float,
    tau_be: float,
    objective: ObjectiveKind,
    budget: ConstraintBudget = ConstraintBudget(),
) -> float:
    """First-stage optimum found by constrained numerical minimization.

    The second-stage splits are held fixed at ``tau_ac``/``tau_be``; the
    composite arm success probabilities and per-arm failure rates are both
    evaluated at those splits, mirroring the closed form's inputs.
    """
    arm_a, arm_b = design.arm_a, design.arm_b
    big_pa, big_qa = arm_aggregates(
        arm_a.p_cont, arm_a.p_t2, arm_a.p_t2star, arm_a.gamma, tau_ac
    )
    big_pb, big_qb = arm_aggregates(
        arm_b.p_cont, arm_b.p_t2, arm_b.p_t2star, arm_b.gamma, tau_be
    )
    p_a, q_a = big_pa / (1.0 + tau_ac), big_qa / (1.0 + tau_ac)
    p_b, q_b = big_pb / (1.0 + tau_be), big_qb / (1.0 + tau_be)
    a, b = _gradient_weights(objective, p_a, p_b)
    eps = budget.epsilon1

    def failures(tau: float) -> float:
        n_total = (1.0 + tau) * (a / tau + b) / eps
        return n_total / (1.0 + tau) * (tau * q_a + q_b)

    return golden_section_minimize(failures, *_BRACKET)
