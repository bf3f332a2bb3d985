"""Closed-form allocation mathematics for the two-stage SMART.

Everything here is pure 64-bit float arithmetic over validated inputs.
The raw ``*_from_floats`` helpers skip validation and are shared with the
sequential engine's per-patient hot path; the public operations validate
through the types in :mod:`smart_alloc.design`.

Composition convention for the first-stage ratio
------------------------------------------------
The first-stage optimum is a function of the two second-stage splits.  For
every objective the published reference values are obtained by plugging the
*square-root-rule* second-stage splits ``sqrt(p1/p2)`` into the
objective-specific first-stage form, while the second-stage ratios
themselves take their objective-specific forms.  ``optimal_ratio_triple``
follows that convention; ``stage1_optimal_ratio`` accepts arbitrary splits
so either convention can be evaluated explicitly.
"""

from __future__ import annotations

import math

from .design import (
    ArmProbs,
    DesignParams,
    DomainError,
    ObjectiveKind,
    RatioTriple,
    check_positive,
    check_probability,
)

__all__ = [
    "allocation_probability",
    "expected_failures_stage2",
    "expected_failures_total",
    "gamma_limit_ratio",
    "optimal_ratio_triple",
    "stage1_optimal_ratio",
    "stage1_success_prob",
    "stage2_optimal_ratio",
]


# ---------------------------------------------------------------------------
# Raw float kernels (no validation) shared with the adaptive engine.
# ---------------------------------------------------------------------------

def stage2_ratio_from_floats(p1: float, p2: float, objective: ObjectiveKind) -> float:
    if objective is ObjectiveKind.DIFFERENCE:
        return math.sqrt(p1 / p2)
    if objective is ObjectiveKind.ODDS_RATIO:
        return math.sqrt(p2 / p1) * ((1.0 - p2) / (1.0 - p1))
    return math.sqrt(p1 / p2) * ((1.0 - p2) / (1.0 - p1))


def arm_aggregates(
    p_cont: float, p1: float, p2: float, gamma: float, tau2: float
) -> tuple[float, float]:
    """Success/failure aggregates for one arm at second-stage split ``tau2``.

    Returns ``(P, Q)`` with ``P = gamma*p_cont*(1+tau2) + (1-gamma)*(tau2*p1 + p2)``
    and ``Q`` the same expression over failure probabilities; the composite
    first-stage probabilities are ``P/(1+tau2)`` and ``Q/(1+tau2)``.
    """
    one_plus = 1.0 + tau2
    big_p = gamma * p_cont * one_plus + (1.0 - gamma) * (tau2 * p1 + p2)
    big_q = (
        gamma * (1.0 - p_cont) * one_plus
        + (1.0 - gamma) * (tau2 * (1.0 - p1) + (1.0 - p2))
    )
    return big_p, big_q


def stage1_ratio_from_floats(
    p_aa: float,
    p_ac: float,
    p_ad: float,
    p_bb: float,
    p_be: float,
    p_bf: float,
    gamma_a: float,
    gamma_b: float,
    tau_ac: float,
    tau_be: float,
    objective: ObjectiveKind,
) -> float:
    big_pa, big_qa = arm_aggregates(p_aa, p_ac, p_ad, gamma_a, tau_ac)
    big_pb, big_qb = arm_aggregates(p_bb, p_be, p_bf, gamma_b, tau_be)
    if objective is ObjectiveKind.DIFFERENCE:
        return math.sqrt(((1.0 + tau_be) * big_pa) / ((1.0 + tau_ac) * big_pb))
    if objective is ObjectiveKind.ODDS_RATIO:
        lead = ((1.0 + tau_ac) / (1.0 + tau_be)) ** 1.5
        return lead * math.sqrt(big_pb / big_pa) * (big_qb / big_qa)
    lead = math.sqrt((1.0 + tau_ac) / (1.0 + tau_be))
    return lead * math.sqrt(big_pa / big_pb) * (big_qb / big_qa)


def composed_ratios_from_floats(
    p_aa: float,
    p_ac: float,
    p_ad: float,
    p_bb: float,
    p_be: float,
    p_bf: float,
    gamma_a: float,
    gamma_b: float,
    objective: ObjectiveKind,
) -> tuple[float, float, float]:
    """(tau_a, tau_ac, tau_be) at the given probabilities.

    Second-stage ratios take the objective-specific form; the first-stage
    form is evaluated at the square-root-rule splits (see module docstring).
    """
    tau_ac = stage2_ratio_from_floats(p_ac, p_ad, objective)
    tau_be = stage2_ratio_from_floats(p_be, p_bf, objective)
    sq_ac = math.sqrt(p_ac / p_ad)
    sq_be = math.sqrt(p_be / p_bf)
    tau_a = stage1_ratio_from_floats(
        p_aa, p_ac, p_ad, p_bb, p_be, p_bf, gamma_a, gamma_b, sq_ac, sq_be, objective
    )
    return tau_a, tau_ac, tau_be


# ---------------------------------------------------------------------------
# Public operations.
# ---------------------------------------------------------------------------

def allocation_probability(tau: float) -> float:
    """Map an allocation ratio to the corresponding assignment probability."""
    check_positive(tau, "tau")
    return tau / (1.0 + tau)


def stage1_success_prob(arm: ArmProbs, tau2: float) -> float:
    """Composite success probability of an arm whose non-responders are split ``tau2``:1.

    The three mixing weights (responders, option 1, option 2) sum to one,
    so the value is a convex combination of the arm's cell probabilities.
    """
    if not isinstance(tau2, (int, float)) or isinstance(tau2, bool):
        raise DomainError(f"tau2 must be a number, got {tau2!r}")
    check_positive(tau2, "tau2")
    w1 = (1.0 - arm.gamma) * tau2 / (1.0 + tau2)
    w2 = (1.0 - arm.gamma) / (1.0 + tau2)
    return arm.gamma * arm.p_cont + w1 * arm.p_t2 + w2 * arm.p_t2star


def stage2_optimal_ratio(p_t2: float, p_t2star: float, objective: ObjectiveKind) -> float:
    """Optimal second-stage split between the two non-responder options."""
    check_probability(p_t2, "p_t2")
    check_probability(p_t2star, "p_t2star")
    return stage2_ratio_from_floats(p_t2, p_t2star, objective)


def stage1_optimal_ratio(
    design: DesignParams,
    tau_ac: float,
    tau_be: float,
    objective: ObjectiveKind,
) -> float:
    """Optimal first-stage split for given second-stage splits.

    The value equals the two-arm rule for the chosen objective applied to
    the composite arm probabilities ``stage1_success_prob(arm, tau2)``.
    """
    check_positive(tau_ac, "tau_ac")
    check_positive(tau_be, "tau_be")
    a, b = design.arm_a, design.arm_b
    return stage1_ratio_from_floats(
        a.p_cont, a.p_t2, a.p_t2star,
        b.p_cont, b.p_t2, b.p_t2star,
        a.gamma, b.gamma, tau_ac, tau_be, objective,
    )


def optimal_ratio_triple(design: DesignParams, objective: ObjectiveKind) -> RatioTriple:
    """All three optimal allocation ratios for a design.

    The second-stage ratios never depend on the first-stage split; the
    first-stage ratio folds both second-stage splits backwards.
    """
    a, b = design.arm_a, design.arm_b
    tau_a, tau_ac, tau_be = composed_ratios_from_floats(
        a.p_cont, a.p_t2, a.p_t2star,
        b.p_cont, b.p_t2, b.p_t2star,
        a.gamma, b.gamma, objective,
    )
    return RatioTriple(tau_a=tau_a, tau_ac=tau_ac, tau_be=tau_be)


def expected_failures_stage2(
    n_nonresp: float, tau2: float, q_t2: float, q_t2star: float
) -> float:
    """Expected failures among ``n_nonresp`` non-responders split ``tau2``:1."""
    if n_nonresp < 0:
        raise DomainError(f"n_nonresp must be >= 0, got {n_nonresp}")
    check_positive(tau2, "tau2")
    for q, name in ((q_t2, "q_t2"), (q_t2star, "q_t2star")):
        if not math.isfinite(q) or not 0.0 <= q <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {q}")
    return n_nonresp / (1.0 + tau2) * (tau2 * q_t2 + q_t2star)


def expected_failures_total(design: DesignParams, taus: RatioTriple) -> float:
    """Expected failures over the whole trial at the given allocation ratios."""
    n_a = design.n * taus.tau_a / (1.0 + taus.tau_a)
    n_b = design.n / (1.0 + taus.tau_a)
    total = 0.0
    for arm, n_arm, tau2 in (
        (design.arm_a, n_a, taus.tau_ac),
        (design.arm_b, n_b, taus.tau_be),
    ):
        total += n_arm * arm.gamma * arm.q_cont
        total += expected_failures_stage2(
            n_arm * (1.0 - arm.gamma), tau2, arm.q_t2, arm.q_t2star
        )
    return total


def gamma_limit_ratio(design: DesignParams, objective: ObjectiveKind) -> float:
    """First-stage optimum in the all-responders limit (a plain two-arm trial)."""
    pa, pb = design.arm_a.p_cont, design.arm_b.p_cont
    if objective is ObjectiveKind.DIFFERENCE:
        return math.sqrt(pa / pb)
    if objective is ObjectiveKind.ODDS_RATIO:
        return math.sqrt(pb / pa) * ((1.0 - pb) / (1.0 - pa))
    return math.sqrt(pa / pb) * ((1.0 - pb) / (1.0 - pa))
