import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smart_alloc.design import (
    ArmProbs,
    ConstraintBudget,
    DesignParams,
    DomainError,
    ObjectiveKind,
    RatioTriple,
)
from smart_alloc.oracle import stage1_oracle_ratio, stage2_oracle_ratio
from smart_alloc.ratios import (
    allocation_probability,
    expected_failures_stage2,
    expected_failures_total,
    gamma_limit_ratio,
    optimal_ratio_triple,
    stage1_optimal_ratio,
    stage1_success_prob,
    stage2_optimal_ratio,
)

import reference_tables as ref

probs = st.floats(min_value=0.02, max_value=0.98)
ratios_st = st.floats(min_value=0.05, max_value=20.0)


def make_design(flat, gamma_a=ref.GAMMA_A, gamma_b=ref.GAMMA_B, n=ref.N):
    return DesignParams.from_probs(flat, gamma_a, gamma_b, n)


class TestStage1SuccessProb:
    def test_equal_cells_collapse(self):
        arm = ArmProbs(0.5, 0.5, 0.5, 0.4)
        assert stage1_success_prob(arm, 1.0) == pytest.approx(0.5, abs=1e-15)

    def test_responder_only_limit(self):
        arm = ArmProbs(0.37, 0.8, 0.2, 0.999999)
        assert stage1_success_prob(arm, 3.0) == pytest.approx(0.37, abs=1e-5)

    def test_hand_value(self):
        # 0.4*0.30 + 0.6*(2/3*0.80 + 1/3*0.20) = 0.48
        arm = ArmProbs(0.30, 0.80, 0.20, 0.4)
        assert stage1_success_prob(arm, 2.0) == pytest.approx(0.48, abs=1e-12)

    @given(p_cont=probs, p1=probs, p2=probs, gamma=probs, tau=ratios_st)
    def test_convexity_bound(self, p_cont, p1, p2, gamma, tau):
        arm = ArmProbs(p_cont, p1, p2, gamma)
        value = stage1_success_prob(arm, tau)
        assert min(p_cont, p1, p2) - 1e-12 <= value <= max(p_cont, p1, p2) + 1e-12

    def test_rejects_bad_tau(self):
        arm = ArmProbs(0.3, 0.4, 0.5, 0.4)
        for bad in (0.0, -1.0, math.inf, math.nan):
            with pytest.raises(DomainError):
                stage1_success_prob(arm, bad)

    def test_rejects_boundary_probabilities(self):
        with pytest.raises(DomainError):
            ArmProbs(0.0, 0.4, 0.5, 0.4)
        with pytest.raises(DomainError):
            ArmProbs(0.3, 1.0, 0.5, 0.4)


class TestStage2Ratio:
    @pytest.mark.parametrize(
        "objective,expected",
        [
            (ObjectiveKind.DIFFERENCE, 0.931),
            (ObjectiveKind.ODDS_RATIO, 0.767),
            (ObjectiveKind.RELATIVE_RISK, 0.665),
        ],
    )
    def test_reference_values(self, objective, expected):
        assert stage2_optimal_ratio(0.65, 0.75, objective) == pytest.approx(expected, abs=5e-4)

    @pytest.mark.parametrize("objective", list(ObjectiveKind))
    def test_symmetry_at_equal_probs(self, objective):
        assert stage2_optimal_ratio(0.4, 0.4, objective) == pytest.approx(1.0, abs=1e-15)

    @given(p1=probs, p2=probs, objective=st.sampled_from(list(ObjectiveKind)))
    def test_swap_inverts(self, p1, p2, objective):
        forward = stage2_optimal_ratio(p1, p2, objective)
        backward = stage2_optimal_ratio(p2, p1, objective)
        assert forward * backward == pytest.approx(1.0, abs=1e-12)

    @given(p1=probs, p2=probs, bump=st.floats(min_value=1e-3, max_value=0.02))
    def test_difference_monotonicity(self, p1, p2, bump):
        base = stage2_optimal_ratio(p1, p2, ObjectiveKind.DIFFERENCE)
        if p1 + bump < 1.0:
            assert stage2_optimal_ratio(p1 + bump, p2, ObjectiveKind.DIFFERENCE) > base
        if p2 + bump < 1.0:
            assert stage2_optimal_ratio(p1, p2 + bump, ObjectiveKind.DIFFERENCE) < base

    def test_rejects_boundary(self):
        with pytest.raises(DomainError):
            stage2_optimal_ratio(0.0, 0.5, ObjectiveKind.DIFFERENCE)


class TestRatioTripleTables:
    @pytest.mark.parametrize("row", range(16))
    def test_difference_table(self, row):
        flat, expected = ref.DIFF_ROWS[row]
        triple = optimal_ratio_triple(make_design(flat), ObjectiveKind.DIFFERENCE)
        for got, want in zip(triple.as_tuple(), expected):
            assert got == pytest.approx(want, abs=5e-3)

    @pytest.mark.parametrize("row", range(16))
    def test_odds_table(self, row):
        flat, expected = ref.ODDS_ROWS[row]
        triple = optimal_ratio_triple(make_design(flat), ObjectiveKind.ODDS_RATIO)
        for k, (got, want) in enumerate(zip(triple.as_tuple(), expected)):
            tol = ref.ODDS_WIDE_TOLERANCE.get((row, k), 5e-3)
            assert got == pytest.approx(want, abs=tol)

    @pytest.mark.parametrize("row", range(16))
    def test_relative_risk_table(self, row):
        flat, expected = ref.RR_ROWS[row]
        triple = optimal_ratio_triple(make_design(flat), ObjectiveKind.RELATIVE_RISK)
        for got, want in zip(triple.as_tuple(), expected):
            assert got == pytest.approx(want, abs=5e-3)

    def test_full_symmetry_gives_ones(self):
        design = make_design((0.3,) * 6, gamma_a=0.4, gamma_b=0.4)
        for objective in ObjectiveKind:
            triple = optimal_ratio_triple(design, objective)
            assert triple.as_tuple() == pytest.approx((1.0, 1.0, 1.0), abs=1e-12)

    @given(
        flat=st.tuples(probs, probs, probs, probs, probs, probs),
        gamma_a=probs,
        gamma_b=probs,
        objective=st.sampled_from(list(ObjectiveKind)),
    )
    @settings(max_examples=60)
    def test_arm_swap_inverts_stage1(self, flat, gamma_a, gamma_b, objective):
        design = DesignParams.from_probs(flat, gamma_a, gamma_b, 100)
        forward = optimal_ratio_triple(design, objective)
        backward = optimal_ratio_triple(design.swapped(), objective)
        assert forward.tau_a * backward.tau_a == pytest.approx(1.0, abs=1e-10)
        assert backward.tau_ac == pytest.approx(forward.tau_be, abs=1e-12)


class TestFailures:
    def test_stage2_uniform(self):
        assert expected_failures_stage2(100, 1.0, 0.5, 0.5) == pytest.approx(50.0)

    def test_stage2_empty_cohort(self):
        assert expected_failures_stage2(0, 2.0, 0.9, 0.1) == 0.0

    def test_stage2_hand_value(self):
        assert expected_failures_stage2(150, 1.0, 0.85, 0.85) == pytest.approx(127.5)

    def test_total_equal_allocation_row1(self):
        design = make_design(ref.DIFF_ROWS[0][0])
        total = expected_failures_total(design, RatioTriple(1.0, 1.0, 1.0))
        assert total == pytest.approx(301.25, abs=1e-9)

    def test_total_zero_when_no_failures(self):
        design = make_design((0.999999,) * 6)
        total = expected_failures_total(design, RatioTriple(2.0, 0.5, 3.0))
        assert total == pytest.approx(0.0, abs=1e-2)

    def test_total_optimal_row1(self):
        design = make_design(ref.DIFF_ROWS[0][0])
        taus = optimal_ratio_triple(design, ObjectiveKind.DIFFERENCE)
        assert expected_failures_total(design, taus) == pytest.approx(265.0, abs=0.5)

    def test_total_decomposes_into_stage2_terms(self):
        design = make_design(ref.DIFF_ROWS[1][0])
        taus = RatioTriple(1.3, 0.7, 2.1)
        n_a = design.n * taus.tau_a / (1 + taus.tau_a)
        n_b = design.n - n_a
        manual = (
            n_a * design.arm_a.gamma * design.arm_a.q_cont
            + expected_failures_stage2(
                n_a * (1 - design.arm_a.gamma), taus.tau_ac,
                design.arm_a.q_t2, design.arm_a.q_t2star)
            + n_b * design.arm_b.gamma * design.arm_b.q_cont
            + expected_failures_stage2(
                n_b * (1 - design.arm_b.gamma), taus.tau_be,
                design.arm_b.q_t2, design.arm_b.q_t2star)
        )
        assert expected_failures_total(design, taus) == pytest.approx(manual, rel=1e-12)


class TestGammaLimit:
    def test_equal_continuations(self):
        design = DesignParams.from_probs((0.4, 0.2, 0.6, 0.4, 0.3, 0.7), 0.5, 0.5, 10)
        for objective in ObjectiveKind:
            assert gamma_limit_ratio(design, objective) == pytest.approx(1.0, abs=1e-12)

    def test_difference_sqrt(self):
        design = DesignParams.from_probs((0.8, 0.2, 0.6, 0.2, 0.3, 0.7), 0.5, 0.5, 10)
        assert gamma_limit_ratio(design, ObjectiveKind.DIFFERENCE) == pytest.approx(2.0)

    # the residual at fixed gamma scales with how extreme the cell
    # probabilities are; the 0.01 band is the moderate-design yardstick
    @given(
        flat=st.tuples(*[st.floats(min_value=0.3, max_value=0.7)] * 6),
        objective=st.sampled_from(list(ObjectiveKind)),
    )
    @settings(max_examples=60)
    def test_near_one_gamma_approaches_limit(self, flat, objective):
        design = DesignParams.from_probs(flat, 0.999, 0.999, 100)
        triple = optimal_ratio_triple(design, objective)
        assert abs(triple.tau_a - gamma_limit_ratio(design, objective)) < 0.01


class TestAllocationProbability:
    def test_values(self):
        assert allocation_probability(1.0) == 0.5
        assert allocation_probability(3.0) == 0.75
        assert allocation_probability(0.521) == pytest.approx(0.3425, abs=5e-4)

    def test_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            allocation_probability(0.0)


class TestOracleAgreement:
    """The closed forms must coincide with direct constrained minimization."""

    @pytest.mark.parametrize("objective", list(ObjectiveKind))
    def test_stage2_sample(self, objective):
        import random

        rnd = random.Random(20240 + len(objective.value))
        for _ in range(20):
            p1, p2 = rnd.uniform(0.05, 0.95), rnd.uniform(0.05, 0.95)
            closed = stage2_optimal_ratio(p1, p2, objective)
            searched = stage2_oracle_ratio(p1, p2, objective)
            assert searched == pytest.approx(closed, abs=1e-4)

    @pytest.mark.parametrize("objective", list(ObjectiveKind))
    def test_stage1_sample(self, objective):
        import random

        rnd = random.Random(515)
        for _ in range(20):
            flat = tuple(rnd.uniform(0.05, 0.95) for _ in range(6))
            design = DesignParams.from_probs(flat, rnd.uniform(0.1, 0.9), rnd.uniform(0.1, 0.9), 100)
            tau_ac = stage2_optimal_ratio(flat[1], flat[2], objective)
            tau_be = stage2_optimal_ratio(flat[4], flat[5], objective)
            closed = stage1_optimal_ratio(design, tau_ac, tau_be, objective)
            searched = stage1_oracle_ratio(design, tau_ac, tau_be, objective)
            assert searched == pytest.approx(closed, abs=1e-3)

    def test_budget_cancels(self):
        closed = stage2_optimal_ratio(0.3, 0.6, ObjectiveKind.ODDS_RATIO)
        for eps in (0.1, 1.0, 25.0):
            searched = stage2_oracle_ratio(
                0.3, 0.6, ObjectiveKind.ODDS_RATIO, ConstraintBudget(epsilon2=eps)
            )
            assert searched == pytest.approx(closed, abs=1e-4)
