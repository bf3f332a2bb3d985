import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smart_alloc.design import DesignParams, DomainError, ObjectiveKind, RatioTriple
from smart_alloc.inference import (
    DtrId,
    InsufficientDataError,
    cell_information,
    confidence_interval,
    dtr_success_prob,
    normal_cdf,
    normal_quantile,
    var_stage1_ratio,
    var_stage1_success,
    var_stage2_ratio,
    variance_report,
    wald_test,
)
from smart_alloc.ratios import optimal_ratio_triple

import reference_tables as ref

probs = st.floats(min_value=0.05, max_value=0.95)


def row_design(row=0, n=ref.N, table=None):
    flat, _ = (table or ref.DIFF_ROWS)[row]
    return DesignParams.from_probs(flat, ref.GAMMA_A, ref.GAMMA_B, n)


class FakeState:
    """Minimal cell table for driving the Wald test directly."""

    def __init__(self, counts, successes, gamma_a=0.4, gamma_b=0.3):
        self.counts = counts
        self.successes = successes
        self._gammas = (gamma_a, gamma_b)

    def effective_gammas(self):
        return self._gammas


class TestNormalHelpers:
    @pytest.mark.parametrize(
        "p,z",
        [
            (0.5, 0.0),
            (0.975, 1.959963984540054),
            (0.995, 2.5758293035489004),
            (0.9999, 3.719016485455709),
            (0.025, -1.959963984540054),
        ],
    )
    def test_quantile_reference_points(self, p, z):
        assert normal_quantile(p) == pytest.approx(z, abs=1e-9)

    @given(p=st.floats(min_value=1e-6, max_value=1 - 1e-6))
    def test_quantile_inverts_cdf(self, p):
        assert normal_cdf(normal_quantile(p)) == pytest.approx(p, abs=1e-9)

    def test_quantile_domain(self):
        for bad in (0.0, 1.0, -0.2):
            with pytest.raises(DomainError):
                normal_quantile(bad)


class TestCellInformation:
    def test_row1_value(self):
        design = row_design(0)
        taus = optimal_ratio_triple(design, ObjectiveKind.DIFFERENCE)
        rates = cell_information(design, taus)
        assert rates.v_ac == pytest.approx(0.806, abs=5e-4)

    def test_symmetry(self):
        design = DesignParams.from_probs((0.3,) * 6, 0.4, 0.4, 100)
        rates = cell_information(design, RatioTriple(1.0, 1.0, 1.0))
        assert rates.v_ac == pytest.approx(rates.v_be, abs=1e-15)
        assert rates.v_aa == pytest.approx(rates.v_bb, abs=1e-15)

    @given(
        flat=st.tuples(probs, probs, probs, probs, probs, probs),
        gammas=st.tuples(probs, probs),
        taus=st.tuples(*[st.floats(min_value=0.1, max_value=10.0)] * 3),
    )
    @settings(max_examples=80)
    def test_fractions_partition(self, flat, gammas, taus):
        design = DesignParams.from_probs(flat, gammas[0], gammas[1], 100)
        rates = cell_information(design, RatioTriple(*taus))
        total = 0.0
        for v, p in zip(rates.as_tuple(), design.cell_probs()):
            total += v * p * (1.0 - p)
        assert total == pytest.approx(1.0, abs=1e-12)


class TestVariances:
    def test_stage2_reference_ase(self):
        # difference objective at the row-1 design, n = 2000
        design = row_design(0, n=2000)
        taus = optimal_ratio_triple(design, ObjectiveKind.DIFFERENCE)
        rates = cell_information(design, taus)
        var = var_stage2_ratio(
            ObjectiveKind.DIFFERENCE,
            design.arm_a.p_t2, design.arm_a.p_t2star,
            rates.v_ac, rates.v_ad, 2000,
        )
        assert math.sqrt(var) == pytest.approx(0.117, abs=2e-3)

    def test_stage1_reference_ase(self):
        design = row_design(0, n=2000)
        taus = optimal_ratio_triple(design, ObjectiveKind.DIFFERENCE)
        rates = cell_information(design, taus)
        var = var_stage1_ratio(ObjectiveKind.DIFFERENCE, design, rates, 2000)
        assert math.sqrt(var) == pytest.approx(0.023, abs=2e-3)

    def test_stage2_symmetric_reduction(self):
        # equal probabilities and rates: variance reduces to 1/(2 n v p^2)
        p, v, n = 0.4, 2.5, 1000
        var = var_stage2_ratio(ObjectiveKind.DIFFERENCE, p, p, v, v, n)
        assert var == pytest.approx(1.0 / (2 * n * v * p * p), rel=1e-12)

    def test_variance_vanishes_with_n(self):
        design = row_design(1)
        taus = optimal_ratio_triple(design, ObjectiveKind.DIFFERENCE)
        rates = cell_information(design, taus)
        vars_by_n = [
            var_stage2_ratio(ObjectiveKind.DIFFERENCE, 0.8, 0.2, rates.v_ac, rates.v_ad, n)
            for n in (10**2, 10**4, 10**6)
        ]
        assert vars_by_n[0] > vars_by_n[1] > vars_by_n[2]
        assert vars_by_n[2] < 1e-4

    @pytest.mark.parametrize("objective", list(ObjectiveKind))
    def test_inverse_n_scaling(self, objective):
        design = row_design(1)
        taus = optimal_ratio_triple(design, objective)
        rates = cell_information(design, taus)
        values = []
        for n in (500, 1000, 2000):
            v2 = var_stage2_ratio(
                objective, design.arm_a.p_t2, design.arm_a.p_t2star,
                rates.v_ac, rates.v_ad, n,
            )
            v1 = var_stage1_ratio(objective, design, rates, n)
            values.append((v2 * n, v1 * n))
        for a, b in zip(values[0], values[-1]):
            assert a == pytest.approx(b, rel=1e-12)

    def test_zero_rate_rejected(self):
        with pytest.raises(DomainError):
            var_stage2_ratio(ObjectiveKind.DIFFERENCE, 0.5, 0.5, 0.0, 1.0, 100)

    def test_stage1_success_responder_limit(self):
        from smart_alloc.design import ArmProbs

        arm = ArmProbs(0.3, 0.4, 0.5, 0.999999)
        v = var_stage1_success(arm, 2.0, 1.0, 1.0)
        assert v == pytest.approx(1.0 / 2.0, abs=1e-4)

    def test_stage1_success_symmetric_gradients(self):
        from smart_alloc.design import ArmProbs
        from smart_alloc.inference import _sqrt_rule_gradients

        g_y, g_z = _sqrt_rule_gradients(0.4, 0.37, 0.37)
        assert g_y == pytest.approx(g_z, rel=1e-12)
        arm = ArmProbs(0.3, 0.37, 0.37, 0.4)
        assert var_stage1_success(arm, 1.0, 2.0, 3.0) > 0.0

    def test_variance_report_consistency(self):
        design = row_design(0)
        taus = optimal_ratio_triple(design, ObjectiveKind.DIFFERENCE)
        report = variance_report(design, taus, design.n, ObjectiveKind.DIFFERENCE)
        assert report.ase_tau_a == pytest.approx(math.sqrt(report.var_tau_a), rel=1e-15)
        assert report.ase_tau_a == pytest.approx(0.045, abs=1e-3)
        assert report.ase_tau_be == pytest.approx(0.041, abs=1e-3)

    def test_monte_carlo_oracle_at_limiting_allocation(self):
        """Binomial cell draws at the limiting fractions cross-check the
        delta-method rates: the composite-arm rate within 10%, both ratio
        standard errors within 15%."""
        design = row_design(0, n=2000)
        taus = optimal_ratio_triple(design, ObjectiveKind.DIFFERENCE)
        rates = cell_information(design, taus)
        n, reps = 2000, 100_000
        rng = np.random.default_rng(17)
        draws = {}
        for name, v, p in zip(
            ("aa", "ac", "ad", "bb", "be", "bf"), rates.as_tuple(), design.cell_probs()
        ):
            m = max(1, round(v * p * (1 - p) * n))
            draws[name] = rng.binomial(m, p, reps) / m

        def composite(gamma, cont, y, z):
            return gamma * cont + (1 - gamma) * (y**1.5 + z**1.5) / (np.sqrt(y) + np.sqrt(z))

        comp_a = composite(0.4, draws["aa"], draws["ac"], draws["ad"])
        comp_b = composite(0.3, draws["bb"], draws["be"], draws["bf"])
        v_a = var_stage1_success(design.arm_a, rates.v_aa, rates.v_ac, rates.v_ad)
        assert np.var(comp_a, ddof=1) * n == pytest.approx(v_a, rel=0.10)

        sd_tau_ac = np.std(np.sqrt(draws["ac"] / draws["ad"]), ddof=1)
        ase_tau_ac = math.sqrt(
            var_stage2_ratio(
                ObjectiveKind.DIFFERENCE,
                design.arm_a.p_t2, design.arm_a.p_t2star,
                rates.v_ac, rates.v_ad, n,
            )
        )
        assert ase_tau_ac == pytest.approx(sd_tau_ac, rel=0.15)

        sd_tau_a = np.std(np.sqrt(comp_a / comp_b), ddof=1)
        ase_tau_a = math.sqrt(var_stage1_ratio(ObjectiveKind.DIFFERENCE, design, rates, n))
        assert ase_tau_a == pytest.approx(sd_tau_a, rel=0.15)


class TestConfidenceInterval:
    def test_basic(self):
        lo, hi = confidence_interval(1.0, 0.1, 0.95)
        assert (lo, hi) == (pytest.approx(0.804, abs=5e-4), pytest.approx(1.196, abs=5e-4))

    def test_degenerate_se(self):
        assert confidence_interval(0.7, 0.0, 0.9) == (0.7, 0.7)

    def test_row1_interval(self):
        lo, hi = confidence_interval(0.516, 0.046, 0.95)
        assert lo == pytest.approx(0.426, abs=1e-3)
        assert hi == pytest.approx(0.606, abs=1e-3)

    def test_bad_level(self):
        with pytest.raises(DomainError):
            confidence_interval(0.0, 1.0, 1.0)


class TestDtrSuccess:
    def test_flat(self):
        assert dtr_success_prob(0.4, 0.30, 0.30) == pytest.approx(0.30)

    def test_all_responders(self):
        assert dtr_success_prob(1.0, 0.81, 0.12) == pytest.approx(0.81)

    def test_reference_scenario(self):
        # p_aa=0.3, p_ac=0.3 under gamma 0.4; p_bb=0.65, p_be=0.6 under gamma 0.3
        assert dtr_success_prob(0.4, 0.3, 0.3) == pytest.approx(0.30)
        assert dtr_success_prob(0.3, 0.65, 0.6) == pytest.approx(0.615)


class TestWaldTest:
    def make_state(self, counts=None, successes=None):
        counts = counts or [50, 40, 45, 50, 40, 45]
        successes = successes or [20, 22, 19, 20, 22, 19]
        return FakeState(counts, successes)

    def test_identical_cells_give_zero(self):
        state = FakeState([50, 40, 45, 50, 40, 45], [20, 22, 19, 20, 22, 19],
                          gamma_a=0.4, gamma_b=0.4)
        result = wald_test(state, DtrId.D1, DtrId.D3)
        assert result.z == pytest.approx(0.0, abs=1e-12)
        assert result.p_value == pytest.approx(1.0, abs=1e-12)

    def test_antisymmetry(self):
        state = self.make_state(successes=[20, 30, 19, 25, 22, 19])
        forward = wald_test(state, DtrId.D1, DtrId.D4)
        backward = wald_test(state, DtrId.D4, DtrId.D1)
        assert forward.z == pytest.approx(-backward.z, rel=1e-12)
        assert forward.p_value == pytest.approx(backward.p_value, rel=1e-12)

    def test_shared_arm_cancels_continuation(self):
        # d1 vs d2 share the arm-A continuation cell; its variance must cancel
        counts = [50, 40, 45, 50, 40, 45]
        successes = [20, 30, 10, 20, 22, 19]
        state = FakeState(counts, successes)
        result = wald_test(state, DtrId.D1, DtrId.D2)
        gamma = 0.4
        p1, p2 = 30 / 40, 10 / 45
        expected_var = (1 - gamma) ** 2 * (
            p1 * (1 - p1) / 40 + p2 * (1 - p2) / 45
        )
        assert result.se_diff == pytest.approx(math.sqrt(expected_var), rel=1e-12)
        assert result.p_di - result.p_dj == pytest.approx((1 - gamma) * (p1 - p2), rel=1e-12)

    def test_insufficient_data(self):
        state = FakeState([0, 40, 45, 50, 40, 45], [0, 22, 19, 20, 22, 19])
        with pytest.raises(InsufficientDataError):
            wald_test(state, DtrId.D1, DtrId.D3)

    def test_same_regime_rejected(self):
        with pytest.raises(DomainError):
            wald_test(self.make_state(), DtrId.D1, DtrId.D1)

    def test_bootstrap_cross_check(self):
        rng = np.random.default_rng(11)
        counts = [400, 300, 320, 410, 290, 300]
        successes = [int(c * p) for c, p in zip(counts, (0.5, 0.55, 0.45, 0.5, 0.52, 0.48))]
        state = FakeState(counts, successes)
        result = wald_test(state, DtrId.D1, DtrId.D3, bootstrap=True, bootstrap_seed=3)
        assert result.se_diff_bootstrap == pytest.approx(result.se_diff, rel=0.2)

    def test_parse(self):
        assert DtrId.parse(" D2 ") is DtrId.D2
        with pytest.raises(DomainError):
            DtrId.parse("d9")
