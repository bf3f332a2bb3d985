"""Asymptotic inference: information rates, delta-method variances, the
embedded-regime success probabilities and the Wald-type comparison test.

Per-patient information rates follow the convention ``Var(p_hat_cell)
~ 1/(n * v_cell)``; the first-stage composite rates ``v_A``/``v_B`` use the
opposite convention ``Var(sqrt(n) * p_hat_arm) ~ v_arm`` so they slot
directly into the two-arm ratio variance forms.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .design import (
    ArmProbs,
    DesignParams,
    DomainError,
    ObjectiveKind,
    RatioTriple,
)

__all__ = [
    "DtrId",
    "FisherRates",
    "TestResult",
    "VarianceReport",
    "cell_information",
    "confidence_interval",
    "dtr_success_prob",
    "normal_cdf",
    "normal_quantile",
    "var_stage1_ratio",
    "var_stage1_success",
    "var_stage2_ratio",
    "variance_report",
    "wald_test",
]


# ---------------------------------------------------------------------------
# Normal distribution helpers (no external dependency).
# ---------------------------------------------------------------------------

def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


# Wichura's AS 241 rational approximation (double-precision variant),
# accurate to well below 1e-9 over the full open interval.
_A = (3.3871328727963666080, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
      5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
      2.8729085735721942674e4, 5.2264952788528545610e3)
_C = (1.42343711074968357734, 4.63033784615654529590, 5.76949722146069140550,
      3.64784832476320460504, 1.27045825245236838258, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187, 1.67638483018380384940,
      6.89767334985100004550e-1, 1.48103976427480074590e-1,
      1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720, 5.46378491116411436990, 1.78482653991729133580,
      2.96560571828504891230e-1, 2.65321895265761230930e-2,
      1.24266094738807843860e-3, 2.71155556874348757815e-5,
      2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
      1.48753612908506148525e-2, 7.86869131145613259100e-4,
      1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coeffs: Sequence[float], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p}")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = p if q < 0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        value = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        value = _poly(_E, r) / _poly(_F, r)
    return -value if q < 0 else value


# ---------------------------------------------------------------------------
# Information rates.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FisherRates:
    """Limiting per-patient information rates of the six cell estimators.

    Each rate equals the limiting cell fraction divided by ``p*q`` for that
    cell, so the implied fractions ``v * p * q`` partition the cohort.
    """

    v_aa: float
    v_ac: float
    v_ad: float
    v_bb: float
    v_be: float
    v_bf: float

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.v_aa, self.v_ac, self.v_ad, self.v_bb, self.v_be, self.v_bf)


def cell_information(design: DesignParams, taus: RatioTriple) -> FisherRates:
    """Fisher rates under the limiting allocation implied by ``taus``."""
    a, b = design.arm_a, design.arm_b
    share_a = taus.tau_a / (1.0 + taus.tau_a)
    share_b = 1.0 - share_a
    s_ac = taus.tau_ac / (1.0 + taus.tau_ac)
    s_be = taus.tau_be / (1.0 + taus.tau_be)

    def rate(p: float, fraction: float) -> float:
        return fraction * (1.0 / p + 1.0 / (1.0 - p))

    return FisherRates(
        v_aa=rate(a.p_cont, a.gamma * share_a),
        v_ac=rate(a.p_t2, (1.0 - a.gamma) * s_ac * share_a),
        v_ad=rate(a.p_t2star, (1.0 - a.gamma) * (1.0 - s_ac) * share_a),
        v_bb=rate(b.p_cont, b.gamma * share_b),
        v_be=rate(b.p_t2, (1.0 - b.gamma) * s_be * share_b),
        v_bf=rate(b.p_t2star, (1.0 - b.gamma) * (1.0 - s_be) * share_b),
    )


# ---------------------------------------------------------------------------
# Delta-method variances.
# ---------------------------------------------------------------------------

def _check_rate(v: float, name: str) -> None:
    if v <= 0.0 or not math.isfinite(v):
        raise DomainError(f"{name} information rate must be positive, got {v}")


def var_stage2_ratio(
    objective: ObjectiveKind,
    p_t2: float,
    p_t2star: float,
    v_t2: float,
    v_t2star: float,
    n: int,
) -> float:
    """Variance of the estimated second-stage allocation ratio at sample size ``n``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    _check_rate(v_t2, "v_t2")
    _check_rate(v_t2star, "v_t2star")
    p1, p2 = p_t2, p_t2star
    q1, q2 = 1.0 - p1, 1.0 - p2
    if objective is ObjectiveKind.DIFFERENCE:
        core = 1.0 / (v_t2 * p1 * p2) + p1 / (v_t2star * p2**3)
    elif objective is ObjectiveKind.ODDS_RATIO:
        core = (1.0 - 3.0 * p1) ** 2 * q2 * q2 * p2 / (v_t2 * p1**3 * q1**4)
        core += (1.0 - 3.0 * p2) ** 2 / (v_t2star * p1 * q1 * q1 * p2)
    else:
        core = (1.0 + p1) ** 2 * q2 * q2 / (v_t2 * p1 * q1**4 * p2)
        core += (1.0 + p2) ** 2 * p1 / (v_t2star * q1 * q1 * p2**3)
    return core / (4.0 * n)


def _sqrt_rule_gradients(gamma: float, y: float, z: float) -> tuple[float, float]:
    """Gradient weights of the composite arm probability at the sqrt-rule split."""
    sy, sz = math.sqrt(y), math.sqrt(z)
    denom = (sy + sz) ** 2
    g_y = (1.0 - gamma) * (2.0 * y * sy + 3.0 * y * sz - z * sz) / (2.0 * sy * denom)
    g_z = (1.0 - gamma) * (2.0 * z * sz + 3.0 * z * sy - y * sy) / (2.0 * sz * denom)
    return g_y, g_z


def var_stage1_success(
    arm: ArmProbs, v_cont: float, v_t2: float, v_t2star: float
) -> float:
    """Composite-arm variance rate ``v_arm`` (``Var(sqrt(n) p_hat_arm)``)."""
    for v, name in ((v_cont, "v_cont"), (v_t2, "v_t2"), (v_t2star, "v_t2star")):
        _check_rate(v, name)
    g_y, g_z = _sqrt_rule_gradients(arm.gamma, arm.p_t2, arm.p_t2star)
    return (
        arm.gamma**2 / v_cont + g_y * g_y / v_t2 + g_z * g_z / v_t2star
    )


def _composite_sqrt_rule(arm: ArmProbs) -> float:
    """Composite success probability of an arm at the sqrt-rule split."""
    y, z = arm.p_t2, arm.p_t2star
    sy, sz = math.sqrt(y), math.sqrt(z)
    return arm.gamma * arm.p_cont + (1.0 - arm.gamma) * (y * sy + z * sz) / (sy + sz)


def var_stage1_ratio(
    objective: ObjectiveKind,
    design: DesignParams,
    rates: FisherRates,
    n: int,
) -> float:
    """Variance of the estimated first-stage allocation ratio at sample size ``n``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    v_a = var_stage1_success(design.arm_a, rates.v_aa, rates.v_ac, rates.v_ad)
    v_b = var_stage1_success(design.arm_b, rates.v_bb, rates.v_be, rates.v_bf)
    p_a = _composite_sqrt_rule(design.arm_a)
    p_b = _composite_sqrt_rule(design.arm_b)
    q_a, q_b = 1.0 - p_a, 1.0 - p_b
    if objective is ObjectiveKind.DIFFERENCE:
        core = v_a / (p_a * p_b) + v_b * p_a / p_b**3
    elif objective is ObjectiveKind.ODDS_RATIO:
        core = v_a * (1.0 - 3.0 * p_a) ** 2 * q_b * q_b * p_b / (p_a**3 * q_a**4)
        core += v_b * (1.0 - 3.0 * p_b) ** 2 / (p_a * q_a * q_a * p_b)
    else:
        core = v_a * (1.0 + p_a) ** 2 * q_b * q_b / (p_a * q_a**4 * p_b)
        core += v_b * (1.0 + p_b) ** 2 * p_a / (q_a * q_a * p_b**3)
    return core / (4.0 * n)


@dataclass(frozen=True)
class VarianceReport:
    """Finite-n variances and standard errors of the three ratio estimators."""

    var_tau_a: float
    var_tau_ac: float
    var_tau_be: float
    ase_tau_a: float
    ase_tau_ac: float
    ase_tau_be: float
    v_first_stage_a: float
    v_first_stage_b: float


def variance_report(
    design: DesignParams,
    taus: RatioTriple,
    n: int,
    objective: ObjectiveKind,
) -> VarianceReport:
    """Plug-in variance panel for all three ratios at the given allocation."""
    rates = cell_information(design, taus)
    a, b = design.arm_a, design.arm_b
    var_ac = var_stage2_ratio(objective, a.p_t2, a.p_t2star, rates.v_ac, rates.v_ad, n)
    var_be = var_stage2_ratio(objective, b.p_t2, b.p_t2star, rates.v_be, rates.v_bf, n)
    var_a = var_stage1_ratio(objective, design, rates, n)
    return VarianceReport(
        var_tau_a=var_a,
        var_tau_ac=var_ac,
        var_tau_be=var_be,
        ase_tau_a=math.sqrt(var_a),
        ase_tau_ac=math.sqrt(var_ac),
        ase_tau_be=math.sqrt(var_be),
        v_first_stage_a=var_stage1_success(a, rates.v_aa, rates.v_ac, rates.v_ad),
        v_first_stage_b=var_stage1_success(b, rates.v_bb, rates.v_be, rates.v_bf),
    )


def confidence_interval(
    estimate: float, se: float, level: float = 0.95
) -> tuple[float, float]:
    """Symmetric normal interval ``estimate +- z * se``."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    if se < 0.0:
        raise DomainError(f"se must be >= 0, got {se}")
    half = normal_quantile(0.5 * (1.0 + level)) * se
    return (estimate - half, estimate + half)


# ---------------------------------------------------------------------------
# Embedded dynamic treatment regimes and the Wald-type test.
# ---------------------------------------------------------------------------

class DtrId(enum.Enum):
    """The four embedded regimes; d1/d2 start on arm A, d3/d4 on arm B."""

    D1 = "d1"
    D2 = "d2"
    D3 = "d3"
    D4 = "d4"

    @classmethod
    def parse(cls, token: str) -> "DtrId":
        try:
            return cls(token.strip().lower())
        except ValueError:
            raise DomainError(f"unknown regime {token!r}; expected d1..d4") from None


# cell indices in canonical (aa, ac, ad, bb, be, bf) order
_DTR_CELLS: dict[DtrId, tuple[int, int, int]] = {
    # (arm index 0=A/1=B, continuation cell, option cell)
    DtrId.D1: (0, 0, 1),
    DtrId.D2: (0, 0, 2),
    DtrId.D3: (1, 3, 4),
    DtrId.D4: (1, 3, 5),
}


def dtr_cells(dtr: DtrId) -> tuple[int, int, int]:
    """(arm, continuation cell index, option cell index) for a regime."""
    return _DTR_CELLS[dtr]


def dtr_success_prob(gamma: float, p_cont: float, p_t2: float) -> float:
    """Success probability of an embedded regime (responder-weighted mixture)."""
    return gamma * p_cont + (1.0 - gamma) * p_t2


class InsufficientDataError(ValueError):
    """A cell required by the requested comparison has no recorded outcomes."""


class CellTable(Protocol):
    """Minimal read surface the Wald test needs from a trial state."""

    @property
    def counts(self) -> Sequence[int]: ...

    @property
    def successes(self) -> Sequence[int]: ...

    def effective_gammas(self) -> tuple[float, float]: ...


@dataclass(frozen=True)
class TestResult:
    """Wald comparison of two embedded regimes."""

    z: float
    p_value: float
    p_di: float
    p_dj: float
    se_diff: float
    se_diff_bootstrap: float | None = None


def _dtr_point_and_var(
    state: CellTable, dtr: DtrId
) -> tuple[float, float, int, float]:
    """(p_hat, variance, continuation cell index, gamma) for one regime."""
    arm, cont, opt = _DTR_CELLS[dtr]
    gammas = state.effective_gammas()
    gamma = gammas[arm]
    counts, succ = state.counts, state.successes
    for cell in (cont, opt):
        if counts[cell] < 1:
            raise InsufficientDataError(
                f"regime {dtr.value} requires outcomes in cell index {cell}"
            )
    p_cont = succ[cont] / counts[cont]
    p_opt = succ[opt] / counts[opt]
    var = (
        gamma**2 * p_cont * (1.0 - p_cont) / counts[cont]
        + (1.0 - gamma) ** 2 * p_opt * (1.0 - p_opt) / counts[opt]
    )
    point = dtr_success_prob(gamma, p_cont, p_opt)
    return point, var, cont, gamma


def wald_test(
    state: CellTable,
    di: DtrId,
    dj: DtrId,
    *,
    bootstrap: bool = False,
    n_bootstrap: int = 2000,
    bootstrap_seed: int = 0,
) -> TestResult:
    """Two-sided Wald test of equal success probabilities for two regimes.

    Regime pairs sharing a first-stage arm also share the continuation
    cell, whose contribution cancels from the difference; the covariance
    term is subtracted accordingly.  Per-cell variances use observed cell
    counts.  ``bootstrap=True`` adds a nonparametric (per-cell binomial)
    bootstrap standard error as a cross-check on the delta-method one.
    """
    if di is dj:
        raise DomainError("cannot compare a regime with itself")
    p_i, var_i, cont_i, gamma_i = _dtr_point_and_var(state, di)
    p_j, var_j, cont_j, _ = _dtr_point_and_var(state, dj)
    var_diff = var_i + var_j
    if cont_i == cont_j:
        counts, succ = state.counts, state.successes
        p_cont = succ[cont_i] / counts[cont_i]
        var_diff -= 2.0 * gamma_i**2 * p_cont * (1.0 - p_cont) / counts[cont_i]
    var_diff = max(var_diff, 0.0)
    diff = p_i - p_j
    se = math.sqrt(var_diff)
    if se == 0.0:
        z = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    else:
        z = diff / se
    p_value = 1.0 if math.isnan(z) else 2.0 * (1.0 - normal_cdf(abs(z)))

    boot_se = None
    if bootstrap and n_bootstrap > 0:
        boot_se = _bootstrap_se_diff(state, di, dj, n_bootstrap, bootstrap_seed)
    return TestResult(
        z=z, p_value=p_value, p_di=p_i, p_dj=p_j, se_diff=se,
        se_diff_bootstrap=boot_se,
    )


def _bootstrap_se_diff(
    state: CellTable, di: DtrId, dj: DtrId, n_bootstrap: int, seed: int
) -> float:
    rng = np.random.default_rng(seed)
    counts, succ = state.counts, state.successes
    gammas = state.effective_gammas()

    # Shared continuation cells must reuse one resample stream, so draw the
    # continuation cells first, keyed by index.
    arm_i, cont_i, opt_i = _DTR_CELLS[di]
    arm_j, cont_j, opt_j = _DTR_CELLS[dj]
    cont_draws: dict[int, np.ndarray] = {}
    for cell in {cont_i, cont_j}:
        cont_draws[cell] = rng.binomial(
            counts[cell], succ[cell] / counts[cell], n_bootstrap
        ) / counts[cell]

    def regime_draws(arm: int, cont: int, opt: int) -> np.ndarray:
        gamma = gammas[arm]
        opt_draw = rng.binomial(counts[opt], succ[opt] / counts[opt], n_bootstrap)
        return gamma * cont_draws[cont] + (1.0 - gamma) * opt_draw / counts[opt]

    diffs = regime_draws(arm_i, cont_i, opt_i) - regime_draws(arm_j, cont_j, opt_j)
    return float(np.std(diffs, ddof=1))
