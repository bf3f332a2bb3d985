"""Domain types for a two-stage SMART with binary outcomes.

Naming convention for the six treatment-sequence cells: first-stage arm
``A`` or ``B``; second-stage treatment is ``CONT`` (responders continue),
``OPT1`` or ``OPT2`` (non-responder options).  The cell success
probabilities of arm A are written ``p_aa`` (A then continue), ``p_ac``
(option 1) and ``p_ad`` (option 2); arm B analogously ``p_bb``, ``p_be``,
``p_bf``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class DomainError(ValueError):
    """Raised when an argument is outside the mathematical domain."""


class ObjectiveKind(enum.Enum):
    """Contrast held at fixed asymptotic variance while failures are minimized."""

    DIFFERENCE = "diff"
    ODDS_RATIO = "odds"
    RELATIVE_RISK = "rr"

    @classmethod
    def parse(cls, token: str) -> "ObjectiveKind":
        """Accept the short CLI tokens as well as a few spelled-out aliases."""
        aliases = {
            "diff": cls.DIFFERENCE,
            "difference": cls.DIFFERENCE,
            "odds": cls.ODDS_RATIO,
            "odds_ratio": cls.ODDS_RATIO,
            "rr": cls.RELATIVE_RISK,
            "relative_risk": cls.RELATIVE_RISK,
        }
        try:
            return aliases[token.strip().lower()]
        except KeyError:
            raise DomainError(f"unknown objective {token!r}; expected diff|odds|rr") from None


def check_probability(value: float, name: str) -> float:
    """Validate an open-interval (0, 1) probability."""
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise DomainError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie strictly inside (0, 1), got {value}")
    return value


def check_positive(value: float, name: str) -> float:
    """Validate a strictly positive finite real."""
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be a positive finite real, got {value}")
    return value


@dataclass(frozen=True)
class ArmProbs:
    """Success probabilities and response rate for one first-stage arm.

    ``p_cont`` is the success probability of responders who continue,
    ``p_t2``/``p_t2star`` the probabilities of the two non-responder
    options, and ``gamma`` the response rate of the arm.
    """

    p_cont: float
    p_t2: float
    p_t2star: float
    gamma: float

    def __post_init__(self) -> None:
        check_probability(self.p_cont, "p_cont")
        check_probability(self.p_t2, "p_t2")
        check_probability(self.p_t2star, "p_t2star")
        check_probability(self.gamma, "gamma")

    @property
    def q_cont(self) -> float:
        return 1.0 - self.p_cont

    @property
    def q_t2(self) -> float:
        return 1.0 - self.p_t2

    @property
    def q_t2star(self) -> float:
        return 1.0 - self.p_t2star


@dataclass(frozen=True)
class DesignParams:
    """A complete two-stage SMART scenario: both arms plus the sample size."""

    arm_a: ArmProbs
    arm_b: ArmProbs
    n: int

    def __post_init__(self) -> None:
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            raise DomainError(f"n must be an integer >= 1, got {self.n!r}")

    @classmethod
    def from_probs(
        cls,
        probs: tuple[float, float, float, float, float, float],
        gamma_a: float,
        gamma_b: float,
        n: int,
    ) -> "DesignParams":
        """Build from the flat cell-probability tuple (aa, ac, ad, bb, be, bf)."""
        p_aa, p_ac, p_ad, p_bb, p_be, p_bf = probs
        return cls(
            arm_a=ArmProbs(p_aa, p_ac, p_ad, gamma_a),
            arm_b=ArmProbs(p_bb, p_be, p_bf, gamma_b),
            n=n,
        )

    def cell_probs(self) -> tuple[float, float, float, float, float, float]:
        """Flat cell-probability tuple in canonical (aa, ac, ad, bb, be, bf) order."""
        a, b = self.arm_a, self.arm_b
        return (a.p_cont, a.p_t2, a.p_t2star, b.p_cont, b.p_t2, b.p_t2star)

    def swapped(self) -> "DesignParams":
        """The same design with the two arms exchanged."""
        return DesignParams(arm_a=self.arm_b, arm_b=self.arm_a, n=self.n)


@dataclass(frozen=True)
class RatioTriple:
    """The three allocation ratios: first stage and the two second-stage splits."""

    tau_a: float
    tau_ac: float
    tau_be: float

    def __post_init__(self) -> None:
        for name in ("tau_a", "tau_ac", "tau_be"):
            check_positive(getattr(self, name), name)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.tau_a, self.tau_ac, self.tau_be)


@dataclass(frozen=True)
class ConstraintBudget:
    """Variance budgets for the constrained-minimization oracle.

    The closed-form optima do not depend on either budget (both cancel);
    they parameterize only the brute-force search used to validate the
    closed forms.
    """

    epsilon1: float = 1.0
    epsilon2: float = 1.0

    def __post_init__(self) -> None:
        check_positive(self.epsilon1, "epsilon1")
        check_positive(self.epsilon2, "epsilon2")
