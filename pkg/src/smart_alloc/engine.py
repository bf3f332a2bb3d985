"""Sequential patient-by-patient adaptive allocation engine.

The engine owns the six treatment-sequence tallies and a patient registry.
Assignment probabilities are recomputed from clamped running estimates on
every call (state is six cells; nothing to cache).  Burn-in patients are
assigned by fair coin at both stages; afterwards the first-stage
probability is ``tau_hat/(1+tau_hat)`` for the current first-stage ratio
estimate and the second stage uses the per-objective square-root rules.

Draws for treatment assignment come from the engine's seeded generator and
are counted, so a recovered engine can be fast-forwarded to the exact
generator position of the original.  Nature's moves (responder status,
outcomes) are never drawn here; callers feed them in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .design import DesignParams, DomainError, ObjectiveKind, RatioTriple
from .inference import variance_report
from .ratios import composed_ratios_from_floats, stage1_ratio_from_floats

ARMS = ("A", "B")
STAGE2 = ("CONT", "OPT1", "OPT2")
CELL_NAMES = ("AA", "AC", "AD", "BB", "BE", "BF")


def cell_index(arm: str, stage2: str) -> int:
    return ARMS.index(arm) * 3 + STAGE2.index(stage2)


def clamp_probability(successes: int, count: int) -> float:
    """Running success estimate clamped away from 0/1; empty cells sit at 1/2.

    The clamp half-width 0.5/(count+1) keeps every ratio finite for all
    reachable states and vanishes as the cell fills, so limits are
    unaffected.
    """
    if count == 0:
        return 0.5
    lo = 0.5 / (count + 1)
    p = successes / count
    if p < lo:
        return lo
    hi = 1.0 - lo
    return hi if p > hi else p


class UnknownPatientError(KeyError):
    pass


class InvalidTransitionError(ValueError):
    pass


@dataclass(slots=True)
class PatientRecord:
    id: int
    entry_index: int
    stage1: Optional[str] = None
    responder: Optional[bool] = None
    stage2: Optional[str] = None
    outcome: Optional[bool] = None


@dataclass(frozen=True)
class EngineConfig:
    objective: ObjectiveKind = ObjectiveKind.DIFFERENCE
    burn_in: int = 30
    gamma_a: Optional[float] = None
    gamma_b: Optional[float] = None
    gamma_source: str = "known"  # "known" | "estimated"
    seed: int = 0
    retain_patients: bool = True

    def __post_init__(self) -> None:
        if self.burn_in < 2:
            raise DomainError(f"burn_in must be >= 2, got {self.burn_in}")
        if self.gamma_source not in ("known", "estimated"):
            raise DomainError(f"gamma_source must be known|estimated, got {self.gamma_source!r}")
        if self.gamma_source == "known":
            for name in ("gamma_a", "gamma_b"):
                value = getattr(self, name)
                if value is None or not 0.0 < value < 1.0:
                    raise DomainError(f"{name} must lie in (0, 1) for known gammas, got {value!r}")


@dataclass(frozen=True)
class RatioEstimates:
    """Current ratio estimates with plug-in standard errors.

    ``complete`` is false while any cell is still empty; the estimates are
    then computed from the clamped placeholders and should be read as
    provisional.
    """

    triple: RatioTriple
    ase_tau_a: float
    ase_tau_ac: float
    ase_tau_be: float
    complete: bool


class TrialEngine:
    """Mutable allocation state machine for one trial.

    Not thread-safe; callers serialize mutations per trial.
    """

    def __init__(self, config: EngineConfig, rng: Optional[np.random.Generator] = None):
        self.config = config
        self._objective = config.objective
        self._burn_in = config.burn_in
        self._rng = rng if rng is not None else np.random.default_rng(
            np.random.PCG64(config.seed)
        )
        self._counts = [0, 0, 0, 0, 0, 0]
        self._successes = [0, 0, 0, 0, 0, 0]
        self._patients: dict[int, PatientRecord] = {}
        self._next_index = 1
        self._outcomes = 0
        self._failures = 0
        self._failure_series: list[float] = []
        self._respondents = [0, 0]
        self._responders = [0, 0]
        self.draw_count = 0

    # ------------------------------------------------------------------
    # Read surface.
    # ------------------------------------------------------------------

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(self._counts)

    @property
    def successes(self) -> tuple[int, ...]:
        return tuple(self._successes)

    @property
    def outcomes_recorded(self) -> int:
        return self._outcomes

    @property
    def failures(self) -> int:
        return self._failures

    @property
    def failure_series(self) -> list[float]:
        """Cumulative failure proportion after each recorded outcome."""
        return list(self._failure_series)

    @property
    def next_patient_index(self) -> int:
        return self._next_index

    @property
    def patients(self) -> dict[int, PatientRecord]:
        return self._patients

    def patient_log(self) -> list[PatientRecord]:
        return list(self._patients.values())

    def effective_gammas(self) -> tuple[float, float]:
        if self.config.gamma_source == "known":
            return (self.config.gamma_a, self.config.gamma_b)
        return (
            clamp_probability(self._responders[0], self._respondents[0]),
            clamp_probability(self._responders[1], self._respondents[1]),
        )

    def estimate_cell_probs(self) -> tuple[float, float, float, float, float, float]:
        # inline clamp: hot path, called on every assignment
        out = []
        counts, successes = self._counts, self._successes
        for k in range(6):
            c = counts[k]
            if c == 0:
                out.append(0.5)
                continue
            lo = 0.5 / (c + 1)
            p = successes[k] / c
            out.append(lo if p < lo else (1.0 - lo if p > 1.0 - lo else p))
        return tuple(out)

    def _current_tau_a(self) -> float:
        p = self.estimate_cell_probs()
        ga, gb = self.effective_gammas()
        sq_ac = math.sqrt(p[1] / p[2])
        sq_be = math.sqrt(p[4] / p[5])
        return stage1_ratio_from_floats(
            p[0], p[1], p[2], p[3], p[4], p[5], ga, gb, sq_ac, sq_be, self._objective
        )

    def stage1_probability(self, entry_index: Optional[int] = None) -> float:
        """Probability the given (default: next) enrollee is assigned arm A."""
        idx = self._next_index if entry_index is None else entry_index
        if idx <= self._burn_in:
            return 0.5
        tau_a = self._current_tau_a()
        return tau_a / (1.0 + tau_a)

    def stage2_probability(self, arm: str, entry_index: int) -> float:
        """Probability a non-responder on ``arm`` is assigned option 1."""
        if entry_index <= self._burn_in:
            return 0.5
        c, s = self._counts, self._successes
        base = 0 if arm == "A" else 3
        p1 = clamp_probability(s[base + 1], c[base + 1])
        p2 = clamp_probability(s[base + 2], c[base + 2])
        obj = self._objective
        if obj is ObjectiveKind.DIFFERENCE:
            a, b = math.sqrt(p1), math.sqrt(p2)
        elif obj is ObjectiveKind.ODDS_RATIO:
            a, b = math.sqrt(p2) * (1.0 - p2), math.sqrt(p1) * (1.0 - p1)
        else:
            a, b = math.sqrt(p1) * (1.0 - p2), math.sqrt(p2) * (1.0 - p1)
        return a / (a + b)

    def current_ratio_estimates(self) -> RatioEstimates:
        p = self.estimate_cell_probs()
        ga, gb = self.effective_gammas()
        tau_a, tau_ac, tau_be = composed_ratios_from_floats(
            p[0], p[1], p[2], p[3], p[4], p[5], ga, gb, self._objective
        )
        triple = RatioTriple(tau_a=tau_a, tau_ac=tau_ac, tau_be=tau_be)
        complete = all(c > 0 for c in self._counts)
        if self._outcomes >= 1:
            design = DesignParams.from_probs(p, ga, gb, max(self._outcomes, 1))
            report = variance_report(design, triple, self._outcomes, self._objective)
            ases = (report.ase_tau_a, report.ase_tau_ac, report.ase_tau_be)
        else:
            ases = (math.nan, math.nan, math.nan)
        return RatioEstimates(
            triple=triple,
            ase_tau_a=ases[0], ase_tau_ac=ases[1], ase_tau_be=ases[2],
            complete=complete,
        )

    # ------------------------------------------------------------------
    # Draw-free state transitions (used live, by replay and by recovery).
    # ------------------------------------------------------------------

    def apply_enrollment(self, patient_id: int, arm: str) -> PatientRecord:
        if patient_id != self._next_index:
            raise InvalidTransitionError(
                f"expected patient {self._next_index}, got {patient_id}"
            )
        if arm not in ARMS:
            raise DomainError(f"arm must be A or B, got {arm!r}")
        record = PatientRecord(id=patient_id, entry_index=patient_id, stage1=arm)
        self._patients[patient_id] = record
        self._next_index += 1
        return record

    def _get_patient(self, patient_id: int) -> PatientRecord:
        try:
            return self._patients[patient_id]
        except KeyError:
            raise UnknownPatientError(patient_id) from None

    def apply_response(self, patient_id: int, responder: bool) -> PatientRecord:
        record = self._get_patient(patient_id)
        if record.responder is not None:
            raise InvalidTransitionError(f"response already recorded for patient {patient_id}")
        record.responder = bool(responder)
        arm = ARMS.index(record.stage1)
        self._respondents[arm] += 1
        if responder:
            self._responders[arm] += 1
            record.stage2 = "CONT"
        return record

    def apply_stage2(self, patient_id: int, option: str) -> PatientRecord:
        record = self._get_patient(patient_id)
        if record.responder is None:
            raise InvalidTransitionError(f"patient {patient_id} has no recorded response")
        if record.responder:
            raise InvalidTransitionError(
                f"patient {patient_id} responded; second-stage randomization does not apply"
            )
        if record.stage2 is not None:
            raise InvalidTransitionError(f"patient {patient_id} already has a second-stage assignment")
        if option not in ("OPT1", "OPT2"):
            raise DomainError(f"option must be OPT1 or OPT2, got {option!r}")
        record.stage2 = option
        return record

    def apply_outcome(self, patient_id: int, success: bool) -> PatientRecord:
        record = self._get_patient(patient_id)
        if record.stage2 is None:
            raise InvalidTransitionError(
                f"patient {patient_id} has no complete treatment sequence yet"
            )
        if record.outcome is not None:
            raise InvalidTransitionError(f"outcome already recorded for patient {patient_id}")
        record.outcome = bool(success)
        cell = cell_index(record.stage1, record.stage2)
        self._counts[cell] += 1
        if success:
            self._successes[cell] += 1
        else:
            self._failures += 1
        self._outcomes += 1
        self._failure_series.append(self._failures / self._outcomes)
        if not self.config.retain_patients:
            del self._patients[patient_id]
        return record

    def ingest_participant(
        self, arm: str, responder: bool, option: Optional[str], success: bool
    ) -> int:
        """Record a fully observed participant without consuming any draws."""
        pid = self._next_index
        self.apply_enrollment(pid, arm)
        self.apply_response(pid, responder)
        if not responder:
            if option is None:
                raise DomainError("non-responder requires a second-stage option")
            self.apply_stage2(pid, option)
        self.apply_outcome(pid, success)
        return pid

    # ------------------------------------------------------------------
    # Randomized transitions.
    # ------------------------------------------------------------------

    def _uniform(self) -> float:
        self.draw_count += 1
        return float(self._rng.random())

    def enroll(self) -> tuple[int, str, float, float]:
        """Enroll the next patient and draw the first-stage arm.

        Returns ``(patient_id, arm, probability_of_A, uniform_draw)``.
        """
        probability = self.stage1_probability()
        draw = self._uniform()
        arm = "A" if draw < probability else "B"
        record = self.apply_enrollment(self._next_index, arm)
        return record.id, arm, probability, draw

    def record_response(self, patient_id: int, responder: bool) -> PatientRecord:
        return self.apply_response(patient_id, responder)

    def assign_stage2(self, patient_id: int) -> tuple[str, float, float]:
        """Draw the second-stage option for a recorded non-responder.

        Returns ``(option, probability_of_option1, uniform_draw)``.
        """
        record = self._get_patient(patient_id)
        if record.responder is None or record.responder:
            raise InvalidTransitionError(
                f"patient {patient_id} is not an assignable non-responder"
            )
        if record.stage2 is not None:
            raise InvalidTransitionError(f"patient {patient_id} already has a second-stage assignment")
        probability = self.stage2_probability(record.stage1, record.entry_index)
        draw = self._uniform()
        option = "OPT1" if draw < probability else "OPT2"
        self.apply_stage2(patient_id, option)
        return option, probability, draw

    def record_outcome(self, patient_id: int, success: bool) -> PatientRecord:
        return self.apply_outcome(patient_id, success)

    def restore_draw_position(self, draw_count: int) -> None:
        """Fast-forward the generator past ``draw_count`` historical draws."""
        if draw_count < self.draw_count:
            raise InvalidTransitionError("cannot rewind the draw position")
        for _ in range(draw_count - self.draw_count):
            self._rng.random()
        self.draw_count = draw_count

    def dtr_counts(self) -> dict[str, dict[str, int]]:
        """Patients consistent with each embedded regime, from cell tallies.

        Responders are consistent with both regimes of their arm, so the
        per-regime totals overlap by design.
        """
        c, s = self._counts, self._successes
        out = {}
        for name, cont, opt in (("d1", 0, 1), ("d2", 0, 2), ("d3", 3, 4), ("d4", 3, 5)):
            total = c[cont] + c[opt]
            fails = total - (s[cont] + s[opt])
            out[name] = {"patients": total, "failures": fails}
        return out
