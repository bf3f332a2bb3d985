"""Retrospective re-execution of a recorded equal-randomization trial.

The corpus is the entry-ordered list of recorded participants.  After an
initial block is consumed verbatim to seed the estimates, each step draws
a desired assignment from the adaptive engine and consumes the earliest
remaining participant whose recorded sequence matches; the recorded
outcome then feeds the estimates.  Replay halts the first time a drawn
sequence has no remaining participant.

Recorded responder status is an attribute of the person, never a draw.
Two interpretations of the per-step order are provided:

* default: commit the drawn arm, take the earliest remaining participant
  on that arm, and let that person's responder flag decide whether a
  second-stage option is drawn (the option pool is then searched for its
  earliest member);
* ``full_sequence_draw``: draw arm and option up front and consume the
  earliest remaining participant consistent with that regime (responders
  on the arm match either option).
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .design import DesignParams, DomainError, ObjectiveKind
from .engine import ARMS, STAGE2, EngineConfig, TrialEngine
from .harness import Trajectory
from .ratios import composed_ratios_from_floats

CORPUS_COLUMNS = ("participant_id", "entry_seq", "stage1", "responder", "stage2", "outcome")

REPORT_GROUPS = (
    "replayed",            # adaptively placed participants
    "unplaced",            # left over when replay halted
    "original_matched",    # original allocation over the same head count
    "original_remainder",  # rest of the original study
    "original_full",       # the whole recorded study
)


class CorpusFormatError(ValueError):
    """A row that cannot be parsed at all (wrong token, bad header, duplicate id)."""


@dataclass(frozen=True)
class ParticipantRecord:
    participant_id: str
    entry_seq: int
    stage1: str
    responder: bool
    stage2: str
    outcome: bool


@dataclass(frozen=True)
class Corpus:
    records: tuple[ParticipantRecord, ...]
    rejected: tuple[tuple[int, str], ...]  # (line number, reason)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ReplayConfig:
    objective: ObjectiveKind = ObjectiveKind.DIFFERENCE
    burn_in: int = 60
    seed: int = 0
    gamma_source: str = "estimated"  # estimated from the corpus, or known
    gamma_a: Optional[float] = None
    gamma_b: Optional[float] = None
    full_sequence_draw: bool = False

    def __post_init__(self) -> None:
        if self.burn_in < 2:
            raise DomainError(f"burn_in must be >= 2, got {self.burn_in}")


# ---------------------------------------------------------------------------
# Corpus I/O.
# ---------------------------------------------------------------------------

def _parse_row(line_no: int, row: dict) -> tuple[Optional[ParticipantRecord], Optional[str]]:
    """(record, None) for a usable row, (None, reason) for a rejected one."""
    missing = [k for k in CORPUS_COLUMNS if row.get(k) in (None, "")]
    if missing:
        return None, f"missing field(s): {', '.join(missing)}"
    try:
        entry_seq = int(row["entry_seq"])
    except ValueError:
        raise CorpusFormatError(f"line {line_no}: entry_seq {row['entry_seq']!r} is not an integer")
    stage1 = row["stage1"].strip().upper()
    stage2 = row["stage2"].strip().upper()
    if stage1 not in ARMS:
        raise CorpusFormatError(f"line {line_no}: stage1 must be A|B, got {row['stage1']!r}")
    if stage2 not in STAGE2:
        raise CorpusFormatError(f"line {line_no}: stage2 must be CONT|OPT1|OPT2, got {row['stage2']!r}")
    flags = {}
    for name in ("responder", "outcome"):
        token = row[name].strip()
        if token not in ("0", "1"):
            raise CorpusFormatError(f"line {line_no}: {name} must be 0|1, got {row[name]!r}")
        flags[name] = token == "1"
    record = ParticipantRecord(
        participant_id=row["participant_id"].strip(),
        entry_seq=entry_seq,
        stage1=stage1,
        responder=flags["responder"],
        stage2=stage2,
        outcome=flags["outcome"],
    )
    if record.responder and record.stage2 != "CONT":
        return None, "responder with a second-stage randomization"
    if not record.responder and record.stage2 == "CONT":
        return None, "non-responder marked as continuing"
    return record, None


def load_corpus(source: str | Path) -> Corpus:
    """Read and validate a corpus CSV, sorted by entry sequence.

    Rows with missing data or an inconsistent responder/sequence pair are
    excluded and reported; structurally malformed rows abort the load.
    """
    records: list[ParticipantRecord] = []
    rejected: list[tuple[int, str]] = []
    seen: dict[str, int] = {}
    with open(source, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing_cols = [c for c in CORPUS_COLUMNS if c not in header]
        if missing_cols:
            raise CorpusFormatError(f"header is missing column(s): {', '.join(missing_cols)}")
        for line_no, row in enumerate(reader, start=2):
            record, reason = _parse_row(line_no, row)
            if record is None:
                rejected.append((line_no, reason or "rejected"))
                continue
            if record.participant_id in seen:
                raise CorpusFormatError(
                    f"line {line_no}: duplicate participant_id {record.participant_id!r} "
                    f"(first seen on line {seen[record.participant_id]})"
                )
            seen[record.participant_id] = line_no
            records.append(record)
    records.sort(key=lambda r: r.entry_seq)
    return Corpus(records=tuple(records), rejected=tuple(rejected))


def write_corpus_csv(records: list[ParticipantRecord] | tuple[ParticipantRecord, ...], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CORPUS_COLUMNS)
        for r in records:
            writer.writerow(
                [r.participant_id, r.entry_seq, r.stage1, int(r.responder), r.stage2, int(r.outcome)]
            )
    return path


def generate_corpus(
    design: DesignParams, size: int, seed: int = 0, id_prefix: str = "P"
) -> list[ParticipantRecord]:
    """Synthetic equal-randomization corpus with the recorded-trial schema."""
    rng = np.random.default_rng(np.random.PCG64(seed))
    probs = design.cell_probs()
    gammas = (design.arm_a.gamma, design.arm_b.gamma)
    records = []
    for i in range(1, size + 1):
        arm_idx = 0 if rng.random() < 0.5 else 1
        responder = bool(rng.random() < gammas[arm_idx])
        if responder:
            stage2, cell = "CONT", arm_idx * 3
        else:
            opt1 = rng.random() < 0.5
            stage2 = "OPT1" if opt1 else "OPT2"
            cell = arm_idx * 3 + (1 if opt1 else 2)
        outcome = bool(rng.random() < probs[cell])
        records.append(
            ParticipantRecord(
                participant_id=f"{id_prefix}{i:04d}",
                entry_seq=i,
                stage1=ARMS[arm_idx],
                responder=responder,
                stage2=stage2,
                outcome=outcome,
            )
        )
    return records


# ---------------------------------------------------------------------------
# Report structure.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DtrBreakdown:
    responders: int
    non_responders: int
    total: int
    failure_prop: float


@dataclass(frozen=True)
class GroupReport:
    """Per-regime breakdown plus the unique-participant total for one column."""

    dtr: dict[str, DtrBreakdown]
    participants: int
    failure_prop: float


@dataclass(frozen=True)
class ReplayReport:
    groups: dict[str, GroupReport]
    stop_reason: str
    placed: int
    corpus_size: int
    objective: str
    burn_in: int
    seed: int


def _classify(records: list[ParticipantRecord]) -> GroupReport:
    """Regime-consistency counts; responders belong to both regimes of their arm."""
    rows: dict[str, DtrBreakdown] = {}
    for name, arm, option in (
        ("d1", "A", "OPT1"),
        ("d2", "A", "OPT2"),
        ("d3", "B", "OPT1"),
        ("d4", "B", "OPT2"),
    ):
        consistent = [
            r for r in records
            if r.stage1 == arm and (r.responder or r.stage2 == option)
        ]
        failures = sum(1 for r in consistent if not r.outcome)
        responders = sum(1 for r in consistent if r.responder)
        rows[name] = DtrBreakdown(
            responders=responders,
            non_responders=len(consistent) - responders,
            total=len(consistent),
            failure_prop=failures / len(consistent) if consistent else 0.0,
        )
    total_failures = sum(1 for r in records if not r.outcome)
    return GroupReport(
        dtr=rows,
        participants=len(records),
        failure_prop=total_failures / len(records) if records else 0.0,
    )


# ---------------------------------------------------------------------------
# The replay itself.
# ---------------------------------------------------------------------------

class _Pools:
    """Entry-ordered pools with lazy deletion of consumed participants."""

    def __init__(self, records: tuple[ParticipantRecord, ...]):
        self.consumed: set[str] = set()
        self.by_arm: dict[str, deque] = {arm: deque() for arm in ARMS}
        self.by_sequence: dict[tuple[str, str], deque] = {
            (arm, s2): deque() for arm in ARMS for s2 in STAGE2
        }
        self.by_regime: dict[tuple[str, str], deque] = {
            (arm, opt): deque() for arm in ARMS for opt in ("OPT1", "OPT2")
        }
        for r in records:
            self.by_arm[r.stage1].append(r)
            self.by_sequence[(r.stage1, r.stage2)].append(r)
            for opt in ("OPT1", "OPT2"):
                if r.responder or r.stage2 == opt:
                    self.by_regime[(r.stage1, opt)].append(r)

    def _peek(self, queue: deque) -> Optional[ParticipantRecord]:
        while queue:
            if queue[0].participant_id in self.consumed:
                queue.popleft()
            else:
                return queue[0]
        return None

    def earliest_on_arm(self, arm: str) -> Optional[ParticipantRecord]:
        return self._peek(self.by_arm[arm])

    def earliest_with_sequence(self, arm: str, stage2: str) -> Optional[ParticipantRecord]:
        return self._peek(self.by_sequence[(arm, stage2)])

    def earliest_in_regime(self, arm: str, option: str) -> Optional[ParticipantRecord]:
        return self._peek(self.by_regime[(arm, option)])

    def take(self, record: ParticipantRecord) -> None:
        self.consumed.add(record.participant_id)


def replay_adaptive(
    corpus: Corpus, config: ReplayConfig
) -> tuple[ReplayReport, Trajectory]:
    """Re-run a recorded study under adaptive allocation.

    Returns the five-column comparison report and the trajectory of ratio
    estimates over consumed participants.
    """
    records = corpus.records
    if not records:
        raise DomainError("corpus is empty")
    engine = TrialEngine(
        EngineConfig(
            objective=config.objective,
            burn_in=config.burn_in,
            gamma_a=config.gamma_a,
            gamma_b=config.gamma_b,
            gamma_source=config.gamma_source,
            retain_patients=False,
        )
    )
    rng = np.random.default_rng(np.random.PCG64(config.seed))
    pools = _Pools(records)
    placed: list[ParticipantRecord] = []
    trajectory = Trajectory()

    def ingest(record: ParticipantRecord) -> None:
        pools.take(record)
        placed.append(record)
        option = None if record.responder else record.stage2
        engine.ingest_participant(record.stage1, record.responder, option, record.outcome)
        p = engine.estimate_cell_probs()
        ga, gb = engine.effective_gammas()
        taus = composed_ratios_from_floats(*p, ga, gb, config.objective)
        failures = sum(1 for r in placed if not r.outcome)
        trajectory.append(len(placed), taus, failures / len(placed))

    for record in records[: config.burn_in]:
        ingest(record)

    stop_reason = "corpus exhausted"
    while len(placed) < len(records):
        step_index = len(placed) + 1
        prob_a = engine.stage1_probability(step_index)
        arm = "A" if rng.random() < prob_a else "B"
        if config.full_sequence_draw:
            prob_opt1 = engine.stage2_probability(arm, step_index)
            option = "OPT1" if rng.random() < prob_opt1 else "OPT2"
            chosen = pools.earliest_in_regime(arm, option)
            if chosen is None:
                stop_reason = (
                    f"no remaining participant consistent with ({arm}, {option}) "
                    f"after {len(placed)} placements"
                )
                break
        else:
            candidate = pools.earliest_on_arm(arm)
            if candidate is None:
                stop_reason = (
                    f"no remaining participant on arm {arm} after {len(placed)} placements"
                )
                break
            if candidate.responder:
                chosen = candidate
            else:
                prob_opt1 = engine.stage2_probability(arm, step_index)
                option = "OPT1" if rng.random() < prob_opt1 else "OPT2"
                chosen = pools.earliest_with_sequence(arm, option)
                if chosen is None:
                    stop_reason = (
                        f"sequence ({arm}, {option}) exhausted after {len(placed)} placements"
                    )
                    break
        ingest(chosen)

    placed_ids = {r.participant_id for r in placed}
    remaining = [r for r in records if r.participant_id not in placed_ids]
    k = len(placed)
    report = ReplayReport(
        groups={
            "replayed": _classify(placed),
            "unplaced": _classify(remaining),
            "original_matched": _classify(list(records[:k])),
            "original_remainder": _classify(list(records[k:])),
            "original_full": _classify(list(records)),
        },
        stop_reason=stop_reason,
        placed=k,
        corpus_size=len(records),
        objective=config.objective.value,
        burn_in=config.burn_in,
        seed=config.seed,
    )
    return report, trajectory


# ---------------------------------------------------------------------------
# Report serialization.
# ---------------------------------------------------------------------------

def write_report_csv(report: ReplayReport, path: str | Path) -> Path:
    """Five column groups side by side, one row per regime plus a total row."""
    path = Path(path)
    header = ["dtr"]
    for group in REPORT_GROUPS:
        header += [
            f"{group}_responders",
            f"{group}_non_responders",
            f"{group}_total",
            f"{group}_failure_prop",
        ]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for dtr in ("d1", "d2", "d3", "d4"):
            row: list = [dtr]
            for group in REPORT_GROUPS:
                cell = report.groups[group].dtr[dtr]
                row += [cell.responders, cell.non_responders, cell.total, repr(cell.failure_prop)]
            writer.writerow(row)
        total: list = ["total"]
        for group in REPORT_GROUPS:
            g = report.groups[group]
            # responders appear in both regimes of their arm, so the regime rows
            # cannot be summed; the total row carries unique-participant figures
            total += ["", "", g.participants, repr(g.failure_prop)]
        writer.writerow(total)
    return path


def write_report_json(report: ReplayReport, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(asdict(report), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def read_report_json(path: str | Path) -> ReplayReport:
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    groups = {}
    for name, group in raw["groups"].items():
        groups[name] = GroupReport(
            dtr={d: DtrBreakdown(**cell) for d, cell in group["dtr"].items()},
            participants=group["participants"],
            failure_prop=group["failure_prop"],
        )
    raw["groups"] = groups
    return ReplayReport(**raw)
