"""Replicated Monte Carlo experiments over the adaptive engine.

A batch runs independent replications with per-replication seeds derived
from the batch seed (see :mod:`smart_alloc.rng`), then reduces them with
exactly-rounded summation so the result is identical for any execution
order or degree of parallelism.  Alongside the requested allocation mode a
companion set of runs in the other mode is simulated so every summary
carries both expected-failure columns.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .design import DesignParams, DomainError, ObjectiveKind, RatioTriple
from .engine import EngineConfig, TrialEngine
from .inference import confidence_interval
from .ratios import composed_ratios_from_floats, optimal_ratio_triple
from .rng import derive_seed

MODES = ("adaptive", "equal")

# trajectories sample every patient early on, then thin out
_TRAJECTORY_DENSE_LIMIT = 200
_TRAJECTORY_STRIDE = 10


@dataclass(frozen=True)
class SimScenario:
    design: DesignParams
    objective: ObjectiveKind = ObjectiveKind.DIFFERENCE
    reps: int = 1000
    burn_in: int = 30
    base_seed: int = 0
    mode: str = "adaptive"

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise DomainError(f"reps must be >= 1, got {self.reps}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be adaptive|equal, got {self.mode!r}")
        if self.burn_in < 2:
            raise DomainError(f"burn_in must be >= 2, got {self.burn_in}")


def scenario_from_dict(raw: dict) -> SimScenario:
    """Parse the scenario mapping used by files and the CLI."""
    try:
        probs = raw["probs"]
        gamma = raw["gamma"]
        n = int(raw["n"])
        flat = tuple(float(probs[k]) for k in ("aa", "ac", "ad", "bb", "be", "bf"))
        design = DesignParams.from_probs(flat, float(gamma["a"]), float(gamma["b"]), n)
    except KeyError as missing:
        raise DomainError(f"scenario is missing key {missing}") from None
    return SimScenario(
        design=design,
        objective=ObjectiveKind.parse(raw.get("objective", "diff")),
        reps=int(raw.get("reps", 1000)),
        burn_in=int(raw.get("burn_in", 30)),
        base_seed=int(raw.get("seed", 0)),
        mode=str(raw.get("mode", "adaptive")),
    )


def load_scenario(path: str | Path) -> SimScenario:
    """Load a scenario file; SMART_ALLOC_SEED overrides the file's seed."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = json.load(handle)
    override = os.environ.get("SMART_ALLOC_SEED")
    if override is not None:
        raw["seed"] = int(override)
    return scenario_from_dict(raw)


def scenario_to_dict(scenario: SimScenario) -> dict:
    p = scenario.design.cell_probs()
    return {
        "probs": dict(zip(("aa", "ac", "ad", "bb", "be", "bf"), p)),
        "gamma": {"a": scenario.design.arm_a.gamma, "b": scenario.design.arm_b.gamma},
        "n": scenario.design.n,
        "objective": scenario.objective.value,
        "reps": scenario.reps,
        "burn_in": scenario.burn_in,
        "seed": scenario.base_seed,
        "mode": scenario.mode,
    }


@dataclass
class Trajectory:
    """Per-patient snapshots of the three ratio estimates and failure share."""

    patient: list[int] = field(default_factory=list)
    tau_a: list[float] = field(default_factory=list)
    tau_ac: list[float] = field(default_factory=list)
    tau_be: list[float] = field(default_factory=list)
    failure_prop: list[float] = field(default_factory=list)

    def append(self, i: int, taus: tuple[float, float, float], fail: float) -> None:
        self.patient.append(i)
        self.tau_a.append(taus[0])
        self.tau_ac.append(taus[1])
        self.tau_be.append(taus[2])
        self.failure_prop.append(fail)


def _should_sample(i: int, n: int) -> bool:
    return i <= _TRAJECTORY_DENSE_LIMIT or i % _TRAJECTORY_STRIDE == 0 or i == n


def run_trial(
    scenario: SimScenario, seed: int, collect_trajectory: bool = True
) -> tuple[TrialEngine, Optional[Trajectory]]:
    """Simulate one complete trial with the given seed.

    Adaptive mode drives the engine after the configured burn-in; equal
    mode keeps every assignment probability at one half, which is realized
    by extending the burn-in over the whole enrollment.
    """
    design = scenario.design
    n = design.n
    burn = scenario.burn_in if scenario.mode == "adaptive" else n + 1
    gamma_a, gamma_b = design.arm_a.gamma, design.arm_b.gamma
    rng = np.random.default_rng(np.random.PCG64(seed))
    engine = TrialEngine(
        EngineConfig(
            objective=scenario.objective,
            burn_in=max(burn, 2),
            gamma_a=gamma_a,
            gamma_b=gamma_b,
            retain_patients=False,
        ),
        rng=rng,
    )
    probs = design.cell_probs()
    gammas = (gamma_a, gamma_b)
    trajectory = Trajectory() if collect_trajectory else None
    rand = rng.random
    objective = scenario.objective
    for i in range(1, n + 1):
        pid, arm, _, _ = engine.enroll()
        arm_idx = 0 if arm == "A" else 1
        responder = rand() < gammas[arm_idx]
        engine.record_response(pid, responder)
        if responder:
            cell = arm_idx * 3
        else:
            option, _, _ = engine.assign_stage2(pid)
            cell = arm_idx * 3 + (1 if option == "OPT1" else 2)
        engine.record_outcome(pid, rand() < probs[cell])
        if trajectory is not None and _should_sample(i, n):
            p = engine.estimate_cell_probs()
            ga, gb = engine.effective_gammas()
            taus = composed_ratios_from_floats(*p, ga, gb, objective)
            trajectory.append(i, taus, engine.failures / i)
    return engine, trajectory


# ---------------------------------------------------------------------------
# Batch execution.
# ---------------------------------------------------------------------------

def _run_replication(scenario: SimScenario, seed: int, truths: RatioTriple) -> list[float]:
    engine, _ = run_trial(scenario, seed, collect_trajectory=False)
    est = engine.current_ratio_estimates()
    taus = est.triple.as_tuple()
    ases = (est.ase_tau_a, est.ase_tau_ac, est.ase_tau_be)
    covers = []
    for value, ase, truth in zip(taus, ases, truths.as_tuple()):
        lo, hi = confidence_interval(value, ase, 0.95)
        covers.append(1.0 if lo <= truth <= hi else 0.0)
    dtr = engine.dtr_counts()
    dtr_cols: list[float] = []
    for name in ("d1", "d2", "d3", "d4"):
        row = dtr[name]
        dtr_cols.append(row["patients"])
        dtr_cols.append(row["failures"] / row["patients"] if row["patients"] else 0.0)
    return [*taus, *ases, *covers, float(engine.failures), *dtr_cols]


def _worker(args: tuple) -> tuple[int, list[list[float]]]:
    scenario, start, stop, stream, truths = args
    rows = []
    for r in range(start, stop):
        rows.append(_run_replication(scenario, derive_seed(scenario.base_seed, r, stream), truths))
    return start, rows


@dataclass(frozen=True)
class RepSample:
    """Per-replication outputs, for convergence and calibration studies."""

    tau_a: float
    tau_ac: float
    tau_be: float
    ase_tau_a: float
    ase_tau_ac: float
    ase_tau_be: float
    covered_tau_a: bool
    covered_tau_ac: bool
    covered_tau_be: bool
    failures: float


def replication_samples(scenario: SimScenario, jobs: Optional[int] = None) -> list[RepSample]:
    """One :class:`RepSample` per replication, in replication order."""
    rows = _simulate_matrix(scenario, stream=0, jobs=jobs)
    return [
        RepSample(
            tau_a=row[0], tau_ac=row[1], tau_be=row[2],
            ase_tau_a=row[3], ase_tau_ac=row[4], ase_tau_be=row[5],
            covered_tau_a=bool(row[6]), covered_tau_ac=bool(row[7]),
            covered_tau_be=bool(row[8]), failures=row[9],
        )
        for row in rows
    ]


@dataclass(frozen=True)
class RatioStats:
    name: str
    true: float
    mean: float
    sse: float
    ase: float
    cp: float


@dataclass(frozen=True)
class DtrAllocationSummary:
    """Mean consistent-patient counts and failure shares per embedded regime."""

    mean_patients: dict[str, float]
    mean_failure_prop: dict[str, float]


@dataclass(frozen=True)
class SimSummary:
    objective: str
    n: int
    reps: int
    burn_in: int
    base_seed: int
    mode: str
    ratios: tuple[RatioStats, RatioStats, RatioStats]
    expected_failures_adaptive: float
    expected_failures_equal: float
    dtr: Optional[DtrAllocationSummary]
    low_precision: bool


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def _sd(values: list[float], mean: float) -> float:
    if len(values) < 2:
        return 0.0
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1))


def _simulate_matrix(
    scenario: SimScenario, stream: int, jobs: Optional[int]
) -> list[list[float]]:
    """One row of per-replication statistics per replication, in rep order."""
    truths = optimal_ratio_triple(scenario.design, scenario.objective)
    reps = scenario.reps
    workers = jobs if jobs is not None else (os.cpu_count() or 1)
    rows: list[Optional[list[float]]] = [None] * reps
    if workers <= 1 or reps < 16:
        _, out = _worker((scenario, 0, reps, stream, truths))
        return out
    chunk = max(1, math.ceil(reps / (workers * 4)))
    tasks = [
        (scenario, start, min(start + chunk, reps), stream, truths)
        for start in range(0, reps, chunk)
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for start, out in pool.map(_worker, tasks):
            rows[start : start + len(out)] = out
    return rows  # type: ignore[return-value]


def run_batch(scenario: SimScenario, jobs: Optional[int] = None) -> SimSummary:
    """Replicate the scenario and aggregate the summary panel.

    The ratio statistics come from runs in the scenario's own mode; the
    companion mode is simulated as well (stream 1 of the seed derivation)
    so both expected-failure columns are populated.
    """
    truths = optimal_ratio_triple(scenario.design, scenario.objective)
    main = _simulate_matrix(scenario, stream=0, jobs=jobs)
    other_mode = "equal" if scenario.mode == "adaptive" else "adaptive"
    companion_scenario = SimScenario(
        design=scenario.design,
        objective=scenario.objective,
        reps=scenario.reps,
        burn_in=scenario.burn_in,
        base_seed=scenario.base_seed,
        mode=other_mode,
    )
    companion = _simulate_matrix(companion_scenario, stream=1, jobs=jobs)

    names = ("tau_a", "tau_ac", "tau_be")
    stats = []
    for k, name in enumerate(names):
        estimates = [row[k] for row in main]
        ases = [row[3 + k] for row in main]
        covers = [row[6 + k] for row in main]
        mean = _mean(estimates)
        stats.append(
            RatioStats(
                name=name,
                true=truths.as_tuple()[k],
                mean=mean,
                sse=_sd(estimates, mean),
                ase=_mean(ases),
                cp=_mean(covers),
            )
        )
    failures_main = _mean([row[9] for row in main])
    failures_companion = _mean([row[9] for row in companion])
    if scenario.mode == "adaptive":
        failures_adaptive, failures_equal = failures_main, failures_companion
        adaptive_rows = main
    else:
        failures_adaptive, failures_equal = failures_companion, failures_main
        adaptive_rows = companion
    dtr = DtrAllocationSummary(
        mean_patients={
            name: _mean([row[10 + 2 * i] for row in adaptive_rows])
            for i, name in enumerate(("d1", "d2", "d3", "d4"))
        },
        mean_failure_prop={
            name: _mean([row[11 + 2 * i] for row in adaptive_rows])
            for i, name in enumerate(("d1", "d2", "d3", "d4"))
        },
    )
    return SimSummary(
        objective=scenario.objective.value,
        n=scenario.design.n,
        reps=scenario.reps,
        burn_in=scenario.burn_in,
        base_seed=scenario.base_seed,
        mode=scenario.mode,
        ratios=tuple(stats),
        expected_failures_adaptive=failures_adaptive,
        expected_failures_equal=failures_equal,
        dtr=dtr,
        low_precision=scenario.reps < 30,
    )


def _dtr_worker(args: tuple) -> tuple[int, list[float]]:
    scenario, start, stop, di, dj = args
    from .inference import wald_test

    zs = []
    for r in range(start, stop):
        engine, _ = run_trial(
            scenario, derive_seed(scenario.base_seed, r), collect_trajectory=False
        )
        zs.append(wald_test(engine, di, dj).z)
    return start, zs


def dtr_comparison_samples(
    scenario: SimScenario, di, dj, jobs: Optional[int] = None
) -> list[float]:
    """Wald statistics comparing two regimes, one per replication."""
    reps = scenario.reps
    workers = jobs if jobs is not None else (os.cpu_count() or 1)
    if workers <= 1 or reps < 16:
        return _dtr_worker((scenario, 0, reps, di, dj))[1]
    out: list[Optional[float]] = [None] * reps
    chunk = max(1, math.ceil(reps / (workers * 4)))
    tasks = [
        (scenario, start, min(start + chunk, reps), di, dj)
        for start in range(0, reps, chunk)
    ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for start, zs in pool.map(_dtr_worker, tasks):
            out[start : start + len(zs)] = zs
    return out  # type: ignore[return-value]


def equal_randomization_baseline(scenario: SimScenario, jobs: Optional[int] = None) -> SimSummary:
    """The non-adaptive comparator: the same batch with every probability at 1/2."""
    equal = SimScenario(
        design=scenario.design,
        objective=scenario.objective,
        reps=scenario.reps,
        burn_in=scenario.burn_in,
        base_seed=scenario.base_seed,
        mode="equal",
    )
    return run_batch(equal, jobs=jobs)


def dtr_allocation_summary(summary: SimSummary) -> DtrAllocationSummary:
    if summary.dtr is None:
        raise DomainError("summary carries no regime allocation data")
    return summary.dtr


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------

SUMMARY_COLUMNS = ("ratio", "true", "mean", "sse", "ase", "cp")
FAILURE_COLUMNS = ("mode", "expected_failures")
TRAJECTORY_COLUMNS = ("patient", "tau_a", "tau_ac", "tau_be", "failure_prop")
DTR_COLUMNS = ("dtr", "mean_patients", "mean_failure_prop")


def write_summary_csv(summary: SimSummary, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary.ratios:
            writer.writerow(
                [row.name, repr(row.true), repr(row.mean), repr(row.sse), repr(row.ase), repr(row.cp)]
            )
    return path


def read_summary_csv(path: str | Path) -> list[RatioStats]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return [
            RatioStats(
                name=row["ratio"],
                true=float(row["true"]),
                mean=float(row["mean"]),
                sse=float(row["sse"]),
                ase=float(row["ase"]),
                cp=float(row["cp"]),
            )
            for row in reader
        ]


def write_failures_csv(summary: SimSummary, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(FAILURE_COLUMNS)
        writer.writerow(["adaptive", repr(summary.expected_failures_adaptive)])
        writer.writerow(["equal", repr(summary.expected_failures_equal)])
    return path


def read_failures_csv(path: str | Path) -> dict[str, float]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return {row["mode"]: float(row["expected_failures"]) for row in reader}


def write_trajectory_csv(trajectory: Trajectory, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRAJECTORY_COLUMNS)
        for k in range(len(trajectory.patient)):
            writer.writerow(
                [
                    trajectory.patient[k],
                    repr(trajectory.tau_a[k]),
                    repr(trajectory.tau_ac[k]),
                    repr(trajectory.tau_be[k]),
                    repr(trajectory.failure_prop[k]),
                ]
            )
    return path


def read_trajectory_csv(path: str | Path) -> Trajectory:
    trajectory = Trajectory()
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            trajectory.append(
                int(row["patient"]),
                (float(row["tau_a"]), float(row["tau_ac"]), float(row["tau_be"])),
                float(row["failure_prop"]),
            )
    return trajectory


def write_dtr_csv(dtr: DtrAllocationSummary, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(DTR_COLUMNS)
        for name in ("d1", "d2", "d3", "d4"):
            writer.writerow(
                [name, repr(dtr.mean_patients[name]), repr(dtr.mean_failure_prop[name])]
            )
    return path


def read_dtr_csv(path: str | Path) -> DtrAllocationSummary:
    patients: dict[str, float] = {}
    failures: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            patients[row["dtr"]] = float(row["mean_patients"])
            failures[row["dtr"]] = float(row["mean_failure_prop"])
    return DtrAllocationSummary(mean_patients=patients, mean_failure_prop=failures)


def write_summary_json(summary: SimSummary, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(asdict(summary), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return path


def read_summary_json(path: str | Path) -> SimSummary:
    with open(path, encoding="utf-8") as handle:
        raw = json.load(handle)
    raw["ratios"] = tuple(RatioStats(**row) for row in raw["ratios"])
    if raw.get("dtr") is not None:
        raw["dtr"] = DtrAllocationSummary(**raw["dtr"])
    return SimSummary(**raw)
