"""Figure rendering for the report path of the CLI.

All functions take the harness/replay result objects and write PNG files;
none of them touch the simulation machinery.  The Agg backend is forced so
rendering works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import DtrAllocationSummary, Trajectory

_RATIO_LABELS = (
    ("tau_a", "first-stage ratio"),
    ("tau_ac", "arm A second-stage ratio"),
    ("tau_be", "arm B second-stage ratio"),
)


def convergence_figure(
    trajectory: Trajectory,
    truths: tuple[float, float, float] | None,
    path: str | Path,
    title: str = "Allocation ratio estimates over enrollment",
) -> Path:
    """Three panels of ratio estimates against enrollment, with true-value lines."""
    path = Path(path)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6), sharex=True)
    series = (trajectory.tau_a, trajectory.tau_ac, trajectory.tau_be)
    for k, ax in enumerate(axes):
        ax.plot(trajectory.patient, series[k], "k.", markersize=2.5)
        if truths is not None:
            ax.axhline(truths[k], color="red", linewidth=1.2)
        ax.set_xlabel("patients enrolled")
        ax.set_ylabel(_RATIO_LABELS[k][1])
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def failure_comparison_figure(
    adaptive: Trajectory, equal: Trajectory, path: str | Path
) -> Path:
    """Cumulative failure proportion under adaptive vs equal allocation."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(adaptive.patient, adaptive.failure_prop, color="sienna", linestyle="--",
            label="adaptive")
    ax.plot(equal.patient, equal.failure_prop, color="steelblue", linestyle=":",
            label="equal")
    ax.set_xlabel("patients enrolled")
    ax.set_ylabel("proportion of failures")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def dtr_allocation_figure(dtr: DtrAllocationSummary, path: str | Path) -> Path:
    """Mean patients and mean failure share per embedded regime, side by side."""
    path = Path(path)
    names = ("d1", "d2", "d3", "d4")
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.8))
    left.bar(names, [dtr.mean_failure_prop[d] for d in names], color="indianred")
    left.set_ylabel("mean failure proportion")
    right.bar(names, [dtr.mean_patients[d] for d in names], color="seagreen")
    right.set_ylabel("mean allocated patients")
    for ax in (left, right):
        ax.set_xlabel("embedded regime")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
