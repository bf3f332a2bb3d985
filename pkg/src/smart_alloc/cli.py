"""Command-line interface.

Scenario files are JSON with keys ``probs {aa, ac, ad, bb, be, bf}``,
``gamma {a, b}``, ``n``, ``objective``, ``reps``, ``burn_in``, ``seed``
and ``mode``.  The environment variable ``SMART_ALLOC_SEED`` overrides the
scenario seed.  Report-producing subcommands write delimited output and,
unless ``--no-figures`` is given, render the matching figures next to it.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from . import figures, harness, replay
from .design import DomainError, ObjectiveKind, RatioTriple
from .ratios import expected_failures_total, optimal_ratio_triple
from .rng import derive_seed


def _panel_rows(scenario: harness.SimScenario, all_objectives: bool) -> list[dict]:
    objectives = list(ObjectiveKind) if all_objectives else [scenario.objective]
    rows = []
    for objective in objectives:
        taus = optimal_ratio_triple(scenario.design, objective)
        rows.append(
            {
                "objective": objective.value,
                "tau_a": taus.tau_a,
                "tau_ac": taus.tau_ac,
                "tau_be": taus.tau_be,
                "expected_failures_optimal": expected_failures_total(scenario.design, taus),
                "expected_failures_equal": expected_failures_total(
                    scenario.design, RatioTriple(1.0, 1.0, 1.0)
                ),
            }
        )
    return rows


def _cmd_ratios(args: argparse.Namespace) -> int:
    scenario = harness.load_scenario(args.scenario)
    rows = _panel_rows(scenario, args.all_objectives)
    for row in rows:
        print(
            f"{row['objective']:>5}: tau_a={row['tau_a']:.3f} "
            f"tau_ac={row['tau_ac']:.3f} tau_be={row['tau_be']:.3f}  "
            f"failures optimal={row['expected_failures_optimal']:.2f} "
            f"equal={row['expected_failures_equal']:.2f}"
        )
    print("(failure columns are closed-form expectations; simulated means come from `simulate`)")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.out}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    scenario = harness.load_scenario(args.scenario)
    summary = harness.run_batch(scenario, jobs=args.jobs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_summary_csv(summary, out_dir / "summary.csv")
    harness.write_failures_csv(summary, out_dir / "failures.csv")
    harness.write_summary_json(summary, out_dir / "summary.json")
    if summary.dtr is not None:
        harness.write_dtr_csv(summary.dtr, out_dir / "dtr_allocation.csv")
    for row in summary.ratios:
        print(
            f"{row.name}: true={row.true:.3f} mean={row.mean:.3f} "
            f"sse={row.sse:.3f} ase={row.ase:.3f} cp={row.cp:.3f}"
        )
    print(
        f"expected failures: adaptive={summary.expected_failures_adaptive:.2f} "
        f"equal={summary.expected_failures_equal:.2f}"
    )
    if not args.no_figures and summary.dtr is not None:
        figures.dtr_allocation_figure(summary.dtr, out_dir / "dtr_allocation.png")
    print(f"wrote {out_dir}/")
    return 0


def _cmd_trajectory(args: argparse.Namespace) -> int:
    scenario = harness.load_scenario(args.scenario)
    seed = args.seed if args.seed is not None else derive_seed(scenario.base_seed, 0)
    engine, trajectory = harness.run_trial(scenario, seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_trajectory_csv(trajectory, out_dir / "trajectory.csv")
    est = engine.current_ratio_estimates()
    print(
        f"final estimates: tau_a={est.triple.tau_a:.3f} tau_ac={est.triple.tau_ac:.3f} "
        f"tau_be={est.triple.tau_be:.3f} failures={engine.failures}"
    )
    if not args.no_figures:
        truths = optimal_ratio_triple(scenario.design, scenario.objective).as_tuple()
        figures.convergence_figure(trajectory, truths, out_dir / "convergence.png")
        equal_scenario = harness.SimScenario(
            design=scenario.design,
            objective=scenario.objective,
            reps=scenario.reps,
            burn_in=scenario.burn_in,
            base_seed=scenario.base_seed,
            mode="equal",
        )
        _, equal_traj = harness.run_trial(equal_scenario, seed)
        figures.failure_comparison_figure(
            trajectory, equal_traj, out_dir / "failure_comparison.png"
        )
    print(f"wrote {out_dir}/")
    return 0


def _cmd_baseline(args: argparse.Namespace) -> int:
    scenario = harness.load_scenario(args.scenario)
    summary = harness.equal_randomization_baseline(scenario, jobs=args.jobs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    harness.write_failures_csv(summary, out_dir / "failures.csv")
    harness.write_summary_csv(summary, out_dir / "summary.csv")
    print(
        f"expected failures: equal={summary.expected_failures_equal:.2f} "
        f"adaptive={summary.expected_failures_adaptive:.2f}"
    )
    print(f"wrote {out_dir}/")
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    corpus = replay.load_corpus(args.corpus)
    if corpus.rejected:
        for line_no, reason in corpus.rejected:
            print(f"rejected line {line_no}: {reason}", file=sys.stderr)
    gamma_source = "known" if args.gamma_a is not None else "estimated"
    config = replay.ReplayConfig(
        objective=ObjectiveKind.parse(args.objective),
        burn_in=args.burn_in,
        seed=args.seed,
        gamma_source=gamma_source,
        gamma_a=args.gamma_a,
        gamma_b=args.gamma_b,
        full_sequence_draw=args.full_sequence_draw,
    )
    report, trajectory = replay.replay_adaptive(corpus, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    replay.write_report_csv(report, out)
    replay.write_report_json(report, out.with_suffix(".json"))
    replayed = report.groups["replayed"]
    matched = report.groups["original_matched"]
    print(f"placed {report.placed}/{report.corpus_size} participants; stop: {report.stop_reason}")
    print(
        f"failure proportion: adaptive={replayed.failure_prop:.3f} "
        f"original (same count)={matched.failure_prop:.3f}"
    )
    if not args.no_figures:
        figures.convergence_figure(
            trajectory,
            None,
            out.parent / (out.stem + "_convergence.png"),
            title="Replay: allocation ratio estimates",
        )
    print(f"wrote {out}")
    return 0


def _cmd_make_corpus(args: argparse.Namespace) -> int:
    scenario = harness.load_scenario(args.scenario)
    records = replay.generate_corpus(scenario.design, args.n, seed=args.seed)
    replay.write_corpus_csv(records, args.out)
    print(f"wrote {args.n} synthetic participants to {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.data_dir), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smart-alloc",
        description="Optimal response-adaptive randomization for two-stage SMART designs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ratios = sub.add_parser("ratios", help="closed-form allocation panel for a scenario")
    ratios.add_argument("--scenario", required=True)
    ratios.add_argument("--out", help="optional CSV destination")
    ratios.add_argument("--all-objectives", action="store_true")
    ratios.set_defaults(func=_cmd_ratios)

    simulate = sub.add_parser("simulate", help="replicated Monte Carlo summary for a scenario")
    simulate.add_argument("--scenario", required=True)
    simulate.add_argument("--out-dir", required=True)
    simulate.add_argument("--jobs", type=int, default=None)
    simulate.add_argument("--no-figures", action="store_true")
    simulate.set_defaults(func=_cmd_simulate)

    trajectory = sub.add_parser("trajectory", help="one seeded run with per-patient estimates")
    trajectory.add_argument("--scenario", required=True)
    trajectory.add_argument("--out-dir", required=True)
    trajectory.add_argument("--seed", type=int, default=None)
    trajectory.add_argument("--no-figures", action="store_true")
    trajectory.set_defaults(func=_cmd_trajectory)

    baseline = sub.add_parser("baseline", help="equal-randomization comparator batch")
    baseline.add_argument("--scenario", required=True)
    baseline.add_argument("--out-dir", required=True)
    baseline.add_argument("--jobs", type=int, default=None)
    baseline.set_defaults(func=_cmd_baseline)

    rep = sub.add_parser("replay", help="re-run a recorded study under adaptive allocation")
    rep.add_argument("--corpus", required=True)
    rep.add_argument("--objective", default="diff", choices=["diff", "odds", "rr"])
    rep.add_argument("--burn-in", type=int, default=60)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--out", required=True)
    rep.add_argument("--gamma-a", type=float, default=None,
                     help="known response rate for arm A (default: estimate from corpus)")
    rep.add_argument("--gamma-b", type=float, default=None)
    rep.add_argument("--full-sequence-draw", action="store_true",
                     help="draw arm and option before matching instead of arm first")
    rep.add_argument("--no-figures", action="store_true")
    rep.set_defaults(func=_cmd_replay)

    corpus = sub.add_parser("make-corpus", help="synthetic recorded-study fixture")
    corpus.add_argument("--scenario", required=True)
    corpus.add_argument("--out", required=True)
    corpus.add_argument("--n", type=int, default=521)
    corpus.add_argument("--seed", type=int, default=0)
    corpus.set_defaults(func=_cmd_make_corpus)

    serve = sub.add_parser("serve", help="run the live trial service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data-dir", required=True)
    serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, replay.CorpusFormatError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
