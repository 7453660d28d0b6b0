"""Command line front end.

Subcommands:
  enumerate   exhaustive sequence enumeration with duration statistics
  train       multi-trial training runs from a JSON experiment config
  compare     merge summary.json files from several runs into one table
  validate    load and sanity-check an assembly spec file

Every output file is deterministic for identical inputs; progress and
result one-liners go to stdout, errors to stderr with a nonzero exit.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .env import ConfigError
from .harness import (
    experiment_from_dict,
    load_spec_source,
    run_experiment,
    write_json,
)
from .model import SpecValidationError
from .oracle import (
    EnumerationLimitError,
    compare_to_reference,
    count_linear_extensions,
    distribution_stats,
    enumerate_sequences,
    optimal_sequences,
)

_CONVENTIONS = {"both": (True, False), "on": (True,), "off": (False,)}


def _convention_tag(pickup: bool) -> str:
    return "pickup_on" if pickup else "pickup_off"


def cmd_enumerate(args) -> int:
    spec = load_spec_source(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    conventions = _CONVENTIONS[args.pickup_convention]

    t0 = time.perf_counter()
    per_convention = {
        pickup: enumerate_sequences(spec, pickup_costs_change=pickup)
        for pickup in conventions
    }
    elapsed = time.perf_counter() - t0
    extension_count = count_linear_extensions(spec)

    stats_block: dict = {
        "count": len(per_convention[conventions[0]]),
        "linear_extension_count": extension_count,
        "bin_width": args.bin_width,
        "conventions": {},
    }
    is_builtin = args.spec == "builtin:airplane"

    header = ["sequence"]
    for pickup in conventions:
        tag = _convention_tag(pickup)
        header += [f"duration_{tag}_tu", f"tool_changes_{tag}"]
    rows = [",".join(header)]
    reference = per_convention[conventions[0]]
    for i, rec in enumerate(reference):
        cells = ["-".join(str(t) for t in rec.sequence)]
        for pickup in conventions:
            other = per_convention[pickup][i]
            cells += [repr(float(other.duration)), str(other.tool_changes)]
        rows.append(",".join(cells))
    (out / "sequences.csv").write_text("\n".join(rows) + "\n")

    for pickup in conventions:
        tag = _convention_tag(pickup)
        records = per_convention[pickup]
        stats = distribution_stats(records, bin_width=args.bin_width)
        best = optimal_sequences(records)
        block = {
            "min": stats.min,
            "max": stats.max,
            "mean": stats.mean,
            "optimal_count": len(best),
            "optimal_first": list(best[0].sequence),
        }
        if is_builtin:
            block["reference_comparison"] = compare_to_reference(stats)
        stats_block["conventions"][tag] = block
        hist = ["bin_low,bin_high,count"]
        for low, high, count in stats.histogram:
            hist.append(f"{low!r},{high!r},{count}")
        (out / f"histogram_{tag}.csv").write_text("\n".join(hist) + "\n")

    write_json(out / "stats.json", stats_block)
    print(
        f"enumerated {stats_block['count']} sequences in {elapsed:.3f} s "
        f"-> {out}"
    )
    return 0


def cmd_train(args) -> int:
    with open(args.config) as fh:
        data = json.load(fh)
    if args.algo:
        data["algorithm"] = args.algo
    if args.setting:
        data.setdefault("env", {})["mode"] = args.setting
    if args.trials is not None:
        data["trials"] = args.trials
    if args.episodes is not None:
        data["episodes"] = args.episodes
    if args.seed is not None:
        data["base_seed"] = args.seed
    data["out_dir"] = args.out

    config = experiment_from_dict(data)
    t0 = time.perf_counter()
    agg = run_experiment(config)
    elapsed = time.perf_counter() - t0
    print(
        f"{agg.algorithm}: final {agg.final_mean_tu:.2f} +/- "
        f"{agg.final_std_tu:.2f} tu over {agg.trials} trials "
        f"({elapsed:.1f} s) -> {args.out}"
    )
    return 0


_COMPARE_FIELDS = (
    "final_mean_tu", "final_std_tu", "total_unwanted_mean",
    "total_unwanted_std", "oracle_min_tu",
)


def cmd_compare(args) -> int:
    rows = []
    for run_dir in args.runs:
        summary_path = Path(run_dir) / "summary.json"
        with open(summary_path) as fh:
            summary = json.load(fh)
        row = {
            "run": Path(run_dir).name,
            "algorithm": summary["algorithm"],
            "trials": summary["trials"],
            "episodes": summary["episodes"],
        }
        for key in _COMPARE_FIELDS:
            row[key] = summary[key]
        rows.append(row)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    columns = ["run", "algorithm", "trials", "episodes", *_COMPARE_FIELDS]
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            v = row[col]
            cells.append(repr(float(v)) if isinstance(v, float) else str(v))
        lines.append(",".join(cells))
    (out / "compare.csv").write_text("\n".join(lines) + "\n")
    write_json(out / "compare.json", {"runs": rows})

    table = [{c: c for c in columns}] + rows
    widths = [max(len(str(r[c])) for r in table) for c in columns]
    for r in table:
        print("  ".join(str(r[c]).ljust(w) for c, w in zip(columns, widths)))
    return 0


def cmd_validate(args) -> int:
    spec = load_spec_source(args.spec)
    print(f"spec ok: {spec.num_tasks} tasks, {spec.num_tools} tools")
    if spec.num_tasks <= 20:
        try:
            n = count_linear_extensions(spec)
            print(f"valid sequences: {n}")
        except EnumerationLimitError as exc:
            print(f"valid sequences: {exc}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asmplan",
        description="Assembly sequence planning: enumeration and RL training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="enumerate all valid sequences")
    p.add_argument("--spec", default="builtin:airplane",
                   help="spec file path or builtin:airplane")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pickup-convention", choices=("both", "on", "off"),
                   default="both",
                   help="whether the first tool pickup costs time")
    p.add_argument("--bin-width", type=float, default=1.0,
                   help="histogram bin width in time units")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("train", help="run a multi-trial training experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--algo", choices=("qlearning", "dqn", "a2c", "rainbow"),
                   help="override the config's algorithm")
    p.add_argument("--setting", choices=("deterministic", "stochastic"),
                   help="override the env mode")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--episodes", type=int, help="override episodes per trial")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="merge summaries from several runs")
    p.add_argument("--runs", nargs="+", required=True,
                   help="run directories containing summary.json")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", help="check a spec file")
    p.add_argument("--spec", required=True,
                   help="spec file path or builtin:airplane")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SpecValidationError, EnumerationLimitError,
            OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
