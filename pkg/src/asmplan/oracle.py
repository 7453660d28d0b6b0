"""Exhaustive ground truth for small assemblies.

Enumerates every precedence-valid task sequence by depth-first search and
computes each sequence's exact deterministic duration and tool-change
count.  Practical at the case-study size (8 tasks, 3360 valid sequences);
a guard refuses problems whose linear-extension count exceeds a ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from asmplan.model import AssemblySpec, task_duration

__all__ = [
    "SequenceRecord",
    "DistributionStats",
    "EnumerationLimitError",
    "enumerate_sequences",
    "count_linear_extensions",
    "distribution_stats",
    "optimal_sequences",
    "compare_to_reference",
    "REFERENCE_DURATIONS",
]

# Published min / max / mean durations (time units) for the airplane case
# study, kept as reference values the stats report is compared against.
REFERENCE_DURATIONS = {"min": 64.0, "max": 82.0, "mean": 73.2}

DEFAULT_CEILING = 10**7


class EnumerationLimitError(RuntimeError):
    """Raised when the number of valid sequences exceeds the ceiling."""


@dataclass(frozen=True)
class SequenceRecord:
    sequence: tuple[int, ...]
    duration: float
    tool_changes: int


@dataclass(frozen=True)
class DistributionStats:
    count: int
    min: float
    max: float
    mean: float
    histogram: tuple[tuple[float, float, int], ...]  # (bin_low, bin_high, count)
    bin_width: float = 1.0


def count_linear_extensions(spec: AssemblySpec, ceiling: int | None = None) -> int:
    """Number of precedence-valid sequences, without materializing them.

    Dynamic program over done-set bitmasks, so it stays cheap even when
    the extension count itself is huge.
    """
    n = spec.num_tasks
    pred_masks = spec.predecessor_masks
    full = (1 << n) - 1
    counts = {0: 1}
    for _ in range(n):
        nxt: dict[int, int] = {}
        for mask, ways in counts.items():
            for j in range(n):
                bit = 1 << j
                if mask & bit or (pred_masks[j] & mask) != pred_masks[j]:
                    continue
                new = mask | bit
                nxt[new] = nxt.get(new, 0) + ways
        counts = nxt
    total = counts.get(full, 0)
    if ceiling is not None and total > ceiling:
        raise EnumerationLimitError(
            f"{total} valid sequences exceed the enumeration ceiling {ceiling}"
        )
    return total


def enumerate_sequences(
    spec: AssemblySpec,
    pickup_costs_change: bool = True,
    ceiling: int = DEFAULT_CEILING,
) -> list[SequenceRecord]:
    """All precedence-valid sequences with exact deterministic durations.

    DFS extends each partial sequence by the legal tasks in ascending id
    order, so the output order is stable across runs and platforms.
    """
    count_linear_extensions(spec, ceiling=ceiling)

    n = spec.num_tasks
    pred_masks = spec.predecessor_masks
    base = spec.base_time
    corr = spec.correction
    tool = spec.tool
    tct = spec.tool_change_time
    full = (1 << n) - 1

    records: list[SequenceRecord] = []
    seq: list[int] = []

    def extend(mask: int, current_tool: int, elapsed: float, changes: int) -> None:
        if mask == full:
            records.append(SequenceRecord(tuple(seq), elapsed, changes))
            return
        for j in range(n):
            bit = 1 << j
            if mask & bit or (pred_masks[j] & mask) != pred_masks[j]:
                continue
            dur = base[j]
            done_mask = mask
            k = 0
            while done_mask:
                if done_mask & 1:
                    dur += corr[k][j]
                done_mask >>= 1
                k += 1
            t = tool[j]
            changed = t != current_tool and (current_tool != 0 or pickup_costs_change)
            if changed:
                dur += tct
            seq.append(j + 1)
            extend(mask | bit, t, elapsed + dur, changes + (1 if changed else 0))
            seq.pop()

    extend(0, 0, 0.0, 0)
    return records


def distribution_stats(
    records: list[SequenceRecord], bin_width: float = 1.0
) -> DistributionStats:
    """Exact count/min/max/mean plus a fixed-width duration histogram.

    Bins are [low, low + width) anchored at floor(min / width) * width;
    the last bin is closed on the right so the maximum is counted.
    """
    if not records:
        raise ValueError("distribution_stats: records must be non-empty")
    if bin_width <= 0:
        raise ValueError("distribution_stats: bin_width must be > 0")
    durations = [r.duration for r in records]
    lo = min(durations)
    hi = max(durations)
    mean = math.fsum(durations) / len(durations)

    first = math.floor(lo / bin_width) * bin_width
    nbins = max(1, int(math.floor((hi - first) / bin_width)) + 1)
    counts = [0] * nbins
    for d in durations:
        idx = int((d - first) / bin_width)
        if idx >= nbins:  # d == exact upper edge
            idx = nbins - 1
        counts[idx] += 1
    bins = tuple(
        (first + i * bin_width, first + (i + 1) * bin_width, c)
        for i, c in enumerate(counts)
    )
    return DistributionStats(
        count=len(records), min=lo, max=hi, mean=mean, histogram=bins,
        bin_width=bin_width,
    )


def optimal_sequences(records: list[SequenceRecord]) -> list[SequenceRecord]:
    """All records attaining the minimum duration, sorted lexicographically."""
    if not records:
        raise ValueError("optimal_sequences: records must be non-empty")
    best = min(r.duration for r in records)
    winners = [r for r in records if r.duration == best]
    winners.sort(key=lambda r: r.sequence)
    return winners


def compare_to_reference(
    stats: DistributionStats,
    reference: dict[str, float] = REFERENCE_DURATIONS,
    tolerance: float = 0.05,
) -> dict:
    """Side-by-side comparison of computed stats against reference values.

    Returns a JSON-ready dict with per-quantity computed/reference/delta
    and a ``matches`` flag.  Informational: a mismatch is reported, not
    raised, because the reference values may rest on conventions the
    problem tables do not pin down.
    """
    computed = {"min": stats.min, "max": stats.max, "mean": stats.mean}
    rows = {}
    all_match = True
    for key, ref in reference.items():
        got = computed[key]
        delta = got - ref
        ok = abs(delta) <= tolerance
        all_match = all_match and ok
        rows[key] = {
            "computed": got,
            "reference": ref,
            "delta": delta,
            "matches": ok,
        }
    return {"quantities": rows, "all_match": all_match, "tolerance": tolerance}


def _replay_duration(
    spec: AssemblySpec, sequence: tuple[int, ...], pickup_costs_change: bool
) -> float:
    """Independent slow-path duration via task_duration, for cross-checks."""
    done: set[int] = set()
    tool = 0
    total = 0.0
    for t in sequence:
        total += task_duration(spec, t, done, tool, pickup_costs_change)
        done.add(t)
        tool = spec.tool[t - 1]
    return total
