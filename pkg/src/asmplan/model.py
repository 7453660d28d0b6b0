"""Assembly problem definition and exact task timing.

An assembly is a set of numbered tasks with precedence constraints, a
per-task base duration, pairwise duration corrections (doing task k first
can speed up or slow down task i later), and a tool assignment per task.
Switching tools between consecutive tasks costs a fixed extra time.

Task ids and tool ids are 1-based everywhere in the public API; vectors
and matrices are 0-indexed, so index ``j`` corresponds to task ``j + 1``.
Tool id 0 is reserved for "no tool in hand" (only meaningful as the
current-tool value before the first task).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "AssemblySpec",
    "IllegalActionError",
    "SpecValidationError",
    "builtin_airplane_spec",
    "load_spec",
    "spec_from_dict",
    "spec_to_dict",
    "task_duration",
    "legal_tasks",
]


class SpecValidationError(ValueError):
    """Raised when an assembly spec violates its invariants.

    The message names the offending location (field, task id, or matrix
    cell) so config errors are actionable.
    """


class IllegalActionError(ValueError):
    """Raised when a task is executed from a state where it is not legal."""


@dataclass(frozen=True)
class AssemblySpec:
    """Immutable description of one assembly problem instance.

    ``correction[k][i]`` (0-indexed) is the additive change to task
    ``i + 1``'s duration when task ``k + 1`` is already done.  Cells on the
    diagonal and cells where ``k + 1`` is a prerequisite of ``i + 1`` are
    zero: prerequisite effects are already folded into the base time.
    """

    num_tasks: int
    num_tools: int
    base_time: tuple[float, ...]
    tool: tuple[int, ...]
    tool_change_time: float
    predecessors: tuple[frozenset[int], ...]
    correction: tuple[tuple[float, ...], ...]
    task_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        _validate(self)

    # Derived arrays, cached per instance; safe on a frozen dataclass
    # because cached_property writes to __dict__ directly.

    @cached_property
    def base_time_arr(self) -> np.ndarray:
        return np.asarray(self.base_time, dtype=np.float64)

    @cached_property
    def correction_arr(self) -> np.ndarray:
        arr = np.asarray(self.correction, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @cached_property
    def tool_arr(self) -> np.ndarray:
        return np.asarray(self.tool, dtype=np.int64)

    @cached_property
    def predecessor_masks(self) -> tuple[int, ...]:
        """Per-task bitmask of direct predecessors (bit j = task j + 1)."""
        masks = []
        for preds in self.predecessors:
            m = 0
            for p in preds:
                m |= 1 << (p - 1)
            masks.append(m)
        return tuple(masks)

    @cached_property
    def transitive_predecessors(self) -> tuple[frozenset[int], ...]:
        closure: list[frozenset[int]] = [frozenset()] * self.num_tasks
        order = _topological_order(self)
        for t in order:
            full: set[int] = set()
            for p in self.predecessors[t - 1]:
                full.add(p)
                full.update(closure[p - 1])
            closure[t - 1] = frozenset(full)
        return tuple(closure)


def task_duration(
    spec: AssemblySpec,
    task: int,
    done: frozenset[int] | set[int],
    current_tool: int,
    pickup_costs_change: bool = True,
) -> float:
    """Exact duration of executing ``task`` from the given partial state.

    duration = base_time + sum of corrections from already-done tasks
    + tool change cost.  The tool change applies when the task's tool
    differs from ``current_tool``; with ``current_tool == 0`` (nothing in
    hand yet) the first pickup costs a change only if
    ``pickup_costs_change`` is set.

    Raises IllegalActionError if ``task`` is already done or its
    predecessors are not all done.
    """
    if task in done:
        raise IllegalActionError(f"task {task} is already done")
    missing = spec.predecessors[task - 1] - set(done)
    if missing:
        raise IllegalActionError(
            f"task {task} is not executable: missing predecessors {sorted(missing)}"
        )
    dur = spec.base_time[task - 1]
    col = task - 1
    for k in done:
        dur += spec.correction[k - 1][col]
    task_tool = spec.tool[task - 1]
    if task_tool != current_tool and (current_tool != 0 or pickup_costs_change):
        dur += spec.tool_change_time
    return dur


def legal_tasks(spec: AssemblySpec, done: frozenset[int] | set[int]) -> set[int]:
    """Tasks not yet done whose predecessors are all done."""
    done_set = set(done)
    return {
        t
        for t in range(1, spec.num_tasks + 1)
        if t not in done_set and spec.predecessors[t - 1] <= done_set
    }


def builtin_airplane_spec() -> AssemblySpec:
    """The 8-task, 2-tool toy airplane assembly used as the built-in case study.

    All constants (base times, precedence, pairwise corrections, tool
    assignments) are the measured values for this assembly; task 7 is the
    only task needing tool 2, and a tool change costs 2 time units.
    """
    corr = [[0.0] * 8 for _ in range(8)]
    corr[1][2] = -1.0   # task 3 after task 2
    corr[1][3] = -1.5   # task 4 after task 2
    corr[1][5] = -1.0   # task 6 after task 2
    corr[1][7] = 1.0    # task 8 after task 2
    corr[3][1] = -0.5   # task 2 after task 4
    corr[4][1] = -1.0   # task 2 after task 5
    corr[4][2] = -0.5   # task 3 after task 5
    corr[4][5] = -2.0   # task 6 after task 5
    corr[4][6] = 1.0    # task 7 after task 5
    return AssemblySpec(
        num_tasks=8,
        num_tools=2,
        base_time=(10.0, 7.0, 8.0, 6.0, 12.0, 8.0, 11.0, 9.0),
        tool=(1, 1, 1, 1, 1, 1, 2, 1),
        tool_change_time=2.0,
        predecessors=(
            frozenset(),
            frozenset({1}),
            frozenset({1}),
            frozenset({1}),
            frozenset({1, 4}),
            frozenset({1}),
            frozenset(),
            frozenset(),
        ),
        correction=tuple(tuple(row) for row in corr),
        task_names=(
            "front wheels on front support",
            "front support on lower body",
            "rear wheels on rear body",
            "rear body on lower body",
            "upper body on lower body",
            "cockpit window",
            "propeller on support",
            "wings on lower body",
        ),
    )


def spec_from_dict(doc: dict, source: str = "<dict>") -> AssemblySpec:
    """Build a validated AssemblySpec from the JSON document structure."""

    def fail(loc: str, msg: str):
        raise SpecValidationError(f"{source}: {loc}: {msg}")

    def require(key: str, kind, loc: str = ""):
        if key not in doc:
            fail(loc or key, "missing required field")
        val = doc[key]
        if kind is float:
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                fail(loc or key, f"expected a number, got {type(val).__name__}")
            return float(val)
        if not isinstance(val, kind):
            fail(loc or key, f"expected {kind.__name__}, got {type(val).__name__}")
        return val

    n = require("num_tasks", int)
    n_tools = require("num_tools", int)
    if n < 1:
        fail("num_tasks", "must be >= 1")
    if n_tools < 1:
        fail("num_tools", "must be >= 1")

    base_raw = require("base_time", list)
    if len(base_raw) != n:
        fail("base_time", f"expected {n} entries, got {len(base_raw)}")
    base = []
    for i, v in enumerate(base_raw):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            fail(f"base_time[{i}]", "expected a number")
        base.append(float(v))

    tool_raw = require("tool", list)
    if len(tool_raw) != n:
        fail("tool", f"expected {n} entries, got {len(tool_raw)}")
    tools = []
    for i, v in enumerate(tool_raw):
        if not isinstance(v, int) or isinstance(v, bool):
            fail(f"tool[{i}]", "expected an integer tool id")
        tools.append(v)

    tct = require("tool_change_time", float)

    preds_raw = require("predecessors", dict)
    preds: list[frozenset[int]] = [frozenset()] * n
    for key, lst in preds_raw.items():
        try:
            t = int(key)
        except ValueError:
            fail(f"predecessors.{key}", "task key must be an integer")
        if not 1 <= t <= n:
            fail(f"predecessors.{key}", f"task id out of range 1..{n}")
        if not isinstance(lst, list):
            fail(f"predecessors.{key}", "expected a list of task ids")
        for p in lst:
            if not isinstance(p, int) or isinstance(p, bool) or not 1 <= p <= n:
                fail(f"predecessors.{key}", f"predecessor {p!r} out of range 1..{n}")
        preds[t - 1] = frozenset(lst)

    corr_raw = require("correction", list)
    if len(corr_raw) != n:
        fail("correction", f"expected {n} rows, got {len(corr_raw)}")
    corr = []
    for k, row in enumerate(corr_raw):
        if not isinstance(row, list) or len(row) != n:
            fail(f"correction[{k}]", f"expected a row of {n} numbers")
        vals = []
        for i, v in enumerate(row):
            if not isinstance(v, (int, float)) or isinstance(v, bool):
                fail(f"correction[{k}][{i}]", "expected a number")
            vals.append(float(v))
        corr.append(tuple(vals))

    names = None
    if "task_names" in doc and doc["task_names"] is not None:
        names_raw = require("task_names", list)
        if len(names_raw) != n:
            fail("task_names", f"expected {n} entries, got {len(names_raw)}")
        names = tuple(str(s) for s in names_raw)

    try:
        return AssemblySpec(
            num_tasks=n,
            num_tools=n_tools,
            base_time=tuple(base),
            tool=tuple(tools),
            tool_change_time=tct,
            predecessors=tuple(preds),
            correction=tuple(corr),
            task_names=names,
        )
    except SpecValidationError as exc:
        raise SpecValidationError(f"{source}: {exc}") from None


def spec_to_dict(spec: AssemblySpec) -> dict:
    """Inverse of spec_from_dict (drops empty predecessor entries)."""
    doc: dict = {
        "num_tasks": spec.num_tasks,
        "num_tools": spec.num_tools,
        "base_time": list(spec.base_time),
        "tool": list(spec.tool),
        "tool_change_time": spec.tool_change_time,
        "predecessors": {
            str(t + 1): sorted(preds)
            for t, preds in enumerate(spec.predecessors)
            if preds
        },
        "correction": [list(row) for row in spec.correction],
    }
    if spec.task_names is not None:
        doc["task_names"] = list(spec.task_names)
    return doc


def load_spec(path: str | Path) -> AssemblySpec:
    """Load and validate an assembly spec from a JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecValidationError(f"{path}: cannot read spec file: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecValidationError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SpecValidationError(f"{path}: top-level value must be an object")
    return spec_from_dict(doc, source=str(path))


def _topological_order(spec: AssemblySpec) -> list[int]:
    """Tasks in some precedence-respecting order; raises on cycles."""
    indeg = {t: len(spec.predecessors[t - 1]) for t in range(1, spec.num_tasks + 1)}
    successors: dict[int, list[int]] = {t: [] for t in indeg}
    for t in indeg:
        for p in spec.predecessors[t - 1]:
            successors[p].append(t)
    ready = sorted(t for t, d in indeg.items() if d == 0)
    order: list[int] = []
    while ready:
        t = ready.pop(0)
        order.append(t)
        for s in successors[t]:
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
        ready.sort()
    if len(order) != spec.num_tasks:
        stuck = sorted(t for t, d in indeg.items() if d > 0)
        raise SpecValidationError(f"precedence cycle involving tasks {stuck}")
    return order


def _validate(spec: AssemblySpec) -> None:
    n = spec.num_tasks
    if n < 1:
        raise SpecValidationError("num_tasks: must be >= 1")
    if spec.num_tools < 1:
        raise SpecValidationError("num_tools: must be >= 1")
    if len(spec.base_time) != n:
        raise SpecValidationError(f"base_time: expected {n} entries")
    for i, b in enumerate(spec.base_time):
        if not b > 0:
            raise SpecValidationError(f"base_time[{i}]: must be > 0, got {b}")
    if len(spec.tool) != n:
        raise SpecValidationError(f"tool: expected {n} entries")
    for i, t in enumerate(spec.tool):
        if not 1 <= t <= spec.num_tools:
            raise SpecValidationError(
                f"tool[{i}]: tool id {t} out of range 1..{spec.num_tools}"
            )
    if spec.tool_change_time < 0:
        raise SpecValidationError("tool_change_time: must be >= 0")
    if len(spec.predecessors) != n:
        raise SpecValidationError(f"predecessors: expected {n} entries")
    for t in range(1, n + 1):
        for p in spec.predecessors[t - 1]:
            if not 1 <= p <= n:
                raise SpecValidationError(
                    f"predecessors.{t}: task id {p} out of range 1..{n}"
                )
            if p == t:
                raise SpecValidationError(f"predecessors.{t}: task depends on itself")
    if len(spec.correction) != n or any(len(row) != n for row in spec.correction):
        raise SpecValidationError(f"correction: expected a {n}x{n} matrix")
    for k in range(n):
        if spec.correction[k][k] != 0.0:
            raise SpecValidationError(
                f"correction[{k + 1}][{k + 1}]: diagonal must be 0, "
                f"got {spec.correction[k][k]}"
            )
    for i in range(1, n + 1):
        for p in spec.predecessors[i - 1]:
            if spec.correction[p - 1][i - 1] != 0.0:
                raise SpecValidationError(
                    f"correction[{p}][{i}]: must be 0 because task {p} is a "
                    f"prerequisite of task {i} (its effect belongs in base_time)"
                )
    _topological_order(spec)  # raises on cycles
