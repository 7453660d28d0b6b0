import json
from importlib import resources

import pytest
from hypothesis import given, strategies as st

from asmplan.model import (
    AssemblySpec,
    IllegalActionError,
    SpecValidationError,
    builtin_airplane_spec,
    legal_tasks,
    load_spec,
    spec_from_dict,
    spec_to_dict,
    task_duration,
)


@pytest.fixture(scope="module")
def airplane():
    return builtin_airplane_spec()


def test_airplane_base_times(airplane):
    assert airplane.base_time == (10.0, 7.0, 8.0, 6.0, 12.0, 8.0, 11.0, 9.0)


def test_airplane_precedence(airplane):
    assert airplane.predecessors[5 - 1] == {1, 4}
    assert airplane.predecessors[7 - 1] == frozenset()
    assert airplane.predecessors[8 - 1] == frozenset()
    for t in (2, 3, 4, 6):
        assert airplane.predecessors[t - 1] == {1}


def test_airplane_corrections(airplane):
    c = airplane.correction
    assert c[2 - 1][4 - 1] == -1.5
    assert c[5 - 1][6 - 1] == -2.0
    assert c[2 - 1][8 - 1] == 1.0
    assert c[2 - 1][3 - 1] == -1.0
    assert c[2 - 1][6 - 1] == -1.0
    assert c[4 - 1][2 - 1] == -0.5
    assert c[5 - 1][2 - 1] == -1.0
    assert c[5 - 1][3 - 1] == -0.5
    assert c[5 - 1][7 - 1] == 1.0
    # rows for tasks 1, 3, 6, 7, 8 done contribute nothing
    for k in (1, 3, 6, 7, 8):
        assert all(v == 0.0 for v in c[k - 1])


def test_airplane_tools(airplane):
    assert airplane.tool == (1, 1, 1, 1, 1, 1, 2, 1)
    assert airplane.tool_change_time == 2.0
    assert airplane.num_tasks == 8
    assert airplane.num_tools == 2


def test_task_duration_examples(airplane):
    assert task_duration(airplane, 5, {1, 4}, 1) == 12.0
    assert task_duration(airplane, 2, {1, 5}, 1) == 6.0
    assert task_duration(airplane, 7, {1}, 1) == 13.0


def test_task_duration_pickup_convention(airplane):
    # from the no-tool start state the first pickup is a flag choice
    assert task_duration(airplane, 1, set(), 0, pickup_costs_change=True) == 12.0
    assert task_duration(airplane, 1, set(), 0, pickup_costs_change=False) == 10.0
    # once a tool is held the flag is irrelevant
    assert task_duration(airplane, 7, {1}, 1, pickup_costs_change=False) == 13.0


def test_task_duration_rejects_illegal(airplane):
    with pytest.raises(IllegalActionError):
        task_duration(airplane, 5, {1}, 1)  # 4 missing
    with pytest.raises(IllegalActionError):
        task_duration(airplane, 1, {1, 7}, 1)  # already done


def test_legal_tasks_examples(airplane):
    assert legal_tasks(airplane, set()) == {1, 7, 8}
    assert legal_tasks(airplane, {1}) == {2, 3, 4, 6, 7, 8}
    assert legal_tasks(airplane, set(range(1, 9))) == set()


def test_full_sequence_total(airplane):
    # executing 1..8 in id order under the pickup-costs-change convention
    done: set[int] = set()
    tool = 0
    total = 0.0
    for t in range(1, 9):
        total += task_duration(airplane, t, done, tool)
        done.add(t)
        tool = airplane.tool[t - 1]
    assert total == 73.5


def test_roundtrip_builtin(tmp_path, airplane):
    path = tmp_path / "airplane.json"
    path.write_text(json.dumps(spec_to_dict(airplane)))
    assert load_spec(path) == airplane


def test_shipped_reference_file_matches_builtin(airplane):
    ref = resources.files("asmplan.data") / "airplane_spec.json"
    loaded = spec_from_dict(json.loads(ref.read_text()), source="airplane_spec.json")
    assert loaded == airplane


def test_load_spec_cycle(tmp_path, airplane):
    doc = spec_to_dict(airplane)
    doc["predecessors"]["1"] = [2]  # 1 -> 2 -> 1
    path = tmp_path / "cyclic.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SpecValidationError, match="cycle"):
        load_spec(path)


def test_load_spec_nonzero_diagonal(tmp_path, airplane):
    doc = spec_to_dict(airplane)
    doc["correction"][2][2] = 1.0
    path = tmp_path / "diag.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SpecValidationError, match=r"correction\[3\]\[3\]"):
        load_spec(path)


def test_load_spec_bad_index(tmp_path, airplane):
    doc = spec_to_dict(airplane)
    doc["predecessors"]["2"] = [9]
    path = tmp_path / "idx.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SpecValidationError, match="out of range"):
        load_spec(path)


def test_load_spec_negative_base_time(tmp_path, airplane):
    doc = spec_to_dict(airplane)
    doc["base_time"][0] = -3.0
    path = tmp_path / "neg.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SpecValidationError, match=r"base_time\[0\]"):
        load_spec(path)


def test_load_spec_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(SpecValidationError, match="invalid JSON"):
        load_spec(path)


def test_prerequisite_correction_must_be_zero(airplane):
    doc = spec_to_dict(airplane)
    doc["correction"][0][1] = -1.0  # task 1 is a prerequisite of task 2
    with pytest.raises(SpecValidationError, match=r"correction\[1\]\[2\]"):
        spec_from_dict(doc)


def _random_prefix(spec, rng_choices):
    """Grow a prefix-closed done set by always picking a legal task."""
    done: set[int] = set()
    for choice in rng_choices:
        legal = sorted(legal_tasks(spec, done))
        if not legal:
            break
        done.add(legal[choice % len(legal)])
    return done


@given(st.lists(st.integers(min_value=0, max_value=7), max_size=8))
def test_legal_tasks_respect_precedence(choices):
    spec = builtin_airplane_spec()
    done = _random_prefix(spec, choices)
    for t in legal_tasks(spec, done):
        assert spec.predecessors[t - 1] <= done
        assert t not in done


@given(
    st.lists(st.integers(min_value=0, max_value=7), max_size=6),
    st.integers(min_value=0, max_value=2),
)
def test_duration_additive_in_done_set(choices, tool):
    spec = builtin_airplane_spec()
    done = _random_prefix(spec, choices)
    legal = sorted(legal_tasks(spec, done))
    if len(legal) < 2:
        return
    extra, target = legal[0], legal[1]
    base = task_duration(spec, target, done, tool)
    after = task_duration(spec, target, done | {extra}, tool)
    assert after - base == pytest.approx(spec.correction[extra - 1][target - 1])


def test_no_corrections_single_tool_gives_base_time():
    spec = AssemblySpec(
        num_tasks=3,
        num_tools=1,
        base_time=(4.0, 5.0, 6.0),
        tool=(1, 1, 1),
        tool_change_time=2.0,
        predecessors=(frozenset(), frozenset(), frozenset()),
        correction=tuple(tuple([0.0] * 3) for _ in range(3)),
    )
    for t in (1, 2, 3):
        others = {x for x in (1, 2, 3) if x != t}
        assert task_duration(spec, t, others, 1) == spec.base_time[t - 1]
