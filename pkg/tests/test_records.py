import json

import pytest

from reagent.environment import generate_task
from reagent.records import (
    RecordError,
    SCHEMA_VERSION,
    deserialize_judgment,
    deserialize_task,
    deserialize_trajectory,
    read_lines,
    serialize_judgment,
    serialize_task,
    serialize_trajectory,
    write_records,
)
from reagent.types import Judgment, Stage, TaskFamily, Tool, ToolCall, Trajectory


def sample_trajectory():
    return Trajectory(
        task_id="lookup-1",
        stage=Stage.REFINED,
        actions=(1, 4, 10, 2, 3),
        tool_calls=(ToolCall(Tool.SEARCH, "amber isle", "cedar123"),),
        final_answer="cedar123",
        old_logp=(-0.1, -0.2, -0.3, -0.4, -0.5),
        context_fingerprint="ab" * 16,
    )


def test_task_roundtrip():
    task = generate_task(7, TaskFamily.MULTI_HOP)
    assert deserialize_task(serialize_task(task)) == task


def test_trajectory_roundtrip():
    traj = sample_trajectory()
    assert deserialize_trajectory(serialize_trajectory(traj)) == traj


def test_judgment_roundtrip():
    j = Judgment("looked fine", "none detected.", 0.85)
    assert deserialize_judgment(serialize_judgment(j, "t")) == j


def test_missing_field_names_the_field():
    blob = json.loads(serialize_task(generate_task(1, TaskFamily.LOOKUP)))
    del blob["prompt"]
    with pytest.raises(RecordError, match="prompt"):
        deserialize_task(json.dumps(blob))


def test_wrong_type_names_the_field():
    blob = json.loads(serialize_task(generate_task(1, TaskFamily.LOOKUP)))
    blob["env_seed"] = "not an int"
    with pytest.raises(RecordError, match="env_seed"):
        deserialize_task(json.dumps(blob))


def test_unknown_schema_version_rejected():
    blob = json.loads(serialize_task(generate_task(1, TaskFamily.LOOKUP)))
    blob["schema"] = SCHEMA_VERSION + 1
    with pytest.raises(RecordError, match="schema"):
        deserialize_task(json.dumps(blob))


def test_invalid_stage_tag_rejected():
    blob = json.loads(serialize_trajectory(sample_trajectory()))
    blob["stage"] = 3
    with pytest.raises(RecordError, match="stage"):
        deserialize_trajectory(json.dumps(blob))


def test_unknown_tool_rejected():
    blob = json.loads(serialize_trajectory(sample_trajectory()))
    blob["tool_calls"][0]["tool"] = "teleport"
    with pytest.raises(RecordError, match="tool"):
        deserialize_trajectory(json.dumps(blob))


def test_malformed_json_line():
    with pytest.raises(RecordError, match="malformed"):
        deserialize_task(b"{not json")


def test_out_of_range_score_rejected():
    blob = json.loads(serialize_judgment(Judgment("t", "c", 0.5)))
    blob["score"] = 1.5
    with pytest.raises(RecordError, match="score"):
        deserialize_judgment(json.dumps(blob))


def test_write_then_read_lines(tmp_path):
    tasks = [generate_task(i, TaskFamily.ARITHMETIC) for i in range(5)]
    path = tmp_path / "tasks.jsonl"
    write_records(path, (serialize_task(t) for t in tasks))
    back = [deserialize_task(line) for line in read_lines(path)]
    assert back == tasks
