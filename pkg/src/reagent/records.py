"""Line-delimited, schema-versioned record serialization.

One JSON object per line so corpora diff cleanly. Every record carries a
mandatory ``schema`` field; decoders reject unknown versions and report the
offending field on malformed input.
"""

from __future__ import annotations

import json
from typing import Any, Iterable, Iterator

from .types import Judgment, Stage, Task, TaskFamily, Tool, ToolCall, Trajectory

SCHEMA_VERSION = 1


class RecordError(ValueError):
    """Raised when a record cannot be decoded; message names the bad field."""


def _require(obj: dict, key: str, kind: type) -> Any:
    if key not in obj:
        raise RecordError(f"missing field: {key}")
    value = obj[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise RecordError(f"field {key!r} has wrong type: expected {kind.__name__}")
    return value


def _load_line(line: bytes | str) -> dict:
    if isinstance(line, bytes):
        line = line.decode("utf-8", errors="replace")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordError(f"malformed record line: {exc}") from exc
    if not isinstance(obj, dict):
        raise RecordError("record is not an object")
    schema = _require(obj, "schema", int)
    if schema != SCHEMA_VERSION:
        raise RecordError(f"field 'schema' has unsupported version {schema}")
    return obj


def serialize_task(task: Task) -> bytes:
    rec = {
        "schema": SCHEMA_VERSION,
        "kind": "task",
        "id": task.id,
        "family": task.family.value,
        "prompt": task.prompt,
        "ground_truth": task.ground_truth,
        "env_seed": task.env_seed,
    }
    return (json.dumps(rec, separators=(",", ":")) + "\n").encode()


def deserialize_task(data: bytes | str) -> Task:
    obj = _load_line(data)
    try:
        family = TaskFamily(_require(obj, "family", str))
    except ValueError as exc:
        raise RecordError(f"field 'family' has unknown value: {obj.get('family')}") from exc
    return Task(
        id=_require(obj, "id", str),
        family=family,
        prompt=_require(obj, "prompt", str),
        ground_truth=_require(obj, "ground_truth", str),
        env_seed=_require(obj, "env_seed", int),
    )


def serialize_trajectory(traj: Trajectory) -> bytes:
    rec = {
        "schema": SCHEMA_VERSION,
        "kind": "trajectory",
        "task_id": traj.task_id,
        "stage": traj.stage.value,
        "actions": list(traj.actions),
        "tool_calls": [
            {"tool": c.tool.value, "args": c.args, "observation": c.observation}
            for c in traj.tool_calls
        ],
        "final_answer": traj.final_answer,
        "old_logp": list(traj.old_logp),
        "context_fingerprint": traj.context_fingerprint,
    }
    return (json.dumps(rec, separators=(",", ":")) + "\n").encode()


def deserialize_trajectory(data: bytes | str) -> Trajectory:
    obj = _load_line(data)
    stage_tag = _require(obj, "stage", int)
    try:
        stage = Stage(stage_tag)
    except ValueError as exc:
        raise RecordError(f"field 'stage' has invalid tag {stage_tag}") from exc
    actions = _require(obj, "actions", list)
    if not all(isinstance(a, int) for a in actions):
        raise RecordError("field 'actions' must contain integers")
    old_logp = _require(obj, "old_logp", list)
    if not all(isinstance(x, (int, float)) for x in old_logp):
        raise RecordError("field 'old_logp' must contain reals")
    calls = []
    for i, c in enumerate(_require(obj, "tool_calls", list)):
        if not isinstance(c, dict):
            raise RecordError(f"field 'tool_calls[{i}]' is not an object")
        try:
            tool = Tool(_require(c, "tool", str))
        except ValueError as exc:
            raise RecordError(f"field 'tool_calls[{i}].tool' unknown: {c.get('tool')}") from exc
        calls.append(ToolCall(tool, _require(c, "args", str), _require(c, "observation", str)))
    try:
        return Trajectory(
            task_id=_require(obj, "task_id", str),
            stage=stage,
            actions=tuple(actions),
            tool_calls=tuple(calls),
            final_answer=_require(obj, "final_answer", str),
            old_logp=tuple(float(x) for x in old_logp),
            context_fingerprint=_require(obj, "context_fingerprint", str),
        )
    except ValueError as exc:
        raise RecordError(str(exc)) from exc


def serialize_judgment(j: Judgment, task_id: str = "") -> bytes:
    rec = {
        "schema": SCHEMA_VERSION,
        "kind": "judgment",
        "task_id": task_id,
        "think": j.think,
        "critique": j.critique,
        "score": j.score,
    }
    return (json.dumps(rec, separators=(",", ":")) + "\n").encode()


def deserialize_judgment(data: bytes | str) -> Judgment:
    obj = _load_line(data)
    try:
        return Judgment(
            think=_require(obj, "think", str),
            critique=_require(obj, "critique", str),
            score=_require(obj, "score", float),
        )
    except ValueError as exc:
        raise RecordError(f"field 'score' invalid: {exc}") from exc


def write_records(path, blobs: Iterable[bytes]) -> None:
    with open(path, "wb") as fh:
        for blob in blobs:
            fh.write(blob)


def read_lines(path) -> Iterator[bytes]:
    with open(path, "rb") as fh:
        for line in fh:
            if line.strip():
                yield line
