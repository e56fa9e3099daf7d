"""Append-only line-delimited metrics stream with a schema-checked record."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

METRIC_FIELDS = (
    "step", "J", "mean_reward", "mean_rule", "mean_model",
    "mean_KL", "clip_fraction", "grad_norm",
)


class MetricsSchemaError(ValueError):
    pass


def validate_metric(record: dict) -> None:
    for name in METRIC_FIELDS:
        if name not in record:
            raise MetricsSchemaError(f"missing field: {name}")
        value = record[name]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise MetricsSchemaError(f"field {name!r} must be numeric")


def format_metric(record: dict) -> str:
    validate_metric(record)
    return json.dumps({k: record[k] for k in METRIC_FIELDS},
                      separators=(",", ":")) + "\n"


def write_metrics(stream, record: dict) -> None:
    stream.write(format_metric(record))


@dataclass
class MetricsReadResult:
    records: list[dict] = field(default_factory=list)
    torn_tail: bool = False  # file ended mid-record (crash during write)


def read_metrics(path) -> MetricsReadResult:
    result = MetricsReadResult()
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    # a well-formed stream ends with a newline, so the final split item is ""
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            validate_metric(record)
        except (json.JSONDecodeError, MetricsSchemaError):
            if i == len(lines) - 1:
                result.torn_tail = True
                break
            raise
        result.records.append(record)
    return result
