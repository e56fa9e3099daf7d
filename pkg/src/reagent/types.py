"""Shared domain types: tasks, trajectories, judgments, and reward breakdowns.

All types are plain frozen dataclasses; once constructed they are immutable
and safe to share between threads.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field


class TaskFamily(enum.Enum):
    ARITHMETIC = "arithmetic"
    LOOKUP = "lookup"
    FILE_EXTRACT = "file_extract"
    MULTI_HOP = "multi_hop"


class Tool(enum.Enum):
    SEARCH = "search"
    WEB_BROWSE = "web_browse"
    PYTHON_CODE = "python_code"
    FILE_READER = "file_reader"
    IMAGE_DESCRIPTOR = "image_descriptor"
    AUDIO_CONVERTER = "audio_converter"


class Stage(enum.Enum):
    FIRST = 1
    REFINED = 2


_WS = re.compile(r"\s+")


def normalize_answer(raw: str) -> str:
    """Canonical answer form: lowercase, collapsed whitespace, no trailing period."""
    out = _WS.sub(" ", raw.strip()).lower()
    if out.endswith("."):
        out = out[:-1].rstrip()
    return out


@dataclass(frozen=True)
class Task:
    id: str
    family: TaskFamily
    prompt: str
    ground_truth: str
    env_seed: int

    def __post_init__(self) -> None:
        if not self.ground_truth:
            raise ValueError("ground_truth must be non-empty")
        if self.ground_truth != normalize_answer(self.ground_truth):
            raise ValueError("ground_truth must be normalized")


@dataclass(frozen=True)
class ToolCall:
    tool: Tool
    args: str
    observation: str = ""

    def completed(self, observation: str) -> "ToolCall":
        return ToolCall(self.tool, self.args, observation)


@dataclass(frozen=True)
class Trajectory:
    task_id: str
    stage: Stage
    actions: tuple[int, ...]
    tool_calls: tuple[ToolCall, ...]
    final_answer: str
    old_logp: tuple[float, ...]
    context_fingerprint: str

    def __post_init__(self) -> None:
        if len(self.old_logp) != len(self.actions):
            raise ValueError("old_logp must align with actions")


@dataclass(frozen=True)
class Judgment:
    think: str
    critique: str
    score: float

    def __post_init__(self) -> None:
        if not self.think.strip():
            raise ValueError("think must be non-empty")
        if not self.critique.strip():
            raise ValueError("critique must be non-empty")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score out of range [0, 1]: {self.score}")


@dataclass(frozen=True)
class RewardBreakdown:
    rule: float
    model: float
    lam: float
    combined: float

    def __post_init__(self) -> None:
        if self.rule not in (0.0, 1.0):
            raise ValueError(f"rule reward must be 0 or 1, got {self.rule}")
        if not (0.0 <= self.model <= 1.0):
            raise ValueError(f"model reward out of range: {self.model}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0: {self.lam}")
        if self.combined != self.rule + self.lam * self.model:
            raise ValueError("combined must equal rule + lam * model exactly")
