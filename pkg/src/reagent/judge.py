"""Structured judgments: the three-block text contract, a deterministic
heuristic oracle judge, and a pluggable external-judge client.

The oracle judge never reads a task's ground truth; it scores trajectories
purely from detectable flaws in reasoning and tool use.
"""

from __future__ import annotations

import enum
import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from typing import Callable

from .environment import count_malformed, infer_family, render_trajectory
from .records import RecordError, SCHEMA_VERSION
from .types import Judgment, Task, TaskFamily, Tool, Trajectory, normalize_answer


class FlawCode(enum.Enum):
    REPEATED_CALL = "repeated_call"
    MISSING_REQUIRED_TOOL = "missing_required_tool"
    UNVERIFIED_ANSWER = "unverified_answer"
    MALFORMED_CALL = "malformed_call"
    HALLUCINATED_RESOURCE = "hallucinated_resource"
    OVER_BUDGET = "over_budget"
    NO_ANSWER = "no_answer"


# Penalty weights in hundredths so scores stay exactly on the 0.01 grid.
DEFAULT_PENALTIES: dict[FlawCode, int] = {
    FlawCode.REPEATED_CALL: 20,
    FlawCode.MISSING_REQUIRED_TOOL: 30,
    FlawCode.UNVERIFIED_ANSWER: 15,
    FlawCode.MALFORMED_CALL: 15,
    FlawCode.HALLUCINATED_RESOURCE: 15,
    FlawCode.OVER_BUDGET: 15,
    FlawCode.NO_ANSWER: 40,
}

_REQUIRED_TOOL_WORDS = {
    TaskFamily.ARITHMETIC: "python_code",
    TaskFamily.LOOKUP: "search",
    TaskFamily.FILE_EXTRACT: "file_reader",
    TaskFamily.MULTI_HOP: "search then web_browse",
}

_CRITIQUE_TEMPLATES: dict[FlawCode, str] = {
    FlawCode.REPEATED_CALL: (
        "repeated identical tool call adds no new information; drop duplicates."
    ),
    FlawCode.MISSING_REQUIRED_TOOL: (
        "missing essential tool call: invoke {tools} on the task query before answering."
    ),
    FlawCode.UNVERIFIED_ANSWER: (
        "final answer is not grounded in any tool observation; verify it with a tool."
    ),
    FlawCode.MALFORMED_CALL: (
        "malformed tool call frame detected; emit complete call frames."
    ),
    FlawCode.HALLUCINATED_RESOURCE: (
        "a tool call referenced a missing resource; stick to the resources the task names."
    ),
    FlawCode.OVER_BUDGET: (
        "tool-use step budget exhausted; be more economical with calls."
    ),
    FlawCode.NO_ANSWER: (
        "no final answer produced; finish with an answer after gathering evidence."
    ),
}


class JudgmentParseError(ValueError):
    pass


class MissingBlock(JudgmentParseError):
    def __init__(self, name: str):
        super().__init__(f"missing block: <{name}>")
        self.block = name


class DuplicateBlock(JudgmentParseError):
    def __init__(self, name: str):
        super().__init__(f"duplicate block: <{name}>")
        self.block = name


class BlockOrder(JudgmentParseError):
    def __init__(self):
        super().__init__("blocks out of order; expected think, critique, score")


class EmptyBlock(JudgmentParseError):
    def __init__(self, name: str):
        super().__init__(f"empty block: <{name}>")
        self.block = name


class InvalidScore(JudgmentParseError):
    def __init__(self, fragment: str):
        super().__init__(f"invalid score: {fragment!r}")
        self.fragment = fragment


_BLOCKS = ("think", "critique", "score")
_SCORE_RE = re.compile(r"^\d+(\.\d{1,6})?$")


def parse_judgment(raw: str) -> Judgment:
    """Extract exactly one <think>, <critique>, <score> block, in order."""
    spans: dict[str, tuple[int, str]] = {}
    for name in _BLOCKS:
        matches = list(re.finditer(f"<{name}>(.*?)</{name}>", raw, re.DOTALL))
        if not matches:
            raise MissingBlock(name)
        if len(matches) > 1 or raw.count(f"<{name}>") > 1:
            raise DuplicateBlock(name)
        spans[name] = (matches[0].start(), matches[0].group(1))
    positions = [spans[name][0] for name in _BLOCKS]
    if positions != sorted(positions):
        raise BlockOrder()
    think, critique = spans["think"][1].strip(), spans["critique"][1].strip()
    if not think:
        raise EmptyBlock("think")
    if not critique:
        raise EmptyBlock("critique")
    fragment = spans["score"][1].strip()
    if not _SCORE_RE.match(fragment):
        raise InvalidScore(fragment)
    score = float(fragment)
    if score > 1.0:
        raise InvalidScore(fragment)
    return Judgment(think=think, critique=critique, score=score)


def _format_score(score: float) -> str:
    text = f"{score:.6f}".rstrip("0").rstrip(".")
    return text or "0"


def render_judgment(j: Judgment) -> str:
    """Inverse of parse_judgment for scores on the 1e-6 decimal grid."""
    return (
        f"<think>{j.think}</think>\n"
        f"<critique>{j.critique}</critique>\n"
        f"<score>{_format_score(j.score)}</score>"
    )


def detect_flaws(task: Task, traj: Trajectory,
                 step_budget: int = 13) -> list[FlawCode]:
    """All flaw detectors; reads the prompt and trajectory, never the
    ground truth."""
    flaws: list[FlawCode] = []
    calls = traj.tool_calls
    for a, b in zip(calls, calls[1:]):
        if a.tool is b.tool and a.args == b.args:
            flaws.append(FlawCode.REPEATED_CALL)
            break
    family = infer_family(task.prompt)
    if family is not None and _missing_required_tool(family, traj):
        flaws.append(FlawCode.MISSING_REQUIRED_TOOL)
    if traj.final_answer.strip():
        grounded = any(
            normalize_answer(c.observation) == normalize_answer(traj.final_answer)
            for c in calls
        )
        if not grounded:
            flaws.append(FlawCode.UNVERIFIED_ANSWER)
    else:
        flaws.append(FlawCode.NO_ANSWER)
    if count_malformed(traj) > 0:
        flaws.append(FlawCode.MALFORMED_CALL)
    if any(c.observation == "no results" or c.observation.startswith("error:")
           for c in calls):
        flaws.append(FlawCode.HALLUCINATED_RESOURCE)
    if len(calls) >= step_budget:
        flaws.append(FlawCode.OVER_BUDGET)
    return flaws


def _missing_required_tool(family: TaskFamily, traj: Trajectory) -> bool:
    tools = [c.tool for c in traj.tool_calls]
    if family is TaskFamily.ARITHMETIC:
        return Tool.PYTHON_CODE not in tools
    if family is TaskFamily.LOOKUP:
        return Tool.SEARCH not in tools
    if family is TaskFamily.FILE_EXTRACT:
        return Tool.FILE_READER not in tools
    if Tool.SEARCH not in tools or Tool.WEB_BROWSE not in tools:
        return True
    return tools.index(Tool.SEARCH) > len(tools) - 1 - tools[::-1].index(Tool.WEB_BROWSE)


def oracle_judge(task: Task, traj: Trajectory, *, step_budget: int = 13,
                 penalties: dict[FlawCode, int] | None = None) -> str:
    """Deterministic heuristic judge; output is well-formed three-block text."""
    penalties = DEFAULT_PENALTIES if penalties is None else penalties
    flaws = detect_flaws(task, traj, step_budget)
    think_lines = []
    for code in FlawCode:
        status = "flagged" if code in flaws else "ok"
        think_lines.append(f"check {code.value}: {status}")
    if flaws:
        family = infer_family(task.prompt)
        tools = _REQUIRED_TOOL_WORDS.get(family, "a relevant tool")
        critique = " ".join(
            _CRITIQUE_TEMPLATES[code].format(tools=tools) for code in flaws
        )
    else:
        critique = "none detected."
    pennies = max(0, min(100, 100 - sum(penalties[code] for code in flaws)))
    judgment = Judgment(
        think="\n".join(think_lines),
        critique=critique,
        score=pennies / 100.0,
    )
    return render_judgment(judgment)


class OracleJudgeBackend:
    """Local heuristic backend; pure and freely concurrent."""

    def __init__(self, step_budget: int = 13,
                 penalties: dict[FlawCode, int] | None = None):
        self.step_budget = step_budget
        self.penalties = penalties

    def raw_judgment(self, task: Task, traj: Trajectory) -> str:
        return oracle_judge(task, traj, step_budget=self.step_budget,
                            penalties=self.penalties)


class TransportError(RuntimeError):
    """Transient transport failure; the client will retry."""


class JudgeUnavailable(RuntimeError):
    """All transport retries exhausted."""


@dataclass
class ExternalJudgeBackend:
    """Transport-agnostic external judge client.

    ``transport`` receives {task_prompt, trajectory_text, template_id,
    timeout_s} and must return {"raw_text": ...}. Responses are cached by a
    content hash of (task prompt, rendered trajectory); transient transport
    failures are retried up to ``retries`` extra attempts.
    """

    transport: Callable[[dict], dict]
    timeout_s: float = 30.0
    retries: int = 2
    template_id: str = "three-block-v1"
    _cache: dict[str, str] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    @staticmethod
    def cache_key(task_prompt: str, trajectory_text: str) -> str:
        h = hashlib.blake2b(digest_size=16)
        h.update(task_prompt.encode())
        h.update(b"\x1e")
        h.update(trajectory_text.encode())
        return h.hexdigest()

    def raw_judgment(self, task: Task, traj: Trajectory) -> str:
        text = render_trajectory(traj)
        key = self.cache_key(task.prompt, text)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        request = {
            "task_prompt": task.prompt,
            "trajectory_text": text,
            "template_id": self.template_id,
            "timeout_s": self.timeout_s,
        }
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self.transport(request)
                raw = response["raw_text"]
                with self._lock:
                    self._cache[key] = raw
                return raw
            except TransportError as exc:
                last_error = exc
        raise JudgeUnavailable(f"transport failed after {self.retries + 1} attempts"
                               ) from last_error

    def save_cache(self, path) -> None:
        with self._lock, open(path, "w", encoding="utf-8") as fh:
            for key, raw in sorted(self._cache.items()):
                fh.write(json.dumps(
                    {"schema": SCHEMA_VERSION, "kind": "judge_cache",
                     "key": key, "raw": raw},
                    separators=(",", ":")) + "\n")

    def load_cache(self, path) -> None:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                if obj.get("schema") != SCHEMA_VERSION:
                    raise RecordError("field 'schema' has unsupported version")
                with self._lock:
                    self._cache[obj["key"]] = obj["raw"]


def judge(backend, task: Task, traj: Trajectory) -> Judgment:
    """Invoke a backend and parse its raw text; parse errors propagate."""
    return parse_judgment(backend.raw_judgment(task, traj))
