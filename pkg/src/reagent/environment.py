"""Deterministic synthetic tasks, the six mock tools, and the episode runner.

All tool observations are pure functions of the task's env_seed; the same
(policy, task, seed, temperature, caps) always reproduces the same
trajectory.
"""

from __future__ import annotations

import ast
import hashlib
import random
from dataclasses import dataclass, field, replace

import numpy as np

from . import grammar
from .grammar import (
    ANSWER,
    ARG_FOLLOW,
    ARG_QUERY,
    CALL_CLOSE,
    CALL_OPEN,
    EOS,
    MALFORMED_OBSERVATION,
    TOOL_SYMBOL,
    Decoder,
)
from .policy import Context, PolicyParams, _log_softmax, _step_logits
from .types import Stage, Task, TaskFamily, Tool, ToolCall, Trajectory

DEFAULT_TRAIN_MAX_STEPS = 13
DEFAULT_EVAL_MAX_STEPS = 30
DEFAULT_MAX_LEN = 24

_ADJECTIVES = [
    "amber", "brisk", "cobalt", "dusky", "ember", "frosted", "gilded",
    "hollow", "ivory", "jade", "keen", "lunar", "mossy", "northern",
    "opal", "pale", "quiet", "rusted", "silver", "tidal",
]
_NOUNS = [
    "archive", "beacon", "canyon", "delta", "estuary", "fjord", "grove",
    "harbor", "isle", "junction", "knoll", "lagoon", "meadow", "nexus",
    "orchard", "plateau", "quarry", "ridge", "summit", "terrace",
]
_CODEWORDS = [
    "basalt", "cedar", "dynamo", "falcon", "garnet", "helix", "indigo",
    "juniper", "krypton", "lattice", "magnet", "nimbus", "onyx", "prism",
    "quartz", "rotor", "saffron", "topaz", "umber", "vertex",
]


class StepBudgetError(RuntimeError):
    """Raised when a tool call is attempted with no remaining steps."""


class ArithmeticEvalError(ValueError):
    pass


_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)


def evaluate_arithmetic(expr: str) -> str:
    """Safe evaluator for integer +,-,*,/ expressions; never executes code."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ArithmeticEvalError(f"syntax error: {exc.msg}") from exc

    def ev(node) -> float:
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return float(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            left, right = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if right == 0:
                raise ArithmeticEvalError("division by zero")
            return left / right
        raise ArithmeticEvalError(f"unsupported syntax: {ast.dump(node)[:40]}")

    value = ev(tree)
    if value == int(value):
        return str(int(value))
    return repr(value)


@dataclass
class KnowledgeBase:
    search: dict[str, str] = field(default_factory=dict)
    pages: dict[str, str] = field(default_factory=dict)
    files: dict[str, str] = field(default_factory=dict)
    images: dict[str, str] = field(default_factory=dict)
    audio: dict[str, str] = field(default_factory=dict)


def _derive_env_seed(seed: int, family: TaskFamily) -> int:
    digest = hashlib.blake2b(f"{seed}:{family.value}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _kb_rng(env_seed: int) -> random.Random:
    return random.Random(f"kb:{env_seed}")


def _fresh_answer(rng: random.Random) -> str:
    return f"{rng.choice(_CODEWORDS)}{rng.randrange(10000, 99999)}"


def build_kb(task: Task) -> KnowledgeBase:
    """All mock-tool contents, derived solely from the task's env_seed."""
    rng = _kb_rng(task.env_seed)
    kb = KnowledgeBase()
    payload = grammar.prompt_payload(task.prompt)
    if task.family is TaskFamily.LOOKUP:
        kb.search[payload] = task.ground_truth
    elif task.family is TaskFamily.FILE_EXTRACT:
        kb.files[payload] = task.ground_truth
    elif task.family is TaskFamily.MULTI_HOP:
        url = f"url://page{rng.randrange(100, 999)}"
        kb.search[payload] = f"see {url}"
        kb.pages[url] = task.ground_truth
    # distractor and media entries, seeded
    for _ in range(2):
        key = f"{rng.choice(_ADJECTIVES)} {rng.choice(_NOUNS)}"
        kb.search.setdefault(key, _fresh_answer(rng))
    kb.files.setdefault(f"notes_{rng.randrange(100, 999)}.txt", _fresh_answer(rng))
    kb.images[f"img_{rng.randrange(100, 999)}.png"] = (
        f"a photo of the {rng.choice(_ADJECTIVES)} {rng.choice(_NOUNS)}"
    )
    kb.audio[f"clip_{rng.randrange(100, 999)}.wav"] = (
        f"transcript: the code is {_fresh_answer(rng)}"
    )
    return kb


def generate_task(seed: int, family: TaskFamily) -> Task:
    """Deterministic synthetic task, solvable in at most four tool calls."""
    rng = random.Random(f"task:{seed}:{family.value}")
    env_seed = _derive_env_seed(seed, family)
    task_id = f"{family.value}-{seed}"
    if family is TaskFamily.ARITHMETIC:
        a, b, c = rng.randrange(2, 50), rng.randrange(2, 20), rng.randrange(1, 99)
        op = rng.choice(["+", "-"])
        expr = f"{a}*{b}{op}{c}"
        return Task(task_id, family, f"compute: {expr}", evaluate_arithmetic(expr), env_seed)
    kb_rng = _kb_rng(env_seed)
    answer = _fresh_answer(kb_rng)  # first kb draw doubles as the hidden answer
    if family is TaskFamily.LOOKUP:
        key = f"{rng.choice(_ADJECTIVES)} {rng.choice(_NOUNS)}"
        return Task(task_id, family, f"look up: {key}", answer, env_seed)
    if family is TaskFamily.FILE_EXTRACT:
        filename = f"report_{rng.randrange(100, 999)}.txt"
        return Task(task_id, family, f"read file: {filename}", answer, env_seed)
    if family is TaskFamily.MULTI_HOP:
        key = f"{rng.choice(_ADJECTIVES)} {rng.choice(_NOUNS)}"
        return Task(task_id, family, f"find: {key}", answer, env_seed)
    raise ValueError(f"unknown family: {family}")


@dataclass
class EnvState:
    task: Task
    remaining_steps: int
    kb: KnowledgeBase
    transcript: list[ToolCall] = field(default_factory=list)

    @classmethod
    def for_task(cls, task: Task, max_steps: int) -> "EnvState":
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        return cls(task=task, remaining_steps=max_steps, kb=build_kb(task))


def execute_tool(state: EnvState, call: ToolCall) -> str:
    """Run one mock tool; misses yield 'no results', never an exception."""
    if state.remaining_steps <= 0:
        raise StepBudgetError("tool-use step budget exhausted")
    kb = state.kb
    if call.tool is Tool.SEARCH:
        obs = kb.search.get(call.args, "no results")
    elif call.tool is Tool.WEB_BROWSE:
        obs = kb.pages.get(call.args, "no results")
    elif call.tool is Tool.PYTHON_CODE:
        try:
            obs = evaluate_arithmetic(call.args)
        except ArithmeticEvalError as exc:
            obs = f"error: {exc}"
    elif call.tool is Tool.FILE_READER:
        obs = kb.files.get(call.args, "no results")
    elif call.tool is Tool.IMAGE_DESCRIPTOR:
        obs = kb.images.get(call.args, "no results")
    else:
        obs = kb.audio.get(call.args, "no results")
    state.remaining_steps -= 1
    state.transcript.append(call.completed(obs))
    return obs


class SoftmaxSampler:
    """Token policy backed by PolicyParams, sampling at a fixed temperature."""

    def __init__(self, params: PolicyParams):
        self.params = params

    def next_token(self, ctx: Context, temperature: float,
                   rng: np.random.Generator) -> tuple[int, float]:
        idx = ctx.feature_indices(self.params.feature_dim)
        logsm = _log_softmax(_step_logits(self.params, idx) / temperature)
        a = int(rng.choice(self.params.vocab_size, p=np.exp(logsm)))
        return a, float(logsm[a])


_FAMILY_PLANS = {
    TaskFamily.ARITHMETIC: [
        CALL_OPEN, TOOL_SYMBOL[Tool.PYTHON_CODE], ARG_QUERY, CALL_CLOSE, ANSWER,
    ],
    TaskFamily.LOOKUP: [
        CALL_OPEN, TOOL_SYMBOL[Tool.SEARCH], ARG_QUERY, CALL_CLOSE, ANSWER,
    ],
    TaskFamily.FILE_EXTRACT: [
        CALL_OPEN, TOOL_SYMBOL[Tool.FILE_READER], ARG_QUERY, CALL_CLOSE, ANSWER,
    ],
    TaskFamily.MULTI_HOP: [
        CALL_OPEN, TOOL_SYMBOL[Tool.SEARCH], ARG_QUERY, CALL_CLOSE,
        CALL_OPEN, TOOL_SYMBOL[Tool.WEB_BROWSE], ARG_FOLLOW, CALL_CLOSE, ANSWER,
    ],
}


class ScriptedAgent:
    """Hand-coded per-family agent; used to prove every task is solvable."""

    def __init__(self, task: Task):
        self._plan = iter(_FAMILY_PLANS[task.family])

    def next_token(self, ctx: Context, temperature: float, rng) -> tuple[int, float]:
        return next(self._plan, EOS), 0.0


def run_episode(policy, task: Task, *, ctx: Context | None = None,
                max_steps: int = DEFAULT_TRAIN_MAX_STEPS,
                temperature: float = 0.7,
                max_len: int = DEFAULT_MAX_LEN,
                rng: np.random.Generator | None = None,
                stage: Stage = Stage.FIRST) -> Trajectory:
    """Alternate policy emission and tool execution until a final answer,
    <eos>, step exhaustion, or the token cap."""
    if isinstance(policy, PolicyParams):
        policy = SoftmaxSampler(policy)
    if rng is None:
        rng = np.random.default_rng(0)
    base_ctx = ctx.copy() if ctx is not None else Context(prompt=task.prompt)
    fingerprint = base_ctx.fingerprint()
    state = EnvState.for_task(task, max_steps)
    decoder = Decoder()
    ctx = base_ctx
    actions: list[int] = []
    logps: list[float] = []
    final_answer = ""
    while len(actions) < max_len:
        a, lp = policy.next_token(ctx, temperature, rng)
        actions.append(a)
        logps.append(lp)
        ctx.add_action(a)
        event = decoder.feed(a)
        if isinstance(event, grammar.CallEvent):
            if state.remaining_steps <= 0:
                break
            last_obs = ctx.observations[-1] if ctx.observations else ""
            args = grammar.resolve_argument(event, task.prompt, last_obs)
            obs = execute_tool(state, ToolCall(event.tool, args))
            ctx.add_observation(obs)
        elif isinstance(event, grammar.MalformedEvent):
            ctx.add_observation(MALFORMED_OBSERVATION)
        elif isinstance(event, grammar.AnswerEvent):
            final_answer = ctx.observations[-1] if ctx.observations else ""
            break
        elif isinstance(event, grammar.EndEvent):
            break
    return Trajectory(
        task_id=task.id,
        stage=stage,
        actions=tuple(actions),
        tool_calls=tuple(state.transcript),
        final_answer=final_answer,
        old_logp=tuple(logps),
        context_fingerprint=fingerprint,
    )


def replay_feature_indices(base_ctx: Context, traj: Trajectory,
                           feature_dim: int) -> list[np.ndarray]:
    """Per-token feature indices of a recorded trajectory, rebuilt from the
    stored actions and observations without re-running any tool."""
    ctx = base_ctx.copy()
    decoder = Decoder()
    calls = iter(traj.tool_calls)
    out: list[np.ndarray] = []
    for a in traj.actions:
        out.append(ctx.feature_indices(feature_dim))
        ctx.add_action(a)
        event = decoder.feed(a)
        if isinstance(event, grammar.CallEvent):
            call = next(calls, None)
            if call is not None:
                ctx.add_observation(call.observation)
        elif isinstance(event, grammar.MalformedEvent):
            ctx.add_observation(MALFORMED_OBSERVATION)
    return out


def count_malformed(traj: Trajectory) -> int:
    decoder = Decoder()
    n = 0
    for a in traj.actions:
        if isinstance(decoder.feed(a), grammar.MalformedEvent):
            n += 1
    return n


def base_context_for(task: Task, first: Trajectory | None = None,
                     critique: str | None = None,
                     critique_budget: int = 400) -> Context:
    """Conditioning context for a first pass, or the augmented context
    (task, first attempt, critique) for a refinement pass."""
    if first is None:
        return Context(prompt=task.prompt)
    rendered = render_trajectory(first)
    if critique is not None and len(critique) > critique_budget:
        critique = critique[:critique_budget]
    return Context(prompt=task.prompt, first_attempt=rendered, critique=critique)


def render_trajectory(traj: Trajectory) -> str:
    parts = []
    for call in traj.tool_calls:
        parts.append(f"call {call.tool.value}({call.args}) -> {call.observation}")
    parts.append(f"answer: {traj.final_answer}" if traj.final_answer else "no answer")
    return "; ".join(parts)


def make_corpus(start_seed: int, count: int,
                families: tuple[TaskFamily, ...]) -> list[Task]:
    """Deterministic task corpus cycling through the given families."""
    return [
        generate_task(start_seed + i, families[i % len(families)])
        for i in range(count)
    ]


def infer_family(prompt: str) -> TaskFamily | None:
    """Task family from the prompt prefix alone (no ground truth needed)."""
    prefix = prompt.split(":", 1)[0].strip().lower()
    return {
        "compute": TaskFamily.ARITHMETIC,
        "look up": TaskFamily.LOOKUP,
        "read file": TaskFamily.FILE_EXTRACT,
        "find": TaskFamily.MULTI_HOP,
    }.get(prefix)
