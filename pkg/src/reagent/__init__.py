"""Desk-scale tool-use agent training with group-relative optimization and
structured reward judgments."""

from .types import (
    Judgment,
    RewardBreakdown,
    Stage,
    Task,
    TaskFamily,
    Tool,
    ToolCall,
    Trajectory,
    normalize_answer,
)
from .policy import Context, PolicyParams, init_params, snapshot
from .grpo import TrainingConfig, normalize_advantages
from .reward import RewardConfig, combined_reward, model_reward, rule_reward
from .judge import OracleJudgeBackend, ExternalJudgeBackend, judge, parse_judgment
from .environment import generate_task, make_corpus, run_episode
from .variants import evaluate, run_reagent_c, run_reagent_r, run_reagent_u
from .estimators import ReagentC, ReagentR, ReagentU

__all__ = [
    "Context", "ExternalJudgeBackend", "Judgment", "OracleJudgeBackend",
    "PolicyParams", "ReagentC", "ReagentR", "ReagentU", "RewardBreakdown",
    "RewardConfig", "Stage", "Task", "TaskFamily", "Tool", "ToolCall",
    "TrainingConfig", "Trajectory", "combined_reward", "evaluate",
    "generate_task", "init_params", "judge", "make_corpus", "model_reward",
    "normalize_advantages", "normalize_answer", "parse_judgment",
    "rule_reward", "run_episode", "run_reagent_c", "run_reagent_r",
    "run_reagent_u", "snapshot",
]
