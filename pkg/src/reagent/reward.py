"""Reward composition: rule-based correctness plus lambda-scaled model score."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .types import Judgment, RewardBreakdown, Task, Trajectory, normalize_answer

DEFAULT_LAMBDA = 0.3


@dataclass(frozen=True)
class RewardConfig:
    lam: float = DEFAULT_LAMBDA
    format_penalty_enabled: bool = False

    def __post_init__(self) -> None:
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0: {self.lam}")


def rule_reward(task: Task, traj: Trajectory) -> float:
    """1.0 iff the normalized final answer matches the normalized truth."""
    answer = normalize_answer(traj.final_answer)
    if not answer:
        return 0.0
    return 1.0 if answer == normalize_answer(task.ground_truth) else 0.0


def model_reward(judgment: Judgment) -> float:
    return judgment.score


def combined_reward(rule: float, model: float, cfg: RewardConfig) -> RewardBreakdown:
    return RewardBreakdown(rule=rule, model=model, lam=cfg.lam,
                           combined=rule + cfg.lam * model)
