"""Group-relative optimization mathematics: normalized advantages, clipped
importance-weighted surrogate with a KL penalty, and the ascent step.

Ratios and the KL penalty are sequence-level; advantages are constants with
respect to the parameters, frozen from sampling time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .policy import NumericError, PolicyParams, _log_softmax
from .types import RewardBreakdown

DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class TrainingConfig:
    group_size: int = 8
    clip_eps: float = 0.2
    kl_beta: float = 0.001
    learning_rate: float = 1e-2
    batch_size: int = 4
    mini_batch_size: int = 4
    steps: int = 100
    temperature: float = 0.7
    max_agent_steps: int = 13
    max_len: int = 24
    seed: int = 0
    optimizer: str = "sgd"
    # reference policy choice: params at run start, or refreshed each batch
    ref_policy: str = "init"

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2 (std undefined otherwise)")
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError("clip_eps must be in (0, 1)")
        if self.kl_beta < 0:
            raise ValueError("kl_beta must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer: {self.optimizer}")
        if self.ref_policy not in ("init", "batch"):
            raise ValueError(f"unknown ref_policy: {self.ref_policy}")


class AdvantageError(ValueError):
    pass


def normalize_advantages(rewards) -> list[float]:
    """Z-normalize with population std; all-equal groups get zero advantages."""
    if len(rewards) < 2:
        raise AdvantageError("need at least 2 rewards to normalize")
    arr = np.asarray(rewards, dtype=np.float64)
    std = float(arr.std())
    if std < DEGENERATE_STD:
        return [0.0] * len(rewards)
    mean = float(arr.mean())
    return [float((r - mean) / std) for r in arr]


def importance_ratio(new_total_logp: float, old_total_logp: float) -> float:
    if not (math.isfinite(new_total_logp) and math.isfinite(old_total_logp)):
        raise NumericError("non-finite log-probabilities")
    try:
        ratio = math.exp(new_total_logp - old_total_logp)
    except OverflowError:
        raise NumericError("importance ratio overflowed") from None
    if not math.isfinite(ratio):
        raise NumericError("importance ratio overflowed")
    return ratio


def clipped_surrogate(r: float, advantage: float, eps: float) -> float:
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must be in (0, 1)")
    return min(r * advantage, min(max(r, 1.0 - eps), 1.0 + eps) * advantage)


def kl_penalty(logp_theta: float, logp_ref: float) -> float:
    """Nonnegative per-sequence estimator: exp(d) - d - 1 with d = ref - theta."""
    if not (math.isfinite(logp_theta) and math.isfinite(logp_ref)):
        raise NumericError("non-finite log-probabilities")
    d = logp_ref - logp_theta
    try:
        value = math.expm1(d) - d
    except OverflowError:
        raise NumericError("KL estimator overflowed") from None
    if not math.isfinite(value):
        raise NumericError("KL estimator overflowed")
    return value


@dataclass
class GroupEntry:
    """One trajectory prepared for optimization: its action tokens, per-token
    hashed feature indices (parameter-independent), sampling-time reward and
    frozen advantage, and total log-probs under the old and reference policies."""

    actions: tuple[int, ...]
    feature_indices: list[np.ndarray]
    reward: RewardBreakdown
    old_logp: float
    ref_logp: float
    advantage: float = 0.0
    task_id: str = ""
    stage: int = 1


@dataclass
class ScoredGroup:
    entries: list[GroupEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.entries) < 2:
            raise AdvantageError("a scored group needs at least 2 entries")


def make_group(entries: list[GroupEntry]) -> ScoredGroup:
    """Fill in advantages from the entries' combined rewards."""
    advantages = normalize_advantages([e.reward.combined for e in entries])
    for entry, adv in zip(entries, advantages):
        entry.advantage = adv
    return ScoredGroup(entries)


def _entry_logp_and_grad(params: PolicyParams, entry: GroupEntry,
                         want_grad: bool) -> tuple[float, np.ndarray | None]:
    total = 0.0
    grad = np.zeros_like(params.weights) if want_grad else None
    weights = params.weights
    for idx, a in zip(entry.feature_indices, entry.actions):
        logsm = _log_softmax(weights[idx].sum(axis=0))
        total += float(logsm[a])
        if want_grad:
            delta = -np.exp(logsm)
            delta[a] += 1.0
            np.add.at(grad, idx, delta)
    return total, grad


def objective_and_gradient(params: PolicyParams, groups: list[ScoredGroup],
                           cfg: TrainingConfig,
                           want_grad: bool = True):
    """Evaluate the clipped surrogate objective with KL penalty and its exact
    gradient (subgradient convention: only the active min-branch contributes).

    Returns (J, grad, stats); grad is None when want_grad is False.
    """
    if not groups:
        raise ValueError("no groups")
    total_j = 0.0
    grad = np.zeros_like(params.weights) if want_grad else None
    n_entries = 0
    n_clipped = 0
    kl_sum = 0.0
    for group in groups:
        scale = 1.0 / (len(group.entries) * len(groups))
        group_j = 0.0
        for entry in group.entries:
            new_logp, entry_grad = _entry_logp_and_grad(params, entry, want_grad)
            r = importance_ratio(new_logp, entry.old_logp)
            a = entry.advantage
            unclipped = r * a
            clipped = min(max(r, 1.0 - cfg.clip_eps), 1.0 + cfg.clip_eps) * a
            kl = kl_penalty(new_logp, entry.ref_logp)
            group_j += min(unclipped, clipped) - cfg.kl_beta * kl
            n_entries += 1
            kl_sum += kl
            if unclipped > clipped:
                n_clipped += 1
            if want_grad:
                coef = unclipped if unclipped <= clipped else 0.0
                coef += cfg.kl_beta * math.expm1(entry.ref_logp - new_logp)
                if coef != 0.0:
                    grad += (scale * coef) * entry_grad
        total_j += group_j / len(group.entries)
    j = total_j / len(groups)
    stats = {
        "mean_kl": kl_sum / n_entries,
        "clip_fraction": n_clipped / n_entries,
    }
    return j, grad, stats


def apply_update(params: PolicyParams, grad: np.ndarray,
                 learning_rate: float) -> PolicyParams:
    """Plain gradient-ascent step; returns new params, never mutates input."""
    if params.frozen:
        raise ValueError("cannot update a frozen snapshot")
    if grad.shape != params.weights.shape:
        raise ValueError(f"gradient shape {grad.shape} != params {params.weights.shape}")
    return PolicyParams(params.weights + learning_rate * grad)


class AdamUpdater:
    """Adaptive-moment ascent variant, selected via TrainingConfig.optimizer."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, params: PolicyParams, grad: np.ndarray,
             learning_rate: float) -> PolicyParams:
        if params.frozen:
            raise ValueError("cannot update a frozen snapshot")
        if grad.shape != params.weights.shape:
            raise ValueError("gradient shape mismatch")
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return PolicyParams(params.weights + learning_rate * m_hat / (np.sqrt(v_hat) + self.eps))
