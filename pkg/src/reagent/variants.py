"""The three feedback-integration training loops and evaluation.

* critique refinement: frozen policy, two passes per task, critique in context
* reward augmentation: standard group-relative RL with rule + lambda * score
* unified: two-stage sampling pooled into one 2G advantage group per task

The lambda = 0 baseline is the reward-augmented loop with the judge skipped
entirely; skipping is trace-equivalent because the model reward is scaled
by zero and the judge consumes no randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .environment import (
    DEFAULT_EVAL_MAX_STEPS,
    DEFAULT_MAX_LEN,
    base_context_for,
    run_episode,
)
from .grpo import (
    AdamUpdater,
    GroupEntry,
    ScoredGroup,
    TrainingConfig,
    apply_update,
    make_group,
    objective_and_gradient,
)
from .judge import JudgmentParseError, JudgeUnavailable, detect_flaws, judge
from .policy import Context, PolicyParams, snapshot
from .reward import RewardConfig, combined_reward, rule_reward
from .types import Stage, Task, Trajectory

DEFAULT_EVAL_TEMPERATURE = 0.6


def _rollout_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def _total_logp(params: PolicyParams, feature_indices, actions) -> float:
    from .policy import _log_softmax

    total = 0.0
    for idx, a in zip(feature_indices, actions):
        total += float(_log_softmax(params.weights[idx].sum(axis=0))[a])
    return total


def _make_entry(params_old: PolicyParams, params_ref: PolicyParams,
                base_ctx: Context, task: Task, traj: Trajectory,
                reward) -> GroupEntry:
    from .environment import replay_feature_indices

    idx = replay_feature_indices(base_ctx, traj, params_old.feature_dim)
    return GroupEntry(
        actions=traj.actions,
        feature_indices=idx,
        reward=reward,
        old_logp=_total_logp(params_old, idx, traj.actions),
        ref_logp=_total_logp(params_ref, idx, traj.actions),
        task_id=task.id,
        stage=traj.stage.value,
    )


@dataclass
class VariantRunReport:
    variant: str
    metrics: list[dict] = field(default_factory=list)
    final_params: PolicyParams | None = None
    paired_outcomes: list[dict] = field(default_factory=list)
    family_pass1: dict[str, float] = field(default_factory=dict)
    judge_failures: int = 0
    checksum_before: str = ""
    checksum_after: str = ""


@dataclass
class TrainState:
    """Everything needed to resume training mid-run and reproduce the
    uninterrupted stream: per-step randomness is keyed by (seed, step)."""

    params: PolicyParams
    step: int = 0
    updater: AdamUpdater | None = None
    ref_params: PolicyParams | None = None

    def save(self, path) -> None:
        arrays = {"weights": self.params.weights, "step": np.int64(self.step)}
        if self.ref_params is not None:
            arrays["ref_weights"] = self.ref_params.weights
        if self.updater is not None and self.updater.m is not None:
            arrays["adam_m"] = self.updater.m
            arrays["adam_v"] = self.updater.v
            arrays["adam_t"] = np.int64(self.updater.t)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, optimizer: str = "sgd") -> "TrainState":
        data = np.load(path)
        state = cls(params=PolicyParams(data["weights"].copy()),
                    step=int(data["step"]))
        if "ref_weights" in data:
            state.ref_params = snapshot(PolicyParams(data["ref_weights"].copy()))
        if optimizer == "adam":
            state.updater = AdamUpdater()
            if "adam_m" in data:
                state.updater.m = data["adam_m"].copy()
                state.updater.v = data["adam_v"].copy()
                state.updater.t = int(data["adam_t"])
        return state


def _score_and_judge(task, traj, backend, rcfg: RewardConfig):
    rule = rule_reward(task, traj)
    if rcfg.lam == 0.0:
        return combined_reward(rule, 0.0, rcfg)
    j = judge(backend, task, traj)
    return combined_reward(rule, j.score, rcfg)


def _step_metrics(step: int, j: float, stats: dict, grad,
                  groups: list[ScoredGroup]) -> dict:
    entries = [e for g in groups for e in g.entries]
    return {
        "step": step,
        "J": float(j),
        "mean_reward": float(np.mean([e.reward.combined for e in entries])),
        "mean_rule": float(np.mean([e.reward.rule for e in entries])),
        "mean_model": float(np.mean([e.reward.model for e in entries])),
        "mean_KL": float(stats["mean_kl"]),
        "clip_fraction": float(stats["clip_fraction"]),
        "grad_norm": float(np.linalg.norm(grad)),
    }


def train_step(state: TrainState, tasks: list[Task], backend,
               cfg: TrainingConfig, rcfg: RewardConfig,
               unified: bool = False, include_refinement: bool = True) -> dict:
    """One optimizer step; returns the metrics record. Mutates state."""
    if state.ref_params is None:
        state.ref_params = snapshot(state.params)
    params_old = snapshot(state.params)
    ref = params_old if cfg.ref_policy == "batch" else state.ref_params
    step = state.step
    groups: list[ScoredGroup] = []
    judge_failures = 0
    for ti in range(cfg.batch_size):
        task = tasks[(step * cfg.batch_size + ti) % len(tasks)]
        entries: list[GroupEntry] = []
        first_stage: list[Trajectory] = []
        for i in range(cfg.group_size):
            rng = _rollout_rng(cfg.seed, 1, step, ti, i, 1)
            traj = run_episode(
                params_old, task,
                max_steps=cfg.max_agent_steps, temperature=cfg.temperature,
                max_len=cfg.max_len, rng=rng, stage=Stage.FIRST,
            )
            first_stage.append(traj)
            reward = _score_and_judge(task, traj, backend, rcfg)
            entries.append(_make_entry(params_old, ref, Context(task.prompt),
                                       task, traj, reward))
        if unified and include_refinement:
            for i, traj1 in enumerate(first_stage):
                try:
                    critique = judge(backend, task, traj1).critique
                except (JudgmentParseError, JudgeUnavailable):
                    judge_failures += 1
                    critique = ""
                ctx2 = base_context_for(task, traj1, critique)
                rng = _rollout_rng(cfg.seed, 1, step, ti, i, 2)
                traj2 = run_episode(
                    params_old, task, ctx=ctx2,
                    max_steps=cfg.max_agent_steps, temperature=cfg.temperature,
                    max_len=cfg.max_len, rng=rng, stage=Stage.REFINED,
                )
                reward2 = _score_and_judge(task, traj2, backend, rcfg)
                entries.append(_make_entry(params_old, ref, ctx2, task,
                                           traj2, reward2))
        groups.append(make_group(entries))
    j, grad, stats = objective_and_gradient(state.params, groups, cfg)
    if cfg.optimizer == "adam":
        if state.updater is None:
            state.updater = AdamUpdater()
        state.params = state.updater.step(state.params, grad, cfg.learning_rate)
    else:
        state.params = apply_update(state.params, grad, cfg.learning_rate)
    state.step += 1
    record = _step_metrics(step, j, stats, grad, groups)
    record["judge_failures"] = judge_failures
    return record


def run_reagent_r(params: PolicyParams, tasks: list[Task], backend,
                  cfg: TrainingConfig, rcfg: RewardConfig,
                  sink=None, state: TrainState | None = None) -> VariantRunReport:
    """Reward-augmented group-relative training; lambda = 0 is the baseline."""
    state = state or TrainState(params=params)
    variant = "baseline" if rcfg.lam == 0.0 else "r"
    report = VariantRunReport(variant=variant)
    while state.step < cfg.steps:
        record = train_step(state, tasks, backend, cfg, rcfg, unified=False)
        report.judge_failures += record.pop("judge_failures")
        report.metrics.append(record)
        if sink is not None:
            sink(record)
    report.final_params = state.params
    return report


def run_reagent_u(params: PolicyParams, tasks: list[Task], backend,
                  cfg: TrainingConfig, rcfg: RewardConfig,
                  sink=None, state: TrainState | None = None,
                  include_refinement: bool = True) -> VariantRunReport:
    """Unified two-stage training over a pooled 2G advantage group per task."""
    state = state or TrainState(params=params)
    report = VariantRunReport(variant="u")
    while state.step < cfg.steps:
        record = train_step(state, tasks, backend, cfg, rcfg,
                            unified=True, include_refinement=include_refinement)
        report.judge_failures += record.pop("judge_failures")
        report.metrics.append(record)
        if sink is not None:
            sink(record)
    report.final_params = state.params
    return report


def run_reagent_c(frozen: PolicyParams, tasks: list[Task], backend, *,
                  temperature: float = DEFAULT_EVAL_TEMPERATURE,
                  max_steps: int = DEFAULT_EVAL_MAX_STEPS,
                  max_len: int = DEFAULT_MAX_LEN,
                  seed: int = 0) -> VariantRunReport:
    """Two-pass critique refinement with the policy frozen throughout.

    Headline pass rates are reported on the refined second pass.
    """
    report = VariantRunReport(variant="c", checksum_before=frozen.checksum())
    family_hits: dict[str, list[float]] = {}
    for t_idx, task in enumerate(tasks):
        rng1 = _rollout_rng(seed, 2, t_idx, 1)
        traj1 = run_episode(frozen, task, max_steps=max_steps,
                            temperature=temperature, max_len=max_len,
                            rng=rng1, stage=Stage.FIRST)
        first_ok = rule_reward(task, traj1) == 1.0
        try:
            judgment = judge(backend, task, traj1)
        except (JudgmentParseError, JudgeUnavailable):
            report.judge_failures += 1
            report.paired_outcomes.append({
                "task_id": task.id, "first_correct": first_ok,
                "second_correct": None, "flaws": [], "judge_failed": True,
            })
            continue
        ctx2 = base_context_for(task, traj1, judgment.critique)
        rng2 = _rollout_rng(seed, 2, t_idx, 2)
        traj2 = run_episode(frozen, task, ctx=ctx2, max_steps=max_steps,
                            temperature=temperature, max_len=max_len,
                            rng=rng2, stage=Stage.REFINED)
        second_ok = rule_reward(task, traj2) == 1.0
        report.paired_outcomes.append({
            "task_id": task.id,
            "first_correct": first_ok,
            "second_correct": second_ok,
            "flaws": [f.value for f in detect_flaws(task, traj1, max_steps)],
            "judge_failed": False,
        })
        family_hits.setdefault(task.family.value, []).append(float(second_ok))
    report.family_pass1 = {
        fam: sum(vals) / len(vals) for fam, vals in family_hits.items()
    }
    report.checksum_after = frozen.checksum()
    return report


def paired_pass_rates(report: VariantRunReport) -> tuple[float, float]:
    """(first-pass, second-pass) success rates over tasks the judge scored."""
    rows = [r for r in report.paired_outcomes if not r["judge_failed"]]
    if not rows:
        return 0.0, 0.0
    first = sum(r["first_correct"] for r in rows) / len(rows)
    second = sum(r["second_correct"] for r in rows) / len(rows)
    return first, second


@dataclass
class EvalResult:
    pass_at_1: float
    pass_at_k: float
    k: int
    per_family: dict[str, dict[str, float]] = field(default_factory=dict)


def evaluate(params: PolicyParams, tasks: list[Task], *, k: int = 1,
             temperature: float = DEFAULT_EVAL_TEMPERATURE,
             max_steps: int = DEFAULT_EVAL_MAX_STEPS,
             max_len: int = DEFAULT_MAX_LEN, seed: int = 0) -> EvalResult:
    """pass@1 on the first sample; pass@k over k independent samples."""
    if k < 1:
        raise ValueError("k must be >= 1")
    fam_first: dict[str, list[float]] = {}
    fam_any: dict[str, list[float]] = {}
    for t_idx, task in enumerate(tasks):
        hits = []
        for s in range(k):
            rng = _rollout_rng(seed, 3, t_idx, s)
            traj = run_episode(params, task, max_steps=max_steps,
                               temperature=temperature, max_len=max_len,
                               rng=rng)
            hits.append(rule_reward(task, traj) == 1.0)
        fam_first.setdefault(task.family.value, []).append(float(hits[0]))
        fam_any.setdefault(task.family.value, []).append(float(any(hits)))
    all_first = [x for v in fam_first.values() for x in v]
    all_any = [x for v in fam_any.values() for x in v]
    return EvalResult(
        pass_at_1=sum(all_first) / len(all_first) if all_first else 0.0,
        pass_at_k=sum(all_any) / len(all_any) if all_any else 0.0,
        k=k,
        per_family={
            fam: {
                "pass@1": sum(fam_first[fam]) / len(fam_first[fam]),
                f"pass@{k}": sum(fam_any[fam]) / len(fam_any[fam]),
            }
            for fam in fam_first
        },
    )
