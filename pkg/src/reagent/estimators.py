"""Estimator-style wrappers so the trainers compose with sklearn pipelines.

X is a list of Task objects; fit trains (or, for the frozen refiner, runs
the two-pass refinement), predict returns final answers, and score returns
pass@1 over the given tasks.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .environment import run_episode
from .judge import OracleJudgeBackend
from .policy import init_params, snapshot
from .reward import RewardConfig, rule_reward
from .grpo import TrainingConfig
from .variants import (
    evaluate,
    paired_pass_rates,
    run_reagent_c,
    run_reagent_r,
    run_reagent_u,
)


class _PolicyEstimator(BaseEstimator):
    def __init__(self, feature_dim=256, group_size=8, clip_eps=0.2,
                 kl_beta=0.001, lam=0.3, learning_rate=1e-2, batch_size=4,
                 steps=100, temperature=0.7, max_agent_steps=13, max_len=24,
                 seed=0, optimizer="sgd", backend=None,
                 eval_temperature=0.6, eval_max_steps=30):
        self.feature_dim = feature_dim
        self.group_size = group_size
        self.clip_eps = clip_eps
        self.kl_beta = kl_beta
        self.lam = lam
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.steps = steps
        self.temperature = temperature
        self.max_agent_steps = max_agent_steps
        self.max_len = max_len
        self.seed = seed
        self.optimizer = optimizer
        self.backend = backend
        self.eval_temperature = eval_temperature
        self.eval_max_steps = eval_max_steps

    def _training_config(self) -> TrainingConfig:
        return TrainingConfig(
            group_size=self.group_size, clip_eps=self.clip_eps,
            kl_beta=self.kl_beta, learning_rate=self.learning_rate,
            batch_size=self.batch_size, steps=self.steps,
            temperature=self.temperature, max_agent_steps=self.max_agent_steps,
            max_len=self.max_len, seed=self.seed, optimizer=self.optimizer,
        )

    def _backend(self):
        return self.backend or OracleJudgeBackend(step_budget=self.max_agent_steps)

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit first")

    def predict(self, X):
        """Final answer text for each task, one greedy-ish sample each."""
        self._check_fitted()
        answers = []
        for t_idx, task in enumerate(X):
            rng = np.random.default_rng([self.seed, 3, t_idx, 0])
            traj = run_episode(self.params_, task,
                               max_steps=self.eval_max_steps,
                               temperature=self.eval_temperature,
                               max_len=self.max_len, rng=rng)
            answers.append(traj.final_answer)
        return answers

    def score(self, X, y=None):
        """pass@1 over the given tasks."""
        self._check_fitted()
        result = evaluate(self.params_, list(X),
                          temperature=self.eval_temperature,
                          max_steps=self.eval_max_steps,
                          max_len=self.max_len, seed=self.seed)
        return result.pass_at_1


class ReagentR(_PolicyEstimator):
    """Reward-augmented trainer; lam=0 gives the rule-only baseline."""

    def fit(self, X, y=None):
        report = run_reagent_r(
            init_params(self.feature_dim), list(X), self._backend(),
            self._training_config(), RewardConfig(lam=self.lam),
        )
        self.report_ = report
        self.params_ = report.final_params
        return self


class ReagentU(_PolicyEstimator):
    """Unified two-stage trainer over pooled first and refined rollouts."""

    def fit(self, X, y=None):
        report = run_reagent_u(
            init_params(self.feature_dim), list(X), self._backend(),
            self._training_config(), RewardConfig(lam=self.lam),
        )
        self.report_ = report
        self.params_ = report.final_params
        return self


class ReagentC(_PolicyEstimator):
    """Frozen critique refiner; fit runs the paired two-pass protocol and
    never changes the supplied policy."""

    def __init__(self, policy=None, **kwargs):
        super().__init__(**kwargs)
        self.policy = policy

    def fit(self, X, y=None):
        if self.policy is None:
            raise ValueError("ReagentC needs a policy to refine")
        frozen = snapshot(self.policy)
        self.report_ = run_reagent_c(
            frozen, list(X), self._backend(),
            temperature=self.eval_temperature, max_steps=self.eval_max_steps,
            max_len=self.max_len, seed=self.seed,
        )
        self.params_ = frozen
        return self

    def score(self, X, y=None):
        """Refined-pass pass@1 from a fresh paired run over the tasks."""
        self._check_fitted()
        report = run_reagent_c(
            self.params_, list(X), self._backend(),
            temperature=self.eval_temperature, max_steps=self.eval_max_steps,
            max_len=self.max_len, seed=self.seed,
        )
        return paired_pass_rates(report)[1]

    def predict(self, X):
        """Refined final answers (judged first pass, then one refinement)."""
        self._check_fitted()
        from .environment import base_context_for
        from .judge import judge

        backend = self._backend()
        answers = []
        for t_idx, task in enumerate(X):
            rng1 = np.random.default_rng([self.seed, 2, t_idx, 1])
            traj1 = run_episode(self.params_, task,
                                max_steps=self.eval_max_steps,
                                temperature=self.eval_temperature,
                                max_len=self.max_len, rng=rng1)
            judgment = judge(backend, task, traj1)
            ctx2 = base_context_for(task, traj1, judgment.critique)
            rng2 = np.random.default_rng([self.seed, 2, t_idx, 2])
            traj2 = run_episode(self.params_, task, ctx=ctx2,
                                max_steps=self.eval_max_steps,
                                temperature=self.eval_temperature,
                                max_len=self.max_len, rng=rng2)
            answers.append(traj2.final_answer)
        return answers
