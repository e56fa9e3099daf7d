import pytest
from hypothesis import given
from hypothesis import strategies as st

from reagent.environment import generate_task
from reagent.reward import RewardConfig, combined_reward, model_reward, rule_reward
from reagent.types import Judgment, Stage, TaskFamily, Trajectory


def traj_answering(answer):
    actions = (3,) if answer else (0,)
    return Trajectory("t", Stage.FIRST, actions, (), answer,
                      tuple(0.0 for _ in actions), "fp")


class TestRuleReward:
    def task(self):
        return generate_task(1, TaskFamily.LOOKUP)

    def test_exact_match(self):
        task = self.task()
        assert rule_reward(task, traj_answering(task.ground_truth)) == 1.0

    def test_normalization_applied(self):
        task = self.task()
        sloppy = "  " + task.ground_truth.upper() + ". "
        assert rule_reward(task, traj_answering(sloppy)) == 1.0

    def test_wrong_answer(self):
        assert rule_reward(self.task(), traj_answering("nope")) == 0.0

    def test_empty_answer_is_zero(self):
        assert rule_reward(self.task(), traj_answering("")) == 0.0
        assert rule_reward(self.task(), traj_answering("  .")) == 0.0


def test_model_reward_is_judge_score():
    assert model_reward(Judgment("t", "c", 0.85)) == 0.85


class TestCombinedReward:
    def test_spot_values_exact(self):
        cfg = RewardConfig(lam=0.3)
        a = combined_reward(1.0, 0.8, cfg)
        assert a.combined == 1.0 + 0.3 * 0.8
        assert abs(a.combined - 1.24) < 1e-15
        b = combined_reward(0.0, 0.9, cfg)
        assert b.combined == 0.3 * 0.9
        assert abs(b.combined - 0.27) < 1e-15

    def test_lambda_zero_collapses_to_rule(self):
        cfg = RewardConfig(lam=0.0)
        assert combined_reward(1.0, 0.9, cfg).combined == 1.0
        assert combined_reward(0.0, 0.9, cfg).combined == 0.0

    def test_breakdown_fields(self):
        rb = combined_reward(1.0, 0.5, RewardConfig(lam=0.2))
        assert (rb.rule, rb.model, rb.lam) == (1.0, 0.5, 0.2)

    @given(model=st.integers(0, 100), lam=st.integers(0, 10))
    def test_combined_monotone_in_model_score(self, model, lam):
        cfg = RewardConfig(lam=lam / 10)
        low = combined_reward(0.0, model / 100, cfg).combined
        high = combined_reward(1.0, model / 100, cfg).combined
        assert high == low + 1.0

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            RewardConfig(lam=-0.1)

    def test_non_finite_lambda_rejected(self):
        with pytest.raises(ValueError):
            RewardConfig(lam=float("nan"))
