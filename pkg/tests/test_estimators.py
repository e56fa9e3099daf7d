import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import ALL_FAMILIES
from reagent.demo import flaw_prone_params
from reagent.environment import make_corpus
from reagent.estimators import ReagentC, ReagentR, ReagentU
from reagent.types import TaskFamily

FAMS = (TaskFamily.ARITHMETIC, TaskFamily.LOOKUP)


def small_kwargs():
    return dict(steps=2, batch_size=2, group_size=4, seed=0)


class TestSklearnProtocol:
    def test_get_set_params_roundtrip(self):
        est = ReagentR(lam=0.2, steps=5)
        params = est.get_params()
        assert params["lam"] == 0.2
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            ReagentR().predict(make_corpus(0, 2, FAMS))

    def test_fit_returns_self(self):
        tasks = make_corpus(0, 8, FAMS)
        est = ReagentR(**small_kwargs())
        assert est.fit(tasks) is est
        assert hasattr(est, "params_")


class TestTrainers:
    def test_r_predict_and_score(self):
        tasks = make_corpus(0, 8, FAMS)
        est = ReagentR(**small_kwargs()).fit(tasks)
        answers = est.predict(tasks)
        assert len(answers) == len(tasks)
        assert 0.0 <= est.score(tasks) <= 1.0

    def test_u_fit(self):
        tasks = make_corpus(0, 8, FAMS)
        est = ReagentU(**small_kwargs()).fit(tasks)
        assert est.report_.variant == "u"

    def test_lam_zero_is_baseline(self):
        tasks = make_corpus(0, 8, FAMS)
        est = ReagentR(lam=0.0, **small_kwargs()).fit(tasks)
        assert est.report_.variant == "baseline"


class TestRefiner:
    def test_requires_policy(self):
        with pytest.raises(ValueError):
            ReagentC().fit(make_corpus(0, 4, FAMS))

    def test_fit_freezes_and_reports(self):
        tasks = make_corpus(600, 12, ALL_FAMILIES)
        policy = flaw_prone_params()
        est = ReagentC(policy=policy, seed=0).fit(tasks)
        assert est.report_.checksum_before == est.report_.checksum_after
        assert np.array_equal(est.params_.weights, policy.weights)

    def test_score_is_refined_pass_rate(self):
        tasks = make_corpus(600, 12, ALL_FAMILIES)
        est = ReagentC(policy=flaw_prone_params(), seed=0).fit(tasks)
        assert 0.0 <= est.score(tasks) <= 1.0

    def test_predict_refined_answers(self):
        tasks = make_corpus(600, 6, ALL_FAMILIES)
        est = ReagentC(policy=flaw_prone_params(), seed=0).fit(tasks)
        answers = est.predict(tasks)
        hits = sum(a == t.ground_truth for a, t in zip(answers, tasks))
        assert hits >= 4
