import numpy as np
import pytest

from hierseg.tuning import tune_alpha


def _counts_step(thresholds):
    """Region count model: starts high, drops by one past each threshold."""

    def count_fn(name, alpha):
        return 1 + sum(1 for t in thresholds if alpha < t)

    return count_fn


class TestTuneAlpha:
    def test_perfect_fit_reaches_zero(self):
        # gt wants 3 regions; counts are 4 below 10, 3 in [10, 100), ...
        gts = [np.asarray([[0, 1, 2]])]
        entries = [("img", gts)]
        count_fn = _counts_step([10.0, 100.0, 1000.0])
        res = tune_alpha(entries, (1.0, 500.0), budget=25, count_fn=count_fn)
        assert res.objective == 0.0
        assert 10.0 <= res.alpha_star < 100.0

    def test_budget_one(self):
        entries = [("img", [np.asarray([[0, 1]])])]
        res = tune_alpha(entries, (2.0, 50.0), budget=1,
                         count_fn=lambda n, a: 5)
        assert len(res.trace) == 1
        assert res.alpha_star == res.trace[0][0]
        assert res.objective == res.trace[0][1] == 9.0

    def test_budget_respected_on_plateaus(self):
        entries = [("img", [np.asarray([[0, 1, 2, 3]])])]
        res = tune_alpha(entries, (0.5, 500.0), budget=17,
                         count_fn=lambda n, a: 7)  # flat objective
        assert len(res.trace) <= 17
        assert res.objective == 9.0

    def test_objective_is_trace_minimum(self):
        entries = [("img", [np.asarray([[0, 1]])]),
                   ("img2", [np.asarray([[0, 1, 2]])])]
        count_fn = _counts_step([3.0, 30.0, 300.0])
        res = tune_alpha(entries, (1.0, 400.0), budget=20, count_fn=count_fn)
        assert res.objective == min(e for _, e in res.trace)
        assert any(a == res.alpha_star for a, _ in res.trace)

    def test_mean_gt_count_target(self):
        # two ground truths with 2 and 4 regions: target is 3
        gts = [np.asarray([[0, 0, 1, 1]]), np.asarray([[0, 1, 2, 3]])]
        entries = [("img", gts)]
        res = tune_alpha(entries, (1.0, 100.0), budget=8,
                         count_fn=lambda n, a: 3)
        assert res.objective == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            tune_alpha([], (1.0, 10.0), 5, lambda n, a: 1)
        entries = [("img", [np.zeros((1, 2))])]
        with pytest.raises(ValueError):
            tune_alpha(entries, (5.0, 5.0), 5, lambda n, a: 1)
        with pytest.raises(ValueError):
            tune_alpha(entries, (1.0, 10.0), 0, lambda n, a: 1)
