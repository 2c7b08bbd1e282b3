import numpy as np
import pytest

from mltrust.equilibrium import EquilibriumCandidate, reciprocity_violations, verify_mleq
from mltrust.errors import BudgetError
from mltrust.gridsearch import grid_search, refine_indifference
from mltrust.partitions import Partition
from mltrust.trust_game import StateSpace


def sigmas(result):
    return [tuple(np.round(cand.sigma.ravel(), 9)) for cand, _ in result.equilibria]


class TestSingleState:
    def test_recovers_binding_equilibrium(self):
        res = grid_search(StateSpace([0.6]), 0.09, grid=20)
        trusting = [cand for cand, v in res.equilibria if cand.is_trusting and v.is_smleq]
        assert any(np.allclose(cand.sigma, [[0.2, 0.8]], atol=1e-9) for cand in trusting)
        for cand in trusting:
            assert cand.p[0, 1] <= 0.5 + 1e-9

    def test_only_zero_trust_when_cost_high(self):
        res = grid_search(StateSpace([0.6]), 0.3, grid=20)
        assert [cand.is_trusting for cand, _ in res.equilibria] == [False]
        assert np.all(res.equilibria[0][0].sigma == 0)

    def test_interior_mixtures_are_refined(self):
        # c below the threshold: the exact indifferent strategies are off the grid
        res = grid_search(StateSpace([0.6]), 0.05, grid=10)
        mixed = [cand for cand, _ in res.equilibria if 0 < cand.sigma[0, 0] < 1]
        assert mixed
        for cand in mixed:
            gap = cand.beliefs[0, 1] - cand.beliefs[0, 0]
            assert abs(gap - 0.6) <= 1e-9


class TestTwoStates:
    def test_reciprocity_of_strong_equilibria(self):
        res = grid_search(StateSpace([0.7, 0.9]), 0.15, grid=10)
        strong = res.strong()
        assert strong
        for cand, _ in strong:
            assert reciprocity_violations(cand) == []

    def test_everything_returned_verifies_exactly(self):
        res = grid_search(StateSpace([0.7, 0.9]), 0.15, grid=6)
        for cand, v in res.equilibria:
            again = verify_mleq(EquilibriumCandidate(cand.theta, cand.sigma, cand.partition, cand.c))
            assert again.is_mleq and again.is_smleq == v.is_smleq
        assert res.grid_points == 7**4
        assert res.survivors >= len(res.equilibria)

    def test_workers_do_not_change_result(self):
        a = grid_search(StateSpace([0.7, 0.9]), 0.15, grid=6, workers=1)
        b = grid_search(StateSpace([0.7, 0.9]), 0.15, grid=6, workers=3)
        assert sigmas(a) == sigmas(b)
        assert [str(c.partition) for c, _ in a.equilibria] == [str(c.partition) for c, _ in b.equilibria]
        assert a.approximate == b.approximate

    def test_without_refinement_only_grid_points(self):
        res = grid_search(StateSpace([0.7, 0.9]), 0.15, grid=4, refine=False)
        for cand, _ in res.equilibria:
            assert np.allclose(cand.sigma * 4, np.round(cand.sigma * 4))


class TestLimits:
    def test_grid_range(self):
        with pytest.raises(BudgetError):
            grid_search(StateSpace([0.6]), 0.1, grid=51)
        with pytest.raises(BudgetError):
            grid_search(StateSpace([0.6]), 0.1, grid=0)

    def test_budget(self):
        with pytest.raises(BudgetError):
            grid_search(StateSpace([0.3, 0.6, 0.9]), 0.1, grid=10, budget=10**6)


class TestRefine:
    def test_moves_onto_indifference(self):
        theta = StateSpace([0.6])
        sigma, res = refine_indifference([[0.25, 0.8]], theta, Partition.finest(2))
        assert res <= 1e-10
        assert sigma[0, 1] - sigma[0, 0] == pytest.approx(0.6, abs=1e-10)

    def test_pure_strategies_untouched(self):
        sigma, res = refine_indifference([[0.0, 0.0]], StateSpace([0.6]), Partition.degenerate(2))
        assert res == 0.0 and np.all(sigma == 0)

    def test_reports_failure(self):
        # one cell: the belief gap is zero whatever the strategy
        sigma, res = refine_indifference([[0.3, 0.7]], StateSpace([0.6]), Partition.degenerate(2))
        assert res > 1e-10
