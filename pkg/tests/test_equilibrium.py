import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mltrust.equilibrium import (
    EquilibriumCandidate,
    RegimeWarning,
    n1_condition,
    n2_threshold,
    nash_benchmark,
    reciprocity_violations,
    solve_n1,
    solve_n2,
    two_state_bound_violations,
    verify_all,
    verify_mleq,
    verify_monotone_mleq,
    verify_smleq,
    zero_trust,
)
from mltrust.errors import CeilingError
from mltrust.gridsearch import grid_search
from mltrust.partitions import Partition, enumerate_partitions
from mltrust.trust_game import StateSpace, ergodic_distribution

TH06 = StateSpace([0.6])


def example_one(c):
    return EquilibriumCandidate(TH06, [[0.2, 0.8]], Partition.finest(2), c)


class TestVerify:
    @pytest.mark.parametrize("c", [0.01, 0.09, 0.3, 1.0])
    def test_zero_trust_is_every_kind_of_equilibrium(self, c):
        for theta in (TH06, StateSpace([0.3, 0.8]), StateSpace([0.2, 0.5, 0.9])):
            v = verify_all(zero_trust(theta, c))
            assert v.is_mleq and v.is_smleq and v.is_monotone_mleq and v.is_strong_monotone_mleq
            assert v.failures["mleq"] == [] and v.failures["monotone"] == []

    def test_example_one_binding(self):
        v = verify_all(example_one(0.09))
        assert v.is_mleq and v.is_smleq and v.is_monotone_mleq
        # binding cost: finest and degenerate partitions tie exactly
        assert v.optimal_partitions == 2
        assert v.v == pytest.approx(v.v_min, abs=1e-12)

    def test_example_one_above_threshold(self):
        v = verify_mleq(example_one(0.1))
        assert not v.is_mleq and not v.is_smleq
        conds = {f.condition for f in v.failures["mleq"]}
        assert {"merge_inequality", "ml_optimality"} <= conds
        merge = next(f for f in v.failures["mleq"] if f.condition == "merge_inequality")
        assert merge.magnitude == pytest.approx(-0.01, abs=1e-12)

    def test_best_reply_failure_is_located(self):
        # beliefs gap 0.6 equals theta=0.6 only for the right strategy; here the gap is 0.3
        cand = EquilibriumCandidate(TH06, [[0.5, 0.8]], Partition.finest(2), 0.01)
        v = verify_mleq(cand)
        locs = [f.location for f in v.failures["mleq"] if f.condition == "best_reply"]
        assert locs and all(loc.endswith("trust") for loc in locs)

    def test_flags_match_failure_lists(self):
        for c in (0.05, 0.09, 0.1):
            v = verify_all(example_one(c))
            assert v.is_mleq == (not v.failures["mleq"])
            assert v.is_smleq == (not v.failures["smleq"])
            assert v.is_monotone_mleq == (not v.failures["monotone"])

    def test_size_ceiling(self):
        theta = StateSpace([0.1 * k for k in range(1, 8)])
        with pytest.raises(CeilingError):
            verify_mleq(zero_trust(theta, 0.1))

    def test_n1_monotone_coincides(self):
        for s1 in np.linspace(0.6, 1.0, 9):
            for c in (0.02, 0.09):
                cand = EquilibriumCandidate(TH06, [[s1 - 0.6, s1]], Partition.finest(2), c)
                v = verify_all(cand)
                assert v.is_mleq == v.is_monotone_mleq


class TestStrongAssignment:
    def n2_candidate(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegimeWarning)
            res = solve_n2(0.75, 0.9, 0.15)
        return next(c for c in res.candidates if c.origin == "n2:state1")

    def test_construction_is_strong(self):
        assert verify_smleq(self.n2_candidate()).is_smleq

    def test_distrust_contingency_moved_next_to_trust(self):
        cand = self.n2_candidate()
        moved = EquilibriumCandidate(cand.theta, cand.sigma, Partition.from_cells([[0, 1], [2, 3]]), cand.c)
        v = verify_smleq(moved)
        assert not v.is_smleq

    def test_null_contingency_counterexamples_are_mleq_only(self):
        # trust after distrust is never observed, so its cell is unconstrained by the objective
        cases = [
            (StateSpace([0.7, 0.9]), 0.15, [[1, 1], [0.062, 0.804]], [[0, 2], [1, 3]]),
            (StateSpace([0.6, 0.75]), 0.24, [[0, 0], [1, 1]], [[0, 1, 2], [3]]),
        ]
        for theta, c, sigma, cells in cases:
            cand = EquilibriumCandidate(theta, sigma, Partition.from_cells(cells), c)
            v = verify_mleq(cand, eps=1e-3)
            assert v.is_mleq and not v.is_smleq
            assert any(f.condition == "optimal_assignment" for f in v.failures["smleq"])
            assert cand.is_trusting


class TestMonotone:
    theta = StateSpace([0.7, 0.95])

    def test_both_states_trusting_is_not_strongly_monotone(self):
        res = grid_search(self.theta, 0.05, grid=10, monotone=True)
        both = [(cand, v) for cand, v in res.equilibria if cand.cooperating_states() == 2]
        assert all(not v.is_strong_monotone_mleq for _, v in both)
        strong = [cand for cand, v in res.equilibria if v.is_strong_monotone_mleq]
        assert strong and all(cand.cooperating_states() < 2 for cand in strong)

    def test_plain_reading_counterexample(self):
        # the first state never distrusts; its null history sits with the other state's distrust
        cand = EquilibriumCandidate(self.theta, [[1, 1], [0.0318, 0.9142]], Partition.from_cells([[0, 2], [1, 3]]), 0.05)
        v = verify_all(cand, eps=1e-3)
        assert v.is_monotone_mleq and not v.is_strong_monotone_mleq
        assert cand.cooperating_states() == 2

    def test_nash_profile_under_any_partition_fails(self):
        sigma = nash_benchmark(self.theta)
        for part in enumerate_partitions(4):
            assert not verify_all(EquilibriumCandidate(self.theta, sigma, part, 0.05)).is_monotone_mleq

    def test_non_monotone_beliefs_flagged(self):
        cand = EquilibriumCandidate(StateSpace([0.3, 0.6]), [[0.1, 0.4], [0.3, 0.9]], Partition.finest(4), 0.01)
        v = verify_monotone_mleq(cand)
        assert any(f.condition == "monotonicity" for f in v.failures["monotone"])


class TestNash:
    def test_examples(self):
        assert np.allclose(nash_benchmark(TH06), [[0.4, 1.0]])
        assert np.allclose(nash_benchmark(StateSpace([0.99])), [[0.01, 1.0]])
        assert np.allclose(nash_benchmark(StateSpace([0.2, 0.5, 0.8])), [[0.8, 1], [0.5, 1], [0.2, 1]])

    @given(st.lists(st.integers(1, 99), min_size=1, max_size=4, unique=True))
    def test_invariants(self, ks):
        theta = StateSpace([k / 100 for k in sorted(ks)])
        sigma = nash_benchmark(theta)
        assert np.allclose(sigma[:, 1] - sigma[:, 0], theta.values)
        assert np.allclose(ergodic_distribution(sigma, theta)[:, 1], 1 / theta.n)

    @pytest.mark.parametrize("theta", [0.3, 0.6, 0.9])
    @pytest.mark.parametrize("c", [0.001, 0.05, 0.2])
    def test_single_state_not_accepted(self, theta, c):
        th = StateSpace([theta])
        cand = EquilibriumCandidate(th, nash_benchmark(th), Partition.finest(2), c)
        assert not verify_mleq(cand).is_mleq


def n1_grid_oracle(theta, c, step):
    """Largest trust-after-trust value on a grid that satisfies the fine-partition condition."""
    s1 = np.arange(theta, 1 + step / 2, step)
    ok = (s1 - theta) * (1 - s1) / (1 - theta) ** 2 * theta**2 >= c
    return s1[ok].max() if ok.any() else None


class TestSolveN1:
    def test_example_one(self):
        cand = solve_n1(0.6, 0.09)
        assert cand.sigma[0, 1] == pytest.approx(0.8, abs=1e-12)
        assert cand.sigma[0, 0] == pytest.approx(0.2, abs=1e-12)
        assert cand.p[0, 1] == pytest.approx(0.5, abs=1e-12)
        assert verify_smleq(cand).is_smleq

    def test_no_solution_above_threshold(self):
        assert solve_n1(0.6, 0.10) is None

    def test_against_fine_grid(self):
        cand = solve_n1(0.8, 0.04)
        s1 = cand.sigma[0, 1]
        assert abs(n1_condition(s1, 0.8, 0.04)) < 1e-12
        assert abs(s1 - n1_grid_oracle(0.8, 0.04, 1e-6)) < 2e-6
        assert verify_mleq(cand).is_mleq

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.2, 0.95), st.floats(0.01, 0.99))
    def test_threshold_and_acceptance(self, theta, frac):
        c = frac * theta**2 / 4
        cand = solve_n1(theta, c)
        assert cand is not None and verify_mleq(cand).is_mleq
        assert cand.sigma[0, 1] >= (1 + theta) / 2 - 1e-12
        assert solve_n1(theta, theta**2 / 4 * 1.001) is None

    @pytest.mark.parametrize("theta,c", [(0.6, 0.05), (0.8, 0.04), (0.5, 0.03)])
    def test_maximal_cooperation(self, theta, c):
        best = solve_n1(theta, c).p[0, 1]
        th = StateSpace([theta])
        for s1 in np.arange(theta, 1.0, 1e-4):
            cand = EquilibriumCandidate(th, [[s1 - theta, s1]], Partition.finest(2), c)
            if cand.p[0, 1] > best + 1e-12:
                assert n1_condition(s1, theta, c) < 0
        # spot-check the verifier itself on a thinner sample of the same grid
        for s1 in np.arange(theta, 1.0, 1e-2):
            cand = EquilibriumCandidate(th, [[s1 - theta, s1]], Partition.finest(2), c)
            if cand.p[0, 1] > best + 1e-12:
                assert not verify_mleq(cand).is_mleq

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            solve_n1(0.6, 0.0)
        with pytest.raises(ValueError):
            solve_n1(StateSpace([0.3, 0.6]), 0.01)


class TestSolveN2:
    def test_binding_rate(self):
        res = solve_n2(0.75, 0.9, 0.15)
        assert res.in_regime
        (cand,) = [c for c in res.candidates if c.origin == "n2:state1"]
        assert cand.cooperation_rates[1] == pytest.approx(0.81 / 1.81, abs=1e-6)
        assert cand.cooperation_rates[0] == 0.0
        assert verify_smleq(cand).is_smleq
        assert two_state_bound_violations(cand, tol=1e-6) == []
        # the lower state is below the survival threshold
        assert 0 in res.notes

    def test_unsustainable(self):
        res = solve_n2(0.6, 0.75, 0.24)
        assert res.candidates == []
        assert 0.75**2 < n2_threshold(0.24)
        assert n2_threshold(0.24) == pytest.approx(math.sqrt(0.24) / (1 - math.sqrt(0.24)))

    def test_regime_warning(self):
        with pytest.warns(RegimeWarning):
            res = solve_n2(0.75, 0.9, 0.05)
        assert not res.in_regime

    def test_no_strong_two_state_cooperation_on_grid(self):
        res = grid_search(StateSpace([0.75, 0.9]), 0.15, grid=10)
        strong = res.strong()
        assert strong
        assert all(cand.cooperating_states() <= 1 for cand, _ in strong)
        assert all(two_state_bound_violations(cand) == [] for cand, _ in strong)


def grid_equilibria():
    out = []
    for theta, c in [(StateSpace([0.7, 0.9]), 0.15), (StateSpace([0.75, 0.9]), 0.15), (StateSpace([0.3, 0.6]), 0.02)]:
        out += grid_search(theta, c, grid=10).equilibria
    return out


@pytest.fixture(scope="module")
def found():
    return grid_equilibria()


class TestInvariants:
    def test_strong_implies_plain(self, found):
        assert found
        for _, v in found:
            assert not v.is_smleq or v.is_mleq

    def test_reciprocity_for_strong(self, found):
        for cand, v in found:
            if v.is_smleq:
                assert reciprocity_violations(cand) == []

    def test_indifference_when_trusting(self, found):
        for cand, v in found:
            if not v.is_smleq:
                continue
            gaps = cand.beliefs[:, 1] - cand.beliefs[:, 0]
            for k, th in enumerate(cand.theta.values):
                if cand.p[k, 1] > 0:
                    assert abs(gaps[k] - th) <= 1e-9

    def test_deterministic_flags(self):
        cand = example_one(0.09)
        a, b = verify_all(cand), verify_all(cand)
        assert (a.is_mleq, a.is_smleq, a.is_monotone_mleq) == (b.is_mleq, b.is_smleq, b.is_monotone_mleq)
