import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mltrust.errors import UndefinedModelError
from mltrust.noise import (
    NoisyObservationModel,
    expected_mspe_coarse,
    expected_mspe_fine,
    fine_partition_preferred,
    monte_carlo_mspe,
    preferred_partition,
)
from mltrust.partitions import Partition, check_merge_inequality, mspe
from mltrust.trust_game import StateSpace, ergodic_distribution

interior = st.floats(0.01, 0.99)


class TestClosedForms:
    @pytest.mark.parametrize("v,expected", [(0.09, 0.18), (0.0, 0.0), (0.5, 1.0)])
    def test_fine(self, v, expected):
        assert expected_mspe_fine(NoisyObservationModel(0.2, 0.8, v)) == expected

    def test_coarse_at_example_one(self):
        m = NoisyObservationModel(0.2, 0.8, 0.09)
        assert m.p == pytest.approx((0.5, 0.5))
        assert expected_mspe_coarse(m) == pytest.approx(0.18, abs=1e-15)
        assert preferred_partition(m) == "indifferent"

    @pytest.mark.parametrize("s,v", [(0.3, 0.04), (0.7, 0.2)])
    def test_coarse_constant_strategy(self, s, v):
        assert expected_mspe_coarse(NoisyObservationModel(s, s, v)) == pytest.approx(v, abs=1e-15)

    def test_preference_examples(self):
        assert fine_partition_preferred(NoisyObservationModel(0.2, 0.8, 0.09))
        assert not fine_partition_preferred(NoisyObservationModel(0.2, 0.8, 0.1))
        assert preferred_partition(NoisyObservationModel(0.2, 0.8, 0.1)) == "coarse"
        assert preferred_partition(NoisyObservationModel(0.2, 0.8, 0.05)) == "fine"
        assert not fine_partition_preferred(NoisyObservationModel(0.4, 0.4, 0.01))

    @settings(max_examples=1000, deadline=None)
    @given(interior, interior, st.floats(0.001, 0.3))
    def test_agrees_with_merge_inequality(self, s0, s1, c):
        model = NoisyObservationModel(s0, s1, c)
        sigma = np.array([[s0, s1]])
        p = ergodic_distribution(sigma, StateSpace([0.5]))
        merge = check_merge_inequality(Partition.finest(2), sigma, p, c)
        assert fine_partition_preferred(model) == merge.passes

    @given(interior, interior, st.floats(0, 1))
    def test_relabeling_invariance(self, s0, s1, v):
        # swapping the histories and the actions maps trust probabilities to 1 - sigma(1 - h)
        a = NoisyObservationModel(s0, s1, v)
        b = NoisyObservationModel(1 - s1, 1 - s0, v)
        assert b.p == pytest.approx(a.p[::-1], abs=1e-12)
        assert expected_mspe_fine(a) == expected_mspe_fine(b)
        assert expected_mspe_coarse(a) == pytest.approx(expected_mspe_coarse(b), abs=1e-12)


class TestErrors:
    def test_ill_defined_kernel(self):
        with pytest.raises(UndefinedModelError):
            NoisyObservationModel(0.0, 1.0, 0.1)

    @pytest.mark.parametrize("s0,s1", [(0.0, 0.5), (0.5, 1.0)])
    def test_unobserved_history(self, s0, s1):
        with pytest.raises(UndefinedModelError):
            NoisyObservationModel(s0, s1, 0.1)

    def test_bad_values(self):
        with pytest.raises(ValueError):
            NoisyObservationModel(0.2, 0.8, -0.1)
        with pytest.raises(ValueError):
            NoisyObservationModel(1.2, 0.8, 0.1)
        with pytest.raises(ValueError):
            monte_carlo_mspe(NoisyObservationModel(0.2, 0.8, 0.1), "fine", 9_999, seed=0)
        with pytest.raises(ValueError):
            monte_carlo_mspe(NoisyObservationModel(0.2, 0.8, 0.1), "medium", 10_000, seed=0)


class TestMonteCarlo:
    def test_fine_example(self):
        est = monte_carlo_mspe(NoisyObservationModel(0.2, 0.8, 0.09), "fine", 1_000_000, seed=1)
        assert abs(est.mean - 0.18) < 0.002
        assert abs(est.z) < 4

    def test_coarse_constant(self):
        est = monte_carlo_mspe(NoisyObservationModel(0.4, 0.4, 0.04), "coarse", 100_000, seed=2)
        assert est.closed_form == pytest.approx(0.04)
        assert abs(est.z) < 4

    def test_noiseless_limit(self):
        model = NoisyObservationModel(0.2, 0.7, 1e-8)
        sigma = np.array([[0.2, 0.7]])
        p = ergodic_distribution(sigma, StateSpace([0.5]))
        for choice, part in (("fine", Partition.finest(2)), ("coarse", Partition.degenerate(2))):
            est = monte_carlo_mspe(model, choice, 10_000, seed=3)
            assert abs(est.mean - mspe(part, sigma, p)) < 1e-4

    def test_deterministic(self):
        m = NoisyObservationModel(0.3, 0.6, 0.05)
        assert monte_carlo_mspe(m, "coarse", 20_000, seed=9) == monte_carlo_mspe(m, "coarse", 20_000, seed=9)

    def test_random_models_within_four_errors(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            s0, s1 = rng.uniform(0.02, 0.98, size=2)
            model = NoisyObservationModel(s0, s1, rng.uniform(0.001, 0.2))
            for choice in ("fine", "coarse"):
                est = monte_carlo_mspe(model, choice, 10_000, seed=int(rng.integers(2**31)))
                worst = max(worst, abs(est.z))
        assert worst < 4
