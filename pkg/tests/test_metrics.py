import math

import numpy as np
import pytest

from esh.energy import get_benchmark
from esh.metrics import EssResult, MmdConfig, ess, median_bandwidth, mmd2_unbiased
from oracles import mmd2_bruteforce

ALL_BENCHMARKS = ["MOG2D", "MOG2D_PRIOR", "ICG50", "SCG2D", "SCG2D_BIAS", "FUNNEL20", "GAUSSIAN(2)"]


class TestMedianBandwidth:
    def test_hand_enumeration(self):
        xs = np.array([[0.0], [1.0]])
        ys = np.array([[3.0]])
        # pooled {0, 1, 3}: distances {1, 2, 3} -> median 2
        assert median_bandwidth(xs, ys) == 2.0

    def test_translation_invariance(self, rng):
        xs, ys = rng.standard_normal((20, 3)), rng.standard_normal((15, 3))
        c = rng.standard_normal(3) * 10
        assert median_bandwidth(xs + c, ys + c) == pytest.approx(median_bandwidth(xs, ys))

    def test_scale_equivariance(self, rng):
        xs, ys = rng.standard_normal((20, 3)), rng.standard_normal((15, 3))
        assert median_bandwidth(3.5 * xs, 3.5 * ys) == pytest.approx(3.5 * median_bandwidth(xs, ys))

    def test_degenerate_raises(self):
        xs = np.zeros((5, 2))
        with pytest.raises(ValueError, match="identical"):
            median_bandwidth(xs, xs)


class TestMmd2:
    def test_identical_duplicated_points(self):
        xs = np.zeros((2, 1))
        ys = np.zeros((2, 1))
        assert mmd2_unbiased(xs, ys, MmdConfig(bandwidth=1.0)) == 0.0

    def test_two_point_closed_form(self):
        a = 2.0
        xs = np.zeros((2, 1))
        ys = np.full((2, 1), a)
        h = median_bandwidth(xs, ys)  # distances {0, a, a, a, a, 0} -> a
        assert h == a
        expected = 2.0 - 2.0 * math.exp(-(a**2) / (2 * h * h))
        assert mmd2_unbiased(xs, ys) == pytest.approx(expected, rel=1e-12)

    def test_bruteforce_oracle(self, rng):
        for m, n in ((5, 7), (20, 20), (50, 30)):
            xs = rng.standard_normal((m, 3))
            ys = rng.standard_normal((n, 3)) + 0.5
            h = median_bandwidth(xs, ys)
            fast = mmd2_unbiased(xs, ys, MmdConfig(bandwidth=h))
            slow = mmd2_bruteforce(xs, ys, h)
            assert fast == pytest.approx(slow, abs=1e-12)

    def test_symmetry(self, rng):
        xs = rng.standard_normal((30, 2))
        ys = rng.standard_normal((25, 2)) * 2
        assert mmd2_unbiased(xs, ys) == pytest.approx(mmd2_unbiased(ys, xs), abs=1e-12)

    def test_min_size_enforced(self, rng):
        with pytest.raises(ValueError):
            mmd2_unbiased(rng.standard_normal((1, 2)), rng.standard_normal((5, 2)))

    @pytest.mark.parametrize("name", ALL_BENCHMARKS)
    def test_null_magnitude_on_benchmarks(self, name):
        # two independent 500-point truth draws across 20 seeds
        b = get_benchmark(name)
        bound = 3 / math.sqrt(500)
        for seed in range(20):
            xs = b.sample_truth(500, np.random.default_rng(2 * seed))
            ys = b.sample_truth(500, np.random.default_rng(2 * seed + 1))
            assert abs(mmd2_unbiased(xs, ys)) <= bound


class TestEss:
    def test_iid_chains_near_one(self, rng):
        chains = rng.standard_normal((4, 10_000))
        res = ess(chains)
        assert 0.8 < res.ess_per_sample <= 1.0

    def test_ar1_analytic(self, rng):
        rho = 0.9
        n = 10_000
        chains = np.empty((4, n))
        for c in range(4):
            x = np.empty(n)
            x[0] = rng.standard_normal()
            noise = rng.standard_normal(n) * math.sqrt(1 - rho**2)
            for t in range(1, n):
                x[t] = rho * x[t - 1] + noise[t]
            chains[c] = x
        expected = (1 - rho) / (1 + rho)
        res = ess(chains)
        assert res.ess_per_sample == pytest.approx(expected, rel=0.3)

    def test_negative_ar1_clips_to_one(self, rng):
        rho = -0.9
        n = 5000
        x = np.empty(n)
        x[0] = 0.0
        for t in range(1, n):
            x[t] = rho * x[t - 1] + rng.standard_normal() * math.sqrt(1 - rho**2)
        res = ess(x[None, :])
        assert res.ess_per_sample == 1.0

    def test_identical_chains_zero_std(self, rng):
        chain = rng.standard_normal(500)
        res = ess(np.stack([chain, chain]))
        assert res.per_chain[0] == res.per_chain[1]
        assert res.std == 0.0

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError, match="zero-variance"):
            ess(np.ones((1, 100)))

    def test_short_chain_rejected(self, rng):
        with pytest.raises(ValueError, match="length"):
            ess(rng.standard_normal((1, 5)))

    def test_true_moments_penalize_stuck_chain(self, rng):
        # chain equilibrated far from the target mean: tiny ESS with true
        # moments, near-one with its own empirical moments
        stuck = 4.0 + 0.1 * rng.standard_normal((1, 2000))
        empirical = ess(stuck)
        referenced = ess(stuck, mean=0.0, var=1.0)
        assert empirical.ess_per_sample > 0.5
        assert referenced.ess_per_sample < 0.01

    def test_min_aggregation_over_coordinates(self, rng):
        n = 2000
        fast = rng.standard_normal((1, n))
        slow = np.cumsum(rng.standard_normal((1, n)), axis=1) * 0.05
        slow -= slow.mean()
        chains = np.stack([fast[0], slow[0]], axis=1)[None, ...]  # (1, n, 2)
        res = ess(chains)
        assert res.ess_per_sample <= ess(slow).ess_per_sample * 1.05

    def test_result_bounds(self, rng):
        res = ess(rng.standard_normal((8, 500)))
        assert isinstance(res, EssResult)
        assert np.all(res.per_chain > 0)
        assert np.all(res.per_chain <= 1 + 1e-9)
