"""
PRNG contract, ECDFs and Kolmogorov-Smirnov machinery
"""

import numpy as np
import pytest
from scipy import stats as scipy_stats

from app.exceptions import EmptySample, NonMonotoneCdf
from app.utils.rng import derive_seed, make_generator, splitmix64, stream_seed
from app.utils.stats import (
    bootstrap_correlation,
    ecdf,
    kolmogorov_survival,
    ks_one_sample,
    ks_two_sample,
    monotone_cdf,
    passes_seed_rule,
    seed_pass_count,
    sup_distance,
)


class TestRng:
    def test_splitmix64_reference_value(self):
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_derived_seeds_are_stable_and_distinct(self):
        seeds = [derive_seed(42, k) for k in range(1, 101)]
        assert seeds == [derive_seed(42, k) for k in range(1, 101)]
        assert len(set(seeds)) == 100
        assert all(0 <= s < 2 ** 64 for s in seeds)

    def test_streams_differ_by_label(self):
        assert stream_seed(7, "lpp") != stream_seed(7, "wishart")
        assert stream_seed(7, "lpp") == stream_seed(7, "lpp")

    def test_generator_reproducible(self):
        a = make_generator(derive_seed(3, 1)).random(5)
        b = make_generator(derive_seed(3, 1)).random(5)
        np.testing.assert_array_equal(a, b)


class TestKolmogorov:
    def test_survival_limits(self):
        assert kolmogorov_survival(0.0) == 1.0
        assert kolmogorov_survival(-0.5) == 1.0
        assert kolmogorov_survival(5.0) < 1e-20

    def test_survival_critical_values(self):
        assert kolmogorov_survival(1.3581) == pytest.approx(0.05, abs=5e-4)
        assert kolmogorov_survival(1.6276) == pytest.approx(0.01, abs=2e-4)

    def test_survival_decreases(self):
        values = [kolmogorov_survival(lam) for lam in np.linspace(0.2, 3.0, 30)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_survival_is_the_limiting_distribution_tail(self):
        for lam in (0.5, 1.0, 1.2):
            assert kolmogorov_survival(lam) == pytest.approx(scipy_stats.kstwobign.sf(lam), abs=1e-12)


class TestKsTests:
    def test_two_sample_statistic_matches_scipy(self):
        gen = make_generator(11)
        a = gen.normal(size=400)
        b = gen.normal(0.2, 1.0, size=300)
        result = ks_two_sample(a, b)
        assert result.statistic == pytest.approx(scipy_stats.ks_2samp(a, b).statistic)
        assert result.n1 == 400 and result.n2 == 300

    def test_identical_samples(self):
        a = np.arange(10.0)
        result = ks_two_sample(a, a)
        assert result.statistic == 0.0
        assert result.p_value == 1.0

    def test_one_sample_statistic_matches_scipy(self):
        sample = make_generator(5).random(250)
        result = ks_one_sample(sample, lambda x: np.clip(x, 0.0, 1.0))
        assert result.statistic == pytest.approx(scipy_stats.kstest(sample, "uniform").statistic)

    def test_p_values_use_the_limiting_tail(self):
        gen = make_generator(12)
        a = gen.normal(size=300)
        b = gen.normal(0.1, 1.0, size=200)
        two = ks_two_sample(a, b)
        assert two.p_value == pytest.approx(scipy_stats.kstwobign.sf(two.statistic * np.sqrt(120.0)), abs=1e-12)
        one = ks_one_sample(a, scipy_stats.norm.cdf)
        assert one.p_value == pytest.approx(scipy_stats.kstwobign.sf(one.statistic * np.sqrt(300.0)), abs=1e-12)

    def test_shifted_cdf_is_rejected(self):
        sample = make_generator(4).exponential(size=10_000)
        result = ks_one_sample(sample, lambda x: 1.0 - np.exp(-np.clip(np.asarray(x) - 1.0, 0.0, None)))
        assert result.p_value < 1e-6

    def test_one_sample_rejects_decreasing_cdf(self):
        with pytest.raises(NonMonotoneCdf):
            ks_one_sample([0.1, 0.5, 0.9], lambda x: 1.0 - np.asarray(x))

    def test_empty_sample(self):
        with pytest.raises(EmptySample):
            ecdf([])


def test_ecdf_steps():
    f = ecdf([3.0, 1.0, 2.0, 2.0])
    np.testing.assert_allclose(f(np.array([0.5, 1.0, 2.0, 2.5, 3.0])), [0.0, 0.25, 0.75, 0.75, 1.0])


def test_monotone_cdf_repairs_and_clips():
    cdf = monotone_cdf([0.0, 1.0, 2.0], [0.2, 0.1, 1.3])
    np.testing.assert_allclose(cdf(np.array([-1.0, 0.0, 1.0, 2.0, 3.0])), [0.0, 0.2, 0.2, 1.0, 1.0])
    with pytest.raises(ValueError):
        monotone_cdf([1.0, 0.0], [0.0, 1.0])


def test_sup_distance_against_exact_cdf():
    sample = np.array([0.25, 0.75])
    assert sup_distance(sample, lambda x: np.clip(x, 0, 1)) == pytest.approx(0.25)


def test_seed_rule():
    assert seed_pass_count([0.5, 0.005, 0.02]) == 2
    assert passes_seed_rule([0.5] * 9 + [0.001])
    assert not passes_seed_rule([0.5] * 8 + [0.001] * 2)


def test_bootstrap_correlation():
    a = np.arange(50.0)
    estimate, lo, hi = bootstrap_correlation(a, 2 * a + 1, 50, seed=1)
    assert estimate == pytest.approx(1.0)
    assert lo == pytest.approx(1.0) and hi == pytest.approx(1.0)
    with pytest.raises(EmptySample):
        bootstrap_correlation([], [], 10, seed=1)
