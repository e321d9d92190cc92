"""
Generalized Wishart sampling and the Schur measure
"""

import math

import numpy as np
import pytest

from app.exceptions import DegenerateParameters, DimensionError
from app.models import ComplexMatrix
from app.services.ensemble_service import (
    hermitian_spectrum,
    largest_eigenvalue,
    log_cauchy_normalizer,
    max_cdf_by_quadrature,
    schur_density,
    wishart_max_cdf,
)
from app.services.model_service import validate_params
from app.utils.rng import derive_seed, stream_seed
from app.utils.stats import ks_one_sample, ks_two_sample, passes_seed_rule


def test_entry_variances(ensemble, small_params):
    samples = np.stack([ensemble.sample_gwishart(small_params, 2, 2, seed=k).entries for k in range(4000)])
    variances = np.mean(np.abs(samples) ** 2, axis=0)
    expected = 1.0 / np.array([[1.5, 1.8], [1.9, 2.2]])
    np.testing.assert_allclose(variances, expected, rtol=0.08)


def test_spectrum_and_largest_eigenvalue(ensemble):
    params = validate_params([1.0, 1.2, 1.5], [0.1, 0.3, 0.6])
    X = ensemble.sample_gwishart(params, 2, 3, seed=4)
    spectrum = hermitian_spectrum(X)
    assert spectrum.eigenvalues.shape == (3,)
    assert np.all(np.diff(spectrum.eigenvalues) <= 0)
    gram = X.entries @ X.entries.conj().T
    assert spectrum.eigenvalues.sum() == pytest.approx(np.trace(gram).real)
    # rank N = 2
    assert abs(spectrum.eigenvalues[-1]) < 1e-10 * spectrum.eigenvalues[0]
    assert largest_eigenvalue(X) == pytest.approx(spectrum.largest)


def test_largest_eigenvalue_of_a_column():
    X = ComplexMatrix(entries=np.array([[1.0 + 1.0j], [2.0 + 0.0j]]), seed=0)
    assert largest_eigenvalue(X) == pytest.approx(6.0)


def test_growth_profile_ends_at_the_full_matrix(ensemble, small_params):
    profile = ensemble.sample_growth_profile(small_params, 2, seed=31)
    X = ensemble.sample_gwishart(small_params, 2, 2, seed=31)
    assert np.all(np.diff(profile) >= 0)
    assert profile[-1] == pytest.approx(largest_eigenvalue(X))
    batch = ensemble.sample_growth_batch(small_params, 2, 10, seed=31)
    assert batch.shape == (10, 2)


def test_batch_is_independent_of_worker_count(ensemble, small_params):
    serial = ensemble.sample_lambda_max_batch(small_params, 2, 2, 40, seed=3, workers=1)
    threaded = ensemble.sample_lambda_max_batch(small_params, 2, 2, 40, seed=3, workers=3)
    np.testing.assert_array_equal(serial.values, threaded.values)
    assert serial.source == "wishart"


def test_cauchy_normalizer_matches_determinant(small_params):
    c = small_params.pi_array()[:, None] + small_params.pihat_array()[None, :]
    sign, log_abs = log_cauchy_normalizer(small_params)
    assert sign * math.exp(log_abs) == pytest.approx(np.linalg.det(1.0 / c))


def test_max_cdf_one_by_one_is_exponential():
    params = validate_params([0.7], [0.8])
    for x in (0.1, 1.0, 4.0):
        assert wishart_max_cdf(params, x) == pytest.approx(-math.expm1(-1.5 * x), abs=1e-14)
    assert wishart_max_cdf(params, -1.0) == 0.0


def test_max_cdf_agrees_with_density_quadrature(small_params):
    for x in (0.5, 1.5):
        assert max_cdf_by_quadrature(small_params, x, n=24, panels=4) == pytest.approx(
            wishart_max_cdf(small_params, x), abs=1e-8
        )


def test_max_cdf_limits(small_params):
    assert wishart_max_cdf(small_params, 60.0) == pytest.approx(1.0, abs=1e-12)
    values = [wishart_max_cdf(small_params, x) for x in np.linspace(0.1, 6.0, 30)]
    assert np.all(np.diff(values) > 0)


def test_density_is_symmetric_and_nonnegative(small_params):
    assert schur_density(small_params, [0.3, 1.2]) == pytest.approx(schur_density(small_params, [1.2, 0.3]))
    assert schur_density(small_params, [0.3, 1.2]) > 0
    assert schur_density(small_params, [0.7, 0.7]) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DimensionError):
        schur_density(small_params, [0.3])


def test_coincident_rates_are_rejected():
    params = validate_params([1.0, 1.0], [0.2, 0.4])
    with pytest.raises(DegenerateParameters):
        wishart_max_cdf(params, 1.0)
    with pytest.raises(DimensionError):
        max_cdf_by_quadrature(validate_params([1, 2, 3, 4], [0, 0.1, 0.2, 0.3]), 1.0)


def test_largest_eigenvalue_law_matches_closed_form(ensemble, small_params):
    batch = ensemble.sample_lambda_max_batch(small_params, 2, 2, 3000, seed=19)
    cdf = lambda xs: np.array([wishart_max_cdf(small_params, float(x)) for x in np.atleast_1d(xs)])
    assert ks_one_sample(batch.values, cdf).p_value > 1e-3


def test_lpp_and_wishart_agree_in_law(percolation, ensemble, small_params):
    lpp = percolation.sample_lpp_batch(small_params, 2, 2, 4000, seed=101)
    wishart = ensemble.sample_lambda_max_batch(small_params, 2, 2, 4000, seed=202)
    assert ks_two_sample(lpp.values, wishart.values).p_value > 1e-3


@pytest.mark.slow
def test_lpp_and_wishart_agree_in_law_over_seeds(percolation, ensemble):
    params = validate_params([1.0, 1.3, 1.7, 2.2, 0.9], [0.1, 0.5, 0.2, 0.4, 0.3])
    p_values = []
    for k in range(1, 11):
        seed = derive_seed(2024, k)
        lpp = percolation.sample_lpp_batch(params, 3, 5, 10000, stream_seed(seed, "lpp"))
        wishart = ensemble.sample_lambda_max_batch(params, 3, 5, 10000, stream_seed(seed, "wishart"))
        p_values.append(ks_two_sample(lpp.values, wishart.values).p_value)
    assert passes_seed_rule(p_values)
