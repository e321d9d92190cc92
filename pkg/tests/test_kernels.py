"""
Extended Airy kernels, their two-parameter deformation and the finite-p kernel
"""

import math

import mpmath
import numpy as np
import pytest

from app.config import AIRY_AI_0, AIRY_AIP_0
from app.exceptions import BadContours, ContourInfeasible, DimensionError, LevelOutOfRange, UnsupportedWindow
from app.models import KernelKind, KernelSection, KernelStrategy, ModelSection, ScalingSpec
from app.services.model_service import validate_params
from app.utils.specfun import airy_pair, interval_rule

GRID = [-2.0, -1.0, 0.0, 1.0, 2.0]


def _ai(x):
    return float(mpmath.airyai(x))


def _aip(x):
    return float(mpmath.airyai(x, derivative=1))


class TestExtendedAiry:
    def test_static_diagonal_identity(self, kernels):
        ai, aip = airy_pair(0.0)
        assert kernels.extended_airy(0.0, 0.0, 0.0, 0.0) == pytest.approx(aip ** 2 - 0.0 * ai ** 2, abs=1e-8)
        assert kernels.extended_airy(0.0, 0.0, 0.0, 0.0) == pytest.approx(AIRY_AIP_0 ** 2, abs=1e-8)
        for x in (-3.0, 1.5):
            expected = _aip(x) ** 2 - x * _ai(x) ** 2
            assert kernels.extended_airy(0.0, x, 0.0, x) == pytest.approx(expected, abs=1e-8)

    def test_static_off_diagonal(self, kernels):
        x, y = 0.5, -0.3
        expected = (_ai(x) * _aip(y) - _aip(x) * _ai(y)) / (x - y)
        assert kernels.extended_airy(0.0, x, 0.0, y) == pytest.approx(expected, abs=1e-8)

    def test_matrix_is_symmetric_at_equal_times(self, kernels):
        K = kernels.extended_airy_matrix(0.3, GRID, 0.3, GRID)
        np.testing.assert_allclose(K, K.T, atol=1e-12)

    @pytest.mark.parametrize("t1, t2", [(0.0, 0.0), (0.5, 0.0), (1.0, -0.5), (0.0, 0.5), (0.0, 2.0)])
    def test_contour_form_agrees_with_lambda_integral(self, kernels, t1, t2):
        direct = kernels.extended_airy_matrix(t1, GRID, t2, GRID)
        contour, residue = kernels.extended_airy_contour_matrix(t1, GRID, t2, GRID)
        np.testing.assert_allclose(contour, direct, atol=1e-6)
        assert residue < 1e-8

    def test_contour_deformation_drift(self, kernels):
        a = kernels.extended_airy_contour(0.4, 0.3, 0.0, -0.6, vertices=(-1.0, 1.0))
        b = kernels.extended_airy_contour(0.4, 0.3, 0.0, -0.6, vertices=(-0.4, 1.7))
        assert a == pytest.approx(b, abs=1e-8)

    def test_contour_preconditions(self, kernels):
        with pytest.raises(BadContours):
            kernels.extended_airy_contour(0.0, 0.0, 0.0, 0.0, vertices=(1.0, -1.0))
        with pytest.raises(BadContours):
            kernels.extended_airy_contour(0.0, 0.0, 2.0, 0.0, vertices=(-0.5, 0.5))

    def test_unsupported_window(self, kernels):
        with pytest.raises(UnsupportedWindow):
            kernels.extended_airy(0.0, 25.0, 0.0, 0.0)
        with pytest.raises(UnsupportedWindow):
            kernels.extended_airy(0.0, 0.0, 5.0, 0.0)


class TestTwoParameters:
    def test_empty_spec_is_the_extended_airy_kernel(self, kernels, empty_spec):
        assert kernels.perturbation_term(0.2, 0.1, 0.0, 0.4, empty_spec) == 0.0
        values, _ = kernels.extended_airy_two_params_matrix(0.2, GRID, 0.0, GRID, empty_spec)
        np.testing.assert_array_equal(values, kernels.extended_airy_matrix(0.2, GRID, 0.0, GRID))

    @pytest.mark.parametrize("x, y", [([3.0], []), ([], [-3.0]), ([3.0], [-3.0]), ([3.0, 4.0], [-3.0])])
    def test_finite_rank_expansion_agrees(self, kernels, x, y):
        spec = ScalingSpec(t=0.25, x=x, y=y)
        direct, _ = kernels.perturbation_matrix(0.0, GRID, 0.0, GRID, spec)
        expanded, _ = kernels.finite_rank_matrix(0.0, GRID, 0.0, GRID, spec)
        np.testing.assert_allclose(direct, expanded, atol=1e-6)

    def test_finite_rank_expansion_agrees_across_times(self, kernels, perturbed_spec):
        direct, _ = kernels.perturbation_matrix(0.3, GRID, -0.2, GRID, perturbed_spec)
        expanded, _ = kernels.finite_rank_matrix(0.3, GRID, -0.2, GRID, perturbed_spec)
        np.testing.assert_allclose(direct, expanded, atol=1e-6)

    def test_distant_parameter_decays_like_its_inverse(self, kernels):
        near = kernels.perturbation_term(0.0, 0.0, 0.0, 0.0, ScalingSpec(t=0.25, x=[50.0]))
        far = kernels.perturbation_term(0.0, 0.0, 0.0, 0.0, ScalingSpec(t=0.25, x=[100.0]))
        assert near == pytest.approx(AIRY_AI_0 * (AIRY_AI_0 / 50 - AIRY_AIP_0 / 2500), abs=1e-7)
        assert far / near == pytest.approx(0.5, rel=0.02)

    def test_infeasible_pole_placement(self, kernels):
        spec = ScalingSpec(t=0.25, x=[0.5], y=[0.2])
        with pytest.raises(ContourInfeasible) as info:
            kernels.extended_airy_two_params(0.0, 0.0, -1.0, 0.0, spec)
        assert info.value.inequality
        assert info.value.hint
        assert info.value.exit_code == 2

    def test_gauge_adjusted_limit(self, kernels, perturbed_spec):
        t1, x, t2, y = 0.4, 0.5, -0.2, 1.0
        raw = kernels.extended_airy_two_params(t1, x, t2, y, perturbed_spec)
        gauge = math.exp(y * t2 - x * t1 + (t1 ** 3 - t2 ** 3) / 3)
        assert kernels.gauge_adjusted_limit(t1, x, t2, y, perturbed_spec) == pytest.approx(gauge * raw)


class TestFiniteKernel:
    @pytest.mark.parametrize("strategy", [KernelStrategy.WEDGE, KernelStrategy.CIRCLES])
    def test_single_column_kernel(self, kernels, strategy):
        params = validate_params([1.0], [0.5])
        value = kernels.finite_kernel(params, 1, 0.7, 1, 0.3, strategy)
        assert value == pytest.approx(1.5 * math.exp(-1.0 * 0.7 - 0.5 * 0.3), abs=1e-8)

    def test_strategies_agree(self, kernels, small_params):
        us = [0.1, 0.8, 2.0]
        wedge, _ = kernels.finite_kernel_matrix(small_params, 1, us, 2, us, KernelStrategy.WEDGE)
        circles, _ = kernels.finite_kernel_matrix(small_params, 1, us, 2, us, KernelStrategy.CIRCLES)
        np.testing.assert_allclose(wedge, circles, atol=1e-8)

    def test_psi_closed_form(self, kernels, small_params):
        # a single pole at -pihat_2
        assert kernels.psi_rs(small_params, 1, 2, 0.2, 1.0) == pytest.approx(math.exp(-0.8 * 0.8), abs=1e-10)
        assert kernels.psi_rs(small_params, 2, 1, 0.2, 1.0) == 0.0
        assert kernels.psi_rs(small_params, 1, 2, 1.0, 0.2) == 0.0
        with pytest.raises(DimensionError):
            kernels.psi_rs(small_params, 0, 2, 0.2, 1.0)

    def test_one_point_density_integrates_to_particle_count(self, kernels, small_params):
        # at level r there are r particles
        rule = interval_rule(0.0, 30.0, 16, 16)
        for r in (1, 2):
            values, _ = kernels.finite_kernel_matrix(small_params, r, rule.nodes, r, rule.nodes)
            diagonal = np.diag(values)
            assert float(np.dot(rule.weights, diagonal)) == pytest.approx(r, abs=1e-7)

    def test_negative_positions_rejected(self, kernels, small_params):
        with pytest.raises(DimensionError):
            kernels.finite_kernel(small_params, 1, -0.1, 1, 0.2)


class TestScaledFiniteKernel:
    def test_level_out_of_range(self, kernels, empty_spec):
        with pytest.raises(LevelOutOfRange):
            kernels.scaled_finite_kernel(empty_spec, 50, -20.0, 0.0, 0.0, 0.0)

    def test_shape_and_residue(self, kernels, perturbed_spec):
        values, residue = kernels.scaled_finite_kernel_matrix(perturbed_spec, 60, 0.0, GRID, 0.0, GRID)
        assert values.shape == (5, 5)
        assert np.all(np.isfinite(values))
        assert residue < 1e-4

    @pytest.mark.parametrize("t1, t2", [(0.0, 0.5), (0.5, 0.0)])
    def test_unequal_times_approach_the_limit(self, kernels, empty_spec, t1, t2):
        limit = kernels.gauge_adjusted_limit_matrix(t1, GRID, t2, GRID, empty_spec)
        errors = []
        for p in (50, 100):
            approx, _ = kernels.scaled_finite_kernel_matrix(empty_spec, p, t1, GRID, t2, GRID)
            errors.append(float(np.max(np.abs(approx - limit))))
        assert errors[0] > errors[1]
        assert errors[1] < 0.1

    @pytest.mark.slow
    @pytest.mark.parametrize("x, y", [([], []), ([1.5], [-1.0])])
    def test_converges_to_gauge_adjusted_limit(self, kernels, x, y):
        spec = ScalingSpec(t=0.25, x=x, y=y)
        limit = kernels.gauge_adjusted_limit_matrix(0.0, GRID, 0.0, GRID, spec)
        errors = []
        for p in (50, 100, 200):
            approx, _ = kernels.scaled_finite_kernel_matrix(spec, p, 0.0, GRID, 0.0, GRID)
            errors.append(float(np.max(np.abs(approx - limit))))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] <= 0.05


def test_kernel_slice_assembly(kernels):
    section = KernelSection(kind=KernelKind.AIRY, xs=[0.0, 1.0], ys=[0.0])
    kernel_slice = kernels.kernel_slice(section, ModelSection())
    rows = kernel_slice.to_rows()
    assert len(rows) == 2
    assert rows[0]["value"] == pytest.approx(AIRY_AIP_0 ** 2, abs=1e-8)
    assert set(rows[0]) == {"t1", "x", "t2", "y", "value", "imag_residue"}

    finite = KernelSection(kind=KernelKind.FINITE, xs=[0.5], ys=[0.5])
    with pytest.raises(DimensionError):
        kernels.kernel_slice(finite, ModelSection(p=3))

    scaled = kernels.kernel_slice(KernelSection(kind=KernelKind.SCALED_FINITE), ModelSection(p=40))
    assert scaled.gauge != "none"
    assert scaled.meta["p"] == 40
