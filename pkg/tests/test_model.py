"""
Parameters and edge scaling maps
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.exceptions import DimensionError, LengthMismatch, LevelOutOfRange, NonPositiveRate
from app.models import ModelSection, ScalingSpec
from app.services.model_service import (
    build_perturbed_params,
    edge_coordinates,
    level_of,
    position_of,
    theorem2_literal,
    theorem2_scaling,
    time_coefficient,
    validate_params,
)


def test_scaling_constants():
    t = 0.25
    spec = ScalingSpec(t=t)
    assert spec.alpha == pytest.approx(1.5 ** (4 / 3) / 0.25 ** (1 / 6))
    assert spec.z0 == pytest.approx(1 / 3)
    assert time_coefficient(t) == pytest.approx(2 * (t * (1 + math.sqrt(t))) ** (2 / 3))
    assert spec.is_empty


def test_spec_requires_separated_parameters():
    with pytest.raises(ValidationError):
        ScalingSpec(t=0.25, x=[0.0], y=[0.5])
    with pytest.raises(ValidationError):
        ScalingSpec(t=1.5)


def test_validate_params_errors():
    with pytest.raises(LengthMismatch):
        validate_params([1.0], [1.0, 2.0])
    with pytest.raises(NonPositiveRate) as info:
        validate_params([1.0, -2.0], [0.5, 0.5])
    assert info.value.details["i"] == 2
    assert info.value.exit_code == 2


def test_perturbed_params_layout():
    spec = ScalingSpec(t=0.25, x=[1.0, 2.0], y=[-1.0])
    p = 27
    params = build_perturbed_params(spec, p)
    scale = spec.alpha * p ** (1 / 3)
    assert params.p == p
    assert params.pi[0] == pytest.approx(spec.z0 + 1.0 / scale)
    assert params.pi[1] == pytest.approx(spec.z0 + 2.0 / scale)
    assert params.pi[2:] == [1.0] * (p - 2)
    assert params.pihat[0] == pytest.approx(-spec.z0 + 1.0 / scale)
    assert params.pihat[1:] == [0.0] * (p - 1)


def test_perturbed_params_need_room():
    with pytest.raises(DimensionError):
        build_perturbed_params(ScalingSpec(t=0.25, x=[1.0]), 1)


def test_level_floor_guard():
    spec = ScalingSpec(t=0.29)
    assert level_of(spec, 100, 0.0) == 29
    assert level_of(ScalingSpec(t=0.25), 64, 0.0) == 16


def test_edge_coordinates():
    spec = ScalingSpec(t=0.25)
    coords = edge_coordinates(spec, 64, 0.0, 1.0)
    assert coords.r == 16
    assert coords.s1 == pytest.approx(0.25)
    expected_u = 2.25 + spec.alpha / 64 ** (2 / 3)
    assert coords.u == pytest.approx(expected_u)
    assert coords.conjugation_exponent == pytest.approx(64 * spec.z0 * expected_u - 16 * math.log(spec.z0))
    assert position_of(spec, 64, 0.0, coords.u) == pytest.approx(1.0)


def test_edge_coordinates_out_of_range():
    with pytest.raises(LevelOutOfRange):
        edge_coordinates(ScalingSpec(t=0.25), 64, -100.0, 0.0)


def test_theorem2_scaling_centre_and_vectorization():
    spec = ScalingSpec(t=0.25)
    p = 64
    r = level_of(spec, p, 0.0)
    centre = p * (1 + math.sqrt(r / p)) ** 2
    assert theorem2_scaling(spec, p, 0.0, centre) == pytest.approx(0.0, abs=1e-12)

    raw = centre + np.array([-3.0, 0.0, 5.0])
    scaled = theorem2_scaling(spec, p, 0.0, raw)
    assert isinstance(scaled, np.ndarray)
    np.testing.assert_allclose(scaled, np.array([-3.0, 0.0, 5.0]) * p ** (-1 / 3) / spec.alpha, atol=1e-12)


def test_theorem2_literal_shares_the_centre_at_time_zero():
    spec = ScalingSpec(t=0.25)
    p = 64
    centre = p * 2.25
    assert theorem2_literal(spec, p, 0.0, centre) == pytest.approx(0.0, abs=1e-12)
    assert theorem2_literal(spec, p, 0.0, centre + 4.0) > 0


def test_model_section_checks():
    with pytest.raises(ValidationError):
        ModelSection(p=2, N=3)
    with pytest.raises(ValidationError):
        ModelSection(p=2, pi=[1.0, 1.0])
    with pytest.raises(ValidationError):
        ModelSection(p=2, pi=[1.0], pihat=[0.0])
    assert ModelSection(p=5).levels == 5
    assert ModelSection(p=5, N=3).levels == 3
