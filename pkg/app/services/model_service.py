"""
Model parameters, validity checks and the edge scaling maps
"""

import logging
import math
from typing import Sequence

import numpy as np

from app.exceptions import DimensionError, LengthMismatch, LevelOutOfRange, NonPositiveRate
from app.models import EdgeCoordinates, ModelParams, ScalingSpec

logger = logging.getLogger(__name__)

# Guards floor() against binary round-off, e.g. 0.29 * 100 = 28.999999999999996
_FLOOR_GUARD = 1e-9


def time_coefficient(t: float) -> float:
    """2 sqrt(t)(1+sqrt(t))^2/alpha, equal to 2 (t(1+sqrt(t)))^{2/3}"""
    root = math.sqrt(t)
    return 2.0 * root * (1.0 + root) ** 2 / ScalingSpec(t=t).alpha


def validate_params(pi: Sequence[float], pihat: Sequence[float]) -> ModelParams:
    pi_arr = np.asarray(pi, dtype=float).ravel()
    pihat_arr = np.asarray(pihat, dtype=float).ravel()
    if pi_arr.size == 0 or pi_arr.size != pihat_arr.size:
        raise LengthMismatch(
            f"pi and pihat need equal lengths >= 1, got {pi_arr.size} and {pihat_arr.size}",
            {"len_pi": int(pi_arr.size), "len_pihat": int(pihat_arr.size)}
        )
    if not (np.all(np.isfinite(pi_arr)) and np.all(np.isfinite(pihat_arr))):
        raise LengthMismatch("rates must be finite")

    sums = pi_arr[:, None] + pihat_arr[None, :]
    bad = np.argwhere(sums <= 0)
    if bad.size:
        i, j = bad[0]
        raise NonPositiveRate(int(i) + 1, int(j) + 1, float(sums[i, j]))

    return ModelParams(pi=pi_arr.tolist(), pihat=pihat_arr.tolist())


def build_perturbed_params(spec: ScalingSpec, p: int) -> ModelParams:
    if p < max(spec.J1, spec.J2) + 1:
        raise DimensionError(
            f"p = {p} too small for J1 = {spec.J1}, J2 = {spec.J2}",
            {"p": p, "J1": spec.J1, "J2": spec.J2}
        )
    scale = spec.alpha * p ** (1.0 / 3.0)
    z0 = spec.z0
    pi = np.ones(p)
    pihat = np.zeros(p)
    if spec.J1:
        pi[:spec.J1] = z0 + np.asarray(spec.x) / scale
    if spec.J2:
        pihat[:spec.J2] = -z0 - np.asarray(spec.y) / scale
    return validate_params(pi, pihat)


def level_of(spec: ScalingSpec, p: int, time: float) -> int:
    value = spec.t * p + p ** (2.0 / 3.0) * time_coefficient(spec.t) * time
    return int(math.floor(value + _FLOOR_GUARD))


def edge_coordinates(spec: ScalingSpec, p: int, time: float, position: float) -> EdgeCoordinates:
    r = level_of(spec, p, time)
    if r < 1 or r > p:
        raise LevelOutOfRange(r, p, time)
    s1 = r / p
    u = (1.0 + math.sqrt(s1)) ** 2 + spec.alpha * position / p ** (2.0 / 3.0)
    z0 = spec.z0
    return EdgeCoordinates(
        r=r,
        u=u,
        s1=s1,
        conjugation_exponent=p * z0 * u - r * math.log(z0),
        time=time,
        position=position,
        p=p
    )


def position_of(spec: ScalingSpec, p: int, time: float, u) -> np.ndarray:
    """Inverse of the position map at the level of `time`"""
    r = level_of(spec, p, time)
    centre = (1.0 + math.sqrt(r / p)) ** 2
    return (np.asarray(u, dtype=float) - centre) * p ** (2.0 / 3.0) / spec.alpha


def theorem2_scaling(spec: ScalingSpec, p: int, s: float, raw_Y):
    """
    Edge-scaled last-passage value (raw_Y/p - (1+sqrt(r/p))^2) p^{2/3}/alpha.

    Vectorized over raw_Y. The literal prefactor variant is `theorem2_literal`.
    """
    raw = np.asarray(raw_Y, dtype=float)
    value = position_of(spec, p, s, raw / p)
    if logger.isEnabledFor(logging.DEBUG) and raw.size:
        literal = theorem2_literal(spec, p, s, raw)
        ratio = np.ravel(literal)[0] / np.ravel(value)[0] if np.ravel(value)[0] != 0 else float("nan")
        logger.debug(f"theorem2 scaling p={p} s={s}: literal/canonical ratio {ratio:.6g}")
    return float(value) if value.ndim == 0 else value


def theorem2_literal(spec: ScalingSpec, p: int, s: float, raw_Y):
    """p^{-1/3} t^{1/6} (1+sqrt(t))^{4/3} (raw_Y - sigma_s), sigma_s = p (1 + sqrt(alpha_s))^2"""
    t = spec.t
    alpha_s = t + time_coefficient(t) * s / p ** (1.0 / 3.0)
    if alpha_s <= 0:
        raise LevelOutOfRange(level_of(spec, p, s), p, s)
    sigma_s = p * (1.0 + math.sqrt(alpha_s)) ** 2
    prefactor = p ** (-1.0 / 3.0) * t ** (1.0 / 6.0) * (1.0 + math.sqrt(t)) ** (4.0 / 3.0)
    value = prefactor * (np.asarray(raw_Y, dtype=float) - sigma_s)
    return float(value) if value.ndim == 0 else value
