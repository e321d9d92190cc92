"""
Empirical distribution utilities and Kolmogorov-Smirnov tests
"""

import logging
import math
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy import special, stats

from app.config import settings
from app.exceptions import EmptySample, NonMonotoneCdf
from app.models import Ecdf, KsResult
from app.utils.rng import make_generator

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-9


def ecdf(sample) -> Ecdf:
    values = np.sort(np.asarray(sample, dtype=float).ravel())
    if values.size == 0:
        raise EmptySample("cannot build an ECDF from an empty sample")
    return Ecdf(values=values, n=values.size)


def kolmogorov_survival(lam: float) -> float:
    """Q(lam) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lam^2), the limiting KS tail"""
    return float(special.kolmogorov(max(lam, 0.0)))


def ks_two_sample(a, b) -> KsResult:
    """Two-sample KS statistic with the limiting p-value Q(D sqrt(n1 n2 / (n1 + n2)))"""
    fa = ecdf(a)
    fb = ecdf(b)
    statistic = float(stats.ks_2samp(fa.values, fb.values, method="asymp").statistic)
    effective = math.sqrt(fa.n * fb.n / (fa.n + fb.n))
    return KsResult(
        statistic=statistic,
        p_value=kolmogorov_survival(statistic * effective),
        n1=fa.n,
        n2=fb.n
    )


def ks_one_sample(a, cdf: Callable[[np.ndarray], np.ndarray]) -> KsResult:
    """One-sample KS against a supplied CDF (vectorized callable)"""
    fa = ecdf(a)
    model = np.asarray(cdf(fa.values), dtype=float)
    drops = np.diff(model)
    if drops.size and drops.min() < -MONOTONE_TOL:
        raise NonMonotoneCdf(
            f"supplied CDF decreases by {-drops.min():.3g}",
            {"max_drop": float(-drops.min())}
        )
    result = stats.ks_1samp(fa.values, cdf, method="asymp")
    return KsResult(
        statistic=float(result.statistic),
        p_value=float(result.pvalue),
        n1=fa.n
    )


def monotone_cdf(xi_grid: Sequence[float], values: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """Piecewise-linear CDF through (xi, value), made nondecreasing and clipped to [0, 1]"""
    grid = np.asarray(xi_grid, dtype=float)
    vals = np.clip(np.maximum.accumulate(np.asarray(values, dtype=float)), 0.0, 1.0)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("xi grid must be nonempty and strictly increasing")

    def cdf(x):
        return np.interp(x, grid, vals, left=0.0, right=1.0)

    return cdf


def seed_pass_count(p_values: Sequence[float], threshold: float = None) -> int:
    threshold = settings.KS_PASS_PVALUE if threshold is None else threshold
    return int(sum(1 for value in p_values if value > threshold))


def passes_seed_rule(p_values: Sequence[float]) -> bool:
    """At least KS_PASS_MIN_SEEDS of every 10 seeds above KS_PASS_PVALUE"""
    needed = math.ceil(settings.KS_PASS_MIN_SEEDS * len(p_values) / 10)
    return seed_pass_count(p_values) >= needed


def sup_distance(sample, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    return ks_one_sample(sample, cdf).statistic


def bootstrap_correlation(a, b, n_boot: int, seed: int, level: float = 0.95) -> Tuple[float, float, float]:
    """Pearson correlation with a percentile bootstrap interval"""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or a.size != b.size:
        raise EmptySample("correlation needs two nonempty samples of equal size")
    estimate = float(np.corrcoef(a, b)[0, 1])
    gen = make_generator(seed)
    draws = np.empty(n_boot)
    for k in range(n_boot):
        idx = gen.integers(0, a.size, a.size)
        draws[k] = np.corrcoef(a[idx], b[idx])[0, 1]
    tail = 0.5 * (1.0 - level)
    lo, hi = np.nanquantile(draws, [tail, 1.0 - tail])
    return estimate, float(lo), float(hi)
