"""
Generalized Wishart ensemble and the continuous Schur measure
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
import scipy.linalg

from app.config import settings
from app.exceptions import ConvergenceFailure, DegenerateParameters, DimensionError
from app.models import ComplexMatrix, ModelParams, SampleBatch, Spectrum
from app.services.percolation_service import rate_grid
from app.utils.rng import derive_seed, make_generator
from app.utils.specfun import interval_rule

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
PSD_TOL = 1e-12
DEGENERACY_TOL = 1e-9
MONOTONE_TOL = 1e-10


def _gram(X: ComplexMatrix) -> np.ndarray:
    entries = X.entries
    M = entries @ entries.conj().T
    return 0.5 * (M + M.conj().T)


def hermitian_spectrum(X: ComplexMatrix) -> Spectrum:
    """Full spectrum of X X* (p eigenvalues, descending) with residual check"""
    M = _gram(X)
    try:
        eigenvalues, vectors = scipy.linalg.eigh(M)
    except np.linalg.LinAlgError as e:
        raise ConvergenceFailure(f"Hermitian eigensolver failed: {e}") from e

    scale = max(float(np.linalg.norm(M, 2)), np.finfo(float).tiny)
    residuals = np.linalg.norm(M @ vectors - vectors * eigenvalues, axis=0)
    max_residual = float(residuals.max()) / scale
    if max_residual > RESIDUAL_TOL:
        raise ConvergenceFailure(
            f"eigen-residual {max_residual:.3g} exceeds {RESIDUAL_TOL}",
            {"residual": max_residual}
        )
    if eigenvalues[0] < -PSD_TOL * scale * M.shape[0]:
        raise ConvergenceFailure(f"spectrum not positive semidefinite: {eigenvalues[0]:.3g}")
    return Spectrum(eigenvalues=eigenvalues[::-1].copy(), max_residual=max_residual)


def largest_eigenvalue(X: ComplexMatrix) -> float:
    """lambda_max(X X*) through the smaller of the two Gram matrices"""
    entries = X.entries
    small = entries.conj().T @ entries if entries.shape[1] <= entries.shape[0] else entries @ entries.conj().T
    small = 0.5 * (small + small.conj().T)
    n = small.shape[0]
    try:
        top = scipy.linalg.eigh(small, eigvals_only=True, subset_by_index=[n - 1, n - 1])
    except np.linalg.LinAlgError as e:
        raise ConvergenceFailure(f"Hermitian eigensolver failed: {e}") from e
    return float(top[0])


def _growth_profile(entries: np.ndarray) -> np.ndarray:
    """lambda_max of the first k columns, k = 1..N"""
    n_cols = entries.shape[1]
    profile = np.empty(n_cols)
    for k in range(1, n_cols + 1):
        block = entries[:, :k]
        gram = block.conj().T @ block
        gram = 0.5 * (gram + gram.conj().T)
        profile[k - 1] = scipy.linalg.eigh(gram, eigvals_only=True, subset_by_index=[k - 1, k - 1])[0]

    drops = profile[:-1] - profile[1:]
    if drops.size and drops.max() > MONOTONE_TOL * max(profile[-1], 1.0):
        raise ConvergenceFailure(
            f"growth profile decreased by {drops.max():.3g}",
            {"max_drop": float(drops.max())}
        )
    return np.maximum.accumulate(profile)


class EnsembleService:
    """
    Sampling of p x N complex Gaussian matrices with E|X_ij|^2 = 1/(pi_i + pihat_j)
    """

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers or settings.WORKERS

    def sample_gwishart(self, params: ModelParams, N: int, p: int, seed: int) -> ComplexMatrix:
        rates = rate_grid(params, N, p, orientation="wishart")
        gen = make_generator(seed)
        gaussian = gen.standard_normal((2, p, N))
        scale = np.sqrt(0.5 / rates)
        return ComplexMatrix(entries=(gaussian[0] + 1j * gaussian[1]) * scale, seed=seed)

    def _run(self, task, n_samples: int, workers: Optional[int]):
        workers = workers or self.workers
        indices = range(1, n_samples + 1)
        if workers <= 1 or n_samples < 2:
            return [task(k) for k in indices]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task, indices))

    def sample_lambda_max_batch(
        self,
        params: ModelParams,
        N: int,
        p: int,
        n_samples: int,
        seed: int,
        workers: Optional[int] = None
    ) -> SampleBatch:
        if n_samples < 1:
            raise DimensionError(f"n_samples must be >= 1, got {n_samples}")
        logger.info(f"Sampling {n_samples} largest eigenvalues N={N} p={p} seed={seed}")

        values = self._run(
            lambda k: largest_eigenvalue(self.sample_gwishart(params, N, p, derive_seed(seed, k))),
            n_samples, workers
        )
        return SampleBatch(
            values=np.asarray(values, dtype=float),
            seed=seed, N=N, p=p, n_samples=n_samples, source="wishart"
        )

    def sample_growth_profile(self, params: ModelParams, p: int, seed: int) -> np.ndarray:
        """One draw of (lambda_max(X_k X_k*))_{k=1..p}, columns appended one at a time"""
        if p < 1:
            raise DimensionError(f"p must be >= 1, got {p}")
        X = self.sample_gwishart(params, p, p, seed)
        return _growth_profile(X.entries)

    def sample_growth_batch(
        self,
        params: ModelParams,
        p: int,
        n_samples: int,
        seed: int,
        workers: Optional[int] = None
    ) -> np.ndarray:
        """n_samples x p matrix of growth profiles, sample k seeded by derive_seed(seed, k)"""
        if n_samples < 1:
            raise DimensionError(f"n_samples must be >= 1, got {n_samples}")
        logger.info(f"Sampling {n_samples} growth profiles p={p} seed={seed}")
        rows = self._run(
            lambda k: self.sample_growth_profile(params, p, derive_seed(seed, k)),
            n_samples, workers
        )
        return np.vstack(rows)


# ---------------------------------------------------------------------------
# Continuous Schur measure
# ---------------------------------------------------------------------------

def _check_distinct(values: np.ndarray, name: str):
    gaps = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.size and gaps.min() < DEGENERACY_TOL:
        raise DegenerateParameters(
            f"{name} has coincident entries (gap {gaps.min():.3g}); confluent limits are not implemented",
            {"name": name, "gap": float(gaps.min())}
        )


def log_cauchy_normalizer(params: ModelParams):
    """
    (sign, log|Z|) of Z = det(1/(pi_i + pihat_j)) from the Cauchy product
    prod_{i<j} (pi_i - pi_j)(pihat_i - pihat_j) / prod_{i,j} (pi_i + pihat_j)
    """
    pi = params.pi_array()
    pihat = params.pihat_array()
    sign = 1.0
    log_abs = 0.0
    for i, j in itertools.combinations(range(params.p), 2):
        factor = (pi[i] - pi[j]) * (pihat[i] - pihat[j])
        sign *= math.copysign(1.0, factor)
        log_abs += math.log(abs(factor))
    log_abs -= float(np.sum(np.log(pi[:, None] + pihat[None, :])))
    return sign, log_abs


def schur_density(params: ModelParams, xs) -> float:
    """
    (1/Z) det(e^{-pi_i x_j}) det(e^{-pihat_i x_j}), a probability density on the
    ordered chamber x_1 >= ... >= x_p (the expression is symmetric in the x's)
    """
    pi = params.pi_array()
    pihat = params.pihat_array()
    _check_distinct(pi, "pi")
    _check_distinct(pihat, "pihat")
    x = np.asarray(xs, dtype=float).ravel()
    if x.size != params.p:
        raise DimensionError(f"need {params.p} points, got {x.size}")
    if np.any(x < 0):
        raise DimensionError("schur_density is supported on x >= 0")

    sign_a, log_a = np.linalg.slogdet(np.exp(-pi[:, None] * x[None, :]))
    sign_b, log_b = np.linalg.slogdet(np.exp(-pihat[:, None] * x[None, :]))
    if sign_a == 0 or sign_b == 0:
        return 0.0
    sign_z, log_z = log_cauchy_normalizer(params)
    return float(sign_a * sign_b * sign_z * math.exp(log_a + log_b - log_z))


def wishart_max_cdf(params: ModelParams, x: float) -> float:
    """
    P(lambda_max <= x) for N = p:
    det[(1 - e^{-c_ij x})/c_ij] / det[1/c_ij] with c_ij = pi_i + pihat_j
    """
    if x <= 0:
        return 0.0
    pi = params.pi_array()
    pihat = params.pihat_array()
    _check_distinct(pi, "pi")
    _check_distinct(pihat, "pihat")
    c = pi[:, None] + pihat[None, :]
    sign_num, log_num = np.linalg.slogdet(-np.expm1(-c * x) / c)
    if sign_num == 0:
        return 0.0
    sign_z, log_z = log_cauchy_normalizer(params)
    return float(sign_num * sign_z * math.exp(log_num - log_z))


def max_cdf_by_quadrature(params: ModelParams, x: float, n: int = 48, panels: int = 4) -> float:
    """P(max <= x) by tensor Gauss-Legendre integration of the symmetric density over [0, x]^p / p!"""
    p = params.p
    if p > 3:
        raise DimensionError(f"tensor quadrature limited to p <= 3, got {p}")
    if x <= 0:
        return 0.0
    rule = interval_rule(0.0, x, n, panels)
    total = 0.0
    for combo in itertools.product(range(len(rule)), repeat=p):
        idx = list(combo)
        weight = float(np.prod(rule.weights[idx]))
        total += weight * schur_density(params, rule.nodes[idx])
    return total / math.factorial(p)


# Singleton instance
_ensemble_service = None


def get_ensemble_service() -> EnsembleService:
    """Get or create ensemble service instance"""
    global _ensemble_service
    if _ensemble_service is None:
        _ensemble_service = EnsembleService()
    return _ensemble_service
