"""
Inhomogeneous exponential last-passage percolation

The waiting grid is stored N x p: row k is level k (rate offset pihat[k]), column j
carries pi[j], so entry (k, j) is Exp(pi[j] + pihat[k]). Y(N, p) is then equal in law
to the largest eigenvalue of the p x N generalized Wishart matrix.
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np
from numba import njit

from app.config import settings
from app.exceptions import DimensionError
from app.models import ModelParams, SampleBatch, WaitingMatrix
from app.utils.rng import derive_seed, make_generator, uniform_open

logger = logging.getLogger(__name__)


@njit(cache=True, nogil=True)
def _profile_sweep(w):
    """Y(k, p) for every level k by one row-by-row sweep"""
    n, m = w.shape
    row = np.empty(m)
    out = np.empty(n)
    acc = 0.0
    for j in range(m):
        acc += w[0, j]
        row[j] = acc
    out[0] = row[m - 1]
    for i in range(1, n):
        row[0] += w[i, 0]
        for j in range(1, m):
            left = row[j - 1]
            below = row[j]
            row[j] = w[i, j] + (left if left > below else below)
        out[i] = row[m - 1]
    return out


def _check_dimensions(params: ModelParams, N: int, p: int):
    if not 1 <= N <= p:
        raise DimensionError(f"need 1 <= N <= p, got N = {N}, p = {p}", {"N": N, "p": p})
    if p != params.p:
        raise DimensionError(f"params have length {params.p}, requested p = {p}", {"p": p})


def rate_grid(params: ModelParams, N: int, p: int, orientation: str = "levels") -> np.ndarray:
    """
    Rates of the waiting grid.

    orientation="levels" gives the stored N x p grid (pihat[k] + pi[j]);
    orientation="wishart" gives its p x N transpose, pi[i] + pihat[j].
    """
    _check_dimensions(params, N, p)
    grid = params.pihat_array()[:N, None] + params.pi_array()[None, :]
    if orientation == "wishart":
        return grid.T.copy()
    if orientation != "levels":
        raise ValueError(f"unknown orientation {orientation!r}")
    return grid


def last_passage(W: WaitingMatrix) -> float:
    if W.entries.size == 0:
        raise DimensionError("empty waiting matrix")
    return float(_profile_sweep(np.ascontiguousarray(W.entries, dtype=np.float64))[-1])


def last_passage_profile(W: WaitingMatrix) -> np.ndarray:
    if W.entries.size == 0:
        raise DimensionError("empty waiting matrix")
    return _profile_sweep(np.ascontiguousarray(W.entries, dtype=np.float64))


def brute_force_last_passage(entries: np.ndarray) -> float:
    """Maximum over every up-right path, for small grids only"""
    n, m = entries.shape
    best = -np.inf
    for downs in itertools.combinations(range(n + m - 2), n - 1):
        i = j = 0
        total = entries[0, 0]
        steps = set(downs)
        for step in range(n + m - 2):
            if step in steps:
                i += 1
            else:
                j += 1
            total += entries[i, j]
        best = max(best, total)
    return float(best)


class PercolationService:
    """
    Monte Carlo sampling of last-passage times

    Sample k of a batch is drawn from PCG64 seeded with derive_seed(seed, k), so a
    batch is bit-identical whatever the number of worker threads.
    """

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers or settings.WORKERS

    def sample_waiting_matrix(self, params: ModelParams, N: int, p: int, seed: int) -> WaitingMatrix:
        rates = rate_grid(params, N, p)
        gen = make_generator(seed)
        entries = -np.log1p(-uniform_open(gen, rates.shape)) / rates
        return WaitingMatrix(entries=entries, seed=seed, rates=rates)

    def _sample_profile(self, params: ModelParams, N: int, p: int, seed: int, k: int) -> np.ndarray:
        W = self.sample_waiting_matrix(params, N, p, derive_seed(seed, k))
        return last_passage_profile(W)

    def _run(self, task, n_samples: int, workers: Optional[int]):
        workers = workers or self.workers
        indices = range(1, n_samples + 1)
        if workers <= 1 or n_samples < 2:
            return [task(k) for k in indices]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(task, indices))

    def sample_lpp_batch(
        self,
        params: ModelParams,
        N: int,
        p: int,
        n_samples: int,
        seed: int,
        workers: Optional[int] = None
    ) -> SampleBatch:
        """n_samples independent draws of Y(N, p)"""
        if n_samples < 1:
            raise DimensionError(f"n_samples must be >= 1, got {n_samples}")
        _check_dimensions(params, N, p)
        logger.info(f"Sampling {n_samples} last-passage times N={N} p={p} seed={seed}")

        values = self._run(
            lambda k: self._sample_profile(params, N, p, seed, k)[-1],
            n_samples, workers
        )
        return SampleBatch(
            values=np.asarray(values, dtype=float),
            seed=seed, N=N, p=p, n_samples=n_samples, source="lpp"
        )

    def sample_profile_batch(
        self,
        params: ModelParams,
        N: int,
        p: int,
        n_samples: int,
        seed: int,
        workers: Optional[int] = None
    ) -> np.ndarray:
        """n_samples x N matrix of level profiles (Y(1,p), ..., Y(N,p))"""
        if n_samples < 1:
            raise DimensionError(f"n_samples must be >= 1, got {n_samples}")
        _check_dimensions(params, N, p)
        logger.info(f"Sampling {n_samples} level profiles N={N} p={p} seed={seed}")

        rows = self._run(lambda k: self._sample_profile(params, N, p, seed, k), n_samples, workers)
        return np.vstack(rows)

    def warm_up(self):
        """Compile the DP kernel ahead of the first request"""
        _profile_sweep(np.ones((2, 2)))


# Singleton instance
_percolation_service = None


def get_percolation_service() -> PercolationService:
    """Get or create percolation service instance"""
    global _percolation_service
    if _percolation_service is None:
        _percolation_service = PercolationService()
    return _percolation_service
