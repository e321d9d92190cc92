"""
Nystrom discretization of Fredholm determinants det(I - f K f)

A problem with times t_1..t_m and thresholds xi_1..xi_m is discretized by Gauss-Legendre
rules on [xi_i, xi_i + T]; the block matrix A[(i,a),(j,b)] = sqrt(w_a w_b) K(t_i, x_a; t_j, x_b)
is balanced by an exact power-of-two diagonal similarity and factorized with partial pivoting.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
import scipy.linalg
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from app.config import settings
from app.exceptions import DimensionError, NonConvergent, ProblemTooLarge, TruncationInsufficient
from app.models import (
    FredholmProblem,
    GapResult,
    KernelKind,
    KernelStrategy,
    ModelParams,
    ModelSection,
    QuadratureRule,
    ScalingSpec,
)
from app.services.kernel_service import KernelService, get_kernel_service
from app.services.model_service import build_perturbed_params
from app.utils.specfun import interval_rule

logger = logging.getLogger(__name__)

# Largest Gauss-Legendre panel used for one block
_MAX_PANEL_NODES = 256


class KernelEvaluator(Protocol):
    """Anything that can fill one Nystrom block K(t_i, xs; t_j, ys)"""

    name: str

    def block(self, t_i: float, xs: np.ndarray, t_j: float, ys: np.ndarray) -> np.ndarray:
        ...


class ZeroKernelEvaluator:
    name = "zero"

    def block(self, t_i, xs, t_j, ys):
        return np.zeros((len(xs), len(ys)))


class AiryKernelEvaluator:
    """K_{Ai;X,Y} at times t_i, t_j (the bare extended Airy kernel for an empty spec)"""

    def __init__(self, spec: ScalingSpec, kernels: Optional[KernelService] = None):
        self.spec = spec
        self.kernels = kernels or get_kernel_service()
        self.name = "airy" if spec.is_empty else f"airy J1={spec.J1} J2={spec.J2}"

    def block(self, t_i, xs, t_j, ys):
        values, _ = self.kernels.extended_airy_two_params_matrix(t_i, xs, t_j, ys, self.spec)
        return values


class AiryContourKernelEvaluator:
    """Bare extended Airy kernel from its double contour integral"""

    name = "airy contour"

    def __init__(self, kernels: Optional[KernelService] = None):
        self.kernels = kernels or get_kernel_service()

    def block(self, t_i, xs, t_j, ys):
        values, _ = self.kernels.extended_airy_contour_matrix(t_i, xs, t_j, ys)
        return values


class FiniteKernelEvaluator:
    """K(r, u; s, v); problem times are the integer levels"""

    def __init__(
        self,
        params: ModelParams,
        strategy: KernelStrategy = KernelStrategy.WEDGE,
        kernels: Optional[KernelService] = None
    ):
        self.params = params
        self.strategy = strategy
        self.kernels = kernels or get_kernel_service()
        self.loops = self.kernels.contour_pair(params, strategy)
        self.name = f"finite p={params.p} {strategy.value}"

    def block(self, t_i, xs, t_j, ys):
        values, _ = self.kernels.finite_kernel_matrix(
            self.params, int(round(t_i)), xs, int(round(t_j)), ys, self.strategy, loops=self.loops
        )
        return values


class ScaledFiniteKernelEvaluator:
    """Conjugated edge-scaled finite kernel in limit coordinates (times, positions)"""

    def __init__(
        self,
        spec: ScalingSpec,
        p: int,
        strategy: KernelStrategy = KernelStrategy.WEDGE,
        kernels: Optional[KernelService] = None
    ):
        self.spec = spec
        self.p = p
        self.strategy = strategy
        self.kernels = kernels or get_kernel_service()
        self.params = build_perturbed_params(spec, p)
        self.name = f"scaled finite p={p} {strategy.value}"

    def block(self, t_i, xs, t_j, ys):
        values, _ = self.kernels.scaled_finite_kernel_matrix(
            self.spec, self.p, t_i, xs, t_j, ys, self.strategy, params=self.params
        )
        return values


def build_evaluator(
    kind: KernelKind,
    model: ModelSection,
    strategy: KernelStrategy = KernelStrategy.WEDGE,
    kernels: Optional[KernelService] = None
) -> KernelEvaluator:
    kernels = kernels or get_kernel_service()
    spec = model.scaling_spec()
    if kind == KernelKind.AIRY:
        return AiryKernelEvaluator(ScalingSpec(t=model.t), kernels)
    if kind == KernelKind.AIRY_CONTOUR:
        return AiryContourKernelEvaluator(kernels)
    if kind == KernelKind.AIRY_TWO_PARAMS:
        return AiryKernelEvaluator(spec, kernels)
    if kind == KernelKind.FINITE:
        return FiniteKernelEvaluator(kernels.model_params(model), strategy, kernels)
    return ScaledFiniteKernelEvaluator(spec, model.p, strategy, kernels)


class _NotYetConverged(Exception):
    """Raised inside the refinement loop until two node counts agree"""

    def __init__(self, nodes: int, value: float, change: float):
        super().__init__(f"n={nodes}: value {value:.12g}, change {change:.3g}")
        self.nodes = nodes
        self.value = value
        self.change = change


def _block_rule(a: float, b: float, n: int) -> QuadratureRule:
    panels = 1
    while n % panels or n // panels > _MAX_PANEL_NODES:
        panels += 1
    return interval_rule(a, b, n // panels, panels)


def det_i_minus(A: np.ndarray) -> float:
    """det(I - A) by balancing then LU with partial pivoting"""
    M = np.eye(A.shape[0]) - A
    if M.size == 0:
        return 1.0
    balanced, _ = scipy.linalg.matrix_balance(M, permute=False)
    lu, piv = scipy.linalg.lu_factor(balanced, check_finite=True)
    diag = np.diag(lu)
    if np.any(diag == 0):
        return 0.0
    swaps = int(np.sum(piv != np.arange(piv.size)))
    sign = (-1.0) ** swaps * float(np.prod(np.sign(diag)))
    return sign * math.exp(float(np.sum(np.log(np.abs(diag)))))


def diagonal_gauge_check(A: np.ndarray, d: Sequence[float]) -> float:
    """|det(I - A) - det(I - D A D^{-1})| for D = diag(d)"""
    A = np.asarray(A, dtype=float)
    d = np.asarray(d, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or d.shape != (A.shape[0],):
        raise DimensionError(f"need a square matrix and a matching scale vector, got {A.shape} and {d.shape}")
    conjugated = (d[:, None] * A) / d[None, :]
    return abs(det_i_minus(A) - det_i_minus(conjugated))


class FredholmService:
    """Gap probabilities of determinantal kernels"""

    def __init__(self, workers: Optional[int] = None):
        self.workers = workers or settings.WORKERS

    def discretize(self, kernel: KernelEvaluator, prob: FredholmProblem, n: int) -> np.ndarray:
        """Symmetrically weighted m*n x m*n Nystrom matrix"""
        rules = [_block_rule(xi, xi + prob.truncation, n) for xi in prob.thresholds]
        roots = [np.sqrt(rule.weights) for rule in rules]
        size = prob.m * n
        A = np.empty((size, size))
        for i, t_i in enumerate(prob.times):
            for j, t_j in enumerate(prob.times):
                block = kernel.block(t_i, rules[i].nodes, t_j, rules[j].nodes)
                A[i * n:(i + 1) * n, j * n:(j + 1) * n] = roots[i][:, None] * block * roots[j][None, :]
        return A

    def tail_estimate(self, kernel: KernelEvaluator, prob: FredholmProblem) -> float:
        """max_i |K(t_i, xi_i + T; t_i, xi_i + T)|"""
        tails = [
            abs(float(kernel.block(t, np.array([xi + prob.truncation]), t, np.array([xi + prob.truncation]))[0, 0]))
            for t, xi in zip(prob.times, prob.thresholds)
        ]
        return max(tails)

    def determinant(self, kernel: KernelEvaluator, prob: FredholmProblem, n: Optional[int] = None) -> float:
        """det(I - A) at a fixed node count, no refinement"""
        n = n or prob.nodes_per_block
        if prob.m * n > settings.FREDHOLM_MAX_SIZE:
            raise ProblemTooLarge(
                f"m*n = {prob.m * n} exceeds {settings.FREDHOLM_MAX_SIZE}",
                {"m": prob.m, "n": n}
            )
        return det_i_minus(self.discretize(kernel, prob, n))

    def _get_retry_decorator(self):
        return retry(
            stop=stop_after_attempt(settings.FREDHOLM_MAX_REFINEMENTS + 1),
            retry=retry_if_exception_type(_NotYetConverged),
            reraise=True
        )

    def gap_probability(self, kernel: KernelEvaluator, prob: FredholmProblem) -> GapResult:
        """
        det(I - f K f) with node doubling until two successive values agree to
        FREDHOLM_DOUBLING_TOL.
        """
        tail = self.tail_estimate(kernel, prob)
        if tail > settings.FREDHOLM_TAIL_TOL:
            raise TruncationInsufficient(
                f"kernel magnitude {tail:.3g} at xi + T exceeds {settings.FREDHOLM_TAIL_TOL}; increase the truncation",
                {"tail": tail, "truncation": prob.truncation}
            )
        if prob.m * prob.nodes_per_block > settings.FREDHOLM_MAX_SIZE:
            raise ProblemTooLarge(
                f"m*n = {prob.m * prob.nodes_per_block} exceeds {settings.FREDHOLM_MAX_SIZE}",
                {"m": prob.m, "n": prob.nodes_per_block}
            )

        state = {"n": prob.nodes_per_block, "previous": None}
        retry_decorator = self._get_retry_decorator()

        @retry_decorator
        def _refine() -> Tuple[float, int]:
            n = state["n"]
            if prob.m * n > settings.FREDHOLM_MAX_SIZE:
                raise NonConvergent(
                    f"node doubling reached the size cap at n={n // 2} without agreement",
                    {"nodes": n // 2}
                )
            value = det_i_minus(self.discretize(kernel, prob, n))
            previous = state["previous"]
            state["previous"] = value
            state["n"] = 2 * n
            change = math.inf if previous is None else abs(value - previous)
            logger.debug(f"{kernel.name}: n={n} det={value:.12g} change={change:.3g}")
            if change > settings.FREDHOLM_DOUBLING_TOL:
                raise _NotYetConverged(n, value, change)
            return value, n

        try:
            raw, nodes = _refine()
        except _NotYetConverged as e:
            raise NonConvergent(
                f"{kernel.name}: determinant still changed by {e.change:.3g} at n={e.nodes}",
                {"nodes": e.nodes, "change": e.change, "value": e.value}
            ) from e

        in_range = 0.0 <= raw <= 1.0
        if not in_range:
            logger.warning(f"{kernel.name}: determinant {raw:.3g} outside [0, 1] at thresholds {prob.thresholds}")
        return GapResult(
            value=min(1.0, max(0.0, raw)),
            raw=raw,
            flag="ok" if in_range else "out_of_range",
            nodes_per_block=nodes,
            tail=tail
        )

    def gap_curve(
        self,
        kernel: KernelEvaluator,
        prob: FredholmProblem,
        xi_grid: Sequence[float],
        workers: Optional[int] = None
    ) -> List[GapResult]:
        """gap_probability with every threshold set to xi, for each xi of the grid"""
        problems = [
            prob.model_copy(update={"thresholds": [float(xi)] * prob.m})
            for xi in xi_grid
        ]
        workers = workers or self.workers
        logger.info(f"Gap curve for {kernel.name}: {len(problems)} thresholds, m={prob.m}")
        if workers <= 1 or len(problems) < 2:
            return [self.gap_probability(kernel, problem) for problem in problems]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda problem: self.gap_probability(kernel, problem), problems))


# Singleton instance
_fredholm_service = None


def get_fredholm_service() -> FredholmService:
    """Get or create Fredholm service instance"""
    global _fredholm_service
    if _fredholm_service is None:
        _fredholm_service = FredholmService()
    return _fredholm_service
