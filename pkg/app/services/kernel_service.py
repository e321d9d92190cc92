"""
Correlation kernels

* the extended Airy kernel, by lambda-quadrature and by its double contour integral;
* the extended Airy kernel with two sets of parameters (direct and finite-rank forms);
* the finite-p kernel K(r,u;s,v) with the Psi_{r,s} correction;
* the conjugated edge-scaled finite kernel.

Contour integrands are accumulated in log form and stabilized by a max shift per grid
point before exponentiation. Every matrix routine returns the real part and logs a
warning when the discarded imaginary part is larger than IMAG_RESIDUE_TOL.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.exceptions import (
    BadContours,
    ContourInfeasible,
    DimensionError,
    LevelOutOfRange,
    OverflowGuard,
    UnsupportedWindow,
)
from app.models import (
    ContourKind,
    ContourSpec,
    KernelKind,
    KernelSection,
    KernelSlice,
    KernelStrategy,
    ModelParams,
    ModelSection,
    Orientation,
    QuadratureRule,
    ScalingSpec,
)
from app.services.model_service import build_perturbed_params, level_of, validate_params
from app.utils.specfun import airy_ai, circle_contour, heat_kernel, interval_rule, wedge_contour, wedge_loop

logger = logging.getLogger(__name__)

TWO_PI_I = 2j * math.pi

# Supported window of the limit kernels
MAX_TIME_GAP = 4.0
POSITION_MIN = -10.0
POSITION_MAX = 20.0

# ln(1e12): e^{-lambda d} below 1e-12 past this many units of lambda d
_TAIL_LOG = 27.7
_AIRY_LEFT_LIMIT = 30.0


@dataclass(frozen=True)
class LoopPair:
    """z-contour around the pi's, w-contour around the -pihat's, both counterclockwise"""
    z: QuadratureRule
    w: QuadratureRule
    strategy: KernelStrategy


def _as_array(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=float))


def _check_window(t1: float, t2: float, xs: np.ndarray, ys: np.ndarray):
    if abs(t1 - t2) > MAX_TIME_GAP:
        raise UnsupportedWindow(
            f"|t1 - t2| = {abs(t1 - t2):.4g} exceeds {MAX_TIME_GAP}",
            {"t1": t1, "t2": t2}
        )
    points = np.concatenate([xs, ys])
    if points.min() < POSITION_MIN or points.max() > POSITION_MAX:
        raise UnsupportedWindow(
            f"positions must lie in [{POSITION_MIN}, {POSITION_MAX}], got [{points.min():.4g}, {points.max():.4g}]",
            {"min": float(points.min()), "max": float(points.max())}
        )


def _discard_imaginary(values: np.ndarray, what: str) -> Tuple[np.ndarray, float]:
    residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
    scale = 1.0 + (float(np.max(np.abs(values.real))) if values.size else 0.0)
    if residue > settings.IMAG_RESIDUE_TOL * scale:
        logger.warning(f"{what}: imaginary residue {residue:.3g} above tolerance (scale {scale:.3g})")
    return np.ascontiguousarray(values.real), residue


def _scaled_exp(logs: np.ndarray, axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """exp(logs - shift) with shift = max real part along `axis`; returns (values, shift)"""
    shift = np.max(logs.real, axis=axis, keepdims=True)
    return np.exp(logs - shift), np.squeeze(shift, axis=axis)


def _guard(total_shift: np.ndarray, what: str):
    worst = float(np.max(total_shift)) if total_shift.size else 0.0
    if worst > settings.OVERFLOW_LOG_LIMIT:
        raise OverflowGuard(
            f"{what}: log-magnitude {worst:.1f} exceeds {settings.OVERFLOW_LOG_LIMIT} after stabilization",
            {"log_magnitude": worst}
        )


class KernelService:
    """Evaluators for every kernel of the laboratory"""

    # ------------------------------------------------------------------
    # Extended Airy kernel
    # ------------------------------------------------------------------

    def _lambda_rule(self, lo: float, hi: float) -> QuadratureRule:
        return interval_rule(lo, hi, settings.LAMBDA_NODES, settings.LAMBDA_PANELS)

    def _lambda_integral(self, d: float, xs: np.ndarray, ys: np.ndarray, rule: QuadratureRule) -> np.ndarray:
        """sum_k w_k e^{-lambda_k d} Ai(x + lambda_k) Ai(y + lambda_k)"""
        lam = rule.nodes
        weighted = rule.weights * np.exp(-lam * d)
        ai_x = np.vstack([airy_ai(x + lam, strict=False) for x in xs])
        if np.array_equal(xs, ys):
            return (ai_x * weighted) @ ai_x.T
        ai_y = np.vstack([airy_ai(y + lam, strict=False) for y in ys])
        return (ai_x * weighted) @ ai_y.T

    def extended_airy_matrix(self, t1: float, xs: Sequence[float], t2: float, ys: Sequence[float]) -> np.ndarray:
        """
        K_Ai(t1, x; t2, y) on the grid xs x ys.

        For t1 >= t2 the integral over [0, inf) is truncated where Ai(min + lambda) has
        decayed below e^{-80}. For t1 < t2 the integral over (-inf, 0] is taken directly
        when e^{-(t2-t1) L} <= 1e-12 is reachable inside the Airy range, and otherwise as
        the positive-lambda integral minus the heat kernel.
        """
        xs = _as_array(xs)
        ys = _as_array(ys)
        _check_window(t1, t2, xs, ys)
        d = t1 - t2
        low = float(min(xs.min(), ys.min()))

        if d >= 0:
            return self._lambda_integral(d, xs, ys, self._lambda_rule(0.0, 25.0 - low))

        gap = -d
        depth = _TAIL_LOG / gap
        if depth <= _AIRY_LEFT_LIMIT + low:
            return -self._lambda_integral(d, xs, ys, self._lambda_rule(-depth, 0.0))

        upper = 25.0 - low + 5.0 * gap
        positive = self._lambda_integral(d, xs, ys, self._lambda_rule(0.0, upper))
        return positive - heat_kernel(gap, xs[:, None], ys[None, :])

    def extended_airy(self, t1: float, x: float, t2: float, y: float) -> float:
        return float(self.extended_airy_matrix(t1, [x], t2, [y])[0, 0])

    def airy_contours(self, v_Gamma: float, v_gamma: float) -> Tuple[QuadratureRule, QuadratureRule]:
        """Gamma (angle 2pi/3, upward) and gamma (angle pi/3, downward) wedges"""
        common = dict(
            kind=ContourKind.RAY_WEDGE,
            truncation_radius=settings.WEDGE_TRUNCATION_RADIUS,
            panels=settings.WEDGE_PANELS,
            nodes_per_panel=settings.WEDGE_NODES_PER_PANEL,
            grading=settings.WEDGE_GRADING,
        )
        big = wedge_contour(ContourSpec(
            vertex=complex(v_Gamma), angle=2 * math.pi / 3, orientation=Orientation.UP, **common
        ))
        small = wedge_contour(ContourSpec(
            vertex=complex(v_gamma), angle=math.pi / 3, orientation=Orientation.DOWN, **common
        ))
        return big, small

    def _airy_factors(self, xs: np.ndarray, ys: np.ndarray, Gamma: QuadratureRule, gamma: QuadratureRule):
        sigma = gamma.nodes
        tau = Gamma.nodes
        F = gamma.weights * np.exp(-xs[:, None] * sigma + sigma ** 3 / 3.0)
        G = Gamma.weights * np.exp(ys[:, None] * tau - tau ** 3 / 3.0)
        return F, G

    def extended_airy_contour_matrix(
        self,
        t1: float,
        xs: Sequence[float],
        t2: float,
        ys: Sequence[float],
        vertices: Optional[Tuple[float, float]] = None
    ) -> Tuple[np.ndarray, float]:
        """
        (1/(2 pi i)^2) int_gamma d sigma int_Gamma d tau e^{y tau - tau^3/3 - x sigma + sigma^3/3}/(tau - sigma + t2 - t1)

        With v_Gamma < v_gamma this equals K_Ai for t1 >= t2. For t1 < t2 the vertices must
        be more than t2 - t1 apart, and the heat kernel is subtracted.
        """
        xs = _as_array(xs)
        ys = _as_array(ys)
        _check_window(t1, t2, xs, ys)
        if vertices is None:
            half = max(1.0, 0.5 * max(0.0, t2 - t1) + 0.5)
            vertices = (-half, half)
        v_Gamma, v_gamma = vertices
        if v_Gamma >= v_gamma:
            raise BadContours(
                f"need v_Gamma < v_gamma, got {v_Gamma} >= {v_gamma}",
                {"v_Gamma": v_Gamma, "v_gamma": v_gamma}
            )
        if t1 < t2 and v_gamma - v_Gamma <= t2 - t1:
            raise BadContours(
                f"for t1 < t2 need v_gamma - v_Gamma > t2 - t1 = {t2 - t1}",
                {"v_Gamma": v_Gamma, "v_gamma": v_gamma, "t1": t1, "t2": t2}
            )

        Gamma, gamma = self.airy_contours(v_Gamma, v_gamma)
        F, G = self._airy_factors(xs, ys, Gamma, gamma)
        cauchy = 1.0 / (Gamma.nodes[None, :] - gamma.nodes[:, None] + t2 - t1)
        values = F @ cauchy @ G.T / TWO_PI_I ** 2
        real, residue = _discard_imaginary(values, "extended_airy_contour")
        if t1 < t2:
            real = real - heat_kernel(t2 - t1, xs[:, None], ys[None, :])
        return real, residue

    def extended_airy_contour(
        self,
        t1: float,
        x: float,
        t2: float,
        y: float,
        vertices: Optional[Tuple[float, float]] = None
    ) -> float:
        values, _ = self.extended_airy_contour_matrix(t1, [x], t2, [y], vertices)
        return float(values[0, 0])

    # ------------------------------------------------------------------
    # Two sets of parameters
    # ------------------------------------------------------------------

    def perturbation_vertices(self, t1: float, t2: float, spec: ScalingSpec) -> Tuple[float, float]:
        """
        Vertices with max_j y_j - t2 < v_Gamma < v_gamma < min_i x_i - t1, placed as
        close to the origin as the pole gap allows.
        """
        lo = max(spec.y) - t2 if spec.y else -math.inf
        hi = min(spec.x) - t1 if spec.x else math.inf
        if not lo < hi:
            raise ContourInfeasible(
                f"max_j y_j - t2 = {lo:.4g} is not below min_i x_i - t1 = {hi:.4g}",
                inequality="max_j y_j - t2 < min_i x_i - t1",
                hint="reduce |t1 - t2| or move the x and y parameters further apart"
            )
        gap = hi - lo
        margin = min(1.0, gap / 4.0)
        half = min(0.5, gap / 6.0)
        centre = min(max(0.0, lo + margin + half), hi - margin - half)
        return centre - half, centre + half

    def _check_vertices(self, t1: float, t2: float, spec: ScalingSpec, vertices: Tuple[float, float]):
        v_Gamma, v_gamma = vertices
        lo = max(spec.y) - t2 if spec.y else -math.inf
        hi = min(spec.x) - t1 if spec.x else math.inf
        if not lo < v_Gamma < v_gamma < hi:
            raise ContourInfeasible(
                f"vertices ({v_Gamma}, {v_gamma}) violate {lo:.4g} < v_Gamma < v_gamma < {hi:.4g}",
                inequality="max_j y_j - t2 < v_Gamma < v_gamma < min_i x_i - t1",
                hint="choose vertices strictly between the shifted parameter sets"
            )

    def _perturbation_factors(self, t1, xs, t2, ys, spec, vertices):
        if vertices is None:
            vertices = self.perturbation_vertices(t1, t2, spec)
        else:
            self._check_vertices(t1, t2, spec, vertices)
        Gamma, gamma = self.airy_contours(*vertices)
        F, G = self._airy_factors(xs, ys, Gamma, gamma)
        return gamma.nodes, Gamma.nodes, F, G

    def perturbation_matrix(
        self,
        t1: float,
        xs: Sequence[float],
        t2: float,
        ys: Sequence[float],
        spec: ScalingSpec,
        vertices: Optional[Tuple[float, float]] = None
    ) -> Tuple[np.ndarray, float]:
        """
        Second term of K_{Ai;X,Y}. The bracket A(sigma)B(tau) - 1 vanishes where
        tau - sigma = t1 - t2; near that line the quotient is replaced by a central
        divided difference of B.
        """
        xs = _as_array(xs)
        ys = _as_array(ys)
        if spec.is_empty:
            return np.zeros((xs.size, ys.size)), 0.0

        sigma, tau, F, G = self._perturbation_factors(t1, xs, t2, ys, spec, vertices)
        x = np.asarray(spec.x, dtype=float)
        y = np.asarray(spec.y, dtype=float)
        d = t1 - t2

        def A(s):
            s = np.asarray(s)[..., None]
            return np.prod(t1 + s - y, axis=-1) / np.prod(t1 + s - x, axis=-1)

        def B(t):
            t = np.asarray(t)[..., None]
            return np.prod(t2 + t - x, axis=-1) / np.prod(t2 + t - y, axis=-1)

        A_sigma = A(sigma)
        B_tau = B(tau)
        den = tau[None, :] - sigma[:, None] - d
        near = np.abs(den) < settings.SINGULARITY_GUARD
        safe = np.where(near, 1.0, den)
        M = (A_sigma[:, None] * B_tau[None, :] - 1.0) / safe

        if np.any(near):
            a_idx, _ = np.nonzero(near)
            centre = sigma[a_idx] + d
            h = settings.SINGULARITY_STEP
            M[near] = A_sigma[a_idx] * (B(centre + h) - B(centre - h)) / (2.0 * h)
            logger.debug(f"perturbation_term: {int(near.sum())} node pairs on the removable singularity")

        values = F @ M @ G.T / TWO_PI_I ** 2
        return _discard_imaginary(values, "perturbation_term")

    def perturbation_term(
        self,
        t1: float,
        x: float,
        t2: float,
        y: float,
        spec: ScalingSpec,
        vertices: Optional[Tuple[float, float]] = None
    ) -> float:
        if spec.is_empty:
            return 0.0
        values, _ = self.perturbation_matrix(t1, [x], t2, [y], spec, vertices)
        return float(values[0, 0])

    def finite_rank_matrix(
        self,
        t1: float,
        xs: Sequence[float],
        t2: float,
        ys: Sequence[float],
        spec: ScalingSpec,
        vertices: Optional[Tuple[float, float]] = None
    ) -> Tuple[np.ndarray, float]:
        """
        Sum over nonempty index sets I of the x's and J of the y's of
        (-1)^|J| D^{|I|+|J|-1} / (prod_I (sigma + t1 - x_i) prod_J (tau + t2 - y_j)),
        D = tau + t2 - sigma - t1, integrated on the same contours.
        """
        xs = _as_array(xs)
        ys = _as_array(ys)
        if spec.is_empty:
            return np.zeros((xs.size, ys.size)), 0.0

        sigma, tau, F, G = self._perturbation_factors(t1, xs, t2, ys, spec, vertices)
        D = tau[None, :] + t2 - sigma[:, None] - t1
        inv_a = [1.0 / (sigma + t1 - xi) for xi in spec.x]
        inv_e = [1.0 / (tau + t2 - yj) for yj in spec.y]

        M = np.zeros(D.shape, dtype=complex)
        for I in itertools.product((0, 1), repeat=spec.J1):
            for J in itertools.product((0, 1), repeat=spec.J2):
                k = sum(I) + sum(J)
                if k == 0:
                    continue
                left = np.ones_like(sigma)
                for chosen, factor in zip(I, inv_a):
                    if chosen:
                        left = left * factor
                right = np.ones_like(tau)
                for chosen, factor in zip(J, inv_e):
                    if chosen:
                        right = right * factor
                M += (-1) ** sum(J) * D ** (k - 1) * left[:, None] * right[None, :]

        values = F @ M @ G.T / TWO_PI_I ** 2
        return _discard_imaginary(values, "finite_rank_expansion")

    def finite_rank_expansion(self, t1: float, x: float, t2: float, y: float, spec: ScalingSpec) -> float:
        if spec.is_empty:
            return 0.0
        values, _ = self.finite_rank_matrix(t1, [x], t2, [y], spec)
        return float(values[0, 0])

    def extended_airy_two_params_matrix(
        self,
        t1: float,
        xs: Sequence[float],
        t2: float,
        ys: Sequence[float],
        spec: ScalingSpec
    ) -> Tuple[np.ndarray, float]:
        base = self.extended_airy_matrix(t1, xs, t2, ys)
        if spec.is_empty:
            return base, 0.0
        extra, residue = self.perturbation_matrix(t1, xs, t2, ys, spec)
        return base + extra, residue

    def extended_airy_two_params(self, t1: float, x: float, t2: float, y: float, spec: ScalingSpec) -> float:
        values, _ = self.extended_airy_two_params_matrix(t1, [x], t2, [y], spec)
        return float(values[0, 0])

    def gauge_adjusted_limit_matrix(
        self,
        t1: float,
        xs: Sequence[float],
        t2: float,
        ys: Sequence[float],
        spec: ScalingSpec
    ) -> np.ndarray:
        """e^{y t2 - x t1 + (t1^3 - t2^3)/3} K_{Ai;X,Y}(t1, x; t2, y)"""
        xs = _as_array(xs)
        ys = _as_array(ys)
        values, _ = self.extended_airy_two_params_matrix(t1, xs, t2, ys, spec)
        gauge = np.exp(ys[None, :] * t2 - xs[:, None] * t1 + (t1 ** 3 - t2 ** 3) / 3.0)
        return gauge * values

    def gauge_adjusted_limit(self, t1: float, x: float, t2: float, y: float, spec: ScalingSpec) -> float:
        return float(self.gauge_adjusted_limit_matrix(t1, [x], t2, [y], spec)[0, 0])

    # ------------------------------------------------------------------
    # Finite-p kernel
    # ------------------------------------------------------------------

    def circle_pair(self, params: ModelParams, nodes: Optional[int] = None) -> LoopPair:
        """Disjoint circles around the pi cluster and the -pihat cluster"""
        nodes = nodes or settings.CIRCLE_NODES
        pi = params.pi_array()
        minus_pihat = -params.pihat_array()
        gap = float(pi.min() - minus_pihat.max())
        if gap <= 0:
            raise ContourInfeasible(
                "the pi and -pihat clusters overlap",
                inequality="min_i pi_i + min_j pihat_j > 0"
            )
        z = circle_contour(
            0.5 * (pi.min() + pi.max()), 0.5 * (pi.max() - pi.min()) + gap / 3.0, nodes
        )
        w = circle_contour(
            0.5 * (minus_pihat.min() + minus_pihat.max()),
            0.5 * (minus_pihat.max() - minus_pihat.min()) + gap / 3.0,
            nodes
        )
        return LoopPair(z=z, w=w, strategy=KernelStrategy.CIRCLES)

    def _loops(self, params: ModelParams, v_w: float, v_z: float, z_radius: float, w_radius: float) -> LoopPair:
        pi = params.pi_array()
        minus_pihat = -params.pihat_array()
        if not minus_pihat.max() < v_w < v_z < pi.min():
            raise ContourInfeasible(
                f"loop vertices v_w = {v_w:.6g}, v_z = {v_z:.6g} do not separate the poles",
                inequality="max_j(-pihat_j) < v_w < v_z < min_i pi_i",
                hint="reduce the parameter spread or increase p"
            )
        z_radius = max(z_radius, 0.6 * (pi.max() - v_z))
        w_radius = max(w_radius, 0.6 * (v_w - minus_pihat.min()))
        return LoopPair(
            z=wedge_loop(v_z, v_z + z_radius),
            w=wedge_loop(v_w, v_w - w_radius),
            strategy=KernelStrategy.WEDGE
        )

    def wedge_pair(self, params: ModelParams) -> LoopPair:
        """Wedge loops with vertices at thirds of the pole gap"""
        pi = params.pi_array()
        minus_pihat = -params.pihat_array()
        gap = float(pi.min() - minus_pihat.max())
        v_w = float(minus_pihat.max()) + gap / 3.0
        v_z = float(pi.min()) - gap / 3.0
        return self._loops(params, v_w, v_z, gap, gap)

    def scaled_wedge_pair(self, spec: ScalingSpec, p: int, params: Optional[ModelParams] = None) -> LoopPair:
        """
        Edge geometry: the z-loop has its vertex at z0 + m/(alpha p^{1/3}) and its arc
        centred at 1, the w-loop its vertex at z0 + zeta/(alpha p^{1/3}) and its arc
        centred at 0, with max y < zeta < m < min x.
        """
        params = params or build_perturbed_params(spec, p)
        if spec.x and spec.y:
            m = 0.5 * (max(spec.y) + min(spec.x))
        elif spec.x:
            m = min(spec.x) - 1.0
        elif spec.y:
            m = max(spec.y) + 1.0
        else:
            m = 0.0
        zeta = 0.5 * (m + max(spec.y)) if spec.y else m - 0.5
        scale = spec.alpha * p ** (1.0 / 3.0)
        v_z = spec.z0 + m / scale
        v_w = spec.z0 + zeta / scale
        if v_w <= 0:
            raise ContourInfeasible(
                f"w-loop vertex {v_w:.4g} is not to the right of the origin",
                inequality="z0 + zeta/(alpha p^{1/3}) > 0",
                hint="increase p or move the y parameters up"
            )
        return self._loops(params, v_w, v_z, 1.0 - v_z, v_w)

    def contour_pair(
        self,
        params: ModelParams,
        strategy: KernelStrategy,
        circle_nodes: Optional[int] = None
    ) -> LoopPair:
        if strategy == KernelStrategy.CIRCLES:
            return self.circle_pair(params, circle_nodes)
        return self.wedge_pair(params)

    @staticmethod
    def _check_levels(params: ModelParams, *levels: int):
        for level in levels:
            if not 1 <= level <= params.p:
                raise DimensionError(
                    f"level {level} outside [1, {params.p}]",
                    {"level": level, "p": params.p}
                )

    def _double_integral(
        self,
        params: ModelParams,
        r: int,
        U: np.ndarray,
        s: int,
        V: np.ndarray,
        loops: LoopPair,
        z0: float = 0.0
    ) -> np.ndarray:
        """
        (1/(2 pi i)^2) oint dz oint dw e^{wV - zU}/(w - z) prod_{k<=r}(z + pihat_k)
        / prod_{l<=s}(w + pihat_l) prod_i (w - pi_i)/(z - pi_i), times
        e^{z0 (U - V) - (r - s) ln z0} when z0 > 0.
        """
        pi = params.pi_array()
        pihat = params.pihat_array()
        z = loops.z.nodes
        w = loops.w.nodes

        base_z = np.sum(np.log(z[:, None] + pihat[None, :r]), axis=1) - np.sum(np.log(z[:, None] - pi[None, :]), axis=1)
        base_w = np.sum(np.log(w[:, None] - pi[None, :]), axis=1) - np.sum(np.log(w[:, None] + pihat[None, :s]), axis=1)
        if z0 > 0:
            log_z0 = math.log(z0)
            base_z = base_z - r * log_z0
            base_w = base_w + s * log_z0

        g = -(z[:, None] - z0) * U[None, :] + base_z[:, None]
        h = (w[:, None] - z0) * V[None, :] + base_w[:, None]
        Ez, shift_z = _scaled_exp(g, 0)
        Ew, shift_w = _scaled_exp(h, 0)
        total = shift_z[:, None] + shift_w[None, :]
        _guard(total, "finite kernel")

        cauchy = 1.0 / (w[None, :] - z[:, None])
        core = (loops.z.weights[:, None] * Ez).T @ cauchy @ (loops.w.weights[:, None] * Ew)
        return core * np.exp(total) / TWO_PI_I ** 2

    def _psi_block(
        self,
        params: ModelParams,
        r: int,
        U: np.ndarray,
        s: int,
        V: np.ndarray,
        contour: Optional[QuadratureRule],
        z0: float = 0.0
    ) -> np.ndarray:
        """Psi_{r,s}(U, V) on a grid, times e^{-z0 (V - U) + (s - r) ln z0} when z0 > 0"""
        out = np.zeros((U.size, V.size), dtype=complex)
        if r >= s:
            return out
        poles = -params.pihat_array()[r:s]
        order = s - r
        gap = V[None, :] - U[:, None]
        mask = gap > 0
        if not np.any(mask):
            return out
        a_idx, b_idx = np.nonzero(mask)
        dist = gap[mask]

        if contour is None:
            centre = 0.5 * (poles.min() + poles.max())
            half = 0.5 * (poles.max() - poles.min())
            radius = half + np.maximum(order / dist, max(0.5 * half, 0.05))
            unit = np.exp(2j * np.pi * np.arange(settings.CIRCLE_NODES) / settings.CIRCLE_NODES)
            nodes = centre + radius[:, None] * unit[None, :]
            weights = TWO_PI_I * radius[:, None] * unit[None, :] / settings.CIRCLE_NODES
            pole_logs = np.zeros(nodes.shape, dtype=complex)
            for pole in poles:
                pole_logs += np.log(nodes - pole)
        else:
            nodes = contour.nodes[None, :]
            weights = contour.weights[None, :]
            pole_logs = np.sum(np.log(contour.nodes[:, None] - poles[None, :]), axis=1)[None, :]

        logs = (nodes - z0) * dist[:, None] - pole_logs
        if z0 > 0:
            logs = logs + order * math.log(z0)
        scaled, shift = _scaled_exp(logs, 1)
        _guard(shift, "psi_rs")
        out[a_idx, b_idx] = np.sum(weights * scaled, axis=1) * np.exp(shift) / TWO_PI_I
        return out

    def psi_rs(
        self,
        params: ModelParams,
        r: int,
        s: int,
        u: float,
        v: float,
        contour: Optional[QuadratureRule] = None
    ) -> float:
        """1_{r<s} 1_{u<v} (1/2 pi i) oint e^{w(v-u)} prod_{k=r+1}^{s} 1/(w + pihat_k) dw"""
        self._check_levels(params, r, s)
        if r >= s or u >= v:
            return 0.0
        values = self._psi_block(params, r, np.array([float(u)]), s, np.array([float(v)]), contour)
        return float(values[0, 0].real)

    def finite_kernel_matrix(
        self,
        params: ModelParams,
        r: int,
        us: Sequence[float],
        s: int,
        vs: Sequence[float],
        strategy: KernelStrategy = KernelStrategy.WEDGE,
        circle_nodes: Optional[int] = None,
        loops: Optional[LoopPair] = None
    ) -> Tuple[np.ndarray, float]:
        self._check_levels(params, r, s)
        U = _as_array(us)
        V = _as_array(vs)
        if U.min() < 0 or V.min() < 0:
            raise DimensionError("finite-kernel positions must be >= 0")
        loops = loops or self.contour_pair(params, strategy, circle_nodes)
        values = self._double_integral(params, r, U, s, V, loops)
        values = values - self._psi_block(
            params, r, U, s, V, loops.w if strategy == KernelStrategy.WEDGE else None
        )
        return _discard_imaginary(values, "finite_kernel")

    def finite_kernel(
        self,
        params: ModelParams,
        r: int,
        u: float,
        s: int,
        v: float,
        strategy: KernelStrategy = KernelStrategy.WEDGE,
        circle_nodes: Optional[int] = None
    ) -> float:
        values, _ = self.finite_kernel_matrix(params, r, [u], s, [v], strategy, circle_nodes)
        return float(values[0, 0])

    def edge_positions(self, spec: ScalingSpec, p: int, time: float, positions) -> Tuple[int, np.ndarray]:
        """Level r and the positions u = (1 + sqrt(r/p))^2 + alpha x / p^{2/3} for a time"""
        r = level_of(spec, p, time)
        if r < 1 or r > p:
            raise LevelOutOfRange(r, p, time)
        u = (1.0 + math.sqrt(r / p)) ** 2 + spec.alpha * _as_array(positions) / p ** (2.0 / 3.0)
        return r, u

    def scaled_finite_kernel_matrix(
        self,
        spec: ScalingSpec,
        p: int,
        time1: float,
        xs: Sequence[float],
        time2: float,
        ys: Sequence[float],
        strategy: KernelStrategy = KernelStrategy.WEDGE,
        params: Optional[ModelParams] = None
    ) -> Tuple[np.ndarray, float]:
        """
        alpha p^{1/3} e^{Delta} K(r, p u; s, p v) with
        Delta = p z0 (u - v) - (r - s) ln z0 folded into every node evaluation.
        """
        params = params or build_perturbed_params(spec, p)
        r, u = self.edge_positions(spec, p, time1, xs)
        s, v = self.edge_positions(spec, p, time2, ys)
        U = p * u
        V = p * v
        if strategy == KernelStrategy.WEDGE:
            loops = self.scaled_wedge_pair(spec, p, params)
            psi_contour = loops.w
        else:
            loops = self.circle_pair(params)
            psi_contour = None

        z0 = spec.z0
        values = self._double_integral(params, r, U, s, V, loops, z0=z0)
        values = values - self._psi_block(params, r, U, s, V, psi_contour, z0=z0)
        values = spec.alpha * p ** (1.0 / 3.0) * values
        return _discard_imaginary(values, "scaled_finite_kernel")

    def scaled_finite_kernel(
        self,
        spec: ScalingSpec,
        p: int,
        time1: float,
        pos1: float,
        time2: float,
        pos2: float,
        strategy: KernelStrategy = KernelStrategy.WEDGE
    ) -> float:
        values, _ = self.scaled_finite_kernel_matrix(spec, p, time1, [pos1], time2, [pos2], strategy)
        return float(values[0, 0])

    # ------------------------------------------------------------------
    # Grid assembly
    # ------------------------------------------------------------------

    def model_params(self, model: ModelSection) -> ModelParams:
        """Explicit rates when given, else the edge-perturbed rates of the scaling spec"""
        if model.pi is not None:
            return validate_params(model.pi, model.pihat)
        return build_perturbed_params(model.scaling_spec(), model.p)

    def kernel_slice(self, kernel: KernelSection, model: ModelSection) -> KernelSlice:
        xs = _as_array(kernel.xs)
        ys = _as_array(kernel.ys)
        residue = 0.0
        gauge = "none"
        meta = {}
        t1, t2 = kernel.t1, kernel.t2

        if kernel.kind == KernelKind.AIRY:
            values = self.extended_airy_matrix(t1, xs, t2, ys)
        elif kernel.kind == KernelKind.AIRY_CONTOUR:
            values, residue = self.extended_airy_contour_matrix(t1, xs, t2, ys)
        elif kernel.kind == KernelKind.AIRY_TWO_PARAMS:
            spec = model.scaling_spec()
            values, residue = self.extended_airy_two_params_matrix(t1, xs, t2, ys, spec)
            meta = {"x": spec.x, "y": spec.y}
        elif kernel.kind == KernelKind.FINITE:
            params = self.model_params(model)
            if kernel.r is None or kernel.s is None:
                raise DimensionError("the finite kernel needs levels kernel.r and kernel.s")
            t1, t2 = float(kernel.r), float(kernel.s)
            values, residue = self.finite_kernel_matrix(params, kernel.r, xs, kernel.s, ys, kernel.strategy)
            meta = {"p": params.p, "strategy": kernel.strategy.value}
        else:
            spec = model.scaling_spec()
            values, residue = self.scaled_finite_kernel_matrix(spec, model.p, t1, xs, t2, ys, kernel.strategy)
            gauge = "exp(p z0 (u - v) - (r - s) ln z0)"
            meta = {"p": model.p, "strategy": kernel.strategy.value, "alpha": spec.alpha, "z0": spec.z0}

        logger.info(f"Kernel slice {kernel.kind.value}: {xs.size}x{ys.size} points, imag residue {residue:.3g}")
        return KernelSlice(
            kind=kernel.kind.value,
            t1=t1,
            t2=t2,
            xs=xs,
            ys=ys,
            values=values,
            gauge=gauge,
            max_imag_residue=residue,
            meta=meta
        )


# Singleton instance
_kernel_service = None


def get_kernel_service() -> KernelService:
    """Get or create kernel service instance"""
    global _kernel_service
    if _kernel_service is None:
        _kernel_service = KernelService()
    return _kernel_service
