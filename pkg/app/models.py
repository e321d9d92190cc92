"""
Value types for the edge kernel laboratory

Validated inputs, configs and reports are pydantic models; results carrying numpy
arrays are frozen dataclasses.
"""
import math
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

from app.config import KERNEL_TABLE_COLUMNS


class Orientation(str, Enum):
    UP = "up"
    DOWN = "down"
    COUNTERCLOCKWISE = "counterclockwise"


class ContourKind(str, Enum):
    RAY_WEDGE = "ray-wedge"
    CIRCLE = "circle"
    COMPOSITE = "composite"


class KernelStrategy(str, Enum):
    CIRCLES = "circles"
    WEDGE = "wedge"


class KernelKind(str, Enum):
    AIRY = "airy"
    AIRY_CONTOUR = "airy_contour"
    AIRY_TWO_PARAMS = "airy_two_params"
    FINITE = "finite"
    SCALED_FINITE = "scaled_finite"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


# ---------------------------------------------------------------------------
# Model parameters and scaling maps
# ---------------------------------------------------------------------------

class ModelParams(BaseModel):
    """The two rate vectors; build through `validate_params`"""
    model_config = ConfigDict(frozen=True)

    pi: List[float] = Field(..., description="Rates attached to the p columns")
    pihat: List[float] = Field(..., description="Rates attached to the levels")

    @property
    def p(self) -> int:
        return len(self.pi)

    def pi_array(self) -> np.ndarray:
        return np.asarray(self.pi, dtype=float)

    def pihat_array(self) -> np.ndarray:
        return np.asarray(self.pihat, dtype=float)

    def rate(self, i: int, j: int) -> float:
        """pi[i] + pihat[j], 1-based"""
        return self.pi[i - 1] + self.pihat[j - 1]


class ScalingSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float = Field(..., gt=0, lt=1, description="Aspect ratio N/p of the bulk")
    x: List[float] = Field(default_factory=list, description="Column perturbations x_1..x_J1")
    y: List[float] = Field(default_factory=list, description="Level perturbations y_1..y_J2")

    @model_validator(mode="after")
    def _check_order(self):
        if self.x and self.y and min(self.x) <= max(self.y):
            raise ValueError(
                f"every x_i must exceed every y_j (min x = {min(self.x)}, max y = {max(self.y)})"
            )
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def alpha(self) -> float:
        root = math.sqrt(self.t)
        return (1.0 + root) ** (4.0 / 3.0) / self.t ** (1.0 / 6.0)

    @property
    def z0(self) -> float:
        root = math.sqrt(self.t)
        return root / (1.0 + root)

    @property
    def J1(self) -> int:
        return len(self.x)

    @property
    def J2(self) -> int:
        return len(self.y)

    @property
    def is_empty(self) -> bool:
        return not self.x and not self.y


class EdgeCoordinates(BaseModel):
    model_config = ConfigDict(frozen=True)

    r: int = Field(..., ge=1, description="Integer level")
    u: float = Field(..., description="Position in units of p")
    s1: float = Field(..., gt=0, le=1, description="r/p after flooring")
    conjugation_exponent: float = Field(..., description="p*z0*u - r*ln(z0)")
    time: float
    position: float
    p: int = Field(..., ge=1)


# ---------------------------------------------------------------------------
# Sampling results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaitingMatrix:
    """N x p exponential waiting times; row k is level k"""
    entries: np.ndarray
    seed: int
    rates: np.ndarray

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def p(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class SampleBatch:
    values: np.ndarray
    seed: int
    N: int
    p: int
    n_samples: int
    source: str = "lpp"


@dataclass(frozen=True)
class ComplexMatrix:
    """p x N complex Gaussian matrix"""
    entries: np.ndarray
    seed: int


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    max_residual: float = 0.0

    @property
    def largest(self) -> float:
        return float(self.eigenvalues[0])


# ---------------------------------------------------------------------------
# Quadrature and contours
# ---------------------------------------------------------------------------

class ContourSpec(BaseModel):
    """A wedge {vertex + s e^{+-i angle}} with graded Gauss-Legendre panels"""
    model_config = ConfigDict(frozen=True)

    kind: ContourKind = ContourKind.RAY_WEDGE
    vertex: complex = 0j
    angle: float = Field(math.pi / 3, description="Ray angle theta, rays at +-theta")
    truncation_radius: float = 12.0
    panels: int = 24
    nodes_per_panel: int = 16
    grading: float = 2.0
    orientation: Orientation = Orientation.DOWN


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    description: str = ""

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, func: Callable[[np.ndarray], np.ndarray]):
        return np.sum(self.weights * func(self.nodes))

    def reversed(self) -> "QuadratureRule":
        return QuadratureRule(self.nodes[::-1].copy(), -self.weights[::-1], f"reversed {self.description}")

    @classmethod
    def join(cls, *rules: "QuadratureRule", description: str = "") -> "QuadratureRule":
        nodes = np.concatenate([rule.nodes for rule in rules])
        weights = np.concatenate([rule.weights for rule in rules])
        return cls(nodes, weights, description or " + ".join(rule.description for rule in rules))


# ---------------------------------------------------------------------------
# Kernels and determinants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSlice:
    """Kernel sampled on xs x ys at fixed times (or levels)"""
    kind: str
    t1: float
    t2: float
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    gauge: str = "none"
    max_imag_residue: float = 0.0
    meta: Dict[str, Any] = field(default_factory=dict)

    def to_rows(self) -> List[Dict[str, float]]:
        rows = []
        for a, x in enumerate(self.xs):
            for b, y in enumerate(self.ys):
                rows.append(dict(zip(
                    KERNEL_TABLE_COLUMNS,
                    [self.t1, float(x), self.t2, float(y), float(self.values[a, b]), self.max_imag_residue]
                )))
        return rows


class FredholmProblem(BaseModel):
    model_config = ConfigDict(frozen=True)

    times: List[float] = Field(..., description="Times t_1..t_m, or levels for the finite kernel")
    thresholds: List[float] = Field(..., description="Thresholds xi_1..xi_m")
    truncation: float = Field(14.0, gt=0, description="Integration window [xi, xi + T]")
    nodes_per_block: int = Field(40, ge=8)

    @model_validator(mode="after")
    def _check_lengths(self):
        if not self.times or len(self.times) != len(self.thresholds):
            raise ValueError("times and thresholds must have equal length >= 1")
        return self

    @property
    def m(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class GapResult:
    value: float
    raw: float
    flag: str
    nodes_per_block: int
    tail: float

    @property
    def in_range(self) -> bool:
        return self.flag == "ok"


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ecdf:
    values: np.ndarray
    n: int

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / self.n


class KsResult(BaseModel):
    statistic: float = Field(..., ge=0, le=1)
    p_value: float = Field(..., ge=0, le=1)
    n1: int
    n2: Optional[int] = None


# ---------------------------------------------------------------------------
# Experiment configuration and reports
# ---------------------------------------------------------------------------

class ModelSection(BaseModel):
    t: float = Field(0.25, gt=0, lt=1)
    x: List[float] = Field(default_factory=list)
    y: List[float] = Field(default_factory=list)
    p: int = Field(64, ge=1)
    N: Optional[int] = Field(None, ge=1)
    pi: Optional[List[float]] = None
    pihat: Optional[List[float]] = None
    p_sweep: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_model(self):
        if self.N is not None and self.N > self.p:
            raise ValueError(f"N = {self.N} exceeds p = {self.p}")
        for name in ("pi", "pihat"):
            values = getattr(self, name)
            if values is not None and len(values) != self.p:
                raise ValueError(f"{name} has length {len(values)}, expected p = {self.p}")
        if (self.pi is None) != (self.pihat is None):
            raise ValueError("pi and pihat must be given together")
        if self.x and self.y and min(self.x) <= max(self.y):
            raise ValueError(
                f"every x_i must exceed every y_j (min x = {min(self.x)}, max y = {max(self.y)})"
            )
        return self

    @property
    def levels(self) -> int:
        return self.N if self.N is not None else self.p

    def scaling_spec(self) -> ScalingSpec:
        return ScalingSpec(t=self.t, x=self.x, y=self.y)


class SamplingSection(BaseModel):
    n_samples: int = Field(10000, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    n_seeds: int = Field(10, ge=1)
    n_bootstrap: int = Field(200, ge=10)


class QuadratureSection(BaseModel):
    nodes_per_block: int = Field(40, ge=8)
    truncation: float = Field(14.0, gt=0)
    wedge_panels: int = Field(24, ge=1)
    circle_nodes: int = Field(128, ge=8)


class ThresholdSection(BaseModel):
    xi_grid: Optional[List[float]] = None
    times: List[float] = Field(default_factory=lambda: [0.0])
    xis: List[float] = Field(default_factory=lambda: [0.0])
    max_distance: float = Field(0.05, gt=0)

    @model_validator(mode="after")
    def _check_lengths(self):
        if not self.times or len(self.times) != len(self.xis):
            raise ValueError("thresholds.times and thresholds.xis must have equal length >= 1")
        return self


class KernelSection(BaseModel):
    kind: KernelKind = KernelKind.AIRY_TWO_PARAMS
    t1: float = 0.0
    t2: float = 0.0
    xs: List[float] = Field(default_factory=lambda: [0.0])
    ys: List[float] = Field(default_factory=lambda: [0.0])
    r: Optional[int] = Field(None, ge=1, description="Level for the finite kernel")
    s: Optional[int] = Field(None, ge=1, description="Level for the finite kernel")
    strategy: KernelStrategy = KernelStrategy.WEDGE


class OutputSection(BaseModel):
    path: Optional[str] = None
    format: OutputFormat = OutputFormat.CSV


class ExperimentConfig(BaseModel):
    model: ModelSection = Field(default_factory=ModelSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)
    thresholds: ThresholdSection = Field(default_factory=ThresholdSection)
    kernel: KernelSection = Field(default_factory=KernelSection)
    output: OutputSection = Field(default_factory=OutputSection)


class ExperimentReport(BaseModel):
    command: str
    passed: Optional[bool] = Field(None, description="None for diagnostic-only commands")
    config: Dict[str, Any] = Field(default_factory=dict)
    seeds: List[int] = Field(default_factory=list)
    versions: Dict[str, str] = Field(default_factory=dict)
    wall_clock_seconds: float = 0.0
    metrics: Dict[str, Any] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
    timestamp: datetime = Field(default_factory=datetime.now)


# ---------------------------------------------------------------------------
# HTTP schemas
# ---------------------------------------------------------------------------

class KernelEvalRequest(BaseModel):
    kernel: KernelSection = Field(default_factory=KernelSection)
    model: ModelSection = Field(default_factory=ModelSection)


class KernelEvalResponse(BaseModel):
    kind: KernelKind
    gauge: str
    max_imag_residue: float
    rows: List[Dict[str, float]]


class GapCurveRequest(BaseModel):
    kernel: KernelSection = Field(default_factory=KernelSection)
    model: ModelSection = Field(default_factory=ModelSection)
    xi_grid: List[float] = Field(..., min_length=1, max_length=400)
    truncation: Optional[float] = Field(None, gt=0)
    nodes_per_block: int = Field(40, ge=8, le=400)


class GapCurveResponse(BaseModel):
    kind: KernelKind
    rows: List[Dict[str, Any]]
