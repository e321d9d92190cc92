"""
Airy function evaluation and quadrature primitives

Ai is computed by two independent methods: the Maclaurin series for |x| <= x_switch and,
beyond, the integral

    Ai(z) = e^{-zeta}/pi * int_0^inf exp(-sqrt(z) u^2) cos(u^3/3) du,  zeta = 2/3 z^{3/2},

valid for |arg z| < pi, combined with the connection formula
Ai(-X) = 2 Re(e^{i pi/3} Ai(X e^{i pi/3})) for negative arguments.
"""

import logging
import math
from functools import lru_cache
from typing import Tuple

import numpy as np

from app.config import settings, AIRY_AI_0, AIRY_AIP_0
from app.exceptions import BadGeometry, OutOfRange
from app.models import ContourKind, ContourSpec, Orientation, QuadratureRule

logger = logging.getLogger(__name__)

AIRY_RANGE = 30.0
MAX_WEDGE_NODES = 100_000

_ROT1 = np.exp(1j * np.pi / 3)
_ROT2 = np.exp(2j * np.pi / 3)

# exp(-40) relative truncation of the Gaussian-damped integral
_AIRY_TAIL_EXPONENT = 40.0


@lru_cache(maxsize=64)
def _leggauss(n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


# ---------------------------------------------------------------------------
# Airy function
# ---------------------------------------------------------------------------

def _airy_series(x) -> Tuple[np.ndarray, np.ndarray]:
    """Maclaurin series Ai = Ai(0) f + Ai'(0) g and its derivative"""
    x = np.asarray(x, dtype=float)
    x3 = x ** 3
    a = np.ones_like(x)
    b = x.copy()
    ap = np.zeros_like(x)
    bp = np.ones_like(x)
    f, g, fp, gp = a.copy(), b.copy(), ap.copy(), bp.copy()
    for k in range(1, settings.AIRY_SERIES_TERMS + 1):
        a = a * x3 / ((3 * k - 1) * (3 * k))
        b = b * x3 / ((3 * k) * (3 * k + 1))
        ap = x ** 2 / 2.0 if k == 1 else ap * x3 / ((3 * k - 3) * (3 * k - 1))
        bp = bp * x3 / ((3 * k) * (3 * k - 2))
        f = f + a
        g = g + b
        fp = fp + ap
        gp = gp + bp
    return AIRY_AI_0 * f + AIRY_AIP_0 * g, AIRY_AI_0 * fp + AIRY_AIP_0 * gp


def _airy_integral(z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ai and Ai' at complex z with Re sqrt(z) > 0 and |z| >= 1"""
    sqz = np.sqrt(z)
    zeta = (2.0 / 3.0) * z * sqz
    umax = np.sqrt(_AIRY_TAIL_EXPONENT / sqz.real)
    t, w = _leggauss(settings.AIRY_CONTOUR_NODES)
    t = 0.5 * (t + 1.0)
    w = 0.5 * w

    u = umax[..., None] * t
    wu = umax[..., None] * w
    damp = np.exp(-sqz[..., None] * u ** 2)
    cubic = u ** 3 / 3.0
    i0 = np.sum(wu * damp * np.cos(cubic), axis=-1)
    i1 = np.sum(wu * u * damp * np.sin(cubic), axis=-1)

    prefactor = np.exp(-zeta) / np.pi
    return prefactor * i0, -prefactor * (sqz * i0 + i1)


def _airy_contour(x) -> Tuple[np.ndarray, np.ndarray]:
    """Integral representation on the real line, |x| >= 1"""
    x = np.asarray(x, dtype=float)
    ai = np.empty_like(x)
    aip = np.empty_like(x)

    pos = x >= 0
    if np.any(pos):
        value, deriv = _airy_integral(x[pos].astype(complex))
        ai[pos] = value.real
        aip[pos] = deriv.real

    neg = ~pos
    if np.any(neg):
        value, deriv = _airy_integral(-x[neg] * _ROT1)
        ai[neg] = 2.0 * np.real(_ROT1 * value)
        aip[neg] = -2.0 * np.real(_ROT2 * deriv)

    return ai, aip


def airy_pair(x, strict: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ai(x) and Ai'(x), vectorized.

    strict=True enforces the supported range |x| <= 30. Internal callers use
    strict=False, which accepts any x >= -30 (the integral branch is exact for
    large positive x and underflows gracefully).
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise OutOfRange("Airy argument is not finite")
    bad = np.abs(arr) > AIRY_RANGE if strict else arr < -AIRY_RANGE
    if np.any(bad):
        worst = float(arr[bad].flat[0])
        raise OutOfRange(
            f"Airy argument {worst} outside the supported range",
            {"x": worst, "range": AIRY_RANGE}
        )

    ai = np.empty(arr.shape)
    aip = np.empty(arr.shape)
    near = np.abs(arr) <= settings.AIRY_X_SWITCH
    if np.any(near):
        ai[near], aip[near] = _airy_series(arr[near])
    far = ~near
    if np.any(far):
        ai[far], aip[far] = _airy_contour(arr[far])

    if arr.ndim == 0:
        return float(ai), float(aip)
    return ai, aip


def airy_ai(x, strict: bool = True):
    return airy_pair(x, strict)[0]


def airy_ai_prime(x, strict: bool = True):
    return airy_pair(x, strict)[1]


def heat_kernel(d: float, x, y):
    """int_R e^{lambda d} Ai(x+lambda) Ai(y+lambda) d lambda for d > 0"""
    if d <= 0:
        raise ValueError(f"heat kernel needs d > 0, got {d}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    exponent = d ** 3 / 12.0 - (x + y) * d / 2.0 - (x - y) ** 2 / (4.0 * d)
    return np.exp(exponent) / math.sqrt(4.0 * math.pi * d)


# ---------------------------------------------------------------------------
# Real rules
# ---------------------------------------------------------------------------

def gauss_legendre(n: int) -> QuadratureRule:
    """Gauss-Legendre rule on [-1, 1]"""
    if not 1 <= n <= 512:
        raise ValueError(f"Gauss-Legendre order must lie in [1, 512], got {n}")
    nodes, weights = _leggauss(n)
    return QuadratureRule(nodes.copy(), weights.copy(), f"Gauss-Legendre n={n} on [-1,1]")


def interval_rule(a: float, b: float, n: int, panels: int = 1) -> QuadratureRule:
    """Composite Gauss-Legendre rule with `panels` equal panels on [a, b]"""
    if panels < 1:
        raise BadGeometry(f"panels must be >= 1, got {panels}")
    base = gauss_legendre(n)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * base.nodes[None, :]).ravel()
    weights = (half[:, None] * base.weights[None, :]).ravel()
    return QuadratureRule(nodes, weights, f"{panels}x{n} Gauss-Legendre on [{a:g},{b:g}]")


def _graded_ray(length: float, panels: int, n: int, grading: float) -> Tuple[np.ndarray, np.ndarray]:
    """Arc-length nodes on (0, length], panels refined geometrically towards 0"""
    base = gauss_legendre(n)
    edges = length * (np.arange(panels + 1) / panels) ** grading
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * base.nodes[None, :]).ravel()
    ws = (half[:, None] * base.weights[None, :]).ravel()
    return s, ws


# ---------------------------------------------------------------------------
# Contours
# ---------------------------------------------------------------------------

def wedge_contour(spec: ContourSpec) -> QuadratureRule:
    """
    Two rays {vertex + s e^{+-i theta}}, s in (0, R].

    DOWN runs from e^{+i theta} infinity through the vertex to e^{-i theta} infinity,
    UP the other way.
    """
    if spec.kind != ContourKind.RAY_WEDGE:
        raise BadGeometry(f"wedge_contour needs a ray-wedge spec, got {spec.kind.value}")
    if spec.truncation_radius <= 0:
        raise BadGeometry(f"truncation_radius must be positive, got {spec.truncation_radius}")
    if spec.panels < 1 or spec.nodes_per_panel < 1:
        raise BadGeometry("panels and nodes_per_panel must be >= 1")
    if spec.panels * spec.nodes_per_panel > MAX_WEDGE_NODES:
        raise BadGeometry(f"{spec.panels * spec.nodes_per_panel} nodes per ray exceeds {MAX_WEDGE_NODES}")
    if not 0 < spec.angle < math.pi:
        raise BadGeometry(f"ray angle must lie in (0, pi), got {spec.angle}")
    if spec.orientation == Orientation.COUNTERCLOCKWISE:
        raise BadGeometry("an open wedge has no counterclockwise orientation")

    s, ws = _graded_ray(spec.truncation_radius, spec.panels, spec.nodes_per_panel, spec.grading)
    up_dir = np.exp(1j * spec.angle)
    down_dir = np.exp(-1j * spec.angle)

    if spec.orientation == Orientation.DOWN:
        inward, outward = up_dir, down_dir
    else:
        inward, outward = down_dir, up_dir

    nodes = np.concatenate([(spec.vertex + s * inward)[::-1], spec.vertex + s * outward])
    weights = np.concatenate([-(ws * inward)[::-1], ws * outward])
    return QuadratureRule(
        nodes, weights,
        f"wedge vertex={spec.vertex:.4g} angle={spec.angle:.4f} {spec.orientation.value}"
    )


def wedge_loop(
    vertex: float,
    center: float,
    panels: int = None,
    nodes_per_panel: int = None,
    grading: float = None,
    arc_panels: int = None,
    arc_nodes_per_panel: int = None
) -> QuadratureRule:
    """
    Closed counterclockwise loop: two rays from `vertex` cut by the circle
    |z - center| = |vertex - center|, plus the far arc of that circle.

    center > vertex gives rays at +-pi/3 (loop opening right), center < vertex rays
    at +-2pi/3 (opening left). Both chords have length |vertex - center|.
    """
    panels = panels or settings.WEDGE_PANELS
    nodes_per_panel = nodes_per_panel or settings.WEDGE_NODES_PER_PANEL
    grading = grading or settings.WEDGE_GRADING
    arc_panels = arc_panels or settings.ARC_PANELS
    arc_nodes_per_panel = arc_nodes_per_panel or settings.ARC_NODES_PER_PANEL

    radius = abs(center - vertex)
    if radius <= 0 or not math.isfinite(radius):
        raise BadGeometry(f"degenerate loop: vertex {vertex}, center {center}")

    s, ws = _graded_ray(radius, panels, nodes_per_panel, grading)
    if center > vertex:
        out_dir, in_dir = np.exp(-1j * math.pi / 3), np.exp(1j * math.pi / 3)
        phi_start, phi_end = -2 * math.pi / 3, 2 * math.pi / 3
    else:
        out_dir, in_dir = np.exp(2j * math.pi / 3), np.exp(-2j * math.pi / 3)
        phi_start, phi_end = math.pi / 3, 5 * math.pi / 3

    arc = interval_rule(phi_start, phi_end, arc_nodes_per_panel, arc_panels)
    arc_points = np.exp(1j * arc.nodes)

    nodes = np.concatenate([
        vertex + s * out_dir,
        center + radius * arc_points,
        (vertex + s * in_dir)[::-1]
    ])
    weights = np.concatenate([
        ws * out_dir,
        1j * radius * arc_points * arc.weights,
        -(ws * in_dir)[::-1]
    ])
    return QuadratureRule(nodes, weights, f"loop vertex={vertex:.6g} center={center:.6g}")


def circle_contour(center: complex, radius: float, n: int) -> QuadratureRule:
    """Trapezoidal rule on |w - center| = radius, counterclockwise"""
    if radius <= 0:
        raise BadGeometry(f"circle radius must be positive, got {radius}")
    if n < 8:
        raise BadGeometry(f"circle rule needs n >= 8, got {n}")
    points = np.exp(2j * np.pi * np.arange(n) / n)
    nodes = center + radius * points
    weights = 2j * np.pi * radius * points / n
    return QuadratureRule(nodes, weights, f"circle center={center:.4g} radius={radius:.4g} n={n}")
