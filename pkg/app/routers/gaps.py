"""
Gaps Router - Fredholm gap probabilities
"""

import logging
from typing import Optional

from fastapi import APIRouter, Query

from app.config import settings
from app.models import FredholmProblem, GapCurveRequest, GapCurveResponse, KernelKind, ScalingSpec
from app.services.experiment_service import TW_TABLE_GRID
from app.services.fredholm_service import AiryKernelEvaluator, build_evaluator, get_fredholm_service

logger = logging.getLogger(__name__)
router = APIRouter()


def _rows(xi_grid, results):
    return [
        {"xi": float(xi), "det": result.raw, "flag": result.flag}
        for xi, result in zip(xi_grid, results)
    ]


@router.post("/curve", response_model=GapCurveResponse)
def gap_curve(request: GapCurveRequest):
    """
    det(I - K) on (xi, xi + T) for every xi of the grid. The finite kernel
    is evaluated at level kernel.r (default: model.levels), the others at time kernel.t1.
    """
    kernel = request.kernel
    evaluator = build_evaluator(kernel.kind, request.model, kernel.strategy)
    if kernel.kind == KernelKind.FINITE:
        time = float(kernel.r or request.model.levels)
    else:
        time = kernel.t1

    template = FredholmProblem(
        times=[time],
        thresholds=[0.0],
        truncation=request.truncation or settings.FREDHOLM_TRUNCATION,
        nodes_per_block=request.nodes_per_block
    )
    grid = sorted(request.xi_grid)
    results = get_fredholm_service().gap_curve(evaluator, template, grid)
    return GapCurveResponse(kind=kernel.kind, rows=_rows(grid, results))


@router.get("/tracy-widom", response_model=GapCurveResponse)
def tracy_widom_table(
    start: float = Query(TW_TABLE_GRID[0], ge=-8.0, le=4.0),
    stop: float = Query(TW_TABLE_GRID[1], ge=-8.0, le=6.0),
    step: float = Query(TW_TABLE_GRID[2], gt=0.0, le=2.0),
    t: Optional[float] = Query(0.25, gt=0.0, lt=1.0)
):
    """GUE Tracy-Widom distribution F_2 on a regular grid"""
    count = int(round((stop - start) / step)) + 1
    grid = [round(start + k * step, 10) for k in range(max(count, 1))]
    evaluator = AiryKernelEvaluator(ScalingSpec(t=t))
    template = FredholmProblem(
        times=[0.0],
        thresholds=[0.0],
        truncation=settings.FREDHOLM_TRUNCATION,
        nodes_per_block=settings.FREDHOLM_NODES
    )
    results = get_fredholm_service().gap_curve(evaluator, template, grid)
    return GapCurveResponse(kind=KernelKind.AIRY, rows=_rows(grid, results))
