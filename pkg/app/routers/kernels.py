"""
Kernels Router - point evaluation of the edge kernels on a grid
"""

import logging

from fastapi import APIRouter

from app.models import KernelEvalRequest, KernelEvalResponse
from app.services.kernel_service import get_kernel_service

logger = logging.getLogger(__name__)
router = APIRouter()


@router.post("/eval", response_model=KernelEvalResponse)
def evaluate_kernel(request: KernelEvalRequest):
    """
    Evaluate the requested kernel on the product grid xs x ys
    """
    kernel_slice = get_kernel_service().kernel_slice(request.kernel, request.model)
    logger.info(
        f"Evaluated {request.kernel.kind.value} kernel on a "
        f"{len(kernel_slice.xs)}x{len(kernel_slice.ys)} grid"
    )
    return KernelEvalResponse(
        kind=request.kernel.kind,
        gauge=kernel_slice.gauge,
        max_imag_residue=kernel_slice.max_imag_residue,
        rows=kernel_slice.to_rows()
    )
