"""
Application Services
"""

from app.services.ensemble_service import get_ensemble_service
from app.services.experiment_service import get_experiment_service
from app.services.fredholm_service import get_fredholm_service
from app.services.kernel_service import get_kernel_service
from app.services.percolation_service import get_percolation_service

__all__ = [
    "get_ensemble_service",
    "get_experiment_service",
    "get_fredholm_service",
    "get_kernel_service",
    "get_percolation_service"
]
