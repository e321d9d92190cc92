"""
API Routers
"""

from app.routers import gaps, kernels

__all__ = ["gaps", "kernels"]
