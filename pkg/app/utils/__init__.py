"""
Utility Functions and Helpers
"""

from app.utils import rng, specfun, stats

__all__ = ["rng", "specfun", "stats"]
