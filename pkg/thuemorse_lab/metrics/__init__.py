"""
Metrics Package
"""

from .stage_timer import StageTimer

__all__ = [
    "StageTimer"
]
