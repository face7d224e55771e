"""
Utils Package
"""

from .report_writer import ReportWriter, SCHEMA_VERSION

__all__ = [
    "ReportWriter",
    "SCHEMA_VERSION"
]
