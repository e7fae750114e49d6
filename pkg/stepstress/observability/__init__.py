"""Observability helpers for logging."""

from stepstress.observability.logging import configure_logging, read_log_records

__all__ = ["configure_logging", "read_log_records"]
