"""Utility functions for stepstress."""

from stepstress.utils.helpers import (
    ensure_dir,
    finite_or_none,
    parse_float_list,
    write_csv,
    write_json,
)

__all__ = ["ensure_dir", "finite_or_none", "parse_float_list", "write_csv", "write_json"]
