"""File formats exchanged between commands."""

from stepstress.interfaces.counts_file import (
    COUNTS_HEADER,
    CountsFile,
    CountsFormatError,
    read_counts,
    write_counts,
)

__all__ = ["COUNTS_HEADER", "CountsFile", "CountsFormatError", "read_counts", "write_counts"]
