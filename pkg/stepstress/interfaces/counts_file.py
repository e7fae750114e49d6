"""Self-describing counts CSV.

Layout::

    # x1=0.5
    # x2=2.5
    # tau=14
    # nUnits=200
    interval,t_lower,t_upper,stress,count
    1,0,2,0.5,3
    ...
    12,22,inf,2.5,150

``#`` lines carry the design header; the last row holds the survivors and has
``t_upper = inf``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from stepstress.core.types import GroupedCounts, StepStressDesign
from stepstress.utils.helpers import ensure_dir

COUNTS_HEADER = ("interval", "t_lower", "t_upper", "stress", "count")
_TIME_RTOL = 1e-9


class CountsFormatError(ValueError):
    """A counts file is malformed; ``row`` is the 1-based line number when known."""

    def __init__(self, message: str, row: int | None = None) -> None:
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


@dataclass(slots=True)
class CountsFile:
    """Parsed counts plus the interval grid and header comments found in the file."""

    counts: GroupedCounts
    upper_bounds: tuple[float, ...]
    header: dict[str, str] = field(default_factory=dict)

    def check_design(self, d: StepStressDesign) -> None:
        """The file's inspection times must be the design's."""
        self.counts.check_design(d)
        for j, (got, want) in enumerate(zip(self.upper_bounds, d.inspection_times), start=1):
            if not math.isclose(got, want, rel_tol=_TIME_RTOL):
                raise CountsFormatError(
                    f"interval {j} ends at {got:g} but the design inspects at {want:g}"
                )


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise CountsFormatError(f"{column} is not a number: {text!r}", row) from None


def read_counts(path: Path) -> CountsFile:
    """
    Read a counts CSV written by ``write_counts`` (or by hand).

    Raises:
        CountsFormatError: bad header, non-integer or negative counts, gaps in
            the interval numbering or a survivors row that is not last.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise CountsFormatError(f"{path}: cannot read counts ({e.strerror})") from e

    header: dict[str, str] = {}
    data: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, sep, value = stripped.lstrip("#").partition("=")
            if sep:
                header[key.strip()] = value.strip()
            continue
        data.append((lineno, line))
    if not data:
        raise CountsFormatError(f"{path}: no column header found")

    head_row, head_line = data[0]
    columns = tuple(c.strip() for c in next(csv.reader([head_line])))
    if columns != COUNTS_HEADER:
        raise CountsFormatError(f"expected columns {','.join(COUNTS_HEADER)}, got {','.join(columns)}", head_row)

    counts: list[int] = []
    uppers: list[float] = []
    previous_upper = 0.0
    for lineno, line in data[1:]:
        fields = [c.strip() for c in next(csv.reader([line]))]
        if len(fields) != len(COUNTS_HEADER):
            raise CountsFormatError(f"expected {len(COUNTS_HEADER)} fields, got {len(fields)}", lineno)
        interval, t_lower, t_upper, _stress, count = fields
        if not interval.isdigit() or int(interval) != len(counts) + 1:
            raise CountsFormatError(f"interval must be {len(counts) + 1}, got {interval!r}", lineno)
        if uppers and math.isinf(uppers[-1]):
            raise CountsFormatError("rows after the survivors row", lineno)
        lower = _parse_float(t_lower, "t_lower", lineno)
        upper = _parse_float(t_upper, "t_upper", lineno)
        if not math.isclose(lower, previous_upper, rel_tol=_TIME_RTOL, abs_tol=1e-12):
            raise CountsFormatError(f"t_lower {lower:g} does not continue from {previous_upper:g}", lineno)
        if not upper > lower:
            raise CountsFormatError(f"t_upper {upper:g} must exceed t_lower {lower:g}", lineno)
        try:
            n = int(count)
        except ValueError:
            raise CountsFormatError(f"count is not an integer: {count!r}", lineno) from None
        if n < 0:
            raise CountsFormatError(f"count must be >= 0, got {n}", lineno)
        counts.append(n)
        uppers.append(upper)
        previous_upper = upper

    if len(counts) < 3:
        raise CountsFormatError(f"{path}: need at least two intervals and a survivors row")
    if not math.isinf(uppers[-1]):
        raise CountsFormatError(f"{path}: last row must be the survivors row with t_upper=inf")
    return CountsFile(GroupedCounts(tuple(counts)), tuple(uppers[:-1]), header)


def write_counts(path: Path, counts: GroupedCounts, d: StepStressDesign) -> Path:
    """Write counts with the design echoed as ``#`` comments."""
    counts.check_design(d)
    ensure_dir(Path(path).parent)
    grid = [*d.grid.tolist(), math.inf]
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# x1={d.x1!r}\n# x2={d.x2!r}\n# tau={d.tau!r}\n# nUnits={counts.n_total}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COUNTS_HEADER)
        for j, n in enumerate(counts.counts, start=1):
            writer.writerow([j, repr(grid[j - 1]), repr(grid[j]), repr(d.interval_stress(j)), n])
    return Path(path)
