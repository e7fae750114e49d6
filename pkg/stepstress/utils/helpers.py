"""Utility functions for stepstress."""

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence


def ensure_dir(path: Path) -> Path:
    """Ensure a directory exists, creating it if necessary."""
    path.mkdir(parents=True, exist_ok=True)
    return path


def finite_or_none(value: Any) -> float | None:
    """JSON-safe float: NaN and infinities become None."""
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def write_json(path: Path, data: Any) -> Path:
    """Write JSON with sorted keys so repeated runs produce identical bytes."""
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
        f.write("\n")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a plain CSV table with ``repr``-exact floats."""
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
    return path


def parse_float_list(text: str) -> list[float]:
    """
    Parse a comma-separated list of numbers.

    Args:
        text: e.g. "0,0.2,0.4".

    Returns:
        The values in order.
    """
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError(f"expected a comma-separated list of numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"invalid number list: {text!r}") from None
