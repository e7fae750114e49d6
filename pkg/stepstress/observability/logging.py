"""loguru sinks for the command line: a stderr sink and an optional JSONL log."""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any

from loguru import logger

_STDERR_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | {name}:{function} - {message}"


def _write_stderr(message: str) -> None:
    # sys.stderr is looked up at write time.
    sys.stderr.write(message)


def configure_logging(level: str = "WARNING", json_path: Path | None = None) -> list[int]:
    """
    Route stepstress log records to stderr and, optionally, to a JSONL file.

    Args:
        level: Minimum level for both sinks.
        json_path: Serialized records are appended here, one JSON object per line.

    Returns:
        The loguru handler ids that were installed.
    """
    logger.remove()
    handlers = [logger.add(_write_stderr, level=level, format=_STDERR_FORMAT)]
    if json_path is not None:
        json_path = Path(json_path)
        json_path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logger.add(json_path, level=level, serialize=True, mode="a", encoding="utf-8"))
    logger.enable("stepstress")
    return handlers


def _decode_line(raw: str) -> dict[str, Any] | None:
    line = raw.strip()
    if not line:
        return None
    try:
        payload = json.loads(line)
    except json.JSONDecodeError:
        return None
    return payload if isinstance(payload, dict) else None


def read_log_records(path: Path, *, level: str | None = None, limit: int = 100) -> list[dict[str, Any]]:
    """Latest records of a JSONL log as flat dicts (level, message, module, time), oldest first."""
    if limit <= 0 or not Path(path).exists():
        return []
    rows: list[dict[str, Any]] = []
    with Path(path).open(encoding="utf-8") as handle:
        for raw in handle:
            payload = _decode_line(raw)
            if not payload or "record" not in payload:
                continue
            record = payload["record"]
            row = {
                "level": record["level"]["name"],
                "message": record["message"],
                "module": record["name"],
                "time": record["time"]["repr"],
            }
            if level and row["level"] != level.upper():
                continue
            rows.append(row)
            if len(rows) > limit:
                rows = rows[-limit:]
    return rows
