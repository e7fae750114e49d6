"""Tests for the loguru sinks and the JSONL log reader."""

from __future__ import annotations

import json

from loguru import logger

from stepstress.core.types import BaselineHazard, GroupedCounts, ModelParams, StepStressDesign
from stepstress.observability.logging import configure_logging, read_log_records
from stepstress.simulation.generator import ContaminationSpec, generate_counts

THETA = ModelParams(BaselineHazard.linear(0.02, 0.005), 0.5)
DESIGN = StepStressDesign(0.5, 2.5, 4.0, (2.0, 4.0, 6.0), 50)


def test_library_warnings_reach_the_jsonl_log(tmp_path):
    path = tmp_path / "logs" / "run.jsonl"
    handlers = configure_logging("DEBUG", json_path=path)
    try:
        assert len(handlers) == 2
        counts = generate_counts(THETA, DESIGN, ContaminationSpec(1, 1e6), seed=1)
        assert isinstance(counts, GroupedCounts)
    finally:
        configure_logging("WARNING")
    rows = read_log_records(path, level="WARNING")
    assert len(rows) == 1
    assert "clamped" in rows[0]["message"]
    assert rows[0]["module"] == "stepstress.simulation.generator"
    first = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert set(first) == {"text", "record"}


def test_stderr_sink_respects_the_level(capsys):
    configure_logging("ERROR")
    try:
        logger.warning("quiet")
        logger.error("loud")
    finally:
        configure_logging("WARNING")
    err = capsys.readouterr().err
    assert "loud" in err
    assert "quiet" not in err


def test_reader_filters_limits_and_skips_noise(tmp_path):
    path = tmp_path / "run.jsonl"
    configure_logging("DEBUG", json_path=path)
    try:
        for i in range(5):
            logger.info("step {}", i)
        logger.warning("odd")
    finally:
        configure_logging("WARNING")
    with path.open("a", encoding="utf-8") as f:
        f.write("not json\n\n[1, 2]\n")

    assert [r["message"] for r in read_log_records(path, limit=2)] == ["step 4", "odd"]
    assert [r["message"] for r in read_log_records(path, level="warning")] == ["odd"]
    assert len(read_log_records(path, level="INFO")) == 5
    assert read_log_records(path, limit=0) == []
    assert read_log_records(tmp_path / "missing.jsonl") == []
