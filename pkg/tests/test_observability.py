"""Logging and tracing tests."""

import logging

import numpy as np
import pytest

from src.config import Config
from src.observability.logging import get_logger, log_function_call, set_level, summarize_array_shapes
from src.observability.tracing import TimedOperation, emit_event, start_span


def test_logger_is_configured_once():
    logger = get_logger("src.test_logger")
    again = get_logger("src.test_logger")
    assert logger is again
    assert len(logger.handlers) == 1
    assert logger.propagate is False


def test_set_level_applies_to_package_loggers():
    logger = get_logger("src.test_levels")
    set_level("WARNING")
    try:
        assert logger.level == logging.WARNING
        assert all(h.level == logging.WARNING for h in logger.handlers)
    finally:
        set_level("INFO")


def test_new_loggers_take_the_configured_level(monkeypatch):
    monkeypatch.setattr(Config, "LOG_LEVEL", "warning")
    logger = get_logger("src.test_configured_level")
    assert logger.level == logging.WARNING
    assert all(h.level == logging.WARNING for h in logger.handlers)


def test_unknown_configured_level_falls_back_to_info(monkeypatch):
    monkeypatch.setattr(Config, "LOG_LEVEL", "chatty")
    assert get_logger("src.test_fallback_level").level == logging.INFO


def test_extra_fields_follow_the_message():
    formatter = get_logger("src.test_format").handlers[0].formatter
    record = logging.LogRecord("src.test_format", logging.INFO, __file__, 1, "Epoch done", None, None)
    record.epoch = 3
    record.weights = np.zeros((2, 2))
    assert formatter.format(record).endswith("| Epoch done | epoch=3 weights=array(2, 2)")


def test_plain_records_have_no_trailing_fields():
    formatter = get_logger("src.test_format").handlers[0].formatter
    record = logging.LogRecord("src.test_format", logging.INFO, __file__, 1, "Started", None, None)
    assert formatter.format(record).endswith("| INFO | Started")


def test_array_summaries():
    summary = summarize_array_shapes({
        "weights": np.zeros((3, 4)),
        "scalar": np.float64(1.5),
        "history": list(range(20)),
        "nested": {"z0": np.ones(2)},
        "name": "run",
    })
    assert summary["weights"] == "array(3, 4)"
    assert summary["scalar"] == 1.5
    assert summary["history"] == "list[20]"
    assert summary["nested"] == {"z0": "array(2,)"}
    assert summary["name"] == "run"


def test_function_call_record(caplog):
    logger = get_logger("src.test_calls")
    logger.propagate = True
    try:
        with caplog.at_level(logging.INFO, logger="src.test_calls"):
            log_function_call(logger, "cmd_train", {"X": np.zeros((10, 2))}, 12.5)
    finally:
        logger.propagate = False

    record = caplog.records[-1]
    assert record.function == "cmd_train"
    assert record.call_args == {"X": "array(10, 2)"}
    assert record.duration_ms == 12.5


def test_emit_event():
    event = emit_event("epoch_completed", metadata={"epoch": 3}, duration_ms=1.0)
    assert event.event_type == "epoch_completed"
    assert event.metadata == {"epoch": 3}


def test_span_ids_carry_name():
    assert start_span("fit").startswith("fit_")


def test_timed_operation_measures_duration():
    with TimedOperation("work") as timer:
        sum(range(1000))
    assert timer.duration_ms is not None and timer.duration_ms >= 0.0


def test_timed_operation_passes_exceptions_through():
    with pytest.raises(ZeroDivisionError):
        with TimedOperation("failing") as timer:
            1 / 0
    assert timer.duration_ms is not None
