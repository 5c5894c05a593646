"""Configuration management for LDDMD.

Two layers: process settings come from the environment (``.env`` supported),
run settings that affect reproducibility come from one JSON file per run.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, Union, get_args, get_origin, get_type_hints

from dotenv import load_dotenv

from .errors import ConfigurationError
from .observability.logging import get_logger
from .storage.models import (
    CsvSchema, DataConfig, PathsConfig, RunConfig, SyntheticConfig, TrainConfig,
    validate_data_config, validate_synthetic_config, validate_train_config
)

# Load environment variables
load_dotenv()


def _env_int(name: str, default: int) -> Optional[int]:
    """Integer environment setting; None when the value is not an integer."""
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        return None


class Config:
    """Process-level settings for LDDMD."""

    LOG_LEVEL: str = os.getenv("LDDMD_LOG_LEVEL", os.getenv("LOG_LEVEL", "INFO"))
    THREADS: Optional[int] = _env_int("LDDMD_THREADS", 1)
    DATA_DIR: str = os.getenv("LDDMD_DATA_DIR", "runs")

    @classmethod
    def validate(cls) -> Dict[str, Any]:
        """Validate configuration and return validation report."""
        issues = []
        warnings = []

        if cls.THREADS is None:
            issues.append(f"LDDMD_THREADS must be an integer, got {os.getenv('LDDMD_THREADS')!r}")
        elif cls.THREADS < 1:
            issues.append("LDDMD_THREADS must be at least 1")
        elif cls.THREADS > (os.cpu_count() or 1):
            warnings.append(
                f"LDDMD_THREADS={cls.THREADS} exceeds the {os.cpu_count()} available CPUs"
            )

        if cls.LOG_LEVEL.upper() not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            warnings.append(f"Unknown log level {cls.LOG_LEVEL!r}, falling back to INFO")

        for issue in issues:
            logger.error(f"Configuration error: {issue}")
        for warning in warnings:
            logger.warning(f"Configuration warning: {warning}")

        return {
            "valid": len(issues) == 0,
            "issues": issues,
            "warnings": warnings
        }

    @classmethod
    def get_summary(cls) -> Dict[str, Any]:
        """Get configuration summary for logging/debugging."""
        return {
            "log_level": cls.LOG_LEVEL,
            "threads": cls.THREADS,
            "data_dir": cls.DATA_DIR,
        }


# after Config, which get_logger reads
logger = get_logger(__name__)


def _section(raw: Mapping[str, Any], name: str) -> Dict[str, Any]:
    """A config section as a fresh dict; missing sections are empty."""
    value = raw.get(name, {})
    if not isinstance(value, Mapping):
        raise ConfigurationError(f"Section '{name}' must be a JSON object, got {type(value).__name__}")
    return dict(value)


def _check_field(section: str, name: str, value: Any, expected: Any) -> Any:
    """Return ``value`` (ints widened for float fields) or raise if its JSON type is wrong."""
    if get_origin(expected) is Union:
        members = [a for a in get_args(expected) if a is not type(None)]
        if value is None:
            return value
        expected = members[0]

    if expected is bool:
        ok = isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif get_origin(expected) is tuple:
        ok = isinstance(value, tuple) and all(isinstance(v, str) for v in value)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigurationError(
            f"'{section}.{name}' has the wrong type: {value!r} ({type(value).__name__})"
        )
    return value


def _build_record(
    record_type: Type[Any],
    section: str,
    values: Mapping[str, Any]
) -> Any:
    """Build a NamedTuple from a JSON object, rejecting unknown keys and mistyped values."""
    if not isinstance(values, Mapping):
        raise ConfigurationError(f"Section '{section}' must be a JSON object")

    known = set(record_type._fields)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigurationError(f"Unknown keys in '{section}': {', '.join(unknown)}")

    hints = get_type_hints(record_type)
    checked = {name: _check_field(section, name, value, hints[name]) for name, value in values.items()}
    return record_type(**checked)


def _resolve(base: Path, value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    return str(path)


def parse_run_config(raw: Mapping[str, Any], base_dir: Union[str, Path] = ".") -> RunConfig:
    """
    Turn a decoded JSON document into a validated RunConfig.

    Args:
        raw: Decoded JSON object
        base_dir: Directory that relative paths are resolved against

    Returns:
        Validated run configuration

    Raises:
        ConfigurationError: on unknown keys or invalid values
    """
    top_level = {"seed", "synthetic", "train", "data", "paths"}
    unknown = sorted(set(raw) - top_level)
    if unknown:
        raise ConfigurationError(f"Unknown top-level keys: {', '.join(unknown)}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigurationError(f"seed must be a non-negative integer, got {seed!r}")

    synthetic_raw = _section(raw, "synthetic")
    synthetic_raw.setdefault("seed", seed)
    synthetic = _build_record(SyntheticConfig, "synthetic", synthetic_raw)

    train_raw = _section(raw, "train")
    train_raw.setdefault("seed", seed)
    train = _build_record(TrainConfig, "train", train_raw)

    data_raw = _section(raw, "data")
    schema_raw = _section(data_raw, "schema")
    data_raw.pop("schema", None)
    if "feature_columns" in schema_raw:
        if not isinstance(schema_raw["feature_columns"], list):
            raise ConfigurationError("'data.schema.feature_columns' must be a list of column names")
        schema_raw["feature_columns"] = tuple(schema_raw["feature_columns"])
    schema = _build_record(CsvSchema, "data.schema", schema_raw)
    data = _build_record(DataConfig, "data", {**data_raw, "schema": schema})

    base = Path(base_dir)
    paths = _build_record(PathsConfig, "paths", raw.get("paths", {}))
    paths = PathsConfig(
        output_dir=_resolve(base, paths.output_dir) or str(base),
        data=_resolve(base, paths.data),
        checkpoint=_resolve(base, paths.checkpoint),
    )

    issues = (
        validate_synthetic_config(synthetic)
        + validate_train_config(train)
        + validate_data_config(data)
    )
    if issues:
        raise ConfigurationError("; ".join(issues))

    return RunConfig(seed=seed, synthetic=synthetic, train=train, data=data, paths=paths)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """
    Load a run configuration file.

    Args:
        path: Path to a JSON config file

    Returns:
        Validated RunConfig with paths resolved relative to the file

    Raises:
        ConfigurationError: if the file is missing, not JSON, or invalid
    """
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigurationError(f"Config file not found: {config_path}")

    try:
        raw = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {config_path} is not valid JSON: {e}") from e

    if not isinstance(raw, dict):
        raise ConfigurationError(f"Config file {config_path} must contain a JSON object")

    config = parse_run_config(raw, config_path.resolve().parent)
    logger.info(f"Loaded run config from {config_path}", extra={"seed": config.seed})
    return config._replace(source=str(config_path))


def train_config_to_dict(config: TrainConfig) -> Dict[str, Any]:
    """Plain-JSON form of a TrainConfig."""
    return dict(config._asdict())


def train_config_from_dict(values: Mapping[str, Any]) -> TrainConfig:
    """Inverse of train_config_to_dict, rejecting unknown keys."""
    return _build_record(TrainConfig, "train", values)


def schema_to_dict(schema: CsvSchema) -> Dict[str, Any]:
    """Plain-JSON form of a CsvSchema."""
    values = dict(schema._asdict())
    values["feature_columns"] = list(schema.feature_columns)
    return values


def schema_from_dict(values: Mapping[str, Any]) -> CsvSchema:
    """Inverse of schema_to_dict."""
    values = dict(values)
    if "feature_columns" in values:
        values["feature_columns"] = tuple(values["feature_columns"])
    return _build_record(CsvSchema, "schema", values)


def validate_environment() -> bool:
    """Validate environment setup."""
    validation = Config.validate()

    if not validation["valid"]:
        logger.error("Environment validation failed")
        return False

    logger.debug("Environment validation passed")
    return True
