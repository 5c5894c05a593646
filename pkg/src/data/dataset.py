"""Immutable time-series datasets, CSV ingestion, standardization and temporal splits."""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import ConfigurationError, DataLoadError, ShapeError
from ..observability.logging import get_logger
from ..observability.tracing import emit_event
from ..storage.models import CsvSchema

logger = get_logger(__name__)

NormalizationStats = Dict[str, Tuple[float, float]]

CSV_FLOAT_FORMAT = "%.17g"


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    array = np.array(array, dtype=dtype)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class TimeSeriesDataset:
    """
    Aligned inputs x^j and targets y^j with their absolute time indices.

    Attributes:
        X: (N, d) inputs
        Y: (N, m) targets
        time_index: (N,) strictly increasing absolute indices j
        dt: Time between consecutive indices, in the time column's unit
        feature_names: d input column labels
        target_names: m target column labels
        time_column: Name of the time column
        time_labels: Time column as written, for dates and off-grid integer times
        time_origin: ISO date with j = 0, when the time column held dates
        normalization_stats: Per feature column (mean, std) if standardized
    """
    X: np.ndarray
    Y: np.ndarray
    time_index: np.ndarray
    dt: float = 1.0
    feature_names: Tuple[str, ...] = ()
    target_names: Tuple[str, ...] = ("y",)
    time_column: str = "j"
    time_labels: Optional[Tuple[str, ...]] = None
    time_origin: Optional[str] = None
    normalization_stats: Optional[NormalizationStats] = None

    def __post_init__(self) -> None:
        X = _frozen(self.X, np.float64)
        Y = _frozen(self.Y, np.float64)
        if Y.ndim == 1:
            Y = _frozen(Y.reshape(-1, 1), np.float64)
        index = _frozen(self.time_index, np.int64)

        if X.ndim != 2 or Y.ndim != 2:
            raise ShapeError("X and Y must be two-dimensional")
        n = X.shape[0]
        if n < 1:
            raise ConfigurationError("a dataset needs at least one row")
        if Y.shape[0] != n or index.shape != (n,):
            raise ShapeError(
                f"rows disagree: X has {n}, Y has {Y.shape[0]}, time index has {index.size}"
            )
        if n > 1 and np.any(np.diff(index) <= 0):
            raise ConfigurationError("time indices must be strictly increasing")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ConfigurationError("dataset contains non-finite values")

        feature_names = tuple(self.feature_names) or tuple(f"x_{k + 1}" for k in range(X.shape[1]))
        if len(feature_names) != X.shape[1] or len(self.target_names) != Y.shape[1]:
            raise ShapeError("column labels do not match the data width")
        if self.time_labels is not None and len(self.time_labels) != n:
            raise ShapeError("one time label per row is required")

        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "time_index", index)
        object.__setattr__(self, "feature_names", feature_names)
        object.__setattr__(self, "target_names", tuple(self.target_names))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_steps(self) -> int:
        return self.X.shape[0]

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    @property
    def output_dim(self) -> int:
        return self.Y.shape[1]

    @property
    def t0_index(self) -> int:
        return int(self.time_index[0])

    @property
    def column_names(self) -> Tuple[str, ...]:
        return (self.time_column, *self.feature_names, *self.target_names)

    def times(self) -> list:
        """Time column values: the original date labels, or j * dt."""
        if self.time_labels is not None:
            return list(self.time_labels)
        return [float(j) * self.dt for j in self.time_index]

    def rows(self, positions: Union[slice, Sequence[int], np.ndarray]) -> "TimeSeriesDataset":
        """Sub-dataset keeping absolute time indices."""
        labels = None
        if self.time_labels is not None:
            labels = tuple(np.asarray(self.time_labels, dtype=object)[positions])
        return replace(
            self,
            X=self.X[positions],
            Y=self.Y[positions],
            time_index=self.time_index[positions],
            time_labels=labels,
        )


def _file_row(position: int) -> int:
    # header is line 1
    return int(position) + 2


def _numeric_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() & raw.notna()
    if bad.any():
        position = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataLoadError(
            f"column {column!r} has an unparseable value {raw.iloc[position]!r}",
            row=_file_row(position),
        )
    return values.to_numpy(dtype=np.float64)


def _time_axis(
    frame: pd.DataFrame,
    column: str,
    time_origin: Optional[str] = None
) -> Tuple[np.ndarray, Optional[Tuple[str, ...]], Optional[str]]:
    """
    Time values in the column's unit: integers as written, dates as whole days from the origin.

    The origin is ``time_origin`` when given, else the first date in the file.

    Returns:
        (values, date labels or None, ISO origin or None)
    """
    raw = frame[column]
    if raw.isna().any():
        position = int(np.flatnonzero(raw.isna().to_numpy())[0])
        raise DataLoadError(f"time column {column!r} has a missing value", row=_file_row(position))

    numbers = pd.to_numeric(raw, errors="coerce")
    if numbers.notna().all():
        values = numbers.to_numpy(dtype=np.float64)
        if not np.all(values == np.round(values)):
            position = int(np.flatnonzero(values != np.round(values))[0])
            raise DataLoadError(
                f"time column {column!r} must hold integers or ISO dates", row=_file_row(position)
            )
        return values.astype(np.int64), None, None

    dates = pd.to_datetime(raw, format="ISO8601", errors="coerce")
    if dates.isna().any():
        position = int(np.flatnonzero(dates.isna().to_numpy())[0])
        raise DataLoadError(
            f"time column {column!r} has an unparseable entry {raw.iloc[position]!r}",
            row=_file_row(position),
        )
    if time_origin is None:
        origin = dates.iloc[0]
    else:
        origin = pd.to_datetime(time_origin, format="ISO8601", errors="coerce")
        if pd.isna(origin):
            raise DataLoadError(f"time origin {time_origin!r} is not an ISO date")
    days = ((dates - origin).dt.days).to_numpy(dtype=np.int64)
    return days, tuple(str(v) for v in raw), origin.strftime("%Y-%m-%d")


def _stride(values: np.ndarray, column: str, expected: Optional[float] = None) -> int:
    """Constant step between rows; a single row takes ``expected`` (default 1)."""
    if values.size < 2:
        stride = 1 if expected is None else int(expected)
    else:
        steps = np.diff(values)
        stride = int(steps[0])
        if stride <= 0:
            raise DataLoadError(f"time column {column!r} must increase", row=_file_row(1))
        off = np.flatnonzero(steps != stride)
        if off.size:
            position = int(off[0]) + 1
            raise DataLoadError(
                f"non-constant stride in {column!r}: expected {stride}, got {steps[off[0]]}",
                row=_file_row(position),
            )
    if expected is not None and stride != expected:
        raise DataLoadError(f"time column {column!r} has stride {stride}, expected {expected:g}")
    return stride


def load_csv(
    path: Union[str, Path],
    schema: CsvSchema = CsvSchema(),
    time_origin: Optional[str] = None,
    dt: Optional[float] = None
) -> TimeSeriesDataset:
    """
    Read a time-series CSV into a dataset.

    The time column holds integers or ISO dates; dates count whole days from
    ``time_origin`` (default: the first date in the file). The stride between
    rows must be constant and becomes dt, so j = time // dt. Files read with
    the training origin and stride share the training time grid.

    Args:
        path: CSV file with a header row, comma separated, UTF-8
        schema: Column names and NaN policy
        time_origin: ISO date with j = 0, for date columns
        dt: Required stride; also the stride of a single-row file

    Returns:
        Dataset with d = len(schema.feature_columns) and m = 1

    Raises:
        DataLoadError: missing file or columns, unparseable values, non-constant
            or unexpected stride, dates before the origin or off its grid, or NaN
            entries under the "fail" policy; row numbers refer to lines in the file
    """
    path = Path(path)
    if not path.is_file():
        raise DataLoadError(f"data file not found: {path}")

    try:
        frame = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataLoadError(f"could not parse {path}: {e}") from e

    wanted = [schema.time_column, *schema.feature_columns, schema.target_column]
    missing = [c for c in wanted if c not in frame.columns]
    if missing:
        raise DataLoadError(f"{path} is missing columns {missing}")
    if frame.empty:
        raise DataLoadError(f"{path} has no data rows")

    values, labels, origin = _time_axis(frame, schema.time_column, time_origin)
    stride = _stride(values, schema.time_column, dt)
    if origin is not None and (np.any(values < 0) or np.any(values % stride)):
        position = int(np.flatnonzero((values < 0) | (values % stride != 0))[0])
        raise DataLoadError(
            f"date {labels[position]} lies before {origin} or off its {stride}-day grid",
            row=_file_row(position),
        )
    index = values // stride
    if labels is None and np.any(values % stride):
        # off-grid integer times keep their written values for exports
        labels = tuple(str(v) for v in values)

    X = np.column_stack([_numeric_column(frame, c) for c in schema.feature_columns])
    Y = _numeric_column(frame, schema.target_column).reshape(-1, 1)

    gaps = ~(np.all(np.isfinite(X), axis=1) & np.isfinite(Y[:, 0]))
    if gaps.any():
        if schema.nan_policy == "fail":
            raise DataLoadError(
                f"{int(gaps.sum())} rows contain missing values", row=_file_row(np.flatnonzero(gaps)[0])
            )
        keep = ~gaps
        logger.warning(
            f"Dropping {int(gaps.sum())} rows with missing values",
            extra={"path": str(path), "dropped": int(gaps.sum())}
        )
        X, Y, index = X[keep], Y[keep], index[keep]
        if labels is not None:
            labels = tuple(label for label, k in zip(labels, keep) if k)
        if X.shape[0] == 0:
            raise DataLoadError(f"{path} has no complete rows")

    dataset = TimeSeriesDataset(
        X=X,
        Y=Y,
        time_index=index,
        dt=float(stride),
        feature_names=tuple(schema.feature_columns),
        target_names=(schema.target_column,),
        time_column=schema.time_column,
        time_labels=labels,
        time_origin=origin,
    )
    emit_event(
        "dataset_loaded",
        metadata={"path": str(path), "rows": dataset.n_steps, "features": dataset.input_dim}
    )
    return dataset


def write_csv(dataset: TimeSeriesDataset, path: Union[str, Path]) -> Path:
    """Write a dataset in the layout load_csv reads, with round-trip float precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if dataset.time_labels is not None:
        time_values = list(dataset.time_labels)
    elif float(dataset.dt).is_integer():
        time_values = list(dataset.time_index * int(dataset.dt))
    else:
        time_values = dataset.times()
    frame = pd.DataFrame({dataset.time_column: time_values})
    for k, name in enumerate(dataset.feature_names):
        frame[name] = dataset.X[:, k]
    for k, name in enumerate(dataset.target_names):
        frame[name] = dataset.Y[:, k]
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def apply_standardization(dataset: TimeSeriesDataset, stats: NormalizationStats) -> TimeSeriesDataset:
    """Z-score the features with previously computed (mean, std) per column."""
    missing = [name for name in dataset.feature_names if name not in stats]
    if missing:
        raise ConfigurationError(f"no normalization statistics for columns {missing}")
    means = np.array([stats[name][0] for name in dataset.feature_names])
    stds = np.array([stats[name][1] for name in dataset.feature_names])
    return replace(dataset, X=(dataset.X - means) / stds, normalization_stats=dict(stats))


def standardize(dataset: TimeSeriesDataset) -> Tuple[TimeSeriesDataset, NormalizationStats]:
    """
    Z-score every feature column (population std, ddof=0); targets stay in physical units.

    Raises:
        ConfigurationError: fewer than two rows, or a constant column (named)
    """
    if dataset.n_steps < 2:
        raise ConfigurationError("standardization needs at least two rows")
    means = dataset.X.mean(axis=0)
    stds = dataset.X.std(axis=0, ddof=0)
    constant = [name for name, s in zip(dataset.feature_names, stds) if not s > 0]
    if constant:
        raise ConfigurationError(f"zero-variance feature columns cannot be standardized: {constant}")
    stats = {name: (float(m), float(s)) for name, m, s in zip(dataset.feature_names, means, stds)}
    return apply_standardization(dataset, stats), stats


def split(dataset: TimeSeriesDataset, train_count: int) -> Tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """
    Contiguous temporal split: the first ``train_count`` rows train, the rest validate.

    Validation rows keep their absolute time indices.
    """
    if not 1 <= train_count < dataset.n_steps:
        raise ConfigurationError(
            f"train_count must lie in [1, {dataset.n_steps - 1}], got {train_count}"
        )
    return dataset.rows(slice(0, train_count)), dataset.rows(slice(train_count, None))
