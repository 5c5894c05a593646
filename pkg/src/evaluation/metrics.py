"""Nash-Sutcliffe efficiency and split-wise evaluation reports."""

from typing import Dict, List, Optional, Sequence

import numpy as np

from ..data.dataset import TimeSeriesDataset
from ..errors import ConfigurationError, NseUndefinedError, ShapeError
from ..koopman.model import LddmdModel, predict_series
from ..observability.logging import get_logger
from ..observability.tracing import TimedOperation, emit_event
from ..storage.models import NseReport, ResidualSummary

logger = get_logger(__name__)


def nse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    """
    Nash-Sutcliffe efficiency 1 - sum (y - y_hat)^2 / sum (y - mean(y))^2.

    The mean is taken over ``y_true`` as given, so each split uses its own mean.

    Raises:
        ShapeError: lengths differ or fewer than two values
        NseUndefinedError: ``y_true`` is constant
    """
    observed = np.asarray(y_true, dtype=np.float64).reshape(-1)
    simulated = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if observed.shape != simulated.shape:
        raise ShapeError(f"got {observed.size} observations but {simulated.size} predictions")
    if observed.size < 2:
        raise ShapeError("NSE needs at least two values")

    spread = np.sum((observed - observed.mean()) ** 2)
    if not spread > 0:
        raise NseUndefinedError("NSE is undefined for constant observations")
    return float(1.0 - np.sum((observed - simulated) ** 2) / spread)


def _residual_summary(residuals: np.ndarray) -> ResidualSummary:
    return {
        "min": float(residuals.min()),
        "mean": float(residuals.mean()),
        "max": float(residuals.max()),
    }


def _check_fit(model: LddmdModel, dataset: TimeSeriesDataset) -> None:
    if dataset.input_dim != model.input_dim or dataset.output_dim != model.output_dim:
        raise ShapeError(
            f"model maps {model.input_dim} inputs to {model.output_dim} targets, "
            f"dataset has {dataset.input_dim} and {dataset.output_dim}"
        )


def _split_scores(model: LddmdModel, dataset: TimeSeriesDataset) -> Dict[str, object]:
    predictions = predict_series(model, dataset.time_index, dataset.X)
    per_target = [nse(dataset.Y[:, k], predictions[:, k]) for k in range(dataset.output_dim)]
    return {
        "nse": float(np.mean(per_target)),
        "per_target": per_target,
        "residuals": _residual_summary(dataset.Y - predictions),
    }


def evaluate(
    model: LddmdModel,
    train_set: TimeSeriesDataset,
    validation_set: Optional[TimeSeriesDataset] = None
) -> NseReport:
    """
    NSE of a model on the training split and, if given, the validation split.

    Predictions use the absolute time indices stored in each split, so
    validation scores measure extrapolation past the training window. With
    several targets the headline NSE is the mean of the per-target values.

    Args:
        model: Trained model
        train_set: Training split
        validation_set: Optional later split sharing the training normalization

    Returns:
        NseReport
    """
    _check_fit(model, train_set)
    if validation_set is not None:
        _check_fit(model, validation_set)
        if train_set.normalization_stats != validation_set.normalization_stats:
            raise ConfigurationError("train and validation splits use different normalizations")

    with TimedOperation("evaluate"):
        train_scores = _split_scores(model, train_set)
        residual_summary: Dict[str, ResidualSummary] = {"train": train_scores["residuals"]}
        nse_per_target: Dict[str, List[float]] = {"train": train_scores["per_target"]}
        nse_validation = None
        if validation_set is not None:
            validation_scores = _split_scores(model, validation_set)
            nse_validation = validation_scores["nse"]
            residual_summary["validation"] = validation_scores["residuals"]
            nse_per_target["validation"] = validation_scores["per_target"]

    report: NseReport = {
        "nse_train": train_scores["nse"],
        "nse_validation": nse_validation,
        "n_train": train_set.n_steps,
        "n_validation": 0 if validation_set is None else validation_set.n_steps,
        "residual_summary": residual_summary,
        "nse_per_target": nse_per_target,
    }
    emit_event(
        "evaluation_completed",
        metadata={"nse_train": report["nse_train"], "nse_validation": nse_validation}
    )
    return report


def format_nse_report(report: NseReport) -> str:
    """Human readable summary of an NseReport."""
    lines = [f"NSE train:      {report['nse_train']:.3f}  (n={report['n_train']})"]
    if report["nse_validation"] is not None:
        lines.append(
            f"NSE validation: {report['nse_validation']:.3f}  (n={report['n_validation']})"
        )
    for split_name, summary in report["residual_summary"].items():
        lines.append(
            f"residuals {split_name}: min {summary['min']:.4g}  "
            f"mean {summary['mean']:.4g}  max {summary['max']:.4g}"
        )
    return "\n".join(lines)
