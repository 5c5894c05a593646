"""Plot-ready CSV exports and learned-parameter inspection."""

import json
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from ..data.dataset import CSV_FLOAT_FORMAT, TimeSeriesDataset
from ..koopman.model import LddmdModel, flatten_parameters, latent_series, predict_series
from ..observability.logging import get_logger
from ..observability.tracing import TimedOperation
from ..storage.models import InspectReport

logger = get_logger(__name__)


def _write(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def _target_columns(dataset: TimeSeriesDataset, prefix: str):
    if dataset.output_dim == 1:
        return [prefix]
    return [f"{prefix}_{name}" for name in dataset.target_names]


def export_predictions(
    model: LddmdModel,
    dataset: TimeSeriesDataset,
    path: Union[str, Path],
    train_count: Optional[int] = None
) -> Path:
    """
    Write ``j,t,y_true,y_hat,split`` rows for a whole series.

    Rows before ``train_count`` are labelled ``train``, later rows
    ``validation``; without a boundary every row is labelled ``all``.
    With several targets the value columns carry the target names.
    """
    with TimedOperation("export_predictions"):
        predictions = predict_series(model, dataset.time_index, dataset.X)
        frame = pd.DataFrame({"j": dataset.time_index, "t": dataset.times()})
        for k, column in enumerate(_target_columns(dataset, "y_true")):
            frame[column] = dataset.Y[:, k]
        for k, column in enumerate(_target_columns(dataset, "y_hat")):
            frame[column] = predictions[:, k]
        if train_count is None:
            frame["split"] = "all"
        else:
            frame["split"] = np.where(np.arange(dataset.n_steps) < train_count, "train", "validation")
        return _write(frame, path)


def export_latent(model: LddmdModel, dataset: TimeSeriesDataset, path: Union[str, Path]) -> Path:
    """Write ``j,z_1..z_dc``: the telescoped latent state along the series."""
    with TimedOperation("export_latent"):
        states = latent_series(model, dataset.time_index, dataset.X)
        return export_latent_series(dataset.time_index, states, path)


def export_latent_series(time_index: np.ndarray, states: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a precomputed (N, d_c) latent trajectory as ``j,z_1..``."""
    frame = pd.DataFrame({"j": np.asarray(time_index)})
    for k in range(states.shape[1]):
        frame[f"z_{k + 1}"] = states[:, k]
    return _write(frame, path)


def inspect(model: LddmdModel) -> InspectReport:
    """Frequencies, periods, decays, z0, and parameter counts and norms per component."""
    groups = model.parameter_groups()
    params = model.parameters()
    counts = {}
    norms = {}
    for group, names in groups.items():
        values = flatten_parameters({n: params[n] for n in names}) if names else np.zeros(0)
        counts[group] = int(values.size)
        norms[group] = float(np.linalg.norm(values))

    omegas = model.K.omegas.tolist()
    return {
        "omegas": omegas,
        "periods": [2.0 * math.pi / abs(w) if w != 0 else None for w in omegas],
        "mus": model.K.mus.tolist(),
        "mu_frozen": not model.K.mu_learnable,
        "dt": float(model.K.dt),
        "z0": model.z0.tolist(),
        "parameter_counts": counts,
        "total_parameters": int(sum(counts.values())),
        "parameter_norms": norms,
    }


def format_inspect_report(report: InspectReport) -> str:
    """Plain-text rendering of an inspect report."""
    mu_tag = " (frozen)" if report["mu_frozen"] else ""
    lines = [
        "omega: " + ", ".join(f"{w:.6g}" for w in report["omegas"]),
        "period: " + ", ".join("inf" if p is None else f"{p:.6g}" for p in report["periods"]),
        "mu: " + ", ".join(f"{m:.6g}" for m in report["mus"]) + mu_tag,
        "z0: " + ", ".join(f"{z:.6g}" for z in report["z0"]),
        f"parameters: {report['total_parameters']}",
    ]
    for group, count in report["parameter_counts"].items():
        lines.append(f"  {group}: {count} (norm {report['parameter_norms'][group]:.6g})")
    return "\n".join(lines)


def write_inspect_json(report: InspectReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
