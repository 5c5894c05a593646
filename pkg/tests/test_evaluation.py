"""Tests for NSE, evaluation reports, exports and inspection."""

import json

import numpy as np
import pandas as pd
import pytest

from src.data.dataset import TimeSeriesDataset, split, standardize
from src.data.synthetic import generate_synthetic, ground_truth_model
from src.errors import ConfigurationError, NseUndefinedError, ShapeError
from src.evaluation.exports import (
    export_latent, export_predictions, format_inspect_report, inspect, write_inspect_json
)
from src.evaluation.metrics import evaluate, format_nse_report, nse
from src.koopman.dynamics import BlockRotationDynamics
from src.koopman.model import latent_series, predict_series
from src.storage.models import SyntheticConfig


@pytest.fixture(scope="module")
def noisy_series():
    _, noisy, _ = generate_synthetic(SyntheticConfig(n_steps=300, noise_sigma_y=0.05, seed=1))
    return noisy


def test_nse_perfect():
    assert nse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0


def test_nse_of_mean_prediction_is_zero():
    assert nse([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(0.0)


def test_nse_by_hand():
    """Residual sum 1, spread 2."""
    assert nse([1.0, 2.0, 3.0], [1.0, 3.0, 3.0]) == pytest.approx(0.5)


def test_nse_constant_observations():
    with pytest.raises(NseUndefinedError):
        nse([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


def two_pass_nse(observed, simulated):
    n = len(observed)
    mean = sum(observed) / n
    variance = sum((y - mean) ** 2 for y in observed) / n
    mse = sum((y - s) ** 2 for y, s in zip(observed, simulated)) / n
    return 1.0 - mse / variance


@pytest.mark.parametrize("seed", range(5))
def test_nse_agrees_with_two_pass_formula(seed):
    rng = np.random.default_rng(seed)
    scale = rng.uniform(0.1, 10)
    observed = rng.normal(loc=rng.uniform(-50, 50), scale=scale, size=500)
    simulated = observed + rng.normal(scale=scale * rng.uniform(0.05, 1.0), size=500)
    assert abs(nse(observed, simulated) - two_pass_nse(list(observed), list(simulated))) <= 1e-12


def test_nse_drops_as_one_prediction_drifts():
    rng = np.random.default_rng(8)
    observed = rng.normal(size=50)
    simulated = observed + rng.normal(scale=0.1, size=50)
    scores = []
    for offset in (0.0, 0.1, 0.5, 2.0):
        drifted = simulated.copy()
        drifted[17] += np.sign(simulated[17] - observed[17]) * offset
        scores.append(nse(observed, drifted))
    assert all(later < earlier for earlier, later in zip(scores, scores[1:]))


@pytest.mark.parametrize("y_true,y_pred", [([1.0, 2.0], [1.0]), ([1.0], [1.0])])
def test_nse_shape_errors(y_true, y_pred):
    with pytest.raises(ShapeError):
        nse(y_true, y_pred)


def test_evaluate_reports_both_splits(noisy_series):
    train_set, validation_set = split(noisy_series, 200)
    report = evaluate(ground_truth_model(), train_set, validation_set)

    assert report["n_train"] == 200
    assert report["n_validation"] == 100
    assert report["nse_train"] > 0.9
    assert report["nse_validation"] > 0.9
    assert set(report["residual_summary"]) == {"train", "validation"}
    assert report["nse_per_target"]["train"] == [report["nse_train"]]


def test_validation_score_uses_its_own_mean(noisy_series):
    model = ground_truth_model()
    _, validation_set = split(noisy_series, 200)
    expected = nse(validation_set.Y[:, 0], predict_series(model, validation_set.time_index, validation_set.X)[:, 0])
    report = evaluate(model, split(noisy_series, 200)[0], validation_set)
    assert report["nse_validation"] == pytest.approx(expected)


def test_evaluate_does_not_touch_model(noisy_series):
    model = ground_truth_model()
    before = model.parameters()
    evaluate(model, noisy_series)
    for name, value in model.parameters().items():
        np.testing.assert_array_equal(value, before[name])


def test_evaluate_rejects_mixed_normalizations(noisy_series):
    train_set, validation_set = split(noisy_series, 200)
    scaled, _ = standardize(train_set)
    with pytest.raises(ConfigurationError):
        evaluate(ground_truth_model(), scaled, validation_set)


def test_evaluate_rejects_wrong_width():
    dataset = TimeSeriesDataset(X=np.zeros((4, 3)), Y=np.arange(4.0), time_index=np.arange(4))
    with pytest.raises(ShapeError):
        evaluate(ground_truth_model(), dataset)


def test_format_nse_report(noisy_series):
    train_set, validation_set = split(noisy_series, 250)
    text = format_nse_report(evaluate(ground_truth_model(), train_set, validation_set))
    assert "NSE train" in text and "NSE validation" in text and "(n=50)" in text


def test_export_predictions(tmp_path, noisy_series):
    model = ground_truth_model()
    path = export_predictions(model, noisy_series, tmp_path / "predictions.csv", train_count=200)
    frame = pd.read_csv(path)

    assert list(frame.columns) == ["j", "t", "y_true", "y_hat", "split"]
    assert len(frame) == 300
    assert (frame["split"] == "train").sum() == 200
    assert frame["split"].iloc[-1] == "validation"
    np.testing.assert_array_equal(frame["j"], np.arange(300))
    np.testing.assert_allclose(
        frame["y_hat"], predict_series(model, noisy_series.time_index, noisy_series.X)[:, 0], rtol=1e-15
    )


def test_export_predictions_without_split(tmp_path, noisy_series):
    path = export_predictions(ground_truth_model(), noisy_series, tmp_path / "p.csv")
    assert set(pd.read_csv(path)["split"]) == {"all"}


def test_export_is_repeatable(tmp_path, noisy_series):
    first = export_predictions(ground_truth_model(), noisy_series, tmp_path / "a.csv", 200)
    second = export_predictions(ground_truth_model(), noisy_series, tmp_path / "b.csv", 200)
    assert first.read_bytes() == second.read_bytes()


def test_export_latent(tmp_path, noisy_series):
    model = ground_truth_model()
    frame = pd.read_csv(export_latent(model, noisy_series, tmp_path / "latent.csv"))
    assert list(frame.columns) == ["j", "z_1", "z_2"]
    np.testing.assert_allclose(
        frame[["z_1", "z_2"]].to_numpy(),
        latent_series(model, noisy_series.time_index, noisy_series.X),
        rtol=1e-15,
    )


def test_inspect_ground_truth():
    report = inspect(ground_truth_model())
    assert report["omegas"] == [pytest.approx(np.pi / (100 * np.sqrt(10)))]
    assert report["periods"][0] == pytest.approx(200 * np.sqrt(10))
    assert report["mu_frozen"] is True
    assert report["z0"] == [1.0, 1.0]
    assert report["parameter_counts"] == {"phi": 0, "f": 34, "g": 5, "K": 1, "z0": 2}
    assert report["total_parameters"] == 42
    assert report["parameter_norms"]["z0"] == pytest.approx(np.sqrt(2.0))


def test_inspect_zero_frequency_has_no_period():
    model = ground_truth_model()
    model.K = BlockRotationDynamics(omegas=[0.0])
    assert inspect(model)["periods"] == [None]
    assert "inf" in format_inspect_report(inspect(model))


def test_inspect_sidecar(tmp_path):
    report = inspect(ground_truth_model())
    path = write_inspect_json(report, tmp_path / "inspect.json")
    assert json.loads(path.read_text(encoding="utf-8"))["total_parameters"] == 42
    assert "(frozen)" in format_inspect_report(report)
