"""Tests for the synthetic system and CSV datasets."""

from pathlib import Path

import numpy as np
import pytest

from src.data.dataset import (
    TimeSeriesDataset, apply_standardization, load_csv, split, standardize, write_csv
)
from src.data.synthetic import (
    FullLatentSystem, add_noise, generate_synthetic, ground_truth_model
)
from src.errors import ConfigurationError, DataLoadError
from src.evaluation.metrics import evaluate
from src.koopman.model import latent_series
from src.storage.models import CsvSchema, SyntheticConfig, TrainConfig
from src.training.trainer import init_model

FIXTURE = Path(__file__).parent / "fixtures" / "era5_daily_fixture.csv"

ERA5_FEATURES = (
    "dewpoint_temperature_2m__mean__era5l_daily",
    "potential_evaporation__sum__era5l_daily",
    "snow_depth_water_equivalent__mean__era5l_daily",
    "surface_net_solar_radiation__mean__era5l_daily",
    "surface_net_thermal_radiation__mean__era5l_daily",
    "surface_pressure__mean__era5l_daily",
    "temperature_2m__mean__era5l_daily",
    "total_precipitation__sum__era5l_daily",
    "u_component_of_wind_10m__mean__era5l_daily",
    "v_component_of_wind_10m__mean__era5l_daily",
    "volumetric_soil_water_layer_1__mean__era5l_daily",
    "volumetric_soil_water_layer_2__mean__era5l_daily",
    "volumetric_soil_water_layer_3__mean__era5l_daily",
    "volumetric_soil_water_layer_4__mean__era5l_daily",
)

ERA5_SCHEMA = CsvSchema(time_column="date", feature_columns=ERA5_FEATURES, target_column="streamflow")


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def synthetic():
    return generate_synthetic(SyntheticConfig(n_steps=600, noise_sigma_y=0.05, seed=3))


def test_initial_state(synthetic):
    clean, _, zs = synthetic
    np.testing.assert_allclose(clean.X[0], [np.sin(4.0), 4.0], atol=1e-12)
    np.testing.assert_allclose(zs[0], [-1.10406, 1.91893], atol=1e-4)
    assert clean.Y[0, 0] == pytest.approx(1.4364, abs=1e-3)


def test_inputs_have_period_200(synthetic):
    clean, _, _ = synthetic
    np.testing.assert_allclose(clean.X[200], clean.X[0], atol=1e-6)
    np.testing.assert_allclose(clean.X[400], clean.X[0], atol=1e-6)


def test_targets_carry_memory(synthetic):
    """Same input, different target: x repeats every 200 steps, y does not."""
    clean, _, _ = synthetic
    assert abs(clean.Y[200, 0] - clean.Y[0, 0]) > 1e-3


def test_ground_truth_latent_matches_generator(synthetic):
    clean, _, zs = synthetic
    model = ground_truth_model()
    np.testing.assert_allclose(latent_series(model, clean.time_index, clean.X), zs, atol=1e-8)


def test_ground_truth_scores_perfectly_on_clean_data(synthetic):
    clean, _, _ = synthetic
    report = evaluate(ground_truth_model(), clean)
    assert report["nse_train"] == pytest.approx(1.0, abs=1e-10)


def test_ground_truth_parameter_count():
    """psi2 is fixed; f has 34 weights, g 5, K one frequency, z0 two entries."""
    assert ground_truth_model().parameter_count() == 34 + 5 + 1 + 2


def test_initial_state_maps_to_latent_start():
    system = FullLatentSystem()
    x, z = system.initial_state()
    u, v = system.forward(x, z)
    np.testing.assert_allclose(u, [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(v, [1.0, 1.0], atol=1e-12)


def test_noise_touches_only_targets_by_default(synthetic):
    clean, noisy, _ = synthetic
    np.testing.assert_array_equal(noisy.X, clean.X)
    residual = noisy.Y - clean.Y
    assert np.std(residual) == pytest.approx(0.05 * np.std(clean.Y), rel=0.15)


def test_noise_is_seeded(synthetic):
    clean, noisy, _ = synthetic
    again = add_noise(clean, 0.0, 0.05, seed=3, relative=True)
    other = add_noise(clean, 0.0, 0.05, seed=4, relative=True)
    np.testing.assert_array_equal(again.Y, noisy.Y)
    assert not np.array_equal(other.Y, noisy.Y)


def test_target_noise_independent_of_input_noise(synthetic):
    clean, _, _ = synthetic
    quiet = add_noise(clean, 0.0, 0.1, seed=9)
    loud = add_noise(clean, 0.2, 0.1, seed=9)
    np.testing.assert_array_equal(quiet.Y, loud.Y)
    assert not np.array_equal(loud.X, clean.X)


def test_noise_mean_and_spread_over_a_million_draws():
    n = 1_000_000
    sigma = 0.3
    clean = TimeSeriesDataset(
        X=np.ones((n, 1)), Y=np.full((n, 1), 2.5), time_index=np.arange(n), time_origin="1990-01-01"
    )
    noisy = add_noise(clean, sigma, sigma, seed=11)
    for residual in (noisy.Y - clean.Y, noisy.X - clean.X):
        assert abs(residual.mean()) <= 4.0 * sigma / 1000.0
        assert residual.std() == pytest.approx(sigma, rel=0.01)
    assert noisy.time_origin == "1990-01-01"


def test_negative_noise_rejected(synthetic):
    with pytest.raises(ConfigurationError):
        add_noise(synthetic[0], -0.1, 0.0, seed=0)


def test_too_short_series_rejected():
    with pytest.raises(ConfigurationError):
        generate_synthetic(SyntheticConfig(n_steps=1))


def test_load_era5_fixture():
    dataset = load_csv(FIXTURE, ERA5_SCHEMA)
    assert dataset.input_dim == 14
    assert dataset.n_steps == 10
    assert dataset.output_dim == 1
    np.testing.assert_array_equal(dataset.time_index, np.arange(10))
    assert dataset.times()[0] == "2015-03-01"
    assert dataset.Y[1, 0] == pytest.approx(0.948)


def test_date_gap_reports_file_row(tmp_path):
    path = write_lines(tmp_path / "gap.csv", [
        "date,x_1,y",
        "2020-01-01,1.0,0.5",
        "2020-01-02,2.0,0.6",
        "2020-01-03,3.0,0.7",
        "2020-01-05,4.0,0.8",
    ])
    with pytest.raises(DataLoadError) as excinfo:
        load_csv(path, CsvSchema(time_column="date", feature_columns=("x_1",)))
    assert excinfo.value.row == 5


def test_integer_time_column_keeps_offset(tmp_path):
    path = write_lines(tmp_path / "offset.csv", ["j,x_1,y", "10,1.0,0.1", "11,2.0,0.2", "12,3.0,0.3"])
    dataset = load_csv(path, CsvSchema(feature_columns=("x_1",)))
    np.testing.assert_array_equal(dataset.time_index, [10, 11, 12])
    assert dataset.input_dim == 1


def strided_series(path, stride, n=128, period=64.0):
    lines = ["j,x_1,y"]
    for k in range(n):
        j = stride * k
        lines.append(f"{j},{np.sin(0.1 * k):.17g},{1.0 + np.cos(2.0 * np.pi * j / period):.17g}")
    return write_lines(path, lines)


def test_stride_becomes_dt(tmp_path):
    dataset = load_csv(strided_series(tmp_path / "every_other.csv", 2), CsvSchema(feature_columns=("x_1",)))
    assert dataset.dt == 2.0
    np.testing.assert_array_equal(dataset.time_index, np.arange(128))
    assert dataset.times()[:3] == [0.0, 2.0, 4.0]


def test_strided_series_initializes_true_frequency(tmp_path):
    dataset = load_csv(strided_series(tmp_path / "every_other.csv", 2), CsvSchema(feature_columns=("x_1",)))
    model = init_model(TrainConfig(latent_dim=2, coupling_hidden_layers=1), dataset, 0)
    assert model.K.dt == 2.0
    assert model.K.omegas[0] == pytest.approx(2.0 * np.pi / 64.0)


def test_strided_series_writes_original_times(tmp_path):
    schema = CsvSchema(feature_columns=("x_1",))
    dataset = load_csv(strided_series(tmp_path / "every_other.csv", 2, n=5), schema)
    path = write_csv(dataset, tmp_path / "copy.csv")
    assert [line.split(",")[0] for line in path.read_text(encoding="utf-8").splitlines()[1:]] == [
        "0", "2", "4", "6", "8"
    ]
    assert load_csv(path, schema).dt == 2.0


def test_off_grid_integer_times_keep_labels(tmp_path):
    path = write_lines(tmp_path / "odd.csv", ["j,x_1,y", "1,1.0,0.1", "3,2.0,0.2", "5,3.0,0.3"])
    dataset = load_csv(path, CsvSchema(feature_columns=("x_1",)))
    np.testing.assert_array_equal(dataset.time_index, [0, 1, 2])
    assert dataset.times() == ["1", "3", "5"]


def test_unexpected_stride_rejected(tmp_path):
    path = strided_series(tmp_path / "every_other.csv", 2, n=4)
    with pytest.raises(DataLoadError, match="stride"):
        load_csv(path, CsvSchema(feature_columns=("x_1",)), dt=1.0)


def daily_rows(start, n):
    days = np.datetime64(start) + np.arange(n)
    return ["date,x_1,y"] + [f"{day},{k + 1.0},{0.1 * k}" for k, day in enumerate(days)]


def test_later_date_slice_keeps_global_indices(tmp_path):
    schema = CsvSchema(time_column="date", feature_columns=("x_1",))
    full = load_csv(write_lines(tmp_path / "full.csv", daily_rows("2000-01-01", 10)), schema)
    assert full.time_origin == "2000-01-01"

    later_path = write_lines(tmp_path / "later.csv", daily_rows("2000-01-07", 4))
    later = load_csv(later_path, schema, time_origin=full.time_origin)
    np.testing.assert_array_equal(later.time_index, [6, 7, 8, 9])
    np.testing.assert_array_equal(later.time_index, full.time_index[6:])
    assert later.times()[0] == "2000-01-07"

    assert load_csv(later_path, schema).time_index[0] == 0


def test_dates_before_origin_rejected(tmp_path):
    schema = CsvSchema(time_column="date", feature_columns=("x_1",))
    path = write_lines(tmp_path / "early.csv", daily_rows("1999-12-30", 4))
    with pytest.raises(DataLoadError) as excinfo:
        load_csv(path, schema, time_origin="2000-01-01")
    assert excinfo.value.row == 2


def test_missing_column(tmp_path):
    path = write_lines(tmp_path / "short.csv", ["j,x_1,y", "0,1.0,0.1"])
    with pytest.raises(DataLoadError, match="x_2"):
        load_csv(path)


def test_missing_file(tmp_path):
    with pytest.raises(DataLoadError):
        load_csv(tmp_path / "absent.csv")


def test_unparseable_value_reports_row(tmp_path):
    path = write_lines(tmp_path / "bad.csv", ["j,x_1,x_2,y", "0,1.0,2.0,0.1", "1,abc,2.0,0.2"])
    with pytest.raises(DataLoadError) as excinfo:
        load_csv(path)
    assert excinfo.value.row == 3


def test_missing_value_fails_by_default(tmp_path):
    path = write_lines(tmp_path / "nan.csv", ["j,x_1,x_2,y", "0,1.0,2.0,0.1", "1,,2.0,0.2", "2,1.0,2.0,0.3"])
    with pytest.raises(DataLoadError) as excinfo:
        load_csv(path)
    assert excinfo.value.row == 3


def test_drop_policy_keeps_time_indices(tmp_path):
    path = write_lines(tmp_path / "nan.csv", ["j,x_1,x_2,y", "0,1.0,2.0,0.1", "1,,2.0,0.2", "2,1.0,2.0,0.3"])
    dataset = load_csv(path, CsvSchema(nan_policy="drop"))
    np.testing.assert_array_equal(dataset.time_index, [0, 2])


def test_write_then_load(tmp_path, synthetic):
    _, noisy, _ = synthetic
    path = write_csv(noisy, tmp_path / "noisy.csv")
    loaded = load_csv(path)
    np.testing.assert_allclose(loaded.X, noisy.X, rtol=1e-15)
    np.testing.assert_allclose(loaded.Y, noisy.Y, rtol=1e-15)
    np.testing.assert_array_equal(loaded.time_index, noisy.time_index)


def test_standardize_statistics():
    dataset = TimeSeriesDataset(X=[[0.0, 5.0], [2.0, 7.0]], Y=[1.0, 2.0], time_index=[0, 1])
    scaled, stats = standardize(dataset)
    np.testing.assert_allclose(scaled.X, [[-1.0, -1.0], [1.0, 1.0]])
    assert stats["x_1"] == (1.0, 1.0)
    np.testing.assert_array_equal(scaled.Y, dataset.Y)


def test_standardization_reuses_training_statistics():
    train = TimeSeriesDataset(X=[[0.0], [2.0]], Y=[1.0, 2.0], time_index=[0, 1])
    later = TimeSeriesDataset(X=[[4.0]], Y=[3.0], time_index=[2])
    _, stats = standardize(train)
    np.testing.assert_allclose(apply_standardization(later, stats).X, [[3.0]])


def test_constant_column_named_in_error():
    dataset = TimeSeriesDataset(
        X=[[1.0, 0.0], [1.0, 1.0]], Y=[0.0, 1.0], time_index=[0, 1], feature_names=("flat", "ramp")
    )
    with pytest.raises(ConfigurationError, match="flat"):
        standardize(dataset)


def test_split_keeps_absolute_indices():
    dataset = TimeSeriesDataset(X=np.arange(20.0).reshape(10, 2), Y=np.arange(10.0), time_index=np.arange(10))
    train, validation = split(dataset, 6)
    assert train.n_steps == 6
    np.testing.assert_array_equal(validation.time_index, [6, 7, 8, 9])


def test_split_singletons():
    dataset = TimeSeriesDataset(X=[[0.0], [1.0]], Y=[0.0, 1.0], time_index=[0, 1])
    train, validation = split(dataset, 1)
    assert train.n_steps == validation.n_steps == 1


@pytest.mark.parametrize("count", [0, 10])
def test_split_bounds(count):
    dataset = TimeSeriesDataset(X=np.zeros((10, 1)), Y=np.arange(10.0), time_index=np.arange(10))
    with pytest.raises(ConfigurationError):
        split(dataset, count)


def test_dataset_is_immutable():
    dataset = TimeSeriesDataset(X=[[0.0]], Y=[0.0], time_index=[0])
    with pytest.raises(ValueError):
        dataset.X[0, 0] = 1.0


def test_time_index_must_increase():
    with pytest.raises(ConfigurationError):
        TimeSeriesDataset(X=[[0.0], [1.0]], Y=[0.0, 1.0], time_index=[1, 1])
