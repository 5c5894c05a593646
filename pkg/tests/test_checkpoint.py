"""Tests for checkpoint files."""

import numpy as np
import pytest

from src.data.synthetic import ground_truth_model
from src.errors import CheckpointCorruptError, CheckpointError, CheckpointVersionError, ShapeError
from src.koopman.dynamics import BlockRotationDynamics
from src.koopman.maps import AdditiveCouplingDiffeo, PolyMLP, ReadoutMLP
from src.koopman.model import LddmdModel, predict_series
from src.storage.models import CsvSchema, TrainConfig
from src.training.checkpoint import (
    Checkpoint, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
)
from src.training.optimizer import AdamState

CONFIG = TrainConfig(latent_dim=4, coupling_hidden_layers=2, coupling_hidden_dim=3, readout_hidden_dim=2, mu_learnable=True)


def trained_looking_checkpoint():
    rng = np.random.default_rng(17)
    f = PolyMLP.initialized(3, 4, 2, 3, rng)
    f.set_parameters({k: rng.normal(size=v.shape) for k, v in f.parameters().items()})
    model = LddmdModel(
        phi=AdditiveCouplingDiffeo(4, coefficients=rng.normal(scale=0.1, size=(2, 3)), modify_odd=False),
        f=f,
        g=ReadoutMLP.initialized(4, 2, 1, rng),
        K=BlockRotationDynamics(omegas=[0.031, 0.2], mus=[0.001, 0.0], mu_learnable=True),
        z0=rng.normal(size=4),
    )
    params = model.parameters()
    state = AdamState(
        m={k: rng.normal(size=v.shape) for k, v in params.items()},
        v={k: rng.uniform(size=v.shape) for k, v in params.items()},
        step=42,
    )
    return Checkpoint(
        model=model,
        train_config=CONFIG,
        adam_state=state,
        loss_history=[0.5, 0.25, 0.1 / 3],
        normalization_stats={"a": (1.5, 0.25), "b": (0.0, 2.0), "c": (-3.0, 1.0)},
        schema=CsvSchema(feature_columns=("a", "b", "c")),
        train_count=120,
        time_origin="2015-03-01",
    )


def test_round_trip_gives_identical_predictions(tmp_path):
    checkpoint = trained_looking_checkpoint()
    path = save_checkpoint(tmp_path / "model.ckpt", checkpoint)
    loaded = load_checkpoint(path)

    rng = np.random.default_rng(0)
    X = rng.normal(size=(50, 3))
    steps = np.arange(1000, 1050)
    np.testing.assert_array_equal(
        predict_series(loaded.model, steps, X), predict_series(checkpoint.model, steps, X)
    )


def test_round_trip_restores_training_state(tmp_path):
    checkpoint = trained_looking_checkpoint()
    loaded = load_checkpoint(save_checkpoint(tmp_path / "model.ckpt", checkpoint))

    assert loaded.train_config == CONFIG
    assert loaded.loss_history == checkpoint.loss_history
    assert loaded.normalization_stats == checkpoint.normalization_stats
    assert loaded.schema == checkpoint.schema
    assert loaded.train_count == 120
    assert loaded.time_origin == "2015-03-01"
    assert loaded.adam_state.step == 42
    for name, value in checkpoint.adam_state.v.items():
        np.testing.assert_array_equal(loaded.adam_state.v[name], value)
    assert loaded.model.phi.modify_odd is False
    assert loaded.model.K.mu_learnable


def test_saving_a_loaded_checkpoint_is_byte_identical():
    data = encode_checkpoint(trained_looking_checkpoint())
    assert encode_checkpoint(decode_checkpoint(data)) == data


def test_file_starts_with_magic_line(tmp_path):
    path = save_checkpoint(tmp_path / "model.ckpt", trained_looking_checkpoint())
    assert path.read_bytes().startswith(b"LDDMD-CHECKPOINT 1\n")
    assert not (tmp_path / "model.ckpt.partial").exists()


def test_ground_truth_model_round_trips():
    truth = ground_truth_model()
    config = TrainConfig(latent_dim=2, coupling_hidden_layers=1, coupling_hidden_dim=4, readout_hidden_dim=1)
    loaded = decode_checkpoint(encode_checkpoint(Checkpoint(model=truth, train_config=config)))

    assert loaded.model.phi.kind == "synthetic_psi2"
    assert loaded.adam_state is None
    X = np.column_stack([np.sin(np.arange(20.0)), np.cos(np.arange(20.0))])
    np.testing.assert_array_equal(
        predict_series(loaded.model, np.arange(20), X), predict_series(truth, np.arange(20), X)
    )


@pytest.mark.parametrize("cut", [10, 40, -8])
def test_truncated_file_is_corrupt(cut):
    data = encode_checkpoint(trained_looking_checkpoint())
    with pytest.raises(CheckpointCorruptError):
        decode_checkpoint(data[:cut])


def test_flipped_payload_byte_is_corrupt():
    data = bytearray(encode_checkpoint(trained_looking_checkpoint()))
    data[-5] ^= 0xFF
    with pytest.raises(CheckpointCorruptError):
        decode_checkpoint(bytes(data))


def test_foreign_file_is_corrupt():
    with pytest.raises(CheckpointCorruptError):
        decode_checkpoint(b"date,x,y\n2020-01-01,1,2\n")


def test_unsupported_version(tmp_path):
    data = encode_checkpoint(trained_looking_checkpoint())
    path = tmp_path / "future.ckpt"
    path.write_bytes(data.replace(b"LDDMD-CHECKPOINT 1", b"LDDMD-CHECKPOINT 2", 1))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nothing.ckpt")


def test_dimension_check():
    checkpoint = trained_looking_checkpoint()
    checkpoint.check_dimensions(3, 1)
    with pytest.raises(ShapeError):
        checkpoint.check_dimensions(2, 1)
