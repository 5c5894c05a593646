"""
Versioned checkpoint files.

Layout, all in one file:

    LDDMD-CHECKPOINT 1\\n
    {one-line JSON header, keys sorted}\\n
    payload: little-endian float64 arrays back to back

The header lists every array with its shape and offset (in float64 units),
the architecture, the training configuration, loss history, data
normalization and the SHA-256 of the payload. Saving a loaded checkpoint
reproduces the file byte for byte.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from ..config import schema_from_dict, schema_to_dict, train_config_from_dict, train_config_to_dict
from ..data.synthetic import SyntheticPsi1, SyntheticPsi2
from ..errors import (
    CheckpointCorruptError, CheckpointError, CheckpointVersionError, ConfigurationError, ShapeError
)
from ..koopman.dynamics import BlockRotationDynamics
from ..koopman.maps import AdditiveCouplingDiffeo, PolyMLP, ReadoutMLP
from ..koopman.model import LddmdModel
from ..observability.logging import get_logger
from ..observability.tracing import TimedOperation, emit_event
from ..storage.models import CsvSchema, TrainConfig
from .optimizer import AdamState

logger = get_logger(__name__)

MAGIC = "LDDMD-CHECKPOINT"
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f8")

_DIFFEOMORPHISMS: Dict[str, Callable[[Dict[str, Any]], Any]] = {
    "additive_coupling": lambda spec: AdditiveCouplingDiffeo(
        spec["dim"], modify_odd=spec["modify_odd"]
    ),
    "synthetic_psi1": lambda spec: SyntheticPsi1(),
    "synthetic_psi2": lambda spec: SyntheticPsi2(),
}


@dataclass
class Checkpoint:
    """A trained (or freshly initialized) model with everything needed to resume or evaluate it."""
    model: LddmdModel
    train_config: TrainConfig
    adam_state: Optional[AdamState] = None
    loss_history: List[float] = field(default_factory=list)
    normalization_stats: Optional[Dict[str, Tuple[float, float]]] = None
    schema: Optional[CsvSchema] = None
    train_count: Optional[int] = None
    time_origin: Optional[str] = None

    def check_dimensions(self, input_dim: int, output_dim: int) -> None:
        """Raise ShapeError when the model does not fit data of the given widths."""
        if self.model.input_dim != input_dim or self.model.output_dim != output_dim:
            raise ShapeError(
                f"checkpoint expects {self.model.input_dim} inputs and {self.model.output_dim} "
                f"targets, data has {input_dim} and {output_dim}"
            )


def _arrays(checkpoint: Checkpoint) -> List[Tuple[str, np.ndarray]]:
    arrays = [(f"param:{k}", v) for k, v in checkpoint.model.parameters().items()]
    if checkpoint.adam_state is not None:
        arrays += [(f"adam.m:{k}", v) for k, v in checkpoint.adam_state.m.items()]
        arrays += [(f"adam.v:{k}", v) for k, v in checkpoint.adam_state.v.items()]
    return arrays


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    """Serialize a checkpoint to bytes."""
    table = []
    chunks = []
    offset = 0
    for name, array in _arrays(checkpoint):
        array = np.asarray(array, dtype=np.float64)
        table.append({"name": name, "shape": list(array.shape), "offset": offset})
        chunks.append(array.astype(PAYLOAD_DTYPE).tobytes(order="C"))
        offset += array.size
    payload = b"".join(chunks)

    stats = checkpoint.normalization_stats
    header = {
        "architecture": checkpoint.model.describe(),
        "arrays": table,
        "adam_step": None if checkpoint.adam_state is None else checkpoint.adam_state.step,
        "train_config": train_config_to_dict(checkpoint.train_config),
        "loss_history": [float(v) for v in checkpoint.loss_history],
        "normalization_stats": None if stats is None else {k: list(v) for k, v in stats.items()},
        "schema": None if checkpoint.schema is None else schema_to_dict(checkpoint.schema),
        "train_count": checkpoint.train_count,
        "time_origin": checkpoint.time_origin,
        "payload_floats": offset,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_line = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return f"{MAGIC} {FORMAT_VERSION}\n{header_line}\n".encode("ascii") + payload


def _split_file(data: bytes) -> Tuple[Dict[str, Any], bytes]:
    first = data.find(b"\n")
    if first < 0:
        raise CheckpointCorruptError("missing checkpoint header")
    magic_line = data[:first].decode("ascii", errors="replace").split(" ")
    if len(magic_line) != 2 or magic_line[0] != MAGIC:
        raise CheckpointCorruptError("not an LDDMD checkpoint")
    try:
        version = int(magic_line[1])
    except ValueError as e:
        raise CheckpointCorruptError(f"unreadable format version {magic_line[1]!r}") from e
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})"
        )

    second = data.find(b"\n", first + 1)
    if second < 0:
        raise CheckpointCorruptError("truncated checkpoint header")
    try:
        header = json.loads(data[first + 1:second].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptError(f"unreadable checkpoint header: {e}") from e
    return header, data[second + 1:]


def _rebuild_model(architecture: Dict[str, Any], params: Dict[str, np.ndarray]) -> LddmdModel:
    phi_spec = architecture["phi"]
    if phi_spec["kind"] not in _DIFFEOMORPHISMS:
        raise CheckpointError(f"unknown diffeomorphism kind {phi_spec['kind']!r}")
    phi = _DIFFEOMORPHISMS[phi_spec["kind"]](phi_spec)
    phi.set_parameters(params)

    f_spec = architecture["f"]
    f = PolyMLP(
        input_dim=f_spec["input_dim"],
        output_dim=f_spec["output_dim"],
        hidden_dims=tuple(f_spec["hidden_dims"]),
        params={k: v for k, v in params.items() if k.startswith("f.")},
    )
    g_spec = architecture["g"]
    g = ReadoutMLP(
        input_dim=g_spec["input_dim"],
        hidden_dim=g_spec["hidden_dim"],
        output_dim=g_spec["output_dim"],
        params={k: v for k, v in params.items() if k.startswith("g.")},
    )
    k_spec = architecture["K"]
    K = BlockRotationDynamics(
        omegas=params["K.omega"],
        mus=params["K.mu"] if k_spec["mu_learnable"] else k_spec["mus"],
        dt=k_spec["dt"],
        mu_learnable=k_spec["mu_learnable"],
    )
    return LddmdModel(phi=phi, f=f, g=g, K=K, z0=params["z0"])


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Parse checkpoint bytes; raises CheckpointError subclasses on any defect."""
    header, payload = _split_file(data)
    try:
        n_floats = int(header["payload_floats"])
        if len(payload) != n_floats * PAYLOAD_DTYPE.itemsize:
            raise CheckpointCorruptError(
                f"payload has {len(payload)} bytes, header announces {n_floats} floats"
            )
        if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
            raise CheckpointCorruptError("payload digest mismatch")

        flat = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).astype(np.float64)
        params: Dict[str, np.ndarray] = {}
        adam_m: Dict[str, np.ndarray] = {}
        adam_v: Dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            size = int(np.prod(shape, dtype=np.int64))
            array = flat[entry["offset"]:entry["offset"] + size].reshape(shape).copy()
            kind, name = entry["name"].split(":", 1)
            {"param": params, "adam.m": adam_m, "adam.v": adam_v}[kind][name] = array

        model = _rebuild_model(header["architecture"], params)
        adam_state = None
        if header["adam_step"] is not None:
            adam_state = AdamState(m=adam_m, v=adam_v, step=int(header["adam_step"]))
        stats = header["normalization_stats"]
        return Checkpoint(
            model=model,
            train_config=train_config_from_dict(header["train_config"]),
            adam_state=adam_state,
            loss_history=list(header["loss_history"]),
            normalization_stats=None if stats is None else {k: tuple(v) for k, v in stats.items()},
            schema=None if header["schema"] is None else schema_from_dict(header["schema"]),
            train_count=header["train_count"],
            time_origin=header.get("time_origin"),
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, ConfigurationError) as e:
        raise CheckpointCorruptError(f"inconsistent checkpoint contents: {e}") from e


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    """Write a checkpoint; the file appears complete or not at all."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_checkpoint(checkpoint)
    with TimedOperation("save_checkpoint"):
        partial = path.with_name(path.name + ".partial")
        partial.write_bytes(data)
        partial.replace(path)
    emit_event(
        "checkpoint_saved",
        metadata={"path": str(path), "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()}
    )
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint file.

    Raises:
        CheckpointError: missing file
        CheckpointCorruptError: truncated or damaged file
        CheckpointVersionError: unsupported format version
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    checkpoint = decode_checkpoint(path.read_bytes())
    logger.debug("Loaded checkpoint", extra={"path": str(path)})
    return checkpoint
