"""LDDMD and DDMD models, prediction maps and training losses.

LDDMD predicts y^j = g(phi^{-1}(K^j z0 - f(x^j))). Because the latent
recursion telescopes, a prediction needs only (j, x^j): batches are sets of
independent time indices and nothing is unrolled during training.
"""

import copy
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from ..engine.adcore import sqrt, square, total
from ..errors import ConfigurationError, ShapeError
from ..storage.models import LOSS_MODES
from .dynamics import BlockRotationDynamics, apply, apply_power
from .maps import Diffeomorphism, PolyMLP, ReadoutMLP

Vector = List[Any]
Params = Optional[Dict[str, Any]]


class _ParametricModel:
    """Shared parameter bookkeeping over named components."""

    def _components(self) -> List[Any]:
        raise NotImplementedError

    def _own_parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def parameters(self) -> Dict[str, np.ndarray]:
        """All learnable parameters, in a fixed order."""
        params: Dict[str, np.ndarray] = {}
        for component in self._components():
            params.update(component.parameters())
        params.update(self._own_parameters())
        return params

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        for component in self._components():
            component.set_parameters(params)
        self._set_own_parameters(params)

    def _set_own_parameters(self, params: Dict[str, np.ndarray]) -> None:
        pass

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.parameters().values()))

    def copy(self) -> "_ParametricModel":
        return copy.deepcopy(self)


class LddmdModel(_ParametricModel):
    """
    Bundle (phi, f, g, K, z0) of the latent prediction map.

    Attributes:
        phi: Diffeomorphism of the latent space (dimension d_c)
        f: Coupling network R^d -> R^d_c
        g: Readout R^d_c -> R^m
        K: Block-rotation dynamics of dimension d_c
        z0: Telescoped latent initialization (length d_c)
    """

    def __init__(
        self,
        phi: Diffeomorphism,
        f: PolyMLP,
        g: ReadoutMLP,
        K: BlockRotationDynamics,
        z0: Optional[Sequence[float]] = None
    ):
        latent_dim = K.dim
        if latent_dim < 2 or latent_dim % 2 != 0:
            raise ConfigurationError(f"latent dimension must be even and positive, got {latent_dim}")
        if phi.dim != latent_dim or f.output_dim != latent_dim or g.input_dim != latent_dim:
            raise ShapeError(
                f"inconsistent latent dimensions: phi={phi.dim}, f out={f.output_dim}, "
                f"g in={g.input_dim}, K={latent_dim}"
            )
        if g.output_dim < 1:
            raise ConfigurationError("output dimension must be positive")

        self.phi = phi
        self.f = f
        self.g = g
        self.K = K
        self.z0 = np.zeros(latent_dim) if z0 is None else np.array(z0, dtype=np.float64)
        if self.z0.shape != (latent_dim,):
            raise ShapeError(f"z0 must have length {latent_dim}, got shape {self.z0.shape}")

    @property
    def input_dim(self) -> int:
        return self.f.input_dim

    @property
    def latent_dim(self) -> int:
        return self.K.dim

    @property
    def output_dim(self) -> int:
        return self.g.output_dim

    def _components(self) -> List[Any]:
        return [self.phi, self.f, self.g, self.K]

    def _own_parameters(self) -> Dict[str, np.ndarray]:
        return {"z0": self.z0.copy()}

    def _set_own_parameters(self, params: Dict[str, np.ndarray]) -> None:
        self.z0 = np.array(params["z0"], dtype=np.float64)

    def parameter_groups(self) -> Dict[str, List[str]]:
        """Parameter names per component: phi, f, g, K, z0."""
        return {
            "phi": list(self.phi.parameters()),
            "f": list(self.f.parameters()),
            "g": list(self.g.parameters()),
            "K": list(self.K.parameters()),
            "z0": ["z0"],
        }

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": "lddmd",
            "phi": self.phi.describe(),
            "f": self.f.describe(),
            "g": self.g.describe(),
            "K": {
                "n_blocks": self.K.n_blocks,
                "dt": self.K.dt,
                "mu_learnable": self.K.mu_learnable,
                "mus": self.K.mus.tolist(),
            },
        }


class DdmdModel(_ParametricModel):
    """Conjugated rotation x^j = psi^{-1}(K psi(x^{j-1}))."""

    def __init__(self, psi: Diffeomorphism, K: BlockRotationDynamics):
        if psi.dim != K.dim:
            raise ShapeError(f"psi has dimension {psi.dim} but K has {K.dim}")
        self.psi = psi
        self.K = K

    @property
    def dim(self) -> int:
        return self.K.dim

    def _components(self) -> List[Any]:
        return [self.psi, self.K]


def _as_vector(x: Any, length: int, what: str) -> Vector:
    if isinstance(x, np.ndarray) and x.dtype != object:
        components = list(x) if x.ndim >= 1 else [x]
    else:
        components = list(x)
    if len(components) != length:
        raise ShapeError(f"{what} must have length {length}, got {len(components)}")
    return components


def columns(matrix: np.ndarray) -> Vector:
    """Component list of an (N, d) matrix: one batch array per column."""
    matrix = np.asarray(matrix, dtype=np.float64)
    return [matrix[:, k] for k in range(matrix.shape[1])]


def latent_state(model: LddmdModel, j: Any, x_j: Any, params: Params = None) -> Vector:
    """
    Telescoped latent state phi^{-1}(K^j z0 - f(x^j)).

    Args:
        model: LDDMD model
        j: Absolute time index, or batch array of indices
        x_j: Input vector of length d (components may be batch arrays)
        params: Optional parameter override (e.g. tape leaves)

    Returns:
        Latent vector of length d_c, O(1) in j
    """
    x = _as_vector(x_j, model.input_dim, "x_j")
    z0 = model.z0 if params is None else params.get("z0", model.z0)
    driven = apply_power(model.K, j, list(z0), params)
    coupled = model.f.forward(x, params)
    shifted = [d - c for d, c in zip(driven, coupled)]
    return model.phi.inverse(shifted, params)


def predict(model: LddmdModel, j: Any, x_j: Any, params: Params = None) -> Vector:
    """g applied to the telescoped latent state; length m."""
    return model.g.forward(latent_state(model, j, x_j, params), params)


def predict_series(model: LddmdModel, time_index: np.ndarray, X: np.ndarray) -> np.ndarray:
    """
    Numeric predictions for a whole series.

    Args:
        model: LDDMD model
        time_index: (N,) absolute time indices
        X: (N, d) inputs

    Returns:
        (N, m) predictions
    """
    outputs = predict(model, np.asarray(time_index), columns(X))
    return np.column_stack([np.broadcast_to(o, (len(time_index),)) for o in outputs])


def latent_series(model: LddmdModel, time_index: np.ndarray, X: np.ndarray) -> np.ndarray:
    """(N, d_c) telescoped latent states for a whole series."""
    states = latent_state(model, np.asarray(time_index), columns(X))
    return np.column_stack([np.broadcast_to(s, (len(time_index),)) for s in states])


def _residual_loss(targets: Vector, predictions: Vector, mode: str) -> Any:
    if mode not in LOSS_MODES:
        raise ConfigurationError(f"loss mode must be one of {LOSS_MODES}, got {mode!r}")
    squared = None
    for target, prediction in zip(targets, predictions):
        term = square(target - prediction)
        squared = term if squared is None else squared + term
    per_sample = sqrt(squared) if mode == "norm" else squared
    return total(per_sample)


def _check_indices(indices: Any, n: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64).reshape(-1)
    if indices.size == 0:
        raise ConfigurationError("loss needs a non-empty batch")
    if indices.min() < 0 or indices.max() >= n:
        raise ConfigurationError(f"batch indices must lie in [0, {n})")
    return indices


def loss(
    model: LddmdModel,
    dataset: Any,
    indices: Any,
    params: Params = None,
    mode: str = "norm"
) -> Any:
    """
    Sum over the batch of ||y^j - predict(j, x^j)||_2 (or its square).

    ``indices`` are row positions in the dataset; the model sees the rows'
    absolute time indices. With bound tape leaves in ``params`` the result is
    a scalar DiffNode, otherwise a plain number.
    """
    rows = _check_indices(indices, dataset.n_steps)
    x = columns(dataset.X[rows])
    y = columns(dataset.Y[rows])
    predictions = predict(model, dataset.time_index[rows], x, params)
    return _residual_loss(y, predictions, mode)


def ddmd_step(model: DdmdModel, x_prev: Any, params: Params = None) -> Vector:
    """psi^{-1}(K psi(x_prev))."""
    x = _as_vector(x_prev, model.dim, "x_prev")
    return model.psi.inverse(apply(model.K, model.psi.forward(x, params), params=params), params)


def ddmd_rollout(model: DdmdModel, x0: Any, j: Any, params: Params = None) -> Vector:
    """psi^{-1}(K^j psi(x0)), the j-fold step in closed form."""
    x = _as_vector(x0, model.dim, "x0")
    return model.psi.inverse(apply_power(model.K, j, model.psi.forward(x, params), params), params)


def ddmd_loss(
    model: DdmdModel,
    dataset: Any,
    indices: Any,
    params: Params = None,
    mode: str = "norm"
) -> Any:
    """
    Rollout loss sum_j ||x^j - psi^{-1}(K^(j - j0) psi(x^{j0}))|| for a state series.

    The first row of the dataset is the initial state; targets are the
    dataset's inputs themselves.
    """
    rows = _check_indices(indices, dataset.n_steps)
    steps = dataset.time_index[rows] - dataset.time_index[0]
    x0 = list(dataset.X[0])
    predictions = ddmd_rollout(model, x0, steps, params)
    return _residual_loss(columns(dataset.X[rows]), predictions, mode)


def z0_from_initial_state(model: LddmdModel, x0: Sequence[float], z0_raw: Sequence[float]) -> np.ndarray:
    """The telescoped initialization f(x^0) + phi(z^0)."""
    coupled = model.f.forward(_as_vector(np.asarray(x0, dtype=np.float64), model.input_dim, "x0"))
    mapped = model.phi.forward(_as_vector(np.asarray(z0_raw, dtype=np.float64), model.latent_dim, "z0"))
    return np.array([float(c + m) for c, m in zip(coupled, mapped)])


def latent_recursive(model: LddmdModel, dataset: Any, z0_raw: Sequence[float]) -> np.ndarray:
    """
    Step-by-step latent evolution z^j = phi^{-1}(K(f(x^{j-1}) + phi(z^{j-1})) - f(x^j)).

    Starts from ``z0_raw`` at the dataset's first row. It agrees with
    :func:`latent_state` when model.z0 = f(x^0) + phi(z^0) and the dataset
    starts at time index 0. Diagnostics only.

    Returns:
        (N, d_c) latent states
    """
    if dataset.n_steps < 1:
        raise ConfigurationError("latent recursion needs a non-empty dataset")
    z = _as_vector(np.asarray(z0_raw, dtype=np.float64), model.latent_dim, "z0_raw")
    states = [np.array(z, dtype=np.float64)]
    x_prev = list(dataset.X[0])
    for row in range(1, dataset.n_steps):
        x_now = list(dataset.X[row])
        pushed = [c + m for c, m in zip(model.f.forward(x_prev), model.phi.forward(z))]
        evolved = apply(model.K, pushed)
        z = model.phi.inverse([e - c for e, c in zip(evolved, model.f.forward(x_now))])
        states.append(np.array(z, dtype=np.float64))
        x_prev = x_now
    return np.vstack(states)


def flatten_parameters(params: Dict[str, np.ndarray]) -> np.ndarray:
    """Concatenate named parameter arrays in their dictionary order."""
    return np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in params.values()])


def unflatten_parameters(template: Dict[str, np.ndarray], vector: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Split a flat vector back into arrays shaped like ``template``.

    Works for float vectors and for object vectors of tape leaves.
    """
    params: Dict[str, np.ndarray] = {}
    offset = 0
    for name, array in template.items():
        size = int(np.asarray(array).size)
        params[name] = np.asarray(vector[offset:offset + size]).reshape(np.shape(array))
        offset += size
    if offset != len(vector):
        raise ShapeError(f"expected {offset} parameters, got {len(vector)}")
    return params


def loss_function(
    model: Any,
    dataset: Any,
    indices: Any,
    mode: str = "norm",
    objective: Callable[..., Any] = loss
) -> Callable[[np.ndarray], Any]:
    """
    The loss as a function of the flat parameter vector, for check_gradient.

    Args:
        model: LDDMD (or DDMD with objective=ddmd_loss) model
        dataset: Dataset the loss is evaluated on
        indices: Batch rows
        mode: "norm" or "squared"
        objective: Loss function taking (model, dataset, indices, params, mode)
    """
    template = model.parameters()

    def evaluate(vector: np.ndarray) -> Any:
        return objective(model, dataset, indices, unflatten_parameters(template, vector), mode)

    return evaluate
