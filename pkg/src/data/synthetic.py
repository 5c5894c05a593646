"""
The synthetic latent-memory system and its noise model.

The input x evolves as a conjugated rotation, x^j = psi1^{-1}(K1 psi1(x^{j-1})),
and drives a latent z through the coupled map

    (u, v) = Phi(x, z) = (psi1(x), f(x) + psi2(z)),    (u, v)^j = (K1 u, K2 v)^{j-1}

with the target y = softplus(-z_1 - 3/4 z_2 + 3/2). The same x can therefore
appear with different y, which is the memory the latent model must learn.
"""

import math
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from ..engine.adcore import sin, softplus, square
from ..koopman.dynamics import BlockRotationDynamics, apply
from ..koopman.maps import PolyMLP, ReadoutMLP
from ..koopman.model import LddmdModel
from ..observability.logging import get_logger
from ..observability.tracing import TimedOperation
from ..storage.models import SyntheticConfig, validate_synthetic_config
from ..errors import ConfigurationError
from .dataset import TimeSeriesDataset

logger = get_logger(__name__)

Vector = List[Any]

OMEGA_X = math.pi / 100.0
OMEGA_Z = math.pi / (100.0 * math.sqrt(10.0))
INITIAL_U = (0.0, 1.0)
INITIAL_V = (1.0, 1.0)


class SyntheticPsi1:
    """psi1(x) = (2 (x_1 - sin x_2), x_2 / 4)."""

    kind = "synthetic_psi1"
    dim = 2

    def forward(self, x: Sequence[Any], params: Any = None) -> Vector:
        return [2.0 * (x[0] - sin(x[1])), x[1] / 4.0]

    def inverse(self, u: Sequence[Any], params: Any = None) -> Vector:
        second = 4.0 * u[1]
        return [u[0] / 2.0 + sin(second), second]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        pass

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim}


class SyntheticPsi2:
    """psi2(z) = (2 (z_1 - z_2^2 - 3), 3 z_2)."""

    kind = "synthetic_psi2"
    dim = 2

    def forward(self, z: Sequence[Any], params: Any = None) -> Vector:
        return [2.0 * (z[0] - square(z[1]) - 3.0), 3.0 * z[1]]

    def inverse(self, v: Sequence[Any], params: Any = None) -> Vector:
        second = v[1] / 3.0
        return [v[0] / 2.0 + square(second) + 3.0, second]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {}

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        pass

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim}


def coupling_truth(x: Sequence[Any]) -> Vector:
    """f(x) = (x_1^2 + x_2^2, x_1 - x_2)."""
    return [square(x[0]) + square(x[1]), x[0] - x[1]]


def readout_truth(z: Sequence[Any]) -> Vector:
    return [softplus(-z[0] - 0.75 * z[1] + 1.5)]


class FullLatentSystem:
    """
    The joint (x, z) system as one conjugated block rotation.

    Evolves step by step through Phi and its inverse, independent of the
    telescoped closed form the model uses.
    """

    def __init__(self, omega_x: float = OMEGA_X, omega_z: float = OMEGA_Z, dt: float = 1.0):
        self.psi1 = SyntheticPsi1()
        self.psi2 = SyntheticPsi2()
        self.K1 = BlockRotationDynamics(omegas=[omega_x], dt=dt, prefix="K1")
        self.K2 = BlockRotationDynamics(omegas=[omega_z], dt=dt, prefix="K2")

    def forward(self, x: Sequence[Any], z: Sequence[Any]) -> Tuple[Vector, Vector]:
        """Phi(x, z) = (psi1(x), f(x) + psi2(z))."""
        u = self.psi1.forward(x)
        v = [c + p for c, p in zip(coupling_truth(x), self.psi2.forward(z))]
        return u, v

    def inverse(self, u: Sequence[Any], v: Sequence[Any]) -> Tuple[Vector, Vector]:
        """Phi^{-1}(u, v) = (x, psi2^{-1}(v - f(x))) with x = psi1^{-1}(u)."""
        x = self.psi1.inverse(u)
        z = self.psi2.inverse([b - c for b, c in zip(v, coupling_truth(x))])
        return x, z

    def step(self, x: Sequence[Any], z: Sequence[Any]) -> Tuple[Vector, Vector]:
        u, v = self.forward(x, z)
        return self.inverse(apply(self.K1, u), apply(self.K2, v))

    def initial_state(self) -> Tuple[Vector, Vector]:
        return self.inverse(list(INITIAL_U), list(INITIAL_V))

    def evolve(self, n_steps: int) -> Tuple[np.ndarray, np.ndarray]:
        """(n_steps, 2) arrays of x and z starting at the initial state."""
        xs = np.empty((n_steps, 2))
        zs = np.empty((n_steps, 2))
        x, z = self.initial_state()
        for j in range(n_steps):
            if j:
                x, z = self.step(x, z)
            xs[j], zs[j] = x, z
        return xs, zs


def add_noise(
    dataset: TimeSeriesDataset,
    sigma_x: float,
    sigma_y: float,
    seed: int,
    relative: bool = False
) -> TimeSeriesDataset:
    """
    Add i.i.d. Gaussian noise to the targets and, optionally, the inputs.

    Args:
        dataset: Clean dataset
        sigma_x: Input noise standard deviation
        sigma_y: Target noise standard deviation
        seed: Seed of the counter-based generator; fixes the noise field
        relative: Interpret the sigmas as fractions of each column's std

    Returns:
        A new dataset; the input is not modified
    """
    if not (sigma_x >= 0 and sigma_y >= 0):
        raise ConfigurationError("noise levels must be non-negative")

    rng = np.random.Generator(np.random.Philox(key=seed))
    # targets first so the y noise does not depend on whether x is perturbed
    y_noise = rng.standard_normal(dataset.Y.shape)
    x_noise = rng.standard_normal(dataset.X.shape)

    y_scale = sigma_y * (dataset.Y.std(axis=0) if relative else 1.0)
    x_scale = sigma_x * (dataset.X.std(axis=0) if relative else 1.0)
    return TimeSeriesDataset(
        X=dataset.X + x_scale * x_noise,
        Y=dataset.Y + y_scale * y_noise,
        time_index=dataset.time_index,
        dt=dataset.dt,
        feature_names=dataset.feature_names,
        target_names=dataset.target_names,
        time_column=dataset.time_column,
        time_labels=dataset.time_labels,
        time_origin=dataset.time_origin,
    )


def generate_synthetic(
    config: SyntheticConfig = SyntheticConfig()
) -> Tuple[TimeSeriesDataset, TimeSeriesDataset, np.ndarray]:
    """
    Evolve the synthetic system and sample noisy observations.

    Returns:
        (clean dataset, noisy dataset, (N, 2) latent z series)

    Raises:
        ConfigurationError: invalid configuration (e.g. n_steps < 2)
    """
    issues = validate_synthetic_config(config)
    if issues:
        raise ConfigurationError("; ".join(issues))

    with TimedOperation("generate_synthetic"):
        system = FullLatentSystem()
        xs, zs = system.evolve(config.n_steps)
        ys = np.asarray(readout_truth([zs[:, 0], zs[:, 1]])[0]).reshape(-1, 1)

        clean = TimeSeriesDataset(
            X=xs,
            Y=ys,
            time_index=np.arange(config.n_steps),
            feature_names=("x_1", "x_2"),
            target_names=("y",),
        )
        noisy = add_noise(
            clean,
            config.noise_sigma_x,
            config.noise_sigma_y,
            config.seed,
            relative=config.noise_relative,
        )

    logger.info(
        f"Generated synthetic series of {config.n_steps} steps",
        extra={"seed": config.seed, "sigma_y": config.noise_sigma_y}
    )
    return clean, noisy, zs


def ground_truth_model() -> LddmdModel:
    """
    The synthetic system written as an LDDMD model.

    phi = psi2, K = K2 and z0 = f(x^0) + psi2(z^0) = (1, 1). The coupling is
    exactly a PolyMLP with one hidden layer of width 4 (two squares, two
    identities) and the readout a width-1 softplus layer.
    """
    f = PolyMLP(
        input_dim=2,
        output_dim=2,
        hidden_dims=(4,),
        params={
            "f.hidden0.weight": np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]),
            "f.hidden0.bias": np.zeros(4),
            "f.hidden0.poly": np.array(
                [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]
            ),
            "f.out.weight": np.array([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]]),
            "f.out.bias": np.zeros(2),
        },
    )
    g = ReadoutMLP(
        input_dim=2,
        hidden_dim=1,
        output_dim=1,
        params={
            "g.hidden.weight": np.array([[-1.0, -0.75]]),
            "g.hidden.bias": np.array([1.5]),
            "g.out.weight": np.array([[1.0]]),
            "g.out.bias": np.array([0.0]),
        },
    )
    K = BlockRotationDynamics(omegas=[OMEGA_Z], dt=1.0)
    return LddmdModel(phi=SyntheticPsi2(), f=f, g=g, K=K, z0=np.array(INITIAL_V))
