"""Adam over named parameter arrays."""

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from ..errors import NonFiniteValueError, ShapeError
from ..storage.models import TrainConfig

Arrays = Dict[str, np.ndarray]


@dataclass
class AdamState:
    """First and second moment accumulators per parameter, and the step count."""
    m: Arrays = field(default_factory=dict)
    v: Arrays = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Arrays) -> "AdamState":
        return cls(
            m={k: np.zeros_like(np.asarray(p, dtype=np.float64)) for k, p in params.items()},
            v={k: np.zeros_like(np.asarray(p, dtype=np.float64)) for k, p in params.items()},
            step=0,
        )


def global_norm(grads: Arrays) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in grads.values())))


def clip_gradients(grads: Arrays, max_norm: Optional[float]) -> Arrays:
    """Rescale all gradients together so their joint L2 norm is at most ``max_norm``."""
    if max_norm is None:
        return grads
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


def adam_step(
    params: Arrays,
    grads: Arrays,
    state: AdamState,
    config: TrainConfig
) -> Tuple[Arrays, AdamState]:
    """
    One bias-corrected Adam update.

    Args:
        params: Current parameters
        grads: Gradients with the same names and shapes
        state: Moments and step count from the previous update
        config: Supplies learning_rate, beta1, beta2, epsilon, clip_grad_norm

    Returns:
        (new parameters, new state); the inputs are left untouched

    Raises:
        ShapeError: gradients do not line up with the parameters
        NonFiniteValueError: a gradient entry is NaN or infinite
    """
    if set(grads) != set(params):
        raise ShapeError(
            f"gradients for {sorted(set(grads) ^ set(params))} do not match the parameters"
        )
    for name, g in grads.items():
        if np.shape(g) != np.shape(params[name]):
            raise ShapeError(f"gradient {name} has shape {np.shape(g)}, expected {np.shape(params[name])}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteValueError(f"non-finite gradient for {name}")

    grads = clip_gradients(grads, config.clip_grad_norm)

    step = state.step + 1
    bias1 = 1.0 - config.beta1 ** step
    bias2 = 1.0 - config.beta2 ** step

    new_params: Arrays = {}
    new_m: Arrays = {}
    new_v: Arrays = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        m = config.beta1 * state.m.get(name, np.zeros_like(g)) + (1.0 - config.beta1) * g
        v = config.beta2 * state.v.get(name, np.zeros_like(g)) + (1.0 - config.beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        new_params[name] = np.asarray(p, dtype=np.float64) - config.learning_rate * m_hat / (
            np.sqrt(v_hat) + config.epsilon
        )
        new_m[name] = m
        new_v[name] = v

    return new_params, AdamState(m=new_m, v=new_v, step=step)
