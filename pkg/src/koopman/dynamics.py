"""Block-diagonal damped-rotation dynamics and spectral frequency initialization."""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..engine.adcore import cos, current_tape, exp, sin, value_of
from ..errors import ConfigurationError, ShapeError, TapeStateError
from ..observability.logging import get_logger

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi

Vector = List[Any]


@dataclass
class BlockRotationDynamics:
    """
    The matrix K: 2x2 blocks exp(-mu_i dt) R(omega_i dt).

    Attributes:
        omegas: Angular frequencies per block (radians per time unit)
        mus: Decay rates per block (per time unit)
        dt: Observation interval
        mu_learnable: Whether the decays are trainable parameters
        prefix: Name prefix of the parameters
    """
    omegas: np.ndarray
    mus: Optional[np.ndarray] = None
    dt: float = 1.0
    mu_learnable: bool = False
    prefix: str = "K"
    _frozen_zero: bool = field(init=False, default=True, repr=False)

    def __post_init__(self) -> None:
        self.omegas = np.array(self.omegas, dtype=np.float64).reshape(-1)
        if self.mus is None:
            self.mus = np.zeros_like(self.omegas)
        self.mus = np.array(self.mus, dtype=np.float64).reshape(-1)

        if self.omegas.size == 0:
            raise ConfigurationError("dynamics need at least one rotation block")
        if self.mus.shape != self.omegas.shape:
            raise ConfigurationError(
                f"got {self.omegas.size} frequencies but {self.mus.size} decay rates"
            )
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigurationError(f"dt must be positive and finite, got {self.dt}")
        if not (np.all(np.isfinite(self.omegas)) and np.all(np.isfinite(self.mus))):
            raise ConfigurationError("frequencies and decay rates must be finite")
        self._frozen_zero = not self.mu_learnable and not np.any(self.mus)

    @property
    def dim(self) -> int:
        return 2 * self.omegas.size

    @property
    def n_blocks(self) -> int:
        return self.omegas.size

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {f"{self.prefix}.omega": self.omegas.copy()}
        if self.mu_learnable:
            params[f"{self.prefix}.mu"] = self.mus.copy()
        return params

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        self.omegas = np.array(params[f"{self.prefix}.omega"], dtype=np.float64)
        if self.mu_learnable:
            self.mus = np.array(params[f"{self.prefix}.mu"], dtype=np.float64)

    def _rates(self, params: Optional[Dict[str, Any]]):
        if params is None:
            return self.omegas, self.mus
        omegas = params.get(f"{self.prefix}.omega", self.omegas)
        mus = params.get(f"{self.prefix}.mu", self.mus) if self.mu_learnable else self.mus
        return omegas, mus

    def _rotate(self, steps: Any, v: Sequence[Any], params: Optional[Dict[str, Any]]) -> Vector:
        if len(v) != self.dim:
            raise ShapeError(f"expected a vector of length {self.dim}, got {len(v)}")

        omegas, mus = self._rates(params)
        elapsed = np.asarray(steps, dtype=np.float64) * self.dt
        out: Vector = []
        for i in range(self.n_blocks):
            omega = omegas[i]
            # subtract whole turns before trig; the subtracted term is a constant
            turns = np.floor(value_of(omega) * elapsed / TWO_PI)
            angle = omega * elapsed - TWO_PI * turns
            c, s = cos(angle), sin(angle)
            first, second = v[2 * i], v[2 * i + 1]
            rotated = [c * first - s * second, s * first + c * second]
            if not self._frozen_zero:
                scale = exp(-(mus[i] * elapsed))
                rotated = [scale * rotated[0], scale * rotated[1]]
            out.extend(rotated)
        return out

    def matrix(self, steps: int = 1) -> np.ndarray:
        """Dense K^steps, for inspection and orthogonality checks."""
        dense = np.zeros((self.dim, self.dim))
        for i in range(self.n_blocks):
            angle = self.omegas[i] * steps * self.dt
            scale = math.exp(-self.mus[i] * steps * self.dt)
            block = scale * np.array(
                [[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]
            )
            dense[2 * i:2 * i + 2, 2 * i:2 * i + 2] = block
        return dense


def _bound_parameters(K: BlockRotationDynamics) -> Dict[str, Any]:
    tape = current_tape()
    if tape is None:
        raise TapeStateError("differentiable evaluation needs an active tape")
    return tape.bind(K.parameters())


def apply(
    K: BlockRotationDynamics,
    v: Sequence[Any],
    differentiable: bool = False,
    params: Optional[Dict[str, Any]] = None
) -> Vector:
    """
    One step of the dynamics: rotate each 2-block by omega_i dt, scale by exp(-mu_i dt).

    Args:
        K: Dynamics
        v: Vector of length K.dim (numbers, batch arrays or nodes)
        differentiable: Bind K's parameters on the active tape first
        params: Explicit parameter values (e.g. leaves from Tape.bind)

    Returns:
        The rotated vector as a list of components
    """
    if differentiable and params is None:
        params = _bound_parameters(K)
    return K._rotate(1, v, params)


def apply_power(
    K: BlockRotationDynamics,
    j: Any,
    v: Sequence[Any],
    params: Optional[Dict[str, Any]] = None
) -> Vector:
    """
    K^j v in closed form (rotation angle j omega_i dt, decay exp(-j mu_i dt)).

    ``j`` may be a batch array of non-negative integers.
    """
    steps = np.asarray(j)
    if np.any(steps < 0):
        raise ConfigurationError("powers of K must be non-negative")
    return K._rotate(steps, v, params)


def spectral_init(target: Sequence[float], latent_dim: int, dt: float = 1.0) -> np.ndarray:
    """
    Angular frequencies of the largest nonzero-frequency DFT bins of a signal.

    The signal is mean-removed first; the DC bin and (for even length) the
    Nyquist bin are excluded. Bins are ordered by descending magnitude, ties
    going to the lower frequency.

    Args:
        target: 1-D target sequence
        latent_dim: Even latent dimension; latent_dim/2 frequencies are returned
        dt: Time between observations

    Returns:
        Array of latent_dim/2 angular frequencies 2 pi k / (N dt)

    Raises:
        ConfigurationError: odd latent_dim, too few usable bins, or no
            oscillatory energy in the signal
    """
    signal = np.asarray(target, dtype=np.float64).reshape(-1)
    n = signal.size

    if latent_dim < 2 or latent_dim % 2 != 0:
        raise ConfigurationError(f"latent_dim must be a positive even integer, got {latent_dim}")
    usable = (n - 1) // 2
    if latent_dim // 2 > usable:
        raise ConfigurationError(
            f"latent_dim={latent_dim} needs {latent_dim // 2} frequency bins, "
            f"a series of length {n} has {usable}"
        )
    if not np.all(np.isfinite(signal)):
        raise ConfigurationError("spectral initialization needs a finite signal")

    spectrum = np.abs(np.fft.rfft(signal - signal.mean()))
    candidates = np.arange(1, usable + 1)
    magnitudes = spectrum[candidates]

    tolerance = 1e-10 * n * max(1.0, float(np.max(np.abs(signal))))
    if not np.any(magnitudes > tolerance):
        raise ConfigurationError("signal has no nonzero-frequency energy to initialize from")

    # lexsort: last key is primary
    order = np.lexsort((candidates, -magnitudes))
    chosen = candidates[order[: latent_dim // 2]]
    omegas = TWO_PI * chosen / (n * dt)

    logger.debug(
        "Spectral initialization",
        extra={"bins": chosen.tolist(), "omegas": omegas.tolist(), "n": n}
    )
    return omegas
