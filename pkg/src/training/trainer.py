"""Model initialization and the Adam training loop."""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from ..data.dataset import TimeSeriesDataset
from ..engine.adcore import Tape
from ..errors import ConfigurationError, DomainError, NonFiniteValueError, TrainingAbortedError
from ..koopman.dynamics import BlockRotationDynamics, spectral_init
from ..koopman.maps import AdditiveCouplingDiffeo, PolyMLP, ReadoutMLP
from ..koopman.model import DdmdModel, LddmdModel, ddmd_loss, loss
from ..observability.logging import get_logger
from ..observability.tracing import TimedOperation, emit_event
from ..storage.models import TrainConfig, count_lddmd_parameters, validate_train_config
from .optimizer import AdamState, adam_step

logger = get_logger(__name__)

Arrays = Dict[str, np.ndarray]
Objective = Callable[..., Any]


class TrainingResult(NamedTuple):
    """Outcome of a completed run."""
    model: Any
    loss_history: List[float]
    adam_state: AdamState


def _check_config(config: TrainConfig) -> None:
    issues = validate_train_config(config)
    if issues:
        raise ConfigurationError("; ".join(issues))


def init_model(config: TrainConfig, dataset: TimeSeriesDataset, rng_seed: int) -> LddmdModel:
    """
    Build an LDDMD model whose prediction is constant before training.

    phi is the identity, f outputs exactly zero, z0 = 0 and mu = 0, so every
    prediction equals g(0). The frequencies come from the spectrum of the first
    target column; only g is random.

    Args:
        config: Training configuration (dimensions, mu mode)
        dataset: Training data
        rng_seed: Seed for the hidden weights of f and all of g

    Returns:
        Freshly initialized model
    """
    _check_config(config)
    if dataset.n_steps < 1:
        raise ConfigurationError("cannot initialize from an empty dataset")

    d_c = config.latent_dim
    omegas = spectral_init(dataset.Y[:, 0], d_c, dataset.dt)
    rng = np.random.Generator(np.random.Philox(key=rng_seed))

    model = LddmdModel(
        phi=AdditiveCouplingDiffeo(d_c, modify_odd=config.modify_odd),
        f=PolyMLP.initialized(
            dataset.input_dim, d_c, config.coupling_hidden_layers, config.coupling_hidden_dim, rng
        ),
        g=ReadoutMLP.initialized(d_c, config.readout_hidden_dim, dataset.output_dim, rng),
        K=BlockRotationDynamics(omegas=omegas, dt=dataset.dt, mu_learnable=config.mu_learnable),
        z0=np.zeros(d_c),
    )

    expected = count_lddmd_parameters(dataset.input_dim, dataset.output_dim, config)
    if model.parameter_count() != expected:
        raise ConfigurationError(
            f"model has {model.parameter_count()} parameters, configuration implies {expected}"
        )
    logger.info(
        "Initialized LDDMD model",
        extra={"parameters": expected, "omegas": omegas.tolist(), "seed": rng_seed}
    )
    return model


def init_ddmd_model(config: TrainConfig, dataset: TimeSeriesDataset) -> DdmdModel:
    """Identity psi and frequencies from the first input column; dimension d must be even."""
    _check_config(config)
    d = dataset.input_dim
    if d % 2 != 0:
        raise ConfigurationError(f"DDMD needs an even state dimension, got {d}")
    omegas = spectral_init(dataset.X[:, 0], d, dataset.dt)
    return DdmdModel(
        psi=AdditiveCouplingDiffeo(d, modify_odd=config.modify_odd, prefix="psi"),
        K=BlockRotationDynamics(omegas=omegas, dt=dataset.dt, mu_learnable=config.mu_learnable),
    )


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    """Shuffled row order for one epoch from a counter-based generator."""
    rng = np.random.Generator(np.random.Philox(key=(seed << 64) | epoch))
    return rng.permutation(n)


class Trainer:
    """
    Mini-batch Adam over shuffled time indices.

    With ``threads`` > 1 each batch is cut into contiguous chunks, every chunk is
    differentiated on its own tape in a worker thread, and losses and gradients
    are summed in chunk order, so results do not depend on the thread count
    beyond floating-point summation order, which is fixed.
    """

    def __init__(self, config: TrainConfig, threads: int = 1, objective: Objective = loss):
        _check_config(config)
        if threads < 1:
            raise ConfigurationError(f"threads must be at least 1, got {threads}")
        self.config = config
        self.threads = threads
        self.objective = objective

    def _chunk_loss(self, model: Any, dataset: TimeSeriesDataset, rows: np.ndarray) -> Tuple[float, Arrays]:
        with Tape() as tape:
            bound = tape.bind(model.parameters())
            value = self.objective(model, dataset, rows, bound, self.config.loss_mode)
            tape.backward(value)
            return float(value.value), tape.gradients(bound)

    def loss_and_gradients(
        self,
        model: Any,
        dataset: TimeSeriesDataset,
        rows: np.ndarray
    ) -> Tuple[float, Arrays]:
        """Batch loss and its gradient with respect to every model parameter."""
        chunks = [c for c in np.array_split(rows, min(self.threads, len(rows))) if len(c)]
        if len(chunks) == 1:
            results = [self._chunk_loss(model, dataset, chunks[0])]
        else:
            with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
                results = list(pool.map(lambda c: self._chunk_loss(model, dataset, c), chunks))

        value = 0.0
        grads: Arrays = {}
        for chunk_value, chunk_grads in results:
            value += chunk_value
            for name, g in chunk_grads.items():
                grads[name] = grads[name] + g if name in grads else g

        if not getattr(model.K, "mu_learnable", False):
            assert f"{model.K.prefix}.mu" not in grads, "frozen decay rates must not be updated"
        return value, grads

    def _abort(self, message: str, epoch: int, params: Arrays, history: List[float]) -> None:
        logger.error(message, extra={"epoch": epoch})
        emit_event("training_aborted", metadata={"epoch": epoch, "reason": message})
        raise TrainingAbortedError(
            message,
            epoch=epoch,
            last_good_parameters={k: v.copy() for k, v in params.items()},
            loss_history=history,
        )

    def fit(
        self,
        model: Any,
        dataset: TimeSeriesDataset,
        state: Optional[AdamState] = None
    ) -> TrainingResult:
        """
        Run ``config.epochs`` epochs of ceil(N / batch_size) Adam steps each.

        The input model is not modified; the trained copy is returned.

        Raises:
            TrainingAbortedError: non-finite loss, gradient or parameter; carries
                the parameters after the last good step
        """
        config = self.config
        work = model.copy()
        params = work.parameters()
        state = state or AdamState.zeros_like(params)
        n = dataset.n_steps
        batch_size = min(config.batch_size, n)
        history: List[float] = []
        log_every = max(1, config.epochs // 10)

        emit_event(
            "training_started",
            metadata={"epochs": config.epochs, "rows": n, "batch_size": batch_size, "threads": self.threads}
        )

        for epoch in range(config.epochs):
            with TimedOperation("epoch") as timer:
                order = epoch_permutation(config.seed, epoch, n)
                epoch_loss = 0.0
                for start in range(0, n, batch_size):
                    rows = order[start:start + batch_size]
                    try:
                        value, grads = self.loss_and_gradients(work, dataset, rows)
                    except (DomainError, NonFiniteValueError) as e:
                        self._abort(f"loss evaluation failed: {e}", epoch, params, history)
                    if not np.isfinite(value):
                        self._abort(f"non-finite loss {value}", epoch, params, history)
                    try:
                        new_params, state = adam_step(params, grads, state, config)
                    except NonFiniteValueError as e:
                        self._abort(str(e), epoch, params, history)
                    if not all(np.all(np.isfinite(p)) for p in new_params.values()):
                        self._abort("parameters became non-finite", epoch, params, history)
                    params = new_params
                    work.set_parameters(params)
                    epoch_loss += value

            history.append(epoch_loss / n)
            emit_event(
                "epoch_completed",
                metadata={"epoch": epoch, "mean_loss": history[-1]},
                duration_ms=timer.duration_ms,
            )
            if epoch % log_every == 0 or epoch == config.epochs - 1:
                logger.info(
                    f"Epoch {epoch + 1}/{config.epochs} mean loss {history[-1]:.6g}",
                    extra={"epoch": epoch, "mean_loss": history[-1], "step": state.step}
                )

        return TrainingResult(model=work, loss_history=history, adam_state=state)


def train(
    model: LddmdModel,
    dataset: TimeSeriesDataset,
    config: TrainConfig,
    threads: int = 1
) -> Tuple[LddmdModel, List[float]]:
    """Train an LDDMD model; returns the trained copy and the per-epoch mean losses."""
    result = Trainer(config, threads=threads).fit(model, dataset)
    return result.model, result.loss_history


def train_ddmd(
    model: DdmdModel,
    dataset: TimeSeriesDataset,
    config: TrainConfig,
    threads: int = 1
) -> Tuple[DdmdModel, List[float]]:
    """Fit psi and K to a state series with the closed-form rollout loss."""
    result = Trainer(config, threads=threads, objective=ddmd_loss).fit(model, dataset)
    return result.model, result.loss_history
