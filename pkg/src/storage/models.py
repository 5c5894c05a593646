"""Configuration records and report types for LDDMD runs."""

import math
from typing import Dict, List, Optional, Tuple, TypedDict, NamedTuple


LOSS_MODES = ("norm", "squared")
NAN_POLICIES = ("fail", "drop")


class TrainConfig(NamedTuple):
    """Hyperparameters of one LDDMD training run."""
    latent_dim: int = 2  # d_c, must be even
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    epsilon: float = 1e-8
    epochs: int = 1000
    seed: int = 0
    coupling_hidden_layers: int = 2  # l_f
    coupling_hidden_dim: int = 2  # d_f
    readout_hidden_dim: int = 4  # d_g
    loss_mode: str = "norm"  # "norm" or "squared"
    mu_learnable: bool = False
    clip_grad_norm: Optional[float] = None
    modify_odd: bool = True  # coupling layer shifts odd indices


class SyntheticConfig(NamedTuple):
    """Settings for the synthetic latent-memory system."""
    n_steps: int = 2000
    noise_sigma_y: float = 0.05
    noise_sigma_x: float = 0.0
    noise_relative: bool = True  # sigmas are fractions of the clean column std
    seed: int = 0


class CsvSchema(NamedTuple):
    """Column layout of a time-series CSV."""
    time_column: str = "j"
    feature_columns: Tuple[str, ...] = ("x_1", "x_2")
    target_column: str = "y"
    nan_policy: str = "fail"  # "fail" or "drop"


class DataConfig(NamedTuple):
    """How a dataset is read and split for a run."""
    schema: CsvSchema = CsvSchema()
    train_count: Optional[int] = 1000
    standardize: bool = False


class PathsConfig(NamedTuple):
    """Input and output locations, resolved against the config file directory."""
    output_dir: str = "."
    data: Optional[str] = None
    checkpoint: Optional[str] = None


class RunConfig(NamedTuple):
    """Everything a command needs, as read from one JSON config file."""
    seed: int = 0
    synthetic: SyntheticConfig = SyntheticConfig()
    train: TrainConfig = TrainConfig()
    data: DataConfig = DataConfig()
    paths: PathsConfig = PathsConfig()
    source: Optional[str] = None


class ResidualSummary(TypedDict):
    """Residual statistics for one split."""
    min: float
    mean: float
    max: float


class NseReport(TypedDict):
    """NSE per split, computed with global time indices."""
    nse_train: float
    nse_validation: Optional[float]
    n_train: int
    n_validation: int
    residual_summary: Dict[str, ResidualSummary]
    nse_per_target: Dict[str, List[float]]


class InspectReport(TypedDict):
    """Learned dynamics parameters and size summary of a model."""
    omegas: List[float]
    periods: List[Optional[float]]
    mus: List[float]
    mu_frozen: bool
    dt: float
    z0: List[float]
    parameter_counts: Dict[str, int]
    total_parameters: int
    parameter_norms: Dict[str, float]


def validate_train_config(config: TrainConfig) -> List[str]:
    """
    Collect problems with a training configuration.

    Args:
        config: Training configuration

    Returns:
        List of human readable issues, empty when valid
    """
    issues = []

    if config.latent_dim < 2 or config.latent_dim % 2 != 0:
        issues.append(f"latent_dim must be a positive even integer, got {config.latent_dim}")
    if config.batch_size < 1:
        issues.append(f"batch_size must be at least 1, got {config.batch_size}")
    if not config.learning_rate > 0:
        issues.append(f"learning_rate must be positive, got {config.learning_rate}")
    if not (0.0 <= config.beta1 < 1.0 and 0.0 <= config.beta2 < 1.0):
        issues.append("beta1 and beta2 must lie in [0, 1)")
    if not config.epsilon > 0:
        issues.append("epsilon must be positive")
    if config.epochs < 0:
        issues.append("epochs must be non-negative")
    if config.seed < 0:
        issues.append("seed must be non-negative")
    if config.coupling_hidden_layers < 1 or config.coupling_hidden_dim < 1:
        issues.append("coupling network needs at least one hidden layer of width >= 1")
    if config.readout_hidden_dim < 1:
        issues.append("readout_hidden_dim must be at least 1")
    if config.loss_mode not in LOSS_MODES:
        issues.append(f"loss_mode must be one of {LOSS_MODES}, got {config.loss_mode!r}")
    if config.clip_grad_norm is not None and not config.clip_grad_norm > 0:
        issues.append("clip_grad_norm must be positive when set")

    return issues


def validate_synthetic_config(config: SyntheticConfig) -> List[str]:
    """Collect problems with a synthetic data configuration."""
    issues = []

    if config.n_steps < 2:
        issues.append(f"n_steps must be at least 2, got {config.n_steps}")
    for name in ("noise_sigma_y", "noise_sigma_x"):
        value = getattr(config, name)
        if not (math.isfinite(value) and value >= 0):
            issues.append(f"{name} must be finite and non-negative, got {value}")
    if config.seed < 0:
        issues.append("seed must be non-negative")

    return issues


def validate_data_config(config: DataConfig) -> List[str]:
    """Collect problems with a data configuration."""
    issues = []

    schema = config.schema
    if not schema.feature_columns:
        issues.append("schema needs at least one feature column")
    if schema.nan_policy not in NAN_POLICIES:
        issues.append(f"nan_policy must be one of {NAN_POLICIES}, got {schema.nan_policy!r}")
    columns = [schema.time_column, *schema.feature_columns, schema.target_column]
    if len(set(columns)) != len(columns):
        issues.append("schema columns must be distinct")
    if config.train_count is not None and config.train_count < 1:
        issues.append("train_count must be at least 1")

    return issues


def count_lddmd_parameters(
    input_dim: int,
    output_dim: int,
    config: TrainConfig
) -> int:
    """
    Closed-form number of learnable LDDMD parameters for a configuration.

    phi: 3 per coupled index (d_c/2 of them); f: per hidden layer
    width * (fan_in + 1 + 3) plus the linear output layer; g: one hidden
    layer plus linear output; K: d_c/2 frequencies (and d_c/2 decays when
    learnable); z0: d_c.
    """
    d_c = config.latent_dim
    d_f = config.coupling_hidden_dim
    d_g = config.readout_hidden_dim

    phi = 3 * (d_c // 2)
    f = d_f * (input_dim + 4)
    f += (config.coupling_hidden_layers - 1) * d_f * (d_f + 4)
    f += d_c * (d_f + 1)
    g = d_g * (d_c + 1) + output_dim * (d_g + 1)
    dynamics = (d_c // 2) * (2 if config.mu_learnable else 1)
    return phi + f + g + dynamics + d_c
