"""
Command-line entry points: generate, train, eval, inspect, truth.

Every command returns a result dictionary; ``main`` turns it into an exit
code: 0 on success, 2 for input or configuration problems, 3 when training
aborted on a non-finite value.
"""

import argparse
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .config import Config, load_run_config, validate_environment
from .data.dataset import (
    CSV_FLOAT_FORMAT, apply_standardization, load_csv, split, standardize, write_csv
)
from .data.synthetic import generate_synthetic, ground_truth_model
from .errors import ConfigurationError, LddmdError, NonFiniteValueError, TrainingAbortedError
from .evaluation.exports import (
    export_latent, export_latent_series, export_predictions, format_inspect_report, inspect,
    write_inspect_json
)
from .evaluation.metrics import evaluate, format_nse_report
from .observability.logging import get_logger, log_function_call, set_level
from .storage.models import CsvSchema, RunConfig, TrainConfig
from .training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .training.trainer import Trainer, init_model

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (TrainingAbortedError.__name__, NonFiniteValueError.__name__)


def _failure(error: Exception, **extra: Any) -> Dict[str, Any]:
    logger.error(f"{type(error).__name__}: {error}")
    return {"success": False, "error": str(error), "error_type": type(error).__name__, **extra}


def _output_dir(run: Optional[RunConfig], override: Optional[str]) -> Path:
    if override:
        return Path(override)
    if run is not None:
        return Path(run.paths.output_dir)
    return Path(Config.DATA_DIR)


def cmd_generate(config_path: str, out_dir: Optional[str] = None) -> Dict[str, Any]:
    """Write clean.csv, noisy.csv and latent_truth.csv for the synthetic system."""
    try:
        run = load_run_config(config_path)
        target = _output_dir(run, out_dir)
        clean, noisy, latent = generate_synthetic(run.synthetic)
        files = [
            write_csv(clean, target / "clean.csv"),
            write_csv(noisy, target / "noisy.csv"),
            export_latent_series(clean.time_index, latent, target / "latent_truth.csv"),
        ]
        return {"success": True, "files": [str(f) for f in files], "rows": noisy.n_steps}
    except (LddmdError, OSError) as e:
        return _failure(e)


def _write_loss_history(history: List[float], path: Path) -> Path:
    frame = pd.DataFrame({"epoch": range(1, len(history) + 1), "mean_loss": history})
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def _prepare_data(run: RunConfig, data_path: Optional[str]):
    path = data_path or run.paths.data
    if path is None:
        raise ConfigurationError("no data file given (set paths.data or pass --data)")
    dataset = load_csv(path, run.data.schema)

    train_count = run.data.train_count
    if train_count is not None and train_count >= dataset.n_steps:
        train_count = None
    if train_count is None:
        train_set, validation_set = dataset, None
    else:
        train_set, validation_set = split(dataset, train_count)

    stats = None
    if run.data.standardize:
        train_set, stats = standardize(train_set)
        if validation_set is not None:
            validation_set = apply_standardization(validation_set, stats)
    return train_set, validation_set, stats, train_count


def cmd_train(
    config_path: str,
    data_path: Optional[str] = None,
    out_dir: Optional[str] = None,
    threads: Optional[int] = None
) -> Dict[str, Any]:
    """Train per config; writes model.ckpt and loss_history.csv and reports train NSE."""
    try:
        run = load_run_config(config_path)
        target = _output_dir(run, out_dir)
        target.mkdir(parents=True, exist_ok=True)
        train_set, validation_set, stats, train_count = _prepare_data(run, data_path)

        model = init_model(run.train, train_set, run.train.seed)
        trainer = Trainer(run.train, threads=threads or Config.THREADS)
        checkpoint = Checkpoint(
            model=model,
            train_config=run.train,
            normalization_stats=stats,
            schema=run.data.schema,
            train_count=train_count,
            time_origin=train_set.time_origin,
        )
        try:
            result = trainer.fit(model, train_set)
        except TrainingAbortedError as e:
            model.set_parameters(e.last_good_parameters)
            checkpoint.loss_history = e.loss_history
            last_good = save_checkpoint(target / "model.last_good.ckpt", checkpoint)
            return _failure(e, checkpoint=str(last_good), epoch=e.epoch)

        checkpoint.model = result.model
        checkpoint.adam_state = result.adam_state
        checkpoint.loss_history = result.loss_history
        checkpoint_path = save_checkpoint(target / "model.ckpt", checkpoint)
        history_path = _write_loss_history(result.loss_history, target / "loss_history.csv")

        report = evaluate(result.model, train_set, validation_set)
        return {
            "success": True,
            "checkpoint": str(checkpoint_path),
            "loss_history": str(history_path),
            "nse_train": report["nse_train"],
            "nse_validation": report["nse_validation"],
        }
    except (LddmdError, OSError) as e:
        return _failure(e)


def cmd_eval(
    checkpoint_path: str,
    data_path: str,
    train_count: Optional[int] = None,
    out_dir: Optional[str] = None,
    config_path: Optional[str] = None
) -> Dict[str, Any]:
    """
    Score a checkpoint on a data file and write predictions.csv and latent.csv.

    The file is split at ``train_count`` (flag, else the checkpoint's value);
    features are normalized with the statistics stored at training time.
    Dates are counted from the training origin, so j matches the training grid.
    """
    try:
        run = load_run_config(config_path) if config_path else None
        checkpoint = load_checkpoint(checkpoint_path)
        schema = checkpoint.schema or (run.data.schema if run else CsvSchema())
        dataset = load_csv(
            data_path, schema, time_origin=checkpoint.time_origin, dt=checkpoint.model.K.dt
        )
        checkpoint.check_dimensions(dataset.input_dim, dataset.output_dim)
        if checkpoint.normalization_stats is not None:
            dataset = apply_standardization(dataset, checkpoint.normalization_stats)

        boundary = train_count if train_count is not None else checkpoint.train_count
        if boundary is not None and boundary < dataset.n_steps:
            train_set, validation_set = split(dataset, boundary)
        else:
            boundary, train_set, validation_set = None, dataset, None

        report = evaluate(checkpoint.model, train_set, validation_set)
        target = _output_dir(run, out_dir)
        predictions = export_predictions(checkpoint.model, dataset, target / "predictions.csv", boundary)
        latent = export_latent(checkpoint.model, dataset, target / "latent.csv")
        return {
            "success": True,
            "report": report,
            "predictions": str(predictions),
            "latent": str(latent),
        }
    except (LddmdError, OSError) as e:
        return _failure(e)


def cmd_inspect(checkpoint_path: str, out_dir: Optional[str] = None) -> Dict[str, Any]:
    """Inspect report of a checkpoint, with an inspect.json sidecar."""
    try:
        checkpoint = load_checkpoint(checkpoint_path)
        report = inspect(checkpoint.model)
        target = Path(out_dir) if out_dir else Path(checkpoint_path).parent
        sidecar = write_inspect_json(report, target / "inspect.json")
        return {"success": True, "report": report, "sidecar": str(sidecar)}
    except (LddmdError, OSError) as e:
        return _failure(e)


def cmd_truth(out_dir: Optional[str] = None, config_path: Optional[str] = None) -> Dict[str, Any]:
    """Write the synthetic system, expressed as an LDDMD model, to truth.ckpt."""
    try:
        run = load_run_config(config_path) if config_path else None
        target = _output_dir(run, out_dir)
        model = ground_truth_model()
        config = TrainConfig(latent_dim=2, coupling_hidden_layers=1, coupling_hidden_dim=4, readout_hidden_dim=1)
        path = save_checkpoint(target / "truth.ckpt", Checkpoint(model=model, train_config=config))
        return {"success": True, "checkpoint": str(path)}
    except (LddmdError, OSError) as e:
        return _failure(e)


def exit_code(result: Dict[str, Any]) -> int:
    if result.get("success"):
        return EXIT_OK
    if result.get("error_type") in NUMERICAL_ERRORS:
        return EXIT_NUMERICAL
    return EXIT_INPUT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lddmd", description="Latent diffeomorphic dynamic mode decomposition"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="Write the synthetic dataset")
    generate.add_argument("--config", required=True, help="Run config JSON")
    generate.add_argument("--out-dir", help="Output directory (default: paths.output_dir)")

    train = commands.add_parser("train", help="Train a model")
    train.add_argument("--config", required=True, help="Run config JSON")
    train.add_argument("--data", help="Data CSV (default: paths.data)")
    train.add_argument("--out-dir", help="Output directory (default: paths.output_dir)")
    train.add_argument("--threads", type=int, help="Worker threads for batch evaluation")

    evaluate_cmd = commands.add_parser("eval", help="Score a checkpoint and export predictions")
    evaluate_cmd.add_argument("--checkpoint", required=True, help="Checkpoint file")
    evaluate_cmd.add_argument("--data", required=True, help="Data CSV")
    evaluate_cmd.add_argument("--train-count", type=int, help="Rows in the training split")
    evaluate_cmd.add_argument("--out-dir", help="Output directory")
    evaluate_cmd.add_argument("--config", help="Run config JSON (schema, output directory)")

    inspect_cmd = commands.add_parser("inspect", help="Show learned dynamics parameters")
    inspect_cmd.add_argument("--checkpoint", required=True, help="Checkpoint file")
    inspect_cmd.add_argument("--out-dir", help="Directory for inspect.json (default: next to checkpoint)")

    truth = commands.add_parser("truth", help="Write the ground-truth synthetic model checkpoint")
    truth.add_argument("--out-dir", help="Output directory")
    truth.add_argument("--config", help="Run config JSON (output directory)")

    return parser


def _print_result(command: str, result: Dict[str, Any]) -> None:
    if not result["success"]:
        print(f"error: {result['error']}", file=sys.stderr)
        if "checkpoint" in result:
            print(f"last good checkpoint: {result['checkpoint']}", file=sys.stderr)
        return
    if command == "train":
        print(f"checkpoint: {result['checkpoint']}")
        print(f"NSE train: {result['nse_train']:.3f}")
        if result["nse_validation"] is not None:
            print(f"NSE validation: {result['nse_validation']:.3f}")
    elif command == "eval":
        print(format_nse_report(result["report"]))
    elif command == "inspect":
        print(format_inspect_report(result["report"]))
    elif command == "generate":
        print("\n".join(result["files"]))
    else:
        print(result["checkpoint"])


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_level(Config.LOG_LEVEL)
    if not validate_environment():
        return EXIT_INPUT

    start = time.perf_counter()
    if args.command == "generate":
        result = cmd_generate(args.config, args.out_dir)
    elif args.command == "train":
        result = cmd_train(args.config, args.data, args.out_dir, args.threads)
    elif args.command == "eval":
        result = cmd_eval(args.checkpoint, args.data, args.train_count, args.out_dir, args.config)
    elif args.command == "inspect":
        result = cmd_inspect(args.checkpoint, args.out_dir)
    else:
        result = cmd_truth(args.out_dir, args.config)

    log_function_call(
        logger,
        f"cmd_{args.command}",
        {k: v for k, v in vars(args).items() if k != "command"},
        (time.perf_counter() - start) * 1000,
    )
    _print_result(args.command, result)
    return exit_code(result)


if __name__ == "__main__":
    sys.exit(main())
