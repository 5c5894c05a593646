"""Multi-seed reproduction harness for LDDMD.

Runs the long checks that do not belong in the unit tests:

* ``--preset synthetic``: trains on the noisy synthetic series for several
  seeds, counts runs reaching train NSE >= 0.90 and validation NSE >= 0.85,
  and checks that passing runs recover the latent frequency within 10%.
* ``--preset real``: ingests a 14-feature daily forcing CSV (a surrogate
  series is written when the preset names no data file), trains with the
  real-data configuration without a numerical abort, and reruns the
  telescoping, invertibility and gradient property checks at d=14, d_c=10.

Usage:
    python -m eval.harness --preset synthetic --seeds 5
"""

import argparse
import json
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.config import Config, load_run_config, validate_environment
from src.data.dataset import TimeSeriesDataset, apply_standardization, load_csv, split, standardize
from src.data.synthetic import OMEGA_Z, generate_synthetic
from src.engine.adcore import check_gradient
from src.errors import LddmdError, TrainingAbortedError
from src.evaluation.metrics import evaluate
from src.koopman.dynamics import BlockRotationDynamics
from src.koopman.maps import AdditiveCouplingDiffeo, PolyMLP, ReadoutMLP, coupling_forward, coupling_inverse
from src.koopman.model import (
    LddmdModel, flatten_parameters, latent_recursive, latent_series, loss_function,
    z0_from_initial_state
)
from src.observability.logging import get_logger
from src.storage.models import RunConfig
from src.training.trainer import Trainer, init_model

logger = get_logger(__name__)

PRESET_DIR = Path(__file__).parent / "presets"

TRAIN_NSE_THRESHOLD = 0.90
VALIDATION_NSE_THRESHOLD = 0.85
FREQUENCY_TOLERANCE = 0.10
REQUIRED_PASSING_SEEDS = 3


def _random_model(rng: np.random.Generator, d: int, d_c: int) -> LddmdModel:
    f = PolyMLP.initialized(d, d_c, 1, 3, rng, weight_scale=0.5)
    f.set_parameters({k: rng.normal(scale=0.3, size=v.shape) for k, v in f.parameters().items()})
    return LddmdModel(
        phi=AdditiveCouplingDiffeo(d_c, coefficients=rng.normal(scale=0.1, size=(d_c // 2, 3))),
        f=f,
        g=ReadoutMLP.initialized(d_c, 3, 1, rng),
        K=BlockRotationDynamics(omegas=rng.uniform(0.01, 1.0, size=d_c // 2)),
        z0=rng.normal(size=d_c),
    )


def property_checks(d: int, d_c: int, seed: int = 0, models: int = 10) -> Dict[str, Any]:
    """
    Telescoping, invertibility and gradient checks on random models.

    Returns:
        Worst observed error per check and whether each met its tolerance
    """
    rng = np.random.Generator(np.random.Philox(key=seed))
    telescoping = 0.0
    gradient = 0.0
    for _ in range(models):
        model = _random_model(rng, d, d_c)
        X = rng.uniform(-1.0, 1.0, size=(200, d))
        series = TimeSeriesDataset(X=X, Y=np.zeros(200), time_index=np.arange(200))
        z0_raw = rng.normal(size=d_c)
        model.z0 = z0_from_initial_state(model, X[0], z0_raw)
        error = np.max(np.abs(latent_recursive(model, series, z0_raw) - latent_series(model, series.time_index, X)))
        telescoping = max(telescoping, float(error))

        small = TimeSeriesDataset(X=X[:8], Y=rng.normal(loc=2.0, size=8), time_index=np.arange(8))
        objective = loss_function(model, small, np.arange(8))
        gradient = max(gradient, check_gradient(objective, flatten_parameters(model.parameters())))

    phi = AdditiveCouplingDiffeo(d_c, coefficients=rng.normal(scale=0.5, size=(d_c // 2, 3)))
    points = [rng.normal(size=10_000) for _ in range(d_c)]
    round_trip = max(
        float(np.max(np.abs(b - a))) for a, b in zip(points, coupling_inverse(phi, coupling_forward(phi, points)))
    )
    dense = BlockRotationDynamics(omegas=rng.uniform(0.01, 3.0, size=d_c // 2)).matrix()
    orthogonality = float(np.max(np.abs(dense.T @ dense - np.eye(d_c))))

    return {
        "telescoping_error": telescoping,
        "telescoping_ok": telescoping <= 1e-8,
        "round_trip_error": round_trip,
        "round_trip_ok": round_trip <= 1e-10,
        "orthogonality_error": orthogonality,
        "orthogonality_ok": orthogonality <= 1e-12,
        "gradient_error": gradient,
        "gradient_ok": gradient <= 1e-4,
    }


def surrogate_forcing_csv(run: RunConfig, path: Path, n_days: int = 1000) -> Path:
    """
    Write a daily series in the preset's schema: seasonal forcings and a positive streamflow.

    The target responds to the smoothed first feature column and to a slow
    oscillation not visible in any feature, so the model needs its latent state.
    """
    schema = run.data.schema
    rng = np.random.Generator(np.random.Philox(key=run.seed))
    days = np.arange(n_days)
    season = 2.0 * np.pi * days / 365.25
    features = {}
    for k, name in enumerate(schema.feature_columns):
        phase = 2.0 * np.pi * k / len(schema.feature_columns)
        features[name] = np.sin(season + phase) + 0.2 * rng.standard_normal(n_days)

    wetness = pd.Series(features[schema.feature_columns[0]]).ewm(span=20).mean().to_numpy()
    hidden = np.sin(2.0 * np.pi * days / 90.0)
    drive = 0.8 * wetness + 0.5 * hidden + 0.05 * rng.standard_normal(n_days)
    streamflow = np.log1p(np.exp(drive))

    frame = pd.DataFrame({schema.time_column: pd.date_range("2000-01-01", periods=n_days, freq="D").strftime("%Y-%m-%d")})
    for name, values in features.items():
        frame[name] = values
    frame[schema.target_column] = streamflow
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


class ReproductionHarness:
    """Runs a preset over several seeds and summarizes the acceptance checks."""

    def __init__(self, preset: str, threads: Optional[int] = None):
        self.preset = preset
        self.preset_file = PRESET_DIR / f"{preset}.json"
        self.threads = threads or Config.THREADS
        self.results: List[Dict[str, Any]] = []

    def run(self, seeds: int) -> Dict[str, Any]:
        print(f"🧪 LDDMD reproduction harness: preset {self.preset}, {seeds} seed(s)")
        print("=" * 50)
        run = load_run_config(self.preset_file)
        start_time = time.time()

        if self.preset == "real":
            summary = self._run_real(run)
        else:
            for seed in range(seeds):
                print(f"\n{'=' * 20} Seed {seed + 1}/{seeds} {'=' * 20}")
                self.results.append(self._run_synthetic_seed(run, seed))
            summary = self._summarize_synthetic()

        summary["preset"] = self.preset
        summary["total_duration_s"] = time.time() - start_time
        self._save_results(summary)
        self._print_summary(summary)
        return summary

    def _train(self, run: RunConfig, train_set: TimeSeriesDataset, seed: int):
        config = run.train._replace(seed=seed)
        model = init_model(config, train_set, seed)
        return Trainer(config, threads=self.threads).fit(model, train_set)

    def _run_synthetic_seed(self, run: RunConfig, seed: int) -> Dict[str, Any]:
        started = time.time()
        _, noisy, _ = generate_synthetic(run.synthetic._replace(seed=seed))
        train_set, validation_set = split(noisy, run.data.train_count)
        try:
            result = self._train(run, train_set, seed)
        except TrainingAbortedError as e:
            print(f"❌ Aborted in epoch {e.epoch}: {e}")
            return {"seed": seed, "success": False, "error": str(e)}

        report = evaluate(result.model, train_set, validation_set)
        omegas = result.model.K.omegas.tolist()
        frequency_error = min(abs(abs(w) - OMEGA_Z) / OMEGA_Z for w in omegas)
        reproduced = (
            report["nse_train"] >= TRAIN_NSE_THRESHOLD
            and report["nse_validation"] >= VALIDATION_NSE_THRESHOLD
        )
        outcome = {
            "seed": seed,
            "success": True,
            "nse_train": report["nse_train"],
            "nse_validation": report["nse_validation"],
            "omegas": omegas,
            "frequency_relative_error": frequency_error,
            "reproduced": reproduced,
            "frequency_recovered": reproduced and frequency_error <= FREQUENCY_TOLERANCE,
            "final_loss": result.loss_history[-1] if result.loss_history else None,
            "duration_s": time.time() - started,
        }
        status = "✅" if reproduced else "⚠️ "
        print(
            f"{status} NSE train {outcome['nse_train']:.3f}, validation {outcome['nse_validation']:.3f}, "
            f"omega {omegas[0]:.5f} ({frequency_error:.1%} off) in {outcome['duration_s']:.0f}s"
        )
        return outcome

    def _summarize_synthetic(self) -> Dict[str, Any]:
        completed = [r for r in self.results if r["success"]]
        reproduced = [r for r in completed if r["reproduced"]]
        recovered = [r for r in reproduced if r["frequency_recovered"]]
        return {
            "success": True,
            "seeds": len(self.results),
            "aborted": len(self.results) - len(completed),
            "reproduced": len(reproduced),
            "frequency_recovered": len(recovered),
            "nse_reproduction_passed": len(reproduced) >= REQUIRED_PASSING_SEEDS,
            "frequency_recovery_passed": bool(reproduced) and len(recovered) == len(reproduced),
            "results": self.results,
        }

    def _run_real(self, run: RunConfig) -> Dict[str, Any]:
        output_dir = Path(run.paths.output_dir)
        data_path = Path(run.paths.data) if run.paths.data else None
        if data_path is None or not data_path.is_file():
            data_path = surrogate_forcing_csv(run, output_dir / "surrogate_forcing.csv")
            print(f"📄 No data file in preset, wrote surrogate series to {data_path}")

        dataset = load_csv(data_path, run.data.schema)
        train_set, validation_set = split(dataset, min(run.data.train_count, dataset.n_steps - 1))
        if run.data.standardize:
            train_set, stats = standardize(train_set)
            validation_set = apply_standardization(validation_set, stats)

        properties = property_checks(dataset.input_dim, run.train.latent_dim, seed=run.seed)
        outcome: Dict[str, Any] = {"properties": properties, "rows": dataset.n_steps}
        try:
            result = self._train(run, train_set, run.seed)
            report = evaluate(result.model, train_set, validation_set)
            outcome.update(
                trained=True,
                nse_train=report["nse_train"],
                nse_validation=report["nse_validation"],
                final_loss=result.loss_history[-1] if result.loss_history else None,
            )
        except TrainingAbortedError as e:
            outcome.update(trained=False, error=str(e), epoch=e.epoch)

        self.results.append(outcome)
        checks_ok = all(v for k, v in properties.items() if k.endswith("_ok"))
        return {
            "success": True,
            "trained_without_abort": outcome["trained"],
            "property_checks_passed": checks_ok,
            "results": self.results,
        }

    def _save_results(self, summary: Dict[str, Any]) -> None:
        try:
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            results_file = Path(__file__).parent / f"results_{self.preset}_{timestamp}.json"
            results_file.write_text(json.dumps(summary, indent=2, default=str), encoding="utf-8")
            print(f"💾 Results saved to: {results_file}")
        except OSError as e:
            print(f"⚠️  Could not save results: {e}")

    def _print_summary(self, summary: Dict[str, Any]) -> None:
        print(f"\n{'=' * 50}")
        print("📊 REPRODUCTION SUMMARY")
        print("=" * 50)
        print(f"Total Duration: {summary['total_duration_s']:.1f}s")
        if self.preset == "real":
            run = summary["results"][0]
            print(f"Trained without abort: {summary['trained_without_abort']}")
            if run.get("trained"):
                print(f"NSE train {run['nse_train']:.3f}, validation {run['nse_validation']:.3f}")
            for name, value in run["properties"].items():
                if not name.endswith("_ok"):
                    print(f"  {name}: {value:.3g}")
            return
        print(f"Seeds reproducing NSE: {summary['reproduced']}/{summary['seeds']} (need {REQUIRED_PASSING_SEEDS})")
        print(f"Frequency recovered in passing runs: {summary['frequency_recovered']}/{summary['reproduced']}")


def passed(summary: Dict[str, Any]) -> bool:
    if summary.get("preset") == "real":
        return summary["trained_without_abort"] and summary["property_checks_passed"]
    return summary["nse_reproduction_passed"] and summary["frequency_recovery_passed"]


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="LDDMD reproduction harness")
    parser.add_argument("--preset", choices=["synthetic", "real"], default="synthetic", help="Preset under eval/presets")
    parser.add_argument("--seeds", type=int, default=5, help="Number of seeds (synthetic preset)")
    parser.add_argument("--threads", type=int, help="Worker threads for batch evaluation")
    args = parser.parse_args(argv)

    if not validate_environment():
        print("❌ Environment validation failed. Please check configuration.")
        return 1

    try:
        summary = ReproductionHarness(args.preset, args.threads).run(args.seeds)
    except (LddmdError, OSError) as e:
        print(f"❌ Harness failed: {e}")
        logger.error(f"Reproduction harness failed: {e}")
        return 1

    if passed(summary):
        print("🎉 Reproduction PASSED")
        return 0
    print("❌ Reproduction FAILED")
    return 1


if __name__ == "__main__":
    sys.exit(main())
