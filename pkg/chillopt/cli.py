"""
Command-line entry point.

Every subcommand reads its inputs from files, writes its results plus a
manifest.json into an output directory and keeps diagnostics on stderr.
Settings resolve as flags over the --config document over built-in
defaults. Exit codes: 0 success, 1 usage or config error, 2 data, model,
optimization or experiment error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import pandas as pd

from chillopt import __version__
from chillopt.closed_loop import REPORT_FILES, ExperimentConfig, export_report, planted_ecm_experiment, run_experiment
from chillopt.config import build_dataclass, closest_key, dataclass_to_dict, ensure_output_dir, load_config, load_settings, merge_layers
from chillopt.errors import ConfigError, DataError, ExperimentError, ModelError, OptimizationError
from chillopt.forecaster import ForecasterParams, fit_profile
from chillopt.forecaster import save_model as save_forecaster
from chillopt.logger import configure_logging, get_logger, set_level
from chillopt.manifest import MANIFEST_FILE, RunManifest
from chillopt.optimizer.ga import GAConfig
from chillopt.optimizer.problem import DEFAULT_PENALTY_WEIGHT, DEFAULT_SHORTFALL_TOLERANCE
from chillopt.optimizer.pso import PSOConfig
from chillopt.optimizer.runner import export_recommendations, optimize_profile, total_predicted_energy_kwh
from chillopt.plant.history import DemandModel, generate_history, load_plant_config, read_history, save_plant_config, write_history
from chillopt.plant.types import PlantConfig
from chillopt.savings import BASELINE_KINDS, BaselineKind, avoided_energy, export_report as export_savings, fit_baseline
from chillopt.surrogate import SurrogateParams, evaluate_surrogate, train_surrogate
from chillopt.surrogate import load_model as load_surrogate
from chillopt.surrogate import save_model as save_surrogate
from chillopt.timeseries import STEP_MINUTES, read_scalar_csv, read_weather_csv, write_frame

logger = get_logger(__name__)

PLANT_FILE = "plant.json"
PROFILE_COLUMN = "cooling_kw"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class UsageError(Exception):
    """Bad command line; reported with usage text and exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        match = re.search(r"invalid choice: '([^']+)'", message)
        if match:
            suggestion = closest_key(match.group(1), COMMANDS)
            if suggestion:
                message = f"{message} (did you mean '{suggestion}'?)"
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# command settings ------------------------------------------------------------


@dataclass(frozen=True)
class SimulationSettings:
    seed: int = 0
    days: int = 540
    start: Optional[str] = None
    weather_profile: str = "subtropical"
    plant: PlantConfig = PlantConfig()
    demand: DemandModel = DemandModel()


@dataclass(frozen=True)
class OptimizeSettings:
    algorithm: str = "ga"
    warm_start: bool = False
    shortfall_tolerance: float = DEFAULT_SHORTFALL_TOLERANCE
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT
    ga: GAConfig = GAConfig()
    pso: PSOConfig = PSOConfig()

    def optimizer_config(self) -> GAConfig | PSOConfig:
        return self.pso if self.algorithm == "pso" else self.ga


@dataclass(frozen=True)
class BenchmarkSettings:
    kind: BaselineKind = "linear_daily"
    forecaster: ForecasterParams = ForecasterParams()


def resolve_settings(cls, args: argparse.Namespace, flags: Dict[str, Any], section: str):
    """Built-in defaults, overlaid by the --config document, overlaid by explicit flags."""
    document = load_config(args.config) if args.config else {}
    return build_dataclass(cls, merge_layers(document, flags), section=section)


def _seeded(path: Sequence[str], seed: Optional[int]) -> Dict[str, Any]:
    """Nested override {'a': {'b': {'seed': seed}}} for a dotted seed location."""
    if seed is None:
        return {}
    layer: Dict[str, Any] = {"seed": seed}
    for key in reversed(path):
        layer = {key: layer}
    return layer


def _read_history_dir(path: str) -> tuple[PlantConfig, Any]:
    base = Path(path)
    plant = load_plant_config(base / PLANT_FILE)
    return plant, read_history(base, plant)


def _write_json(payload: Dict[str, Any], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(payload, file, indent=2, sort_keys=True)
        file.write("\n")


# subcommands -----------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    flags = {"seed": args.seed, "days": args.days, "start": args.start}
    settings = resolve_settings(SimulationSettings, args, flags, "simulate")
    outputs = ["weather.csv", "energy.csv", "setpoints.csv", PLANT_FILE, MANIFEST_FILE]
    out = ensure_output_dir(args.out, outputs, args.force)
    manifest = RunManifest.begin("simulate", args.config, settings.seed)

    history = generate_history(
        settings.plant,
        settings.seed,
        settings.days,
        demand_model=settings.demand,
        profile=settings.weather_profile,
        start=settings.start,
    )
    paths = write_history(history, settings.plant, out)
    save_plant_config(settings.plant, out / PLANT_FILE)

    manifest.settings = dataclass_to_dict(settings)
    manifest.outputs = [str(p) for p in [*paths, out / PLANT_FILE]]
    manifest.finish(out)
    return EXIT_OK


def cmd_train_forecast(args: argparse.Namespace) -> int:
    params = resolve_settings(ForecasterParams, args, _seeded(["regressor"], args.seed), "forecaster")
    outputs = ["forecaster.json", "forecast_metrics.json", MANIFEST_FILE]
    out = ensure_output_dir(args.out, outputs, args.force)
    manifest = RunManifest.begin("train-forecast", args.config, params.regressor.seed)

    _, history = _read_history_dir(args.data)
    forecaster = fit_profile(history, target=args.target, hyperparams=params)
    save_forecaster(forecaster, out / outputs[0])
    _write_json(
        {
            "target": args.target,
            "holdout_mape": None if forecaster.holdout_mape is None else forecaster.holdout_mape.to_dict(),
        },
        out / outputs[1],
    )

    manifest.settings = {"target": args.target, **dataclass_to_dict(params)}
    manifest.inputs = [str(Path(args.data).resolve())]
    manifest.outputs = [str(out / name) for name in outputs[:2]]
    manifest.finish(out)
    return EXIT_OK


def cmd_train_surrogate(args: argparse.Namespace) -> int:
    params = resolve_settings(SurrogateParams, args, _seeded(["regressor"], args.seed), "surrogate")
    outputs = ["surrogate.json", MANIFEST_FILE] + (["surrogate_metrics.json"] if args.test else [])
    out = ensure_output_dir(args.out, outputs, args.force)
    manifest = RunManifest.begin("train-surrogate", args.config, params.regressor.seed)

    _, history = _read_history_dir(args.data)
    model = train_surrogate(history, params)
    save_surrogate(model, out / "surrogate.json")
    manifest.inputs = [str(Path(args.data).resolve())]
    manifest.outputs = [str(out / "surrogate.json")]
    if args.test:
        _, test = _read_history_dir(args.test)
        metrics = evaluate_surrogate(model, test, seed=params.regressor.seed)
        _write_json(metrics.to_dict(), out / "surrogate_metrics.json")
        manifest.inputs.append(str(Path(args.test).resolve()))
        manifest.outputs.append(str(out / "surrogate_metrics.json"))

    manifest.settings = dataclass_to_dict(params)
    manifest.finish(out)
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    if not args.surrogate and not args.oracle:
        raise UsageError("optimize needs --surrogate MODEL or --oracle")
    flags: Dict[str, Any] = {"algorithm": args.algorithm, "warm_start": True if args.warm_start else None}
    document_algorithm = args.algorithm or (load_config(args.config).get("algorithm") if args.config else None) or "ga"
    flags.update(_seeded([document_algorithm], args.seed))
    settings = resolve_settings(OptimizeSettings, args, flags, "optimize")
    outputs = ["recommendations.csv", MANIFEST_FILE]
    out = ensure_output_dir(args.out, outputs, args.force)
    config = settings.optimizer_config()
    manifest = RunManifest.begin("optimize", args.config, config.seed)

    plant = load_plant_config(args.plant)
    weather = read_weather_csv(args.weather)
    profile = read_scalar_csv(args.profile, PROFILE_COLUMN)
    surrogate = load_surrogate(args.surrogate) if args.surrogate else None
    results = optimize_profile(
        surrogate,
        plant,
        weather,
        profile,
        config=config,
        algorithm=settings.algorithm,
        warm_start=settings.warm_start,
        shortfall_tolerance=settings.shortfall_tolerance,
        penalty_weight=settings.penalty_weight,
    )
    export_recommendations(results, list(weather.timestamps()), out / outputs[0], plant)
    infeasible = sum(not result.feasible for result in results)
    logger.info(
        f"Optimized {len(results)} intervals: predicted {total_predicted_energy_kwh(results, STEP_MINUTES):.1f} kWh, "
        f"{infeasible} infeasible"
    )

    manifest.settings = dataclass_to_dict(settings)
    manifest.inputs = [str(Path(p).resolve()) for p in (args.plant, args.weather, args.profile, args.surrogate) if p]
    manifest.outputs = [str(out / outputs[0])]
    manifest.finish(out)
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    settings = resolve_settings(BenchmarkSettings, args, {"kind": args.kind}, "benchmark")
    outputs = ["savings.json", "savings_detail.csv", "savings_monthly.csv", "savings_plot.csv", MANIFEST_FILE]
    out = ensure_output_dir(args.out, outputs, args.force)
    manifest = RunManifest.begin("benchmark", args.config)

    _, baseline_history = _read_history_dir(args.baseline)
    _, reporting = _read_history_dir(args.reporting)
    if reporting.start < baseline_history.end:
        raise DataError("baseline/reporting overlap: the reporting period starts before the baseline ends")
    report = avoided_energy(fit_baseline(baseline_history, settings.kind, settings.forecaster), reporting)
    paths = export_savings(report, out)

    manifest.settings = dataclass_to_dict(settings)
    manifest.inputs = [str(Path(p).resolve()) for p in (args.baseline, args.reporting)]
    manifest.outputs = [str(p) for p in paths]
    manifest.finish(out)
    return EXIT_OK


def cmd_closed_loop(args: argparse.Namespace) -> int:
    flags: Dict[str, Any] = {"seed": args.seed}
    if args.days is not None:
        flags["deployment_days"] = args.days
    config = resolve_settings(ExperimentConfig, args, flags, "experiment")
    outputs = [*REPORT_FILES, MANIFEST_FILE] + (["ecm.json"] if args.ecm else [])
    out = ensure_output_dir(args.out, outputs, args.force)
    manifest = RunManifest.begin("closed-loop", args.config, config.seed)

    report = run_experiment(config)
    paths = export_report(report, out)
    if args.ecm:
        ecm = planted_ecm_experiment(config)
        _write_json(ecm.to_dict(), out / "ecm.json")
        paths.append(out / "ecm.json")

    manifest.settings = config.to_dict()
    manifest.outputs = [str(p) for p in paths]
    manifest.finish(out)
    return EXIT_OK


def _daily_energy(log: pd.DataFrame) -> pd.DataFrame:
    hours = STEP_MINUTES / 60.0
    frame = log.assign(day=pd.to_datetime(log["timestamp"], utc=True).dt.strftime("%Y-%m-%d"))
    grouped = frame.groupby("day", sort=True)
    daily = pd.DataFrame(
        {
            "realized_kwh": grouped["realized_power_kw"].sum() * hours,
            "legacy_kwh": grouped["legacy_power_kw"].sum() * hours,
            "predicted_kwh": grouped["predicted_power_kw"].sum() * hours,
            "forecast_cooling_kwh": grouped["forecast_cooling_kw"].sum() * hours,
            "true_demand_kwh": grouped["true_demand_kw"].sum() * hours,
        }
    )
    return daily.reset_index()


def _mape_by_phase(report: Dict[str, Any]) -> pd.DataFrame:
    surrogate = report["surrogate"]
    rows = []
    for phase in ("in_distribution", "pre_retrain", "post_retrain"):
        metrics = surrogate[phase]
        rows.append(
            {
                "phase": phase,
                "power_mape_pct": metrics["power_mape"]["mape_pct"],
                "power_ci_halfwidth_pct": metrics["power_mape"]["ci_halfwidth_pct"],
                "cooling_mape_pct": metrics["cooling_mape"]["mape_pct"],
                "ood_fraction": metrics["ood_fraction"],
            }
        )
    return pd.DataFrame(rows)


def _savings_daily(detail: pd.DataFrame) -> pd.DataFrame:
    frame = detail.assign(day=pd.to_datetime(detail["bucket_start"], utc=True).dt.strftime("%Y-%m-%d"))
    daily = frame.groupby("day", sort=True)[["adjusted_baseline_kwh", "metered_kwh"]].sum()
    daily["avoided_kwh"] = daily["adjusted_baseline_kwh"] - daily["metered_kwh"]
    daily["cumulative_avoided_kwh"] = daily["avoided_kwh"].cumsum()
    return daily.reset_index()


# sources found in a prior output directory -> (plot file, renderer)
_RENDERERS: Dict[str, tuple[str, Callable[[Path], pd.DataFrame]]] = {
    "closed_loop.json": ("phase_mape.csv", lambda p: _mape_by_phase(json.loads(p.read_text(encoding="utf-8")))),
    "interval_log.csv": ("daily_energy.csv", lambda p: _daily_energy(pd.read_csv(p))),
    "savings_detail.csv": ("savings_daily.csv", lambda p: _savings_daily(pd.read_csv(p))),
}


def cmd_report(args: argparse.Namespace) -> int:
    source = Path(args.input)
    found = [name for name in _RENDERERS if (source / name).exists()]
    if not found:
        raise DataError(f"no closed-loop or benchmark outputs found in {source}")
    outputs = [_RENDERERS[name][0] for name in found]
    out = ensure_output_dir(args.out, [*outputs, MANIFEST_FILE], args.force)
    manifest = RunManifest.begin("report")

    for name in found:
        target, render = _RENDERERS[name]
        write_frame(render(source / name), out / target)
        manifest.inputs.append(str((source / name).resolve()))
        manifest.outputs.append(str(out / target))
    manifest.finish(out)
    return EXIT_OK


# parser ------------------------------------------------------------------------

COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "simulate": cmd_simulate,
    "train-forecast": cmd_train_forecast,
    "train-surrogate": cmd_train_surrogate,
    "optimize": cmd_optimize,
    "benchmark": cmd_benchmark,
    "closed-loop": cmd_closed_loop,
    "report": cmd_report,
}


def _common(parser: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        parser.add_argument("--config", help="JSON or YAML settings document")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chillopt", description="Chiller-plant energy optimization toolkit")
    parser.add_argument("--version", action="version", version=f"chillopt {__version__}")
    parser.add_argument("--settings", help="toolkit settings file (log level, log file)")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = sub.add_parser("simulate", help="generate legacy-operated plant history")
    _common(simulate)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--days", type=int)
    simulate.add_argument("--start", help="first timestamp, ISO 8601 UTC")

    forecast = sub.add_parser("train-forecast", help="train the 15-minute profile forecaster")
    _common(forecast)
    forecast.add_argument("--data", required=True, help="history directory written by simulate")
    forecast.add_argument("--target", choices=["cooling", "power"], default="cooling")
    forecast.add_argument("--seed", type=int)

    surrogate = sub.add_parser("train-surrogate", help="train the holistic plant surrogate")
    _common(surrogate)
    surrogate.add_argument("--data", required=True, help="history directory written by simulate")
    surrogate.add_argument("--test", help="history directory to score the trained surrogate on")
    surrogate.add_argument("--seed", type=int)

    optimize = sub.add_parser("optimize", help="recommend setpoints for a cooling profile")
    _common(optimize)
    optimize.add_argument("--plant", required=True, help="plant config document")
    optimize.add_argument("--weather", required=True, help="weather CSV covering the profile")
    optimize.add_argument("--profile", required=True, help=f"CSV with timestamp,{PROFILE_COLUMN}")
    optimize.add_argument("--surrogate", help="surrogate model document")
    optimize.add_argument("--oracle", action="store_true", help="search against the simulated plant itself")
    optimize.add_argument("--algorithm", choices=["ga", "pso"])
    optimize.add_argument("--warm-start", action="store_true")
    optimize.add_argument("--seed", type=int)

    benchmark = sub.add_parser("benchmark", help="adjusted-baseline savings of a reporting period")
    _common(benchmark)
    benchmark.add_argument("--baseline", required=True, help="baseline-period history directory")
    benchmark.add_argument("--reporting", required=True, help="reporting-period history directory")
    benchmark.add_argument("--kind", choices=list(BASELINE_KINDS))

    closed = sub.add_parser("closed-loop", help="run the seeded deployment experiment")
    _common(closed)
    closed.add_argument("--seed", type=int)
    closed.add_argument("--days", type=int, help="deployment days")
    closed.add_argument("--ecm", action="store_true", help="also run the planted-ECM recovery experiment")

    report = sub.add_parser("report", help="render plot-data files from prior outputs")
    _common(report, config=False)
    report.add_argument("--input", required=True, help="output directory of closed-loop or benchmark")
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --version and --help
        return int(exc.code or 0)

    configure_logging(load_settings(args.settings))
    if args.log_level:
        set_level(args.log_level)

    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"chillopt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        logger.error(f"{args.command}: config error: {exc}")
        return EXIT_USAGE
    except ExperimentError as exc:
        logger.error(f"{args.command}: experiment failed in phase {exc.phase}: {exc.cause}")
        return EXIT_FAILURE
    except (DataError, ModelError, OptimizationError) as exc:
        logger.error(f"{args.command}: {exc}")
        return EXIT_FAILURE
    except FileNotFoundError as exc:
        logger.error(f"{args.command}: missing input: {exc.filename}")
        return EXIT_FAILURE


def main() -> int:
    return dispatch(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
