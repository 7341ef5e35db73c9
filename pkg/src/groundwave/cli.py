"""Command-line surface: calibrate, run, compare and sweep."""

import argparse
import asyncio
import logging
from pathlib import Path

from pydantic import ValidationError

from . import __version__
from .baselines import PolicyKind
from .blockage import dump_events
from .channel import CalibrationResult, calibrate
from .config import Config, load_config, settings
from .errors import (
    CalibrationError,
    CalibrationMissingError,
    ConfigError,
    GroundwaveError,
)
from .simcore import (
    realize_events,
    run,
    sweep_async,
    write_compare_csv,
    write_metrics_csv,
    write_trace_csv,
    write_transitions,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CALIBRATION = 3
EXIT_RUNTIME = 4

CALIBRATION_FILE = "calibration.json"


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for the calibrate, run, compare and sweep commands."""
    parser = argparse.ArgumentParser(
        prog="groundwave",
        description="Ground-reflection blockage recovery simulator for 60 GHz links.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("config", nargs="?", help="Config JSON (default: bundled testbed)")
        sub.add_argument("--out", type=Path, default=None, help="Output directory")

    def add_run_options(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--seed", type=int, default=None)
        sub.add_argument("--horizon-s", type=float, default=None)
        sub.add_argument(
            "--calibration", type=Path, default=None, help="Report from `groundwave calibrate`"
        )

    calib = commands.add_parser("calibrate", help="Fit link losses to the measured rows")
    add_common(calib)

    single = commands.add_parser("run", help="Simulate one policy")
    add_common(single)
    add_run_options(single)
    single.add_argument("--policy", choices=[p.value for p in PolicyKind], default=None)
    single.add_argument("--export-events", action="store_true", help="Also write events.json")

    compare = commands.add_parser("compare", help="Run every policy on the same blockages")
    add_common(compare)
    add_run_options(compare)

    grid = commands.add_parser("sweep", help="Run the configured tilt sweep")
    add_common(grid)
    add_run_options(grid)
    grid.add_argument("--policy", choices=[p.value for p in PolicyKind], default=None)
    return parser


def _out_dir(args: argparse.Namespace) -> Path:
    """Output directory from --out or the environment, created on demand."""
    out = args.out if args.out is not None else Path(settings.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _override(config: Config, args: argparse.Namespace) -> Config:
    """Apply --seed, --horizon-s and --policy to the simulation section."""
    update = {}
    if getattr(args, "seed", None) is not None:
        update["seed"] = args.seed
    if getattr(args, "horizon_s", None) is not None:
        update["horizon_s"] = args.horizon_s
    if getattr(args, "policy", None) is not None:
        update["policy"] = PolicyKind(args.policy)
    if not update:
        return config
    try:
        simulation = config.simulation.model_validate(
            {**config.simulation.model_dump(), **update}
        )
    except ValidationError as e:
        raise ConfigError(f"invalid command-line override: {e}") from e
    return config.model_copy(update={"simulation": simulation})


def _calibrate(config: Config, strict: bool) -> CalibrationResult:
    return calibrate(
        config.link_budget(),
        config.site_geometry(),
        config.calibration_targets(),
        config.tx_codebook(),
        config.rx_codebook(),
        config.pedestrian(),
        strict=strict,
    )


def _load_calibration(config: Config, args: argparse.Namespace, out: Path):
    """Explicit report, then one left in the output directory, then inline fitting."""
    path = args.calibration
    if path is None and (out / CALIBRATION_FILE).exists():
        path = out / CALIBRATION_FILE
    if path is not None:
        try:
            return CalibrationResult.model_validate_json(Path(path).read_text())
        except (OSError, ValidationError) as e:
            raise ConfigError(f"cannot read calibration report {path}: {e}") from e
    if config.calibration.inline:
        return _calibrate(config, strict=True)
    if config.link.system_loss_db is None:
        raise CalibrationMissingError(
            "no calibration report found; run `groundwave calibrate` first or pass --calibration"
        )
    return None


def _scenario(config: Config, calibration):
    try:
        return config.scenario(calibration)
    except (OSError, ValidationError) as e:
        raise ConfigError(f"invalid scenario: {e}") from e


def cmd_calibrate(config: Config, args: argparse.Namespace) -> int:
    """Fit the losses and write the calibration report."""
    out = _out_dir(args)
    result = _calibrate(config, strict=False)
    path = out / CALIBRATION_FILE
    path.write_text(result.model_dump_json(indent=2) + "\n")
    print(
        f"system_loss_db={result.system_loss:.3f} "
        f"max_residual_db={result.max_abs_residual_db:.3f} report={path}"
    )
    if not result.passed:
        logger.error(
            f"Calibration residual {result.max_abs_residual_db:.2f} dB exceeds "
            f"{result.max_residual_db} dB"
        )
        return EXIT_CALIBRATION
    return EXIT_OK


def cmd_run(config: Config, args: argparse.Namespace) -> int:
    """Simulate the configured policy and write its metrics, trace and transitions."""
    out = _out_dir(args)
    scenario = _scenario(config, _load_calibration(config, args, out))
    metrics = run(scenario)
    write_metrics_csv([metrics], out / "metrics.csv")
    write_trace_csv(metrics, out / "trace.csv")
    write_transitions(metrics, out / "transitions.log")
    if args.export_events:
        (out / "events.json").write_text(dump_events(realize_events(scenario)) + "\n")
    print(metrics.summary_line())
    return EXIT_OK


def cmd_compare(config: Config, args: argparse.Namespace) -> int:
    """Run every policy on the same blockage events."""
    out = _out_dir(args)
    base = _scenario(config, _load_calibration(config, args, out))
    results = [run(base.model_copy(update={"policy": kind})) for kind in PolicyKind]
    write_compare_csv(results, out / "compare.csv")
    write_metrics_csv(results, out / "metrics.csv")
    for metrics in results:
        print(metrics.summary_line())
    return EXIT_OK


def cmd_sweep(config: Config, args: argparse.Namespace) -> int:
    """Run the configured tilt sweep, one grid point per executor job."""
    out = _out_dir(args)
    base = _scenario(config, _load_calibration(config, args, out))
    results = asyncio.run(sweep_async(base, {"tilt_deg": list(config.sweep.tilt_deg)}))
    write_metrics_csv([m for _, m in results], out / "sweep.csv")
    for scenario, metrics in results:
        print(f"tilt_deg={scenario.geom.tilt_tx:g} {metrics.summary_line()}")
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _override(load_config(args.config), args)
        return COMMANDS[args.command](config, args)
    except ConfigError as e:
        logger.error(f"{e}")
        return EXIT_USAGE
    except (CalibrationError, CalibrationMissingError) as e:
        logger.error(f"{e}")
        return EXIT_CALIBRATION
    except GroundwaveError as e:
        logger.error(f"Run failed: {e}")
        return EXIT_RUNTIME
