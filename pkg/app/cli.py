import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.config import configure_logging
from app.exceptions import (
    EXIT_DESIGN_INFEASIBLE,
    EXIT_DIMENSION_MISMATCH,
    EXIT_IO_ERROR,
    EXIT_OK,
    DesignInfeasibleError,
    StorageError,
)
from app.models.config import ExperimentConfig
from app.services import experiment, storage

logger = logging.getLogger(__name__)

# flags that override fields of the structure section
STRUCTURE_FLAGS = ("m0", "b", "g", "k", "n_iter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="papi-cs",
        description="Compressed-sensing design, simulation and two-step reconstruction for circular PAPI",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config JSON")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--m0", type=int, help="measurements per group")
    common.add_argument("--b", type=int, help="sensors per block")
    common.add_argument("--g", type=int, help="blocks per group")
    common.add_argument("--k", type=int, help="SIN subset size")
    common.add_argument("--n-iter", dest="n_iter", type=int, help="design search iterations")
    common.add_argument("--noise", type=float, help="relative data noise level")
    common.add_argument("--preset", choices=["sparse", "nonsparse"], help="phantom preset")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("design", parents=[common], help="optimize the CS matrix and draw the random comparator")
    sub.add_parser("simulate", parents=[common], help="simulate pressure, means and CS data")
    sub.add_parser("reconstruct", parents=[common], help="two-step reconstruction and error report")
    evaluate = sub.add_parser("evaluate", parents=[common], help="merge error reports into one table")
    evaluate.add_argument("reports", nargs="*", type=Path, help="report.json files")
    sub.add_parser("pipeline", parents=[common], help="design, simulate, reconstruct and evaluate")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (if any) with command-line overrides applied on top"""
    data: Dict[str, Any] = storage.read_json(args.config) if args.config else {}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = str(args.out)
    if args.noise is not None:
        data["noise_level"] = args.noise
    if args.preset is not None:
        data["phantom"] = {"preset": args.preset}
    for flag in STRUCTURE_FLAGS:
        value = getattr(args, flag)
        if value is not None:
            data.setdefault("structure", {})[flag] = value
    return ExperimentConfig.model_validate(data)


def _print_design(summary: Dict[str, Any]) -> None:
    print(f"optimized SIN (k={summary['k']}): {summary['sin']:.6f}")
    print(f"random SIN    (k={summary['k']}): {summary['random_sin']:.6f}")
    print(" k  optimized     random")
    for (k, opt), (_, rnd) in zip(summary["profile"]["optimized"], summary["profile"]["random"]):
        print(f"{k:>2}  {opt:>9.6f}  {rnd:>9.6f}")


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        if args.command == "design":
            _print_design(experiment.run_design(config))
        elif args.command == "simulate":
            summary = experiment.run_simulate(config)
            print(f"max jumps per group: {summary['max_jumps_per_group']}")
        elif args.command == "reconstruct":
            report = experiment.run_reconstruct(config)
            print(experiment.format_table([experiment.report_row(report)]), end="")
        elif args.command == "evaluate":
            reports = args.reports or [Path(config.output_dir) / "report.json"]
            print(experiment.format_table(experiment.run_evaluate(reports)), end="")
        elif args.command == "pipeline":
            report = experiment.run_pipeline(config)
            print(experiment.format_table([experiment.report_row(report)]), end="")
    except DesignInfeasibleError as e:
        logger.error(str(e))
        print(f"design infeasible: {e}", file=sys.stderr)
        return EXIT_DESIGN_INFEASIBLE
    except (StorageError, OSError) as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO_ERROR
    except (ValidationError, ValueError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_DIMENSION_MISMATCH
    return EXIT_OK


def main() -> None:
    configure_logging()
    sys.exit(run())


if __name__ == "__main__":
    main()
