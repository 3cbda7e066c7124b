# -*- coding: utf-8 -*-
"""CompSim command line interface.

Each subcommand runs one pipeline step on explicit directories; ``run`` drives the cached stage pipeline inside a run
directory. Exit codes: 0 on success, 2 on validation errors (configuration, dataset schema, missing stage
prerequisites), 1 on any other failure.

Attributes:
    logger (Logger): Module level logger for usage and debugging.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from dotenv import load_dotenv

from compsim.calib import board_from_config, calibrate_rig
from compsim.config import ExperimentConfig, load_config
from compsim.dataset import load_index, load_pairs
from compsim.exceptions import CompSimException, CompSimValidationError, ConfigValidationError, PolicyError
from compsim.logger import get_logger, set_package_log_level
from compsim.metrics import evaluate_suite, write_report_csv
from compsim.models import REGIME_NAMES, SUITE_KINDS, TaskSpec
from compsim.neuralsim import NeuralSimParams, last_finite_dir, synthesize_dataset, train
from compsim.pipeline import (
    STAGES, generate_real_dataset, generate_sim_dataset, load_task_records, run_pipeline, write_tables
)
from compsim.policy import PolicyParams, build_regime, build_suites, evaluate_regimes, train_policy, write_regime_csv

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2


def _labels(value: str) -> List[str]:
    return [label.strip() for label in value.split(",") if label.strip()]


def _board(value: str) -> List[int]:
    try:
        rows, cols = (int(part) for part in value.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RxC inner corners such as 6x9, got {value!r}")
    return [rows, cols]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compsim", description="Real-sim-real compositional simulation pipeline.")
    parser.add_argument("--config", type=Path, default=None, help="Experiment configuration JSON file")
    parser.add_argument("--jobs", type=int, default=None, help="Worker cap for parallel steps")
    parser.add_argument("--log-level", default=None, help="Log level (overrides COMPSIM_LOG_LEVEL)")
    parser.add_argument("--env-file", type=Path, default=None, help=".env file to load before running")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen_sim = subparsers.add_parser("gen-sim", help="Schedule and render sim episodes")
    gen_sim.add_argument("--tasks", type=_labels, required=True, help="Comma separated task labels")
    gen_sim.add_argument("--episodes", type=int, required=True, help="Episodes per task label")
    gen_sim.add_argument("--seed", type=int, default=0, help="Seed of the first episode")
    gen_sim.add_argument("--region", choices=["in_domain", "ood_spatial"], default="in_domain")
    gen_sim.add_argument("--object-variant", choices=["canonical", "ood_object"], default="canonical")
    gen_sim.add_argument("--out", type=Path, required=True)

    gen_real = subparsers.add_parser("gen-real", help="Render the real channel of stored sim episodes")
    gen_real.add_argument("--in", dest="sim_dir", type=Path, required=True)
    gen_real.add_argument("--out", type=Path, required=True)

    calibrate = subparsers.add_parser("calibrate", help="Recover the camera from a checkerboard rendering")
    calibrate.add_argument("--board", type=_board, default=None, help="Inner corners as RxC")
    calibrate.add_argument("--square", type=float, default=None, help="Square size in meters")
    calibrate.add_argument("--out", type=Path, required=True, help="camera.json destination")

    train_ns = subparsers.add_parser("train-neuralsim", help="Train the neural simulator on paired episodes")
    train_ns.add_argument("--data", type=Path, required=True, help="Dataset root holding sim (and real) episodes")
    train_ns.add_argument("--real", type=Path, default=None, help="Separate dataset root holding the real episodes")
    train_ns.add_argument("--out", type=Path, required=True)

    synthesize = subparsers.add_parser("synthesize", help="Translate sim episodes into pseudo-real episodes")
    synthesize.add_argument("--model", type=Path, required=True)
    synthesize.add_argument("--sim", type=Path, required=True)
    synthesize.add_argument("--variant", required=True, help="Guidance variant (cd, vd, full)")
    synthesize.add_argument("--out", type=Path, required=True)

    eval_video = subparsers.add_parser("eval-video", help="Compare predicted episodes with real references")
    eval_video.add_argument("--pred", type=Path, required=True)
    eval_video.add_argument("--ref", type=Path, required=True)
    eval_video.add_argument("--variant", default=None, help="Variant name for the report rows")
    eval_video.add_argument("--out", type=Path, required=True)

    train_pol = subparsers.add_parser("train-policy", help="Behavior-clone policies under a data-mixture regime")
    train_pol.add_argument("--regime", choices=REGIME_NAMES, required=True)
    train_pol.add_argument("--tasks", type=_labels, default=None, help="Task labels (configured policy tasks)")
    train_pol.add_argument("--real", type=Path, default=None, help="Dataset root with real demonstrations")
    train_pol.add_argument("--sim", type=Path, default=None, help="Dataset root with sim demonstrations")
    train_pol.add_argument("--pseudo", type=Path, default=None, help="Dataset root with pseudo demonstrations")
    train_pol.add_argument("--out", type=Path, required=True)

    eval_pol = subparsers.add_parser("eval-policy", help="Evaluate trained policies on seeded trial suites")
    eval_pol.add_argument("--policy", type=Path, required=True, help="Policy directory (one sub-directory per task)")
    eval_pol.add_argument("--suite", choices=SUITE_KINDS, action="append", default=None)
    eval_pol.add_argument("--trials", type=int, default=None)
    eval_pol.add_argument("--out", type=Path, required=True)

    report = subparsers.add_parser("report", help="Write the realism and policy success tables of a run")
    report.add_argument("--run", type=Path, required=True)
    report.add_argument("--out", type=Path, required=True)

    run = subparsers.add_parser("run", help="Run pipeline stages inside a run directory")
    run.add_argument("--stages", nargs="+", choices=STAGES, default=None)
    run.add_argument("--run-dir", type=Path, default=None)
    return parser


def _policy_directories(policy_dir: Path) -> Dict[str, Path]:
    if not policy_dir.is_dir():
        raise PolicyError(f"Policy directory {policy_dir} does not exist.", path=str(policy_dir))
    if (policy_dir / "checkpoint.json").is_file():
        return {"": policy_dir}
    return {child.name: child for child in sorted(policy_dir.iterdir()) if (child / "checkpoint.json").is_file()}


def _train_policy(args: argparse.Namespace, cfg: ExperimentConfig) -> None:
    regime = build_regime(args.regime, cfg)
    roots = {"real": args.real, "sim": args.sim, "pseudo": args.pseudo}
    missing = [source for source in regime.counts if roots[source] is None]
    if missing:
        raise PolicyError(f"Regime {regime.name} needs --{' --'.join(missing)} dataset root(s).")
    indices = {source: load_index(roots[source]) for source in regime.counts}
    for label in args.tasks or cfg.tasks["policy"]:
        episodes = {source: load_task_records(index, source, label) for source, index in indices.items()}
        params = train_policy(regime, episodes, cfg)
        params.save(args.out / label)


def _eval_policy(args: argparse.Namespace, cfg: ExperimentConfig) -> None:
    policies: Dict[str, Dict[str, Optional[PolicyParams]]] = {}
    labels = []
    for name, directory in _policy_directories(args.policy).items():
        params = PolicyParams.load(directory)
        label = params.task or name
        regime = params.regime.name if params.regime is not None else args.policy.name
        policies.setdefault(regime, {})[label] = params
        labels.append(label)
    if not policies:
        raise PolicyError(f"No policy checkpoints found under {args.policy}.")
    rows = evaluate_regimes(policies, build_suites(cfg, args.trials, args.suite), sorted(set(labels)), cfg)
    write_regime_csv(rows, args.out)


def dispatch(args: argparse.Namespace, cfg: ExperimentConfig) -> None:
    command = args.command
    if command == "gen-sim":
        plan = [(TaskSpec.from_label(label, args.region, args.object_variant), args.seed + i)
                for label in args.tasks for i in range(args.episodes)]
        generate_sim_dataset(plan, args.out, cfg)
    elif command == "gen-real":
        generate_real_dataset(args.sim_dir, args.out, cfg)
    elif command == "calibrate":
        board = board_from_config(cfg, *(args.board or [None, None]), square_size=args.square)
        calibrate_rig(cfg, board=board, out_file=args.out)
    elif command == "train-neuralsim":
        pairs = load_pairs(load_index(args.data), load_index(args.real) if args.real else None)
        params, _ = train(pairs, cfg, checkpoint_dir=last_finite_dir(args.out))
        params.save(args.out)
    elif command == "synthesize":
        params = NeuralSimParams.load(args.model)
        synthesize_dataset(params, load_index(args.sim), cfg.guidance(args.variant), cfg, args.out, args.variant)
    elif command == "eval-video":
        rows, _ = evaluate_suite(load_index(args.pred), load_index(args.ref), variant=args.variant)
        write_report_csv(rows, args.out)
    elif command == "train-policy":
        _train_policy(args, cfg)
    elif command == "eval-policy":
        _eval_policy(args, cfg)
    elif command == "report":
        write_tables(args.run / "report.csv", args.run / "regime_results.csv", args.out)
    elif command == "run":
        run_dir = run_pipeline(cfg, args.stages, args.run_dir)
        logger.info(f"Run directory: {run_dir}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point.

    Args:
        argv (Sequence[str], optional): Arguments (sys.argv by default).

    Returns:
        int: Process exit code.

    """
    args = build_parser().parse_args(argv)
    if args.env_file:
        load_dotenv(dotenv_path=args.env_file)
    else:
        load_dotenv()
    set_package_log_level(args.log_level)

    try:
        overrides = {"jobs": args.jobs} if args.jobs is not None else None
        cfg = load_config(args.config, overrides=overrides)
        if args.command == "synthesize" and args.variant not in cfg.neuralsim["variants"]:
            raise ConfigValidationError([f"unknown guidance variant \"{args.variant}\"; configured variants are "
                                         f"{sorted(cfg.neuralsim['variants'])}"])
        dispatch(args, cfg)
    except CompSimValidationError as err:
        logger.error(str(err))
        return EXIT_VALIDATION
    except CompSimException as err:
        logger.error(f"{err.__class__.__name__}: {err}")
        return EXIT_FAILURE
    except Exception as err:
        logger.exception(f"Unexpected failure: {err}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
