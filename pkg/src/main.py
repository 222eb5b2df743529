"""Command-line entry point: train, eval, certify, sweep and plot-data.

Exit status: 0 success, 1 failure, 2 partial sweep failure, 3 soundness
violation (an attack flipped a certified sample).
"""

import argparse
import logging
import sys
import time
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from src import config
from src.core.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.core.errors import SoundnessError, VQCError
from src.core.evaluation import certify_dataset, evaluate
from src.core.run_config import CONFIG_KEYS, RunConfig, load_run_config
from src.core.sweep import run_sweep
from src.core.trainer import Trainer
from src.utils.result_writer import (
    CERTIFY_COLUMNS,
    SWEEP_COLUMNS,
    ResultWriter,
)
from src.utils.rich_logging import configure_logging
from src.utils.rich_prompts import should_overwrite, show_report, show_rows

load_dotenv()

configure_logging(config.LOG_LEVEL)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARTIAL = 2
EXIT_SOUNDNESS = 3

COMMANDS: tuple[str, ...] = ("train", "eval", "certify", "sweep")


def _run_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="TOML or JSON run configuration")
    parent.add_argument("--dataset", choices=("mnist", "fashion_mnist", "kmnist"))
    parent.add_argument("--data-root", dest="data_root")
    parent.add_argument("--output-dir", dest="output_dir")
    parent.add_argument("--checkpoint", help="model file path")
    parent.add_argument("--qubits", type=int)
    parent.add_argument("--classes", type=int)
    parent.add_argument("--layers", type=int)
    parent.add_argument("--rotation", choices=("RY", "RX", "RZ"))
    parent.add_argument("--epochs", type=int)
    parent.add_argument("--lr", type=float)
    parent.add_argument("--weight-decay", dest="weight_decay", type=float)
    parent.add_argument("--batch-size", dest="batch_size", type=int)
    parent.add_argument("--kappa", type=float, help="target clean-loss weight")
    parent.add_argument("--epsilon", type=float, help="L-infinity budget")
    parent.add_argument("--warmup", type=int)
    parent.add_argument("--ramp", type=int)
    parent.add_argument("--loss", choices=("combined_ce", "margin"))
    parent.add_argument("--gamma", type=float)
    parent.add_argument("--arithmetic", choices=("interval", "affine"))
    parent.add_argument(
        "--perturb-imag", dest="perturb_imag", action="store_true", default=None
    )
    parent.add_argument("--seed", type=int)
    parent.add_argument("--train-limit", dest="train_limit", type=int)
    parent.add_argument("--test-limit", dest="test_limit", type=int)
    parent.add_argument("--attack-steps", dest="attack_steps", type=int)
    parent.add_argument("--attack-step-size", dest="attack_step_size", type=float)
    parent.add_argument("--attack-restarts", dest="attack_restarts", type=int)
    parent.add_argument("--jobs", type=int, help="parallel sweep rows")
    parent.add_argument("--yes", action="store_true", help="overwrite without asking")
    parent.add_argument("--no-progress", dest="no_progress", action="store_true")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqc-certify",
        description="Certified training and evaluation of quantum classifiers.",
    )
    parser.add_argument("--log-level", dest="log_level")
    commands = parser.add_subparsers(dest="command", required=True)
    parent = _run_options()
    commands.add_parser("train", parents=[parent], help="train and save a model")
    commands.add_parser("eval", parents=[parent], help="test/certified/PGD accuracy")
    commands.add_parser("certify", parents=[parent], help="per-sample certification")
    commands.add_parser("sweep", parents=[parent], help="train and evaluate a grid")
    plot = commands.add_parser("plot-data", help="reshape a CSV into tidy rows")
    plot.add_argument("source", help="sweep.csv or history.csv")
    plot.add_argument("destination", help="tidy output CSV")
    plot.add_argument("--kind", choices=("sweep", "history"))
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {key: value for key, value in vars(args).items() if key in CONFIG_KEYS}


def _write_resolved(cfg: RunConfig) -> None:
    path = Path(cfg.output_dir) / "resolved_config.json"
    ResultWriter.write_json(path, cfg.to_dict())


def _row_context(cfg: RunConfig, wall_time: float) -> dict[str, Any]:
    return {
        "dataset": cfg.dataset,
        "qubits": cfg.qubits,
        "classes": cfg.classes,
        "layers": cfg.layers,
        "loss": cfg.loss,
        "kappa": cfg.kappa,
        "seed": cfg.seed,
        "wall_time": round(wall_time, 3),
    }


def _command_train(cfg: RunConfig, *, assume_yes: bool, show_progress: bool) -> int:
    _write_resolved(cfg)
    model_path = cfg.checkpoint_path
    interactive = sys.stdin.isatty()
    if model_path.exists() and not should_overwrite(
        str(model_path), assume_yes=assume_yes, interactive=interactive
    ):
        logger.warning("model=%s kept; training skipped", model_path)
        return EXIT_FAILURE

    spec = cfg.circuit_spec()
    train_set = cfg.load_split("train")
    history_path = Path(cfg.output_dir) / "history.csv"
    history_path.unlink(missing_ok=True)
    trainer = Trainer(spec, cfg.train_config(), show_progress=show_progress)
    result = trainer.train(train_set, history_path=history_path)

    final = result.history[-1].to_dict()
    save_checkpoint(
        model_path,
        spec,
        result.params,
        metadata={
            "dataset": cfg.dataset,
            "train_samples": len(train_set),
            "duration_seconds": result.duration_seconds,
            "final_epoch": final,
            "config": cfg.to_dict(),
        },
    )
    show_report("Training", final)
    return EXIT_OK


def _align_with_model(cfg: RunConfig) -> tuple[RunConfig, Checkpoint]:
    checkpoint = load_checkpoint(cfg.checkpoint_path)
    spec = checkpoint.spec
    aligned = replace(
        cfg,
        qubits=spec.n_qubits,
        classes=spec.n_classes,
        layers=spec.n_layers,
        rotation=str(spec.rotation_kind),
    )
    if (aligned.qubits, aligned.classes, aligned.layers) != (
        cfg.qubits,
        cfg.classes,
        cfg.layers,
    ):
        logger.info(
            "using model architecture qubits=%d classes=%d layers=%d",
            spec.n_qubits,
            spec.n_classes,
            spec.n_layers,
        )
    return aligned, checkpoint


def _command_eval(cfg: RunConfig, *, show_progress: bool) -> int:
    start_time = time.perf_counter()
    cfg, checkpoint = _align_with_model(cfg)
    _write_resolved(cfg)
    test_set = cfg.load_split("test")
    report = evaluate(
        checkpoint.spec,
        checkpoint.params,
        test_set,
        cfg.epsilon,
        cfg.arithmetic,
        cfg.attack_config(),
        perturb_imag=cfg.perturb_imag,
        show_progress=show_progress,
    )
    output = Path(cfg.output_dir)
    ResultWriter.write_json(output / "eval_report.json", report.to_dict())
    row = report.to_csv_row(_row_context(cfg, time.perf_counter() - start_time))
    ResultWriter.write_csv(output / "eval.csv", SWEEP_COLUMNS, [row])
    show_report(
        "Evaluation",
        {
            "test_acc": report.test_acc,
            "cert_acc": report.cert_acc,
            "pgd_acc": report.pgd_acc,
            "epsilon": report.epsilon,
            "arithmetic": str(report.arithmetic),
        },
    )
    return EXIT_OK


def _command_certify(cfg: RunConfig, *, show_progress: bool) -> int:
    cfg, checkpoint = _align_with_model(cfg)
    _write_resolved(cfg)
    test_set = cfg.load_split("test")
    result = certify_dataset(
        checkpoint.spec,
        checkpoint.params,
        test_set,
        cfg.epsilon,
        cfg.arithmetic,
        perturb_imag=cfg.perturb_imag,
        show_progress=show_progress,
    )
    path = Path(cfg.output_dir) / "certify.csv"
    ResultWriter.write_csv(path, CERTIFY_COLUMNS, result.rows())
    show_report(
        "Certification",
        {
            "samples": len(test_set),
            "cert_acc": result.accuracy,
            "epsilon": cfg.epsilon,
            "arithmetic": cfg.arithmetic,
        },
    )
    return EXIT_OK


def _command_sweep(cfg: RunConfig, *, show_progress: bool) -> int:
    _write_resolved(cfg)
    result = run_sweep(
        cfg, Path(cfg.output_dir) / "sweep.csv", show_progress=show_progress
    )
    show_rows("Sweep", SWEEP_COLUMNS, result.rows)
    logger.info(
        "sweep summary - successes: %d, failures: %d, duration: %.2fs",
        result.successes,
        result.failures,
        result.duration_seconds,
    )
    if result.failures == 0:
        return EXIT_OK
    if result.successes == 0:
        logger.error("every sweep row failed")
        return EXIT_FAILURE
    logger.warning("some sweep rows failed; check the log and rerun them")
    return EXIT_PARTIAL


def run(
    command: str,
    cfg: RunConfig,
    *,
    assume_yes: bool = False,
    show_progress: bool = True,
) -> int:
    """Execute one command and return its exit status."""
    if command not in COMMANDS:
        logger.error("unknown command %r", command)
        return EXIT_FAILURE
    try:
        if command == "train":
            return _command_train(
                cfg, assume_yes=assume_yes, show_progress=show_progress
            )
        if command == "eval":
            return _command_eval(cfg, show_progress=show_progress)
        if command == "certify":
            return _command_certify(cfg, show_progress=show_progress)
        return _command_sweep(cfg, show_progress=show_progress)
    except SoundnessError:
        logger.exception("soundness violation during %s", command)
        return EXIT_SOUNDNESS
    except (VQCError, FileNotFoundError):
        logger.exception("%s failed", command)
        return EXIT_FAILURE


def _plot_data(args: argparse.Namespace) -> int:
    try:
        count = ResultWriter.emit_plot_data(args.source, args.destination, args.kind)
    except (VQCError, FileNotFoundError):
        logger.exception("plot-data failed")
        return EXIT_FAILURE
    logger.info("tidy rows=%d written to %s", count, args.destination)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> None:
    """Parse arguments, run the command and exit with its status."""
    args = build_parser().parse_args(argv)
    if args.log_level:
        configure_logging(args.log_level)

    if args.command == "plot-data":
        status = _plot_data(args)
    else:
        try:
            cfg = load_run_config(args.config, _overrides(args))
        except (VQCError, FileNotFoundError):
            logger.exception("invalid configuration")
            sys.exit(EXIT_FAILURE)
            return
        status = run(
            args.command,
            cfg,
            assume_yes=args.yes,
            show_progress=not args.no_progress,
        )

    if status != EXIT_OK:
        sys.exit(status)


if __name__ == "__main__":  # pragma: no cover
    main()
