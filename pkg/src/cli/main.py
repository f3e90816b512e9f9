"""``python main.py <command>``: argument parsing, exit codes and console output."""

import argparse
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from src.cli import commands
from src.cli.run_config import RunConfig, load_run_config, parse_override
from src.config import settings
from src.errors import ConfigError, LandmarkError
from src.logger import logger, set_level

console = Console(stderr=True)


class CommandParser(argparse.ArgumentParser):
    """Usage errors become ConfigError so they share the exit-code mapping."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def _global_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="TOML run configuration")
    parent.add_argument("--seed", type=int, help="seed for every seeded section")
    parent.add_argument("--out", help="output directory")
    parent.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    parent.add_argument("--threads", type=int, help="worker threads")
    parent.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parent.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    return parent


def build_parser() -> CommandParser:
    parent = _global_options()
    parser = CommandParser(prog="landmarks", description="Landmark discovery experiments")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CommandParser)

    synth = sub.add_parser("synthesize", parents=[parent], help="generate a synthetic cohort")
    synth.add_argument("--subjects", type=int)

    train = sub.add_parser("train", parents=[parent], help="train the landmark proposal network")
    train.add_argument("--cohort", required=True)
    train.add_argument("--epochs", type=int)

    evaluate = sub.add_parser("eval", parents=[parent], help="consistency metrics and overlays")
    evaluate.add_argument("--cohort", required=True)
    evaluate.add_argument("--checkpoint")
    evaluate.add_argument("--ground-truth", action="store_true", help="evaluate the synthetic ground-truth landmarks")
    evaluate.add_argument("--pairs", type=int)

    classify = sub.add_parser("classify", parents=[parent], help="Procrustes + DWD progression classifier")
    classify.add_argument("--cohort", required=True)
    classify.add_argument("--checkpoint")
    classify.add_argument("--labels", help="CSV with subject_id,label (defaults to the cohort labels)")
    classify.add_argument("--landmarks-top-k", type=int)
    classify.add_argument("--cross-validate", action="store_true")
    classify.add_argument("--topk-curve", action="store_true")
    classify.add_argument("--ground-truth", action="store_true")

    sal = sub.add_parser("saliency", parents=[parent], help="input-gradient map of one landmark")
    sal.add_argument("--checkpoint", required=True)
    sal.add_argument("--image", required=True)
    sal.add_argument("--index", type=int, required=True)

    degeneracy = sub.add_parser("degeneracy", parents=[parent],
                                help="landmark spread with and without the reconstruction loss")
    degeneracy.add_argument("--cohort", required=True)
    degeneracy.add_argument("--steps", type=int, default=200)

    experiment = sub.add_parser("experiment", parents=[parent], help="synthesize, train, evaluate and classify")
    experiment.add_argument("--ablation", action="store_true", help="also train without the discovery loss")
    experiment.add_argument("--seeds", type=int, nargs="+",
                            help="repeat the ablation for each seed (implies --ablation)")
    return parser


def _command_overrides(args: argparse.Namespace) -> List[str]:
    extra = []
    if getattr(args, "epochs", None) is not None:
        extra.append(f"train.epochs={args.epochs}")
    if getattr(args, "pairs", None) is not None:
        extra.append(f"eval.num_pairs={args.pairs}")
    if getattr(args, "landmarks_top_k", None) is not None:
        extra.append(f"classify.top_k={args.landmarks_top_k}")
    if getattr(args, "cross_validate", False):
        extra.append("classify.cross_validate=true")
    return extra


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = [parse_override(text) for text in [*args.overrides, *_command_overrides(args)]]
    return load_run_config(args.config, overrides, seed=args.seed, subjects=getattr(args, "subjects", None))


def _require_out(args: argparse.Namespace) -> str:
    if not args.out:
        raise ConfigError(f"{args.command}: --out is required")
    return args.out


def _dispatch(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    out = _require_out(args)
    if args.command == "synthesize":
        return commands.cmd_synthesize(config, out, args.force)
    if args.command == "train":
        return commands.cmd_train(config, args.cohort, out, args.force)
    if args.command == "eval":
        return commands.cmd_eval(config, args.cohort, out, args.checkpoint, args.ground_truth, args.force)
    if args.command == "classify":
        return commands.cmd_classify(config, args.cohort, out, args.checkpoint, args.labels, args.ground_truth,
                                     args.topk_curve, args.force)
    if args.command == "saliency":
        return commands.cmd_saliency(config, args.checkpoint, args.image, args.index, out, args.force)
    if args.command == "degeneracy":
        return commands.cmd_degeneracy(config, args.cohort, out, args.steps, args.force)
    from src.agents import ExperimentOrchestrator

    orchestrator = ExperimentOrchestrator(config, out, force=args.force)
    if args.ablation or args.seeds:
        result = orchestrator.run_ablation(args.seeds)
    else:
        result = orchestrator.run()
    if result.get("status") != "success":
        raise result.get("exception") or LandmarkError(str(result.get("error")))
    return result


def render_result(command: str, result: Dict[str, Any]) -> Table:
    table = Table(title=f"{command} finished")
    table.add_column("key", style="cyan")
    table.add_column("value", justify="right")
    for key, value in result.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        elif isinstance(value, (dict, list)):
            continue
        table.add_row(key, str(value))
    return table


def main(argv: Optional[Sequence[str]] = None, runner: Optional[Callable] = None) -> int:
    """Parse ``argv`` and run one command; returns the process exit code."""
    runner = runner or _dispatch
    try:
        args = build_parser().parse_args(argv)
        if args.log_level:
            set_level(args.log_level)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError(f"--threads must be >= 1, got {args.threads}")
            settings.threads = args.threads
        config = resolve_config(args)
        result = runner(args, config)
    except LandmarkError as exc:
        logger.error("Command failed", error=str(exc), kind=type(exc).__name__)
        console.print(f"[red]error:[/red] {exc}")
        return exc.exit_code
    except ValidationError as exc:
        console.print(f"[red]invalid configuration:[/red] {exc}")
        return ConfigError.exit_code
    console.print(render_result(args.command, result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
