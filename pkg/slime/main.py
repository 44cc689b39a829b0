import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from slime.config import LOG_LEVEL, apply_overrides, load_config
from slime.errors import ConfigError, SlimeError
from slime.services.stage_runner import StageRunner
from slime.utils import setup_logging, to_jsonable

logger = logging.getLogger("main")

SUBCOMMANDS = {
    "train": "stratified folds, one toy model per fold, accuracy table",
    "attribute": "Integrated Gradients of the best fold model over the corpus",
    "import-attr": "validate an external attribution file and adopt it",
    "analyze": "tag tokens and test every category (feature_stats.csv)",
    "validate": "count-based baseline and method comparison",
    "report": "svg figures and csv/json tables",
    "all": "the full chain",
}


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="TOML run configuration")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides SLIME_SEED and the file)")
    common.add_argument("--out", type=Path, default=None, help="output directory (overrides [output] dir)")
    common.add_argument("--format", choices=["text", "json"], default="text", help="stage summary format on stdout")
    common.add_argument("--log-level", default=None, help=f"logging level (default {LOG_LEVEL})")

    parser = _Parser(prog="slime", description="Explain a transcript classifier with dictionary categories.")
    sub = parser.add_subparsers(dest="command", metavar="<subcommand>", parser_class=_Parser)
    for name, help_text in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _print_summary(summary: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(summary, sort_keys=True, default=to_jsonable))
        return
    for key, value in summary.items():
        print(f"{key}: {value}")


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("missing subcommand; expected one of " + ", ".join(SUBCOMMANDS))
        setup_logging(args.log_level or LOG_LEVEL)
        cfg = apply_overrides(load_config(args.config), seed=args.seed, out=args.out)
        summary = StageRunner(cfg).run(args.command)
    except SlimeError as e:
        logger.error(str(e))
        return e.exit_code
    _print_summary(summary, args.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
