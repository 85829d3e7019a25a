"""Command-line entry point: ``litscape <stage> --config cfg.yaml --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import LitscapeError
from .pipeline import STAGES, run_pipeline, run_stage

log = logging.getLogger("litscape")


def demo_config_path() -> Path:
    """Config for the bundled 12-paper synthetic corpus (mock extraction, lookup embeddings)."""
    return Path(str(resources.files("litscape") / "data" / "synthetic" / "synthetic.yaml"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config file (YAML or JSON)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(
        prog="litscape",
        description="Extract objectives, methods and datasets from papers and analyze their co-occurrence.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    sub.add_parser("demo", parents=[common], help="run the full pipeline on the bundled synthetic corpus")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config_path = args.config
        if args.command == "demo" and config_path is None:
            config_path = demo_config_path()
        overrides = {"output_dir": str(Path(args.out).resolve())} if args.out else None
        cfg = load_config(config_path, overrides)
        if args.command in ("run", "demo"):
            code = run_pipeline(cfg)
        else:
            code = run_stage(args.command, cfg)
    except LitscapeError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"litscape: {stage}: " if stage else "litscape: "
        print(prefix + str(exc), file=sys.stderr)
        return exc.exit_code
    if code == 0:
        print(f"ok: artifacts in {cfg.output_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
