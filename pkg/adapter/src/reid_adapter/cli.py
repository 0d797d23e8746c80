"""adapter CLI: `adapter detect` and `adapter embed`."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import AdapterConfig, AdapterError, load_config
from .pipeline import detect, embed

log = logging.getLogger("reid_adapter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adapter",
        description="Run detection/encoding models over frame directories and "
                    "emit pipeline interchange files")
    sub = parser.add_subparsers(dest="command", required=True)

    p_detect = sub.add_parser("detect", help="emit detections.jsonl for a frame tree")
    p_detect.add_argument("--frames", type=Path, required=True)
    p_detect.add_argument("--out", type=Path, required=True)
    p_detect.add_argument("--config", type=Path, default=None)

    p_embed = sub.add_parser("embed", help="emit an .emb embedding store for detected frames")
    p_embed.add_argument("--frames", type=Path, required=True)
    p_embed.add_argument("--detections", type=Path, required=True)
    p_embed.add_argument("--out", type=Path, required=True)
    p_embed.add_argument("--config", type=Path, default=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    config = load_config(args.config) if args.config else AdapterConfig()
    try:
        if args.command == "detect":
            detect(args.frames, args.out, config)
        else:
            embed(args.frames, args.detections, args.out, config)
    except AdapterError as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
