"""Entry point: ``python -m tabpfn_bridge [--model ...] [--device ...]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .models import load_model
from .server import serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="tabpfn-bridge",
        description="Serve an in-context tabular classifier over stdio JSON frames.",
    )
    parser.add_argument(
        "--model",
        choices=["tabpfn", "centroid"],
        default="tabpfn",
        help="Which classifier to expose (centroid is a dependency-free stand-in).",
    )
    parser.add_argument(
        "--device",
        choices=["cpu", "gpu"],
        default="cpu",
        help="Inference device for the tabpfn model.",
    )
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        model = load_model(args.model, device=args.device)
    except ImportError as exc:
        print(
            f"error: the {args.model!r} model is unavailable ({exc}); "
            f"install the 'tabpfn' extra or run with --model centroid",
            file=sys.stderr,
        )
        return 1
    serve(model)
    return 0


if __name__ == "__main__":
    sys.exit(main())
