"""Command-line entry point: ``specklecolor {simulate,reconstruct,compare}``.

Exit codes: 0 success, 2 partial channel failure, 1 hard failure (bad
config, missing file, every channel failed).
"""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import ConfigError, load_config
from .experiments import EXIT_HARD, run_compare, run_reconstruct, run_simulate


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specklecolor",
        description="Reconstruct (color) images hidden behind a scattering layer from speckle.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory (created if needed)")
        p.add_argument("--seed", type=int, default=None, help="override the config's run seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (a performance hint; output does not depend on it)")

    common(sub.add_parser("simulate", help="simulate speckle images and a ground-truth manifest"))
    rec = sub.add_parser("reconstruct", help="reconstruct channels, composite and spectral cube")
    common(rec)
    rec.add_argument("--dump-phase", action="store_true",
                     help="also write per-angle phase slices as CSV")
    common(sub.add_parser("compare", help="triple correlation vs HIO over several seeds"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_HARD
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "simulate":
            return run_simulate(cfg, args.out)
        if args.command == "reconstruct":
            return run_reconstruct(cfg, args.out, args.threads, args.dump_phase)
        return run_compare(cfg, args.out, args.threads)
    except (ConfigError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HARD


if __name__ == "__main__":
    sys.exit(main())
