"""Command-line entry point.

    lplr run CONFIG [--out DIR] [--seed N] [--dump-ntk]
    lplr profile --full-scale | --desk   (--paper is an alias of --full-scale)

Exit codes: 0 success, 1 error, 2 a checked invariant was violated
(including divergence).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config, print_profile, with_overrides
from .errors import LplrError

log = logging.getLogger("lplr")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lplr", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("config", help="path to a key=value or JSON config")
    run.add_argument("--out", default=None, help="output directory (default: ./out/<preset>)")
    run.add_argument("--seed", type=int, default=None, help="override experiment seed")
    run.add_argument("--dump-ntk", action="store_true", help="write every NTK snapshot as CSV")

    prof = sub.add_parser("profile", help="print a commented config profile")
    group = prof.add_mutually_exclusive_group(required=True)
    group.add_argument("--full-scale", "--paper", dest="paper", action="store_true", help="full-scale settings (not runnable at desk scale)")
    group.add_argument("--desk", action="store_true", help="desk-scale defaults")
    return ap


def run(config_path, out=None, seed=None, dump_ntk=False) -> int:
    from .experiments import run_experiment

    try:
        cfg = with_overrides(load_config(config_path), seed=seed)
        out_dir = Path(out) if out else Path("out") / cfg.preset
        summary = run_experiment(cfg, out_dir, dump_ntk)
    except (LplrError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if summary.get("diverged"):
        print("divergence detected; partial trajectory written", file=sys.stderr)
    if not summary.get("invariants_ok", False):
        print(f"invariant violation; see {out_dir / 'summary.json'}", file=sys.stderr)
        return 2
    print(f"wrote {out_dir}")
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "profile":
        sys.stdout.write(print_profile(full_scale=args.paper))
        return 0
    return run(args.config, args.out, args.seed, args.dump_ntk)


if __name__ == "__main__":
    sys.exit(main())
