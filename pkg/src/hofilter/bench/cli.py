import argparse
import sys

from ..errors import FilterError
from .config import KINDS, ExperimentConfig
from .experiments import run


def build_parser():
    parser = argparse.ArgumentParser(prog="hofilter-bench",
                                     description="Run filtering experiments from a JSON config.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="JSON configuration file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="root seed, overrides the config")
        p.add_argument("--out", help="output directory, overrides the config")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads; results do not depend on this")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"kind": args.command, "seed": args.seed, "out": args.out}
    try:
        if args.config:
            cfg = ExperimentConfig.load(args.config, **overrides)
        else:
            cfg = ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
        run(cfg, threads=max(1, args.threads))
    except (FilterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{cfg.kind}: wrote {cfg.out}/{cfg.kind}.json (config {cfg.hash})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
