import argparse
from pathlib import Path

from hofilter.bench import ExperimentConfig

CONFIGS = Path(__file__).resolve().parent / "configs"


def parse(name, description, quick=None):
    """Load ``configs/<name>.json``; ``--quick`` applies the reduced overrides."""
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--out", default=f"results/{name}")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int)
    if quick:
        ap.add_argument("--quick", action="store_true", help="smaller run for a smoke test")
    args = ap.parse_args()
    extra = dict(quick) if quick and args.quick else {}
    cfg = ExperimentConfig.load(CONFIGS / f"{name}.json", out=args.out, seed=args.seed, **extra)
    return cfg, args.threads
