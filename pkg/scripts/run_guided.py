"""Baseline vs oracle-seeded (and optionally model-seeded) solving on planted instances.

    python3 scripts/run_guided.py --instances 300 --model runs/learning/model.ckpt --out runs/guided
"""

import argparse
import json
import logging

from coreguide.experiments import GuidedConfig, run_guided
from coreguide.model import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--model", help="checkpoint for the model-seeded arm")
    ap.add_argument("--out", default="runs/guided")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    params = cfg = None
    if args.model:
        params, cfg = load_checkpoint(args.model)

    def progress(i, base, oracle):
        if i % 25 == 0:
            logging.info("%d: baseline %d conflicts, oracle %d", i, base.conflicts, oracle.conflicts)

    res = run_guided(GuidedConfig(instances=args.instances, seed=args.seed), params, cfg, args.out, progress)
    print(res.line())
    print(json.dumps(res.data, indent=1, default=str))


if __name__ == "__main__":
    main()
