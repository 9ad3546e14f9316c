"""Paired ablations over graph type, supervision signal and loss on one corpus.

    python3 scripts/run_ablation.py --instances 500 --epochs 10 --out runs/ablation
"""

import argparse
import logging

from coreguide.bench import format_ablation
from coreguide.experiments import AblationConfig, run_ablation_suite
from coreguide.model import ModelConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    ac = AblationConfig(instances=args.instances, seed=args.seed, model=ModelConfig(epochs=args.epochs, seed=args.seed))
    res = run_ablation_suite(ac, out_dir=args.out, progress=lambda r: logging.info("%s/%s done", r["axis"], r["arm"]))
    print(format_ablation(res.data["rows"]))
    print(res.line())


if __name__ == "__main__":
    main()
