"""Train on a planted-core corpus and compare with the constant-majority predictor.

    python3 scripts/run_learning.py --train 2000 --test 500 --out runs/learning
"""

import argparse
import json
import logging
from dataclasses import asdict
from pathlib import Path

from coreguide.experiments import LearningConfig, run_learning
from coreguide.model import ModelConfig, save_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="lec-like")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/learning")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    lc = LearningConfig(args.preset, args.train, args.test, args.seed, ModelConfig(epochs=args.epochs, seed=args.seed))
    res = run_learning(lc, progress=lambda r: logging.info("epoch %d train %.5f val %.5f", r.epoch, r.train_loss, r.val_loss))
    print(res.line())

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(res.data["params"], lc.model, out / "model.ckpt")
    summary = {k: v for k, v in res.data.items() if k not in ("params", "config", "history")}
    summary["config"] = asdict(lc)
    summary["history"] = [asdict(h) for h in res.data["history"]]
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=str) + "\n")


if __name__ == "__main__":
    main()
