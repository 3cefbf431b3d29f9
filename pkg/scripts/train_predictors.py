"""Generate mobility/demand traces and train the three LSTM predictors.

Usage: python scripts/train_predictors.py --out DIR [--config FILE] [--seed N] [--epochs N]
"""
import argparse
import json
import sys
import time

from ranslice.config import ScenarioConfig
from ranslice.harness import build_predictors


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    t0 = time.perf_counter()
    preds = build_predictors(cfg, seed=args.seed, epochs=args.epochs)
    preds.save(args.out)
    final = {k: v[-1] for k, v in preds.losses.items()}
    print(json.dumps({"final_loss": final, "seconds": round(time.perf_counter() - t0, 1)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
