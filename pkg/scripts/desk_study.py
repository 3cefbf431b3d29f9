"""Desk-scale study: convergence, near-optimality and exploration safety over several seeds.

Usage: python scripts/desk_study.py [--seeds 0 1 2 3 4] [--predictors DIR] [--op-tail 50]
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ranslice.config import ScenarioConfig
from ranslice.experiments import run_controller
from ranslice.harness import build_predictors
from ranslice.predict import PredictorSet


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=None)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--predictors", default=None)
    ap.add_argument("--op-tail", type=int, default=50)
    ap.add_argument("--early", type=int, default=200)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    preds = PredictorSet.load(args.predictors) if args.predictors else build_predictors(cfg)
    tail = cfg.tail_windows
    results = []
    for s in args.seeds:
        soft = run_controller(cfg, s, preds, op_tail=args.op_tail)
        hard = run_controller(cfg, s, preds, hard=True, windows=args.early)
        row = {"seed": s, "tail_ok": soft.tail_ok_fraction(tail),
               "agent_utility": float(np.mean(soft.agent_utility)) if soft.agent_utility else None,
               "op_utility": float(np.mean(soft.op_utility)) if soft.op_utility else None,
               "early_sla_viol_hybrid": soft.sla_violations(args.early, cfg),
               "early_sla_viol_hard": hard.sla_violations(args.early, cfg),
               "seconds": soft.seconds}
        results.append(row)
        print(json.dumps(row), flush=True)
    if args.out:
        Path(args.out).write_text(json.dumps(results, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
