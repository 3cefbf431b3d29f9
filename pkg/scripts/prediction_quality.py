"""Held-out one-step prediction errors for trained predictors.

Usage: python scripts/prediction_quality.py --predictors DIR [--config FILE]
"""
import argparse
import dataclasses
import json
import sys

from ranslice.config import ScenarioConfig
from ranslice.experiments import prediction_quality
from ranslice.predict import PredictorSet


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=None)
    ap.add_argument("--predictors", required=True)
    args = ap.parse_args()
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    pq = prediction_quality(cfg, PredictorSet.load(args.predictors))
    print(json.dumps(dataclasses.asdict(pq), indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
