"""Command line entry point: ``run``, ``report`` and ``gen-traces``."""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import harness
from .config import ScenarioConfig
from .env import cached_radio_map
from .mobility import BS2_POS
from .predict import PredictorSet, collect_traces, train_predictors
from .rng import RngRegistry
from .traffic import synth_embb_trace


def _load_config(path, seed=None) -> ScenarioConfig:
    cfg = ScenarioConfig.load(path)
    if seed is not None:
        cfg = cfg.replace(seed_scenario=seed, seed_agent=seed, seed_trace=seed)
    return cfg


def cmd_run(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.ini")
    predictors = None
    if args.mode in ("proposed", "hard_dqn"):
        if args.predictors:
            predictors = PredictorSet.load(args.predictors)
        else:
            predictors = harness.build_predictors(cfg)
            predictors.save(out / "predictors")

    pos_fh = open(out / "positions.csv", "w", newline="") if args.positions else None
    pos_w = csv.writer(pos_fh, lineterminator="\n") if pos_fh else None
    if pos_w:
        pos_w.writerow(["window", "ue_id", "x", "y"])

    def on_window(m, tape):
        if pos_w and tape is not None:
            for o in tape.end_obs:
                pos_w.writerow([m.window + 1, o.uid, f"{o.pos[0]:.3f}", f"{o.pos[1]:.3f}"])
        if args.verbose and (m.window + 1) % 100 == 0:
            print(f"window {m.window + 1}: utility {m.utility:.3f} reward {m.reward:.3f}", file=sys.stderr)

    try:
        res = harness.run_experiment(cfg, args.mode, predictors, event_log=args.events, on_window=on_window)
    finally:
        if pos_fh:
            pos_fh.close()
    harness.write_metrics(out / "metrics.csv", res.metrics, args.mode, cfg)
    summary = harness.summarize_metrics(res.metrics, cfg.tail_windows)
    (out / "summary.json").write_text(json.dumps({"mode": args.mode, "tail_windows": cfg.tail_windows,
                                                  "windows": len(res.metrics), "summary": summary}, indent=1))
    if res.controller is not None:
        res.controller.agent.save(out / "checkpoint")
    if args.events:
        harness.write_events(out / "events.csv", res.env.state.log)
    return 0


def cmd_report(args) -> int:
    harness.emit_report(args.inputs, args.out, args.tail)
    return 0


def cmd_gen_traces(args) -> int:
    cfg = _load_config(args.config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = collect_traces(cfg, cfg.seed_scenario)
    ds.to_csv(out / "dataset.csv")
    reg = RngRegistry(*cfg.seeds)
    trace = synth_embb_trace(range(cfg.n_embb_ues), cfg.episode_windows, reg.seed_for("trace", "embb"),
                             cfg.trace_base_bits, cfg.trace_amp_bits, cfg.trace_period, cfg.trace_ar_coef,
                             cfg.trace_noise_bits)
    trace.to_csv(out / "embb_trace.csv")
    rmap = cached_radio_map(BS2_POS, cfg.map_cell_m, cfg.shadow_sigma_db, cfg.decorrelation_m,
                            reg.seed_for("scenario", "shadowing"))
    rmap.save(out / "radio_map.bin")
    if args.train:
        train_predictors(ds, cfg, seed=cfg.seed_scenario).save(out / "predictors")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ranslice", description="RAN slicing simulator and learning controllers")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one controller for one seeded episode")
    r.add_argument("--config", required=True)
    r.add_argument("--mode", required=True, choices=harness.MODES)
    r.add_argument("--seed", type=int, default=None, help="overrides all three seeds")
    r.add_argument("--out", required=True)
    r.add_argument("--predictors", default=None, help="directory of pre-trained predictors")
    r.add_argument("--events", action="store_true", help="write the per-packet event log")
    r.add_argument("--positions", action="store_true", help="write per-window UE positions")
    r.add_argument("--verbose", action="store_true")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="summarize metrics files")
    rep.add_argument("--in", dest="inputs", nargs="+", required=True)
    rep.add_argument("--out", required=True)
    rep.add_argument("--tail", type=int, default=200)
    rep.set_defaults(func=cmd_report)

    g = sub.add_parser("gen-traces", help="export predictor training traces, the eMBB trace and the radio map")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--train", action="store_true", help="also train and save the predictors")
    g.set_defaults(func=cmd_gen_traces)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line diagnostic for any failure
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
