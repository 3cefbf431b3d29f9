"""Experiment orchestration: episode loops, the exhaustive-search baseline and reports."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import SlicingController, hard_initial_allocation
from .config import ScenarioConfig
from .env import CellEnv, QueueState, WindowTape
from .predict import PredictorSet, collect_traces, train_predictors
from .slicing import WindowAllocation, WindowMetrics

MODES = ("proposed", "hard_dqn", "op", "fixed")
SCHEMA_VERSION = 1
SCHEMA_LINE = f"# ranslice-metrics schema={SCHEMA_VERSION}"
COLUMNS = ["window", "mode", "w_embb", "w_urllc", "w_common", "q_embb", "q_urllc", "o_embb", "o_urllc",
           "v_embb", "v_urllc", "v_common", "se", "se_norm", "utility", "reward", "sla_met", "action", "eps",
           "n_urllc"]
REPORT_ROWS = (("Q_e", "q_embb"), ("Q_u", "q_urllc"), ("v_e", "v_embb"), ("v_u", "v_urllc"),
               ("v_c", "v_common"), ("o_e", "o_embb"), ("o_u", "o_urllc"), ("S/S_max", "se_norm"))


class SchemaError(ValueError):
    pass


# -- exhaustive search -----------------------------------------------------------

def op_candidates(total: int, step: int):
    """All (w_embb, w_urllc, w_common) with hard shares on a ``step`` grid summing to ``total``."""
    out = []
    for a in range(0, total + 1, step):
        for b in range(0, total - a + 1, step):
            out.append(WindowAllocation((a, b), total - a - b))
    return out


@dataclass
class SearchResult:
    allocation: WindowAllocation
    metrics: WindowMetrics
    state: QueueState
    utilities: dict = field(default_factory=dict)


def op_search(env: CellEnv, state: QueueState, tape: WindowTape, candidates) -> SearchResult:
    """Replay one recorded window under every candidate from the same queue state and
    keep the utility maximizer; ties go to the higher reward, then to the earlier candidate."""
    best = None
    utilities = {}
    for alloc in candidates:
        trial = state.clone()
        m = env.simulate(trial, alloc, tape)
        utilities[alloc.as_tuple()] = m.utility
        if best is None or (m.utility, m.reward) > (best.metrics.utility, best.metrics.reward):
            best = SearchResult(alloc, m, trial)
    best.utilities = utilities
    assert all(best.metrics.utility >= u for u in utilities.values())
    return best


def op_baseline(cfg: ScenarioConfig, grid_step: int | None = None, windows: int | None = None,
                candidates=None, env: CellEnv | None = None):
    """Per-window exhaustive search over a whole episode.

    Returns ``(allocations, metrics)``; each window starts from the queue state left
    by the previously chosen allocation.
    """
    env = env or CellEnv(cfg)
    cands = candidates or op_candidates(cfg.total_rbs, grid_step or cfg.op_grid_step)
    allocs, rows = [], []
    for _ in range(windows or cfg.episode_windows):
        tape = env.make_tape()
        res = op_search(env, env.state, tape, cands)
        env.state = res.state
        env.window += 1
        allocs.append(res.allocation)
        rows.append(res.metrics)
    return allocs, rows


# -- predictors ----------------------------------------------------------------

def build_predictors(cfg: ScenarioConfig, seed: int | None = None, epochs: int | None = None) -> PredictorSet:
    """Collect exogenous traces with a dedicated seed and train all three predictors."""
    seed = cfg.seed_scenario if seed is None else seed
    ds = collect_traces(cfg, 7919 + seed)
    return train_predictors(ds, cfg, seed=seed, epochs=epochs)


# -- episodes ------------------------------------------------------------------

@dataclass
class RunResult:
    mode: str
    metrics: list
    controller: SlicingController | None = None
    env: CellEnv | None = None


def run_experiment(cfg: ScenarioConfig, mode: str, predictors: PredictorSet | None = None,
                   windows: int | None = None, event_log: bool = False, on_window=None) -> RunResult:
    """Run ``windows`` (default: the configured episode length) under one controller."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    n = windows or cfg.episode_windows
    env = CellEnv(cfg, event_log=event_log)
    rows = []
    ctrl = None
    if mode == "op":
        cands = op_candidates(cfg.total_rbs, cfg.op_grid_step)
        for _ in range(n):
            tape = env.make_tape()
            res = op_search(env, env.state, tape, cands)
            env.state = res.state
            env.window += 1
            rows.append(res.metrics)
            if on_window:
                on_window(res.metrics, tape)
    elif mode == "fixed":
        if cfg.fixed_allocation:
            f = cfg.fixed_allocation
            alloc = WindowAllocation(tuple(f[:2]), f[2])
        else:
            alloc = hard_initial_allocation(cfg.total_rbs, cfg.hard_initial_frac)
        for _ in range(n):
            m, tape = env.step(alloc)
            rows.append(m)
            if on_window:
                on_window(m, tape)
    else:
        ctrl = SlicingController(env, predictors, hard_mode=(mode == "hard_dqn"))
        for _ in range(n):
            m, _ = ctrl.run_episode_step()
            rows.append(m)
            if on_window:
                on_window(m, ctrl.last_tape)
    return RunResult(mode, rows, ctrl, env)


# -- metrics files -------------------------------------------------------------

def _num(x) -> str:
    return format(float(x), ".10g")


def metrics_row(m: WindowMetrics, mode: str, cfg: ScenarioConfig) -> list:
    a = m.allocation
    sla = int(m.sla_met(cfg.slices()))
    return [m.window + 1, mode, a.hard[0], a.hard[1], a.common, _num(m.q[0]), _num(m.q[1]), _num(m.iso[0]),
            _num(m.iso[1]), _num(m.util[0]), _num(m.util[1]), _num(m.util_common), _num(m.se), _num(m.se_norm),
            _num(m.utility), _num(m.reward), sla, m.extras.get("action", -1), _num(m.extras.get("eps", 0.0)),
            m.extras.get("n_urllc", 0)]


def write_metrics(path, metrics, mode: str, cfg: ScenarioConfig):
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_LINE + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for m in metrics:
            w.writerow(metrics_row(m, mode, cfg))


def read_metrics(path) -> dict:
    """Column name -> list of strings; rejects files with another schema version."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != SCHEMA_LINE:
            raise SchemaError(f"{path}: unsupported metrics schema line {first!r}")
        reader = csv.DictReader(fh)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise SchemaError(f"{path}: missing columns {', '.join(missing)}")
        cols = {c: [] for c in reader.fieldnames}
        for row in reader:
            for c, v in row.items():
                cols[c].append(v)
    return cols


def summarize(cols: dict, tail: int) -> dict:
    """Table-style means of the last ``tail`` windows."""
    out = {}
    for label, col in REPORT_ROWS:
        vals = np.array(cols[col][-tail:], dtype=float)
        out[label] = float(np.mean(vals)) if len(vals) else math.nan
    return out


def summarize_metrics(metrics, tail: int) -> dict:
    cols = {"q_embb": [m.q[0] for m in metrics], "q_urllc": [m.q[1] for m in metrics],
            "v_embb": [m.util[0] for m in metrics], "v_urllc": [m.util[1] for m in metrics],
            "v_common": [m.util_common for m in metrics], "o_embb": [m.iso[0] for m in metrics],
            "o_urllc": [m.iso[1] for m in metrics], "se_norm": [m.se_norm for m in metrics]}
    return summarize(cols, tail)


def write_events(path, log):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ue", "arrival_tti", "completion_tti_or_drop"])
        for ue, arrival, done in log:
            w.writerow([ue, arrival, "drop" if done is None else done])


def emit_report(paths, out, tail: int = 200):
    """Write a Table-3 style summary (one column per run) and a reward-per-window series."""
    runs = []
    for p in paths:
        p = Path(p)
        f = p / "metrics.csv" if p.is_dir() else p
        cols = read_metrics(f)
        label = f"{cols['mode'][0] if cols['mode'] else 'empty'}:{f.parent.name}"
        runs.append((label, cols))
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric"] + [lab for lab, _ in runs])
        sums = [summarize(cols, tail) for _, cols in runs]
        for label, _ in REPORT_ROWS:
            w.writerow([label] + [_num(s[label]) for s in sums])
    series = out.with_name(out.stem + "_reward.csv")
    n = max((len(c["window"]) for _, c in runs), default=0)
    with open(series, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window"] + [lab for lab, _ in runs])
        for i in range(n):
            w.writerow([i + 1] + [c["reward"][i] if i < len(c["reward"]) else "" for _, c in runs])
    return out, series
