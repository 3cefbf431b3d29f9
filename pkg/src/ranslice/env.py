"""Single-cell slicing simulator: mobility, radio, traffic and TTI scheduling.

A window is simulated in two stages. ``make_tape`` advances the exogenous
processes (mobility, channel, arrivals) and records them; ``simulate`` then
plays the tape against a queue state under one ``WindowAllocation``. The
split lets the exhaustive-search baseline replay the very same window under
every candidate allocation.
"""
from __future__ import annotations

import copy
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from . import radio
from .config import ScenarioConfig
from .mobility import BS2_POS, COVERAGE_M, MobilityModel, RoadTopology
from .radio import LinkBudget, RadioMap, ShortPacketParams
from .rng import RngRegistry
from .sched import allocate_tti, rr_order
from .slicing import (UeWindowStats, WindowAllocation, WindowMetrics, isolation, reward, sla_ratio,
                      utility, utilization)
from .traffic import (URLLC_PACKET_BITS, URLLC_PERIOD_TTI, FlowQueue, Packet, TrafficTrace, generate_embb,
                      synth_embb_trace)

EMBB_SLICE, URLLC_SLICE = 0, 1
COMMON_PRIORITY = (URLLC_SLICE, EMBB_SLICE)


@functools.lru_cache(maxsize=4)
def cached_radio_map(bs_pos, cell, sigma, decorr, seed) -> RadioMap:
    return RadioMap.synthesize(bs_pos, COVERAGE_M, cell, sigma, decorr, seed)


@dataclass
class UeObs:
    uid: int
    slice_id: int
    pos: tuple
    sinr_db: float
    demand_bits: int = 0


@dataclass
class StepInfo:
    covered: frozenset
    by_mod: list
    bpr: dict
    urllc_cap: dict


@dataclass
class WindowTape:
    window: int
    steps: list
    embb_arrivals: dict
    embb_offered: dict
    end_obs: list
    vehicles: dict
    pedestrians: dict


@dataclass
class QueueState:
    queues: dict
    embb_ids: list
    rr_cursor: int | None = None
    log: list | None = None

    def clone(self) -> "QueueState":
        return copy.deepcopy(self)


class CellEnv:
    def __init__(self, cfg: ScenarioConfig, trace: TrafficTrace | None = None, event_log: bool = False):
        self.cfg = cfg
        self.reg = RngRegistry(*cfg.seeds)
        self.lb = LinkBudget(cfg.tx_power_dbm, cfg.noise_per_rb_dbm, cfg.total_rbs, cfg.rb_bandwidth_hz)
        self.sp = ShortPacketParams(cfg.error_prob, cfg.symbols_per_rb_tti)
        self.bs_pos = BS2_POS
        self.topo = RoadTopology.default(self.reg.stream("scenario", "lights"))
        self.rmap = cached_radio_map(self.bs_pos, cfg.map_cell_m, cfg.shadow_sigma_db, cfg.decorrelation_m,
                                     self.reg.seed_for("scenario", "shadowing"))
        self.mob = MobilityModel(self.topo, self.reg.stream("scenario", "mobility"), cfg.n_embb_ues,
                                 self.bs_pos, cfg.vehicle_rate, cfg.ped_half_width_m)
        self.phase_rng = self.reg.stream("scenario", "urllc_phase")
        self.phases: dict[int, int] = {}
        self.embb_ids = [p.uid for p in self.mob.pedestrians]
        if trace is None:
            if cfg.trace_path:
                trace = TrafficTrace.from_csv(cfg.trace_path)
            else:
                trace = synth_embb_trace(self.embb_ids, cfg.episode_windows + cfg.history + 1,
                                         self.reg.seed_for("trace", "embb"), cfg.trace_base_bits,
                                         cfg.trace_amp_bits, cfg.trace_period, cfg.trace_ar_coef,
                                         cfg.trace_noise_bits)
        self.trace = trace
        self.slices = cfg.slices()
        self.step_dt = cfg.mobility_step_ttis * cfg.tti_s
        for _ in range(int(round(cfg.mobility_warmup_s / self.step_dt))):
            self.mob.advance(self.step_dt)
        self.window = 0
        self.state = QueueState({u: FlowQueue(u, EMBB_SLICE, log=[] if event_log else None) for u in self.embb_ids},
                                list(self.embb_ids), None, [] if event_log else None)
        self._qinv = radio.q_inv(cfg.error_prob)
        self._bits_per_hz_tti = cfg.rb_bandwidth_hz * cfg.tti_s
        # called as hook(state, alloc, tape) before each window is simulated
        self.tape_hook = None

    # -- exogenous processes -------------------------------------------------
    def _snapshot(self):
        peds = [(p.uid, p.position) for p in self.mob.pedestrians]
        vehs = self.mob.covered_vehicles()
        for uid, _ in vehs:
            if uid not in self.phases:
                self.phases[uid] = int(self.phase_rng.integers(URLLC_PERIOD_TTI))
        xy = np.array([p for _, p in peds] + [p for _, p in vehs], dtype=float).reshape(-1, 2)
        sdb = radio.sinr_db(self.lb, radio.gains_at(self.rmap, xy))
        return peds, vehs, sdb

    def observe(self):
        """UE observations at the current instant (no demand attached)."""
        peds, vehs, sdb = self._snapshot()
        ues = [(uid, EMBB_SLICE, p) for uid, p in peds] + [(uid, URLLC_SLICE, p) for uid, p in vehs]
        return [UeObs(uid, s, p, float(g)) for (uid, s, p), g in zip(ues, sdb)]

    def make_tape(self) -> WindowTape:
        cfg = self.cfg
        k = self.window
        T = cfg.window_ttis
        steps = []
        for _ in range(T // cfg.mobility_step_ttis):
            peds, vehs, sdb = self._snapshot()
            gam = 10.0 ** (sdb / 10.0)
            cap = np.log2(1.0 + gam)
            pen = np.sqrt(radio.dispersion(gam) / cfg.symbols_per_rb_tti) * self._qinv * radio.LOG2E
            bpr, ucap = {}, {}
            n_p = len(peds)
            for i, (uid, _) in enumerate(peds):
                bpr[uid] = float(cap[i] * self._bits_per_hz_tti)
            by_mod = [[] for _ in range(URLLC_PERIOD_TTI)]
            for j, (uid, _) in enumerate(vehs):
                c, p = float(cap[n_p + j]), float(pen[n_p + j])
                ucap[uid] = (c, p)
                bpr[uid] = max(c - p, 0.0) * self._bits_per_hz_tti
                by_mod[self.phases[uid] % URLLC_PERIOD_TTI].append(uid)
            steps.append(StepInfo(frozenset(u for u, _ in vehs), by_mod, bpr, ucap))
            self.mob.advance(self.step_dt)
        arrivals = {}
        for pkt in generate_embb(k, self.trace, self.embb_ids, T):
            arrivals.setdefault(pkt.arrival_tti, []).append((pkt.ue_id, pkt.size_bits))
        offered = {u: self.trace.demand(k, u) for u in self.embb_ids}
        end_obs = self.observe()
        vehicles = {v.uid: (v.route, v.arc_position, v.phase, v.next_crossing) for v in self.mob.vehicles.values()}
        pedestrians = {p.uid: p.position for p in self.mob.pedestrians}
        return WindowTape(k, steps, arrivals, offered, end_obs, vehicles, pedestrians)

    # -- queue and scheduler dynamics -----------------------------------------
    def simulate(self, state: QueueState, alloc: WindowAllocation, tape: WindowTape) -> WindowMetrics:
        """Play ``tape`` against ``state`` (mutated in place) under ``alloc``."""
        cfg = self.cfg
        if alloc.total != cfg.total_rbs:
            raise ValueError(f"allocation {alloc.as_tuple()} does not sum to {cfg.total_rbs} RBs")
        T = cfg.window_ttis
        start = tape.window * T
        step_ttis = cfg.mobility_step_ttis
        dmax = cfg.urllc_max_delay
        hard = {EMBB_SLICE: alloc.hard[EMBB_SLICE], URLLC_SLICE: alloc.hard[URLLC_SLICE]}
        common = alloc.common
        queues = state.queues
        embb_ids = state.embb_ids
        eq = {u: queues[u] for u in embb_ids}
        uq = {u: q for u, q in queues.items() if q.slice_id == URLLC_SLICE}
        log = state.log
        base = {u: (q.delivered, q.dropped, q.delivered_within_deadline, q.delivered_bits, q.generated)
                for u, q in queues.items()}
        finished = {}
        hard_used = [0, 0]
        common_used = [0, 0]
        sent_bits = 0.0
        bphz = self._bits_per_hz_tti
        arrivals = tape.embb_arrivals
        cursor = state.rr_cursor
        info = None
        bpr = ucap = by_mod = None

        for t in range(T):
            tti = start + t
            if t % step_ttis == 0:
                info = tape.steps[t // step_ttis]
                bpr, ucap, by_mod = info.bpr, info.urllc_cap, info.by_mod
                for u in [u for u in uq if u not in info.covered]:
                    q = uq.pop(u)
                    del queues[u]
                    finished[u] = _delta(q, base.pop(u))
                for u in info.covered:
                    if u not in uq:
                        q = FlowQueue(u, URLLC_SLICE, log=log)
                        uq[u] = queues[u] = q
                        base[u] = (0, 0, 0, 0, 0)
            for u in by_mod[tti % URLLC_PERIOD_TTI]:
                uq[u].push(Packet(u, tti, URLLC_PACKET_BITS, URLLC_PACKET_BITS, tti + dmax))
            arr = arrivals.get(tti)
            if arr:
                for u, size in arr:
                    eq[u].push(Packet(u, tti, size, size, None))

            urgent = []
            for u, q in uq.items():
                pk = q.packets
                if pk:
                    if tti - pk[0].arrival_tti > dmax:
                        q.drop_expired(tti, dmax)
                        if not pk:
                            continue
                    urgent.append((pk[0].deadline_tti, u))
            backlogged = [u for u in embb_ids if eq[u].backlog_bits > 0]
            if not urgent and not backlogged:
                continue
            urgent.sort()
            u_order = [u for _, u in urgent]
            e_order = rr_order(backlogged, cursor) if len(backlogged) > 1 else backlogged
            demands = {u: uq[u].backlog_bits for u in u_order}
            for u in e_order:
                demands[u] = eq[u].backlog_bits
            a = allocate_tti(hard, common, demands, bpr, {EMBB_SLICE: e_order, URLLC_SLICE: u_order},
                             COMMON_PRIORITY)
            for u, rbs in a.per_ue_rbs.items():
                q = uq.get(u)
                if q is not None:
                    c, p = ucap[u]
                    sent = q.serve(rbs * bphz * max(c - p / math.sqrt(rbs), 0.0), tti, dmax)
                else:
                    sent = eq[u].serve(rbs * bpr[u], tti, None)
                sent_bits += sent
            if e_order and e_order[0] in a.per_ue_rbs:
                cursor = e_order[0]
            hard_used[0] += a.per_slice_hard_used[EMBB_SLICE]
            hard_used[1] += a.per_slice_hard_used[URLLC_SLICE]
            common_used[0] += a.per_slice_common_used.get(EMBB_SLICE, 0)
            common_used[1] += a.per_slice_common_used.get(URLLC_SLICE, 0)

        state.rr_cursor = cursor
        for u, q in queues.items():
            finished[u] = _delta(q, base[u])
        return self._metrics(tape, alloc, finished, hard_used, common_used, sent_bits)

    def _metrics(self, tape, alloc, finished, hard_used, common_used, sent_bits) -> WindowMetrics:
        cfg = self.cfg
        T = cfg.window_ttis
        stats = {EMBB_SLICE: [], URLLC_SLICE: []}
        demand = {}
        for u in self.embb_ids:
            d = finished[u]
            stats[EMBB_SLICE].append(UeWindowStats(delivered_bits=d[3], offered_bits=tape.embb_offered[u]))
            demand[u] = tape.embb_offered[u]
        for u, d in finished.items():
            if u in tape.embb_offered:
                continue
            stats[URLLC_SLICE].append(UeWindowStats(delivered=d[0], dropped=d[1], within=d[2]))
            demand[u] = d[4] * URLLC_PACKET_BITS
        q = tuple(sla_ratio(c, stats[c.slice_id], cfg.window_s) for c in self.slices)
        mean_common = tuple(x / T for x in common_used)
        iso = tuple(isolation(alloc.hard[m], mean_common[m]) for m in range(2))
        util = tuple(utilization(hard_used[m] / T, alloc.hard[m]) for m in range(2))
        util_c = utilization(sum(common_used) / T, alloc.common)
        se = sent_bits / cfg.tti_s / cfg.bandwidth_hz / T
        se_norm = se / cfg.s_max
        u = utility(q, se_norm, self.slices, cfg.beta)
        r = reward(q, se_norm, iso, self.slices, cfg.beta, cfg.rho)
        extras = {"demand": demand, "n_urllc": len(stats[URLLC_SLICE]),
                  "hard_used": tuple(h / T for h in hard_used)}
        return WindowMetrics(tape.window, alloc, q, iso, util, util_c, mean_common, se, se_norm, u, r, extras)

    def step(self, alloc: WindowAllocation):
        tape = self.make_tape()
        if self.tape_hook is not None:
            self.tape_hook(self.state, alloc, tape)
        metrics = self.simulate(self.state, alloc, tape)
        self.window += 1
        return metrics, tape


def _delta(q: FlowQueue, base):
    return (q.delivered - base[0], q.dropped - base[1], q.delivered_within_deadline - base[2],
            q.delivered_bits - base[3], q.generated - base[4])
