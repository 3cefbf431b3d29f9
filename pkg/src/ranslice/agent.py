"""DQN slicing controller: state assembly, replay, training and the control loop."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .env import EMBB_SLICE, URLLC_SLICE, CellEnv
from .mobility import COVERAGE_M
from .predict import GainBins, HistoryBuffer, PredictorSet, bin_state, gains_for_positions
from .slicing import (ACTION_SET, WindowAllocation, WindowMetrics, apply_action, decode_action,
                      fold_common)
from .traffic import URLLC_PACKET_BITS, URLLC_PERIOD_TTI

N_ACTIONS = len(ACTION_SET) ** 2


def state_dim(n_slices: int = 2, n_bins: int = 8) -> int:
    return n_slices * (4 * n_bins + 3)


def build_state(observed, predicted, last_q, last_iso, last_util, bins: GainBins,
                max_ues: float, max_demand: float, n_slices: int = 2) -> np.ndarray:
    """Flatten per-slice ``[h, d, h_pre, d_pre, Q, o, v]`` into one normalized vector.

    ``observed`` and ``predicted`` are ``(gains_db, demands, slice_ids)`` triples.
    """
    h, d = bin_state(*observed[:2], observed[2], bins, n_slices)
    hp, dp = bin_state(*predicted[:2], predicted[2], bins, n_slices)
    parts = []
    for m in range(n_slices):
        parts += [h[m] / max_ues, d[m] / max_demand, hp[m] / max_ues, dp[m] / max_demand,
                  [last_q[m], last_iso[m], last_util[m]]]
    return np.clip(np.concatenate(parts), 0.0, 1.0)


@dataclass
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray

    def __post_init__(self):
        if not 0 <= self.action < N_ACTIONS:
            raise ValueError(f"action index {self.action} out of range")


class ReplayBuffer:
    """Fixed-capacity FIFO ring of experiences."""

    def __init__(self, capacity: int, rng=None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._items: list = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, exp: Experience):
        if len(self._items) < self.capacity:
            self._items.append(exp)
        else:
            self._items[self._next] = exp
        self._next = (self._next + 1) % self.capacity

    def items(self):
        """Contents oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[:self._next]

    def sample(self, batch: int):
        idx = self.rng.choice(len(self._items), size=batch, replace=False)
        return [self._items[i] for i in idx]


def select_action(q_net: nn.Network, state, eps: float, rng) -> int:
    """Epsilon-greedy over the joint action space; ties go to the lowest index."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if rng.random() < eps:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(q_net.forward(np.asarray(state)[None, :])[0]))


def train_step(q_net: nn.Network, target_net: nn.Network, buffer: ReplayBuffer, batch: int,
               gamma: float, opt: nn.Adam):
    """One TD step on a replay minibatch. Returns the loss, or None when the buffer is too small."""
    if len(buffer) < batch:
        return None
    exps = buffer.sample(batch)
    s = np.array([e.state for e in exps])
    a = np.array([e.action for e in exps])
    r = np.array([e.reward for e in exps])
    s2 = np.array([e.next_state for e in exps])
    y = r + gamma * target_net.forward(s2).max(axis=1)
    out = q_net.forward(s)
    rows = np.arange(batch)
    err = out[rows, a] - y
    grad = np.zeros_like(out)
    grad[rows, a] = 2.0 * err / batch
    opt.step(q_net.params, q_net.backward(grad))
    return float(np.mean(err ** 2))


def sync_target(q_net: nn.Network, target_net: nn.Network) -> nn.Network:
    target_net.copy_from(q_net)
    return target_net


def linear_eps(window: int, start: float, end: float, decay_windows: int) -> float:
    if decay_windows <= 0:
        return end
    frac = min(window / decay_windows, 1.0)
    return start + frac * (end - start)


class DQNAgent:
    def __init__(self, n_inputs: int, hidden=(128, 64), n_actions: int = N_ACTIONS, lr: float = 1e-3,
                 gamma: float = 0.9, batch_size: int = 32, replay_capacity: int = 10_000,
                 target_sync: int = 100, rng=None):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.q = nn.mlp([n_inputs, *hidden, n_actions], self.rng)
        self.target = self.q.clone()
        self.opt = nn.Adam(self.q.params, lr=lr)
        self.buffer = ReplayBuffer(replay_capacity, self.rng)
        self.gamma = gamma
        self.batch_size = batch_size
        self.target_sync = target_sync
        self.train_steps = 0

    def act(self, state, eps: float) -> int:
        return select_action(self.q, state, eps, self.rng)

    def remember(self, exp: Experience):
        self.buffer.push(exp)

    def learn(self):
        loss = train_step(self.q, self.target, self.buffer, self.batch_size, self.gamma, self.opt)
        if loss is not None:
            self.train_steps += 1
            if self.train_steps % self.target_sync == 0:
                sync_target(self.q, self.target)
        return loss

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.q.save(d / "q_network.npz")
        self.target.save(d / "target_network.npz")
        opt = {f"m{i}": m for i, m in enumerate(self.opt.m)}
        opt.update({f"v{i}": v for i, v in enumerate(self.opt.v)})
        np.savez(d / "optimizer.npz", t=self.opt.t, **opt)
        items = self.buffer.items()
        if items:
            np.savez(d / "replay.npz", state=np.array([e.state for e in items]),
                     action=np.array([e.action for e in items]), reward=np.array([e.reward for e in items]),
                     next_state=np.array([e.next_state for e in items]))
        meta = {"gamma": self.gamma, "batch_size": self.batch_size, "target_sync": self.target_sync,
                "train_steps": self.train_steps, "replay_capacity": self.buffer.capacity,
                "replay_size": len(items), "lr": self.opt.lr,
                "rng_state": self.rng.bit_generator.state}
        (d / "agent.json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, directory) -> "DQNAgent":
        d = Path(directory)
        meta = json.loads((d / "agent.json").read_text())
        q = nn.Network.load(d / "q_network.npz")
        agent = cls(q.layers[0].W.shape[1], n_actions=q.layers[-1].W.shape[0], lr=meta["lr"],
                    gamma=meta["gamma"], batch_size=meta["batch_size"],
                    replay_capacity=meta["replay_capacity"], target_sync=meta["target_sync"])
        agent.q = q
        agent.target = nn.Network.load(d / "target_network.npz")
        agent.opt = nn.Adam(agent.q.params, lr=meta["lr"])
        with np.load(d / "optimizer.npz") as data:
            agent.opt.t = int(data["t"])
            for i in range(len(agent.opt.m)):
                agent.opt.m[i][...] = data[f"m{i}"]
                agent.opt.v[i][...] = data[f"v{i}"]
        agent.rng.bit_generator.state = meta["rng_state"]
        if meta["replay_size"]:
            with np.load(d / "replay.npz") as data:
                for s, a, r, s2 in zip(data["state"], data["action"], data["reward"], data["next_state"]):
                    agent.buffer.push(Experience(s, int(a), float(r), s2))
        agent.train_steps = meta["train_steps"]
        return agent


def initial_allocation(total: int, common_frac: float, rb_demand) -> WindowAllocation:
    """Common pool of ``round(common_frac * total)`` RBs; the rest split in proportion
    to per-slice RB demand with at least one RB per slice."""
    n = len(rb_demand)
    common = int(round(common_frac * total))
    rest = total - common
    if rest < n:
        raise ValueError("not enough RBs for one per slice")
    dem = np.maximum(np.asarray(rb_demand, dtype=float), 0.0)
    share = dem / dem.sum() if dem.sum() > 0 else np.full(n, 1.0 / n)
    hard = np.ones(n, dtype=int)
    extra = rest - n
    raw = share * extra
    hard += np.floor(raw).astype(int)
    left = rest - hard.sum()
    for m in np.argsort(-(raw - np.floor(raw)), kind="stable")[:left]:
        hard[m] += 1
    return WindowAllocation(tuple(int(h) for h in hard), common)


def hard_initial_allocation(total: int, first_frac: float) -> WindowAllocation:
    first = int(round(first_frac * total))
    return WindowAllocation((first, total - first), 0)


class UeTracker:
    """Window-level histories of every UE and their one-step predictions."""

    def __init__(self, env: CellEnv, predictors: PredictorSet | None):
        cfg = env.cfg
        self.env = env
        self.pred = predictors or PredictorSet()
        self.z = cfg.history
        self.veh = HistoryBuffer(self.z)
        self.ped = HistoryBuffer(self.z)
        self.dem = HistoryBuffer(self.z)
        self.routes = {}
        self.urllc_nominal = cfg.window_ttis / URLLC_PERIOD_TTI * URLLC_PACKET_BITS

    def update(self, tape):
        for uid, (route, arc, _, _) in tape.vehicles.items():
            self.veh.push(uid, [arc])
            self.routes[uid] = route
        self.veh.discard(tape.vehicles)
        self.routes = {u: r for u, r in self.routes.items() if u in tape.vehicles}
        for uid, pos in tape.pedestrians.items():
            self.ped.push(uid, pos)
        for uid, bits in tape.embb_offered.items():
            self.dem.push(uid, [bits])

    def _batch(self, buf: HistoryBuffer, model):
        uids = list(buf._buf)
        out = {}
        full = [u for u in uids if model is not None and buf.full(u)]
        if full:
            pred = model.predict_batch(np.array([buf.get(u) for u in full]))
            out.update(zip(full, pred))
        for u in uids:
            if u not in out:
                out[u] = buf.last(u)
        return out

    def predicted(self):
        """(gains_db, demands, slice_ids) of UEs predicted to be in coverage next window."""
        env = self.env
        topo = env.topo
        pts, dems, sl = [], [], []
        for uid, arc in self._batch(self.veh, self.pred.vehicle).items():
            route = topo.routes[self.routes[uid]]
            if arc[0] >= route.length:
                continue
            pts.append(route.position(float(arc[0])))
            dems.append(self.urllc_nominal)
            sl.append(URLLC_SLICE)
        dpred = self._batch(self.dem, self.pred.traffic)
        for uid, pos in self._batch(self.ped, self.pred.pedestrian).items():
            pts.append(tuple(pos))
            dems.append(max(float(dpred[uid][0]), 0.0) if uid in dpred else 0.0)
            sl.append(EMBB_SLICE)
        g, keep = gains_for_positions(env.rmap, env.lb, pts, env.bs_pos, COVERAGE_M)
        idx = np.flatnonzero(keep)
        return [float(g[i]) for i in idx], [dems[i] for i in idx], [sl[i] for i in idx]


def observed_features(tape, metrics: WindowMetrics | None):
    demand = metrics.extras["demand"] if metrics is not None else {}
    obs = tape.end_obs if tape is not None else []
    return ([o.sinr_db for o in obs], [demand.get(o.uid, 0) for o in obs], [o.slice_id for o in obs])


class SlicingController:
    """One control cycle per window: predict, build the state, act, simulate, learn."""

    def __init__(self, env: CellEnv, predictors: PredictorSet | None = None, hard_mode: bool | None = None,
                 rng=None, learn: bool = True):
        cfg = env.cfg
        self.env = env
        self.cfg = cfg
        self.hard = cfg.hard_mode if hard_mode is None else hard_mode
        self.bins = GainBins(tuple(cfg.gain_bins))
        self.agent = DQNAgent(state_dim(2, len(self.bins)), cfg.hidden_sizes, N_ACTIONS, cfg.lr, cfg.gamma,
                              cfg.batch_size, cfg.replay_capacity, cfg.target_sync,
                              rng if rng is not None else env.reg.stream("agent", "dqn"))
        self.tracker = UeTracker(env, predictors)
        self.learn_enabled = learn
        self.alloc = None
        self.state = None
        self.last_action = None
        self.last_loss = None
        self.last_tape = None

    def first_allocation(self) -> WindowAllocation:
        cfg = self.cfg
        if self.hard:
            return hard_initial_allocation(cfg.total_rbs, cfg.hard_initial_frac)
        obs = self.env.observe()
        embb = [o for o in obs if o.slice_id == EMBB_SLICE]
        bphz = cfg.rb_bandwidth_hz * cfg.tti_s
        need_e = sum(self.env.trace.demand(0, o.uid) / max(bphz * math.log2(1 + 10 ** (o.sinr_db / 10)), 1.0)
                     for o in embb)
        n_u = sum(1 for o in obs if o.slice_id == URLLC_SLICE)
        need_u = n_u * cfg.window_ttis / URLLC_PERIOD_TTI
        return initial_allocation(cfg.total_rbs, cfg.initial_common_frac, (need_e, need_u))

    def _state(self, tape, metrics):
        cfg = self.cfg
        if metrics is None:
            q, o, v = (1.0, 1.0), (1.0, 1.0), (0.0, 0.0)
        else:
            q, o, v = metrics.q, metrics.iso, metrics.util
        return build_state(observed_features(tape, metrics), self.tracker.predicted(), q, o, v, self.bins,
                           cfg.max_ues_norm, cfg.max_bin_demand_norm)

    def eps(self, window: int) -> float:
        cfg = self.cfg
        return linear_eps(window, cfg.eps_start, cfg.eps_end, cfg.eps_decay_windows)

    def run_episode_step(self):
        """Simulate one window; returns ``(metrics, experience)`` (experience is None for the first window)."""
        env = self.env
        k = env.window
        exp = None
        if self.alloc is None:
            self.alloc = self.first_allocation()
            action = None
        else:
            action = self.agent.act(self.state, self.eps(k))
            alloc = apply_action(self.alloc, decode_action(action))
            self.alloc = fold_common(alloc, decode_action(action)) if self.hard else alloc
        metrics, tape = env.step(self.alloc)
        self.last_tape = tape
        self.tracker.update(tape)
        nxt = self._state(tape, metrics)
        if action is not None:
            exp = Experience(self.state, action, metrics.reward, nxt)
            self.agent.remember(exp)
        self.state = nxt
        self.last_action = action
        self.last_loss = None
        if self.learn_enabled and k >= self.cfg.warmup_windows:
            for _ in range(self.cfg.train_steps_per_window):
                self.last_loss = self.agent.learn()
        metrics.extras["eps"] = self.eps(k)
        metrics.extras["action"] = -1 if action is None else action
        return metrics, exp
