"""Window-level LSTM predictors and the binned channel/traffic state features.

Three predictors share one architecture: vehicle arc position (1-D),
pedestrian position (2-D) and eMBB demand (1-D). Location models learn the
next per-window displacement from the last ``Z - 1`` displacements; the
traffic model maps the last ``Z`` demands to the next one. All model inputs
and outputs are min-max scaled to [0, 1].
"""
from __future__ import annotations

import bisect
import csv
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn, radio
from .mobility import MobilityModel, RoadTopology
from .traffic import synth_embb_trace

DEFAULT_BINS = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0)


class EmptyDataset(ValueError):
    pass


class HistoryBuffer:
    """Last ``Z`` window-level observations per UE, oldest first."""

    def __init__(self, z: int = 10):
        self.z = z
        self._buf: dict = {}

    def push(self, uid, value):
        self._buf.setdefault(uid, deque(maxlen=self.z)).append(np.asarray(value, dtype=float))

    def get(self, uid) -> np.ndarray:
        return np.array(self._buf.get(uid, ()))

    def full(self, uid) -> bool:
        return len(self._buf.get(uid, ())) == self.z

    def last(self, uid):
        return self._buf[uid][-1]

    def __contains__(self, uid):
        return uid in self._buf

    def __len__(self):
        return len(self._buf)

    def discard(self, keep):
        for uid in [u for u in self._buf if u not in keep]:
            del self._buf[uid]


@dataclass
class MinMaxScaler:
    lo: np.ndarray = None
    hi: np.ndarray = None

    def fit(self, data):
        data = np.asarray(data, dtype=float).reshape(-1, np.shape(data)[-1])
        self.lo = data.min(axis=0)
        self.hi = data.max(axis=0)
        return self

    @property
    def span(self):
        s = self.hi - self.lo
        return np.where(s > 0, s, 1.0)

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / self.span

    def inverse(self, z):
        return np.asarray(z, dtype=float) * self.span + self.lo

    def to_dict(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["lo"]), np.array(d["hi"]))


@dataclass(frozen=True)
class GainBins:
    thresholds: tuple = DEFAULT_BINS

    def __post_init__(self):
        t = list(self.thresholds)
        if not t or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("bin thresholds must be strictly increasing")

    def __len__(self):
        return len(self.thresholds)

    def index(self, gain_db: float) -> int:
        """Half-open bins ``[c_j, c_j+1)``; below c_1 clamps to the first, the last bin is open."""
        return max(0, bisect.bisect_right(self.thresholds, gain_db) - 1)


def bin_state(gains_db, demands, slice_of, bins: GainBins, n_slices: int = 2):
    """Count UEs and sum their demand per (slice, gain bin).

    ``gains_db``, ``demands`` and ``slice_of`` are parallel sequences.
    """
    h = np.zeros((n_slices, len(bins)))
    d = np.zeros((n_slices, len(bins)))
    for g, dem, m in zip(gains_db, demands, slice_of):
        j = bins.index(g)
        h[m, j] += 1
        d[m, j] += dem
    return h, d


def gain_from_prediction(rmap: radio.RadioMap, lb: radio.LinkBudget, pos) -> float:
    """Radio-map lookup at a predicted position, expressed as wideband SINR in dB."""
    return float(radio.sinr_db(lb, radio.gain_at(rmap, pos)))


def gains_for_positions(rmap: radio.RadioMap, lb: radio.LinkBudget, positions, bs_pos,
                        radius: float = radio.COVERAGE_RADIUS_M):
    """SINR (dB) at each position plus a mask of positions inside coverage and on the map."""
    xy = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(xy) == 0:
        return np.zeros(0), np.zeros(0, dtype=bool)
    g = radio.sinr_db(lb, radio.gains_at(rmap, xy))
    keep = (np.hypot(xy[:, 0] - bs_pos[0], xy[:, 1] - bs_pos[1]) <= radius) & ~np.isnan(g)
    return g, keep


# -- predictors ----------------------------------------------------------------

@dataclass
class Predictor:
    net: nn.Network
    x_scaler: MinMaxScaler
    y_scaler: MinMaxScaler
    mode: str  # "delta" or "level"
    z: int

    @property
    def dim(self) -> int:
        return len(self.y_scaler.lo)

    def features(self, histories: np.ndarray) -> np.ndarray:
        h = np.asarray(histories, dtype=float)
        if h.ndim == 2:
            h = h[..., None]
        return np.diff(h, axis=1) if self.mode == "delta" else h

    def predict_batch(self, histories) -> np.ndarray:
        """``histories`` is ``(N, Z, dim)``; returns ``(N, dim)`` in original units."""
        h = np.asarray(histories, dtype=float)
        if h.ndim == 2:
            h = h[..., None]
        if len(h) == 0:
            return np.zeros((0, self.dim))
        out = self.y_scaler.inverse(self.net.forward(self.x_scaler.transform(self.features(h))))
        return h[:, -1, :] + out if self.mode == "delta" else out

    def save(self, path):
        path = Path(path)
        self.net.save(path.with_suffix(".npz"))
        meta = {"mode": self.mode, "z": self.z, "x": self.x_scaler.to_dict(), "y": self.y_scaler.to_dict()}
        path.with_suffix(".json").write_text(json.dumps(meta))

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        net = nn.Network.load(path.with_suffix(".npz"))
        return cls(net, MinMaxScaler.from_dict(meta["x"]), MinMaxScaler.from_dict(meta["y"]), meta["mode"], meta["z"])


def predict_next(model: Predictor | None, history) -> np.ndarray:
    """One-step-ahead prediction; falls back to the last value when the model is
    missing or the history is shorter than the model's window."""
    h = np.asarray(history, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    if model is None or len(h) < model.z:
        return h[-1].copy()
    return model.predict_batch(h[None, -model.z:])[0]


def make_samples(series, z: int):
    """Sliding windows: ``z`` observations -> the next one. Each series is ``(L, dim)``."""
    xs, ys = [], []
    for s in series:
        s = np.asarray(s, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        for i in range(len(s) - z):
            xs.append(s[i:i + z])
            ys.append(s[i + z])
    if not xs:
        return np.zeros((0, z, 1)), np.zeros((0, 1))
    return np.array(xs), np.array(ys)


def train_predictor(histories, targets, mode: str = "level", epochs: int = 100, seed: int = 0,
                    hidden: int = 64, lr: float = 1e-3, batch: int = 256, max_samples: int | None = None):
    """Fit an LSTM regressor on ``(N, Z, dim)`` histories and ``(N, dim)`` targets.

    Returns ``(predictor, losses)`` where ``losses[e]`` is the mean minibatch
    MSE (scaled units) of epoch ``e``.
    """
    X = np.asarray(histories, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if len(X) == 0:
        raise EmptyDataset("empty training dataset")
    if X.ndim == 2:
        X = X[..., None]
    if Y.ndim == 1:
        Y = Y[:, None]
    rng = np.random.default_rng(seed)
    if max_samples is not None and len(X) > max_samples:
        keep = np.sort(rng.choice(len(X), max_samples, replace=False))
        X, Y = X[keep], Y[keep]
    z = X.shape[1]
    feats = np.diff(X, axis=1) if mode == "delta" else X
    tgt = Y - X[:, -1, :] if mode == "delta" else Y
    x_scaler = MinMaxScaler().fit(feats)
    y_scaler = MinMaxScaler().fit(tgt)
    fx = x_scaler.transform(feats)
    fy = y_scaler.transform(tgt)
    net = nn.lstm_regressor(fx.shape[-1], hidden, fy.shape[-1], rng)
    # the head starts as the mean predictor; training moves away from it only if that lowers the loss
    head = net.layers[-1]
    head.W[...] = 0.0
    head.b[...] = fy.reshape(-1, fy.shape[-1]).mean(axis=0)
    opt = nn.Adam(net.params, lr=lr)
    losses = []
    n = len(fx)
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, batch):
            idx = order[s:s + batch]
            pred = net.forward(fx[idx])
            total += nn.mse(pred, fy[idx]) * len(idx)
            grads = net.backward(nn.mse_grad(pred, fy[idx]))
            opt.step(net.params, grads)
        losses.append(total / n)
    return Predictor(net, x_scaler, y_scaler, mode, z), losses


# -- dataset generation --------------------------------------------------------

@dataclass
class TraceDataset:
    vehicles: dict = field(default_factory=dict)     # uid -> list of (window, route, arc, x, y, phase, crossing)
    pedestrians: dict = field(default_factory=dict)  # uid -> list of (window, x, y)
    demand: dict = field(default_factory=dict)       # uid -> np.ndarray of per-window bits

    def vehicle_series(self, min_len: int = 0):
        return [np.array([r[2] for r in rows]) for rows in self.vehicles.values() if len(rows) >= min_len]

    def pedestrian_series(self):
        return [np.array([(r[1], r[2]) for r in rows]) for rows in self.pedestrians.values()]

    def demand_series(self):
        return list(self.demand.values())

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ue_id", "window", "x", "y", "demand_bits", "kind", "route", "arc", "phase", "crossing"])
            for uid, rows in sorted(self.pedestrians.items()):
                dem = self.demand.get(uid)
                for k, x, y in rows:
                    w.writerow([uid, k, f"{x:.3f}", f"{y:.3f}", int(dem[k]) if dem is not None and k < len(dem) else 0,
                                "pedestrian", "", "", "", ""])
            for uid, rows in sorted(self.vehicles.items()):
                for k, route, arc, x, y, phase, crossing in rows:
                    w.writerow([uid, k, f"{x:.3f}", f"{y:.3f}", 0, "vehicle", route, f"{arc:.4f}", phase, crossing])

    @classmethod
    def from_csv(cls, path):
        ds = cls()
        dem = {}
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                uid, k = int(r["ue_id"]), int(r["window"])
                x, y = float(r["x"]), float(r["y"])
                if r["kind"] == "vehicle":
                    ds.vehicles.setdefault(uid, []).append(
                        (k, int(r["route"]), float(r["arc"]), x, y, r["phase"], int(r["crossing"])))
                else:
                    ds.pedestrians.setdefault(uid, []).append((k, x, y))
                    dem.setdefault(uid, {})[k] = int(r["demand_bits"])
        ds.demand = {u: np.array([d[k] for k in sorted(d)], dtype=float) for u, d in dem.items()}
        return ds


def collect_traces(cfg, seed: int, n_vehicles: int | None = None, windows: int | None = None) -> TraceDataset:
    """Log window-end positions of every vehicle until ``n_vehicles`` complete
    trips, plus pedestrian positions and synthetic eMBB demand.

    Positions and demand are exogenous to the slicing decisions, so they are
    generated without running the scheduler.
    """
    n_vehicles = n_vehicles if n_vehicles is not None else cfg.predictor_vehicles
    windows = windows if windows is not None else cfg.predictor_windows
    rng = np.random.default_rng(seed)
    topo = RoadTopology.default(np.random.default_rng([seed, 1]))
    mob = MobilityModel(topo, rng, cfg.n_embb_ues, vehicle_rate=cfg.vehicle_rate,
                        ped_half_width=cfg.ped_half_width_m)
    dt = cfg.mobility_step_ttis * cfg.tti_s
    steps = int(round(cfg.window_s / dt))
    ds = TraceDataset()
    k = 0
    completed = set()
    while len(completed) < n_vehicles or k < windows:
        for _ in range(steps):
            mob.advance(dt)
        current = set(mob.vehicles)
        for uid in ds.vehicles:
            if uid not in current:
                completed.add(uid)
        for v in mob.vehicles.values():
            x, y = mob.vehicle_position(v)
            ds.vehicles.setdefault(v.uid, []).append((k, v.route, v.arc_position, x, y, v.phase, v.next_crossing))
        if k < windows:
            for p in mob.pedestrians:
                ds.pedestrians.setdefault(p.uid, []).append((k, p.position[0], p.position[1]))
        k += 1
    ds.vehicles = {u: rows for u, rows in ds.vehicles.items() if u in completed}
    trace = synth_embb_trace(range(cfg.n_embb_ues), windows, seed, cfg.trace_base_bits, cfg.trace_amp_bits,
                             cfg.trace_period, cfg.trace_ar_coef, cfg.trace_noise_bits)
    ds.demand = {u: trace.series(u) for u in range(cfg.n_embb_ues)}
    return ds


@dataclass
class PredictorSet:
    vehicle: Predictor | None = None
    pedestrian: Predictor | None = None
    traffic: Predictor | None = None
    losses: dict = field(default_factory=dict)

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("vehicle", "pedestrian", "traffic"):
            model = getattr(self, name)
            if model is not None:
                model.save(d / name)

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        kw = {name: Predictor.load(d / name) for name in ("vehicle", "pedestrian", "traffic")
              if (d / f"{name}.json").exists()}
        return cls(**kw)


def train_predictors(ds: TraceDataset, cfg, seed: int = 0, epochs: int | None = None) -> PredictorSet:
    z = cfg.history
    epochs = epochs if epochs is not None else cfg.lstm_epochs
    common = dict(epochs=epochs, hidden=cfg.lstm_hidden, lr=cfg.lstm_lr, batch=cfg.lstm_batch,
                  max_samples=cfg.predictor_max_samples)
    out = PredictorSet()
    for name, series, mode, s in (("vehicle", ds.vehicle_series(z + 1), "delta", seed),
                                  ("pedestrian", ds.pedestrian_series(), "delta", seed + 1),
                                  ("traffic", ds.demand_series(), "level", seed + 2)):
        X, Y = make_samples(series, z)
        if len(X):
            model, losses = train_predictor(X, Y, mode=mode, seed=s, **common)
            setattr(out, name, model)
            out.losses[name] = losses
    return out
