"""Window-level slicing bookkeeping: SLA ratios, isolation, utility, reward, actions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

EMBB, URLLC = "eMBB", "URLLC"
ACTION_SET = (-5, -2, 0, 2, 5)
S_MAX_DEFAULT = math.log2(1.0 + 10 ** 1.4)


@dataclass(frozen=True)
class SliceConfig:
    slice_id: int
    kind: str
    rate_req: float | None = None
    max_delay: int | None = None
    sla_threshold: float = 0.95
    isolation_threshold: float = 0.9
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in (EMBB, URLLC):
            raise ValueError(f"unknown slice kind {self.kind!r}")
        if not (0 < self.sla_threshold <= 1 and 0 < self.isolation_threshold <= 1):
            raise ValueError("thresholds must lie in (0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def default_slices():
    return (SliceConfig(0, EMBB, rate_req=5e6, sla_threshold=0.95, isolation_threshold=0.9, alpha=2.0),
            SliceConfig(1, URLLC, max_delay=5, sla_threshold=0.9999, isolation_threshold=0.9, alpha=3.0))


@dataclass(frozen=True)
class WindowAllocation:
    hard: tuple
    common: int

    def __post_init__(self):
        if self.common < 0 or any(w < 0 for w in self.hard):
            raise ValueError("allocations must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.hard) + self.common

    def as_tuple(self):
        return (*self.hard, self.common)


@dataclass
class UeWindowStats:
    """Per-UE observations over one window."""

    delivered_bits: int = 0
    offered_bits: int | None = None
    delivered: int = 0
    dropped: int = 0
    within: int = 0


@dataclass
class WindowMetrics:
    window: int
    allocation: WindowAllocation
    q: tuple
    iso: tuple
    util: tuple
    util_common: float
    common_used: tuple
    se: float
    se_norm: float
    utility: float
    reward: float
    extras: dict = field(default_factory=dict)

    def sla_met(self, cfgs) -> bool:
        return all(q >= c.sla_threshold for q, c in zip(self.q, cfgs))


def embb_term(st: UeWindowStats, rate_req: float, window_s: float) -> float:
    required = rate_req * window_s
    if st.offered_bits is not None:
        required = min(required, st.offered_bits)
    if required <= 0:
        return 1.0
    return min(st.delivered_bits / required, 1.0)


def urllc_term(st: UeWindowStats) -> float:
    total = st.delivered + st.dropped
    return 1.0 if total == 0 else st.within / total


def sla_ratio(cfg: SliceConfig, stats, window_s: float = 1.0) -> float:
    """Mean per-UE SLA satisfaction of one slice; an empty slice scores 1."""
    stats = list(stats)
    if not stats:
        return 1.0
    if cfg.kind == EMBB:
        terms = [embb_term(s, cfg.rate_req, window_s) for s in stats]
    else:
        terms = [urllc_term(s) for s in stats]
    return sum(terms) / len(terms)


def isolation(hard_rbs: float, common_used: float) -> float:
    if hard_rbs + common_used <= 0:
        return 1.0
    return hard_rbs / (hard_rbs + common_used)


def utilization(used: float, allocated: float) -> float:
    return 0.0 if allocated <= 0 else min(used / allocated, 1.0)


def sla_gate(q, cfgs) -> int:
    return int(all(qm >= c.sla_threshold for qm, c in zip(q, cfgs)))


def utility(q, se_norm: float, cfgs, beta: float = 5.0) -> float:
    return sum(c.alpha * qm for qm, c in zip(q, cfgs)) + beta * sla_gate(q, cfgs) * se_norm


def reward(q, se_norm: float, iso, cfgs, beta: float = 5.0, rho: float = 15.0) -> float:
    """Exponential SLA reward, gated SE bonus and isolation-violation penalty."""
    pos = sum(c.alpha * math.exp(qm) for qm, c in zip(q, cfgs))
    penalty = sum(max(0.0, c.isolation_threshold - o) for o, c in zip(iso, cfgs))
    return pos + beta * sla_gate(q, cfgs) * se_norm - rho * penalty


def decode_action(index: int, n_slices: int = 2, action_set=ACTION_SET) -> tuple:
    """Joint action index -> per-slice RB deltas; slice 0 is the most significant digit."""
    n = len(action_set)
    if not 0 <= index < n ** n_slices:
        raise ValueError(f"action index {index} out of range")
    out = []
    for _ in range(n_slices):
        index, r = divmod(index, n)
        out.append(action_set[r])
    return tuple(reversed(out))


def encode_action(deltas, action_set=ACTION_SET) -> int:
    idx = 0
    for d in deltas:
        idx = idx * len(action_set) + action_set.index(d)
    return idx


def apply_action(alloc: WindowAllocation, action) -> WindowAllocation:
    """Apply per-slice deltas: all decreases first, then increases in slice order,
    each clamped by what the slice (or the common pool) actually holds."""
    hard = list(alloc.hard)
    common = alloc.common
    for m, a in enumerate(action):
        if a < 0:
            d = min(-a, hard[m])
            hard[m] -= d
            common += d
    for m, a in enumerate(action):
        if a > 0:
            d = min(a, common)
            hard[m] += d
            common -= d
    return WindowAllocation(tuple(hard), common)


def fold_common(alloc: WindowAllocation, action) -> WindowAllocation:
    """Hard-slicing variant: hand any freed common RBs to the slice whose delta was
    largest (lowest index on ties), keeping the common pool empty."""
    if alloc.common == 0:
        return alloc
    hard = list(alloc.hard)
    best = max(range(len(action)), key=lambda m: (action[m], -m))
    hard[best] += alloc.common
    return WindowAllocation(tuple(hard), 0)
