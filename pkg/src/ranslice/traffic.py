"""Slice traffic: periodic URLLC packets, trace-driven eMBB demand, FCFS queues."""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

URLLC_PACKET_BITS = 256
URLLC_PERIOD_TTI = 10
URLLC_DEADLINE_TTI = 5
EMBB_PACKET_BITS = 6000


class TraceExhausted(KeyError):
    pass


@dataclass(slots=True)
class Packet:
    ue_id: int
    arrival_tti: int
    size_bits: int
    remaining_bits: int
    deadline_tti: int | None = None


@dataclass
class FlowQueue:
    ue_id: int
    slice_id: int
    packets: deque = field(default_factory=deque)
    generated: int = 0
    delivered: int = 0
    dropped: int = 0
    delivered_within_deadline: int = 0
    delivered_bits: int = 0
    backlog_bits: int = 0
    log: list | None = None

    def push(self, pkt: Packet):
        if self.packets and pkt.arrival_tti < self.packets[-1].arrival_tti:
            raise ValueError("packets must arrive in order")
        self.packets.append(pkt)
        self.generated += 1
        self.backlog_bits += pkt.remaining_bits

    def drop_expired(self, tti: int, max_delay_tti: int | None):
        if max_delay_tti is None:
            return
        pk = self.packets
        while pk and tti - pk[0].arrival_tti > max_delay_tti:
            p = pk.popleft()
            self.backlog_bits -= p.remaining_bits
            self.dropped += 1
            if self.log is not None:
                self.log.append((self.ue_id, p.arrival_tti, None))

    def serve(self, bits: float, tti: int, max_delay_tti: int | None = None) -> int:
        """Drain up to ``bits`` FCFS at TTI ``tti``; returns bits actually sent."""
        bits = int(bits)
        sent = 0
        pk = self.packets
        while bits > 0 and pk:
            head = pk[0]
            take = head.remaining_bits if head.remaining_bits <= bits else bits
            head.remaining_bits -= take
            bits -= take
            sent += take
            if head.remaining_bits == 0:
                pk.popleft()
                self.delivered += 1
                if max_delay_tti is None or tti - head.arrival_tti + 1 <= max_delay_tti:
                    self.delivered_within_deadline += 1
                if self.log is not None:
                    self.log.append((self.ue_id, head.arrival_tti, tti))
        self.backlog_bits -= sent
        self.delivered_bits += sent
        return sent

    def counters(self):
        return (self.delivered, self.dropped, self.delivered_within_deadline, self.delivered_bits)


def serve_and_account(q: FlowQueue, bits_served: float, tti: int, max_delay_tti: int | None) -> FlowQueue:
    """Drop packets older than ``max_delay_tti``, then serve FCFS. Mutates ``q``."""
    if bits_served < 0:
        raise ValueError("bits_served must be non-negative")
    q.drop_expired(tti, max_delay_tti)
    q.serve(bits_served, tti, max_delay_tti)
    return q


def generate_urllc(tti: int, ues, period: int = URLLC_PERIOD_TTI, size: int = URLLC_PACKET_BITS,
                   deadline: int = URLLC_DEADLINE_TTI) -> list:
    """``ues`` is an iterable of ``(ue_id, phase_offset)``."""
    return [Packet(uid, tti, size, size, tti + deadline)
            for uid, phase in ues if (tti - phase) % period == 0]


@dataclass
class TrafficTrace:
    demands: dict  # (window, ue_id) -> bits

    def demand(self, window: int, ue_id: int) -> int:
        try:
            return self.demands[(window, ue_id)]
        except KeyError:
            raise TraceExhausted(f"trace exhausted at window {window}, ue {ue_id}") from None

    def series(self, ue_id: int) -> np.ndarray:
        ks = sorted(k for k, u in self.demands if u == ue_id)
        return np.array([self.demands[(k, ue_id)] for k in ks], dtype=float)

    @property
    def ues(self):
        return sorted({u for _, u in self.demands})

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["window", "ue_id", "bits"])
            for (k, u), bits in sorted(self.demands.items()):
                w.writerow([k, u, bits])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = csv.DictReader(fh)
            demands = {}
            for r in rows:
                bits = int(float(r["bits"]))
                if bits < 0:
                    raise ValueError("negative demand in trace")
                demands[(int(r["window"]), int(r["ue_id"]))] = bits
        return cls(demands)


def generate_embb(window: int, trace: TrafficTrace, ues, window_ttis: int,
                  packet_bits: int = EMBB_PACKET_BITS) -> list:
    """Packetize each UE's window demand, spreading arrivals evenly over the window."""
    out = []
    start = window * window_ttis
    for uid in ues:
        d = trace.demand(window, uid)
        n = math.ceil(d / packet_bits)
        for i in range(n):
            size = packet_bits if i < n - 1 else d - packet_bits * (n - 1)
            out.append(Packet(uid, start + (i * window_ttis) // n, size, size, None))
    out.sort(key=lambda p: p.arrival_tti)
    return out


def synth_embb_trace(ues, windows: int, seed: int, base: float = 5e6, amp: float = 1e6,
                     period: float = 60.0, ar_coef: float = 0.8, noise_std: float = 5e5) -> TrafficTrace:
    """Sinusoid plus stationary AR(1) noise, clipped at zero. ``noise_std`` is the
    stationary standard deviation of the AR(1) component."""
    rng = np.random.default_rng(seed)
    k = np.arange(windows)
    innov = noise_std * math.sqrt(1.0 - ar_coef ** 2)
    demands = {}
    for uid in ues:
        noise = np.empty(windows)
        x = noise_std * rng.standard_normal()
        for i in range(windows):
            noise[i] = x
            x = ar_coef * x + innov * rng.standard_normal()
        series = np.maximum(0.0, base + amp * np.sin(2 * np.pi * k / period) + noise)
        for i in range(windows):
            demands[(i, uid)] = int(round(series[i]))
    return TrafficTrace(demands)
