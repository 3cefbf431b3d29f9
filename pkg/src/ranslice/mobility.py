"""Pedestrian (eMBB) and route-following vehicle (C-V2X) mobility.

The road network is nine segments A..I joined at six signalised
intersections. Every route is 7.5 km long. Coordinates are metres in a
plane where BS2 sits on the junction where D and E merge into G.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

KMH = 1.0 / 3.6
V_CROSS = 20 * KMH
V_MAX = 70 * KMH
ACCEL = 2.0
DECEL = 4.0
LIGHT_CYCLE_S = 60.0
LIGHT_RED_S = 30.0
COVERAGE_M = 500.0

CRUISING = "cruising"
DECELERATING = "decelerating"
STOPPED = "stopped"
CROSSING = "crossing"
ACCELERATING = "accelerating"

STRAIGHT, LEFT, RIGHT = "straight", "left", "right"

SEGMENT_POINTS = {
    "A": [(-500, 0), (0, 0)],
    "B": [(0, 0), (0, 1500), (1500, 1500)],
    "C": [(0, 0), (1500, 0)],
    "D": [(1500, 1500), (3000, 1500)],
    "E": [(1500, 0), (1500, 750), (3000, 750), (3000, 1500)],
    "F": [(1500, 0), (3000, 0)],
    "G": [(3000, 1500), (4500, 1500)],
    "H": [(3000, 0), (4500, 0), (4500, 1500)],
    "I": [(4500, 1500), (5500, 1500)],
}
DEFAULT_ROUTES = ("ABDGI", "ACEGI", "ACFHI")
BS2_POS = (3000.0, 1500.0)


def _polyline_length(points) -> float:
    return float(sum(math.dist(a, b) for a, b in zip(points, points[1:])))


def _turn(d_in, d_out) -> str:
    cross = d_in[0] * d_out[1] - d_in[1] * d_out[0]
    if abs(cross) < 1e-9:
        return STRAIGHT
    return LEFT if cross > 0 else RIGHT


def _unit(a, b):
    dx, dy = b[0] - a[0], b[1] - a[1]
    n = math.hypot(dx, dy)
    return dx / n, dy / n


@dataclass(frozen=True)
class Crossing:
    arc: float
    node: tuple
    approach: str
    turn: str


@dataclass
class Route:
    segments: str
    vertices: np.ndarray
    cum: np.ndarray
    crossings: list

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def position(self, arc: float):
        arc = min(max(arc, 0.0), self.length)
        i = min(bisect.bisect_right(self.cum, arc) - 1, len(self.cum) - 2)
        frac = (arc - self.cum[i]) / (self.cum[i + 1] - self.cum[i])
        p, q = self.vertices[i], self.vertices[i + 1]
        return (p[0] + frac * (q[0] - p[0]), p[1] + frac * (q[1] - p[1]))

    def segment_at(self, arc: float) -> str:
        ends = [c.arc for c in self.crossings]
        return self.segments[bisect.bisect_right(ends, arc)]


@dataclass
class RoadTopology:
    segments: dict
    routes: list
    road_width: float = 7.0
    light_offsets: dict = field(default_factory=dict)

    @classmethod
    def default(cls, rng=None, routes=DEFAULT_ROUTES, road_width=7.0):
        segs = {k: [tuple(map(float, p)) for p in v] for k, v in SEGMENT_POINTS.items()}
        built = []
        for name in routes:
            verts, crossings = [], []
            for i, s in enumerate(name):
                pts = segs[s]
                if verts and tuple(verts[-1]) != pts[0]:
                    raise ValueError(f"route {name} is disconnected at {s}")
                verts.extend(pts if not verts else pts[1:])
                if i + 1 < len(name):
                    nxt = segs[name[i + 1]]
                    turn = _turn(_unit(pts[-2], pts[-1]), _unit(nxt[0], nxt[1]))
                    crossings.append((len(verts) - 1, pts[-1], s, turn))
            verts = np.asarray(verts)
            cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(verts, axis=0).T))])
            cr = [Crossing(float(cum[vi]), node, app, turn) for vi, node, app, turn in crossings]
            built.append(Route(name, verts, cum, cr))
        nodes = sorted({c.node for r in built for c in r.crossings})
        offsets = {}
        if rng is not None:
            offsets = {n: float(rng.uniform(0, LIGHT_CYCLE_S)) for n in nodes}
        return cls(segments={k: (v, _polyline_length(v)) for k, v in segs.items()},
                   routes=built, road_width=road_width, light_offsets=offsets)

    @property
    def intersections(self):
        approaches = {}
        for r in self.routes:
            for c in r.crossings:
                approaches.setdefault(c.node, set()).add(c.approach)
        return {n: sorted(a) for n, a in approaches.items()}

    def is_red(self, node, approach: str, clock: float) -> bool:
        approaches = self.intersections[node]
        shift = LIGHT_RED_S * approaches.index(approach)
        phase = (clock + self.light_offsets.get(node, 0.0) + shift) % LIGHT_CYCLE_S
        return phase < LIGHT_RED_S


@dataclass
class VehicleState:
    uid: int
    route: int
    arc_position: float
    speed: float
    target_speed: float
    phase: str = CRUISING
    stop_timer: float = 0.0
    next_crossing: int = 0
    must_stop: bool = False
    done: bool = False


@dataclass
class PedestrianState:
    uid: int
    position: tuple
    heading: float
    speed: float


class VehicleSource:
    """Deterministic arrivals at "Start" at ``rate`` vehicles per second."""

    def __init__(self, rate: float = 1.0, first_uid: int = 10_000):
        self.rate = rate
        self.spawned = 0
        self.first_uid = first_uid

    def spawn(self, clock: float, rng, n_routes: int = 3) -> list:
        due = math.ceil(clock * self.rate - 1e-9)
        out = []
        while self.spawned < due:
            out.append(VehicleState(
                uid=self.first_uid + self.spawned,
                route=int(rng.integers(n_routes)),
                arc_position=0.0,
                speed=0.0,
                target_speed=float(rng.uniform(40 * KMH, V_MAX)),
            ))
            out[-1].speed = out[-1].target_speed
            self.spawned += 1
        return out


def spawn_vehicles(clock: float, rng, source: VehicleSource | None = None) -> list:
    return (source or VehicleSource()).spawn(clock, rng)


def _approach_check(v: VehicleState, route: Route, topo: RoadTopology, dt: float, clock: float):
    if v.next_crossing >= len(route.crossings):
        return
    c = route.crossings[v.next_crossing]
    dist = c.arc - v.arc_position
    if dist <= (v.speed ** 2) / (2 * DECEL) + v.speed * dt:
        v.must_stop = c.turn != RIGHT and topo.is_red(c.node, c.approach, clock)
        v.phase = DECELERATING


def step_vehicle(v: VehicleState, topo: RoadTopology, dt: float, rng, clock: float = 0.0) -> VehicleState:
    """Advance one vehicle by ``dt`` seconds (in place; returns ``v``)."""
    route = topo.routes[v.route]
    crossing = route.crossings[v.next_crossing] if v.next_crossing < len(route.crossings) else None

    if v.phase in (CRUISING, ACCELERATING):
        if v.phase == ACCELERATING:
            goal = V_CROSS if v.must_stop else v.target_speed
            new = min(goal, v.speed + ACCEL * dt)
            v.arc_position += 0.5 * (v.speed + new) * dt
            v.speed = new
            if new >= goal:
                v.phase = CROSSING if goal == V_CROSS else CRUISING
        else:
            v.speed = v.target_speed
            v.arc_position += v.speed * dt
        if v.phase in (CRUISING, ACCELERATING) and not v.must_stop:
            _approach_check(v, route, topo, dt, clock)
    elif v.phase == DECELERATING:
        goal = 0.0 if v.must_stop else V_CROSS
        new = max(goal, v.speed - DECEL * dt)
        v.arc_position += 0.5 * (v.speed + new) * dt
        v.speed = new
        if v.must_stop:
            if v.arc_position >= crossing.arc or new <= 0.0:
                v.arc_position = min(v.arc_position, crossing.arc)
                v.speed = 0.0
                v.phase = STOPPED
                v.stop_timer = float(rng.uniform(1.0, 60.0))
        elif v.arc_position >= crossing.arc:
            v.speed = V_CROSS
            v.phase = CROSSING
    elif v.phase == STOPPED:
        v.stop_timer -= dt
        if v.stop_timer <= 0.0:
            v.stop_timer = 0.0
            v.phase = ACCELERATING
    elif v.phase == CROSSING:
        v.speed = V_CROSS
        v.arc_position += v.speed * dt

    clearing = v.phase == CROSSING or (v.phase == ACCELERATING and v.must_stop)
    if clearing and crossing is not None and v.arc_position >= crossing.arc + topo.road_width:
        v.next_crossing += 1
        v.must_stop = False
        v.phase = ACCELERATING
    if v.arc_position >= route.length:
        v.arc_position = route.length
        v.done = True
    return v


def reflect(x: float, lo: float, hi: float):
    """Mirror ``x`` back into ``[lo, hi]``; returns (x, flipped)."""
    flipped = False
    while x < lo or x > hi:
        x = 2 * lo - x if x < lo else 2 * hi - x
        flipped = not flipped
    return x, flipped


def step_pedestrian(p: PedestrianState, dt: float, rng, bounds, turn_rate: float = 0.01) -> PedestrianState:
    """Random-direction walk reflected at ``bounds = (xmin, ymin, xmax, ymax)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    heading = p.heading
    if rng.random() < min(1.0, turn_rate * dt):
        heading = float(rng.uniform(-math.pi, math.pi))
    x = p.position[0] + p.speed * dt * math.cos(heading)
    y = p.position[1] + p.speed * dt * math.sin(heading)
    x, fx = reflect(x, bounds[0], bounds[2])
    y, fy = reflect(y, bounds[1], bounds[3])
    if fx:
        heading = math.pi - heading
    if fy:
        heading = -heading
    return PedestrianState(p.uid, (x, y), heading, p.speed)


def in_coverage(pos, bs_pos, radius: float = COVERAGE_M) -> bool:
    return math.dist(pos, bs_pos) <= radius


class MobilityModel:
    """All UEs of one scenario, advanced in lock-step."""

    def __init__(self, topo: RoadTopology, rng, n_pedestrians: int, bs_pos=BS2_POS,
                 vehicle_rate: float = 1.0, ped_half_width: float = 300.0):
        self.topo = topo
        self.rng = rng
        self.bs_pos = tuple(bs_pos)
        self.clock = 0.0
        self.source = VehicleSource(vehicle_rate)
        self.vehicles: dict[int, VehicleState] = {}
        self.bounds = (bs_pos[0] - ped_half_width, bs_pos[1] - ped_half_width,
                       bs_pos[0] + ped_half_width, bs_pos[1] + ped_half_width)
        self.pedestrians = [
            PedestrianState(i, (float(rng.uniform(self.bounds[0], self.bounds[2])),
                                float(rng.uniform(self.bounds[1], self.bounds[3]))),
                            float(rng.uniform(-math.pi, math.pi)), float(rng.uniform(1.0, 2.0)))
            for i in range(n_pedestrians)
        ]

    def advance(self, dt: float):
        for v in self.source.spawn(self.clock, self.rng, len(self.topo.routes)):
            self.vehicles[v.uid] = v
        finished = []
        for v in self.vehicles.values():
            step_vehicle(v, self.topo, dt, self.rng, self.clock)
            if v.done:
                finished.append(v.uid)
        for uid in finished:
            del self.vehicles[uid]
        self.pedestrians = [step_pedestrian(p, dt, self.rng, self.bounds) for p in self.pedestrians]
        self.clock += dt

    def vehicle_position(self, v: VehicleState):
        return self.topo.routes[v.route].position(v.arc_position)

    def covered_vehicles(self):
        """(uid, (x, y)) for vehicles inside the BS coverage disc."""
        out = []
        bx, by = self.bs_pos
        r2 = COVERAGE_M ** 2
        for v in self.vehicles.values():
            x, y = self.vehicle_position(v)
            if (x - bx) ** 2 + (y - by) ** 2 <= r2:
                out.append((v.uid, (x, y)))
        return out
