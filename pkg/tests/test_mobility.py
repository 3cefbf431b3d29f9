import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ranslice import mobility as mb
from ranslice.mobility import (ACCELERATING, CRUISING, DECELERATING, STOPPED, MobilityModel, PedestrianState,
                               RoadTopology, VehicleSource, VehicleState)


@pytest.fixture(scope="module")
def topo():
    return RoadTopology.default(np.random.default_rng(0))


def test_segment_lengths(topo):
    lengths = {k: v[1] for k, v in topo.segments.items()}
    assert lengths["A"] == 500
    for k in "CDFG":
        assert lengths[k] == 1500
    for k in "BEH":
        assert lengths[k] == 3000
    assert lengths["I"] == 1000
    assert topo.road_width == 7.0


def test_routes_are_connected_and_equal_length(topo):
    assert [r.segments for r in topo.routes] == list(mb.DEFAULT_ROUTES)
    for r in topo.routes:
        assert r.length == pytest.approx(7500.0)
        assert len(r.crossings) == len(r.segments) - 1
    with pytest.raises(ValueError, match="disconnected"):
        RoadTopology.default(routes=("ABE",))


def test_bs_sits_on_an_intersection(topo):
    assert mb.BS2_POS in topo.intersections


def test_spawn_one_vehicle_per_second():
    src = VehicleSource(1.0)
    rng = np.random.default_rng(1)
    spawned = []
    for k in range(100):
        spawned += src.spawn(k * 0.1, rng)
    assert len(spawned) == 10
    assert len(VehicleSource(1.0).spawn(10.0, rng)) == 10
    assert all(40 / 3.6 <= v.target_speed <= 70 / 3.6 for v in spawned)


def test_spawn_routes_seeded():
    a = [v.route for v in VehicleSource().spawn(50.0, np.random.default_rng(3))]
    b = [v.route for v in VehicleSource().spawn(50.0, np.random.default_rng(3))]
    assert a == b


def test_spawn_route_distribution():
    routes = Counter(v.route for v in VehicleSource().spawn(3000.0, np.random.default_rng(4)))
    for r in range(3):
        assert routes[r] / 3000 == pytest.approx(1 / 3, abs=0.03)


def _vehicle(topo, arc, speed, phase=CRUISING, target=None, route=0):
    crossings = [c.arc for c in topo.routes[route].crossings]
    return VehicleState(uid=1, route=route, arc_position=arc, speed=speed,
                        target_speed=target if target is not None else speed, phase=phase,
                        next_crossing=sum(a < arc for a in crossings))


def test_cruise_constant_speed(topo):
    v = _vehicle(topo, 100.0, 20.0)
    mb.step_vehicle(v, topo, 1.0, np.random.default_rng(0))
    assert v.arc_position == pytest.approx(120.0)


def test_acceleration_time_and_distance(topo):
    v = _vehicle(topo, 600.0, 40 / 3.6, phase=ACCELERATING, target=70 / 3.6, route=1)
    start = v.arc_position
    dt, t = 0.001, 0.0
    while v.phase == ACCELERATING:
        mb.step_vehicle(v, topo, dt, np.random.default_rng(0))
        t += dt
    assert t == pytest.approx(4.167, abs=2e-3)
    assert v.arc_position - start == pytest.approx(63.66, abs=0.05)


def test_deceleration_to_stop(topo):
    route = topo.routes[1]
    c = route.crossings[0]
    v = _vehicle(topo, c.arc - 40.0, 50 / 3.6, phase=DECELERATING, route=1)
    v.must_stop = True
    dt, t = 0.001, 0.0
    while v.phase == DECELERATING:
        mb.step_vehicle(v, topo, dt, np.random.default_rng(0))
        t += dt
    assert v.phase == STOPPED
    assert t == pytest.approx(3.47, abs=5e-3)
    assert 1.0 <= v.stop_timer <= 60.0


def test_pedestrian_displacement():
    p = PedestrianState(0, (0.0, 0.0), 0.3, 1.5)
    q = mb.step_pedestrian(p, 1.0, np.random.default_rng(0), (-100, -100, 100, 100), turn_rate=0.0)
    assert math.dist(p.position, q.position) == pytest.approx(1.5)


def test_pedestrian_speed_invariant_and_bounds():
    rng = np.random.default_rng(2)
    bounds = (-20.0, -20.0, 20.0, 20.0)
    p = PedestrianState(0, (0.0, 0.0), 1.0, 1.7)
    for _ in range(10_000):
        p = mb.step_pedestrian(p, 1.0, rng, bounds)
        assert 1.0 <= p.speed <= 2.0
        assert bounds[0] <= p.position[0] <= bounds[2] and bounds[1] <= p.position[1] <= bounds[3]


@given(st.floats(-50, 50), st.floats(0.01, 5))
def test_reflect_one_step_past_bound(x, overshoot):
    lo, hi = -50.0, 50.0
    y, flipped = mb.reflect(hi + overshoot, lo, hi)
    assert y == pytest.approx(hi - overshoot) and flipped
    y, flipped = mb.reflect(lo - overshoot, lo, hi)
    assert y == pytest.approx(lo + overshoot) and flipped
    assert mb.reflect(x, lo, hi) == (x, False)


def test_in_coverage_closed_ball():
    bs = (0.0, 0.0)
    assert mb.in_coverage(bs, bs)
    assert mb.in_coverage((500.0, 0.0), bs)
    assert not mb.in_coverage((500.1, 0.0), bs)


def test_lights_alternate_between_approaches(topo):
    for node, apps in topo.intersections.items():
        if len(apps) == 2:
            for clock in np.linspace(0, 120, 37):
                assert topo.is_red(node, apps[0], clock) != topo.is_red(node, apps[1], clock)


@settings(max_examples=3)
@given(st.integers(0, 10_000))
def test_vehicle_kinematic_invariants(seed):
    topo = RoadTopology.default(np.random.default_rng(seed))
    model = MobilityModel(topo, np.random.default_rng(seed), 0, vehicle_rate=0.2)
    dt = 0.1
    last = {}
    visited = {}
    stop_start = {}
    routes = {}
    for _ in range(8_000):
        model.advance(dt)
        for v in model.vehicles.values():
            route = topo.routes[v.route]
            assert 0.0 <= v.speed <= v.target_speed + 1e-9 <= mb.V_MAX + 1e-9
            prev = last.get(v.uid)
            if prev is not None:
                assert v.arc_position >= prev[0]
                moved = math.dist(route.position(v.arc_position), route.position(prev[0]))
                assert moved <= mb.V_MAX * dt + 1e-9
            seg = route.segment_at(v.arc_position)
            seq = visited.setdefault(v.uid, [seg])
            if seq[-1] != seg:
                seq.append(seg)
            if v.phase == STOPPED:
                assert 0.0 <= v.stop_timer <= 60.0
                if prev is None or prev[1] != STOPPED:
                    stop_start[v.uid] = (model.clock, v.stop_timer)
            elif prev is not None and prev[1] == STOPPED:
                begun, timer = stop_start.pop(v.uid)
                assert timer >= 1.0 - dt
                assert model.clock - begun >= timer - 1e-9
            last[v.uid] = (v.arc_position, v.phase)
            routes[v.uid] = v.route
    finished = [u for u in visited if u not in model.vehicles]
    assert finished
    for uid, seq in visited.items():
        name = topo.routes[routes[uid]].segments
        if uid in finished:
            assert "".join(seq) == name
        else:
            assert name.startswith("".join(seq))
