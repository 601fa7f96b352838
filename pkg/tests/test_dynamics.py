import math

import numpy as np
import pytest

from oracles import transit_time_1d
from poisim import _kernels
from poisim.dynamics import (AgentState, EntrySchedule, Phase, Role, SimulationIntegrityError,
                             SocialForceParams, World, build_entry_schedule, compute_goal_force,
                             compute_obstacle_force, compute_pedestrian_force, infector_slots,
                             integrate_step, simulate, update_behavior)
from poisim.scenario import ConfigError, PopulationSpec, RoomSpec, build_poi_grid

P = SocialForceParams()
ROOM = RoomSpec()


def small_world(seed=0, total=8, infectors=1, n_stop=2, t_stop=20.0, dwell=120.0, n_pois=4,
                spacing=2.0, kernels=None):
    pop = PopulationSpec(total=total, infectors=infectors, dwell=dwell)
    return World(ROOM, build_poi_grid(n_pois, spacing, ROOM), n_stop, t_stop, pop,
                 np.random.default_rng(seed), kernels=kernels)


# -- entry schedule -----------------------------------------------------------

def test_infector_slots_ten_two():
    assert infector_slots(10, 2) == [2, 7]  # entry positions 3 and 8
    sched = build_entry_schedule(PopulationSpec(total=10, infectors=2), np.random.default_rng(0))
    roles = sched.roles.tolist()
    assert roles == [0, 0, 1, 0, 0, 0, 0, 1, 0, 0]


@pytest.mark.parametrize("total,inf", [(60, 2), (61, 3), (100, 7), (10477, 72), (5, 5)])
def test_infectors_evenly_spaced(total, inf):
    slots = infector_slots(total, inf)
    gaps = np.diff(slots) - 1
    assert len(set(gaps.tolist())) <= 1
    assert len(slots) == inf and slots[-1] < total


def test_no_infectors():
    sched = build_entry_schedule(PopulationSpec(total=12, infectors=0), np.random.default_rng(0))
    assert (sched.roles == Role.SUSCEPTIBLE).all()


def test_too_many_infectors():
    with pytest.raises(ConfigError):
        PopulationSpec(total=3, infectors=4)
    with pytest.raises(ValueError):
        infector_slots(3, 4)


def test_entry_gaps():
    means = []
    for seed in range(30):
        s = build_entry_schedule(PopulationSpec(total=1000, infectors=10), np.random.default_rng(seed))
        assert (np.diff(s.arrivals) > 0).all()
        assert s.arrivals[0] == 0.0
        means.append(np.diff(s.arrivals).mean())
    assert abs(np.mean(means) - 5.0) < 0.5


# -- forces -------------------------------------------------------------------

def test_goal_force_examples():
    a = AgentState(0, (5, 5), (0, 0), target=(9, 5))
    np.testing.assert_allclose(compute_goal_force(a), [80 * 1.34 / 0.5, 0.0])
    a = AgentState(0, (5, 5), (0, 1.34), target=(5, 9))
    np.testing.assert_allclose(compute_goal_force(a), [0, 0], atol=1e-12)
    a = AgentState(0, (5, 5), (0.3, -0.2), target=(5, 5))
    np.testing.assert_allclose(compute_goal_force(a), [-80 * 0.3 / 0.5, 80 * 0.2 / 0.5])


def test_pedestrian_far_field():
    r = 0.4
    a = AgentState(0, (5.0, 5.0), (0.5, 0.0))
    b = AgentState(1, (5.0 + r + 10 * P.B, 5.0), (-0.5, 0.3))
    f = compute_pedestrian_force(a, b)
    np.testing.assert_allclose(f, [-P.A * math.exp(-10), 0.0], rtol=1e-12, atol=1e-15)


def test_pedestrian_contact_gate():
    a = AgentState(0, (5.0, 5.0), (0.0, 1.0))
    b = AgentState(1, (5.45, 5.0), (0.0, -1.0))
    f = compute_pedestrian_force(a, b)
    assert f[1] == 0.0  # no friction without contact
    c = AgentState(1, (5.35, 5.0), (0.0, -1.0))
    g = compute_pedestrian_force(a, c)
    assert g[0] < -P.k * 0.05 and g[1] != 0.0


def test_pedestrian_antisymmetric():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = AgentState(0, rng.uniform(4, 6, 2), rng.normal(0, 1, 2))
        b = AgentState(1, rng.uniform(4, 6, 2), rng.normal(0, 1, 2))
        np.testing.assert_allclose(compute_pedestrian_force(a, b), -compute_pedestrian_force(b, a),
                                   rtol=1e-12, atol=1e-9)


def test_pedestrian_coincident_finite():
    a = AgentState(0, (5.0, 5.0))
    b = AgentState(1, (5.0, 5.0))
    fa, fb = compute_pedestrian_force(a, b), compute_pedestrian_force(b, a)
    assert np.isfinite(fa).all() and fa[0] > 0 and fa[1] == 0
    np.testing.assert_allclose(fa, -fb)


def test_obstacle_far_from_walls():
    a = AgentState(0, (11.0, 11.0))
    assert np.hypot(*compute_obstacle_force(a, ROOM)) < P.A * math.exp(-4 / P.B)


def test_obstacle_touching_wall():
    a = AgentState(0, (0.15, 11.0), (0.0, 0.5))
    f = compute_obstacle_force(a, ROOM)
    assert f[0] > P.k * 0.05
    assert f[1] < 0  # friction opposes sliding along the wall


def test_stopped_agent_is_obstacle(backend):
    pos = np.array([[5.0, 11.0], [6.0, 11.05]])
    vel = np.array([[1.34, 0.0], [0.0, 0.0]])
    tgt = np.array([[10.0, 11.0], [6.0, 11.05]])
    mov = np.array([1, 0], dtype=np.uint8)
    ys = []
    for _ in range(60):
        backend.advance(pos, vel, tgt, mov, *P.kernel_args(ROOM), 0.04, P.max_speed)
        ys.append(pos[0, 1])
        assert (pos[1] == [6.0, 11.05]).all() and (vel[1] == 0).all()
    assert min(ys) < 11.0 - 0.02  # walker is pushed aside
    assert np.hypot(*(pos[0] - pos[1])) > 0.3


# -- integration ----------------------------------------------------------------

def test_lone_transit_matches_ode(backend):
    pos = np.array([[6.0, 11.0]])
    vel = np.zeros((1, 2))
    tgt = np.array([[18.0, 11.0]])
    mov = np.ones(1, np.uint8)
    t = 0.0
    speed_at_5tau = None
    while pos[0, 0] < 16.0:
        backend.advance(pos, vel, tgt, mov, *P.kernel_args(ROOM), 0.04, P.max_speed)
        t += 0.04
        if speed_at_5tau is None and t >= 5 * P.tau - 1e-9:
            speed_at_5tau = np.hypot(*vel[0])
    oracle = transit_time_1d(10.0)
    assert abs(t - oracle) / oracle < 0.10
    assert abs(speed_at_5tau - P.desired_speed) / P.desired_speed < 0.01


def test_integrate_zero_agents():
    w = small_world(total=0, infectors=0)
    integrate_step(w)
    assert w.step_index == 1 and w.pos.shape == (0, 2)


def test_integrate_rejects_other_dt():
    w = small_world()
    with pytest.raises(ValueError):
        integrate_step(w, 0.1)


def test_integrity_error_names_agent():
    class Broken:
        @staticmethod
        def advance(pos, vel, *args):
            pos[:] = np.nan

    w = small_world(kernels=Broken())
    update_behavior(w)
    with pytest.raises(SimulationIntegrityError, match="agent 0 at step 0"):
        integrate_step(w)


def test_stall_guard():
    w = small_world(total=2, infectors=0)
    w.update_behavior()
    w.phase[0] = Phase.TO_POI
    w.target[0] = (-50.0, 11.0)
    w._best[0] = 0.0  # never improves
    with pytest.raises(SimulationIntegrityError):
        simulate(w, max_time=1.0)


# -- behaviour ------------------------------------------------------------------

def _phase_runs(log, a):
    seq = log.phases[log.present[:, a], a]
    seq = np.where(seq == Phase.TO_POI, Phase.WALKING, seq)
    keep = np.concatenate([[True], seq[1:] != seq[:-1]])
    return [Phase(p).name for p in seq[keep]]


def test_two_stop_sequence():
    w = small_world(seed=3, total=6, n_stop=2, t_stop=10.0, dwell=90.0)
    log = simulate(w, log=True)
    for a in range(6):
        assert _phase_runs(log, a) == ["WALKING", "STOPPED", "WALKING", "STOPPED", "WALKING", "EXITING"]


def test_no_stops_pure_walking():
    w = small_world(seed=4, total=5, n_stop=0, t_stop=60.0, dwell=60.0)
    log = simulate(w, log=True)
    for a in range(5):
        assert _phase_runs(log, a) == ["WALKING", "EXITING"]
    assert w.stop_log == []


def test_dwell_elapsed_mid_walk_exits_immediately():
    w = small_world(seed=5, total=6, n_stop=1, t_stop=5.0, dwell=60.0)
    log = simulate(w, log=True)
    last_stop_end = {a: end for a, _, _, end in w.stop_log}
    checked = 0
    for a in range(6):
        steps = np.flatnonzero(log.phases[:, a] == Phase.EXITING)
        due = w.enter_step[a] + w.dwell_steps
        if last_stop_end[a] < due:
            assert steps[0] == due
            checked += 1
    assert checked > 0


def test_stop_counts_and_durations_exact():
    w = small_world(seed=6, total=20, infectors=2, n_stop=3, t_stop=12.0, dwell=120.0)
    simulate(w)
    per_agent = {a: [] for a in range(20)}
    for a, poi, start, end in w.stop_log:
        per_agent[a].append(end - start)
        assert 0 <= poi < 4
    for durations in per_agent.values():
        assert len(durations) == 3
        assert all(d == w.stop_steps for d in durations)
    assert (w.stops_done == 3).all()


def test_in_room_time_bounds():
    w = small_world(seed=7, total=12, n_stop=2, t_stop=15.0, dwell=120.0, n_pois=16, spacing=4.4)
    simulate(w)
    in_room = (w.exit_step - w.enter_step) * w.dt
    diag = math.hypot(22, 22)
    travel = diag / P.desired_speed + 5 * P.tau
    assert (in_room >= 120.0).all()
    assert (in_room <= 120.0 + 2 * travel + P.stall_time).all()


def test_random_targets_clear_of_walls_and_stopped():
    w = small_world(seed=8, total=30)
    w.update_behavior()
    w.phase[:10] = Phase.STOPPED
    w.pos[:10] = np.random.default_rng(0).uniform(2, 20, (10, 2))
    for _ in range(200):
        t = w._random_target()
        assert 0.5 <= t[0] <= 21.5 and 0.5 <= t[1] <= 21.5
        assert np.hypot(*(w.pos[:10] - t).T).min() >= 0.5 + P.radius


def test_world_state_in_room():
    w = small_world(seed=9, total=10)
    simulate(w, observers=[lambda wd: _assert_inside(wd)])


def _assert_inside(w):
    p = w.pos[w.present]
    assert (p >= P.radius - 1e-12).all() and (p <= 22 - P.radius + 1e-12).all()


def test_determinism_bit_exact():
    logs = [simulate(small_world(seed=10, total=10), log=True) for _ in range(2)]
    np.testing.assert_array_equal(logs[0].positions, logs[1].positions)
    np.testing.assert_array_equal(logs[0].phases, logs[1].phases)


def test_backends_same_behaviour():
    if len(_kernels.BACKENDS) < 2:
        pytest.skip("compiled kernels not built")
    a = small_world(seed=11, total=6, kernels=_kernels.get_backend("python"))
    b = small_world(seed=11, total=6, kernels=_kernels.get_backend("cython"))
    simulate(a), simulate(b)
    assert [s[:2] for s in a.stop_log] == [s[:2] for s in b.stop_log]
    assert (a.stops_done == b.stops_done).all()


def test_explicit_schedule_and_log_csv(tmp_path):
    sched = EntrySchedule(np.array([0.0, 1.0]), np.array([1, 0], dtype=np.int8))
    w = World(ROOM, build_poi_grid(4, 2.0, ROOM), 1, 4.0, PopulationSpec(total=2, infectors=1, dwell=20.0),
              np.random.default_rng(0), schedule=sched)
    log = simulate(w, log=True)
    path = tmp_path / "t.csv"
    log.to_csv(path)
    head = path.read_text().splitlines()[:2]
    assert head[0] == "step,time_s,agent_id,role,phase,x_m,y_m"
    assert head[1].startswith("0,0.00,0,infector,walking,")
    assert log.agent_steps(1)[0] == 25
