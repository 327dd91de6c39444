import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smfnet import rng as rngmod
from smfnet.models import (
    OMEGA_MIN,
    AgentModel,
    RelativeSensorModel,
    Topology,
    custom_linear_scenario,
    double_integrator,
    generate_observations,
    initial_conditions,
    linear_scenario,
    step_truth,
    unicycle_scenario,
    unicycle_transition,
)
from smfnet.sets import IntervalBox as Box


def test_linear_scenario_parameters():
    sc = linear_scenario()
    assert sc.params["T"] == np.pi / 8
    assert sc.params["gamma"] == 0.5
    assert sc.topology.n_agents == 5
    T = np.pi / 8
    A, B = double_integrator(T)
    assert np.allclose(A, np.kron([[1, T], [0, 1]], np.eye(2)))
    assert np.allclose(B, np.kron([[T * T / 2], [T]], np.eye(2)))
    for a in sc.agents.values():
        assert np.allclose(a.C, np.eye(4))
        assert np.allclose(a.noise.lower, -0.5) and np.allclose(a.noise.upper, 0.5)
        assert np.allclose(a.meas_noise.upper, 0.5)
    for s in sc.relative.values():
        assert np.allclose(s.D, np.eye(4)) and np.allclose(s.noise.upper, 0.5)


def test_double_integrator_on_singleton():
    T = np.pi / 8
    A1 = np.array([[1.0, T], [0.0, 1.0]])
    assert np.allclose(A1 @ [1.0, 1.0], [1 + np.pi / 8, 1.0])
    A, _ = double_integrator(T)
    # state ordering is (p_x, p_y, v_x, v_y)
    assert np.allclose(A @ [1.0, 2.0, 1.0, -1.0], [1 + T, 2 - T, 1.0, -1.0])


def test_consensus_input_vanishes_at_agreement():
    sc = linear_scenario()
    x = np.array([0.3, -1.2, 0.5, 0.1])
    u = sc.inputs({i: x.copy() for i in sc.topology.agents})
    for v in u.values():
        assert np.allclose(v, 0.0)


def test_consensus_input_formula():
    topo = Topology(2, ((2, 1),), (2.0,))
    sc = linear_scenario(topo)
    x1, x2 = np.array([1.0, 0.0, 0.5, 0.0]), np.array([0.0, 2.0, 0.0, 1.0])
    u = sc.inputs({1: x1, 2: x2})
    assert np.allclose(u[1], -2.0 * ((x1[:2] - x2[:2]) + 0.5 * (x1[2:] - x2[2:])))
    assert np.allclose(u[2], 0.0)


def test_unicycle_scenario_parameters():
    sc = unicycle_scenario()
    p = sc.params
    assert p["speed"] == 4.0 and p["r"] == 1.0
    assert p["omegas"] == {1: np.pi / 3, 2: -np.pi / 3, 3: np.pi / 3, 4: -np.pi / 3, 5: np.pi / 3}
    a = sc.agents[1]
    assert np.allclose(a.noise.upper, [0.25, 0.25, np.pi / 24])
    assert np.allclose(a.meas_noise.upper, [0.5, 0.5, np.pi / 24])
    assert a.shared_rows == (0, 1)
    assert all(s.kind == "range" for s in sc.relative.values())


def test_unicycle_rejects_tiny_omega():
    with pytest.raises(ValueError):
        unicycle_transition(4.0, 0.5 * OMEGA_MIN, np.pi / 8)
    with pytest.raises(ValueError):
        unicycle_scenario(omegas={i: 0.0 for i in range(1, 6)})


def test_unicycle_small_omega_approaches_straight_line():
    T, v = np.pi / 8, 4.0
    f = unicycle_transition(v, 1e-5, T)
    for th in (0.0, 0.7, -2.0):
        out = f(np.array([[1.0, -1.0, th]]), np.zeros((1, 3)))[0]
        assert np.isclose(np.hypot(out[0] - 1.0, out[1] + 1.0), v * T, atol=1e-4)
        assert np.allclose(out[:2], [1.0 + v * T * np.cos(th), -1.0 + v * T * np.sin(th)], atol=1e-4)


def test_range_sensor_three_four_five():
    s = RelativeSensorModel(1, 2, Box([-1.0], [1.0]), "range", coords=(0, 1))
    assert np.allclose(s.evaluate(np.array([0.0, 0.0, 0.3]), np.array([3.0, 4.0, -1.0])), [[5.0]])


def test_sensor_validation():
    with pytest.raises(ValueError):
        RelativeSensorModel(1, 2, Box([-1.0, -1.0], [1.0, 1.0]), "range")
    with pytest.raises(ValueError):
        RelativeSensorModel(1, 2, Box([-1.0], [1.0]), "bearing")
    with pytest.raises(ValueError):
        RelativeSensorModel(1, 2, Box([-1.0], [1.0]), "custom")
    with pytest.raises(ValueError):
        AgentModel(2, Box([-1.0, -1.0], [1.0, 1.0]), np.eye(2), Box([-1.0], [1.0]), A=np.eye(2))


@pytest.mark.parametrize("edges", [((1, 1),), ((1, 2), (1, 2)), ((1, 3),)])
def test_topology_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        Topology(2, edges)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 7).flatmap(
    lambda n: st.tuples(st.just(n), st.sets(st.tuples(st.integers(1, n), st.integers(1, n)).filter(lambda e: e[0] != e[1])))
))
def test_topology_accessor_identities(arg):
    n, edges = arg
    topo = Topology(n, tuple(sorted(edges)))
    for i in topo.agents:
        assert topo.closed(i)[0] == i
        for j in topo.agents:
            assert (j in topo.in_neighbors(i)) == (i in topo.out_neighbors(j))
            assert (topo.weight(i, j) > 0) == ((j, i) in edges)


def test_ring_topology():
    topo = Topology.ring(5)
    assert topo.in_neighbors(1) == [2, 5]
    assert topo.out_neighbors(3) == [2, 4]
    one_way = Topology.ring(3, bidirectional=False)
    assert one_way.in_neighbors(1) == [3] and one_way.out_neighbors(1) == [2]


def test_constructors_are_pure():
    a, b = linear_scenario(), linear_scenario()
    assert a.topology == b.topology and a.params == b.params
    for i in a.agents:
        assert np.array_equal(a.agents[i].A, b.agents[i].A)
        assert np.array_equal(a.agents[i].B, b.agents[i].B)
    u, v = unicycle_scenario(), unicycle_scenario()
    X, W = np.array([[0.5, -0.5, 0.3]]), np.zeros((1, 3))
    for i in u.agents:
        assert np.array_equal(u.agents[i].propagate(X, W), v.agents[i].propagate(X, W))


def test_zero_noise_linear_step_is_exact():
    topo = Topology(2, ((1, 2),))
    A = np.array([[0.9, 0.2], [-0.1, 1.1]])
    sc = custom_linear_scenario(topo, A, np.eye(2), np.eye(2), [0.0, 0.0], [0.0, 0.0], [0.0, 0.0])
    x = {1: np.array([1.0, -2.0]), 2: np.array([0.5, 0.25])}
    nxt, _ = step_truth(sc, x, seed=3, step=0)
    for i in x:
        assert np.allclose(nxt[i], A @ x[i])
    absolute, relative = generate_observations(sc, nxt, seed=3, step=1)
    for i in x:
        assert np.allclose(absolute[i].y, nxt[i])
    assert np.allclose(relative[(2, 1)].z, nxt[2] - nxt[1])


def test_trajectories_are_deterministic():
    sc = linear_scenario()
    truth, _ = initial_conditions(sc, 11, [-5, -5, -1, -1], [5, 5, 1, 1], 1.0)

    def roll():
        x, out = dict(truth), []
        for k in range(5):
            x, _ = step_truth(sc, x, 11, k)
            ab, rel = generate_observations(sc, x, 11, k + 1)
            out.append((np.concatenate([x[i] for i in sorted(x)]),
                        np.concatenate([ab[i].y for i in sorted(ab)]),
                        np.concatenate([rel[e].z for e in sorted(rel)])))
        return out

    for a, b in zip(roll(), roll()):
        for u, v in zip(a, b):
            assert np.array_equal(u, v)


def test_residuals_inside_declared_ranges():
    sc = unicycle_scenario()
    truth, _ = initial_conditions(sc, 4, [-5, -5, -np.pi], [5, 5, np.pi], 0.5)
    for k in range(30):
        truth, _ = step_truth(sc, truth, 4, k)
        absolute, relative = generate_observations(sc, truth, 4, k + 1)
        for i, obs in absolute.items():
            res = obs.y - truth[i]
            assert np.all(res >= obs.noise.lower) and np.all(res <= obs.noise.upper)
        for (i, j), obs in relative.items():
            res = obs.z - sc.relative[(i, j)].evaluate(truth[i], truth[j])[0]
            assert np.all(res >= -1.0) and np.all(res <= 1.0)


def test_process_noise_covers_its_range():
    # with A = 0 and E = I the next state is the noise draw itself
    topo = Topology(1, ())
    sc = custom_linear_scenario(topo, np.zeros((2, 2)), np.eye(2), np.eye(2), [0.5, 0.2], [0.1, 0.1], [0.1, 0.1])
    draws = np.array([step_truth(sc, {1: np.zeros(2)}, 9, k)[0][1] for k in range(10_000)])
    half = np.array([0.5, 0.2])
    assert np.all(np.abs(draws) <= half)
    coverage = (draws.max(axis=0) - draws.min(axis=0)) / (2 * half)
    assert np.all(coverage >= 0.95)


def test_streams_are_keyed_independently():
    a = rngmod.stream(1, "process", 2, 3).random(4)
    assert np.array_equal(a, rngmod.stream(1, "process", 2, 3).random(4))
    assert not np.array_equal(a, rngmod.stream(1, "process", 2, 4).random(4))
    assert not np.array_equal(a, rngmod.stream(1, "absolute", 2, 3).random(4))
    with pytest.raises(ValueError):
        rngmod.stream(-1, "x")


def test_initial_conditions_box_around_truth():
    sc = linear_scenario()
    truth, boxes = initial_conditions(sc, 0, [-5, -5, -1, -1], [5, 5, 1, 1], [1.0, 1.0, 0.5, 0.5])
    for i in sc.topology.agents:
        assert np.allclose(boxes[i].lower, truth[i] - [1, 1, 0.5, 0.5])
        assert np.allclose(boxes[i].upper, truth[i] + [1, 1, 0.5, 0.5])
