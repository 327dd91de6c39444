"""Agents, sensors, topologies and the two reference scenarios.

Agent ids are 1-based throughout. An edge ``(j, i)`` means agent ``i``
measures agent ``j`` and receives messages from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import rng as rngmod
from .fusion import AbsoluteObservation, RelativeObservation
from .sets import IntervalBox

OMEGA_MIN = 1e-6


@dataclass(frozen=True)
class Topology:
    """Directed measurement and communication graph.

    Attributes:
        n_agents: number of agents, ids ``1..n_agents``.
        edges: pairs ``(j, i)``; agent ``i`` measures and listens to ``j``.
        weights: adjacency weight ``a_ij`` per edge, aligned with ``edges``.
    """

    n_agents: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...] = None

    def __post_init__(self):
        edges = tuple((int(j), int(i)) for j, i in self.edges)
        if self.n_agents < 1:
            raise ValueError("a topology needs at least one agent")
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edge")
        for j, i in edges:
            if i == j:
                raise ValueError(f"self-loop at agent {i}")
            if not (1 <= i <= self.n_agents and 1 <= j <= self.n_agents):
                raise ValueError(f"edge ({j}, {i}) references an unknown agent")
        w = (1.0,) * len(edges) if self.weights is None else tuple(float(x) for x in self.weights)
        if len(w) != len(edges):
            raise ValueError("one weight per edge is required")
        if any(x < 0 for x in w):
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", w)

    @property
    def agents(self) -> list[int]:
        return list(range(1, self.n_agents + 1))

    def in_neighbors(self, i: int) -> list[int]:
        """``N_i``: agents that ``i`` measures, ascending."""
        return sorted(j for j, t in self.edges if t == i)

    def out_neighbors(self, i: int) -> list[int]:
        """``M_i``: agents that measure ``i``, ascending."""
        return sorted(t for j, t in self.edges if j == i)

    def closed(self, i: int) -> list[int]:
        """``i`` followed by ``N_i`` ascending."""
        return [i] + self.in_neighbors(i)

    def weight(self, i: int, j: int) -> float:
        """``a_ij``, zero when ``j`` is not an in-neighbor of ``i``."""
        for (src, dst), w in zip(self.edges, self.weights):
            if src == j and dst == i:
                return w
        return 0.0

    @classmethod
    def ring(cls, n: int, bidirectional: bool = True, weight: float = 1.0) -> "Topology":
        edges = [(k, k % n + 1) for k in range(1, n + 1)]
        if bidirectional:
            edges += [(k % n + 1, k) for k in range(1, n + 1)]
        edges = sorted(set(edges), key=lambda e: (e[1], e[0]))
        return cls(n, tuple(edges), (weight,) * len(edges))


@dataclass(frozen=True)
class AgentModel:
    """Dynamics, process noise and absolute sensor of one agent.

    Linear agents evolve as ``x+ = A x + B u + E w``; nonlinear agents as
    ``x+ = f(x, w)`` evaluated row-wise on sample arrays. The absolute
    sensor is ``y = C x + v``. ``shared_rows`` selects the absolute-sensor
    rows a neighbor may use in Monte Carlo fusion.
    """

    state_dim: int
    noise: IntervalBox
    C: np.ndarray
    meas_noise: IntervalBox
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    E: np.ndarray | None = None
    f: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    shared_rows: tuple[int, ...] | None = None

    def __post_init__(self):
        n = self.state_dim
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if C.shape != (self.meas_noise.dim, n):
            raise ValueError("C must have one row per measurement-noise coordinate")
        object.__setattr__(self, "C", C)
        if self.f is None:
            if self.A is None:
                raise ValueError("a linear agent needs A")
            A = np.asarray(self.A, dtype=float).reshape(n, n)
            E = np.eye(n) if self.E is None else np.asarray(self.E, dtype=float).reshape(n, -1)
            if E.shape[1] != self.noise.dim:
                raise ValueError("E must have one column per process-noise coordinate")
            B = np.zeros((n, 0)) if self.B is None else np.asarray(self.B, dtype=float).reshape(n, -1)
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "B", B)
            object.__setattr__(self, "E", E)
        elif self.noise.dim != n:
            raise ValueError("nonlinear agents take state-space process noise")
        rows = tuple(range(C.shape[0])) if self.shared_rows is None else tuple(self.shared_rows)
        object.__setattr__(self, "shared_rows", rows)

    @property
    def linear(self) -> bool:
        return self.f is None

    def propagate(self, X: np.ndarray, W: np.ndarray, u=None) -> np.ndarray:
        """Row-wise transition of sample arrays ``X`` with noise rows ``W``."""
        X = np.atleast_2d(X)
        W = np.atleast_2d(W)
        if self.linear:
            out = X @ self.A.T + W @ self.E.T
            if u is not None and self.B.shape[1]:
                out = out + self.B @ np.asarray(u, dtype=float)
            return out
        return self.f(X, W)

    def measure(self, X: np.ndarray) -> np.ndarray:
        return np.atleast_2d(X) @ self.C.T


@dataclass(frozen=True)
class RelativeSensorModel:
    """``z = g(x_i, x_j) + r`` for the edge where ``i`` measures ``j``.

    ``kind`` is ``"linear"`` (``g = D (x_i - x_j)``), ``"range"``
    (``g = ||P x_i - P x_j||_2`` over ``coords``) or ``"custom"`` with ``g``.
    """

    i: int
    j: int
    noise: IntervalBox
    kind: str = "linear"
    D: np.ndarray | None = None
    coords: tuple[int, ...] = (0, 1)
    g: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "range", "custom"):
            raise ValueError(f"unknown relative sensor kind {self.kind!r}")
        if self.kind == "linear":
            D = np.atleast_2d(np.asarray(self.D, dtype=float))
            if D.shape[0] != self.noise.dim:
                raise ValueError("D must have one row per relative-noise coordinate")
            object.__setattr__(self, "D", D)
        if self.kind == "range" and self.noise.dim != 1:
            raise ValueError("range sensing is scalar")
        if self.kind == "custom" and self.g is None:
            raise ValueError("custom relative sensor needs g")

    @property
    def edge(self) -> tuple[int, int]:
        return (self.i, self.j)

    def evaluate(self, Xi: np.ndarray, Xj: np.ndarray) -> np.ndarray:
        Xi = np.atleast_2d(Xi)
        Xj = np.atleast_2d(Xj)
        if self.kind == "linear":
            return (Xi - Xj) @ self.D.T
        if self.kind == "range":
            idx = list(self.coords)
            return np.linalg.norm(Xi[:, idx] - Xj[:, idx], axis=1, keepdims=True)
        return np.asarray(self.g(Xi, Xj), dtype=float).reshape(Xi.shape[0], -1)


Controller = Callable[[Mapping[int, np.ndarray]], dict[int, np.ndarray]]


@dataclass(frozen=True)
class Scenario:
    """A complete multi-agent estimation problem."""

    name: str
    topology: Topology
    agents: dict[int, AgentModel]
    relative: dict[tuple[int, int], RelativeSensorModel]
    controller: Controller | None = None
    position_coords: tuple[int, ...] = (0, 1)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if sorted(self.agents) != self.topology.agents:
            raise ValueError("one agent model per topology agent is required")
        want = {(i, j) for j, i in self.topology.edges}
        if set(self.relative) != want:
            raise ValueError("one relative sensor per topology edge is required")

    @property
    def linear(self) -> bool:
        return all(a.linear for a in self.agents.values())

    @property
    def state_dim(self) -> int:
        dims = {a.state_dim for a in self.agents.values()}
        if len(dims) != 1:
            raise ValueError("agents have different state dimensions")
        return dims.pop()

    def inputs(self, states: Mapping[int, np.ndarray]) -> dict[int, np.ndarray]:
        if self.controller is None:
            return {i: np.zeros(self.agents[i].B.shape[1] if self.agents[i].linear else 0) for i in self.agents}
        return self.controller(states)


def _box(half) -> IntervalBox:
    half = np.atleast_1d(np.asarray(half, dtype=float))
    return IntervalBox(-half, half)


def consensus_controller(topology: Topology, gamma: float, pos: slice, vel: slice) -> Controller:
    """``u_i = -sum_j a_ij [(p_i - p_j) + gamma (v_i - v_j)]``."""

    def control(states):
        out = {}
        for i in topology.agents:
            u = np.zeros(pos.stop - pos.start)
            for j in topology.in_neighbors(i):
                a = topology.weight(i, j)
                xi, xj = states[i], states[j]
                u -= a * ((xi[pos] - xj[pos]) + gamma * (xi[vel] - xj[vel]))
            out[i] = u
        return out

    return control


def double_integrator(T: float):
    """Per-axis ``A = [[1, T], [0, 1]]`` and ``B = [T^2/2, T]`` lifted to 2-D."""
    A1 = np.array([[1.0, T], [0.0, 1.0]])
    B1 = np.array([[T * T / 2.0], [T]])
    return np.kron(A1, np.eye(2)), np.kron(B1, np.eye(2))


def linear_scenario(
    topology: Topology | None = None,
    T: float = np.pi / 8,
    gamma: float = 0.5,
    w: float = 0.5,
    v: float = 0.5,
    r: float = 0.5,
) -> Scenario:
    """Five double-integrator agents under a consensus protocol.

    State is ``(p_x, p_y, v_x, v_y)``; input and noise are 2-D accelerations
    entering through ``B``; absolute and relative sensors are identities
    with box noise.
    """
    topology = Topology.ring(5) if topology is None else topology
    A, B = double_integrator(T)
    agents = {
        i: AgentModel(4, _box([w, w]), np.eye(4), _box([v] * 4), A=A, B=B, E=B)
        for i in topology.agents
    }
    rel = {
        (i, j): RelativeSensorModel(i, j, _box([r] * 4), "linear", D=np.eye(4))
        for j, i in topology.edges
    }
    ctrl = consensus_controller(topology, gamma, slice(0, 2), slice(2, 4))
    params = {"T": T, "gamma": gamma, "w": w, "v": v, "r": r}
    return Scenario("linear", topology, agents, rel, ctrl, (0, 1), params)


def unicycle_transition(speed: float, omega: float, T: float):
    """Row-wise unicycle step on ``(p_x, p_y, theta)`` with additive noise."""
    if abs(omega) < OMEGA_MIN:
        raise ValueError(f"|omega| must be at least {OMEGA_MIN}")
    k = speed / omega
    wT = omega * T

    def f(X, W):
        th = X[:, 2]
        out = np.empty_like(X)
        out[:, 0] = X[:, 0] + k * (np.sin(wT + th) - np.sin(th)) + W[:, 0]
        out[:, 1] = X[:, 1] + k * (np.cos(th) - np.cos(wT + th)) + W[:, 1]
        out[:, 2] = th + wT + W[:, 2]
        return out

    return f


def unicycle_scenario(
    topology: Topology | None = None,
    T: float = np.pi / 8,
    speed: float = 4.0,
    omegas: Mapping[int, float] | None = None,
    w_pos: float = 0.25,
    w_theta: float = np.pi / 24,
    v_pos: float = 0.5,
    v_theta: float = np.pi / 24,
    r: float = 1.0,
) -> Scenario:
    """Five unicycles with position/heading fixes and range-only relative sensing."""
    topology = Topology.ring(5) if topology is None else topology
    if omegas is None:
        omegas = {i: (np.pi / 3 if i % 2 else -np.pi / 3) for i in topology.agents}
    agents = {}
    for i in topology.agents:
        agents[i] = AgentModel(
            3,
            _box([w_pos, w_pos, w_theta]),
            np.eye(3),
            _box([v_pos, v_pos, v_theta]),
            f=unicycle_transition(speed, float(omegas[i]), T),
            shared_rows=(0, 1),
        )
    rel = {
        (i, j): RelativeSensorModel(i, j, _box([r]), "range", coords=(0, 1))
        for j, i in topology.edges
    }
    params = {
        "T": T, "speed": speed, "omegas": {int(k): float(v) for k, v in omegas.items()},
        "w_pos": w_pos, "w_theta": w_theta, "v_pos": v_pos, "v_theta": v_theta, "r": r,
    }
    return Scenario("unicycle", topology, agents, rel, None, (0, 1), params)


def custom_linear_scenario(
    topology: Topology,
    A,
    C,
    D,
    w,
    v,
    r,
    B=None,
    E=None,
    position_coords=(0,),
    gamma: float | None = None,
) -> Scenario:
    """Homogeneous linear agents with user matrices.

    Without ``gamma`` the input is zero. With it, a consensus input over the
    first and second halves of the state is applied through ``B``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    wb = _box(w)
    E = np.eye(n)[:, : wb.dim] if E is None else np.asarray(E, dtype=float).reshape(n, -1)
    Bm = None if B is None else np.asarray(B, dtype=float).reshape(n, -1)
    agents = {i: AgentModel(n, wb, C, _box(v), A=A, B=Bm, E=E) for i in topology.agents}
    rel = {(i, j): RelativeSensorModel(i, j, _box(r), "linear", D=D) for j, i in topology.edges}
    ctrl = None
    if gamma is not None:
        if Bm is None or n % 2:
            raise ValueError("a consensus input needs B and an even state dimension")
        h = n // 2
        ctrl = consensus_controller(topology, gamma, slice(0, h), slice(h, n))
    return Scenario("custom", topology, agents, rel, ctrl, tuple(position_coords), {})


# ------------------------------------------------------------ ground truth


def _uniform(box: IntervalBox, g: np.random.Generator) -> np.ndarray:
    return box.lower + g.random(box.dim) * box.widths


def step_truth(scenario: Scenario, states: Mapping[int, np.ndarray], seed: int, step: int):
    """Advance every agent one step with uniform process noise.

    Returns ``(new_states, inputs)``; ``inputs`` are the control inputs
    applied during the step, computed from the true states.
    """
    inputs = scenario.inputs(states)
    out = {}
    for i, model in scenario.agents.items():
        w = _uniform(model.noise, rngmod.stream(seed, "process", step, i))
        out[i] = model.propagate(states[i][None, :], w[None, :], inputs[i] if model.linear else None)[0]
    return out, inputs


def generate_observations(scenario: Scenario, states: Mapping[int, np.ndarray], seed: int, step: int):
    """Noisy absolute and relative measurements of the true states."""
    absolute = {}
    for i, model in scenario.agents.items():
        v = _uniform(model.meas_noise, rngmod.stream(seed, "absolute", step, i))
        absolute[i] = AbsoluteObservation(i, model.measure(states[i])[0] + v, model.meas_noise)
    relative = {}
    topo = scenario.topology
    for i in topo.agents:
        for j in topo.in_neighbors(i):
            sensor = scenario.relative[(i, j)]
            g = rngmod.stream(seed, "relative", step, i * (topo.n_agents + 1) + j)
            r = _uniform(sensor.noise, g)
            z = sensor.evaluate(states[i], states[j])[0] + r
            relative[(i, j)] = RelativeObservation(i, j, z, sensor.noise)
    return absolute, relative


def initial_conditions(scenario: Scenario, seed: int, low, high, radius):
    """Truth drawn uniformly in ``[low, high]`` and boxes ``truth +- radius``."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    radius = np.broadcast_to(np.asarray(radius, dtype=float), low.shape)
    truth, boxes = {}, {}
    for i in scenario.topology.agents:
        g = rngmod.stream(seed, "init", 0, i)
        x = low + g.random(low.size) * (high - low)
        truth[i] = x
        boxes[i] = IntervalBox(x - radius, x + radius)
    return truth, boxes
