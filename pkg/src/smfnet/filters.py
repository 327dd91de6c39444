"""Centralized, neighborhood-joint and marginal set-membership filters.

Each framework is available as a pure step function on an explicit state
(``centralized_step``, ``joint_step``, ``marginal_step``, ``mc_joint_step``,
``mc_marginal_step``) and as a small stateful wrapper used by the simulator.

Inter-agent traffic goes through a :class:`Mailbox` so that the messages a
step consumes can be audited. A step is bulk synchronous: every agent
predicts, priors are exchanged, every agent updates, projections are
exchanged, every agent intersects.

Carry policy. Exact constrained zonotopes grow without bound when
distributed posteriors are fed back. With ``carry="hull"`` (default) the
two distributed frameworks carry the interval hull of their posterior to the
next step, while the centralized joint set is carried exactly until it
exceeds ``generator_cap`` generators and is then replaced by its interval
hull. Taking hulls is monotone, so the ordering centralized within joint
within marginal is preserved. ``carry="exact"`` carries every posterior
exactly, subject to the same cap.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import rng as rngmod
from .fusion import (
    AbsoluteObservation,
    InconsistentMeasurementError,
    MemberDraw,
    RejectionResult,
    RelativeObservation,
    ResidualCheck,
    absolute_preimage,
    count_residual_violations,
    pairwise_fuse,
    rejection_fuse,
)
from .models import AgentModel, Scenario
from .sets import (
    ConstrainedZonotope,
    EmptySetError,
    IntervalBox,
    UncertainSet,
    constrain_linear,
    interval_hull,
    intersect_all,
    is_empty,
    linear_image,
    minkowski_sum,
    product,
    project,
)

log = logging.getLogger(__name__)


class InconsistencyError(RuntimeError):
    """An update produced the empty set (wrong bounds or a bug)."""

    def __init__(self, framework: str, agent: int | None, phase: str, step: int, detail: str = ""):
        self.framework = framework
        self.agent = agent
        self.phase = phase
        self.step = step
        msg = f"{framework}: empty set at step {step}, agent {agent}, phase {phase}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


@dataclass
class FilterOptions:
    carry: str = "hull"
    generator_cap: int = 200
    m_samples: int = 10000
    mc_retries: int = 2
    predict_samples: int = 10000

    def __post_init__(self):
        if self.carry not in ("hull", "exact"):
            raise ValueError("carry must be 'hull' or 'exact'")
        if self.generator_cap < 1 or self.m_samples < 1 or self.mc_retries < 0:
            raise ValueError("generator_cap and m_samples must be positive, mc_retries non-negative")


class Mailbox:
    """Message transport with an access ledger.

    ``sent`` and ``read`` record ``(step, kind, sender, receiver)`` tuples.
    """

    def __init__(self):
        self._box: dict = defaultdict(dict)
        self.sent: list[tuple[int, str, int, int]] = []
        self.read: list[tuple[int, str, int, int]] = []

    def send(self, step: int, kind: str, sender: int, receiver: int, payload) -> None:
        self._box[(step, kind, receiver)][sender] = payload
        self.sent.append((step, kind, sender, receiver))

    def receive(self, step: int, kind: str, receiver: int) -> dict:
        got = dict(sorted(self._box.pop((step, kind, receiver), {}).items()))
        for s in got:
            self.read.append((step, kind, s, receiver))
        return got

    def pairs(self, kind: str, step: int | None = None, which: str = "read") -> set[tuple[int, int]]:
        rows = self.read if which == "read" else self.sent
        return {(s, r) for k, kd, s, r in rows if kd == kind and (step is None or k == step)}


# --------------------------------------------------------------- prediction


def predict(posterior: UncertainSet, model: AgentModel, u=None, rng: np.random.Generator | None = None,
            n_samples: int = 10000) -> UncertainSet:
    """One-step prediction ``f(S) + [w]``.

    Linear agents get the exact set ``A S + B u + E [w]``. Nonlinear agents
    get the hull of propagated samples, which is an estimate rather than a
    guaranteed enclosure.
    """
    if model.linear:
        off = None
        if u is not None and model.B.shape[1]:
            off = model.B @ np.asarray(u, dtype=float)
        prop = linear_image(model.A, posterior, off)
        return minkowski_sum(prop, linear_image(model.E, model.noise))
    if rng is None:
        raise ValueError("nonlinear prediction needs an rng")
    box = interval_hull(posterior)
    X = box.lower + rng.random((n_samples, box.dim)) * box.widths
    W = model.noise.lower + rng.random((n_samples, model.noise.dim)) * model.noise.widths
    Y = model.propagate(X, W)
    return IntervalBox(Y.min(axis=0), Y.max(axis=0))


def _cap(s: UncertainSet, cap: int, what: str, warned: set) -> UncertainSet:
    if isinstance(s, ConstrainedZonotope) and s.n_gen > cap:
        if what not in warned:
            log.warning("%s exceeds %d generators; carrying its interval hull", what, cap)
            warned.add(what)
        return interval_hull(s)
    return s


def _hull_or_fail(s, framework, agent, phase, step):
    try:
        return interval_hull(s)
    except EmptySetError as exc:
        raise InconsistencyError(framework, agent, phase, step) from exc


# ------------------------------------------------------------- centralized


@dataclass
class CentralizedState:
    """Joint posterior over all agents and the set carried to the next step."""

    joint: UncertainSet
    layout: dict[int, tuple[int, int]]
    carried: UncertainSet = None

    def __post_init__(self):
        if self.carried is None:
            self.carried = self.joint

    def marginal(self, i: int) -> UncertainSet:
        a, b = self.layout[i]
        return project(self.joint, range(a, b))


def block_layout(scenario: Scenario) -> dict[int, tuple[int, int]]:
    out, a = {}, 0
    for i in scenario.topology.agents:
        n = scenario.agents[i].state_dim
        out[i] = (a, a + n)
        a += n
    return out


def centralized_init(scenario: Scenario, boxes: Mapping[int, IntervalBox]) -> CentralizedState:
    return CentralizedState(product([boxes[i] for i in scenario.topology.agents]), block_layout(scenario))


def _blockdiag(mats):
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def _measurement_stack(scenario, members, absolute, relative, owner_edges):
    """Stack absolute rows for ``members`` then relative rows for ``owner_edges``."""
    pos = {}
    a = 0
    for j in members:
        n = scenario.agents[j].state_dim
        pos[j] = (a, a + n)
        a += n
    rows, lo, hi = [], [], []
    for j in members:
        model = scenario.agents[j]
        H = np.zeros((model.C.shape[0], a))
        H[:, pos[j][0]:pos[j][1]] = model.C
        rows.append(H)
        box = absolute[j].consistent_set()
        lo.append(box.lower)
        hi.append(box.upper)
    for i, j in owner_edges:
        sensor = scenario.relative[(i, j)]
        D = sensor.D
        H = np.zeros((D.shape[0], a))
        H[:, pos[i][0]:pos[i][1]] = D
        H[:, pos[j][0]:pos[j][1]] -= D
        rows.append(H)
        box = relative[(i, j)].consistent_set()
        lo.append(box.lower)
        hi.append(box.upper)
    return np.vstack(rows), IntervalBox(np.concatenate(lo), np.concatenate(hi))


def centralized_step(
    state: CentralizedState,
    scenario: Scenario,
    absolute: Mapping[int, AbsoluteObservation],
    relative: Mapping[tuple[int, int], RelativeObservation],
    inputs: Mapping[int, np.ndarray],
    step: int,
    options: FilterOptions | None = None,
    _warned: set | None = None,
) -> CentralizedState:
    """Joint prediction then one generalized intersection with every measurement."""
    options = options or FilterOptions()
    agents = scenario.topology.agents
    models = [scenario.agents[i] for i in agents]
    F = _blockdiag([m.A for m in models])
    off = np.concatenate([
        m.B @ np.asarray(inputs[i], dtype=float) if m.B.shape[1] else np.zeros(m.state_dim)
        for i, m in zip(agents, models)
    ])
    noise = product([linear_image(m.E, m.noise) for m in models])
    prior = minkowski_sum(linear_image(F, state.carried, off), noise)
    edges = [(i, j) for i in agents for j in scenario.topology.in_neighbors(i)]
    H, Y = _measurement_stack(scenario, agents, absolute, relative, edges)
    post = constrain_linear(prior, H, Y)
    # the joint hull is needed for logging anyway and doubles as the emptiness check
    hull = _hull_or_fail(post, "centralized", None, "update", step)
    new = CentralizedState(post, state.layout)
    warned = set() if _warned is None else _warned
    if isinstance(post, ConstrainedZonotope) and post.n_gen > options.generator_cap:
        if "centralized" not in warned:
            log.warning("centralized set exceeds %d generators; carrying its interval hull",
                        options.generator_cap)
            warned.add("centralized")
        new.carried = hull
    return new


# ---------------------------------------------------------- neighborhood joint


@dataclass
class JointState:
    """Per-agent neighborhood sets, own-state posteriors and carried sets."""

    neighborhood: dict[int, UncertainSet]
    marginal: dict[int, UncertainSet]
    carried: dict[int, UncertainSet]


def joint_init(boxes: Mapping[int, IntervalBox]) -> JointState:
    return JointState({}, dict(boxes), dict(boxes))


def _block_of(scenario, members, who):
    a = 0
    for j in members:
        n = scenario.agents[j].state_dim
        if j == who:
            return range(a, a + n)
        a += n
    raise KeyError(who)


def joint_step(
    state: JointState,
    scenario: Scenario,
    absolute: Mapping[int, AbsoluteObservation],
    relative: Mapping[tuple[int, int], RelativeObservation],
    inputs: Mapping[int, np.ndarray],
    step: int,
    mailbox: Mailbox | None = None,
    options: FilterOptions | None = None,
    _warned: set | None = None,
) -> JointState:
    """One round of the neighborhood-joint filter.

    Each agent predicts its own set, receives its in-neighbors' priors and
    absolute measurements, updates the joint set over ``(i, N_i)`` with all
    of those plus its relative measurements, then intersects its own
    projection with the projections sent by agents in ``N_i & M_i``.
    """
    options = options or FilterOptions()
    mailbox = Mailbox() if mailbox is None else mailbox
    warned = set() if _warned is None else _warned
    topo = scenario.topology
    agents = topo.agents
    priors = {i: predict(state.carried[i], scenario.agents[i], inputs.get(i)) for i in agents}

    for i in agents:
        for j in topo.in_neighbors(i):
            mailbox.send(step, "prior", j, i, (priors[j], absolute[j]))

    neighborhood = {}
    for i in agents:
        got = mailbox.receive(step, "prior", i)
        members = topo.closed(i)
        sets = [priors[i]] + [got[j][0] for j in members[1:]]
        obs = {i: absolute[i], **{j: got[j][1] for j in members[1:]}}
        edges = [(i, j) for j in members[1:]]
        H, Y = _measurement_stack(scenario, members, obs, relative, edges)
        joint = constrain_linear(product(sets), H, Y)
        if is_empty(joint):
            raise InconsistencyError("joint", i, "neighborhood_update", step)
        neighborhood[i] = joint

    for l in agents:
        targets = sorted(set(topo.out_neighbors(l)) & set(topo.in_neighbors(l)))
        members = topo.closed(l)
        for i in targets:
            mailbox.send(step, "projection", l, i, project(neighborhood[l], _block_of(scenario, members, i)))

    marginal, carried = {}, {}
    for i in agents:
        got = mailbox.receive(step, "projection", i)
        own = project(neighborhood[i], _block_of(scenario, topo.closed(i), i))
        s = intersect_all([own] + list(got.values()))
        hull = _hull_or_fail(s, "joint", i, "intersection", step)
        marginal[i] = s
        carried[i] = hull if options.carry == "hull" else _cap(s, options.generator_cap, "joint", warned)
    return JointState(neighborhood, marginal, carried)


# ------------------------------------------------------------------ marginal


@dataclass
class MarginalState:
    posterior: dict[int, UncertainSet]
    carried: dict[int, UncertainSet]


def marginal_init(boxes: Mapping[int, IntervalBox]) -> MarginalState:
    return MarginalState(dict(boxes), dict(boxes))


def marginal_step(
    state: MarginalState,
    scenario: Scenario,
    absolute: Mapping[int, AbsoluteObservation],
    relative: Mapping[tuple[int, int], RelativeObservation],
    inputs: Mapping[int, np.ndarray],
    step: int,
    mailbox: Mailbox | None = None,
    options: FilterOptions | None = None,
    _warned: set | None = None,
) -> MarginalState:
    """One round of the marginal filter.

    Agent ``i`` intersects, over its in-neighbors ``j``, the ``x_i``
    projection of the pairwise fusion of (own prior, own measurement) with
    (``j``'s prior, ``j``'s measurement) under ``z_ij``.
    """
    options = options or FilterOptions()
    mailbox = Mailbox() if mailbox is None else mailbox
    warned = set() if _warned is None else _warned
    topo = scenario.topology
    agents = topo.agents
    priors = {i: predict(state.carried[i], scenario.agents[i], inputs.get(i)) for i in agents}
    for i in agents:
        for j in topo.in_neighbors(i):
            mailbox.send(step, "prior", j, i, (priors[j], absolute[j]))

    posterior, carried = {}, {}
    for i in agents:
        got = mailbox.receive(step, "prior", i)
        mi = scenario.agents[i]
        if not got:
            s = absolute_preimage(mi.C, absolute[i], priors[i])
        else:
            terms = []
            for j, (prior_j, abs_j) in got.items():
                sensor = scenario.relative[(i, j)]
                try:
                    si, _ = pairwise_fuse(priors[i], prior_j, absolute[i], abs_j, relative[(i, j)],
                                          mi.C, scenario.agents[j].C, sensor.D)
                except InconsistentMeasurementError as exc:
                    raise InconsistencyError("marginal", i, f"pairwise_fuse[{j}]", step) from exc
                terms.append(si)
            s = intersect_all(terms)
        hull = _hull_or_fail(s, "marginal", i, "update", step)
        posterior[i] = s
        carried[i] = hull if options.carry == "hull" else _cap(s, options.generator_cap, "marginal", warned)
    return MarginalState(posterior, carried)


# --------------------------------------------------------------- Monte Carlo


@dataclass
class MCInfo:
    """Diagnostics of one Monte Carlo step, keyed by agent."""

    accepted: dict[int, int] = field(default_factory=dict)
    draws: dict[int, int] = field(default_factory=dict)
    residual_violations: dict[int, int] = field(default_factory=dict)


def _abs_check(model: AgentModel, obs: AbsoluteObservation, member: int, own: bool) -> ResidualCheck:
    rows = list(range(model.C.shape[0])) if own else list(model.shared_rows)
    Cr = model.C[rows]
    noise = IntervalBox(obs.noise.lower[rows], obs.noise.upper[rows])
    return ResidualCheck((member,), lambda X, Cr=Cr: X @ Cr.T, obs.y[rows], noise, f"abs{obs.agent}")


def _rel_check(scenario, obs: RelativeObservation, mi: int, mj: int) -> ResidualCheck:
    sensor = scenario.relative[obs.edge]
    return ResidualCheck((mi, mj), sensor.evaluate, obs.z, obs.noise, f"rel{obs.i}{obs.j}")


def _fuse_with_retry(members, checks, m, seed, tag, step, key, retries, framework, agent):
    for attempt in range(retries + 1):
        g = rngmod.stream(seed, tag if attempt == 0 else f"{tag}/retry{attempt}", step, key)
        res = rejection_fuse(members, checks, m * (2 ** attempt), g)
        if res.accepted:
            return res
        log.info("%s agent %d step %d: no accepted samples with M=%d", framework, agent, step, m * 2 ** attempt)
    raise InconsistencyError(framework, agent, "sampling", step, "zero accepted samples")


def _attempt_budget(tag, m, attempt):
    return (tag if attempt == 0 else f"{tag}/step-retry{attempt}"), m * (2 ** attempt)


def _pos_mask(scenario, n):
    mask = np.zeros(n, bool)
    mask[list(scenario.position_coords)] = True
    return mask


def combine_bounds(own, received, mask):
    """Largest lower and smallest upper bound over ``own`` and ``received``.

    Only coordinates flagged in ``mask`` are combined; the rest keep the
    bounds of ``own``. Each bound pair is ``(lower, upper)``.
    """
    lo, hi = np.array(own[0], dtype=float), np.array(own[1], dtype=float)
    for glo, ghi in received:
        lo[mask] = np.maximum(lo[mask], np.asarray(glo)[mask])
        hi[mask] = np.minimum(hi[mask], np.asarray(ghi)[mask])
    return lo, hi


def mc_joint_step(
    boxes: Mapping[int, IntervalBox],
    scenario: Scenario,
    absolute: Mapping[int, AbsoluteObservation],
    relative: Mapping[tuple[int, int], RelativeObservation],
    step: int,
    seed: int,
    mailbox: Mailbox | None = None,
    options: FilterOptions | None = None,
    attempt: int = 0,
) -> tuple[dict[int, IntervalBox], MCInfo]:
    """Monte Carlo neighborhood-joint step for nonlinear agents.

    Position bounds combine the agent's own neighborhood estimate with the
    estimates from ``l in N_i & M_i`` (largest lower bound, smallest upper
    bound); the remaining coordinates come from the agent's own samples.
    ``attempt > 0`` reruns the step on fresh streams with ``2**attempt``
    times the sample budget.
    """
    options = options or FilterOptions()
    tag, m = _attempt_budget("mc_joint", options.m_samples, attempt)
    mailbox = Mailbox() if mailbox is None else mailbox
    topo = scenario.topology
    agents = topo.agents
    for i in agents:
        for j in topo.in_neighbors(i):
            mailbox.send(step, "prior", j, i, (boxes[j], absolute[j]))

    info = MCInfo()
    member_hulls: dict[int, dict[int, tuple[np.ndarray, np.ndarray]]] = {}
    for i in agents:
        got = mailbox.receive(step, "prior", i)
        members = topo.closed(i)
        draws, checks = [], []
        for k, j in enumerate(members):
            box, obs = (boxes[i], absolute[i]) if j == i else got[j]
            model = scenario.agents[j]
            draws.append(MemberDraw(box, model.propagate, model.noise))
            checks.append(_abs_check(model, obs, k, j == i))
        for k, j in enumerate(members[1:], start=1):
            checks.append(_rel_check(scenario, relative[(i, j)], 0, k))
        res = _fuse_with_retry(draws, checks, m, seed, tag, step, i, options.mc_retries, "mc_joint", i)
        info.accepted[i] = res.accepted
        info.draws[i] = res.draws
        info.residual_violations[i] = count_residual_violations(res, checks)
        member_hulls[i] = {}
        for k, j in enumerate(members):
            pts = res.member(k)
            member_hulls[i][j] = (pts.min(axis=0), pts.max(axis=0))

    for l in agents:
        for i in sorted(set(topo.out_neighbors(l)) & set(topo.in_neighbors(l))):
            mailbox.send(step, "projection", l, i, member_hulls[l][i])

    out = {}
    for i in agents:
        got = mailbox.receive(step, "projection", i)
        own = member_hulls[i][i]
        lo, hi = combine_bounds(own, list(got.values()), _pos_mask(scenario, own[0].size))
        if np.any(lo > hi):
            raise InconsistencyError("mc_joint", i, "combine", step, "neighborhood estimates do not overlap")
        out[i] = IntervalBox(lo, hi)
    return out, info


def mc_marginal_step(
    boxes: Mapping[int, IntervalBox],
    scenario: Scenario,
    absolute: Mapping[int, AbsoluteObservation],
    relative: Mapping[tuple[int, int], RelativeObservation],
    step: int,
    seed: int,
    mailbox: Mailbox | None = None,
    options: FilterOptions | None = None,
    attempt: int = 0,
) -> tuple[dict[int, IntervalBox], MCInfo]:
    """Monte Carlo marginal step: one pairwise rejection fusion per in-neighbor.

    The posterior box is the intersection of the ``x_i`` hulls of the
    pairwise runs (the own-measurement run alone when ``N_i`` is empty).
    """
    options = options or FilterOptions()
    tag, m = _attempt_budget("mc_marginal", options.m_samples, attempt)
    mailbox = Mailbox() if mailbox is None else mailbox
    topo = scenario.topology
    agents = topo.agents
    n_ag = topo.n_agents
    for i in agents:
        for j in topo.in_neighbors(i):
            mailbox.send(step, "prior", j, i, (boxes[j], absolute[j]))

    info = MCInfo()
    out = {}
    for i in agents:
        got = mailbox.receive(step, "prior", i)
        mi = scenario.agents[i]
        own = MemberDraw(boxes[i], mi.propagate, mi.noise)
        runs: list[tuple[RejectionResult, list]] = []
        if not got:
            checks = [_abs_check(mi, absolute[i], 0, True)]
            runs.append((_fuse_with_retry([own], checks, m, seed, tag, step,
                                          i * (n_ag + 1), options.mc_retries, "mc_marginal", i), checks))
        for j, (box_j, obs_j) in got.items():
            mj = scenario.agents[j]
            draws = [own, MemberDraw(box_j, mj.propagate, mj.noise)]
            checks = [
                _abs_check(mi, absolute[i], 0, True),
                _abs_check(mj, obs_j, 1, False),
                _rel_check(scenario, relative[(i, j)], 0, 1),
            ]
            res = _fuse_with_retry(draws, checks, m, seed, tag, step,
                                   i * (n_ag + 1) + j, options.mc_retries, "mc_marginal", i)
            runs.append((res, checks))
        lo = np.full(mi.state_dim, -np.inf)
        hi = np.full(mi.state_dim, np.inf)
        for res, _ in runs:
            pts = res.member(0)
            lo = np.maximum(lo, pts.min(axis=0))
            hi = np.minimum(hi, pts.max(axis=0))
        if np.any(lo > hi):
            raise InconsistencyError("mc_marginal", i, "combine", step, "pairwise estimates do not overlap")
        out[i] = IntervalBox(lo, hi)
        info.accepted[i] = min(r.accepted for r, _ in runs)
        info.draws[i] = sum(r.draws for r, _ in runs)
        info.residual_violations[i] = sum(count_residual_violations(r, c) for r, c in runs)
    return out, info


# ------------------------------------------------------------------ wrappers


class Framework:
    """Stateful wrapper with a uniform interface for the simulator."""

    name = ""

    def step(self, k, absolute, relative, inputs) -> None:
        raise NotImplementedError

    def estimate(self, i: int) -> UncertainSet:
        raise NotImplementedError

    def accepted(self, i: int) -> int | None:
        return None

    def residual_violations(self, i: int) -> int | None:
        return None


class CentralizedFilter(Framework):
    name = "centralized"

    def __init__(self, scenario, boxes, options=None):
        self.scenario, self.options = scenario, options or FilterOptions()
        self.state = centralized_init(scenario, boxes)
        self._warned: set = set()

    def step(self, k, absolute, relative, inputs):
        self.state = centralized_step(self.state, self.scenario, absolute, relative, inputs, k,
                                      self.options, self._warned)

    def estimate(self, i):
        return self.state.marginal(i)


class JointFilter(Framework):
    name = "joint"

    def __init__(self, scenario, boxes, options=None, mailbox=None):
        self.scenario, self.options = scenario, options or FilterOptions()
        self.state = joint_init(boxes)
        self.mailbox = mailbox or Mailbox()
        self._warned: set = set()

    def step(self, k, absolute, relative, inputs):
        self.state = joint_step(self.state, self.scenario, absolute, relative, inputs, k,
                                self.mailbox, self.options, self._warned)

    def estimate(self, i):
        return self.state.marginal[i]


class MarginalFilter(Framework):
    name = "marginal"

    def __init__(self, scenario, boxes, options=None, mailbox=None):
        self.scenario, self.options = scenario, options or FilterOptions()
        self.state = marginal_init(boxes)
        self.mailbox = mailbox or Mailbox()
        self._warned: set = set()

    def step(self, k, absolute, relative, inputs):
        self.state = marginal_step(self.state, self.scenario, absolute, relative, inputs, k,
                                   self.mailbox, self.options, self._warned)

    def estimate(self, i):
        return self.state.posterior[i]


class _MCFilter(Framework):
    _fn = None

    def __init__(self, scenario, boxes, seed, options=None, mailbox=None):
        self.scenario, self.options, self.seed = scenario, options or FilterOptions(), seed
        self.boxes = dict(boxes)
        self.info = MCInfo()
        self.mailbox = mailbox or Mailbox()

    def step(self, k, absolute, relative, inputs):
        # an empty combined box reruns the whole step with a larger budget
        fn = type(self)._fn
        for attempt in range(self.options.mc_retries + 1):
            try:
                self.boxes, self.info = fn(self.boxes, self.scenario, absolute, relative, k, self.seed,
                                           self.mailbox, self.options, attempt)
                return
            except InconsistencyError as exc:
                if exc.phase != "combine" or attempt == self.options.mc_retries:
                    raise
                log.info("%s step %d: %s, rerunning the step", self.name, k, exc)

    def estimate(self, i):
        return self.boxes[i]

    def accepted(self, i):
        return self.info.accepted.get(i)

    def residual_violations(self, i):
        return self.info.residual_violations.get(i)


class MCJointFilter(_MCFilter):
    name = "mc_joint"
    _fn = staticmethod(mc_joint_step)


class MCMarginalFilter(_MCFilter):
    name = "mc_marginal"
    _fn = staticmethod(mc_marginal_step)


EXACT_FRAMEWORKS = ("centralized", "joint", "marginal")
MC_FRAMEWORKS = ("mc_joint", "mc_marginal")


def make_framework(name, scenario, boxes, seed, options=None) -> Framework:
    if name == "centralized":
        return CentralizedFilter(scenario, boxes, options)
    if name == "joint":
        return JointFilter(scenario, boxes, options)
    if name == "marginal":
        return MarginalFilter(scenario, boxes, options)
    if name == "mc_joint":
        return MCJointFilter(scenario, boxes, seed, options)
    if name == "mc_marginal":
        return MCMarginalFilter(scenario, boxes, seed, options)
    raise ValueError(f"unknown framework {name!r}")
