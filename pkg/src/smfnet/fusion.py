"""Fusion of absolute and relative measurements.

The exact path handles linear sensors: absolute ``y = C x + v`` and relative
``z = D (x_i - x_j) + r``. Preimages are always taken jointly with a bounded
prior, so every intermediate result stays a constrained zonotope.

Nonlinear sensors (for example range-only relative sensing) go through
:func:`rejection_fuse`, which propagates uniform draws from prior boxes and
keeps the ones consistent with every residual bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .sets import (
    IntervalBox,
    SampleCloud,
    UncertainSet,
    cartesian_product,
    constrain_linear,
    is_empty,
    project,
)


class InconsistentMeasurementError(ValueError):
    """A fusion produced the empty set: bounds or measurements are wrong."""


@dataclass(frozen=True)
class AbsoluteObservation:
    agent: int
    y: np.ndarray
    noise: IntervalBox

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if y.size != self.noise.dim:
            raise ValueError("noise range dimension must match the observation")
        object.__setattr__(self, "y", y)

    def consistent_set(self) -> IntervalBox:
        """``{y} + [-v]``: every sensor output compatible with ``y``."""
        return IntervalBox(self.y - self.noise.upper, self.y - self.noise.lower)


@dataclass(frozen=True)
class RelativeObservation:
    """Agent ``i`` measures agent ``j``: ``z = g(x_i, x_j) + r``."""

    i: int
    j: int
    z: np.ndarray
    noise: IntervalBox

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if z.size != self.noise.dim:
            raise ValueError("noise range dimension must match the observation")
        object.__setattr__(self, "z", z)

    @property
    def edge(self) -> tuple[int, int]:
        return (self.i, self.j)

    def consistent_set(self) -> IntervalBox:
        return IntervalBox(self.z - self.noise.upper, self.z - self.noise.lower)


def absolute_preimage(C, obs: AbsoluteObservation | None, prior: UncertainSet, check: bool = False) -> UncertainSet:
    """``prior`` intersected with ``{x : C x in {y} + [-v]}``.

    With ``obs=None`` the prior is returned unchanged.
    """
    if obs is None:
        return prior
    out = constrain_linear(prior, C, obs.consistent_set())
    if check and is_empty(out):
        raise InconsistentMeasurementError(f"absolute measurement of agent {obs.agent} excludes its prior")
    return out


def _joint(prior_i, prior_j, rel: RelativeObservation, D):
    D = np.atleast_2d(np.asarray(D, dtype=float))
    ni, nj = prior_i.dim, prior_j.dim
    if D.shape[1] != ni or ni != nj:
        raise ValueError("D must act on equally sized state blocks")
    joint = cartesian_product(prior_i, prior_j)
    return constrain_linear(joint, np.hstack([D, -D]), rel.consistent_set()), ni


def pairwise_fuse(
    prior_i: UncertainSet,
    prior_j: UncertainSet,
    abs_i: AbsoluteObservation | None,
    abs_j: AbsoluteObservation | None,
    rel: RelativeObservation,
    C_i,
    C_j,
    D,
    check: bool = True,
):
    """Single-step fusion of one relative measurement ``z = D (x_i - x_j) + r``.

    Returns the projections onto ``x_i`` and ``x_j`` of the joint set of
    pairs consistent with both priors, both absolute measurements and the
    relative measurement. No iteration is needed: repeating the exchange
    does not shrink the result further (see :func:`refinement_sequence`).

    Raises:
        InconsistentMeasurementError: if the joint set is empty and ``check``.
    """
    si = absolute_preimage(C_i, abs_i, prior_i)
    sj = absolute_preimage(C_j, abs_j, prior_j)
    joint, ni = _joint(si, sj, rel, D)
    if check and is_empty(joint):
        raise InconsistentMeasurementError(f"relative measurement {rel.edge} is inconsistent with the priors")
    n = joint.dim
    return project(joint, range(ni)), project(joint, range(ni, n))


def refinement_sequence(prior_i, prior_j, abs_i, abs_j, rel, C_i, C_j, D, t_max: int):
    """Alternating refinement ``S_j^t = S_j^{t-1} & g2^-1(S_i^{t-1})``, ``S_i^t = S_i^{t-1} & g1^-1(S_j^t)``.

    Each preimage is evaluated in intersection form through the joint
    space. Returns ``[(S_i^1, S_j^1), ..., (S_i^t_max, S_j^t_max)]``.
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    si = absolute_preimage(C_i, abs_i, prior_i)
    sj = absolute_preimage(C_j, abs_j, prior_j)
    out = []
    for _ in range(t_max):
        joint, ni = _joint(si, sj, rel, D)
        if is_empty(joint):
            raise InconsistentMeasurementError(f"relative measurement {rel.edge} is inconsistent with the priors")
        sj_next = project(joint, range(ni, joint.dim))
        joint, _ = _joint(si, sj_next, rel, D)
        si = project(joint, range(ni))
        sj = sj_next
        out.append((si, sj))
    return out


# ------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class MemberDraw:
    """One member of a neighborhood in a rejection fusion.

    Attributes:
        prior: box the previous-step state is drawn from.
        propagate: ``(X, W) -> X_next`` evaluated row-wise on sample arrays.
        noise: process-noise box ``W`` is drawn from.
    """

    prior: IntervalBox
    propagate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    noise: IntervalBox


@dataclass(frozen=True)
class ResidualCheck:
    """Accept only samples whose residual ``value - h(states)`` lies in ``noise``.

    ``members`` lists the neighborhood positions passed to ``h`` (one for an
    absolute check, two for a relative one).
    """

    members: tuple[int, ...]
    h: Callable[..., np.ndarray]
    value: np.ndarray
    noise: IntervalBox
    label: str = field(default="")

    def residuals(self, states: Sequence[np.ndarray]) -> np.ndarray:
        pred = np.asarray(self.h(*(states[m] for m in self.members)), dtype=float)
        pred = pred.reshape(pred.shape[0], -1)
        return np.asarray(self.value, dtype=float).reshape(1, -1) - pred

    def passes(self, states: Sequence[np.ndarray], tol: float = 0.0) -> np.ndarray:
        r = self.residuals(states)
        return np.all((r >= self.noise.lower - tol) & (r <= self.noise.upper + tol), axis=1)


@dataclass(frozen=True)
class RejectionResult:
    cloud: SampleCloud
    draws: int
    blocks: tuple[tuple[int, int], ...]

    @property
    def accepted(self) -> int:
        return len(self.cloud)

    def member(self, k: int) -> np.ndarray:
        a, b = self.blocks[k]
        return self.cloud.points[:, a:b]


def rejection_fuse(
    members: Sequence[MemberDraw],
    checks: Sequence[ResidualCheck],
    m_samples: int,
    rng: np.random.Generator,
) -> RejectionResult:
    """Monte Carlo neighborhood fusion for nonlinear models.

    Every member's previous state is drawn uniformly from its prior box and
    its process noise uniformly from its noise box; the states are then
    propagated. A draw is accepted only when every check passes. The
    returned cloud stacks the accepted propagated states in member order; it
    is empty when nothing was accepted.
    """
    if m_samples < 1:
        raise ValueError("m_samples must be >= 1")
    states = []
    blocks = []
    a = 0
    for mem in members:
        p, w = mem.prior, mem.noise
        x = p.lower + rng.random((m_samples, p.dim)) * p.widths
        wn = w.lower + rng.random((m_samples, w.dim)) * w.widths
        nxt = np.asarray(mem.propagate(x, wn), dtype=float)
        states.append(nxt)
        blocks.append((a, a + nxt.shape[1]))
        a += nxt.shape[1]
    keep = np.ones(m_samples, bool)
    for chk in checks:
        keep &= chk.passes(states)
    pts = np.hstack(states)[keep]
    return RejectionResult(SampleCloud(pts, a), m_samples, tuple(blocks))


def count_residual_violations(result: RejectionResult, checks: Sequence[ResidualCheck]) -> int:
    """Re-evaluate every check on the accepted samples; returns the failure count."""
    if result.accepted == 0:
        return 0
    states = [result.member(k) for k in range(len(result.blocks))]
    bad = np.zeros(result.accepted, bool)
    for chk in checks:
        bad |= ~chk.passes(states)
    return int(bad.sum())
