"""Set algebra over interval boxes, constrained zonotopes and sample clouds.

A constrained zonotope (CZ) is ``{c + G xi : A xi = b, ||xi||_inf <= 1}``.
It is closed under the operations the filters need: linear images,
Minkowski sums, Cartesian products, projections and generalized
intersections. Queries that are not closed-form (membership, emptiness and
the interval hull) are answered with the small simplex in :mod:`smfnet.lp`.

Boxes are promoted to constrained zonotopes losslessly when an operation
mixes the two. Sample clouds take part only in point-wise operations; any
other combination raises :class:`RepresentationError`.

All set values are immutable. Array fields are stored read-only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from numba import njit

from . import lp

log = logging.getLogger(__name__)

TAU_MEM = 1e-9
TAU_HULL = 1e-9


class SetDimensionError(ValueError):
    """Operands have incompatible dimensions."""


class RepresentationError(TypeError):
    """The operation is not defined for this combination of representations."""


class EmptySetError(ValueError):
    """A query that needs a nonempty set received an empty one."""


class SamplingError(RuntimeError):
    """The sampler could not produce points (near-degenerate set)."""


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class IntervalBox:
    """Axis-aligned box ``[lower, upper]``.

    The empty box can only be built with :meth:`empty`. ``outer`` marks a box
    that over-approximates the set it was derived from (fast hull mode).
    """

    lower: np.ndarray
    upper: np.ndarray
    outer: bool = field(default=False, compare=False)
    _empty: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(np.asarray(self.lower, dtype=float)).reshape(-1))
        hi = _frozen(np.atleast_1d(np.asarray(self.upper, dtype=float)).reshape(-1))
        if lo.shape != hi.shape:
            raise SetDimensionError("lower and upper have different lengths")
        if lo.size < 1:
            raise SetDimensionError("a box needs dimension >= 1")
        if not self._empty:
            if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
                raise ValueError("box bounds must not be NaN")
            if np.any(lo > hi):
                raise ValueError("lower > upper; use IntervalBox.empty() for the empty set")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def empty(cls, dim: int) -> "IntervalBox":
        return cls(np.full(dim, np.inf), np.full(dim, -np.inf), _empty=True)

    @classmethod
    def from_center(cls, center, radius) -> "IntervalBox":
        center = np.asarray(center, dtype=float)
        radius = np.broadcast_to(np.asarray(radius, dtype=float), center.shape)
        return cls(center - radius, center + radius)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def to_czono(self) -> "ConstrainedZonotope":
        """Lossless promotion; zero-width coordinates get no generator."""
        if self._empty:
            raise EmptySetError("cannot promote the empty box")
        half = 0.5 * self.widths
        keep = np.flatnonzero(half > 0.0)
        G = np.zeros((self.dim, keep.size))
        G[keep, np.arange(keep.size)] = half[keep]
        return ConstrainedZonotope(self.center, G)

    def __repr__(self):
        if self._empty:
            return f"IntervalBox.empty({self.dim})"
        return f"IntervalBox(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class ConstrainedZonotope:
    """``{c + G xi : A xi = b, ||xi||_inf <= 1}``.

    ``G`` is ``n x ng``, ``A`` is ``nc x ng``. With ``ng == 0`` the set is
    the singleton ``{c}``. Emptiness is decided by :func:`is_empty`.
    """

    c: np.ndarray
    G: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.size
        if n < 1:
            raise SetDimensionError("a constrained zonotope needs dimension >= 1")
        G = np.asarray(self.G, dtype=float)
        if G.size == 0:
            G = np.zeros((n, 0))
        G = G.reshape(n, -1)
        ng = G.shape[1]
        A = np.zeros((0, ng)) if self.A is None else np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((A.shape[0] if A.ndim == 2 else 0, ng))
        A = A.reshape(A.shape[0] if A.ndim == 2 else -1, ng)
        b = np.zeros(A.shape[0]) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        if b.size != A.shape[0]:
            raise SetDimensionError("constraint matrix and vector sizes differ")
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "G", _frozen(G))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "_hull", None)
        object.__setattr__(self, "_witness", None)

    @property
    def dim(self) -> int:
        return self.c.size

    @property
    def n_gen(self) -> int:
        return self.G.shape[1]

    @property
    def n_con(self) -> int:
        return self.A.shape[0]

    def compact(self) -> "ConstrainedZonotope":
        """Drop generators that touch nothing and constraint rows that say nothing."""
        G, A, b = self.G, self.A, self.b
        used = np.any(G != 0.0, axis=0) | np.any(A != 0.0, axis=0)
        rows = np.any(A != 0.0, axis=1) | (np.abs(b) > 0.0)
        if used.all() and rows.all():
            return self
        return ConstrainedZonotope(self.c, G[:, used], A[rows][:, used], b[rows])

    def __repr__(self):
        return f"ConstrainedZonotope(dim={self.dim}, n_gen={self.n_gen}, n_con={self.n_con})"


@dataclass(frozen=True, eq=False)
class SampleCloud:
    """A finite point set; zero points means estimation failure."""

    points: np.ndarray
    dimension: int = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        dim = self.dimension
        if pts.size == 0:
            if dim is None:
                raise SetDimensionError("an empty cloud needs an explicit dimension")
            pts = np.zeros((0, dim))
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        elif pts.ndim > 2:
            pts = pts.reshape(pts.shape[0], -1)
        if dim is None:
            dim = pts.shape[1]
        if pts.shape[1] != dim or dim < 1:
            raise SetDimensionError("every point must have length == dimension")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "dimension", int(dim))

    @property
    def dim(self) -> int:
        return self.dimension

    def __len__(self):
        return self.points.shape[0]

    def __repr__(self):
        return f"SampleCloud(n={len(self)}, dim={self.dim})"


UncertainSet = Union[IntervalBox, ConstrainedZonotope, SampleCloud]


def dim(s: UncertainSet) -> int:
    return s.dim


def _check_same_dim(s, t):
    if s.dim != t.dim:
        raise SetDimensionError(f"dimension mismatch: {s.dim} vs {t.dim}")


def _as_cz(s) -> ConstrainedZonotope:
    if isinstance(s, ConstrainedZonotope):
        return s
    if isinstance(s, IntervalBox):
        return s.to_czono()
    raise RepresentationError(f"{type(s).__name__} cannot act as a constrained zonotope")


def _block_diag(*mats) -> np.ndarray:
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = k = 0
    for m in mats:
        out[r:r + m.shape[0], k:k + m.shape[1]] = m
        r += m.shape[0]
        k += m.shape[1]
    return out


# ---------------------------------------------------------------- set algebra


def minkowski_sum(s: UncertainSet, t: UncertainSet) -> UncertainSet:
    """Exact Minkowski sum of two boxes or constrained zonotopes."""
    _check_same_dim(s, t)
    if isinstance(s, SampleCloud) or isinstance(t, SampleCloud):
        raise RepresentationError("sample clouds propagate point-wise, not by Minkowski sum")
    if isinstance(s, IntervalBox) and isinstance(t, IntervalBox):
        if s._empty or t._empty:
            return IntervalBox.empty(s.dim)
        return IntervalBox(s.lower + t.lower, s.upper + t.upper)
    a, z = _as_cz(s), _as_cz(t)
    return ConstrainedZonotope(
        a.c + z.c,
        np.hstack([a.G, z.G]),
        _block_diag(a.A, z.A),
        np.concatenate([a.b, z.b]),
    )


def cartesian_product(s: UncertainSet, t: UncertainSet) -> UncertainSet:
    """Exact product; clouds pair point-wise and need equal point counts."""
    if isinstance(s, SampleCloud) or isinstance(t, SampleCloud):
        if not (isinstance(s, SampleCloud) and isinstance(t, SampleCloud)):
            raise RepresentationError("a cloud can only be paired with another cloud")
        if len(s) != len(t):
            raise RepresentationError("clouds pair point-wise only when counts match")
        return SampleCloud(np.hstack([s.points, t.points]), s.dim + t.dim)
    if isinstance(s, IntervalBox) and isinstance(t, IntervalBox):
        if s._empty or t._empty:
            return IntervalBox.empty(s.dim + t.dim)
        return IntervalBox(np.concatenate([s.lower, t.lower]), np.concatenate([s.upper, t.upper]))
    a, z = _as_cz(s), _as_cz(t)
    return ConstrainedZonotope(
        np.concatenate([a.c, z.c]),
        _block_diag(a.G, z.G),
        _block_diag(a.A, z.A),
        np.concatenate([a.b, z.b]),
    )


def product(sets: Sequence[UncertainSet]) -> UncertainSet:
    out = sets[0]
    for s in sets[1:]:
        out = cartesian_product(out, s)
    return out


def linear_image(m, s: UncertainSet, offset=None) -> UncertainSet:
    """Exact image ``{m x + offset : x in s}``.

    Boxes stay boxes under square diagonal maps and are promoted otherwise.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[1] != s.dim:
        raise SetDimensionError(f"map has {m.shape[1]} columns, set has dimension {s.dim}")
    off = np.zeros(m.shape[0]) if offset is None else np.asarray(offset, dtype=float).reshape(-1)
    if off.size != m.shape[0]:
        raise SetDimensionError("offset length differs from map rows")
    if isinstance(s, SampleCloud):
        return SampleCloud(s.points @ m.T + off, m.shape[0])
    if isinstance(s, IntervalBox):
        if s._empty:
            return IntervalBox.empty(m.shape[0])
        if m.shape[0] == m.shape[1] and np.count_nonzero(m - np.diag(np.diag(m))) == 0:
            d = np.diag(m)
            lo, hi = d * s.lower, d * s.upper
            return IntervalBox(np.minimum(lo, hi) + off, np.maximum(lo, hi) + off)
    z = _as_cz(s)
    return ConstrainedZonotope(m @ z.c + off, m @ z.G, z.A, z.b)


def translate(s: UncertainSet, t) -> UncertainSet:
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size != s.dim:
        raise SetDimensionError("translation length differs from set dimension")
    if isinstance(s, IntervalBox):
        return IntervalBox.empty(s.dim) if s._empty else IntervalBox(s.lower + t, s.upper + t)
    if isinstance(s, SampleCloud):
        return SampleCloud(s.points + t, s.dim)
    return ConstrainedZonotope(s.c + t, s.G, s.A, s.b)


def project(s: UncertainSet, coords: Sequence[int]) -> UncertainSet:
    """Exact coordinate projection onto 0-based, strictly increasing ``coords``."""
    idx = np.asarray(coords, dtype=int).reshape(-1)
    if idx.size == 0 or np.any(np.diff(idx) <= 0):
        raise ValueError("coords must be a nonempty strictly increasing index set")
    if idx[0] < 0 or idx[-1] >= s.dim:
        raise IndexError(f"projection index out of range for dimension {s.dim}")
    if isinstance(s, IntervalBox):
        if s._empty:
            return IntervalBox.empty(idx.size)
        return IntervalBox(s.lower[idx], s.upper[idx])
    if isinstance(s, SampleCloud):
        return SampleCloud(s.points[:, idx], idx.size)
    out = ConstrainedZonotope(s.c[idx], s.G[idx], s.A, s.b)
    if s._hull is not None:
        object.__setattr__(out, "_hull", IntervalBox(s._hull.lower[idx], s._hull.upper[idx]))
        object.__setattr__(out, "_witness", s._witness)
    return out


def constrain_linear(s: UncertainSet, c_mat, y_set: IntervalBox) -> UncertainSet:
    """Generalized intersection ``{x in s : c_mat x in y_set}`` (exact)."""
    c_mat = np.atleast_2d(np.asarray(c_mat, dtype=float))
    if not isinstance(y_set, IntervalBox):
        raise RepresentationError("y_set must be an IntervalBox")
    if c_mat.shape[0] != y_set.dim or c_mat.shape[1] != s.dim:
        raise SetDimensionError("c_mat does not match set and box dimensions")
    if isinstance(s, SampleCloud):
        raise RepresentationError("constrain_linear is not defined for sample clouds")
    if y_set._empty:
        return IntervalBox.empty(s.dim) if isinstance(s, IntervalBox) else _empty_cz(s.dim)
    if isinstance(s, IntervalBox):
        if s._empty:
            return s
        if c_mat.shape[0] == c_mat.shape[1] and np.array_equal(c_mat, np.eye(s.dim)):
            return intersect(s, y_set)
    z = _as_cz(s)
    yz = y_set.to_czono()
    ny = yz.n_gen
    G = np.hstack([z.G, np.zeros((z.dim, ny))])
    A = np.vstack([
        np.hstack([z.A, np.zeros((z.n_con, ny))]),
        np.hstack([c_mat @ z.G, -yz.G]),
    ])
    b = np.concatenate([z.b, yz.c - c_mat @ z.c])
    return ConstrainedZonotope(z.c, G, A, b)


def _empty_cz(n: int) -> ConstrainedZonotope:
    return ConstrainedZonotope(np.zeros(n), np.zeros((n, 1)), np.ones((1, 1)), np.array([2.0]))


def intersect(s: UncertainSet, t: UncertainSet) -> UncertainSet:
    """Exact same-space intersection."""
    _check_same_dim(s, t)
    if isinstance(s, SampleCloud) or isinstance(t, SampleCloud):
        raise RepresentationError("intersection is not defined for sample clouds")
    if isinstance(s, IntervalBox) and isinstance(t, IntervalBox):
        if s._empty or t._empty:
            return IntervalBox.empty(s.dim)
        lo = np.maximum(s.lower, t.lower)
        hi = np.minimum(s.upper, t.upper)
        if np.any(lo > hi + TAU_MEM):
            return IntervalBox.empty(s.dim)
        return IntervalBox(np.minimum(lo, hi), hi)
    if isinstance(t, IntervalBox):
        return constrain_linear(s, np.eye(s.dim), t)
    if isinstance(s, IntervalBox):
        return constrain_linear(t, np.eye(t.dim), s)
    G = np.hstack([s.G, np.zeros((s.dim, t.n_gen))])
    A = np.vstack([_block_diag(s.A, t.A), np.hstack([s.G, -t.G])])
    b = np.concatenate([s.b, t.b, t.c - s.c])
    return ConstrainedZonotope(s.c, G, A, b)


def intersect_all(sets: Sequence[UncertainSet]) -> UncertainSet:
    out = sets[0]
    for s in sets[1:]:
        out = intersect(out, s)
    return out


# -------------------------------------------------------------------- queries


def _unit_bounds(ng, tol=0.0):
    return np.full(ng, -1.0 - tol), np.full(ng, 1.0 + tol)


def contains(s: UncertainSet, x, tol: float = TAU_MEM) -> bool:
    """Membership test within ``tol``."""
    return bool(contains_many(s, np.atleast_2d(np.asarray(x, dtype=float)), tol)[0])


def contains_many(s: UncertainSet, X, tol: float = TAU_MEM) -> np.ndarray:
    """Vectorised membership; one flag per row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != s.dim:
        raise SetDimensionError(f"points have length {X.shape[1]}, set has dimension {s.dim}")
    if isinstance(s, IntervalBox):
        if s._empty:
            return np.zeros(len(X), bool)
        return np.all((X >= s.lower - tol) & (X <= s.upper + tol), axis=1)
    if isinstance(s, SampleCloud):
        if len(s) == 0:
            return np.zeros(len(X), bool)
        return contains_many(interval_hull(s), X, tol)
    if s.n_gen == 0:
        if s.n_con and np.any(np.abs(s.b) > tol):
            return np.zeros(len(X), bool)
        return np.all(np.abs(X - s.c) <= tol, axis=1)
    # cheap outer test: the zonotope that ignores the constraints
    rad = np.abs(s.G).sum(axis=1)
    out = np.zeros(len(X), bool)
    cand = np.flatnonzero(np.all(np.abs(X - s.c) <= rad + tol, axis=1))
    if s._hull is not None and cand.size:
        h = s._hull
        cand = cand[np.all((X[cand] >= h.lower - tol) & (X[cand] <= h.upper + tol), axis=1)]
    if cand.size == 0:
        return out
    if s.n_con == 0 and s.n_gen == s.dim:
        # square generator matrix: solve directly when well conditioned
        try:
            xi = np.linalg.solve(s.G, (X[cand] - s.c).T).T
            if np.linalg.cond(s.G) < 1e8:
                out[cand] = np.all(np.abs(xi) <= 1.0 + tol, axis=1)
                return out
        except np.linalg.LinAlgError:
            pass
    Aeq = np.vstack([s.G, s.A])
    B = np.hstack([X[cand] - s.c, np.broadcast_to(s.b, (cand.size, s.n_con))])
    lo, hi = _unit_bounds(s.n_gen)
    ok, _ = lp.feasible_many(Aeq, B, lo, hi, feas_tol=tol)
    out[cand] = ok
    return out


def is_empty(s: UncertainSet) -> bool:
    if isinstance(s, IntervalBox):
        return bool(s._empty or np.any(s.lower > s.upper + TAU_MEM))
    if isinstance(s, SampleCloud):
        return len(s) == 0
    if s.n_con == 0:
        return False
    if s.n_gen == 0:
        return bool(np.any(np.abs(s.b) > TAU_MEM))
    lo, hi = _unit_bounds(s.n_gen)
    return not lp.find_feasible(s.A, s.b, lo, hi, feas_tol=TAU_MEM).feasible


def interval_hull(s: UncertainSet, fast: bool = False) -> IntervalBox:
    """Tightest axis-aligned box containing ``s``.

    With ``fast=True`` the constraints of a CZ are ignored and the result
    ``c +- |G| 1`` is flagged ``outer=True``.
    """
    if isinstance(s, IntervalBox):
        if s._empty:
            raise EmptySetError("interval hull of the empty box")
        return s
    if isinstance(s, SampleCloud):
        if len(s) == 0:
            raise EmptySetError("interval hull of an empty cloud")
        return IntervalBox(s.points.min(axis=0), s.points.max(axis=0))
    rad = np.abs(s.G).sum(axis=1)
    if s.n_con == 0 or fast:
        return IntervalBox(s.c - rad, s.c + rad, outer=bool(fast and s.n_con > 0))
    if s._hull is None:
        box, lo_w, hi_w = hull_with_witnesses(s)
        object.__setattr__(s, "_hull", box)
        object.__setattr__(s, "_witness", np.vstack([lo_w, hi_w]))
    return s._hull


def hull_with_witnesses(s: ConstrainedZonotope):
    """Exact hull of a CZ plus the latent witness of every face.

    Returns ``(box, xi_lo, xi_hi)`` where row ``i`` of ``xi_lo`` attains the
    lower bound of coordinate ``i`` (likewise ``xi_hi``).
    """
    s = _as_cz(s)
    n, ng = s.dim, s.n_gen
    if ng == 0:
        if is_empty(s):
            raise EmptySetError("interval hull of an empty set")
        z = np.zeros((n, 0))
        return IntervalBox(s.c, s.c), z, z
    lo, hi = _unit_bounds(ng)
    C = np.vstack([s.G, -s.G])
    X, vals = lp.minimize_many(C, s.A, s.b, lo, hi, feas_tol=TAU_MEM)
    if X is None:
        raise EmptySetError("interval hull of an empty set")
    lower = s.c + vals[:n]
    upper = s.c - vals[n:]
    upper = np.maximum(upper, lower)
    return IntervalBox(lower, upper), X[:n], X[n:]


def diameter(s: UncertainSet, coords: Sequence[int] | None = None) -> float:
    """Infinity-norm diameter, the largest interval-hull width."""
    h = interval_hull(s)
    w = h.widths if coords is None else h.widths[np.asarray(coords, dtype=int)]
    return float(np.max(w))


def gnorm_proxy(s: ConstrainedZonotope) -> float:
    """``||G||_inf``, the maximum absolute row sum of the generator matrix."""
    if not isinstance(s, ConstrainedZonotope):
        raise RepresentationError("gnorm_proxy needs a constrained zonotope")
    if s.n_gen == 0:
        return 0.0
    return float(np.abs(s.G).sum(axis=1).max())


# ------------------------------------------------------------------- sampling

_REJECTION_DRAWS = 1_000_000
_PILOT_DRAWS = 1024
_AUTO_MIN_RATE = 0.01


def sample_points(s: UncertainSet, n: int, rng: np.random.Generator, method: str = "auto") -> SampleCloud:
    """Draw ``n`` points of ``s``.

    Boxes are sampled uniformly per coordinate and clouds are resampled with
    replacement. For a CZ, ``method="rejection"`` draws ``xi`` uniformly in
    the unit cube, projects it orthogonally onto ``A xi = b`` and rejects
    draws that leave the cube; the distribution over the set is not uniform.
    When the acceptance rate is too small for that to be practical
    (heavily constrained sets) ``method="walk"`` runs hit-and-run chains in
    latent space instead. ``"auto"`` picks between the two from a pilot run.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(s, IntervalBox):
        if s._empty:
            raise EmptySetError("cannot sample the empty box")
        return SampleCloud(s.lower + rng.random((n, s.dim)) * s.widths, s.dim)
    if isinstance(s, SampleCloud):
        if len(s) == 0:
            raise EmptySetError("cannot resample an empty cloud")
        return SampleCloud(s.points[rng.integers(0, len(s), n)], s.dim)
    if s.n_gen == 0:
        if is_empty(s):
            raise EmptySetError("cannot sample an empty set")
        return SampleCloud(np.tile(s.c, (n, 1)), s.dim)
    if s.n_con == 0:
        xi = rng.uniform(-1.0, 1.0, (n, s.n_gen))
        return SampleCloud(s.c + xi @ s.G.T, s.dim)
    if method not in ("auto", "rejection", "walk"):
        raise ValueError(f"unknown sampling method {method!r}")
    if method == "walk":
        xi = _walk_latent(s, n, rng)
    else:
        proj = _affine_projector(s)
        if method == "auto":
            pilot = _reject_batch(proj, _PILOT_DRAWS, s.n_gen, rng)
            if len(pilot) < _AUTO_MIN_RATE * _PILOT_DRAWS:
                log.debug("rejection acceptance %d/%d too low; using hit-and-run", len(pilot), _PILOT_DRAWS)
                xi = _walk_latent(s, n, rng)
                return SampleCloud(s.c + xi @ s.G.T, s.dim)
            try:
                xi = _rejection_latent(proj, n, s.n_gen, rng, pilot)
            except SamplingError:
                xi = _walk_latent(s, n, rng)
        else:
            xi = _rejection_latent(proj, n, s.n_gen, rng, np.zeros((0, s.n_gen)))
    return SampleCloud(s.c + xi @ s.G.T, s.dim)


def _affine_projector(s):
    # xi -> xi - A^+ (A xi - b): orthogonal projection onto {A xi = b}
    Ap = np.linalg.pinv(s.A)
    return s.A, s.b, Ap


def _reject_batch(proj, k, ng, rng):
    A, b, Ap = proj
    xi = rng.uniform(-1.0, 1.0, (k, ng))
    xi = xi - (xi @ A.T - b) @ Ap.T
    good = np.all(np.abs(xi) <= 1.0, axis=1) & np.all(np.abs(xi @ A.T - b) <= TAU_MEM, axis=1)
    return xi[good]


def _rejection_latent(proj, n, ng, rng, seed_pts):
    got = [seed_pts]
    have = len(seed_pts)
    drawn = _PILOT_DRAWS if len(seed_pts) else 0
    batch = 8192
    while have < n:
        if drawn >= _REJECTION_DRAWS and have < 1e-3 * drawn:
            raise SamplingError(f"rejection rate above 99.9% after {drawn} draws")
        pts = _reject_batch(proj, batch, ng, rng)
        drawn += batch
        got.append(pts)
        have += len(pts)
    return np.vstack(got)[:n]


def _null_basis(A, tol=1e-10):
    if A.shape[0] == 0:
        return np.eye(A.shape[1])
    _, sv, vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(sv > tol * max(sv.max(), 1.0)))
    return vt[rank:].T


@njit(cache=True)
def _walk_kernel(start, N, cols, us, burn, thin, per):
    """Hit-and-run along null-space basis directions; one chain per row of ``cols``."""
    chains = cols.shape[0]
    ng = start.size
    out = np.empty((per * chains, ng))
    for ch in range(chains):
        xi = start.copy()
        t_i = 0
        kept = 0
        total = burn + per * thin
        for step in range(total):
            c = cols[ch, t_i]
            u = us[ch, t_i]
            t_i += 1
            tmax = np.inf
            tmin = -np.inf
            for q in range(ng):
                d = N[q, c]
                if d > 1e-14:
                    hi = (1.0 - xi[q]) / d
                    lo = (-1.0 - xi[q]) / d
                elif d < -1e-14:
                    hi = (-1.0 - xi[q]) / d
                    lo = (1.0 - xi[q]) / d
                else:
                    continue
                if hi < tmax:
                    tmax = hi
                if lo > tmin:
                    tmin = lo
            if tmax < 0.0:
                tmax = 0.0
            if tmin > 0.0:
                tmin = 0.0
            t = tmin + u * (tmax - tmin)
            for q in range(ng):
                v = xi[q] + t * N[q, c]
                xi[q] = 1.0 if v > 1.0 else (-1.0 if v < -1.0 else v)
            if step >= burn and (step - burn) % thin == thin - 1:
                out[kept * chains + ch] = xi
                kept += 1
    return out


def _walk_latent(s: ConstrainedZonotope, n, rng, chains: int = 20):
    """Hit-and-run in the latent polytope ``{A xi = b, |xi| <= 1}``.

    Chains start at the mean of the interval-hull witnesses (vertices of the
    latent polytope), a point strictly inside every latent coordinate range
    those vertices span.
    """
    if s._witness is None:
        interval_hull(s)
    start = s._witness.mean(axis=0)
    N = _null_basis(s.A)
    if N.shape[1] == 0:
        return np.tile(start, (n, 1))
    k = N.shape[1]
    chains = min(chains, n)
    per = -(-n // chains)
    burn = 10 * k + 50
    thin = max(2, k // 4)
    steps = burn + per * thin
    cols = rng.integers(0, k, (chains, steps))
    us = rng.random((chains, steps))
    N = np.ascontiguousarray(N)
    return _walk_kernel(start, N, cols, us, burn, thin, per)[:n]


# -------------------------------------------------------------- serialization


def to_dict(s: UncertainSet) -> dict:
    if isinstance(s, IntervalBox):
        if s._empty:
            return {"kind": "box", "empty": True, "dim": s.dim}
        return {"kind": "box", "lower": s.lower.tolist(), "upper": s.upper.tolist()}
    if isinstance(s, ConstrainedZonotope):
        return {
            "kind": "czono",
            "c": s.c.tolist(),
            "G": s.G.tolist(),
            "A": s.A.tolist(),
            "b": s.b.tolist(),
        }
    if isinstance(s, SampleCloud):
        return {"kind": "cloud", "points": s.points.tolist(), "dim": s.dim}
    raise RepresentationError(f"cannot serialize {type(s).__name__}")


def from_dict(d: dict) -> UncertainSet:
    kind = d.get("kind")
    if kind == "box":
        if d.get("empty"):
            return IntervalBox.empty(int(d["dim"]))
        return IntervalBox(d["lower"], d["upper"])
    if kind == "czono":
        c = np.asarray(d["c"], dtype=float).reshape(-1)
        ng = len(d["G"][0]) if d["G"] else 0
        G = np.asarray(d["G"], dtype=float).reshape(c.size, ng)
        A = np.asarray(d["A"], dtype=float)
        A = A.reshape(len(d["A"]), ng)
        return ConstrainedZonotope(c, G, A, d["b"])
    if kind == "cloud":
        return SampleCloud(np.asarray(d["points"], dtype=float), d.get("dim"))
    raise ValueError(f"unknown set kind {kind!r}")


def count_outside(target: UncertainSet, points, tol: float = TAU_MEM) -> int:
    """Number of ``points`` not contained in the convex set ``target``.

    If every vertex of the points' convex hull lies in ``target`` then, by
    convexity, so does every point; only those vertices are tested first.
    """
    from scipy.spatial import ConvexHull, QhullError

    P = np.atleast_2d(np.asarray(points, dtype=float))
    if len(P) == 0:
        return 0
    probe = P
    if P.shape[1] > 1 and len(P) > P.shape[1] + 1:
        try:
            probe = P[ConvexHull(P).vertices]
        except QhullError:
            probe = P
    elif P.shape[1] == 1:
        probe = P[[int(np.argmin(P[:, 0])), int(np.argmax(P[:, 0]))]]
    if contains_many(target, probe, tol).all():
        return 0
    return int((~contains_many(target, P, tol)).sum())
