import json

import numpy as np
import pytest

import oracles
from smfnet import sets as S
from smfnet.sets import ConstrainedZonotope as CZ, IntervalBox as Box, SampleCloud


def unit_square():
    return CZ(np.zeros(2), np.eye(2))


def random_cz(rng, n=2, ng=4, nc=1):
    xi0 = rng.uniform(-0.8, 0.8, ng)
    A = rng.normal(size=(nc, ng))
    return CZ(rng.normal(size=n), rng.normal(size=(n, ng)), A, A @ xi0)


def hull_eq(h1, h2, tol=1e-9):
    return np.allclose(h1.lower, h2.lower, atol=tol) and np.allclose(h1.upper, h2.upper, atol=tol)


# -------------------------------------------------------------- construction


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Box([1.0], [0.0])
    e = Box.empty(2)
    assert S.is_empty(e) and e.dim == 2


def test_box_dimension_checks():
    with pytest.raises(S.SetDimensionError):
        Box([0.0, 1.0], [1.0])
    with pytest.raises(S.SetDimensionError):
        Box([], [])


def test_cz_dimension_checks():
    with pytest.raises(S.SetDimensionError):
        CZ(np.zeros(2), np.eye(2), np.ones((1, 2)), np.ones(2))


def test_cloud_needs_dimension_when_empty():
    with pytest.raises(S.SetDimensionError):
        SampleCloud(np.zeros((0, 3)))
    c = SampleCloud(np.zeros((0, 3)), 3)
    assert len(c) == 0 and c.dim == 3 and S.is_empty(c)


# ---------------------------------------------------------------- algebra


def test_minkowski_interval():
    out = S.minkowski_sum(Box([0.0], [1.0]), Box([-0.5], [0.5]))
    assert np.allclose(out.lower, [-0.5]) and np.allclose(out.upper, [1.5])


def test_minkowski_singletons():
    out = S.minkowski_sum(CZ([1.0, 0.0], np.zeros((2, 0))), CZ([0.0, 2.0], np.zeros((2, 0))))
    assert isinstance(out, CZ) and out.n_gen == 0
    assert np.allclose(out.c, [1.0, 2.0])


def test_minkowski_square_plus_box_sampling():
    rng = np.random.default_rng(1)
    sq, bx = unit_square(), Box([-0.5, -0.5], [0.5, 0.5])
    out = S.minkowski_sum(sq, bx)
    h = S.interval_hull(out)
    assert np.allclose(h.lower, -1.5) and np.allclose(h.upper, 1.5)
    p = S.sample_points(sq, 10_000, rng).points + S.sample_points(bx, 10_000, rng).points
    assert S.contains_many(out, p).all()


def test_minkowski_dimension_mismatch():
    with pytest.raises(S.SetDimensionError):
        S.minkowski_sum(Box([0.0], [1.0]), Box([0.0, 0.0], [1.0, 1.0]))


def test_cloud_operand_rejected():
    with pytest.raises(S.RepresentationError):
        S.minkowski_sum(SampleCloud(np.zeros((3, 1))), Box([0.0], [1.0]))


def test_cartesian_boxes():
    out = S.cartesian_product(Box([0.0], [1.0]), Box([2.0], [3.0]))
    assert isinstance(out, Box)
    assert np.allclose(out.lower, [0, 2]) and np.allclose(out.upper, [1, 3])


def test_cartesian_with_singleton():
    rng = np.random.default_rng(2)
    s = random_cz(rng)
    out = S.cartesian_product(s, CZ([4.0], np.zeros((1, 0))))
    pts = S.sample_points(out, 300, rng).points
    assert np.allclose(pts[:, 2], 4.0)
    assert S.contains_many(s, pts[:, :2]).all()


def test_cartesian_clouds_pair_pointwise():
    a = SampleCloud(np.arange(6.0).reshape(3, 2))
    out = S.cartesian_product(a, SampleCloud(np.ones((3, 1))))
    assert out.points.shape == (3, 3)
    with pytest.raises(S.RepresentationError):
        S.cartesian_product(a, SampleCloud(np.ones((2, 1))))


def test_project_of_product_matches_hull():
    rng = np.random.default_rng(3)
    for _ in range(20):
        lo = rng.uniform(-3, 0, 2)
        s = Box(lo, lo + rng.uniform(0.1, 2, 2))
        t = Box(-np.ones(2), np.ones(2)).to_czono()
        proj = S.project(S.cartesian_product(s.to_czono(), t), [0, 1])
        assert hull_eq(S.interval_hull(proj), S.interval_hull(s))
        pts = S.sample_points(proj, 100, rng).points
        assert S.contains_many(s, pts).all()
        assert S.contains_many(proj, S.sample_points(s, 100, rng).points).all()


def test_linear_image_identity_and_double_integrator():
    s = random_cz(np.random.default_rng(4))
    assert hull_eq(S.interval_hull(S.linear_image(np.eye(2), s)), S.interval_hull(s))
    T = np.pi / 8
    out = S.linear_image(np.array([[1.0, T], [0.0, 1.0]]), CZ([1.0, 1.0], np.zeros((2, 0))))
    assert np.allclose(out.c, [1 + np.pi / 8, 1.0]) and out.n_gen == 0


def test_linear_image_diagonal_keeps_box():
    out = S.linear_image(np.diag([2.0, -1.0]), Box([0.0, 0.0], [1.0, 1.0]))
    assert isinstance(out, Box)
    assert np.allclose(out.lower, [0, -1]) and np.allclose(out.upper, [2, 0])


def test_linear_image_sampling_oracle():
    rng = np.random.default_rng(5)
    m = rng.normal(size=(3, 2))
    b = Box([-1.0, 0.0], [0.5, 2.0])
    out = S.linear_image(m, b)
    p = S.sample_points(b, 1000, rng).points @ m.T
    assert out.dim == 3 and S.contains_many(out, p).all()


def test_linear_image_dimension_mismatch():
    with pytest.raises(S.SetDimensionError):
        S.linear_image(np.eye(3), Box([0.0, 0.0], [1.0, 1.0]))


def test_project_box_index():
    out = S.project(Box([0.0, 2.0], [1.0, 3.0]), [1])
    assert np.allclose(out.lower, [2.0]) and np.allclose(out.upper, [3.0])
    with pytest.raises(IndexError):
        S.project(Box([0.0], [1.0]), [1])
    with pytest.raises(ValueError):
        S.project(Box([0.0, 0.0], [1.0, 1.0]), [1, 0])


def test_constrain_linear_vacuous_and_box():
    s = random_cz(np.random.default_rng(6))
    h = S.interval_hull(s)
    wide = Box(h.lower - 1, h.upper + 1)
    assert hull_eq(S.interval_hull(S.constrain_linear(s, np.eye(2), wide)), h)
    out = S.constrain_linear(Box([-2.0, -2.0], [2.0, 2.0]), np.eye(2), Box([0.0, 0.0], [1.0, 1.0]))
    hb = S.interval_hull(out)
    assert np.allclose(hb.lower, 0) and np.allclose(hb.upper, 1)


def test_constrain_linear_grid_oracle():
    # unit square CZ is [-1, 1]^2; x1 + x2 in [1.5, 3]
    out = S.constrain_linear(unit_square(), np.array([[1.0, 1.0]]), Box([1.5], [3.0]))
    assert not S.is_empty(out)
    axes, pts = oracles.grid([-1.02, -1.02], [1.02, 1.02])
    truth = oracles.in_box([-1, -1], [1, 1], pts) & (pts.sum(axis=1) >= 1.5 - 1e-12)
    got = S.contains_many(out, pts)
    shape = tuple(len(a) for a in axes)
    interior, _ = oracles.grid_disagreement(truth.reshape(shape), got.reshape(shape))
    assert interior == 0
    probe = np.random.default_rng(7).uniform(-1.1, 1.1, (1000, 2))
    ptruth = oracles.in_box([-1, -1], [1, 1], probe) & (probe.sum(axis=1) >= 1.5)
    near = np.abs(probe.sum(axis=1) - 1.5) < 0.02
    near |= np.any(np.abs(np.abs(probe) - 1) < 0.01, axis=1)
    assert np.all((S.contains_many(out, probe) == ptruth) | near)


def test_intersect_idempotent_and_disjoint():
    s = random_cz(np.random.default_rng(8))
    assert hull_eq(S.interval_hull(S.intersect(s, s)), S.interval_hull(s), 1e-7)
    assert S.is_empty(S.intersect(Box([0.0], [1.0]), Box([2.0], [3.0])))


def test_intersect_conjunction_oracle():
    rng = np.random.default_rng(9)
    s = CZ([0.0, 0.0], rng.normal(size=(2, 3)))
    t = CZ([0.3, -0.2], rng.normal(size=(2, 3)))
    both = S.intersect(s, t)
    probes = rng.uniform(-3, 3, (1000, 2))
    want = S.contains_many(s, probes) & S.contains_many(t, probes)
    assert np.array_equal(S.contains_many(both, probes), want)


# ---------------------------------------------------------------- queries


def test_contains_basics():
    assert S.contains(Box([0.0, 0.0], [1.0, 1.0]), [0.5, 0.5])
    single = CZ([1.0, 2.0], np.zeros((2, 0)))
    assert S.contains(single, [1.0, 2.0])
    assert not S.contains(single, [2.0, 2.0])
    with pytest.raises(S.SetDimensionError):
        S.contains(single, [1.0])


def test_contains_grid_oracle_zonotope():
    # 0.005 grid against the closed-form half-spaces of a 2-D zonotope
    c, G = np.array([0.2, -0.1]), np.array([[0.5, 0.2, 0.0], [0.1, 0.4, 0.3]])
    H, h = oracles.zonotope_halfspaces_2d(c, G)
    axes, pts = oracles.grid([-0.7, -1.0], [1.1, 0.8], 0.005)
    shape = tuple(len(a) for a in axes)
    truth = oracles.in_halfspaces(H, h, pts).reshape(shape)
    got = S.contains_many(CZ(c, G), pts).reshape(shape)
    interior, _ = oracles.grid_disagreement(truth, got)
    assert interior == 0
    probes = np.random.default_rng(10).uniform([-0.7, -1.0], [1.1, 0.8], (1000, 2))
    slack = np.min(h - probes @ H.T, axis=1) / np.linalg.norm(H, axis=1).min()
    agree = S.contains_many(CZ(c, G), probes) == oracles.in_halfspaces(H, h, probes)
    assert np.all(agree | (np.abs(slack) < 0.005))


def test_contains_cloud_uses_hull():
    c = SampleCloud(np.array([[0.0, 0.0], [1.0, 2.0]]))
    assert S.contains(c, [0.5, 1.9]) and not S.contains(c, [1.1, 0.0])


def test_is_empty_cases():
    assert not S.is_empty(Box([0.0], [1.0]))
    assert S.is_empty(CZ([0.0], [[1.0]], [[1.0]], [2.0]))
    rng = np.random.default_rng(11)
    for _ in range(20):
        assert not S.is_empty(random_cz(rng, n=3, ng=6, nc=3))


def test_interval_hull_cases():
    b = Box([0.0, 1.0], [2.0, 3.0])
    assert S.interval_hull(b) is b
    h = S.interval_hull(CZ([0.0, 0.0], np.eye(2)))
    assert np.allclose(h.lower, -1) and np.allclose(h.upper, 1)


def test_interval_hull_witnesses():
    s = CZ([0.0, 0.0], np.eye(2), [[1.0, 1.0]], [0.0])
    h, w_lo, w_hi = S.hull_with_witnesses(s)
    assert np.allclose(h.lower, -1) and np.allclose(h.upper, 1)
    # every face of the hull is attained by a feasible latent point
    for k, (a, b) in enumerate(zip(w_lo, w_hi)):
        for xi, bound in ((a, h.lower[k]), (b, h.upper[k])):
            assert abs(xi.sum()) < 1e-9 and np.all(np.abs(xi) <= 1 + 1e-9)
            assert np.isclose((s.c + s.G @ xi)[k], bound)


def test_interval_hull_fast_flags_outer():
    s = CZ([0.0, 0.0], np.eye(2), [[1.0, 0.0]], [0.5])
    fast = S.interval_hull(s, fast=True)
    exact = S.interval_hull(s)
    assert fast.outer and not exact.outer
    assert np.allclose(exact.lower, [0.5, -1]) and np.allclose(fast.lower, [-1, -1])


def test_interval_hull_empty_raises():
    with pytest.raises(S.EmptySetError):
        S.interval_hull(CZ([0.0], [[1.0]], [[1.0]], [2.0]))


def test_diameter_and_gnorm():
    assert S.diameter(Box([0.0, 0.0], [1.0, 3.0])) == 3.0
    assert S.diameter(CZ([1.0, 1.0], np.zeros((2, 0)))) == 0.0
    assert S.gnorm_proxy(CZ([0.0, 0.0], np.eye(2))) == 1.0
    assert S.gnorm_proxy(CZ([0.0, 0.0], [[1.0, 2.0], [0.0, 0.5]])) == 3.0
    with pytest.raises(S.RepresentationError):
        S.gnorm_proxy(Box([0.0], [1.0]))


def test_diameter_grid_oracle():
    c, G = np.array([0.0, 0.0]), np.array([[0.6, 0.3, -0.2], [0.2, -0.5, 0.4]])
    H, h = oracles.zonotope_halfspaces_2d(c, G)
    axes, pts = oracles.grid([-1.5, -1.5], [1.5, 1.5])
    inside = oracles.in_halfspaces(H, h, pts).reshape(len(axes[0]), len(axes[1]))
    lo, hi = oracles.mask_hull(axes, inside)
    assert abs(S.diameter(CZ(c, G)) - np.max(hi - lo)) <= 2 * oracles.RES


def test_gnorm_bounds_diameter_for_zonotopes():
    rng = np.random.default_rng(12)
    for _ in range(100):
        z = CZ(rng.normal(size=2), rng.normal(size=(2, rng.integers(1, 5))))
        assert 2 * S.gnorm_proxy(z) >= S.diameter(z) - 1e-9


def test_diameter_scales_with_alpha():
    rng = np.random.default_rng(13)
    for _ in range(20):
        s, a = random_cz(rng), rng.uniform(-3, 3)
        assert np.isclose(S.diameter(S.linear_image(a * np.eye(2), s)), abs(a) * S.diameter(s), atol=1e-8)


# --------------------------------------------------------------- sampling


def test_sample_interval_order_statistics():
    # uniform on [0, 1]: P(min >= 0.01) = 0.99^1e4, negligible
    p = S.sample_points(Box([0.0], [1.0]), 10_000, np.random.default_rng(0)).points
    assert p.min() < 0.01 and p.max() > 0.99


def test_sample_singleton():
    p = S.sample_points(CZ([1.0, 2.0], np.zeros((2, 0))), 5, np.random.default_rng(0)).points
    assert np.allclose(p, [[1.0, 2.0]] * 5)


@pytest.mark.parametrize("method", ["rejection", "walk", "auto"])
def test_samples_are_members(method):
    rng = np.random.default_rng(14)
    s = random_cz(rng, n=3, ng=6, nc=2)
    p = S.sample_points(s, 500, rng, method=method).points
    assert p.shape == (500, 3) and S.contains_many(s, p).all()


def test_sample_cloud_resamples():
    c = SampleCloud(np.array([[0.0], [1.0], [2.0]]))
    p = S.sample_points(c, 50, np.random.default_rng(0)).points
    assert set(p.ravel()) <= {0.0, 1.0, 2.0}


def test_sample_degenerate_rejection_raises():
    # a thin slab: almost every latent draw is rejected
    s = CZ([0.0], [[1.0] * 12], [[1.0] * 12], [11.99])
    with pytest.raises(S.SamplingError):
        S.sample_points(s, 10, np.random.default_rng(0), method="rejection")


def test_sampling_deterministic():
    s = random_cz(np.random.default_rng(15))
    a = S.sample_points(s, 100, np.random.default_rng(3)).points
    b = S.sample_points(s, 100, np.random.default_rng(3)).points
    assert np.array_equal(a, b)


def test_count_outside():
    b = Box([0.0, 0.0], [1.0, 1.0])
    pts = np.array([[0.5, 0.5], [2.0, 0.0], [0.0, 1.0]])
    assert S.count_outside(b, pts) == 1
    assert S.count_outside(b.to_czono(), pts) == 1


# ----------------------------------------------------------- serialization


@pytest.mark.parametrize("s", [
    Box([0.0, -1.5], [1.0, 2.0]),
    Box.empty(3),
    CZ([0.1, 0.2], [[1.0, 0.5, 0.0], [0.0, 1.0, 1.0 / 3.0]], [[1.0, -1.0, 0.25]], [0.1]),
    SampleCloud(np.array([[0.1, 0.2], [np.pi, -1e-17]])),
])
def test_json_round_trip(s):
    d = json.loads(json.dumps(S.to_dict(s)))
    t = S.from_dict(d)
    assert type(t) is type(s)
    if isinstance(s, Box):
        assert np.array_equal(s.lower, t.lower) and np.array_equal(s.upper, t.upper)
        assert S.is_empty(s) == S.is_empty(t)
    elif isinstance(s, CZ):
        for f in "cGAb":
            assert np.array_equal(getattr(s, f), getattr(t, f))
    else:
        assert np.array_equal(s.points, t.points)


def test_json_kinds():
    assert S.to_dict(Box([0.0], [1.0])) == {"kind": "box", "lower": [0.0], "upper": [1.0]}
    assert S.to_dict(CZ([0.0], [[1.0]]))["kind"] == "czono"
    assert S.to_dict(SampleCloud(np.zeros((1, 1))))["kind"] == "cloud"
    with pytest.raises(ValueError):
        S.from_dict({"kind": "polytope"})
