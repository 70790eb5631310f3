import math

import numpy as np
import pytest

from suppfit import (
    DesignSet,
    EntropyCurve,
    FunctionCloud,
    Polytope,
    SupportVector,
    build_regular_polytope,
    build_well_separated_design,
    distortion_estimate,
    entropy_slope,
    greedy_packing,
    load_entropy_curve,
    sample_local_cloud,
    support_value,
)

from conftest import planar_design


def planted_cloud(rows, design, radius, center=None, bodies=None) -> FunctionCloud:
    rows = np.asarray(rows, dtype=float)
    c = np.zeros(design.n) if center is None else np.asarray(center, dtype=float)
    return FunctionCloud(
        design=design,
        center=SupportVector(values=c, design=design),
        members=rows,
        radius=radius,
        bodies=bodies,
    )


# ---------------------------------------------------------------------------
# generator behaviour


@pytest.mark.parametrize("kind", ["ball", "polytope"])
def test_huge_radius_accepts_every_draw(kind):
    des = build_well_separated_design(24, 3, seed=7)
    cloud = sample_local_cloud(kind, 5.0, 40, 3, des, seed=8)
    assert cloud.count == 40
    assert cloud.attempts == 40
    assert cloud.rejection_flag is None


@pytest.mark.parametrize("kind", ["ball", "polytope"])
def test_members_respect_radius_and_move(kind):
    des = build_well_separated_design(32, 4, seed=11)
    cloud = sample_local_cloud(kind, 0.1, 60, 4, des, seed=12)
    dist = np.sqrt(np.mean((cloud.members - cloud.center.values) ** 2, axis=1))
    assert dist.max() <= 0.1 * (1.0 + 1e-9)
    # the pilot calibration should land the bulk of the cloud at a
    # non-trivial fraction of the radius, not collapsed onto the center
    assert np.median(dist) >= 0.01


def test_two_member_cloud_positive_distance():
    des = build_well_separated_design(16, 3, seed=3)
    cloud = sample_local_cloud("ball", 0.2, 2, 3, des, seed=4)
    assert cloud.count == 2
    gap = math.sqrt(float(np.mean((cloud.members[0] - cloud.members[1]) ** 2)))
    assert gap > 0.0
    assert greedy_packing(cloud, 0.0) == 2


def test_cloud_reproducible_and_seed_sensitive():
    des = build_well_separated_design(20, 3, seed=5)
    a = sample_local_cloud("ball", 0.1, 25, 3, des, seed=9)
    b = sample_local_cloud("ball", 0.1, 25, 3, des, seed=9)
    c = sample_local_cloud("ball", 0.1, 25, 3, des, seed=10)
    np.testing.assert_array_equal(a.members, b.members)
    assert not np.array_equal(a.members, c.members)


def test_distance_profile_stable_across_seeds():
    # same generator settings, disjoint seeds: the distance distribution
    # should agree decile by decile, otherwise counts are seed artifacts
    des = build_well_separated_design(48, 4, seed=21)
    qs = np.linspace(0.1, 0.9, 9)
    deciles = []
    for seed in (100, 200):
        cloud = sample_local_cloud("ball", 0.1, 600, 4, des, seed=seed)
        dist = np.sqrt(np.mean((cloud.members - cloud.center.values) ** 2, axis=1))
        deciles.append(np.quantile(dist, qs))
    rel = np.abs(deciles[0] - deciles[1]) / np.abs(deciles[1])
    assert rel.max() <= 0.10


def test_ball_cloud_center_is_net_support():
    des = build_well_separated_design(30, 3, seed=14)
    cloud = sample_local_cloud("ball", 0.05, 8, 3, des, seed=15)
    net = build_regular_polytope(512, 3, seed=0)
    np.testing.assert_allclose(cloud.center.values, support_value(net, des.points), atol=1e-12)
    assert cloud.center.values.max() <= 1.0 + 1e-12
    assert cloud.center.values.min() >= 0.99
    assert cloud.generator.startswith("cap-shave")


def test_polytope_cloud_label_and_center():
    des = build_well_separated_design(30, 3, seed=14)
    cloud = sample_local_cloud("polytope", 0.05, 8, 3, des, seed=15, m=32)
    base = build_regular_polytope(32, 3, seed=1)
    np.testing.assert_allclose(cloud.center.values, support_value(base, des.points), atol=1e-12)
    assert cloud.generator.startswith("vertex-jitter(m=32")


def test_generator_validation():
    des = build_well_separated_design(16, 3, seed=3)
    with pytest.raises(ValueError):
        sample_local_cloud("cube", 0.1, 10, 3, des, seed=1)
    with pytest.raises(ValueError):
        sample_local_cloud("ball", 0.0, 10, 3, des, seed=1)
    with pytest.raises(ValueError):
        sample_local_cloud("ball", 0.1, 1, 3, des, seed=1)
    with pytest.raises(ValueError):
        sample_local_cloud("ball", 0.1, 10, 4, des, seed=1)


def test_cloud_field_validation():
    des = build_well_separated_design(8, 2, seed=1)
    center = SupportVector(values=np.ones(8), design=des)
    good = np.ones((3, 8))
    with pytest.raises(ValueError):
        FunctionCloud(design=des, center=center, members=np.ones((3, 5)), radius=0.5)
    with pytest.raises(ValueError):
        FunctionCloud(design=des, center=center, members=good, radius=0.0)
    with pytest.raises(ValueError):
        FunctionCloud(design=des, center=center, members=3.0 * good, radius=0.5)
    with pytest.raises(ValueError):
        FunctionCloud(design=des, center=center, members=good, radius=0.5, bodies=[None])
    cloud = FunctionCloud(design=des, center=center, members=good, radius=0.5)
    assert cloud.count == 3


# ---------------------------------------------------------------------------
# greedy packing


def test_packing_eps_zero_counts_distinct_rows():
    des = build_well_separated_design(6, 2, seed=2)
    rows = np.array([[1.0] * 6, [1.0] * 6, [2.0] * 6, [2.0] * 6, [3.0] * 6])
    cloud = planted_cloud(rows, des, radius=8.0)
    assert greedy_packing(cloud, 0.0) == 3


def test_packing_eps_beyond_diameter_keeps_one():
    des = build_well_separated_design(6, 2, seed=2)
    rows = np.array([[0.0] * 6, [0.5] * 6, [1.0] * 6])
    cloud = planted_cloud(rows, des, radius=2.0)
    assert greedy_packing(cloud, 10.0) == 1


def test_packing_planted_orthogonal_grid():
    n = 20
    des = build_well_separated_design(n, 3, seed=6)
    a = math.sqrt(n / 2.0)
    rows = a * np.eye(10, n)
    # brute-force check of the construction: every pair sits at L2(design)
    # distance exactly one
    for i in range(10):
        for j in range(i + 1, 10):
            dist = math.sqrt(float(np.mean((rows[i] - rows[j]) ** 2)))
            assert abs(dist - 1.0) <= 1e-12
    cloud = planted_cloud(rows, des, radius=1.0)
    assert greedy_packing(cloud, 0.5) == 10
    assert greedy_packing(cloud, 1.0) == 10
    assert greedy_packing(cloud, 1.000001) == 1


def test_packing_monotone_in_eps():
    des = build_well_separated_design(24, 3, seed=17)
    cloud = sample_local_cloud("ball", 0.1, 120, 3, des, seed=18)
    counts = [greedy_packing(cloud, e) for e in (0.005, 0.01, 0.02, 0.04, 0.08)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))
    assert counts[0] >= 2


def test_packing_monotone_under_prefix_growth():
    # the scan is sequential, so a cloud extending another by appended
    # members can only keep more points
    des = build_well_separated_design(24, 3, seed=17)
    big = sample_local_cloud("ball", 0.1, 120, 3, des, seed=19)
    small = planted_cloud(big.members[:50], des, radius=0.1, center=big.center.values)
    for eps in (0.01, 0.02, 0.04):
        assert greedy_packing(big, eps) >= greedy_packing(small, eps)


def test_packing_rejects_negative_eps():
    des = build_well_separated_design(6, 2, seed=2)
    cloud = planted_cloud(np.zeros((2, 6)), des, radius=1.0)
    with pytest.raises(ValueError):
        greedy_packing(cloud, -0.1)


# ---------------------------------------------------------------------------
# slope fitting


def planted_count_clouds(n=256, d=3, seed=30):
    """One cloud per grid point whose packing count is exp(eps^-2) exactly.

    Members are scaled coordinate rows, pairwise at 1.05 eps, so the greedy
    count equals the row count and log log N(eps) = 2 log(1/eps) on the
    nose at every grid point.
    """
    des = build_well_separated_design(n, d, seed=seed)
    counts = [256, 128, 64, 32, 16, 8]
    eps = np.array([1.0 / math.sqrt(math.log(c)) for c in counts])
    clouds = []
    for c, e in zip(counts, eps):
        a = 1.05 * e * math.sqrt(n / 2.0)
        rows = a * np.eye(c, n)
        clouds.append(planted_cloud(rows, des, radius=2.0 * e))
    return clouds, eps, counts


def test_slope_exact_on_planted_counts():
    clouds, eps, counts = planted_count_clouds()
    curve = entropy_slope(clouds, eps)
    np.testing.assert_allclose(curve.log_packing, np.log(counts), atol=1e-12)
    assert abs(curve.fitted_exponent - 2.0) <= 1e-9
    assert abs(curve.fit_ci[0] - 2.0) <= 1e-6
    assert abs(curve.fit_ci[1] - 2.0) <= 1e-6
    assert not curve.degenerate


def test_slope_degenerate_on_flat_clouds():
    des = build_well_separated_design(12, 2, seed=9)
    rows = np.ones((5, 12))
    eps = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
    clouds = [planted_cloud(rows, des, radius=2.0) for _ in eps]
    curve = entropy_slope(clouds, eps)
    assert curve.degenerate
    assert curve.fitted_exponent == 0.0
    assert curve.fit_ci == (0.0, 0.0)
    assert np.all(curve.log_packing == 0.0)


def test_slope_validation():
    des = build_well_separated_design(12, 2, seed=9)
    cloud = planted_cloud(np.zeros((2, 12)), des, radius=1.0)
    with pytest.raises(ValueError):
        entropy_slope([cloud] * 3, np.array([0.1, 0.2, 0.3]))
    with pytest.raises(ValueError):
        entropy_slope([cloud] * 3, np.array([0.1, 0.2, 0.3, 0.4]))
    with pytest.raises(ValueError):
        entropy_slope([cloud] * 4, np.array([0.1, 0.2, 0.2, 0.4]))
    with pytest.raises(ValueError):
        entropy_slope([cloud] * 4, np.array([-0.1, 0.2, 0.3, 0.4]))


def test_ball_packs_denser_than_polytope_at_matched_scale():
    # the contrast the generators exist for: at the same eps the ball
    # neighborhood holds many separated bodies, the jittered polytope a few
    des = build_well_separated_design(64, 5, seed=33)
    eps = 0.025
    ball = sample_local_cloud("ball", 2.0 * eps, 400, 5, des, seed=34)
    poly = sample_local_cloud("polytope", eps, 400, 5, des, seed=35, m=32)
    nb = greedy_packing(ball, eps)
    np_ = greedy_packing(poly, eps)
    assert nb >= 8 * max(np_, 1)
    assert np_ <= 8


def test_curve_csv_roundtrip():
    clouds, eps, _ = planted_count_clouds()
    curve = entropy_slope(clouds, eps)
    curve.center_kind = "ball"
    curve.d = 3
    curve.m = 32
    curve.seed = 30
    back = load_entropy_curve(curve.to_csv())
    np.testing.assert_array_equal(back.eps_grid, curve.eps_grid)
    np.testing.assert_array_equal(back.log_packing, curve.log_packing)
    assert back.fitted_exponent == curve.fitted_exponent
    assert back.fit_ci == curve.fit_ci
    assert back.center_kind == "ball"
    assert back.d == 3 and back.m == 32 and back.seed == 30
    assert back.degenerate == curve.degenerate


def test_curve_load_rejects_garbage():
    with pytest.raises(ValueError):
        load_entropy_curve("eps,log_packing\n0.1,2\n")
    with pytest.raises(ValueError):
        load_entropy_curve('# {"fitted_exponent": 1, "ci": [0, 2]}\nwrong,header\n0.1,2\n')


# ---------------------------------------------------------------------------
# design-vs-population distortion


def test_distortion_zero_for_identical_bodies():
    des = build_well_separated_design(16, 2, seed=20)
    body = build_regular_polytope(8, 2, seed=2)
    h = support_value(body, des.points)
    cloud = planted_cloud(
        np.stack([h, h]), des, radius=1.0, center=h, bodies=[body, body]
    )
    assert distortion_estimate(des, cloud, 500, seed=21) == 0.0


def test_distortion_zero_on_ball_clouds():
    # sampled ball neighborhoods never trip the factor-two comparison on
    # separated designs; the estimate is exactly the clamped zero
    des = build_well_separated_design(64, 3, seed=40)
    cloud = sample_local_cloud("ball", 0.08, 24, 3, des, seed=41, with_bodies=True)
    assert distortion_estimate(des, cloud, 20_000, seed=42) == 0.0


def test_distortion_dense_planar_design_zero():
    des = build_well_separated_design(10_000, 2, seed=43)
    cloud = sample_local_cloud("ball", 0.08, 24, 2, des, seed=44, with_bodies=True)
    assert distortion_estimate(des, cloud, 20_000, seed=45) == 0.0


def test_distortion_detects_planted_violation_and_scales():
    # square and diamond share support values on the axis design but differ
    # along the diagonals, so the empirical metric collapses a genuinely
    # separated pair; the estimate must be positive and scale linearly
    des = planar_design([0.0, math.pi / 2.0, math.pi, 3.0 * math.pi / 2.0])
    square = Polytope(dim=2, vertices=np.array([[1.0, 1], [-1, 1], [-1, -1], [1, -1]]))
    diamond = Polytope(dim=2, vertices=np.array([[1.0, 0], [0, 1], [-1, 0], [0, -1]]))
    h = np.ones(4)
    base = planted_cloud(np.stack([h, h]), des, radius=1.0, center=h, bodies=[square, diamond])
    d1 = distortion_estimate(des, base, 4096, seed=50)
    assert d1 >= 0.2

    lam = 3.0
    scaled = planted_cloud(
        lam * np.stack([h, h]),
        des,
        radius=lam,
        center=lam * h,
        bodies=[
            Polytope(dim=2, vertices=lam * square.vertices),
            Polytope(dim=2, vertices=lam * diamond.vertices),
        ],
    )
    d3 = distortion_estimate(des, scaled, 4096, seed=50)
    assert abs(d3 - lam * d1) <= 1e-12 * lam


def test_distortion_validation():
    des = build_well_separated_design(16, 2, seed=20)
    cloud = planted_cloud(np.zeros((2, 16)), des, radius=1.0)
    with pytest.raises(ValueError):
        distortion_estimate(des, cloud, 100, seed=1)
    body = build_regular_polytope(4, 2, seed=1)
    h = support_value(body, des.points)
    with_bodies = planted_cloud(
        np.stack([h, h]), des, radius=1.0, center=h, bodies=[body, body]
    )
    with pytest.raises(ValueError):
        distortion_estimate(des, with_bodies, 1, seed=1)
