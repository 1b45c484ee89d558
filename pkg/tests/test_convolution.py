import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transconv import convolution as conv
from transconv.convolution import (conv_l2_norm, convolve_at, convolve_points, fiber,
                                   fiber_pairing, fiber_table, thickened_trilinear,
                                   verify_theorem1)
from transconv.errors import ParallelPair
from transconv.families import coordinate_planes, dual_basis_patches, random_linear_frames
from transconv.linalg import DimensionSignature
from transconv.surfaces import SurfaceDensity, parallelotope_surface

E = np.eye(3)
ones = SurfaceDensity.constant


def linear_triple(seed, codims=(1, 1, 1), cells=1):
    rng = np.random.default_rng(seed)
    sig = DimensionSignature.from_codims(*codims)
    V = random_linear_frames(rng, sig, 0.2)
    (S1, S2, S3), g = dual_basis_patches(*V, cells=cells)
    f1 = SurfaceDensity(rng.uniform(0.2, 1, len(S1)))
    f2 = SurfaceDensity(rng.uniform(0.2, 1, len(S2)))
    return S1, S2, S3, f1, f2, g


def test_coordinate_fiber_is_a_unit_segment():
    S1, S2, S3 = coordinate_planes()
    pieces = fiber([0.3, 0.6, 0.0], S1, S2)
    assert pieces
    assert all(p.weight == pytest.approx(1.0) for p in pieces)
    assert sum(p.volume for p in pieces) == pytest.approx(1.0, abs=1e-12)
    # every piece lies in the plane x = 0 and along the z direction
    for p in pieces:
        frame = np.asarray(p.affine_frame)
        assert abs(abs(frame[2, 0]) - 1.0) < 1e-12
    assert fiber([3.0, 3.0, 3.0], S1, S2) == []


def test_tilted_planes_fiber_closed_form():
    r = 0.6
    a = np.array([np.cos(r), np.sin(r), 0.0])
    S1 = parallelotope_surface(np.zeros(3), [E[1], E[2]])
    S2 = parallelotope_surface(np.zeros(3), [a, E[2]])
    # z = (0, s, u) + p a + q e3: p = z1 / cos r, s = z2 - z1 tan r, u = z3 - q,
    # with q in [max(0, z3 - 1), min(1, z3)] -> length 0.7 for z3 = 0.7
    z = np.array([0.5 * np.cos(r), 0.4 + 0.5 * np.sin(r), 0.7])
    pieces = fiber(z, S1, S2)
    assert sum(p.volume for p in pieces) == pytest.approx(0.7, abs=1e-12)
    assert {round(p.weight, 12) for p in pieces} == {round(1 / np.cos(r), 12)}
    val = convolve_at(z, ones(S1), ones(S2), S1, S2).value
    assert val == pytest.approx(0.7 / np.cos(r), rel=1e-12)
    for p in pieces:
        A, b = p.clip
        # clip vertices map into both facets: x in S1 (first coord 0), z - x in S2
        u = np.linspace(-5, 5, 2001)[:, None]
        inside = u[(A @ u.T <= b[:, None] + 1e-12).all(axis=0)]
        x = p.points(inside)
        assert np.abs(x[:, 0]).max() < 1e-12


def test_coordinate_convolution_value_is_one():
    S1, S2, S3 = coordinate_planes()
    for z in ([0.2, 0.7, 0.0], [0.9, 0.1, 0.0], [0.5, 0.5, 0.0]):
        assert convolve_at(z, ones(S1), ones(S2), S1, S2).value == pytest.approx(1.0, abs=1e-12)
    assert convolve_at([0.5, 0.5, 0.0], ones(S1, 0.0), ones(S2), S1, S2).value == 0.0


def test_coordinate_norm_and_ratio():
    S1, S2, S3 = coordinate_planes()
    res = conv_l2_norm(ones(S1), ones(S2), S1, S2, S3, level=2)
    assert res.value == pytest.approx(1.0, abs=1e-10)
    assert conv_l2_norm(ones(S1, 0.0), ones(S2), S1, S2, S3).value == 0.0
    rep = verify_theorem1(ones(S1), ones(S2), S1, S2, S3, level=2)
    assert rep.ratio == pytest.approx(1.0, abs=1e-10)
    assert rep.bound == pytest.approx(1.0, abs=1e-10)
    assert rep.refined_bound == pytest.approx(1.0, abs=1e-10)
    assert rep.passed and rep.passed_refined


def test_norm_converges_to_fine_riemann_sum():
    S1, S2, S3, f1, f2, _ = linear_triple(3, cells=2)
    coarse = conv_l2_norm(f1, f2, S1, S2, S3, level=2).value
    fine = np.sqrt(conv._conv_sq_norm(f1, f2, S1, S2, S3, 5, 1))
    assert coarse == pytest.approx(fine, rel=1e-2)


def test_random_linear_ratio_below_sharp_constant():
    for seed in range(3):
        S1, S2, S3, f1, f2, g = linear_triple(seed, cells=2)
        rep = verify_theorem1(f1, f2, S1, S2, S3, level=3)
        assert rep.linear_gamma == pytest.approx(g, rel=1e-12)
        assert rep.ratio <= g ** -0.5 * (1 + 1e-9) <= g ** -1.5 * (1 + 1e-9)
        assert rep.passed


@given(st.integers(0, 1000), st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=15)
def test_bilinearity(seed, a, b):
    S1, S2, S3, f1, f2, _ = linear_triple(seed, cells=2)
    rng = np.random.default_rng(seed + 1)
    g1 = rng.uniform(0, 1, len(S1))
    Z = S3.centroids
    T = fiber_table(S1, S2, Z)
    lhs = T.values(a * f1.values + b * g1, f2)
    rhs = a * T.values(f1, f2) + b * T.values(g1, f2)
    assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, np.abs(rhs).max())


@given(st.integers(0, 1000))
@settings(max_examples=10)
def test_symmetry(seed):
    S1, S2, S3, f1, f2, _ = linear_triple(seed, cells=2)
    a = conv_l2_norm(f1, f2, S1, S2, S3, level=2).value
    b = conv_l2_norm(f2, f1, S2, S1, S3, level=2).value
    assert a == pytest.approx(b, rel=1e-10)


@given(st.integers(0, 1000))
@settings(max_examples=10)
def test_translation_covariance(seed):
    S1, S2, S3, f1, f2, _ = linear_triple(seed, cells=2)
    v = np.random.default_rng(seed).standard_normal(3)
    a = conv_l2_norm(f1, f2, S1, S2, S3, level=2).value
    b = conv_l2_norm(f1, f2, S1.translated(v), S2, S3.translated(v), level=2).value
    assert a == pytest.approx(b, rel=1e-10)


@pytest.mark.parametrize("lam", [0.25, 3.0])
def test_ratio_is_scale_invariant(lam):
    S1, S2, S3, f1, f2, _ = linear_triple(11, codims=(1, 1, 2), cells=1)
    r = verify_theorem1(f1, f2, S1, S2, S3, level=2, refined=False).ratio
    rl = verify_theorem1(f1, f2, S1.scaled(lam), S2.scaled(lam), S3.scaled(lam), level=2,
                         refined=False).ratio
    assert rl == pytest.approx(r, rel=1e-9)


def test_parallel_pair_is_reported():
    S1 = parallelotope_surface(np.zeros(3), [E[1], E[2]])
    S2 = parallelotope_surface(np.zeros(3), [E[1], E[2]])
    with pytest.raises(ParallelPair) as exc:
        convolve_at([0.0, 0.5, 0.5], ones(S1), ones(S2), S1, S2)
    assert exc.value.pairs


def test_table_independent_of_threads(monkeypatch):
    monkeypatch.setattr(conv, "PAIR_CHUNK", 7)
    S1, S2, S3, f1, f2, _ = linear_triple(5, cells=2)
    Z = conv.midpoint_nodes(S3, 2).points
    a = convolve_points(Z, f1, f2, S1, S2, threads=1)
    b = convolve_points(Z, f1, f2, S1, S2, threads=3)
    assert np.array_equal(a, b)


def test_threads_env_default(monkeypatch):
    monkeypatch.setenv("TRANSCONV_THREADS", "4")
    assert conv.default_threads() == 4


def test_thickened_zero_densities():
    S1, S2, S3 = coordinate_planes()
    est = thickened_trilinear(ones(S1, 0), ones(S2), ones(S3), S1, S2, S3, samples=1000)
    assert est.value == 0.0 and est.stderr == 0.0


def test_thickened_coordinate_triple_product():
    S1, S2, S3 = coordinate_planes()
    S3r = S3.reflected()
    pair = fiber_pairing(ones(S1), ones(S2), ones(S3r), S1, S2, S3r, level=2)
    est = thickened_trilinear(ones(S1), ones(S2), ones(S3r), S1, S2, S3r, epsilon=0.01,
                              samples=400_000, seed=3)
    assert pair.value == pytest.approx(1.0, abs=1e-12)
    assert abs(est.value - pair.value) <= 3 * est.stderr


def test_thickened_epsilon_halving_is_first_order():
    # for smooth (constant) densities the thickening bias is O(eps)
    S1, S2, S3, f1, f2, _ = linear_triple(4)
    S3r = S3.reflected()
    f3 = ones(S3r)
    limit = fiber_pairing(f1, f2, f3, S1, S2, S3r, level=3).value
    big = thickened_trilinear(f1, f2, f3, S1, S2, S3r, epsilon=0.2, samples=400_000, seed=1)
    half = thickened_trilinear(f1, f2, f3, S1, S2, S3r, epsilon=0.1, samples=400_000, seed=2)
    e1, e2 = abs(big.value - limit), abs(half.value - limit)
    assert e2 < e1
    assert e2 <= 0.5 * e1 + 3 * (big.stderr + half.stderr)


def test_refined_bounds_reported_on_roof():
    from transconv.families import roof_surfaces
    S1, S2, S3 = roof_surfaces(0.5)
    rep = verify_theorem1(ones(S1), ones(S2), S1, S2, S3, level=2)
    assert rep.refined_status == "ok"
    assert rep.gamma0 <= rep.refined_gamma0 + 1e-12
    assert rep.passed and rep.refined_bound <= rep.bound + 1e-9
