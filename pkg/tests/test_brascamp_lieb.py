import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transconv import brascamp_lieb as bl
from transconv.brascamp_lieb import (GridDensity, PiecewiseLinearMap, PolytopeIndicator,
                                     bl_integral, box_complex, dual_parallelepipeds,
                                     gamma0_bl, linear_gamma, rho_weights, verify_prop3,
                                     verify_theorem2)
from transconv.errors import NonSpanning, NotConverged, RankDeficient
from transconv.families import bent_maps, hinge_map, random_grid_density, random_linear_maps
from transconv.linalg import DimensionSignature, gramian, null_frame, random_rotation

SIG3 = DimensionSignature(3, 2, 2, 2)
E = np.eye(3)
PROJ = [E[[1, 2]], E[[0, 2]], E[[0, 1]]]


def linear_maps(As, half_width=3.0):
    cells = box_complex(-half_width * np.ones(As[0].shape[1]), half_width * np.ones(As[0].shape[1]))
    return [PiecewiseLinearMap.linear(cells, A) for A in As]


def test_rho_isometric_case():
    phi3 = linear_maps([PROJ[2]] * 3)[2]
    r1, r2 = rho_weights(phi3, SIG3)
    np.testing.assert_allclose(r1, 1.0)
    np.testing.assert_allclose(r2, 1.0)


def test_rho_hand_example():
    A3 = np.array([[1.0, 0, 0], [0, 2.0, 0]])
    r1, r2 = rho_weights(linear_maps([A3] * 3)[2], SIG3)
    assert gramian(A3) == pytest.approx(2.0)
    # |A3|^{-1/2} * sigma_2 = 2^{-1/2} * 2
    np.testing.assert_allclose(r1, np.sqrt(2), rtol=1e-14)
    np.testing.assert_allclose(r2, np.sqrt(2), rtol=1e-14)


@pytest.mark.parametrize("sig", [s for n in (3, 4, 5, 6) for s in DimensionSignature.admissible(n)])
def test_rho_exponents_sum_exactly(sig, rng):
    assert (sig.n - sig.n1) + (sig.n - sig.n2) == sig.n3
    A3 = rng.standard_normal((sig.n3, sig.n))
    r1, r2 = rho_weights(linear_maps([A3] * 3)[2], sig)
    s = np.sort(np.linalg.svd(A3, compute_uv=False))
    expect = np.prod(s[sig.n - sig.n2:]) * np.prod(s[sig.n - sig.n1:]) / gramian(A3)
    np.testing.assert_allclose(r1 * r2, expect, rtol=1e-12)


def test_gamma0_orthogonal_kernels_is_one():
    maps = linear_maps(PROJ)
    g = gamma0_bl(*maps)
    assert g.value == pytest.approx(1.0, abs=1e-12)
    assert g.certified


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=15)
def test_gamma0_single_cell_dominates_unrotated(seed):
    rng = np.random.default_rng(seed)
    As = random_linear_maps(rng, SIG3)
    g = gamma0_bl(*linear_maps(As))
    unrotated = linear_gamma(*As)
    assert g.value >= unrotated - 1e-12
    assert g.certified
    # the sup over the free rotation equals the Hadamard product bound
    N = [null_frame(A).columns for A in As]
    c = [np.linalg.norm(np.cross(N[2].ravel(), n.ravel())) for n in N[:2]]
    assert g.value == pytest.approx(c[0] * c[1], rel=1e-9)


def test_gamma0_disjoint_images_only_diagonal_pairs():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0],
                    [5, 5, 5], [6, 5, 5], [5, 6, 5], [5, 5, 6.0]])
    simp = np.array([[0, 1, 2, 3], [4, 5, 6, 7]])
    maps = [PiecewiseLinearMap.from_vertex_values(pts, simp, pts @ A.T) for A in PROJ]
    pairs = bl.fiber_pairs(maps[2])
    assert pairs.tolist() == [[0, 0], [1, 1]]


@pytest.mark.parametrize("sig", [SIG3, DimensionSignature(4, 3, 3, 2), DimensionSignature(4, 2, 3, 3)])
def test_gamma0_invariant_under_common_rotation(sig, rng):
    maps = bent_maps(rng, sig, 1, 0.15)
    Q = random_rotation(rng, sig.n)
    g = gamma0_bl(*maps).value
    gq = gamma0_bl(*(m.precomposed(Q) for m in maps)).value
    assert gq == pytest.approx(g, abs=1e-8)


def test_gamma0_three_dimensional_search_is_certified(rng):
    sig = DimensionSignature(4, 2, 3, 3)
    g = gamma0_bl(*bent_maps(rng, sig, 1, 0.1))
    assert g.method == "ascent"
    assert g.certified
    assert np.all(g.per_pair <= g.upper * (1 + 1e-12))


def test_non_spanning_kernels():
    maps = linear_maps([PROJ[0], PROJ[0], PROJ[2]])
    with pytest.raises(NonSpanning):
        gamma0_bl(*maps)


def test_bl_integral_coordinate_projections():
    maps = linear_maps(PROJ, half_width=2.0)
    sq = PolytopeIndicator.box([0, 0], [1, 1])
    res = bl_integral(sq, sq, sq, *maps)
    assert res.exact and res.value == pytest.approx(1.0, abs=1e-12)
    zero = GridDensity([0, 0], [1, 1], np.zeros((1, 1)))
    grid = GridDensity([0, 0], [0.5, 0.5], np.ones((2, 2)))
    assert bl_integral(zero, grid, grid, *maps, level=1).value == 0.0
    assert bl_integral(grid, grid, grid, *maps, level=2).value == pytest.approx(1.0, abs=1e-12)


def test_parallelepiped_indicators_integrate_to_gamma(rng):
    As = random_linear_maps(rng, SIG3)
    (f1, f2, f3), gamma = dual_parallelepipeds(*As)
    maps = linear_maps(As, half_width=20.0)
    w = np.prod([np.sqrt(gramian(A)) for A in As])
    res = bl_integral(f1, f2, f3, *maps)
    assert res.value / w == pytest.approx(gamma, rel=1e-10)


def test_linear_bl_coordinate_unit_cubes():
    rep = verify_prop3(*PROJ)
    assert rep.lhs == pytest.approx(1.0) and rep.rhs == pytest.approx(1.0)
    assert rep.equality_gap < 1e-12 and rep.passed


@pytest.mark.parametrize("codims", [(1, 1, 1), (2, 1, 1), (1, 1, 2)])
def test_linear_bl_equality_random(codims, rng):
    sig = DimensionSignature.from_codims(*codims)
    for _ in range(5):
        rep = verify_prop3(*random_linear_maps(rng, sig))
        assert rep.equality_gap <= 1e-8
        # norm of the first indicator is (gamma |A1|)^{1/2}
        assert rep.passed


def test_linear_bl_indicator_norms_match_formula(rng):
    As = random_linear_maps(rng, SIG3)
    (f1, f2, f3), gamma = dual_parallelepipeds(*As)
    for f, A in zip((f1, f2, f3), As):
        assert f.l2_norm() == pytest.approx(np.sqrt(gamma * gramian(A)), rel=1e-10)


def test_linear_bl_random_densities_strict(rng):
    As = random_linear_maps(rng, SIG3)
    dens = [random_grid_density(rng, 2, [-1, -1], [1, 1], 4) for _ in range(3)]
    rep = verify_prop3(*As, *dens, level=3, quad_tol=5e-2)
    assert rep.passed and rep.lhs < rep.rhs


def test_linear_bl_rank_deficient():
    with pytest.raises(RankDeficient):
        verify_prop3(np.array([[1.0, 0, 0], [2.0, 0, 0]]), PROJ[1], PROJ[2])


def test_pl_bound_hinge_indicators():
    maps = hinge_map(SIG3, slope=0.5)
    boxes = [PolytopeIndicator.box([-0.8, -0.8], [0.8, 0.8]) for _ in range(3)]
    rep = verify_theorem2(*maps, *boxes)
    assert rep.exact and rep.passed
    assert rep.rho >= 1.0 and 0 < rep.gamma0 <= 1.0


def test_pl_bound_zero_density_passes():
    maps = hinge_map(SIG3)
    zero = GridDensity([0, 0], [1, 1], np.zeros((1, 1)))
    box = PolytopeIndicator.box([-1, -1], [1, 1])
    rep = verify_theorem2(*maps, zero, GridDensity([-1, -1], [1, 1], np.ones((2, 2))),
                          GridDensity([-1, -1], [1, 1], np.ones((2, 2))), level=1)
    assert rep.lhs == 0.0 and rep.passed
    del box


def test_pl_bound_linear_reports_both_constants(rng):
    As = random_linear_maps(rng, SIG3)
    maps = linear_maps(As)
    dens = [random_grid_density(rng, 2, [-1, -1], [1, 1], 3) for _ in range(3)]
    rep = verify_theorem2(*maps, *dens, level=3, quad_tol=5e-2)
    assert rep.linear_constant == pytest.approx(linear_gamma(*As) ** -0.5)
    assert rep.constant == pytest.approx(np.sqrt(rep.rho / rep.gamma0))
    assert rep.passed


def test_sup_transversality_undercuts_sharp_linear_constant():
    # Kernels e1, (1,1,0)/sqrt2, e3: gamma = 1/sqrt2, but rotating the first
    # kernel about e3 reaches |det| = 1, so sqrt(rho / gamma0) = 1 < gamma^{-1/2}.
    # The dual parallelepiped indicators attain gamma^{-1/2} and therefore
    # exceed the sqrt(rho / gamma0) bound.
    A1 = np.array([[0.0, 1, 0], [0, 0, 1]])
    A2 = np.array([[1 / np.sqrt(2), -1 / np.sqrt(2), 0], [0, 0, 1]])
    A3 = np.array([[1.0, 0, 0], [0, 1, 0]])
    maps = linear_maps([A1, A2, A3])
    (f1, f2, f3), gamma = dual_parallelepipeds(A1, A2, A3)
    rep = verify_theorem2(*maps, f1, f2, f3)
    assert gamma == pytest.approx(2 ** -0.5)
    assert rep.gamma0 == pytest.approx(1.0) and rep.gamma0_certified
    assert rep.constant == pytest.approx(1.0)
    assert rep.linear_constant == pytest.approx(2 ** 0.25)
    assert rep.lhs == pytest.approx(2 ** 0.25 * np.prod(rep.norms), rel=1e-10)
    assert not rep.passed


def test_map_json_round_trip_and_continuity(rng):
    maps = bent_maps(rng, SIG3, 2, 0.2)
    doc = maps[0].to_dict()
    assert set(doc) == {"n", "target_dim", "cells"}
    again = PiecewiseLinearMap.from_dict(doc)
    np.testing.assert_allclose(again.A, maps[0].A)
    broken = dict(doc)
    broken["cells"] = [dict(c) for c in doc["cells"]]
    broken["cells"][0]["b"] = [v + 0.5 for v in doc["cells"][0]["b"]]
    with pytest.raises(ValueError, match="discontinuous"):
        PiecewiseLinearMap.from_dict(broken)


def test_map_evaluation_matches_vertex_values(rng):
    maps = bent_maps(rng, SIG3, 2, 0.2)
    x = rng.uniform(-0.9, 0.9, (50, 3))
    y = maps[0](x)
    cell = bl.locate_cells(maps[0].cells, x)
    np.testing.assert_allclose(y, np.einsum("pmn,pn->pm", maps[0].A[cell], x) + maps[0].b[cell])


def test_grid_density_round_trip_and_norm(rng):
    g = random_grid_density(rng, 2, [-1, 0], [1, 2], 3)
    h = GridDensity.from_dict(g.to_dict())
    np.testing.assert_array_equal(h.values, g.values)
    assert g.l2_norm() == pytest.approx(np.sqrt((g.values ** 2).sum() * np.prod(g.spacing)))
    assert g(np.array([[5.0, 5.0]]))[0] == 0.0


def test_quadrature_not_converged(rng):
    maps = hinge_map(SIG3)
    dens = [random_grid_density(rng, 2, [-1, -1], [1, 1], 7) for _ in range(3)]
    with pytest.raises(NotConverged):
        bl_integral(*dens, *maps, level=0, tol=1e-6)
