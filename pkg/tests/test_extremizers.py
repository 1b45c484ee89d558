import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transconv.convolution import _conv_sq_norm
from transconv.errors import Stagnated
from transconv.extremizers import (SWEEP_COLUMNS, constant_sweep, discretize, linear_family,
                                   power_iterate, sweep_csv)
from transconv.families import (coordinate_planes, dual_basis_patches, perturbed,
                                random_linear_frames)
from transconv.linalg import DimensionSignature
from transconv.surfaces import SurfaceDensity


def test_coordinate_planes_ratio_one():
    T = discretize(*coordinate_planes(1), level=0)
    assert T.ratio(np.ones(T.shape[0]), np.ones(T.shape[1])) == pytest.approx(1.0, abs=1e-12)
    # a single node per facet is too coarse to see the fiber length profile
    assert power_iterate(T).achieved_ratio > 1.05
    T = discretize(*coordinate_planes(1), level=2)
    cert = power_iterate(T, tol=1e-12)
    assert cert.achieved_ratio == pytest.approx(1.0, abs=1e-8)
    assert cert.certified
    # the maximizer is constant
    np.testing.assert_allclose(cert.f1 / cert.f1.mean(), 1.0, atol=1e-3)


def test_empty_interaction_stagnates():
    S1, S2, S3 = coordinate_planes(1)
    T = discretize(S1, S2, S3.translated(np.array([0.0, 0.0, 50.0])), level=1)
    assert T.nnz == 0
    with pytest.raises(Stagnated) as info:
        power_iterate(T)
    cert = info.value.certificate
    assert cert.achieved_ratio == 0.0 and cert.iterations == 0 and not cert.converged


def test_tilted_plane_reaches_quarter_power_of_three():
    g = 1 / np.sqrt(3)
    T = discretize(*linear_family(g, cells=2), level=3)
    assert T.gamma0 == pytest.approx(g, rel=1e-12)
    cert = power_iterate(T, seed=3)
    assert cert.achieved_ratio == pytest.approx(3 ** 0.25, rel=1e-2)
    assert cert.achieved_ratio <= cert.bound_three_halves
    assert np.all(np.diff(cert.history) >= -1e-12 * cert.history[-1])


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=10)
def test_power_iteration_monotone_on_random_patch(seed):
    rng = np.random.default_rng(seed)
    sig = DimensionSignature.from_codims(1, 1, 1)
    (S1, S2, S3), g = dual_basis_patches(*random_linear_frames(rng, sig, 0.3), cells=2)
    surf = [perturbed(S, rng, 0.03) for S in (S1, S2, S3)]
    T = discretize(*surf, level=2)
    cert = power_iterate(T, seed=1)
    h = np.array(cert.history)
    assert np.all(np.diff(h) >= -1e-12 * h[-1])
    assert cert.converged


def test_tensor_reproduces_quadrature(rng):
    sig = DimensionSignature.from_codims(1, 1, 1)
    (S1, S2, S3), _ = dual_basis_patches(*random_linear_frames(rng, sig, 0.2), cells=2)
    T = discretize(S1, S2, S3, level=2)
    for _ in range(100):
        f1 = SurfaceDensity(rng.uniform(0, 1, len(S1)))
        f2 = SurfaceDensity(rng.uniform(0, 1, len(S2)))
        ref = _conv_sq_norm(f1, f2, S1, S2, S3, 2, 1)
        assert T.quadratic_form(f1, f2) == pytest.approx(ref, rel=1e-10, abs=1e-14)


def test_ratio_stable_under_level():
    g = 0.4
    r = [power_iterate(discretize(*linear_family(g), level=L)).achieved_ratio for L in (2, 3)]
    assert abs(r[1] - r[0]) / r[1] < 1e-2
    assert r[1] == pytest.approx(g ** -0.5, rel=1e-6)


def test_sweep_rows_and_csv():
    rows = constant_sweep("linear", [0.5, 1.0], level=2)
    assert [r["status"] for r in rows] == ["ok", "ok"]
    for r in rows:
        assert set(r) == set(SWEEP_COLUMNS)
        assert r["ratio"] == pytest.approx(r["gamma0"] ** -0.5, rel=1e-6)
    text = sweep_csv(rows)
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(SWEEP_COLUMNS) and len(lines) == 3


def test_sweep_flags_degenerate_value():
    rows = constant_sweep("roof", [1e-13, 0.5], level=2)
    assert rows[0]["status"] == "NonTransversal"
    assert rows[1]["status"] == "ok"
    r = rows[1]
    assert 0 < r["ratio"] <= r["bound_three_halves"] and r["converged"]
