import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subriemannian_walk.geometry import (
    DegenerateRankError,
    ManifoldModel,
    ModelEvaluationError,
    PhaseState,
    beta_apply,
    cometric_eval,
    g_apply,
    horizontal_factor,
    horizontal_inner,
    metric_eval,
    sample_horizontal_sphere,
    uniform_unit_sphere,
    validate_compatibility,
)
from subriemannian_walk.manifolds import EuclideanModel, HeisenbergModel, left_invariant_frame

coords = st.floats(-5, 5, allow_nan=False)
points = st.tuples(coords, coords, coords).map(np.array)
lams = st.floats(0.1, 10.0)


def X(q):
    return np.array([1.0, 0.0, -q[1] / 2])


def Y(q):
    return np.array([0.0, 1.0, q[0] / 2])


def test_cometric_examples():
    h = HeisenbergModel()
    assert np.array_equal(cometric_eval(h, [0, 0, 0]), np.diag([1.0, 1.0, 0.0]))
    expected = np.array([[1, 0, -1], [0, 1, 0.5], [-1, 0.5, 1.25]])
    assert np.allclose(cometric_eval(h, [1, 2, 5]), expected, atol=0, rtol=1e-15)
    assert np.array_equal(cometric_eval(EuclideanModel(3), [4, -1, 2]), np.eye(3))


def test_beta_apply_examples():
    h = HeisenbergModel()
    assert np.allclose(beta_apply(h, [0, 0, 0], [1, 0, 0]), [1, 0, 0])
    assert np.allclose(beta_apply(h, [0, 1, 0], [0, 0, 1]), [-0.5, 0, 0.25])
    assert np.array_equal(beta_apply(h, [0.3, 2, 1], [0, 0, 0]), np.zeros(3))
    with pytest.raises(ValueError):
        beta_apply(h, [0, 0, 0], [1, 0])


@settings(max_examples=50, deadline=None)
@given(points, lams)
def test_metric_lowers_left_invariant_frame(q, lam):
    # multiplying the printed metric by X(q) and Y(q) by hand
    h = HeisenbergModel(lam)
    assert np.allclose(g_apply(h, q, X(q)), [1, 0, 0], atol=1e-12)
    assert np.allclose(g_apply(h, q, Y(q)), [0, 1, 0], atol=1e-12)


def test_euclidean_g_apply_identity():
    v = np.array([0.3, -2.0, 7.0])
    assert np.array_equal(g_apply(EuclideanModel(3), [1, 1, 1], v), v)


def test_horizontal_inner_examples():
    h = HeisenbergModel(3.0)
    q = np.array([0.7, -1.1, 2.0])
    assert horizontal_inner(h, q, X(q), Y(q), check=True) == pytest.approx(0, abs=1e-14)
    assert horizontal_inner(h, q, X(q), X(q), check=True) == pytest.approx(1, abs=1e-14)
    v = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    assert horizontal_inner(EuclideanModel(3), [0, 0, 0], v, v) == pytest.approx(1)
    with pytest.raises(ValueError, match="not horizontal"):
        horizontal_inner(h, q, np.array([0, 0, 1.0]), X(q), check=True)


def test_horizontal_factor_examples():
    h = HeisenbergModel()
    C = horizontal_factor(h, [0, 0, 0]).C
    assert C.shape == (3, 2)
    assert np.allclose(C @ C.T, np.diag([1.0, 1.0, 0.0]), atol=1e-15)
    C = horizontal_factor(h, [1, 2, 5]).C
    assert np.allclose(C @ C.T, cometric_eval(h, [1, 2, 5]), atol=1e-14)
    E = horizontal_factor(EuclideanModel(3), [0, 0, 0]).C
    assert np.allclose(E @ E.T, np.eye(3)) and np.allclose(E.T @ E, np.eye(3))


def test_degenerate_rank_reports_eigenvalues():
    wrong = ManifoldModel(3, 3, HeisenbergModel().cometric, HeisenbergModel().metric)
    with pytest.raises(DegenerateRankError) as info:
        horizontal_factor(wrong, [0.5, 0.5, 0])
    assert info.value.eigenvalues is not None and len(info.value.eigenvalues) == 3


def test_non_finite_model_output():
    bad = ManifoldModel(2, 2, lambda q: np.full(q.shape[:-1] + (2, 2), np.nan), lambda q: np.eye(2))
    with pytest.raises(ModelEvaluationError):
        cometric_eval(bad, [0, 0])


@settings(max_examples=40, deadline=None)
@given(points, lams)
def test_structure_invariants(q, lam):
    h = HeisenbergModel(lam)
    B, G = cometric_eval(h, q), metric_eval(h, q)
    assert np.array_equal(B, B.T) and np.array_equal(G, G.T)
    assert np.all(np.linalg.eigvalsh(G) > 0)
    ev = np.linalg.eigvalsh(B)
    assert np.sum(ev > 1e-10 * ev[-1]) == 2
    rep = validate_compatibility(h, q)
    assert rep.passed and rep.residual <= 1e-9


@settings(max_examples=30, deadline=None)
@given(points, lams, st.integers(0, 2**32 - 1))
def test_samples_are_unit_horizontal(q, lam, seed):
    h = HeisenbergModel(lam)
    v = sample_horizontal_sphere(h, q, np.random.default_rng(seed), size=50)
    G = metric_eval(h, q)
    assert np.allclose(np.einsum("ni,ij,nj->n", v, G, v), 1.0, atol=1e-12, rtol=0)
    # horizontal: B G v = v
    assert np.allclose(v @ (cometric_eval(h, q) @ G).T, v, atol=1e-11)


def test_eigen_factor_and_frame_sample_same_law():
    # the model's left-invariant frame differs from the eigen-factor by a rotation
    h = HeisenbergModel()
    q = np.array([1.3, -0.4, 0.0])
    C = horizontal_factor(h, q).C
    F = left_invariant_frame(q)
    R = np.linalg.lstsq(F, C, rcond=None)[0]
    assert np.allclose(R.T @ R, np.eye(2), atol=1e-12)
    assert np.allclose(F @ R, C, atol=1e-12)


def test_batch_sampling_one_per_point(rng):
    h = HeisenbergModel()
    q = rng.uniform(-2, 2, (200, 3))
    v = sample_horizontal_sphere(h, q, rng)
    G = metric_eval(h, q)
    assert v.shape == (200, 3)
    assert np.allclose(np.einsum("ni,nij,nj->n", v, G, v), 1.0, atol=1e-12)


def test_rank_one_sphere_is_two_points(rng):
    B = lambda q: np.broadcast_to(np.diag([4.0, 0.0]), q.shape[:-1] + (2, 2))
    G = lambda q: np.broadcast_to(np.diag([0.25, 1.0]), q.shape[:-1] + (2, 2))
    model = ManifoldModel(2, 1, B, G)
    v = sample_horizontal_sphere(model, [0.0, 0.0], rng, size=20_000)
    assert set(np.round(v[:, 0], 12)) == {-2.0, 2.0}
    assert np.all(v[:, 1] == 0)
    frac = np.mean(v[:, 0] > 0)
    assert abs(frac - 0.5) <= 4 * math.sqrt(0.25 / v.shape[0])


def test_uniform_sphere_norm(rng):
    u = uniform_unit_sphere(rng, 4, 1000)
    assert np.allclose(np.linalg.norm(u, axis=1), 1.0)


def test_sphere_second_moments(rng):
    h = HeisenbergModel(2.0)
    q = np.array([0.8, 1.5, -3.0])
    n = 1_000_000
    v = sample_horizontal_sphere(h, q, rng, size=n)
    B = cometric_eval(h, q)
    for i in range(3):
        for j in range(i, 3):
            s = v[:, i] * v[:, j]
            assert abs(s.mean() - B[i, j] / 2) <= 3 * s.std(ddof=1) / math.sqrt(n) + 1e-12


def test_rotation_invariant_inner_product_identity(rng):
    # mean of (X, xi)(Y, xi) over the unit sphere is (X, Y)/m
    h = HeisenbergModel(1.5)
    q = np.array([-0.6, 0.9, 1.0])
    C = horizontal_factor(h, q).C
    G = metric_eval(h, q)
    n = 400_000
    xi = sample_horizontal_sphere(h, q, rng, size=n)
    for _ in range(3):
        Xv, Yv = C @ rng.normal(size=2), C @ rng.normal(size=2)
        s = (xi @ G @ Xv) * (xi @ G @ Yv)
        assert abs(s.mean() - Xv @ G @ Yv / 2) <= 4 * s.std(ddof=1) / math.sqrt(n)


def test_compatibility_fails_with_identity_metric():
    h = HeisenbergModel()
    broken = ManifoldModel(3, 2, h.cometric, lambda q: np.broadcast_to(np.eye(3), q.shape[:-1] + (3, 3)))
    assert validate_compatibility(broken, [0.0, 0.0, 0.0]).passed  # y = x = 0: B G = B there
    rep = validate_compatibility(broken, [0.0, 1.0, 0.0])
    assert not rep.passed and rep.residual > 1e-3
    assert validate_compatibility(EuclideanModel(3), [1, 2, 3]).passed


def test_phase_state_validation():
    with pytest.raises(ValueError):
        PhaseState([0, 0, 0], [1, 0])
    with pytest.raises(ValueError):
        PhaseState([0, np.inf, 0], [1, 0, 0])
    s = PhaseState([0, 1, 2], [1, 0, 0])
    assert s.dim == 3 and s.q.dtype == float
