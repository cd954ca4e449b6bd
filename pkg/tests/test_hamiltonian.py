import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from subriemannian_walk.fields import builtin_field
from subriemannian_walk.geometry import ManifoldModel, PhaseState, cometric_eval
from subriemannian_walk.hamiltonian import (
    IntegrationError,
    cometric_derivatives,
    flow,
    flow_batch,
    hamiltonian,
    hj_vector_field,
    integrate,
    raised_christoffel,
    second_derivative_along_flow,
)
from subriemannian_walk.manifolds import EuclideanModel, HeisenbergModel


def _symbolic_heisenberg_field():
    # oracle: differentiate the Hamiltonian symbolically
    x, y, z, p1, p2, p3 = sp.symbols("x y z p1 p2 p3")
    H = sp.Rational(1, 2) * ((p1 - y * p3 / 2) ** 2 + (p2 + x * p3 / 2) ** 2)
    q, p = (x, y, z), (p1, p2, p3)
    rhs = [sp.diff(H, pi) for pi in p] + [-sp.diff(H, qi) for qi in q]
    return sp.lambdify((x, y, z, p1, p2, p3), rhs, "numpy")


SYMBOLIC_FIELD = _symbolic_heisenberg_field()


def test_hamiltonian_examples():
    h = HeisenbergModel()
    assert hamiltonian(h, PhaseState([0, 0, 0], [1, 0, 0])) == 0.5
    assert hamiltonian(h, PhaseState([0, 0, 0], [0, 0, 1])) == 0.0
    assert hamiltonian(h, PhaseState([1, 2, 3], [0, 0, 0])) == 0.0


def test_vector_field_examples():
    dq, dp = hj_vector_field(EuclideanModel(3), PhaseState([1, 2, 3], [0.5, -1, 2]))
    assert np.array_equal(dq, [0.5, -1, 2]) and np.array_equal(dp, np.zeros(3))
    h = HeisenbergModel()
    dq, dp = hj_vector_field(h, PhaseState([0, 0, 0], [0, 0, 1]))
    assert np.allclose(dq, 0) and np.allclose(dp, 0)
    theta = 1.7
    dq, dp = hj_vector_field(h, PhaseState([0, 0, 0], [1, 0, theta]))
    assert np.allclose(dq, [1, 0, 0]) and np.allclose(dp, [0, theta / 2, 0])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(0.2, 5))
def test_vector_field_matches_symbolic(vals, lam):
    q, p = np.array(vals[:3]), np.array(vals[3:])
    dq, dp = hj_vector_field(HeisenbergModel(lam), PhaseState(q, p))
    expected = np.array(SYMBOLIC_FIELD(*q, *p), dtype=float)
    assert np.allclose(np.concatenate([dq, dp]), expected, atol=1e-12)


def test_flow_examples():
    res = flow(EuclideanModel(3), PhaseState([0, 0, 0], [0.3, -1, 2]), 1.0)
    assert np.allclose(res.final.q, [0.3, -1, 2]) and np.allclose(res.final.p, [0.3, -1, 2])
    h = HeisenbergModel()
    res = flow(h, PhaseState([0, 0, 0], [1, 0, 0]), 1.0, 1e-3)
    assert np.allclose(res.final.q, [1, 0, 0], atol=1e-14) and np.allclose(res.final.p, [1, 0, 0])
    res = flow(h, PhaseState([0, 0, 0], [0, 0, 1]), 1.0)
    assert np.array_equal(res.final.q, np.zeros(3)) and np.array_equal(res.final.p, [0, 0, 1])


def test_flow_trace_and_validation():
    res = flow(HeisenbergModel(), PhaseState([0, 0, 0], [1, 0.5, 2]), 0.5, 0.1, trace=True)
    assert res.n_steps == 5 and len(res.trace) == 6
    assert res.trace[-1][0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        flow(HeisenbergModel(), PhaseState([0, 0, 0], [1, 0, 0]), -1.0)
    with pytest.raises(ValueError):
        flow(HeisenbergModel(), PhaseState([0, 0, 0], [1, 0, 0]), 1.0, 0.0)


def _escaping_model():
    # H = exp(x^2) p^2 / 2: with p = c exp(-x^2/2), dx/dt = c exp(x^2/2) escapes in finite time
    B = lambda q: np.exp(q[..., 0] ** 2)[..., None, None]
    dB = lambda q: (2 * q[..., 0] * np.exp(q[..., 0] ** 2))[..., None, None, None]
    return ManifoldModel(1, 1, B, lambda q: np.exp(-q[..., 0] ** 2)[..., None, None], dB)


def test_blow_up_raises_with_time():
    with pytest.raises(IntegrationError) as info:
        flow(_escaping_model(), PhaseState([1.0], [1.0]), 5.0, 1e-3)
    assert 0 < info.value.time <= 5.0


def test_energy_conservation_heisenberg(rng):
    h = HeisenbergModel(2.0)
    for _ in range(5):
        s = PhaseState(rng.uniform(-2, 2, 3), rng.uniform(-1, 1, 3))
        assert flow(h, s, 1.0, 1e-3).energy_drift <= 1e-9


def test_cometric_derivative_examples(rng):
    assert np.array_equal(cometric_derivatives(EuclideanModel(3), [1, 2, 3]), np.zeros((3, 3, 3)))
    h = HeisenbergModel()
    for q in rng.uniform(-3, 3, (5, 3)):
        dB = cometric_derivatives(h, q)
        assert dB[0, 2, 1] == -0.5 and dB[1, 2, 0] == 0.5
        assert dB[2, 2, 0] == pytest.approx(q[0] / 2)


def test_fd_derivatives_match_analytic(rng):
    h = HeisenbergModel(3.0)
    fd_only = ManifoldModel(3, 2, h.cometric, h.metric)
    q = rng.uniform(-3, 3, (50, 3))
    assert np.max(np.abs(cometric_derivatives(fd_only, q) - cometric_derivatives(h, q))) <= 1e-8


def test_christoffel_examples(rng):
    q = rng.uniform(-3, 3, (20, 3))
    assert np.array_equal(raised_christoffel(EuclideanModel(3), q).gamma, np.zeros((20, 3, 3, 3)))
    g = raised_christoffel(HeisenbergModel(), q).gamma
    assert np.max(np.abs(g[:, 0, 0])) <= 1e-12 and np.max(np.abs(g[:, 1, 1])) <= 1e-12
    assert np.array_equal(g, np.swapaxes(g, 1, 2))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_acceleration_identity_along_rk4(q, p):
    h = HeisenbergModel()
    q, p = np.array(q), np.array(p)
    d = 1e-3
    qp = integrate(h, q, p, d, 1e-4)[0]
    qm = integrate(h, q, p, -d, 1e-4)[0]
    qdd = (qp - 2 * q + qm) / d**2
    assert np.allclose(qdd, raised_christoffel(h, q).contract(p), atol=1e-5)


def test_flow_stays_horizontal(rng):
    h = HeisenbergModel()
    res = flow(h, PhaseState(rng.uniform(-1, 1, 3), [0.3, -0.8, 1.5]), 1.0, 1e-2, trace=True)
    for _, s in res.trace:
        dq, _ = hj_vector_field(h, s)
        assert np.allclose(dq, cometric_eval(h, s.q) @ s.p, atol=1e-14)


def test_semigroup_property(rng):
    h = HeisenbergModel()
    for _ in range(5):
        s = PhaseState(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))
        t, u = rng.uniform(0, 1, 2)
        whole = flow(h, s, t + u, 1e-3).final
        split = flow(h, flow(h, s, t, 1e-3).final, u, 1e-3).final
        assert np.allclose(whole.q, split.q, atol=2e-10) and np.allclose(whole.p, split.p, atol=2e-10)


def test_second_derivative_examples():
    e = EuclideanModel(3)
    assert second_derivative_along_flow(e, PhaseState([1, 2, 3], [0.2, 0.4, 1]), builtin_field("x", 3)) == 0
    assert second_derivative_along_flow(e, PhaseState([1, 2, 3], [1, 0, 0]), builtin_field("x_sq", 3)) == 2
    h = HeisenbergModel()
    assert second_derivative_along_flow(h, PhaseState([0, 0, 0], [1, 0, 0]), builtin_field("z", 3)) == 0


@pytest.mark.parametrize("name", ["x_sq", "z", "z_sq", "norm_sq"])
def test_second_derivative_matches_second_difference(name, rng):
    h = HeisenbergModel(0.7)
    f = builtin_field(name, 3)
    for _ in range(4):
        q, p = rng.uniform(-1.5, 1.5, 3), rng.uniform(-1, 1, 3)
        d = 1e-3
        fp = f.value(integrate(h, q, p, d, 1e-4)[0])
        fm = f.value(integrate(h, q, p, -d, 1e-4)[0])
        fd = (fp - 2 * f.value(q) + fm) / d**2
        assert abs(second_derivative_along_flow(h, PhaseState(q, p), f) - fd) <= 1e-5


def test_flow_batch_independent_of_batch(rng):
    h = HeisenbergModel()
    q = rng.uniform(-1, 1, (6, 3))
    p = rng.uniform(-1, 1, (6, 3))
    T = rng.uniform(0, 0.2, 6)
    qa, pa = flow_batch(h, q, p, T)
    for i in range(6):
        qi, pi = flow_batch(h, q[i:i + 1], p[i:i + 1], T[i:i + 1])
        assert np.array_equal(qi[0], qa[i]) and np.array_equal(pi[0], pa[i])
    qe, pe = h.exact_flow(q, p, T)
    assert np.allclose(qa, qe, atol=1e-9) and np.allclose(pa, pe, atol=1e-9)


def test_flow_batch_marks_blow_up_as_nan():
    with np.errstate(all="ignore"):
        q, p = flow_batch(_escaping_model(), [[1.0], [0.1]], [[1.0], [1.0]], [5.0, 0.1], max_step=1e-3)
    assert np.isnan(q[0, 0]) and np.isfinite(q[1, 0])
