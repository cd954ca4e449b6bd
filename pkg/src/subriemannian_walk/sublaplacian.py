"""The horizontal sub-Laplacian, evaluated two independent ways.

``sublaplacian_sphere_avg`` averages the second derivative of ``f`` along
Hamiltonian geodesics over the unit horizontal sphere; the acceleration is
taken from the Hamiltonian vector field by the chain rule, never from the
Christoffel symbols. ``sublaplacian_local`` is the deterministic
coordinate formula built on :func:`raised_christoffel`. The two are kept
apart on purpose so that each checks the other.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .fields import PhaseField, ScalarField
from .geometry import cometric_eval, metric_eval, sample_horizontal_sphere
from .hamiltonian import _field, cometric_derivatives, integrate, raised_christoffel

DHJ_STEP = 1e-4
DHJ_FLOW_STEP = 1e-5
DEFAULT_SPHERE_SAMPLES = 100_000


class MCEstimate(NamedTuple):
    value: float
    stderr: float
    n: int


def _mean_stderr(samples):
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    mean = float(np.mean(samples))
    if n < 2:
        return MCEstimate(mean, float("nan"), n)
    return MCEstimate(mean, float(np.std(samples, ddof=1) / np.sqrt(n)), n)


def dhj_derivative(model, F: PhaseField, state, step=DHJ_STEP, flow_step=DHJ_FLOW_STEP):
    """Derivative of ``t -> F(Phi_t(state))`` at 0 by a centred difference.

    For ``F`` lifted from a chart function ``f`` this is ``v(f)``, ``v = B(q) p``.
    """
    qp, pp, _, _ = integrate(model, state.q, state.p, step, flow_step)
    qm, pm, _, _ = integrate(model, state.q, state.p, -step, flow_step)
    return float((F.value(qp, pp) - F.value(qm, pm)) / (2 * step))


def projection_P(model, F: PhaseField, q, n_samples, rng) -> MCEstimate:
    """Horizontal average ``E[F(q, G(q) v)]`` with ``v`` uniform on the unit horizontal sphere."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    q = np.asarray(q, dtype=float)
    v = sample_horizontal_sphere(model, q, rng, size=n_samples)
    G = metric_eval(model, q)
    p = v @ G.T
    qs = np.broadcast_to(q, p.shape)
    return _mean_stderr(F.value(qs, p))


def _flow_second_derivative_samples(model, f: ScalarField, q, p):
    # d^2/dt^2 f(q(t)) at 0 = qdot^T Hess qdot + grad . qddot, with
    # qddot^k = d_l beta^{kj} qdot^l p_j + beta^{kj} pdot_j  (chain rule on qdot = B p)
    qs = np.broadcast_to(q, p.shape)
    qdot, pdot = _field(model, qs, p)
    B = cometric_eval(model, q)
    dB = cometric_derivatives(model, q)
    qddot = np.einsum("kjl,nl,nj->nk", dB, qdot, p) + pdot @ B.T
    hess = f.hessian(q)
    grad = f.gradient(q)
    return np.einsum("ni,ij,nj->n", qdot, hess, qdot) + qddot @ grad


def sublaplacian_sphere_avg(model, f: ScalarField, q, n_samples=DEFAULT_SPHERE_SAMPLES, rng=None) -> MCEstimate:
    """Monte Carlo value of the sub-Laplacian by its sphere-average definition.

    Returns the mean over ``n_samples`` unit horizontal ``v`` of the second
    derivative of ``f`` along the geodesic from ``(q, G(q) v)``, with its
    standard error.
    """
    if rng is None:
        rng = np.random.default_rng()
    q = np.asarray(q, dtype=float)
    v = sample_horizontal_sphere(model, q, rng, size=n_samples)
    G = metric_eval(model, q)
    p = v @ G.T
    return _mean_stderr(_flow_second_derivative_samples(model, f, q, p))


def sublaplacian_local(model, f: ScalarField, q):
    """Local-coordinate formula, deterministic.

    ``(1/m) sum_ij (beta^{ij} d_ij f - sum_k gamma^{ijk} [G B G]_{ij} d_k f)``.
    Broadcasts over a batch of points.
    """
    q = np.asarray(q, dtype=float)
    B = cometric_eval(model, q)
    G = metric_eval(model, q)
    GBG = G @ B @ G
    gamma = raised_christoffel(model, q).gamma
    second = np.einsum("...ij,...ij->...", B, f.hessian(q))
    first = np.einsum("...ijk,...ij,...k->...", gamma, GBG, f.gradient(q))
    return (second - first) / model.rank


def gbg(model, q):
    """``G B G``; on the horizontal part this is the metric restricted to covectors."""
    B = cometric_eval(model, q)
    G = metric_eval(model, q)
    return G @ B @ G
