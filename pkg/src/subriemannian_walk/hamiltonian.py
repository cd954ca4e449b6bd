"""Sub-Riemannian Hamiltonian ``H = 1/2 p^T B(q) p`` and its canonical flow.

Index convention for cometric derivatives: ``dB[..., i, j, l] = d beta^{ij} / d x^l``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ManifoldModel, ModelEvaluationError, PhaseState, cometric_eval

FD_REL_STEP = 1e-5
DEFAULT_MAX_STEP = 1e-2


class IntegrationError(RuntimeError):
    """The flow left the finite domain (blow-up) during integration."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


@dataclass
class FlowResult:
    final: PhaseState
    energy_drift: float
    trace: Optional[list] = None  # [(t, PhaseState), ...]
    n_steps: int = 0


@dataclass(frozen=True)
class ChristoffelTensor:
    """Raised Christoffel symbols ``gamma[i, j, k]``, symmetric in ``(i, j)``."""

    gamma: np.ndarray

    def contract(self, p):
        """``-sum_ij gamma^{ijk} p_i p_j``, the geodesic acceleration in momentum form."""
        return -np.einsum("...ijk,...i,...j->...k", self.gamma, p, p)


def _energy(B, p):
    return 0.5 * np.einsum("...i,...ij,...j->...", p, B, p)


def hamiltonian(model: ManifoldModel, state: PhaseState) -> float:
    """Kinetic energy ``1/2 p^T B(q) p``."""
    B = cometric_eval(model, state.q)
    return _energy(B, state.p)


def cometric_derivatives(model: ManifoldModel, q) -> np.ndarray:
    """``d beta^{ij}/d x^l`` at ``q``, shape ``(..., d, d, d)``.

    Uses the model's analytic derivatives when present; otherwise central
    differences with step ``1e-5 * (1 + |q|)``, symmetrized in ``(i, j)``.
    """
    q = np.asarray(q, dtype=float)
    dB = model.cometric_derivatives(q)
    if dB is not None:
        dB = np.asarray(dB, dtype=float)
        if not np.all(np.isfinite(dB)):
            raise ModelEvaluationError("cometric derivative evaluator returned non-finite entries")
        return dB
    return _fd_cometric_derivatives(model, q)


def _fd_cometric_derivatives(model, q):
    d = model.dim
    h = FD_REL_STEP * (1.0 + np.linalg.norm(q, axis=-1))
    cols = []
    for l in range(d):
        shift = np.zeros(d)
        shift[l] = 1.0
        step = h[..., None] * shift
        Bp = cometric_eval(model, q + step)
        Bm = cometric_eval(model, q - step)
        cols.append((Bp - Bm) / (2.0 * h[..., None, None]))
    dB = np.stack(cols, axis=-1)
    return 0.5 * (dB + np.swapaxes(dB, -3, -2))


def _field(model, q, p):
    B = cometric_eval(model, q)
    dB = cometric_derivatives(model, q)
    dq = np.einsum("...ij,...j->...i", B, p)
    dp = -0.5 * np.einsum("...kji,...k,...j->...i", dB, p, p)
    return dq, dp


def hj_vector_field(model, state: PhaseState):
    """Canonical equations: ``dq/dt = B p``, ``dp_i/dt = -1/2 p_k p_j d_i beta^{kj}``."""
    return _field(model, state.q, state.p)


def _rk4_step(model, q, p, h):
    # h broadcasts over leading axes
    h1 = h[..., None] if np.ndim(h) else h
    k1q, k1p = _field(model, q, p)
    k2q, k2p = _field(model, q + 0.5 * h1 * k1q, p + 0.5 * h1 * k1p)
    k3q, k3p = _field(model, q + 0.5 * h1 * k2q, p + 0.5 * h1 * k2p)
    k4q, k4p = _field(model, q + h1 * k3q, p + h1 * k3p)
    q = q + (h1 / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    p = p + (h1 / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    return q, p


def n_steps_for(duration, h):
    return max(1, int(math.ceil(abs(duration) / h - 1e-12)))


def integrate(model, q, p, T, h, trace=False):
    """Fixed-step RK4 from ``(q, p)`` for signed time ``T``.

    Returns ``(q, p, energy_drift, trace_list)``. The step is ``T / n`` with
    ``n = ceil(|T| / h)`` so the final time is hit exactly.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    n = n_steps_for(T, h) if T != 0 else 0
    step = T / n if n else 0.0
    H0 = _energy(cometric_eval(model, q), p)
    drift = 0.0
    records = [(0.0, PhaseState(q, p))] if trace else None
    for s in range(n):
        t = (s + 1) * step
        try:
            # overflow is reported below as a blow-up, not as a warning
            with np.errstate(over="ignore", invalid="ignore"):
                q, p = _rk4_step(model, q, p, step)
                if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
                    raise IntegrationError(f"flow blew up at t={t:.6g}", time=t)
                H = _energy(cometric_eval(model, q), p)
        except ModelEvaluationError as exc:
            raise IntegrationError(f"flow blew up near t={t:.6g}: {exc}", time=t) from exc
        drift = max(drift, float(np.max(np.abs(H - H0))))
        if trace:
            records.append((t, PhaseState(q, p)))
    return q, p, drift, records


def flow(model: ManifoldModel, state: PhaseState, T: float, h: float = DEFAULT_MAX_STEP, trace=False) -> FlowResult:
    """Integrate the Hamilton-Jacobi flow for time ``T`` with classical RK4.

    The energy drift ``max_t |H(t) - H(0)|`` is always reported.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    if h <= 0:
        raise ValueError("step size must be positive")
    q, p, drift, records = integrate(model, state.q, state.p, T, h, trace=trace)
    return FlowResult(
        final=PhaseState(q, p),
        energy_drift=drift,
        trace=records,
        n_steps=n_steps_for(T, h) if T else 0,
    )


def flow_batch(model, q, p, durations, max_step=DEFAULT_MAX_STEP, min_steps=10):
    """RK4 over a batch of states, each for its own duration.

    Path ``i`` takes ``n_i = max(min_steps, ceil(|T_i| / max_step))`` equal
    steps, so its result does not depend on the rest of the batch.
    Non-finite paths are returned as NaN rather than raising.
    """
    q = np.array(q, dtype=float)
    p = np.array(p, dtype=float)
    T = np.asarray(durations, dtype=float)
    n = np.maximum(min_steps, np.ceil(np.abs(T) / max_step - 1e-12)).astype(int)
    n = np.where(T == 0, 0, n)
    h = np.where(n > 0, T / np.maximum(n, 1), 0.0)
    for s in range(int(n.max()) if n.size else 0):
        live = (s < n) & np.all(np.isfinite(q), axis=-1) & np.all(np.isfinite(p), axis=-1)
        if not np.any(live):
            break
        idx = np.nonzero(live)[0]
        with np.errstate(all="ignore"):
            try:
                qn, pn = _rk4_step(model, q[idx], p[idx], h[idx])
            except ModelEvaluationError:
                qn, pn = _rk4_step_tolerant(model, q[idx], p[idx], h[idx])
        q[idx] = qn
        p[idx] = pn
    bad = ~(np.all(np.isfinite(q), axis=-1) & np.all(np.isfinite(p), axis=-1))
    q[bad] = np.nan
    p[bad] = np.nan
    return q, p


def _rk4_step_tolerant(model, q, p, h):
    # fallback when some rows are already non-finite: step rows one at a time
    qo = np.full_like(q, np.nan)
    po = np.full_like(p, np.nan)
    for r in range(q.shape[0]):
        try:
            qo[r], po[r] = _rk4_step(model, q[r], p[r], h[r])
        except ModelEvaluationError:
            pass
    return qo, po


def raised_christoffel(model, q) -> ChristoffelTensor:
    """Raised Christoffel symbols built from ``B`` and its first derivatives.

    ``gamma^{ijk} = -1/2 sum_l (beta^{il} d_l beta^{jk} + beta^{jl} d_l beta^{ik}
    - beta^{lk} d_l beta^{ij})``, symmetrized in ``(i, j)``.
    """
    B = cometric_eval(model, q)
    dB = cometric_derivatives(model, q)
    t1 = np.einsum("...il,...jkl->...ijk", B, dB)
    t2 = np.swapaxes(t1, -3, -2)
    t3 = np.einsum("...lk,...ijl->...ijk", B, dB)
    gamma = -0.5 * (t1 + t2 - t3)
    gamma = 0.5 * (gamma + np.swapaxes(gamma, -3, -2))
    return ChristoffelTensor(gamma)


def second_derivative_along_flow(model, state: PhaseState, f) -> float:
    """``d/dt d/ds f(q(t+s))`` at zero via the Christoffel form.

    ``sum_ij v^i v^j d_ij f - sum_ijk gamma^{ijk} p_i p_j d_k f`` with ``v = B p``.
    """
    q, p = state.q, state.p
    B = cometric_eval(model, q)
    v = np.einsum("...ij,...j->...i", B, p)
    gamma = raised_christoffel(model, q)
    hess = f.hessian(q)
    grad = f.gradient(q)
    return np.einsum("...i,...ij,...j->...", v, hess, v) + np.einsum(
        "...k,...k->...", gamma.contract(p), grad
    )
