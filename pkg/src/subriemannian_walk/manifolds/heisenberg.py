"""The Heisenberg group with its standard sub-Riemannian structure.

Coordinates ``(x, y, z)``; horizontal frame ``X = d_x - y/2 d_z``,
``Y = d_y + x/2 d_z``, orthonormal. The compatible metric makes
``{X, Y, Z = d_z}`` orthogonal with ``g(Z, Z) = lam``.
"""
from __future__ import annotations

import numpy as np

from ..geometry import ManifoldModel, PhaseState

# below this |theta * T| the arc integrals switch to their Taylor series
_SERIES_CUTOFF = 1e-2


class HeisenbergModel(ManifoldModel):
    def __init__(self, lam: float = 1.0):
        lam = float(lam)
        if not lam > 0:
            raise ValueError(f"lambda must be positive, got {lam}")
        super().__init__(dim=3, rank=2, name=f"heisenberg(lambda={lam:g})")
        self.lam = lam

    def __reduce__(self):
        return (HeisenbergModel, (self.lam,))

    def cometric(self, q):
        q = np.asarray(q, dtype=float)
        x, y = q[..., 0], q[..., 1]
        B = np.zeros(q.shape[:-1] + (3, 3))
        B[..., 0, 0] = 1.0
        B[..., 1, 1] = 1.0
        B[..., 0, 2] = B[..., 2, 0] = -0.5 * y
        B[..., 1, 2] = B[..., 2, 1] = 0.5 * x
        B[..., 2, 2] = 0.25 * (x * x + y * y)
        return B

    def metric(self, q):
        q = np.asarray(q, dtype=float)
        x, y = q[..., 0], q[..., 1]
        lam = self.lam
        G = np.empty(q.shape[:-1] + (3, 3))
        G[..., 0, 0] = 1.0 + 0.25 * lam * y * y
        G[..., 1, 1] = 1.0 + 0.25 * lam * x * x
        G[..., 0, 1] = G[..., 1, 0] = -0.25 * lam * x * y
        G[..., 0, 2] = G[..., 2, 0] = 0.5 * lam * y
        G[..., 1, 2] = G[..., 2, 1] = -0.5 * lam * x
        G[..., 2, 2] = lam
        return G

    def cometric_derivatives(self, q):
        q = np.asarray(q, dtype=float)
        x, y = q[..., 0], q[..., 1]
        dB = np.zeros(q.shape[:-1] + (3, 3, 3))
        dB[..., 0, 2, 1] = dB[..., 2, 0, 1] = -0.5
        dB[..., 1, 2, 0] = dB[..., 2, 1, 0] = 0.5
        dB[..., 2, 2, 0] = 0.5 * x
        dB[..., 2, 2, 1] = 0.5 * y
        return dB

    def horizontal_frame(self, q):
        return left_invariant_frame(q)

    def exact_flow(self, q, p, T):
        return heisenberg_flow_arrays(q, p, T)


def left_invariant_frame(q):
    """Columns ``X(q)``, ``Y(q)`` as a ``(..., 3, 2)`` array."""
    q = np.asarray(q, dtype=float)
    x, y = q[..., 0], q[..., 1]
    C = np.zeros(q.shape[:-1] + (3, 2))
    C[..., 0, 0] = 1.0
    C[..., 2, 0] = -0.5 * y
    C[..., 1, 1] = 1.0
    C[..., 2, 1] = 0.5 * x
    return C


def heisenberg_model(lam: float = 1.0) -> HeisenbergModel:
    return HeisenbergModel(lam)


def _arc_area_factor(u):
    """``(u - sin u) / u^2``, stable near zero."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, u)
    direct = (safe - np.sin(safe)) / safe**2
    u2 = u * u
    series = u / 6.0 * (1.0 - u2 / 20.0 * (1.0 - u2 / 42.0))
    return np.where(small, series, direct)


def heisenberg_flow_arrays(q, p, T):
    """Closed-form Hamilton-Jacobi flow, broadcasting over leading axes.

    With ``theta = p3`` constant, the horizontal velocity ``c = a + i b``
    (``a = p1 - y p3/2``, ``b = p2 + x p3/2``) rotates as ``c0 exp(i theta t)``.
    Then ``w = x + i y`` moves by ``c0 (e^{i theta T} - 1)/(i theta)`` and
    ``z`` gains the swept signed area ``1/2 Im(conj(w0) c0 E) + |c0|^2 T^2 A/2``
    where ``E = T e^{i theta T/2} sinc(theta T/2)`` and ``A = (u - sin u)/u^2``
    at ``u = theta T``.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    T = np.asarray(T, dtype=float)
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    p1, p2, theta = p[..., 0], p[..., 1], p[..., 2]
    a0 = p1 - 0.5 * y * theta
    b0 = p2 + 0.5 * x * theta
    c0 = a0 + 1j * b0
    w0 = x + 1j * y
    u = theta * T
    # np.sinc(s) = sin(pi s)/(pi s)
    E = T * np.exp(0.5j * u) * np.sinc(u / (2.0 * np.pi))
    w = w0 + c0 * E
    c = c0 * np.exp(1j * u)
    z_new = z + 0.5 * np.imag(np.conj(w0) * c0 * E) + 0.5 * np.abs(c0) ** 2 * T**2 * _arc_area_factor(u)
    x1, y1 = np.real(w), np.imag(w)
    a1, b1 = np.real(c), np.imag(c)
    q_new = np.stack([x1, y1, z_new], axis=-1)
    p_new = np.stack([a1 + 0.5 * y1 * theta, b1 - 0.5 * x1 * theta, theta * np.ones_like(x1)], axis=-1)
    return q_new, p_new


def heisenberg_flow_exact(state: PhaseState, T: float) -> PhaseState:
    """Exact phase-space flow on the Heisenberg group for time ``T``."""
    q, p = heisenberg_flow_arrays(state.q, state.p, T)
    return PhaseState(q, p)


def heisenberg_spec_text(lam: float = 1.0, samples=((0.0, 0.0, 0.0), (1.0, -2.0, 0.5), (-0.7, 0.3, 2.0))) -> str:
    """The built-in model written in the model-spec file format."""
    lam = float(lam)
    lines = [
        f"name heisenberg_spec_lambda_{lam:g}",
        "dim 3",
        "rank 2",
        "beta 1 1 = 1",
        "beta 2 2 = 1",
        "beta 1 3 = -x2/2",
        "beta 2 3 = x1/2",
        "beta 3 3 = (x1^2 + x2^2)/4",
        f"g 1 1 = 1 + {lam!r}*x2^2/4",
        f"g 2 2 = 1 + {lam!r}*x1^2/4",
        f"g 1 2 = -{lam!r}*x1*x2/4",
        f"g 1 3 = {lam!r}*x2/2",
        f"g 2 3 = -{lam!r}*x1/2",
        f"g 3 3 = {lam!r}",
    ]
    lines += ["sample " + " ".join(repr(float(c)) for c in s) for s in samples]
    return "\n".join(lines) + "\n"
