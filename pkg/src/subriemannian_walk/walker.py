"""The epsilon-scaled piecewise-Hamiltonian random walk.

Each leg starts at ``(x_k, G(x_k) v_k)`` with ``v_k`` uniform on the unit
horizontal sphere, lasts an ``Exp(1)`` amount of walk time ``e_{k+1}``, and
follows the Hamiltonian flow for flow time ``epsilon * e_{k+1}``. The base
point is continuous across rings; the momentum is redrawn.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import PhaseState, _as_point, metric_eval, sample_horizontal_sphere
from .hamiltonian import DEFAULT_MAX_STEP, IntegrationError, flow_batch


class WalkError(RuntimeError):
    def __init__(self, message, leg=None):
        super().__init__(message)
        self.leg = leg


@dataclass(frozen=True)
class WalkConfig:
    """Walk parameters.

    ``horizon`` is measured on the walk clock (rate-1 exponential rings).
    ``step`` caps the RK4 step in flow time; ``None`` means
    ``min(1e-2, leg flow time / 10)``. ``exact_legs`` uses the model's
    closed-form flow when it has one.
    """

    epsilon: float
    horizon: float
    step: Optional[float] = None
    exact_legs: bool = True
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.horizon >= 0:
            raise ValueError("horizon must be non-negative")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")


@dataclass
class WalkPath:
    """One realization: leg start times and leg initial states, plus the final state."""

    jump_times: np.ndarray  # (K,) start time of each leg; jump_times[0] == 0
    leg_q: np.ndarray  # (K, d)
    leg_p: np.ndarray  # (K, d)
    final: PhaseState
    horizon: float
    epsilon: float
    step: Optional[float] = None
    exact_legs: bool = True
    seed: Optional[int] = None

    @property
    def n_legs(self):
        return len(self.jump_times)

    @property
    def n_jumps(self):
        return len(self.jump_times) - 1


@dataclass
class WalkBatch:
    """End states of many walks, plus optional per-path leg records."""

    q: np.ndarray
    p: np.ndarray
    n_legs: np.ndarray
    failed: np.ndarray
    records: Optional[list] = field(default=None, repr=False)


def _advance(model, q, p, flow_time, exact, step):
    if exact and model.exact_flow is not None:
        return model.exact_flow(q, p, flow_time)
    max_step = DEFAULT_MAX_STEP if step is None else step
    return flow_batch(model, q, p, flow_time, max_step=max_step, min_steps=10 if step is None else 1)


def _redirect(model, q, rng):
    v = sample_horizontal_sphere(model, q, rng)
    G = metric_eval(model, q)
    return np.einsum("...ij,...j->...i", G, v), v


def run_walks(model, x0, cfg: WalkConfig, n_paths, rng, v0=None, record=False) -> WalkBatch:
    """Simulate ``n_paths`` independent walks from ``x0`` in lock step.

    Paths whose state turns non-finite are marked failed and frozen; they
    are not silently dropped. Random draws per loop iteration: one
    ``Exp(1)`` per active path, then one sphere sample per path that
    redirects.
    """
    x0 = _as_point(model, x0)
    d = model.dim
    q = np.broadcast_to(x0, (n_paths, d)).copy()
    if v0 is None:
        p, _ = _redirect(model, q, rng)
    else:
        v0 = np.asarray(v0, dtype=float)
        p = np.broadcast_to(metric_eval(model, x0) @ v0, (n_paths, d)).copy()
    remaining = np.full(n_paths, float(cfg.horizon))
    clock = np.zeros(n_paths)
    n_legs = np.zeros(n_paths, dtype=int)
    failed = np.zeros(n_paths, dtype=bool)
    active = np.ones(n_paths, dtype=bool) if cfg.horizon > 0 else np.zeros(n_paths, dtype=bool)
    records = [[(0.0, q[i].copy(), p[i].copy())] for i in range(n_paths)] if record else None
    if cfg.horizon == 0:
        n_legs[:] = 1

    while np.any(active):
        idx = np.nonzero(active)[0]
        e = rng.exponential(size=idx.size)
        finishing = e >= remaining[idx]
        dur = np.where(finishing, remaining[idx], e)
        with np.errstate(all="ignore"):
            qn, pn = _advance(model, q[idx], p[idx], cfg.epsilon * dur, cfg.exact_legs, cfg.step)
        ok = np.all(np.isfinite(qn), axis=-1) & np.all(np.isfinite(pn), axis=-1)
        q[idx] = qn
        p[idx] = pn
        n_legs[idx] += 1
        clock[idx] += dur
        remaining[idx] -= dur
        failed[idx[~ok]] = True
        done = finishing | ~ok
        active[idx[done]] = False

        go = idx[~done]
        if go.size:
            p[go], _ = _redirect(model, q[go], rng)
            if record:
                for i in go:
                    records[i].append((clock[i], q[i].copy(), p[i].copy()))
    return WalkBatch(q=q, p=p, n_legs=n_legs, failed=failed, records=records)


def sample_walk(model, x0, cfg: WalkConfig, rng=None, v0=None) -> WalkPath:
    """One walk from ``x0`` up to walk time ``cfg.horizon``, with its legs recorded.

    ``v0`` is the initial unit horizontal velocity; if omitted it is drawn
    uniformly. Raises :class:`WalkError` on flow blow-up.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    batch = run_walks(model, x0, cfg, 1, rng, v0=v0, record=True)
    legs = batch.records[0]
    if batch.failed[0]:
        raise WalkError(f"walk failed on leg {batch.n_legs[0] - 1}", leg=int(batch.n_legs[0] - 1))
    return WalkPath(
        jump_times=np.array([t for t, _, _ in legs]),
        leg_q=np.array([lq for _, lq, _ in legs]),
        leg_p=np.array([lp for _, _, lp in legs]),
        final=PhaseState(batch.q[0], batch.p[0]),
        horizon=float(cfg.horizon),
        epsilon=float(cfg.epsilon),
        step=cfg.step,
        exact_legs=cfg.exact_legs,
        seed=cfg.seed,
    )


def walk_state_at(path: WalkPath, model, t: float) -> PhaseState:
    """Phase state of the walk at walk time ``t``, by re-flowing the containing leg."""
    if not 0 <= t <= path.horizon:
        raise ValueError(f"t={t} outside [0, {path.horizon}]")
    k = int(np.searchsorted(path.jump_times, t, side="right")) - 1
    dt = t - path.jump_times[k]
    q0, p0 = path.leg_q[k], path.leg_p[k]
    if dt == 0:
        return PhaseState(q0, p0)
    q, p = _advance(model, q0[None], p0[None], np.array([path.epsilon * dt]), path.exact_legs, path.step)
    if not np.all(np.isfinite(q)):
        raise IntegrationError(f"flow blew up re-integrating leg {k}")
    return PhaseState(q[0], p[0])


def walk_position_at(path: WalkPath, model, t: float) -> np.ndarray:
    """Base point of the walk at walk time ``t``."""
    return walk_state_at(path, model, t).q
