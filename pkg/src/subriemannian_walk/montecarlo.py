"""Semigroup estimates for the scaled walk and an independent SDE reference.

Randomness is organized in fixed-size chunks of paths. Chunk ``c`` draws
from ``Generator(PCG64(SeedSequence(seed, spawn_key=(c,))))``, so results
are bit-identical for any number of worker processes: workers only decide
who computes which chunk, never what a chunk contains. Chunk outputs are
concatenated in chunk order before any reduction.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .walker import WalkConfig, run_walks

CHUNK_SIZE = 4096
FAILURE_BUDGET = 1e-3


class EstimationError(RuntimeError):
    pass


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _chunk_sizes(n, chunk_size):
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def _map_chunks(fn, args_list, workers):
    if workers is None or workers <= 1 or len(args_list) <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*args_list)))


# -- moments -----------------------------------------------------------------

@dataclass
class MomentSummary:
    mean: float
    variance: float
    stderr_mean: float
    stderr_variance: float
    min: float
    max: float
    n: int

    def as_dict(self):
        return asdict(self)


def moment_report(samples) -> MomentSummary:
    """Mean, unbiased variance and their standard errors.

    The variance's standard error uses the fourth central moment:
    ``sqrt((m4 - (n-3)/(n-1) s^4) / n)``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    mean = float(np.mean(x))
    dev = x - mean
    var = float(np.sum(dev * dev) / (n - 1))
    m4 = float(np.mean(dev**4))
    se_var2 = (m4 - (n - 3) / (n - 1) * var * var) / n
    return MomentSummary(
        mean=mean,
        variance=var,
        stderr_mean=math.sqrt(var / n),
        stderr_variance=math.sqrt(max(se_var2, 0.0)),
        min=float(np.min(x)),
        max=float(np.max(x)),
        n=n,
    )


# -- walk endpoints ----------------------------------------------------------

@dataclass
class EndpointSample:
    q: np.ndarray  # (n_ok, d), chunk order
    n_failed: int
    n_legs_mean: float
    n_paths: int


def _endpoint_chunk(model, x0, cfg, n, seed, chunk):
    batch = run_walks(model, x0, cfg, n, chunk_rng(seed, chunk))
    return batch.q[~batch.failed], int(batch.failed.sum()), batch.n_legs


def walk_endpoints(model, x0, t, epsilon, n_paths, seed, workers=1, exact_legs=True, step=None,
                   chunk_size=CHUNK_SIZE) -> EndpointSample:
    """Base points of ``n_paths`` walks at walk time ``t / epsilon^2``.

    Raises :class:`EstimationError` if more than 0.1% of paths fail.
    """
    if not t > 0 or not epsilon > 0:
        raise ValueError("t and epsilon must be positive")
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    cfg = WalkConfig(epsilon=epsilon, horizon=t / epsilon**2, step=step, exact_legs=exact_legs, seed=seed)
    sizes = _chunk_sizes(n_paths, chunk_size)
    x0 = np.asarray(x0, dtype=float)
    results = _map_chunks(
        _endpoint_chunk,
        [(model, x0, cfg, n, seed, c) for c, n in enumerate(sizes)],
        workers,
    )
    q = np.concatenate([r[0] for r in results])
    n_failed = sum(r[1] for r in results)
    legs = np.concatenate([r[2] for r in results])
    if n_failed > FAILURE_BUDGET * n_paths:
        raise EstimationError(f"{n_failed} of {n_paths} walks failed (budget {FAILURE_BUDGET:.1%})")
    return EndpointSample(q=q, n_failed=n_failed, n_legs_mean=float(np.mean(legs)), n_paths=n_paths)


@dataclass
class EstimatorReport:
    """Monte Carlo estimate of ``E[f(xi_{t/eps^2})]``."""

    estimate: float
    stderr: float
    n_paths: int
    seed: int
    config: dict
    n_failed: int = 0
    elapsed: float = 0.0

    def payload(self):
        """Everything except wall-clock time: the part that must reproduce exactly."""
        d = asdict(self)
        d.pop("elapsed")
        return d

    def as_dict(self):
        return asdict(self)


def estimate_semigroup(model, f, x0, t, epsilon, n_paths, seed, workers=1, exact_legs=True, step=None,
                       chunk_size=CHUNK_SIZE, f_name=None) -> EstimatorReport:
    """Estimate ``T^eps_{t/eps^2} f(x0) = E[f(xi^eps_{t/eps^2})]`` by simulation."""
    start = time.perf_counter()
    sample = walk_endpoints(model, x0, t, epsilon, n_paths, seed, workers=workers,
                            exact_legs=exact_legs, step=step, chunk_size=chunk_size)
    values = f.value(sample.q)
    n_ok = values.size
    config = {
        "model": model.name,
        "f": f_name or getattr(f, "name", "f"),
        "x0": np.asarray(x0, dtype=float).tolist(),
        "t": float(t),
        "epsilon": float(epsilon),
        "exact_legs": bool(exact_legs),
        "step": step,
        "chunk_size": chunk_size,
        "mean_legs": sample.n_legs_mean,
    }
    return EstimatorReport(
        estimate=float(np.mean(values)),
        stderr=float(np.std(values, ddof=1) / math.sqrt(n_ok)),
        n_paths=n_ok,
        seed=seed,
        config=config,
        n_failed=sample.n_failed,
        elapsed=time.perf_counter() - start,
    )


@dataclass
class ConvergenceRow:
    epsilon: float
    estimate: float
    stderr: float
    n_paths: int


@dataclass
class ConvergenceTable:
    rows: list
    reference: Optional[float] = None
    reference_stderr: Optional[float] = None
    provenance: Optional[str] = None
    config: dict = field(default_factory=dict)

    def deviations(self):
        if self.reference is None:
            return None
        return [abs(r.estimate - self.reference) for r in self.rows]

    def as_dict(self):
        return {
            "rows": [asdict(r) for r in self.rows],
            "reference": self.reference,
            "reference_stderr": self.reference_stderr,
            "provenance": self.provenance,
            "config": self.config,
        }


def convergence_sweep(model, f, x0, t, eps_list, n_paths, seed, reference=None, reference_stderr=None,
                      provenance=None, workers=1, exact_legs=True, step=None) -> ConvergenceTable:
    """One semigroup estimate per epsilon (strictly decreasing), same seed for each row."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list is empty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    rows = []
    for eps in eps_list:
        rep = estimate_semigroup(model, f, x0, t, eps, n_paths, seed, workers=workers,
                                 exact_legs=exact_legs, step=step)
        rows.append(ConvergenceRow(eps, rep.estimate, rep.stderr, rep.n_paths))
    config = {
        "model": model.name,
        "f": getattr(f, "name", "f"),
        "x0": np.asarray(x0, dtype=float).tolist(),
        "t": float(t),
        "n_paths": n_paths,
        "seed": seed,
    }
    return ConvergenceTable(rows, reference, reference_stderr, provenance, config)


# -- Heisenberg SDE reference ------------------------------------------------

@dataclass
class OracleReport:
    t: float
    dt: float
    n_paths: int
    seed: int
    moments: dict  # name -> {"value": ..., "stderr": ...}
    frequency: float = 1.0
    elapsed: float = 0.0

    def value(self, name):
        return self.moments[name]["value"]

    def stderr(self, name):
        return self.moments[name]["stderr"]

    def payload(self):
        d = asdict(self)
        d.pop("elapsed")
        return d

    def as_dict(self):
        return asdict(self)


def _oracle_chunk(t, n_steps, n, seed, chunk):
    rng = chunk_rng(seed, chunk)
    dt = t / n_steps
    sq = math.sqrt(dt)
    x = np.zeros(n)
    y = np.zeros(n)
    z = np.zeros(n)
    for _ in range(n_steps):
        dw = rng.standard_normal((2, n)) * sq
        z += 0.5 * (x * dw[1] - y * dw[0])
        x += dw[0]
        y += dw[1]
    return np.stack([x, y, z], axis=-1)


def heisenberg_sde_endpoints(t, n_paths, dt, seed, workers=1, chunk_size=CHUNK_SIZE):
    """Euler-Maruyama endpoints of ``dx = dW1, dy = dW2, dz = (x dW2 - y dW1)/2`` from 0."""
    n_steps = max(1, math.ceil(t / dt - 1e-12))
    sizes = _chunk_sizes(n_paths, chunk_size)
    parts = _map_chunks(_oracle_chunk, [(t, n_steps, n, seed, c) for c, n in enumerate(sizes)], workers)
    return np.concatenate(parts), t / n_steps


def heisenberg_sde_oracle(t=1.0, n_paths=100_000, dt=1e-3, seed=0, frequency=1.0, workers=1) -> OracleReport:
    """Moments of horizontal Brownian motion on the Heisenberg group at time ``t``.

    Reports ``E[x^2]``, ``E[y^2]``, ``E[z]``, ``Var[z]`` and
    ``E[cos(frequency * z)]``, each with a standard error.
    """
    start = time.perf_counter()
    pts, dt_used = heisenberg_sde_endpoints(t, n_paths, dt, seed, workers=workers)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    moments = {}
    for name, s in (("E[x^2]", x * x), ("E[y^2]", y * y), ("E[z]", z), ("E[cos(fz)]", np.cos(frequency * z))):
        m = moment_report(s)
        moments[name] = {"value": m.mean, "stderr": m.stderr_mean}
    mz = moment_report(z)
    moments["Var[z]"] = {"value": mz.variance, "stderr": mz.stderr_variance}
    return OracleReport(t=float(t), dt=dt_used, n_paths=n_paths, seed=seed, moments=moments,
                        frequency=float(frequency), elapsed=time.perf_counter() - start)


def walk_moments(model, x0, t, epsilon, n_paths, seed, frequency=1.0, workers=1, exact_legs=True, step=None):
    """The oracle's moment set computed from walk endpoints on the Heisenberg group."""
    sample = walk_endpoints(model, x0, t, epsilon, n_paths, seed, workers=workers, exact_legs=exact_legs, step=step)
    x, y, z = sample.q[:, 0], sample.q[:, 1], sample.q[:, 2]
    moments = {}
    for name, s in (("E[x^2]", x * x), ("E[y^2]", y * y), ("E[z]", z), ("E[cos(fz)]", np.cos(frequency * z))):
        m = moment_report(s)
        moments[name] = {"value": m.mean, "stderr": m.stderr_mean}
    mz = moment_report(z)
    moments["Var[z]"] = {"value": mz.variance, "stderr": mz.stderr_variance}
    return moments, sample
