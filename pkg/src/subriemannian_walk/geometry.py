"""Chart-level linear algebra for a sub-Riemannian structure.

A model is described in one coordinate chart by two matrix fields:
the cometric ``B(q)`` (entries ``beta^{ij}``, symmetric PSD of rank ``m``)
and a compatible Riemannian metric ``G(q)`` (entries ``g_{ij}``, SPD).
All evaluators broadcast over leading axes: ``q`` of shape ``(..., d)``
gives matrices of shape ``(..., d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

RANK_RTOL = 1e-10
ALGEBRAIC_TOL = 1e-9


class ModelEvaluationError(ValueError):
    """A model evaluator produced non-finite output or failed."""


class DegenerateRankError(ValueError):
    """The cometric does not have the declared rank at a point."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class ManifoldModel:
    """Chart-level description of a sub-Riemannian manifold with compatible metric.

    Either pass evaluators to the constructor or subclass and override
    :meth:`cometric`, :meth:`metric` and optionally
    :meth:`cometric_derivatives`. Subclasses used with multiprocess
    estimation must be picklable, so prefer methods over lambdas there.

    Parameters
    ----------
    dim : int
        Chart dimension ``d``.
    rank : int
        Horizontal rank ``m <= d``.
    cometric, metric : callable, optional
        ``q -> (..., d, d)`` evaluators for ``B`` and ``G``.
    cometric_derivatives : callable, optional
        ``q -> (..., d, d, d)`` with ``[..., i, j, l] = d beta^{ij} / d x^l``.
    name : str
    """

    def __init__(
        self,
        dim: int,
        rank: int,
        cometric: Optional[Callable] = None,
        metric: Optional[Callable] = None,
        cometric_derivatives: Optional[Callable] = None,
        name: str = "model",
    ):
        if dim < 1 or not 1 <= rank <= dim:
            raise ValueError(f"need 1 <= rank <= dim, got dim={dim}, rank={rank}")
        self.dim = int(dim)
        self.rank = int(rank)
        self.name = name
        self._cometric = cometric
        self._metric = metric
        self._cometric_derivatives = cometric_derivatives

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim}, rank={self.rank})"

    def cometric(self, q):
        if self._cometric is None:
            raise NotImplementedError("model has no cometric evaluator")
        return self._cometric(q)

    def metric(self, q):
        if self._metric is None:
            raise NotImplementedError("model has no metric evaluator")
        return self._metric(q)

    def cometric_derivatives(self, q):
        """Analytic ``d beta^{ij}/d x^l``, or ``None`` when not supplied."""
        if self._cometric_derivatives is None:
            return None
        return self._cometric_derivatives(q)

    def horizontal_frame(self, q):
        """A ``(..., d, m)`` factor ``C`` with ``C C^T = B(q)``.

        The default goes through :func:`horizontal_factor`; models with a
        known orthonormal frame override this for speed.
        """
        return _eig_factor(self, np.asarray(q, dtype=float))[0]

    exact_flow = None
    """Optional closed-form flow ``(q, p, T) -> (q, p)``; ``None`` if unavailable."""


@dataclass(frozen=True)
class PhaseState:
    """A point ``(q, p)`` of the cotangent bundle in chart coordinates."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape:
            raise ValueError(f"q and p shapes differ: {q.shape} vs {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase state has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self):
        return self.q.shape[-1]


@dataclass(frozen=True)
class HorizontalFactor:
    """Columns of ``C`` form an orthonormal frame of the horizontal space at ``q``."""

    C: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)


@dataclass
class CompatibilityReport:
    point: np.ndarray
    residual: float  # max_c |B G c - c| over frame columns
    cometric_eigenvalues: np.ndarray
    metric_eigenvalues: np.ndarray
    numerical_rank: int
    declared_rank: int
    symmetry_error: float
    tol: float = ALGEBRAIC_TOL

    @property
    def rank_ok(self):
        return self.numerical_rank == self.declared_rank

    @property
    def metric_spd(self):
        return bool(np.all(self.metric_eigenvalues > 0))

    @property
    def cometric_psd(self):
        scale = max(float(np.max(np.abs(self.cometric_eigenvalues))), 1.0)
        return bool(np.all(self.cometric_eigenvalues > -self.tol * scale))

    @property
    def passed(self):
        return (
            self.residual <= self.tol
            and self.symmetry_error <= self.tol
            and self.rank_ok
            and self.metric_spd
            and self.cometric_psd
        )

    def as_dict(self):
        return {
            "point": self.point.tolist(),
            "residual": self.residual,
            "symmetry_error": self.symmetry_error,
            "numerical_rank": self.numerical_rank,
            "declared_rank": self.declared_rank,
            "cometric_eigenvalues": self.cometric_eigenvalues.tolist(),
            "metric_eigenvalues": self.metric_eigenvalues.tolist(),
            "passed": self.passed,
        }


def _as_point(model, q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (model.dim,):
        raise ValueError(f"expected points with last axis {model.dim}, got shape {q.shape}")
    return q


def _checked(name, fn, q):
    try:
        value = np.asarray(fn(q), dtype=float)
    except (ZeroDivisionError, FloatingPointError) as exc:
        raise ModelEvaluationError(f"{name} evaluator failed: {exc}") from exc
    if not np.all(np.isfinite(value)):
        raise ModelEvaluationError(f"{name} evaluator returned non-finite entries")
    return value


def cometric_eval(model: ManifoldModel, q) -> np.ndarray:
    """``B(q)``, the matrix of ``beta^{ij}(q)``."""
    q = _as_point(model, q)
    return _checked("cometric", model.cometric, q)


def metric_eval(model: ManifoldModel, q) -> np.ndarray:
    """``G(q)``, the matrix of ``g_{ij}(q)``."""
    q = _as_point(model, q)
    return _checked("metric", model.metric, q)


def beta_apply(model, q, p):
    """Raise a covector with the cometric: ``v = B(q) p``, a horizontal vector."""
    B = cometric_eval(model, q)
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != model.dim:
        raise ValueError(f"covector has {p.shape[-1]} components, model dim is {model.dim}")
    return np.einsum("...ij,...j->...i", B, p)


def g_apply(model, q, v):
    """Lower a tangent vector with the compatible metric: ``G(q) v``."""
    G = metric_eval(model, q)
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != model.dim:
        raise ValueError(f"vector has {v.shape[-1]} components, model dim is {model.dim}")
    return np.einsum("...ij,...j->...i", G, v)


def horizontal_inner(model, q, v, w, check=False, tol=1e-8):
    """``v^T G(q) w``. With ``check=True``, flag inputs that are not horizontal."""
    G = metric_eval(model, q)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if check:
        B = cometric_eval(model, q)
        for name, x in (("v", v), ("w", w)):
            # horizontal iff B G x = x
            resid = np.einsum("...ij,...jk,...k->...i", B, G, x) - x
            if np.max(np.abs(resid)) > tol * max(1.0, float(np.max(np.abs(x)))):
                raise ValueError(f"{name} is not horizontal at q (residual {np.max(np.abs(resid)):.3e})")
    return np.einsum("...i,...ij,...j->...", v, G, w)


def _eig_factor(model, q):
    B = cometric_eval(model, q)
    evals, evecs = np.linalg.eigh(B)
    m = model.rank
    top = evals[..., -1:]
    threshold = RANK_RTOL * np.maximum(top, 0.0)
    numerical_rank = np.sum(evals > threshold, axis=-1)
    if np.any(numerical_rank != m):
        bad = np.argwhere(np.atleast_1d(numerical_rank != m))[0]
        ev = np.atleast_2d(evals)[tuple(bad)]
        raise DegenerateRankError(
            f"cometric has numerical rank {int(np.atleast_1d(numerical_rank)[tuple(bad)])}, "
            f"declared rank {m}; eigenvalues {ev}",
            eigenvalues=ev,
        )
    lam = evals[..., -m:]
    C = evecs[..., :, -m:] * np.sqrt(lam)[..., None, :]
    return C, evals


def horizontal_factor(model: ManifoldModel, q) -> HorizontalFactor:
    """Factor ``B(q) = C C^T`` from the ``m`` positive eigenpairs of ``B``.

    ``C`` is unique up to a right orthogonal factor. Raises
    :class:`DegenerateRankError` if the numerical rank (eigenvalues above
    ``1e-10`` times the largest) differs from ``model.rank``.
    """
    C, evals = _eig_factor(model, _as_point(model, q))
    return HorizontalFactor(C=C, eigenvalues=evals)


def uniform_unit_sphere(rng, m, size=None):
    """Uniform points on the Euclidean unit sphere in ``R^m`` (normalized Gaussians)."""
    shape = (m,) if size is None else tuple(np.atleast_1d(size)) + (m,)
    z = rng.standard_normal(shape)
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    # a zero Gaussian vector has probability zero; guard anyway
    while np.any(norm == 0):
        z = np.where(norm == 0, rng.standard_normal(shape), z)
        norm = np.linalg.norm(z, axis=-1, keepdims=True)
    return z / norm


def sample_horizontal_sphere(model, q, rng, size=None, frame=None):
    """Draw from the rotation-invariant law on the unit horizontal sphere at ``q``.

    Parameters
    ----------
    model : ManifoldModel
    q : array_like, shape (d,) or (n, d)
        Base point(s). For a batch of points one sample is drawn per point.
    rng : numpy.random.Generator
    size : int, optional
        Number of samples at a single point ``q``.
    frame : ndarray, optional
        Precomputed factor ``C``; defaults to ``model.horizontal_frame(q)``.

    Returns
    -------
    ndarray
        Horizontal vectors ``v = C u`` with ``v^T G v = 1``.
    """
    q = _as_point(model, q)
    C = model.horizontal_frame(q) if frame is None else frame
    if q.ndim == 1:
        u = uniform_unit_sphere(rng, model.rank, size)
        return u @ C.T
    if size is not None:
        raise ValueError("size is only supported for a single base point")
    u = uniform_unit_sphere(rng, model.rank, q.shape[:-1])
    return np.einsum("...ij,...j->...i", C, u)


def validate_compatibility(model, q, tol=ALGEBRAIC_TOL) -> CompatibilityReport:
    """Check ``beta o g = Id`` on the horizontal space, plus PSD/SPD/rank diagnostics.

    Never raises on a failed check; inspect ``report.passed``.
    """
    q = _as_point(model, q)
    B = cometric_eval(model, q)
    G = metric_eval(model, q)
    sym = max(float(np.max(np.abs(B - B.T))), float(np.max(np.abs(G - G.T))))
    Bs = 0.5 * (B + B.T)
    Gs = 0.5 * (G + G.T)
    bev, bvec = np.linalg.eigh(Bs)
    gev = np.linalg.eigvalsh(Gs)
    top = max(float(bev[-1]), 0.0)
    numerical_rank = int(np.sum(bev > RANK_RTOL * top))
    m = model.rank
    # columns of the top-m factor, whether or not the rank is right
    C = bvec[:, -m:] * np.sqrt(np.clip(bev[-m:], 0.0, None))
    resid = B @ G @ C - C
    residual = float(np.max(np.abs(resid))) if resid.size else 0.0
    return CompatibilityReport(
        point=q.copy(),
        residual=residual,
        cometric_eigenvalues=bev,
        metric_eigenvalues=gev,
        numerical_rank=numerical_rank,
        declared_rank=m,
        symmetry_error=sym,
        tol=tol,
    )
