"""Flat ``R^d`` with the full tangent bundle as horizontal space."""
from __future__ import annotations

import numpy as np

from ..geometry import ManifoldModel


class EuclideanModel(ManifoldModel):
    def __init__(self, dim: int = 3):
        if dim < 1:
            raise ValueError("dimension must be at least 1")
        super().__init__(dim=dim, rank=dim, name=f"euclidean(d={dim})")

    def __reduce__(self):
        return (EuclideanModel, (self.dim,))

    def _identity(self, q):
        q = np.asarray(q, dtype=float)
        return np.broadcast_to(np.eye(self.dim), q.shape[:-1] + (self.dim, self.dim)).copy()

    def cometric(self, q):
        return self._identity(q)

    def metric(self, q):
        return self._identity(q)

    def cometric_derivatives(self, q):
        q = np.asarray(q, dtype=float)
        return np.zeros(q.shape[:-1] + (self.dim,) * 3)

    def horizontal_frame(self, q):
        return self._identity(q)

    def exact_flow(self, q, p, T):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        T = np.asarray(T, dtype=float)
        return q + T[..., None] * p, p.copy()


def euclidean_model(dim: int = 3) -> EuclideanModel:
    return EuclideanModel(dim)
