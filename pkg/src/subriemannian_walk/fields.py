"""Test functions on the chart (``ScalarField``) and on phase space (``PhaseField``)."""
from __future__ import annotations

import itertools
from typing import Callable, Optional

import numpy as np

from .manifolds.expr import Expr, diff_expression, parse_expression, to_string

FD_STEP = 1e-4


class ScalarField:
    """A function ``f`` on the chart with value, gradient and Hessian.

    Built from callables; missing derivatives fall back to central
    differences (``mode == "finite-difference"``). All evaluators accept
    points of shape ``(..., d)``.
    """

    def __init__(
        self,
        value: Callable,
        gradient: Optional[Callable] = None,
        hessian: Optional[Callable] = None,
        name: str = "f",
        dim: Optional[int] = None,
    ):
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.name = name
        self.dim = dim

    @property
    def mode(self):
        if self._gradient is not None and self._hessian is not None:
            return "analytic"
        return "finite-difference"

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, mode={self.mode})"

    def value(self, q):
        return np.asarray(self._value(np.asarray(q, dtype=float)), dtype=float)

    def __call__(self, q):
        return self.value(q)

    def gradient(self, q):
        q = np.asarray(q, dtype=float)
        if self._gradient is not None:
            return np.asarray(self._gradient(q), dtype=float)
        return self._fd_gradient(q)

    def hessian(self, q):
        q = np.asarray(q, dtype=float)
        if self._hessian is not None:
            return np.asarray(self._hessian(q), dtype=float)
        return self._fd_hessian(q)

    def _fd_gradient(self, q, h=FD_STEP):
        d = q.shape[-1]
        eye = np.eye(d) * h
        return np.stack(
            [(self.value(q + eye[k]) - self.value(q - eye[k])) / (2 * h) for k in range(d)], axis=-1
        )

    def _fd_hessian(self, q, h=FD_STEP):
        d = q.shape[-1]
        eye = np.eye(d) * h
        f0 = self.value(q)
        H = np.empty(q.shape + (d,))
        for i in range(d):
            H[..., i, i] = (self.value(q + eye[i]) - 2 * f0 + self.value(q - eye[i])) / h**2
            for j in range(i + 1, d):
                fpp = self.value(q + eye[i] + eye[j])
                fpm = self.value(q + eye[i] - eye[j])
                fmp = self.value(q - eye[i] + eye[j])
                fmm = self.value(q - eye[i] - eye[j])
                H[..., i, j] = H[..., j, i] = (fpp - fpm - fmp + fmm) / (4 * h**2)
        return H

    def finite_difference(self):
        """The same field with derivatives forced through finite differences."""
        return ScalarField(self._value, name=f"{self.name}[fd]", dim=self.dim)


class Polynomial(ScalarField):
    """Polynomial field ``sum_k c_k prod_l x_l^{e_kl}`` with exact derivatives.

    Parameters
    ----------
    terms : dict
        Maps exponent tuples (length ``dim``) to coefficients.
    """

    def __init__(self, terms: dict, dim: int, name: Optional[str] = None):
        terms = {tuple(int(e) for e in k): float(c) for k, c in terms.items() if c != 0}
        for k in terms:
            if len(k) != dim or min(k, default=0) < 0:
                raise ValueError(f"bad exponent tuple {k} for dim {dim}")
        self.terms = terms
        self.exps = np.array(list(terms) or [(0,) * dim], dtype=int).reshape(-1, dim)
        self.coefs = np.array(list(terms.values()) or [0.0], dtype=float)
        super().__init__(
            self._poly_value, self._poly_gradient, self._poly_hessian,
            name=name or self._describe(), dim=dim,
        )

    def _describe(self):
        parts = []
        for k, c in self.terms.items():
            mono = "*".join(f"x{l + 1}^{e}" if e > 1 else f"x{l + 1}" for l, e in enumerate(k) if e)
            parts.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts) or "0"

    @staticmethod
    def _monomials(q, exps):
        # (..., K) products of q_l^e_l, with negative exponents contributing zero
        with np.errstate(divide="ignore", invalid="ignore"):
            powers = np.power(q[..., None, :], np.maximum(exps, 0))
        return np.prod(powers, axis=-1)

    def _poly_value(self, q):
        return self._monomials(q, self.exps) @ self.coefs

    def _poly_gradient(self, q):
        d = self.dim
        out = []
        for l in range(d):
            e = self.exps.copy()
            factor = e[:, l].astype(float)
            e[:, l] -= 1
            out.append(self._monomials(q, e) @ (self.coefs * factor))
        return np.stack(out, axis=-1)

    def _poly_hessian(self, q):
        d = self.dim
        H = np.empty(q.shape + (d,))
        for i in range(d):
            for j in range(i, d):
                e = self.exps.copy()
                factor = e[:, i].astype(float)
                e[:, i] -= 1
                factor = factor * e[:, j]
                e[:, j] -= 1
                H[..., i, j] = H[..., j, i] = self._monomials(q, e) @ (self.coefs * factor)
        return H

    @classmethod
    def random(cls, rng, dim, degree=4, scale=1.0, density=1.0):
        """Random polynomial of total degree ``<= degree`` with Gaussian coefficients."""
        terms = {}
        for k in itertools.product(range(degree + 1), repeat=dim):
            if sum(k) <= degree and rng.random() < density:
                terms[k] = scale * rng.standard_normal()
        return cls(terms, dim)


class ExpressionField(ScalarField):
    """Field given by an expression in ``x1 .. xd``, differentiated symbolically."""

    def __init__(self, expr, dim: int, name: Optional[str] = None):
        if isinstance(expr, str):
            expr = parse_expression(expr, dim)
        self.expr: Expr = expr
        self.grad_exprs = [diff_expression(expr, l + 1) for l in range(dim)]
        self.hess_exprs = [[diff_expression(g, j + 1) for j in range(dim)] for g in self.grad_exprs]
        super().__init__(
            expr.evaluate, self._expr_gradient, self._expr_hessian,
            name=name or to_string(expr), dim=dim,
        )

    def _expr_gradient(self, q):
        return np.stack([g.evaluate(q) for g in self.grad_exprs], axis=-1)

    def _expr_hessian(self, q):
        rows = [np.stack([h.evaluate(q) for h in row], axis=-1) for row in self.hess_exprs]
        return np.stack(rows, axis=-2)


class PhaseField:
    """A function ``F(q, p)`` on the cotangent bundle."""

    def __init__(self, value: Callable, name: str = "F"):
        self._value = value
        self.name = name

    def value(self, q, p):
        return np.asarray(self._value(np.asarray(q, dtype=float), np.asarray(p, dtype=float)), dtype=float)

    def __call__(self, q, p):
        return self.value(q, p)

    @classmethod
    def lift(cls, f: ScalarField):
        """``F(q, p) = f(q)``, the chart function viewed on phase space."""
        return _Lifted(f)


class _Lifted(PhaseField):
    def __init__(self, f):
        self.base = f
        super().__init__(lambda q, p: f.value(q), name=f"lift({f.name})")


def _coordinate_poly(dim, index, power):
    k = [0] * dim
    k[index] = power
    return {tuple(k): 1.0}


def builtin_field(name: str, dim: int) -> Polynomial:
    """Named test fields: ``x``, ``y``, ``z``, ``x_sq``, ``y_sq``, ``z_sq``, ``norm_sq``.

    ``x``, ``y``, ``z`` refer to coordinates 1, 2, 3.
    """
    coords = {"x": 0, "y": 1, "z": 2}
    if name == "norm_sq":
        terms = {}
        for l in range(dim):
            terms.update(_coordinate_poly(dim, l, 2))
        return Polynomial(terms, dim, name=name)
    base, _, suffix = name.partition("_")
    if base in coords and suffix in ("", "sq") and coords[base] < dim:
        power = 2 if suffix == "sq" else 1
        return Polynomial(_coordinate_poly(dim, coords[base], power), dim, name=name)
    raise KeyError(f"unknown field {name!r} for dimension {dim}; known: {', '.join(BUILTIN_FIELDS)}")


BUILTIN_FIELDS = ("x", "y", "z", "x_sq", "y_sq", "z_sq", "norm_sq")
