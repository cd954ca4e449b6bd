"""Plain-text model definitions for user charts.

Format (UTF-8, one directive per line, ``#`` starts a comment)::

    name heisenberg
    dim 3
    rank 2
    beta 1 3 = -x2/2          # upper triangle, 1-based; omitted entries are 0
    g 3 3 = 1
    sample 0 0 0              # at least one; validation points

Variables are ``x1 .. xd``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import ManifoldModel, validate_compatibility
from .expr import ExpressionSyntaxError, Num, diff_expression, parse_expression, to_string


class ModelSpecError(ValueError):
    """Malformed model spec text."""

    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ModelValidationError(ValueError):
    """A loaded model failed its checks at a declared sample point."""

    def __init__(self, message, reports):
        super().__init__(message)
        self.reports = reports


@dataclass
class ModelSpec:
    dim: int
    rank: int
    beta: dict = field(default_factory=dict)  # (i, j) 0-based, i <= j -> Expr
    g: dict = field(default_factory=dict)
    name: str = "user_model"
    samples: list = field(default_factory=list)

    def to_text(self):
        lines = [f"name {self.name}", f"dim {self.dim}", f"rank {self.rank}"]
        for key, table in (("beta", self.beta), ("g", self.g)):
            for (i, j), e in sorted(table.items()):
                lines.append(f"{key} {i + 1} {j + 1} = {to_string(e)}")
        for s in self.samples:
            lines.append("sample " + " ".join(repr(float(c)) for c in s))
        return "\n".join(lines) + "\n"


_ENTRY = re.compile(r"^(beta|g)\s+(\d+)\s+(\d+)\s*=\s*(.+)$")


def parse_model_spec(text: str) -> ModelSpec:
    header = {}
    entries = []
    samples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _ENTRY.match(line)
        if m:
            entries.append((lineno, m.group(1), int(m.group(2)), int(m.group(3)), m.group(4)))
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key in ("name", "dim", "rank"):
            if key in header:
                raise ModelSpecError(f"duplicate {key!r}", lineno)
            if not rest:
                raise ModelSpecError(f"{key!r} needs a value", lineno)
            if key == "name":
                header[key] = rest
            else:
                try:
                    header[key] = int(rest)
                except ValueError:
                    raise ModelSpecError(f"{key!r} must be an integer, got {rest!r}", lineno) from None
        elif key == "sample":
            try:
                samples.append((lineno, [float(t) for t in rest.split()]))
            except ValueError:
                raise ModelSpecError(f"bad sample point {rest!r}", lineno) from None
        else:
            raise ModelSpecError(f"unrecognized directive {line!r}", lineno)

    for key in ("dim", "rank"):
        if key not in header:
            raise ModelSpecError(f"missing {key!r} header")
    d, m = header["dim"], header["rank"]
    if d < 1 or not 1 <= m <= d:
        raise ModelSpecError(f"need 1 <= rank <= dim, got dim={d}, rank={m}")
    if not samples:
        raise ModelSpecError("at least one 'sample' line is required")

    spec = ModelSpec(dim=d, rank=m, name=header.get("name", "user_model"))
    for lineno, pts in samples:
        if len(pts) != d:
            raise ModelSpecError(f"sample has {len(pts)} coordinates, expected {d}", lineno)
        spec.samples.append(pts)
    for lineno, kind, i, j, src in entries:
        if not (1 <= i <= d and 1 <= j <= d):
            raise ModelSpecError(f"index ({i}, {j}) out of range for dim {d}", lineno)
        if i > j:
            raise ModelSpecError(f"entries must be upper-triangular (i <= j), got ({i}, {j})", lineno)
        table = spec.beta if kind == "beta" else spec.g
        if (i - 1, j - 1) in table:
            raise ModelSpecError(f"duplicate {kind} entry ({i}, {j})", lineno)
        try:
            table[(i - 1, j - 1)] = parse_expression(src, d)
        except ExpressionSyntaxError as exc:
            raise ModelSpecError(f"{kind} {i} {j}: {exc}", lineno) from None
    return spec


def _symmetric_eval(table, d, q):
    q = np.asarray(q, dtype=float)
    M = np.zeros(q.shape[:-1] + (d, d))
    for (i, j), e in table.items():
        M[..., i, j] = M[..., j, i] = e.evaluate(q)
    return M


class ExpressionModel(ManifoldModel):
    """A model whose matrix entries are parsed expressions.

    Cometric derivatives are symbolic (``diff_expression``), hence analytic.
    """

    def __init__(self, spec: ModelSpec):
        super().__init__(dim=spec.dim, rank=spec.rank, name=spec.name)
        self.spec = spec
        self._dbeta = {}
        for (i, j), e in spec.beta.items():
            for l in range(spec.dim):
                de = diff_expression(e, l + 1)
                if not (isinstance(de, Num) and de.value == 0):
                    self._dbeta[(i, j, l)] = de

    def cometric(self, q):
        with np.errstate(all="ignore"):
            return _symmetric_eval(self.spec.beta, self.dim, q)

    def metric(self, q):
        with np.errstate(all="ignore"):
            return _symmetric_eval(self.spec.g, self.dim, q)

    def cometric_derivatives(self, q):
        q = np.asarray(q, dtype=float)
        d = self.dim
        dB = np.zeros(q.shape[:-1] + (d, d, d))
        with np.errstate(all="ignore"):
            for (i, j, l), e in self._dbeta.items():
                dB[..., i, j, l] = dB[..., j, i, l] = e.evaluate(q)
        return dB


def load_model(text: str, validate: bool = True, tol: float = 1e-9) -> ExpressionModel:
    """Build a model from spec text and check it at every declared sample point.

    Raises :class:`ModelSpecError` on malformed text and
    :class:`ModelValidationError` if symmetry, PSD/SPD, rank or
    compatibility fails at a sample point (unless ``validate=False``).
    """
    spec = parse_model_spec(text)
    model = ExpressionModel(spec)
    if validate:
        reports = [validate_compatibility(model, s, tol=tol) for s in spec.samples]
        failed = [r for r in reports if not r.passed]
        if failed:
            r = failed[0]
            raise ModelValidationError(
                f"model {spec.name!r} fails validation at sample {r.point.tolist()}: "
                f"rank {r.numerical_rank} (declared {r.declared_rank}), "
                f"compatibility residual {r.residual:.3e}, "
                f"metric eigenvalues {np.round(r.metric_eigenvalues, 6).tolist()}",
                reports,
            )
    return model


def load_model_file(path, validate: bool = True) -> ExpressionModel:
    return load_model(Path(path).read_text(encoding="utf-8"), validate=validate)
