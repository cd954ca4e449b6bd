"""Concrete models: Heisenberg, Euclidean, and expression-defined charts."""
from .euclidean import EuclideanModel, euclidean_model
from .expr import (
    Expr,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    diff_expression,
    parse_expression,
    to_string,
)
from .heisenberg import (
    HeisenbergModel,
    heisenberg_flow_exact,
    heisenberg_model,
    heisenberg_spec_text,
    left_invariant_frame,
)
from .spec_file import (
    ExpressionModel,
    ModelSpec,
    ModelSpecError,
    ModelValidationError,
    load_model,
    load_model_file,
    parse_model_spec,
)
