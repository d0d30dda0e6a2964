"""Exact integration of constructible functions on p-adic cells."""

from .padic import INF, Coset, PAdicScalar, Prime, in_coset, scalar
from .expr import (
    ConstructibleExpr,
    eval_constructible,
    eval_dterm,
    parse_constructible,
    parse_dterm,
    print_constructible,
    print_dterm,
)

__version__ = "0.1.0"

__all__ = [
    "INF",
    "Coset",
    "PAdicScalar",
    "Prime",
    "in_coset",
    "scalar",
    "ConstructibleExpr",
    "eval_constructible",
    "eval_dterm",
    "parse_constructible",
    "parse_dterm",
    "print_constructible",
    "print_dterm",
    "__version__",
]
