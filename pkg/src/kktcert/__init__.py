"""Certify KKT points of smooth problems whose feasible set is convex but
whose defining functions need not be."""

__version__ = "0.1.0"

from .expr import ExprDomainError, ExprError, ExprSyntaxError, evaluate, gradient, parse, to_string
from .model import (
    GlobalOptimalityCertificate,
    Problem,
    ProblemFormatError,
    Tolerances,
    dumps,
    load_problem,
    loads,
    read_problem,
    validate,
)

__all__ = [
    "__version__",
    "ExprDomainError",
    "ExprError",
    "ExprSyntaxError",
    "GlobalOptimalityCertificate",
    "Problem",
    "ProblemFormatError",
    "Tolerances",
    "dumps",
    "evaluate",
    "gradient",
    "load_problem",
    "loads",
    "parse",
    "read_problem",
    "to_string",
    "validate",
]
