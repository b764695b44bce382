"""Symbolic-numeric engine for a Backlund chart of KdV-type equations."""

from .jets import (
    JetExpr,
    JetOrderError,
    NotExact,
    SubstitutionSet,
    UnresolvableJetError,
    ZeroDenominatorError,
    const,
    dinv,
    euler_derivative,
    frechet_derivative,
    integrate_exact,
    jet,
    normalize,
    param,
    schwarzian,
    substitute,
    time_derivative,
    to_text,
    total_derivative,
)

__all__ = [
    "JetExpr",
    "JetOrderError",
    "NotExact",
    "SubstitutionSet",
    "UnresolvableJetError",
    "ZeroDenominatorError",
    "const",
    "dinv",
    "euler_derivative",
    "frechet_derivative",
    "integrate_exact",
    "jet",
    "normalize",
    "param",
    "schwarzian",
    "substitute",
    "time_derivative",
    "to_text",
    "total_derivative",
]

__version__ = "0.1.0"
