"""Recursive time-convolutionless master equations for open quantum systems.

Symbolic generation of the generator expansion (and its adjoint), numerical
evaluation of the truncated generator on finite-dimensional models, state and
observable propagation, and exact full-Hilbert-space benchmarks.
"""

from tclgen.terms import (
    ADJOINT,
    DIAGRAM_ASCII,
    LATEX,
    MINUS,
    OPERATOR_TEXT,
    PLUS,
    RECURSIVE_PM,
    RECURSIVE_V,
    SCHRODINGER,
    VANKAMPEN,
    ClusteredTerm,
    TermPolynomial,
    VKTerm,
    count_terms,
    diagram_generator_terms,
    generator_terms,
    inverse_map_terms,
    momentum_derivative_terms,
    momentum_terms,
    parse_term,
    render_term,
    vankampen_terms,
)

__all__ = [
    "ADJOINT", "DIAGRAM_ASCII", "LATEX", "MINUS", "OPERATOR_TEXT", "PLUS",
    "RECURSIVE_PM", "RECURSIVE_V", "SCHRODINGER", "VANKAMPEN",
    "ClusteredTerm", "TermPolynomial", "VKTerm", "count_terms",
    "diagram_generator_terms", "generator_terms", "inverse_map_terms",
    "momentum_derivative_terms", "momentum_terms", "parse_term",
    "render_term", "vankampen_terms",
]

__version__ = "0.1.0"
