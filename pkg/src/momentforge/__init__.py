"""Lasserre moment relaxations on basic closed semialgebraic sets, with
brute-force ground truth and checks of the hypotheses behind exactness."""

__version__ = "0.1.0"

from .poly import Polynomial, PolySystem, parse_poly, parse_system
from .relax import Verdict, lasserre_value, sos_membership, support_value
from .sdp import SolverSettings, Status

__all__ = [
    "Polynomial",
    "PolySystem",
    "SolverSettings",
    "Status",
    "Verdict",
    "lasserre_value",
    "parse_poly",
    "parse_system",
    "sos_membership",
    "support_value",
]
