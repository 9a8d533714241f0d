"""Minimizers for the Lawrence-Doniach energy and its limit functional"""
import logging

from .descent import InitKind, initial_state, minimize_ld
from .limit import LimitProblem, minimize_limit, optimal_potential
from .options import HistoryRow, SolveOptions, SolveReport, StepRule

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    'InitKind', 'initial_state', 'minimize_ld',
    'LimitProblem', 'minimize_limit', 'optimal_potential',
    'HistoryRow', 'SolveOptions', 'SolveReport', 'StepRule',
]
