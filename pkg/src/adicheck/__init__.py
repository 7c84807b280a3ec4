"""
Quantitative checks of the quantum adiabatic approximation.

A scenario (Hamiltonian model, window [0, T], error budget epsilon) is
diagonalised along a time grid, the transition integrals and their bounds are
evaluated for every pair of levels, and the verdict is cross-checked against
exact propagation of the Schrodinger equation.
"""

from .conditions import evaluate_conditions
from .errors import AdicheckError
from .flow import build_flow, phase_ledger
from .models import constant, landau_zener, linear_interpolation, load_tabulated, rotating_spin
from .propagate import (adiabatic_prediction, adiabatic_state, deviation_metrics,
                        evolve_coefficients, evolve_exact)
from .report import run_scenario, sweep
from .scenario import load_scenario

__version__ = "0.1.0"

__all__ = [
    "AdicheckError", "adiabatic_prediction", "adiabatic_state", "build_flow", "constant",
    "deviation_metrics", "evaluate_conditions", "evolve_coefficients", "evolve_exact",
    "landau_zener", "linear_interpolation", "load_scenario", "load_tabulated", "phase_ledger",
    "rotating_spin", "run_scenario", "sweep",
]
