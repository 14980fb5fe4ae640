"""Numerical laboratory for the two-curve Green's function of 2-SLE.

Subpackages cover the special-function layer, Loewner flow solvers, the
commuting two-curve ensemble and its martingale algebra, the time-curve
diffusion with its spectral transition density, closed-form Green's
function evaluators, Monte Carlo estimators, and a command-line interface.
"""
from .context import KappaContext

__all__ = ["KappaContext"]
__version__ = "0.1.0"
