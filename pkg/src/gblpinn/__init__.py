"""Exact, WENO5 and two-subdomain PINN solvers for the generalized Buckley-Leverett Riemann problem."""

__version__ = "0.1.0"
