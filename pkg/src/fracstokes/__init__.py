"""Time-fractional Stokes numerics: operators, weighted spaces and solvers."""

__version__ = "0.1.0"
