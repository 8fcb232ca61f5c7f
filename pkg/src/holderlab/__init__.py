"""Numerical laboratory for Holder stability of boundary-measurement
forward maps: piecewise-constant conductivity Neumann-to-Dirichlet and
plane-strain elasticity Dirichlet-to-Neumann at desk scale, with
Hilbert-Schmidt scalarization, finite scalar measurements, and
empirical exponent fitting."""

__version__ = "0.1.0"
