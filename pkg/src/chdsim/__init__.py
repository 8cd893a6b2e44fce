"""Adaptive finite element simulator for three-phase tumour growth.

A Cahn-Hilliard-Darcy system with an obstacle potential keeps the host,
proliferating and necrotic volume fractions on the Gibbs simplex; a diffusing
nutrient drives growth through configurable source terms.  The discrete scheme
uses lumped-mass P1 elements, a projected block Gauss-Seidel solver for the
phase variational inequality, and newest-vertex-bisection mesh adaptivity.
"""

__version__ = "0.1.0"
