"""Lattice-kernel approximation of parametric elliptic PDEs.

Single-level and multilevel surrogates built from rank-1 lattice point sets,
a periodic product-weight kernel, and nested piecewise-linear finite elements
on the unit square, plus the convergence/cost studies that validate them.
"""

__version__ = "0.1.0"
