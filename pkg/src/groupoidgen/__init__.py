"""Truncated generating functions of local symplectic groupoids from Kontsevich trees."""
from .genfunc import (GenFunc, build_genfunc, cbh_genfunc, constant_genfunc, convergence_radius,
                      eval_genfunc, grad_genfunc, hess_genfunc)
from .graphs import KGraph, enumerate_trees
from .poisson import MultiPoly, PoissonStructure
from .weights import WeightTable, compute_weight_table, weight_mc

__version__ = "0.1.0"
