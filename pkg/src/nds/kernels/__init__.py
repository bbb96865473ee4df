"""Routing kernels with a compiled core and a pure-Python fallback.

The compiled backend (`_speedups`, built from Cython) is preferred; the
pure backend (`reference`) implements the same contract with the same
float semantics. Set ``NDS_PURE_PYTHON=1`` to force the fallback, e.g.
for debugging or on platforms without a C compiler.
"""

import os

from . import reference

if os.environ.get("NDS_PURE_PYTHON", "") == "1":
    _impl = reference
    BACKEND = "pure"
else:
    try:
        from . import _speedups as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = reference
        BACKEND = "pure"

CVRP = reference.CVRP
VRPTW = reference.VRPTW
PCVRP = reference.PCVRP

solution_cost = _impl.solution_cost
best_insertion = _impl.best_insertion
greedy_reconstruct = _impl.greedy_reconstruct

__all__ = [
    "BACKEND",
    "CVRP",
    "VRPTW",
    "PCVRP",
    "best_insertion",
    "greedy_reconstruct",
    "reference",
    "solution_cost",
]
