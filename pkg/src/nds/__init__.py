"""Neural deconstruction search workbench for vehicle routing.

Solutions are improved by repeatedly removing a set of customers
(deconstruction, by a learned or handcrafted policy) and reinserting them
greedily (reconstruction), driven by an augmented simulated-annealing
search. Includes desk-scale policy-gradient training.
"""

from .core import (
    ContractError,
    Instance,
    PartialSolution,
    Solution,
    Variant,
    check_feasibility,
    evaluate,
    objective,
    validate_solution,
)

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "Instance",
    "PartialSolution",
    "Solution",
    "Variant",
    "check_feasibility",
    "evaluate",
    "objective",
    "validate_solution",
    "__version__",
]
