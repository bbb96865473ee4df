"""Initial solutions and greedy-insertion rebuilding.

The heavy lifting happens in the kernel backends; this module packs
solutions into flat arrays, calls the kernels, and re-checks contracts at
the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .core import ContractError, Instance, PartialSolution, Solution

# Sentinels for InsertionCandidate.route.
NEW_TOUR = -1
SKIP = -2


@dataclass(frozen=True)
class InsertionCandidate:
    """Cheapest feasible placement for one customer.

    route: index into solution.routes, or NEW_TOUR / SKIP.
    position: gap index within the route (0 = before the first customer);
        meaningless for the sentinels.
    delta_cost: objective change of applying the candidate.
    """

    route: int
    position: int
    delta_cost: float


def pack_solution(solution: Solution) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solution -> (nodes, starts, unvisited) CSR arrays for the kernels."""
    flat: List[int] = []
    starts = [0]
    for route in solution.routes:
        flat.extend(route)
        starts.append(len(flat))
    return (
        np.asarray(flat, dtype=np.int64),
        np.asarray(starts, dtype=np.int64),
        np.asarray(sorted(solution.unvisited), dtype=np.int64),
    )


def unpack_solution(nodes: np.ndarray, starts: np.ndarray,
                    unvisited: np.ndarray, cost: float) -> Solution:
    routes = [
        [int(c) for c in nodes[starts[r]:starts[r + 1]]]
        for r in range(len(starts) - 1)
    ]
    return Solution(routes, set(int(c) for c in unvisited), cost)


def initial_solution(instance: Instance) -> Solution:
    """One out-and-back tour per customer; everyone visited, all variants."""
    n = instance.n_customers
    p = instance.packed
    nodes = np.arange(1, n + 1, dtype=np.int64)
    starts = np.arange(0, n + 1, dtype=np.int64)
    cost = kernels.solution_cost(p.variant_code, p.xs, p.ys, p.prize, nodes, starts)
    return Solution([[c] for c in range(1, n + 1)], set(), cost)


def best_insertion(instance: Instance, solution: Solution,
                   customer: int) -> Optional[InsertionCandidate]:
    """Cheapest feasible gap for `customer` over all existing routes.

    Ties go to the lowest (route index, position). None iff no route has a
    feasible gap.
    """
    n = instance.n_customers
    if not 1 <= customer <= n:
        raise ContractError(f"customer index out of range: {customer}")
    for route in solution.routes:
        if customer in route:
            raise ContractError(f"customer {customer} already routed")
    nodes, starts, unvisited = pack_solution(solution)
    p = instance.packed
    found, route, pos, delta = kernels.best_insertion(
        p.variant_code, p.xs, p.ys, p.demand, p.capacity,
        p.tw_open, p.tw_close, p.service, p.prize,
        nodes, starts, unvisited, customer,
    )
    if not found:
        return None
    return InsertionCandidate(route=route, position=pos, delta_cost=delta)


def greedy_insert(instance: Instance, partial: PartialSolution) -> Solution:
    """Reinsert partial.removed in order: cheapest feasible gap, else a new
    singleton tour; PCVRP leaves a customer unvisited when even the cheapest
    service option strictly exceeds its prize."""
    n = instance.n_customers
    seen = set()
    for c in partial.removed:
        if not 1 <= c <= n or c in seen:
            raise ContractError(f"invalid or duplicate removed customer: {c}")
        seen.add(c)
    if seen & partial.visited() or seen & partial.unvisited:
        raise ContractError("removed customers must not appear in the solution")

    nodes, starts, _ = pack_solution(partial)
    # The kernel treats the pending customers as flagged-unvisited, then
    # clears and reinserts them.
    pool = np.asarray(sorted(partial.unvisited | seen), dtype=np.int64)
    order = np.asarray(partial.removed, dtype=np.int64)
    p = instance.packed
    out = kernels.greedy_reconstruct(
        p.variant_code, p.xs, p.ys, p.demand, p.capacity,
        p.tw_open, p.tw_close, p.service, p.prize,
        nodes, starts, pool, order, order,
    )
    return unpack_solution(*out)


def rebuild(instance: Instance, solution: Solution,
            removal_order: Sequence[int]) -> Solution:
    """Remove the listed customers from `solution`, then greedily reinsert
    them in the given order. One kernel call; `solution` is not mutated."""
    nodes, starts, unvisited = pack_solution(solution)
    removal = np.asarray(list(removal_order), dtype=np.int64)
    p = instance.packed
    try:
        out = kernels.greedy_reconstruct(
            p.variant_code, p.xs, p.ys, p.demand, p.capacity,
            p.tw_open, p.tw_close, p.service, p.prize,
            nodes, starts, unvisited, removal, removal,
        )
    except ValueError as exc:
        raise ContractError(str(exc)) from exc
    return unpack_solution(*out)
