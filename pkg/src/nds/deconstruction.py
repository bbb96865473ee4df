"""Non-learned deconstruction policies.

Two baselines: an adjacent-string destroyer (removes contiguous blocks from
routes near a random seed customer) and a uniform-random remover. Both draw
only from currently visited customers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .core import ContractError, Instance, Solution

L_MAX = 10  # longest string drawn from a single route


class PlanSource(enum.Enum):
    HEURISTIC = "heuristic"
    RANDOM = "random"
    NEURAL = "neural"


@dataclass(frozen=True)
class RemovalPlan:
    """An ordered list of distinct customers to remove."""

    customers: Tuple[int, ...]
    source: PlanSource

    def __post_init__(self):
        if len(set(self.customers)) != len(self.customers):
            raise ContractError("removal plan contains duplicates")


def _visited_sorted(solution: Solution) -> List[int]:
    out: List[int] = []
    for route in solution.routes:
        out.extend(route)
    out.sort()
    return out


def _check_m(m: int, visited_count: int) -> None:
    if m < 1:
        raise ContractError(f"M must be positive, got {m}")
    if m > visited_count:
        raise ContractError(
            f"cannot remove {m} customers from {visited_count} visited"
        )


def random_deconstruct(instance: Instance, solution: Solution, m: int,
                       rng: np.random.Generator) -> RemovalPlan:
    """M distinct visited customers, uniform without replacement, in uniform
    random order."""
    vlist = _visited_sorted(solution)
    _check_m(m, len(vlist))
    idx = rng.permutation(len(vlist))[:m]
    return RemovalPlan(tuple(int(vlist[i]) for i in idx), PlanSource.RANDOM)


def heuristic_deconstruct(instance: Instance, solution: Solution, m: int,
                          rng: np.random.Generator,
                          l_max: int = L_MAX) -> RemovalPlan:
    """String removal: walk customers by ascending distance from a random
    seed customer; the first time a route is encountered, remove a contiguous
    block around the encountered customer, block length uniform in
    [1, min(l_max, route length)]; stop at exactly M customers.

    If every route has been cut and fewer than M customers are collected,
    the existing blocks are extended round-robin (beyond l_max if needed) so
    the plan always has exactly M customers and each touched route still
    loses a single contiguous block.
    """
    vlist = _visited_sorted(solution)
    _check_m(m, len(vlist))

    route_of: Dict[int, int] = {}
    pos_of: Dict[int, int] = {}
    for r, route in enumerate(solution.routes):
        for k, c in enumerate(route):
            route_of[c] = r
            pos_of[c] = k

    varr = np.asarray(vlist, dtype=np.int64)
    c_star = int(varr[rng.integers(len(varr))])
    coords = instance.coords
    diff = coords[varr] - coords[c_star]
    dists = np.hypot(diff[:, 0], diff[:, 1])
    prox = varr[np.lexsort((varr, dists))]

    removed: List[int] = []
    # route -> [lo, hi] bounds of its removed block (positions in the route)
    blocks: Dict[int, List[int]] = {}
    ruined_order: List[int] = []

    def extend(r: int) -> bool:
        route = solution.routes[r]
        lo, hi = blocks[r]
        can_left = lo > 0
        can_right = hi < len(route) - 1
        if not (can_left or can_right):
            return False
        if can_left and can_right:
            go_left = bool(rng.integers(2) == 0)
        else:
            go_left = can_left
        if go_left:
            lo -= 1
            removed.append(route[lo])
        else:
            hi += 1
            removed.append(route[hi])
        blocks[r] = [lo, hi]
        return True

    for c in prox:
        if len(removed) >= m:
            break
        c = int(c)
        r = route_of[c]
        if r in blocks:
            continue
        route = solution.routes[r]
        length = int(rng.integers(1, min(l_max, len(route)) + 1))
        k = pos_of[c]
        blocks[r] = [k, k]
        ruined_order.append(r)
        removed.append(c)
        for _ in range(length - 1):
            if len(removed) >= m or not extend(r):
                break

    while len(removed) < m:
        progressed = False
        for r in ruined_order:
            if len(removed) >= m:
                break
            if extend(r):
                progressed = True
        if not progressed:
            break
    if len(removed) != m:
        raise ContractError("string removal failed to collect M customers")
    return RemovalPlan(tuple(removed), PlanSource.HEURISTIC)
