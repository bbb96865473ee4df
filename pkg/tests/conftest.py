"""Shared helpers: independently coded oracles and random case builders.

The oracles deliberately avoid the package's vectorized/cached code paths:
plain Python loops, math.sqrt, explicit simulation. They are the ground
truth the fast implementations are checked against.
"""

import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest

from nds.core import Instance, Variant


def dist(instance: Instance, i: int, j: int) -> float:
    xi, yi = instance.coords[i]
    xj, yj = instance.coords[j]
    return math.sqrt((xi - xj) ** 2 + (yi - yj) ** 2)


def oracle_route_cost(instance: Instance, route: Sequence[int]) -> float:
    cost = 0.0
    prev = 0
    for c in route:
        cost += dist(instance, prev, c)
        prev = c
    return cost + dist(instance, prev, 0)


def oracle_objective(instance: Instance, routes: Sequence[Sequence[int]]) -> float:
    total = 0.0
    for route in routes:
        total += oracle_route_cost(instance, route)
        if instance.variant is Variant.PCVRP:
            for c in route:
                total -= float(instance.prize[c - 1])
    return total


def oracle_route_load_ok(instance: Instance, route: Sequence[int]) -> bool:
    return sum(float(instance.demand[c - 1]) for c in route) <= instance.capacity


def oracle_route_tw_ok(instance: Instance, route: Sequence[int]) -> bool:
    """Forward simulation: leave the depot at its opening, wait at early
    arrivals, fail on any late service start or a late depot return."""
    t = float(instance.tw_open[0])
    prev = 0
    for c in route:
        arrive = t + dist(instance, prev, c)
        start = max(arrive, float(instance.tw_open[c]))
        if start > float(instance.tw_close[c]):
            return False
        t = start + float(instance.service[c - 1])
        prev = c
    return t + dist(instance, prev, 0) <= float(instance.tw_close[0])


def oracle_violations(instance: Instance,
                      routes: Sequence[Sequence[int]]) -> set:
    """Set of (kind, route_index) verdicts mirroring check_feasibility."""
    found = set()
    for r, route in enumerate(routes):
        if not oracle_route_load_ok(instance, route):
            found.add(("capacity", r))
        if instance.variant is Variant.VRPTW and not oracle_route_tw_ok(instance, route):
            found.add(("time_window", r))
    return found


def oracle_best_insertion(instance: Instance,
                          routes: Sequence[Sequence[int]],
                          customer: int) -> Optional[Tuple[int, int, float]]:
    """Exhaustive scan of every gap in every route; returns the first
    strictly-cheapest feasible (route, position, delta) or None."""
    best = None
    q = float(instance.demand[customer - 1])
    for r, route in enumerate(routes):
        load = sum(float(instance.demand[c - 1]) for c in route)
        if load + q > instance.capacity:
            continue
        for pos in range(len(route) + 1):
            a = route[pos - 1] if pos > 0 else 0
            b = route[pos] if pos < len(route) else 0
            delta = (dist(instance, a, customer) + dist(instance, customer, b)
                     - dist(instance, a, b))
            if best is not None and delta >= best[2]:
                continue
            if instance.variant is Variant.VRPTW:
                trial = list(route[:pos]) + [customer] + list(route[pos:])
                if not oracle_route_tw_ok(instance, trial):
                    continue
            best = (r, pos, delta)
    return best


# ---------------------------------------------------------------------------
# random case builders


def random_instance(variant: Variant, n: int, rng: np.random.Generator) -> Instance:
    coords = rng.random((n + 1, 2))
    demand = rng.integers(1, 10, size=n).astype(np.float64)
    capacity = float(rng.integers(15, 40))
    if variant is Variant.CVRP:
        return Instance(variant=variant, coords=coords, demand=demand,
                        capacity=capacity)
    if variant is Variant.PCVRP:
        prize = rng.uniform(0.05, 0.6, size=n)
        return Instance(variant=variant, coords=coords, demand=demand,
                        capacity=capacity, prize=prize)
    horizon = 10.0
    service = np.full(n, 0.2)
    tw_open = np.zeros(n + 1)
    tw_close = np.zeros(n + 1)
    tw_close[0] = horizon
    for c in range(1, n + 1):
        d0 = dist_xy(coords[0], coords[c])
        center = rng.uniform(d0, horizon - d0 - 0.2)
        width = rng.uniform(1.0, 4.0)
        tw_open[c] = max(d0, center - width / 2)
        tw_close[c] = max(tw_open[c], min(horizon - d0 - 0.2, center + width / 2))
    return Instance(variant=variant, coords=coords, demand=demand,
                    capacity=capacity, tw_open=tw_open, tw_close=tw_close,
                    service=service)


def dist_xy(p, q) -> float:
    return math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2)


def random_routes(n: int, rng: np.random.Generator,
                  leave_out: bool = False) -> Tuple[List[List[int]], List[int]]:
    """Random partition of 1..n into routes; optionally withholds a random
    subset as unvisited."""
    customers = list(rng.permutation(np.arange(1, n + 1)))
    unvisited: List[int] = []
    if leave_out and n > 2:
        cut = int(rng.integers(0, n // 2))
        unvisited = sorted(int(c) for c in customers[:cut])
        customers = customers[cut:]
    routes: List[List[int]] = []
    i = 0
    while i < len(customers):
        size = int(rng.integers(1, 6))
        routes.append([int(c) for c in customers[i:i + size]])
        i += size
    return routes, unvisited


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)
