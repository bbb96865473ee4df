"""Pure-Python routing kernels: the fallback backend.

Semantics are shared bit-for-bit with the compiled backend in
``_speedups.pyx``: routes live in a linked-list over customer indices,
insertion scans every gap of every route in route order, and time-window
feasibility is decided by full forward re-simulation of the candidate route.
All distances are computed as sqrt(dx*dx + dy*dy) so both backends produce
identical floats.
"""

from __future__ import annotations

import math

import numpy as np

CVRP, VRPTW, PCVRP = 0, 1, 2
_INF = float("inf")


class _State:
    """Linked-list view of a packed solution, mutable during reconstruction."""

    __slots__ = (
        "xs", "ys", "demand", "capacity", "variant",
        "tw_open", "tw_close", "service", "prize",
        "nxt", "prv", "route_of", "in_route", "unvisited",
        "head", "tail", "load", "order", "n_slots",
    )

    def __init__(self, variant, xs, ys, demand, capacity, tw_open, tw_close,
                 service, prize, nodes, starts, unvisited):
        n = len(xs) - 1
        self.variant = variant
        self.xs, self.ys = xs, ys
        self.demand, self.capacity = demand, capacity
        self.tw_open, self.tw_close, self.service = tw_open, tw_close, service
        self.prize = prize
        self.nxt = [0] * (n + 1)
        self.prv = [0] * (n + 1)
        self.route_of = [-1] * (n + 1)
        self.in_route = [False] * (n + 1)
        self.unvisited = [False] * (n + 1)
        for c in unvisited:
            self.unvisited[c] = True
        n_routes = len(starts) - 1
        cap = n_routes + n + 1
        self.head = [0] * cap
        self.tail = [0] * cap
        self.load = [0.0] * cap
        self.order = []
        for r in range(n_routes):
            lo, hi = starts[r], starts[r + 1]
            load = 0.0
            prev = 0
            for k in range(lo, hi):
                c = int(nodes[k])
                self.in_route[c] = True
                self.route_of[c] = r
                self.prv[c] = prev
                if prev:
                    self.nxt[prev] = c
                else:
                    self.head[r] = c
                load += demand[c]
                prev = c
            self.nxt[prev] = 0
            self.tail[r] = prev
            self.load[r] = load
            self.order.append(r)
        self.n_slots = n_routes

    def dist(self, i, j):
        dx = self.xs[i] - self.xs[j]
        dy = self.ys[i] - self.ys[j]
        return math.sqrt(dx * dx + dy * dy)

    def unlink(self, c):
        if not self.in_route[c]:
            raise ValueError(f"customer {c} is not in any route")
        slot = self.route_of[c]
        p, q = self.prv[c], self.nxt[c]
        if p:
            self.nxt[p] = q
        else:
            self.head[slot] = q
        if q:
            self.prv[q] = p
        else:
            self.tail[slot] = p
        self.in_route[c] = False
        self.route_of[c] = -1
        self.load[slot] -= self.demand[c]
        if self.head[slot] == 0:
            self.order.remove(slot)

    def tw_ok_with(self, slot, c, after):
        """Forward-simulate the route with c inserted after node `after`
        (0 = before the head); True iff every window and the depot return
        time hold."""
        t = self.tw_open[0]
        prev = 0
        if after == 0:
            start = max(t + self.dist(0, c), self.tw_open[c])
            if start > self.tw_close[c]:
                return False
            t = start + self.service[c]
            prev = c
        u = self.head[slot]
        while u != 0:
            start = max(t + self.dist(prev, u), self.tw_open[u])
            if start > self.tw_close[u]:
                return False
            t = start + self.service[u]
            prev = u
            if u == after:
                start = max(t + self.dist(prev, c), self.tw_open[c])
                if start > self.tw_close[c]:
                    return False
                t = start + self.service[c]
                prev = c
            u = self.nxt[u]
        return t + self.dist(prev, 0) <= self.tw_close[0]

    def best_insertion(self, c):
        """Cheapest feasible gap over all routes; ties go to the lowest
        (route index, position). Returns (found, route_rank, position,
        after_node, delta)."""
        best_delta = _INF
        best = (0, -1, -1, -1, _INF)
        qc = self.demand[c]
        for rank, slot in enumerate(self.order):
            if self.load[slot] + qc > self.capacity:
                continue
            a = 0
            b = self.head[slot]
            pos = 0
            while True:
                delta = self.dist(a, c) + self.dist(c, b) - self.dist(a, b)
                if delta < best_delta and (
                    self.variant != VRPTW or self.tw_ok_with(slot, c, a)
                ):
                    best_delta = delta
                    best = (1, rank, pos, a, delta)
                if b == 0:
                    break
                a = b
                b = self.nxt[b]
                pos += 1
        return best

    def insert(self, c, slot, after):
        if after == 0:
            b = self.head[slot]
            self.head[slot] = c
            self.prv[c] = 0
        else:
            b = self.nxt[after]
            self.nxt[after] = c
            self.prv[c] = after
        self.nxt[c] = b
        if b:
            self.prv[b] = c
        else:
            self.tail[slot] = c
        self.in_route[c] = True
        self.route_of[c] = slot
        self.load[slot] += self.demand[c]

    def new_tour(self, c):
        # slots are never reused, so route order stays well-defined
        slot = self.n_slots
        self.n_slots += 1
        self.head[slot] = c
        self.tail[slot] = c
        self.nxt[c] = 0
        self.prv[c] = 0
        self.in_route[c] = True
        self.route_of[c] = slot
        self.load[slot] = self.demand[c]
        self.order.append(slot)

    def emit(self):
        nodes = []
        starts = [0]
        for slot in self.order:
            u = self.head[slot]
            while u != 0:
                nodes.append(u)
                u = self.nxt[u]
            starts.append(len(nodes))
        unvisited = [c for c in range(1, len(self.xs)) if self.unvisited[c]]
        return (
            np.asarray(nodes, dtype=np.int64),
            np.asarray(starts, dtype=np.int64),
            np.asarray(unvisited, dtype=np.int64),
            self.total_cost(),
        )

    def total_cost(self):
        cost = 0.0
        for slot in self.order:
            u = self.head[slot]
            prev = 0
            while u != 0:
                cost += self.dist(prev, u)
                if self.variant == PCVRP:
                    cost -= self.prize[u]
                prev = u
                u = self.nxt[u]
            cost += self.dist(prev, 0)
        return cost


def _state(variant, xs, ys, demand, capacity, tw_open, tw_close, service,
           prize, nodes, starts, unvisited):
    return _State(variant, xs, ys, demand, capacity, tw_open, tw_close,
                  service, prize, nodes, starts, unvisited)


def solution_cost(variant, xs, ys, prize, nodes, starts):
    """Exact objective of a packed solution."""
    cost = 0.0
    for r in range(len(starts) - 1):
        prev = 0
        for k in range(starts[r], starts[r + 1]):
            c = int(nodes[k])
            dx = xs[prev] - xs[c]
            dy = ys[prev] - ys[c]
            cost += math.sqrt(dx * dx + dy * dy)
            if variant == PCVRP:
                cost -= prize[c]
            prev = c
        dx = xs[prev] - xs[0]
        dy = ys[prev] - ys[0]
        cost += math.sqrt(dx * dx + dy * dy)
    return cost


def best_insertion(variant, xs, ys, demand, capacity, tw_open, tw_close,
                   service, prize, nodes, starts, unvisited, customer):
    """Scan every gap of every route for `customer`.

    Returns (found, route_index, position, delta); found == 0 when no
    feasible gap exists in any existing route.
    """
    st = _state(variant, xs, ys, demand, capacity, tw_open, tw_close,
                service, prize, nodes, starts, unvisited)
    if st.in_route[customer]:
        raise ValueError(f"customer {customer} already routed")
    found, rank, pos, _after, delta = st.best_insertion(customer)
    return int(found), int(rank), int(pos), float(delta)


def greedy_reconstruct(variant, xs, ys, demand, capacity, tw_open, tw_close,
                       service, prize, nodes, starts, unvisited, removal, order):
    """Remove `removal` from the packed solution, then reinsert following
    `order` (a permutation of `removal`): cheapest feasible gap, else a new
    singleton tour; PCVRP leaves a customer unvisited when even its cheapest
    service cost strictly exceeds its prize.

    Returns (nodes, starts, unvisited, cost) with the cost recomputed
    exactly from the final routes.
    """
    st = _state(variant, xs, ys, demand, capacity, tw_open, tw_close,
                service, prize, nodes, starts, unvisited)
    pending = [False] * len(xs)
    for c in removal:
        c = int(c)
        if pending[c]:
            raise ValueError(f"duplicate customer {c} in removal")
        if st.in_route[c]:
            st.unlink(c)
        elif st.unvisited[c]:
            st.unvisited[c] = False
        else:
            raise ValueError(f"customer {c} is neither routed nor unvisited")
        pending[c] = True

    for c in order:
        c = int(c)
        if not pending[c]:
            raise ValueError(f"insertion order contains customer {c} not in removal")
        pending[c] = False
        found, _rank, _pos, after, delta = st.best_insertion(c)
        slot = st.order[_rank] if found else -1
        if variant == PCVRP:
            new_cost = 2.0 * st.dist(0, c)
            cheapest = min(delta, new_cost) if found else new_cost
            if cheapest > st.prize[c]:
                st.unvisited[c] = True
                continue
        if found:
            st.insert(c, slot, after)
        else:
            st.new_tour(c)
    if any(pending):
        raise ValueError("insertion order does not cover the removal list")
    return st.emit()
