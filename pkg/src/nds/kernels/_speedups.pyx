# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled routing kernels. Semantics mirror ``reference.py`` exactly; the
linked-list layout and scan orders are kept identical so both backends
produce the same floats."""

from libc.math cimport sqrt, INFINITY

import numpy as np

ctypedef long long i64

cdef enum:
    K_CVRP = 0
    K_VRPTW = 1
    K_PCVRP = 2


cdef struct BestIns:
    int found
    Py_ssize_t rank
    Py_ssize_t pos
    i64 after
    double delta


cdef class _State:
    cdef const double[::1] xs, ys, demand, tw_open, tw_close, service, prize
    cdef double capacity
    cdef int variant
    cdef Py_ssize_t n
    cdef i64[::1] nxt, prv, route_of
    cdef signed char[::1] in_route, unvis
    cdef i64[::1] head, tail, order
    cdef double[::1] load
    cdef Py_ssize_t n_order, n_slots

    def __cinit__(self, int variant, const double[::1] xs, const double[::1] ys,
                  const double[::1] demand, double capacity,
                  const double[::1] tw_open, const double[::1] tw_close,
                  const double[::1] service, const double[::1] prize,
                  const i64[::1] nodes, const i64[::1] starts,
                  const i64[::1] unvisited):
        cdef Py_ssize_t n = xs.shape[0] - 1
        cdef Py_ssize_t n_routes = starts.shape[0] - 1
        cdef Py_ssize_t cap = n_routes + n + 1
        cdef Py_ssize_t r, k, c, prev
        cdef double load
        self.variant = variant
        self.n = n
        self.xs = xs; self.ys = ys
        self.demand = demand; self.capacity = capacity
        self.tw_open = tw_open; self.tw_close = tw_close
        self.service = service; self.prize = prize
        self.nxt = np.zeros(n + 1, dtype=np.int64)
        self.prv = np.zeros(n + 1, dtype=np.int64)
        self.route_of = np.full(n + 1, -1, dtype=np.int64)
        self.in_route = np.zeros(n + 1, dtype=np.int8)
        self.unvis = np.zeros(n + 1, dtype=np.int8)
        for k in range(unvisited.shape[0]):
            self.unvis[unvisited[k]] = 1
        self.head = np.zeros(cap, dtype=np.int64)
        self.tail = np.zeros(cap, dtype=np.int64)
        self.load = np.zeros(cap, dtype=np.float64)
        self.order = np.zeros(cap, dtype=np.int64)
        self.n_order = 0
        for r in range(n_routes):
            load = 0.0
            prev = 0
            for k in range(starts[r], starts[r + 1]):
                c = nodes[k]
                self.in_route[c] = 1
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
            self.order[self.n_order] = r
            self.n_order += 1
        self.n_slots = n_routes

    cdef inline double dist(self, Py_ssize_t i, Py_ssize_t j) nogil:
        cdef double dx = self.xs[i] - self.xs[j]
        cdef double dy = self.ys[i] - self.ys[j]
        return sqrt(dx * dx + dy * dy)

    cdef int unlink(self, Py_ssize_t c) except -1:
        cdef Py_ssize_t slot, p, q, k
        if not self.in_route[c]:
            raise ValueError(f"customer {c} is not in any route")
        slot = self.route_of[c]
        p = self.prv[c]
        q = self.nxt[c]
        if p:
            self.nxt[p] = q
        else:
            self.head[slot] = q
        if q:
            self.prv[q] = p
        else:
            self.tail[slot] = p
        self.in_route[c] = 0
        self.route_of[c] = -1
        self.load[slot] -= self.demand[c]
        if self.head[slot] == 0:
            for k in range(self.n_order):
                if self.order[k] == slot:
                    break
            for k in range(k, self.n_order - 1):
                self.order[k] = self.order[k + 1]
            self.n_order -= 1
        return 0

    cdef bint tw_ok_with(self, Py_ssize_t slot, Py_ssize_t c, Py_ssize_t after) nogil:
        cdef double t = self.tw_open[0]
        cdef double start
        cdef Py_ssize_t prev = 0, u
        if after == 0:
            start = t + self.dist(0, c)
            if start < self.tw_open[c]:
                start = self.tw_open[c]
            if start > self.tw_close[c]:
                return False
            t = start + self.service[c]
            prev = c
        u = self.head[slot]
        while u != 0:
            start = t + self.dist(prev, u)
            if start < self.tw_open[u]:
                start = self.tw_open[u]
            if start > self.tw_close[u]:
                return False
            t = start + self.service[u]
            prev = u
            if u == after:
                start = t + self.dist(prev, c)
                if start < self.tw_open[c]:
                    start = self.tw_open[c]
                if start > self.tw_close[c]:
                    return False
                t = start + self.service[c]
                prev = c
            u = self.nxt[u]
        return t + self.dist(prev, 0) <= self.tw_close[0]

    cdef BestIns best_insertion(self, Py_ssize_t c) nogil:
        cdef BestIns best
        cdef double qc = self.demand[c]
        cdef double delta
        cdef Py_ssize_t rank, slot, a, b, pos
        best.found = 0
        best.rank = -1
        best.pos = -1
        best.after = -1
        best.delta = INFINITY
        for rank in range(self.n_order):
            slot = self.order[rank]
            if self.load[slot] + qc > self.capacity:
                continue
            a = 0
            b = self.head[slot]
            pos = 0
            while True:
                delta = self.dist(a, c) + self.dist(c, b) - self.dist(a, b)
                if delta < best.delta and (
                    self.variant != K_VRPTW or self.tw_ok_with(slot, c, a)
                ):
                    best.found = 1
                    best.rank = rank
                    best.pos = pos
                    best.after = a
                    best.delta = delta
                if b == 0:
                    break
                a = b
                b = self.nxt[b]
                pos += 1
        return best

    cdef void insert(self, Py_ssize_t c, Py_ssize_t slot, Py_ssize_t after) nogil:
        cdef Py_ssize_t b
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
        self.in_route[c] = 1
        self.route_of[c] = slot
        self.load[slot] += self.demand[c]

    cdef void new_tour(self, Py_ssize_t c) nogil:
        cdef Py_ssize_t slot = self.n_slots
        self.n_slots += 1
        self.head[slot] = c
        self.tail[slot] = c
        self.nxt[c] = 0
        self.prv[c] = 0
        self.in_route[c] = 1
        self.route_of[c] = slot
        self.load[slot] = self.demand[c]
        self.order[self.n_order] = slot
        self.n_order += 1

    cdef double total_cost(self) nogil:
        cdef double cost = 0.0
        cdef Py_ssize_t k, slot, u, prev
        for k in range(self.n_order):
            slot = self.order[k]
            u = self.head[slot]
            prev = 0
            while u != 0:
                cost += self.dist(prev, u)
                if self.variant == K_PCVRP:
                    cost -= self.prize[u]
                prev = u
                u = self.nxt[u]
            cost += self.dist(prev, 0)
        return cost

    cdef emit(self):
        cdef Py_ssize_t total = 0, k, slot, u, w = 0
        for k in range(self.n_order):
            slot = self.order[k]
            u = self.head[slot]
            while u != 0:
                total += 1
                u = self.nxt[u]
        nodes = np.empty(total, dtype=np.int64)
        starts = np.empty(self.n_order + 1, dtype=np.int64)
        cdef i64[::1] nodes_v = nodes
        cdef i64[::1] starts_v = starts
        starts_v[0] = 0
        for k in range(self.n_order):
            slot = self.order[k]
            u = self.head[slot]
            while u != 0:
                nodes_v[w] = u
                w += 1
                u = self.nxt[u]
            starts_v[k + 1] = w
        unvis_list = [c for c in range(1, self.n + 1) if self.unvis[c]]
        unvisited = np.asarray(unvis_list, dtype=np.int64)
        return nodes, starts, unvisited, self.total_cost()


def solution_cost(int variant, const double[::1] xs, const double[::1] ys,
                  const double[::1] prize, const i64[::1] nodes,
                  const i64[::1] starts):
    """Exact objective of a packed solution."""
    cdef double cost = 0.0, dx, dy
    cdef Py_ssize_t r, k, c, prev
    for r in range(starts.shape[0] - 1):
        prev = 0
        for k in range(starts[r], starts[r + 1]):
            c = nodes[k]
            dx = xs[prev] - xs[c]
            dy = ys[prev] - ys[c]
            cost += sqrt(dx * dx + dy * dy)
            if variant == K_PCVRP:
                cost -= prize[c]
            prev = c
        dx = xs[prev] - xs[0]
        dy = ys[prev] - ys[0]
        cost += sqrt(dx * dx + dy * dy)
    return cost


def best_insertion(int variant, const double[::1] xs, const double[::1] ys,
                   const double[::1] demand, double capacity,
                   const double[::1] tw_open, const double[::1] tw_close,
                   const double[::1] service, const double[::1] prize,
                   const i64[::1] nodes, const i64[::1] starts,
                   const i64[::1] unvisited, Py_ssize_t customer):
    """Cheapest feasible gap for `customer` over all existing routes."""
    cdef _State st = _State(variant, xs, ys, demand, capacity, tw_open,
                            tw_close, service, prize, nodes, starts, unvisited)
    if st.in_route[customer]:
        raise ValueError(f"customer {customer} already routed")
    cdef BestIns best = st.best_insertion(customer)
    return int(best.found), int(best.rank), int(best.pos), float(best.delta)


def greedy_reconstruct(int variant, const double[::1] xs, const double[::1] ys,
                       const double[::1] demand, double capacity,
                       const double[::1] tw_open, const double[::1] tw_close,
                       const double[::1] service, const double[::1] prize,
                       const i64[::1] nodes, const i64[::1] starts,
                       const i64[::1] unvisited, const i64[::1] removal,
                       const i64[::1] order):
    """Remove then sequentially reinsert; see the reference backend for the
    full contract."""
    cdef _State st = _State(variant, xs, ys, demand, capacity, tw_open,
                            tw_close, service, prize, nodes, starts, unvisited)
    cdef Py_ssize_t n = xs.shape[0] - 1
    pending_arr = np.zeros(n + 1, dtype=np.int8)
    cdef signed char[::1] pending = pending_arr
    cdef Py_ssize_t k, c, slot
    cdef BestIns best
    cdef double new_cost, cheapest
    for k in range(removal.shape[0]):
        c = removal[k]
        if c < 1 or c > n or pending[c]:
            raise ValueError(f"duplicate or invalid customer {c} in removal")
        if st.in_route[c]:
            st.unlink(c)
        elif st.unvis[c]:
            st.unvis[c] = 0
        else:
            raise ValueError(f"customer {c} is neither routed nor unvisited")
        pending[c] = 1

    for k in range(order.shape[0]):
        c = order[k]
        if c < 1 or c > n or not pending[c]:
            raise ValueError(f"insertion order contains customer {c} not in removal")
        pending[c] = 0
        best = st.best_insertion(c)
        if variant == K_PCVRP:
            new_cost = 2.0 * st.dist(0, c)
            cheapest = min(best.delta, new_cost) if best.found else new_cost
            if cheapest > st.prize[c]:
                st.unvis[c] = 1
                continue
        if best.found:
            slot = st.order[best.rank]
            st.insert(c, slot, best.after)
        else:
            st.new_tour(c)
    for k in range(1, n + 1):
        if pending[k]:
            raise ValueError("insertion order does not cover the removal list")
    return st.emit()
