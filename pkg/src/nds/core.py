"""Problem definitions, solution representation, objective evaluation and
feasibility checking for the CVRP, VRPTW and PCVRP variants."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Set

import numpy as np

INSTANCE_FORMAT_VERSION = 1
SOLUTION_FORMAT_VERSION = 1

# Full distance matrix is precomputed by default up to this many customers.
DEFAULT_MATRIX_LIMIT = 1000


class ContractError(ValueError):
    """A caller violated an operation precondition (signals a logic bug)."""


class Variant(enum.Enum):
    CVRP = "CVRP"
    VRPTW = "VRPTW"
    PCVRP = "PCVRP"


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Instance:
    """Immutable problem description.

    Index 0 is the depot; customers are 1..n_customers. `demand`, `service`
    and `prize` are customer-only arrays (length N); `coords`, `tw_open` and
    `tw_close` include the depot (length N+1).
    """

    variant: Variant
    coords: np.ndarray
    demand: np.ndarray
    capacity: float
    tw_open: Optional[np.ndarray] = None
    tw_close: Optional[np.ndarray] = None
    service: Optional[np.ndarray] = None
    prize: Optional[np.ndarray] = None
    id: str = ""
    precompute_matrix: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "coords", _readonly(np.asarray(self.coords)))
        object.__setattr__(self, "demand", _readonly(np.asarray(self.demand)))
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError("coords must be an (N+1, 2) array")
        n = self.coords.shape[0] - 1
        if n < 1:
            raise ValueError("instance needs at least one customer")
        if self.demand.shape != (n,):
            raise ValueError(f"demand must have length {n}")
        if np.any(self.demand <= 0) or np.any(self.demand > self.capacity):
            raise ValueError("demands must satisfy 0 < q_i <= capacity")

        if self.variant is Variant.VRPTW:
            for name in ("tw_open", "tw_close", "service"):
                if getattr(self, name) is None:
                    raise ValueError(f"VRPTW instance requires {name}")
            object.__setattr__(self, "tw_open", _readonly(self.tw_open))
            object.__setattr__(self, "tw_close", _readonly(self.tw_close))
            object.__setattr__(self, "service", _readonly(self.service))
            if self.tw_open.shape != (n + 1,) or self.tw_close.shape != (n + 1,):
                raise ValueError("time windows must cover depot plus customers")
            if self.service.shape != (n,):
                raise ValueError(f"service must have length {n}")
            if np.any(self.tw_open > self.tw_close):
                raise ValueError("time windows must satisfy a_i <= b_i")
            if self.tw_open[0] != 0.0:
                raise ValueError("depot window must open at 0")
            if np.any(self.service < 0):
                raise ValueError("service times must be non-negative")
        elif self.tw_open is not None or self.tw_close is not None or self.service is not None:
            raise ValueError(f"time-window fields are only valid for VRPTW, not {self.variant.value}")

        if self.variant is Variant.PCVRP:
            if self.prize is None:
                raise ValueError("PCVRP instance requires prizes")
            object.__setattr__(self, "prize", _readonly(self.prize))
            if self.prize.shape != (n,):
                raise ValueError(f"prize must have length {n}")
            if np.any(self.prize <= 0):
                raise ValueError("prizes must be positive")
        elif self.prize is not None:
            raise ValueError(f"prize field is only valid for PCVRP, not {self.variant.value}")

    @property
    def n_customers(self) -> int:
        return self.coords.shape[0] - 1

    @cached_property
    def _matrix(self) -> Optional[np.ndarray]:
        want = self.precompute_matrix
        if want is None:
            want = self.n_customers <= DEFAULT_MATRIX_LIMIT
        if not want:
            return None
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))

    def distance(self, i: int, j: int) -> float:
        """Euclidean distance between nodes i and j (0 = depot)."""
        n = self.n_customers
        if not (0 <= i <= n and 0 <= j <= n):
            raise ContractError(f"node index out of range: ({i}, {j}) with N={n}")
        m = self._matrix
        if m is not None:
            return float(m[i, j])
        dx = self.coords[i, 0] - self.coords[j, 0]
        dy = self.coords[i, 1] - self.coords[j, 1]
        return math.sqrt(dx * dx + dy * dy)

    # Packed per-node views used by the routing kernels; customer-only fields
    # are padded with a leading depot entry.
    @cached_property
    def packed(self) -> "PackedInstance":
        n = self.n_customers
        zeros = np.zeros(n + 1)
        demand_full = np.concatenate(([0.0], self.demand))
        if self.variant is Variant.VRPTW:
            service_full = np.concatenate(([0.0], self.service))
            tw_open, tw_close = self.tw_open, self.tw_close
        else:
            service_full, tw_open, tw_close = zeros, zeros, zeros
        prize_full = np.concatenate(([0.0], self.prize)) if self.variant is Variant.PCVRP else zeros
        return PackedInstance(
            variant_code={"CVRP": 0, "VRPTW": 1, "PCVRP": 2}[self.variant.value],
            xs=np.ascontiguousarray(self.coords[:, 0]),
            ys=np.ascontiguousarray(self.coords[:, 1]),
            demand=np.ascontiguousarray(demand_full),
            capacity=float(self.capacity),
            tw_open=np.ascontiguousarray(tw_open),
            tw_close=np.ascontiguousarray(tw_close),
            service=np.ascontiguousarray(service_full),
            prize=np.ascontiguousarray(prize_full),
        )

    def with_coords(self, coords: np.ndarray) -> "Instance":
        """Same instance under a different coordinate embedding."""
        return Instance(
            variant=self.variant,
            coords=coords,
            demand=self.demand,
            capacity=self.capacity,
            tw_open=self.tw_open,
            tw_close=self.tw_close,
            service=self.service,
            prize=self.prize,
            id=self.id,
            precompute_matrix=self.precompute_matrix,
        )


@dataclass(frozen=True)
class PackedInstance:
    """Flat per-node arrays consumed by the insertion kernels."""

    variant_code: int
    xs: np.ndarray
    ys: np.ndarray
    demand: np.ndarray
    capacity: float
    tw_open: np.ndarray
    tw_close: np.ndarray
    service: np.ndarray
    prize: np.ndarray


@dataclass
class Solution:
    """A set of routes over customer indices plus (PCVRP) an unvisited set."""

    routes: List[List[int]]
    unvisited: Set[int] = field(default_factory=set)
    cached_cost: Optional[float] = None

    def copy(self) -> "Solution":
        return Solution([r[:] for r in self.routes], set(self.unvisited), self.cached_cost)

    def visited(self) -> Set[int]:
        out: Set[int] = set()
        for r in self.routes:
            out.update(r)
        return out

    def customer_count(self) -> int:
        return sum(len(r) for r in self.routes) + len(self.unvisited)


@dataclass
class PartialSolution(Solution):
    """Solution with an ordered list of customers awaiting reinsertion."""

    removed: List[int] = field(default_factory=list)

    def copy(self) -> "PartialSolution":
        return PartialSolution(
            [r[:] for r in self.routes], set(self.unvisited), self.cached_cost, self.removed[:]
        )


class ViolationKind(enum.Enum):
    CAPACITY = "capacity"
    TIME_WINDOW = "time_window"
    DEPOT_RETURN = "depot_return"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    route: int
    node: int
    amount: float

    def __str__(self):
        return f"{self.kind.value} violated on route {self.route} at node {self.node} by {self.amount:.6g}"


def validate_solution(instance: Instance, solution: Solution) -> None:
    """Check the structural Solution invariants, raising ContractError."""
    seen: Set[int] = set()
    for r, route in enumerate(solution.routes):
        if not route:
            raise ContractError(f"route {r} is empty")
        for c in route:
            if not (1 <= c <= instance.n_customers):
                raise ContractError(f"customer {c} out of range")
            if c in seen:
                raise ContractError(f"customer {c} visited more than once")
            seen.add(c)
    overlap = seen & solution.unvisited
    if overlap:
        raise ContractError(f"customers both routed and unvisited: {sorted(overlap)[:5]}")
    if solution.unvisited and instance.variant is not Variant.PCVRP:
        raise ContractError("unvisited customers are only allowed for PCVRP")
    missing = set(range(1, instance.n_customers + 1)) - seen - solution.unvisited
    if missing:
        raise ContractError(f"customers missing from solution: {sorted(missing)[:5]}")


def route_cost(instance: Instance, route: Sequence[int]) -> float:
    """Travel cost of one route including both depot legs."""
    cost = instance.distance(0, route[0])
    for a, b in zip(route, route[1:]):
        cost += instance.distance(a, b)
    return cost + instance.distance(route[-1], 0)


def objective(instance: Instance, solution: Solution) -> float:
    """Total travel cost; for PCVRP, travel minus collected prizes
    (minimization form)."""
    total = sum(route_cost(instance, r) for r in solution.routes)
    if instance.variant is Variant.PCVRP:
        for r in solution.routes:
            for c in r:
                total -= instance.prize[c - 1]
    return total


def evaluate(instance: Instance, solution: Solution) -> float:
    """Recompute and cache the objective."""
    solution.cached_cost = objective(instance, solution)
    return solution.cached_cost


def check_feasibility(instance: Instance, solution: Solution) -> List[Violation]:
    """Report capacity and (VRPTW) time-window violations; empty = feasible.

    Time windows are checked by forward simulation: depart the depot at its
    opening time, wait at early arrivals, fail if service would start after
    the window closes or the vehicle returns after the depot closes.
    """
    violations: List[Violation] = []
    for r, route in enumerate(solution.routes):
        load = sum(instance.demand[c - 1] for c in route)
        if load > instance.capacity:
            violations.append(
                Violation(ViolationKind.CAPACITY, r, route[-1], load - instance.capacity)
            )
        if instance.variant is Variant.VRPTW:
            t = float(instance.tw_open[0])
            prev = 0
            for c in route:
                start = max(t + instance.distance(prev, c), float(instance.tw_open[c]))
                if start > instance.tw_close[c]:
                    violations.append(
                        Violation(ViolationKind.TIME_WINDOW, r, c, start - float(instance.tw_close[c]))
                    )
                t = start + instance.service[c - 1]
                prev = c
            back = t + instance.distance(prev, 0)
            if back > instance.tw_close[0]:
                violations.append(
                    Violation(ViolationKind.DEPOT_RETURN, r, 0, back - float(instance.tw_close[0]))
                )
    return violations


def remove_customers(solution: Solution, removal: Iterable[int]) -> PartialSolution:
    """Delete the listed customers from their routes (or, for PCVRP, from the
    unvisited set), splicing neighbours together; empty routes are dropped.

    The input order is preserved in `removed`. Duplicates or customers not
    present anywhere signal a policy masking bug and raise ContractError.
    """
    removal = list(removal)
    target = set(removal)
    if len(target) != len(removal):
        raise ContractError("duplicate customer in removal list")

    routes: List[List[int]] = []
    for route in solution.routes:
        kept = [c for c in route if c not in target]
        if kept:
            routes.append(kept)
    unvisited = set(solution.unvisited)
    found = solution.visited() & target
    for c in target - found:
        if c in unvisited:
            unvisited.discard(c)
            found.add(c)
    if found != target:
        raise ContractError(f"customers not present in solution: {sorted(target - found)[:5]}")
    return PartialSolution(routes=routes, unvisited=unvisited, cached_cost=None, removed=removal)


# ---------------------------------------------------------------------------
# JSON wire formats


def instance_to_dict(instance: Instance) -> dict:
    doc = {
        "format_version": INSTANCE_FORMAT_VERSION,
        "variant": instance.variant.value,
        "coords": [[float(x), float(y)] for x, y in instance.coords],
        "demand": [float(q) for q in instance.demand],
        "capacity": float(instance.capacity),
        "id": instance.id,
    }
    if instance.variant is Variant.VRPTW:
        doc["tw_open"] = [float(v) for v in instance.tw_open]
        doc["tw_close"] = [float(v) for v in instance.tw_close]
        doc["service"] = [float(v) for v in instance.service]
    if instance.variant is Variant.PCVRP:
        doc["prize"] = [float(v) for v in instance.prize]
    return doc


_INSTANCE_FIELDS = {
    "format_version", "variant", "coords", "demand", "capacity",
    "tw_open", "tw_close", "service", "prize", "id",
}


def instance_from_dict(doc: dict) -> Instance:
    unknown = set(doc) - _INSTANCE_FIELDS
    if unknown:
        raise ValueError(f"unknown instance fields: {sorted(unknown)}")
    version = doc.get("format_version")
    if version != INSTANCE_FORMAT_VERSION:
        raise ValueError(f"unsupported instance format_version: {version!r}")
    try:
        variant = Variant(doc["variant"])
    except (KeyError, ValueError):
        raise ValueError(f"invalid variant: {doc.get('variant')!r}") from None
    kwargs = dict(
        variant=variant,
        coords=np.asarray(doc["coords"], dtype=np.float64),
        demand=np.asarray(doc["demand"], dtype=np.float64),
        capacity=float(doc["capacity"]),
        id=str(doc.get("id", "")),
    )
    for name in ("tw_open", "tw_close", "service", "prize"):
        if name in doc:
            kwargs[name] = np.asarray(doc[name], dtype=np.float64)
    return Instance(**kwargs)


def solution_to_dict(solution: Solution, instance_id: str) -> dict:
    return {
        "format_version": SOLUTION_FORMAT_VERSION,
        "instance_id": instance_id,
        "routes": [[int(c) for c in r] for r in solution.routes],
        "unvisited": sorted(int(c) for c in solution.unvisited),
        "cost": float(solution.cached_cost) if solution.cached_cost is not None else None,
    }


_SOLUTION_FIELDS = {"format_version", "instance_id", "routes", "unvisited", "cost"}


def solution_from_dict(doc: dict, instance: Optional[Instance] = None) -> Solution:
    unknown = set(doc) - _SOLUTION_FIELDS
    if unknown:
        raise ValueError(f"unknown solution fields: {sorted(unknown)}")
    version = doc.get("format_version")
    if version != SOLUTION_FORMAT_VERSION:
        raise ValueError(f"unsupported solution format_version: {version!r}")
    solution = Solution(
        routes=[[int(c) for c in r] for r in doc["routes"]],
        unvisited=set(int(c) for c in doc.get("unvisited", [])),
        cached_cost=doc.get("cost"),
    )
    if instance is not None:
        validate_solution(instance, solution)
        if doc.get("instance_id") not in ("", instance.id):
            raise ValueError(
                f"solution is for instance {doc.get('instance_id')!r}, not {instance.id!r}"
            )
    return solution
