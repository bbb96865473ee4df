"""Test-time search.

One improvement step = one policy invocation producing K removal plans,
applied sequentially with greedy reconstruction (cheapest of R insertion
orders) under simulated-annealing acceptance. The outer loop runs A
replicas on distance-preserving instance views and exchanges solutions
through a temperature-scaled threshold.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .core import ContractError, Instance, Solution, evaluate
from .policy import NeuralPolicy, RandomPolicy, StringRemovalPolicy, load_policy
from .reconstruction import initial_solution, pack_solution, unpack_solution

TRACE_COLUMNS = ("iteration", "lambda", "best_cost", "mean_cost", "elapsed_seconds")


@dataclass(frozen=True)
class SearchConfig:
    max_iter: int = 1000
    augmentations: int = 8        # A; the prize-collecting default is 128
    rollouts: int = 200           # K
    reconstructions: int = 5      # R: 1 plan-order + R-1 random orders
    n_remove: int = 15            # M
    lambda_start: float = 0.1
    lambda_end: float = 0.001
    delta: float = 15.0
    time_limit: Optional[float] = None
    seed: int = 0
    policy: str = "heuristic"     # heuristic | random | neural
    checkpoint: Optional[str] = None
    plan_order_first: bool = True  # False: all R reconstruction orders random

    def __post_init__(self):
        if self.max_iter < 1 or self.augmentations < 1:
            raise ContractError("max_iter and augmentations must be >= 1")
        if self.reconstructions < 1 or self.rollouts < 0 or self.n_remove < 1:
            raise ContractError("bad rollout/reconstruction counts")
        if self.lambda_start < 0 or self.lambda_end < 0:
            raise ContractError("temperatures must be non-negative")
        if self.policy not in ("heuristic", "random", "neural"):
            raise ContractError(f"unknown policy {self.policy!r}")

    def decay(self) -> float:
        if self.lambda_start <= 0:
            return 0.0
        return (self.lambda_end / self.lambda_start) ** (1.0 / self.max_iter)

    def to_dict(self) -> dict:
        return {
            "max_iter": self.max_iter,
            "augmentations": self.augmentations,
            "rollouts": self.rollouts,
            "reconstructions": self.reconstructions,
            "n_remove": self.n_remove,
            "lambda_start": self.lambda_start,
            "lambda_end": self.lambda_end,
            "delta": self.delta,
            "time_limit": self.time_limit,
            "seed": self.seed,
            "policy": self.policy,
            "checkpoint": self.checkpoint,
            "plan_order_first": self.plan_order_first,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchConfig":
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ContractError(f"unknown search config keys: {sorted(unknown)}")
        return cls(**doc)


def build_policy(config: SearchConfig):
    if config.policy == "heuristic":
        return StringRemovalPolicy()
    if config.policy == "random":
        return RandomPolicy()
    if config.checkpoint is None:
        raise ContractError("neural policy requires a checkpoint path")
    store, model_config, _, _ = load_policy(config.checkpoint)
    return NeuralPolicy(store, model_config)


def sa_accept(cost_current: float, cost_candidate: float, lam: float,
              rng: np.random.Generator) -> bool:
    """Metropolis: improvements (and ties) always pass; a worsening of delta
    passes with probability exp(-delta/lambda)."""
    if lam < 0:
        raise ContractError("temperature must be non-negative")
    if cost_candidate <= cost_current:
        return True
    if lam == 0:
        return False
    return rng.random() < math.exp(-(cost_candidate - cost_current) / lam)


# The seven non-identity reflections/rotations of the unit square.
_DIHEDRAL = (
    lambda x, y: (y, x),
    lambda x, y: (1.0 - x, y),
    lambda x, y: (x, 1.0 - y),
    lambda x, y: (1.0 - x, 1.0 - y),
    lambda x, y: (y, 1.0 - x),
    lambda x, y: (1.0 - y, x),
    lambda x, y: (1.0 - y, 1.0 - x),
)


def create_augmentations(instance: Instance, a: int,
                         rng: np.random.Generator) -> List[Instance]:
    """A distance-preserving views: the original, then the dihedral maps,
    then random rotations about (0.5, 0.5) with optional reflection."""
    if a < 1:
        raise ContractError("need at least one augmentation")
    views = [instance]
    x = instance.coords[:, 0]
    y = instance.coords[:, 1]
    for i in range(1, a):
        if i < 8:
            nx, ny = _DIHEDRAL[i - 1](x, y)
        else:
            theta = rng.uniform(0.0, 2.0 * math.pi)
            sx, sy = x - 0.5, y - 0.5
            if rng.random() < 0.5:
                sy = -sy
            c, s = math.cos(theta), math.sin(theta)
            nx = c * sx - s * sy + 0.5
            ny = s * sx + c * sy + 0.5
        views.append(instance.with_coords(np.column_stack([nx, ny])))
    return views


def improvement_step(instance: Instance, solution: Solution, policy,
                     lam: float, k: int, r: int, m: int,
                     rng: np.random.Generator,
                     plan_order_first: bool = True) -> Tuple[Solution, Solution]:
    """K plans generated up front from `solution`, then applied one at a
    time: reconstruct R ways, keep the cheapest, SA-accept it. Returns
    (final solution, best solution seen during the step)."""
    if k == 0:
        return solution, solution
    evaluate(instance, solution)
    plans = policy.plans(instance, solution, m, k, rng)

    p = instance.packed
    nodes, starts, unv = pack_solution(solution)
    cost = solution.cached_cost
    best = (nodes, starts, unv, cost)
    for plan in plans:
        removal = np.asarray(plan.customers, dtype=np.int64)
        cand = None
        for j in range(r):
            if j == 0 and plan_order_first:
                order = removal
            else:
                order = rng.permutation(removal)
            out = kernels.greedy_reconstruct(
                p.variant_code, p.xs, p.ys, p.demand, p.capacity,
                p.tw_open, p.tw_close, p.service, p.prize,
                nodes, starts, unv, removal, order,
            )
            if cand is None or out[3] < cand[3]:
                cand = out
        if cand[3] < best[3]:
            best = cand
        if sa_accept(cost, cand[3], lam, rng):
            nodes, starts, unv, cost = cand
    return unpack_solution(nodes, starts, unv, cost), unpack_solution(*best)


@dataclass
class Replica:
    view: Instance
    solution: Solution
    rng: np.random.Generator

    @property
    def cost(self) -> float:
        return self.solution.cached_cost


def asa_search(instance: Instance, config: SearchConfig, policy=None
               ) -> Tuple[Solution, List[Tuple]]:
    """Augmented simulated annealing. Returns the best solution ever seen
    and a per-iteration trace (TRACE_COLUMNS rows)."""
    master = np.random.default_rng(config.seed)
    if policy is None:
        policy = build_policy(config)
    views = create_augmentations(instance, config.augmentations, master)
    replicas = [
        Replica(view=v, solution=initial_solution(v),
                rng=np.random.default_rng([config.seed, 1000 + i]))
        for i, v in enumerate(views)
    ]
    best = replicas[0].solution.copy()
    best_cost = best.cached_cost

    lam = config.lambda_start
    decay = config.decay()
    trace: List[Tuple] = []
    start = time.monotonic()
    for it in range(1, config.max_iter + 1):
        if config.time_limit is not None and time.monotonic() - start >= config.time_limit:
            break
        for rep in replicas:
            rep.solution, step_best = improvement_step(
                rep.view, rep.solution, policy, lam,
                config.rollouts, config.reconstructions, config.n_remove,
                rep.rng, plan_order_first=config.plan_order_first,
            )
            if step_best.cached_cost < best_cost:
                best = step_best.copy()
                best_cost = step_best.cached_cost

        costs = [rep.cost for rep in replicas]
        cost_star = min(costs)
        thresh = cost_star + lam * config.delta
        pool = [i for i, c in enumerate(costs) if c < thresh]
        if not pool:
            # lambda == 0 degenerates to "at the minimum"
            pool = [i for i, c in enumerate(costs) if c == cost_star]
        for i, c in enumerate(costs):
            if c > thresh:
                src = pool[int(master.integers(len(pool)))]
                replicas[i].solution = replicas[src].solution.copy()

        elapsed = time.monotonic() - start
        trace.append((it, lam, best_cost, float(np.mean(costs)), elapsed))
        lam *= decay
        if config.time_limit is not None and elapsed >= config.time_limit:
            break
    return best, trace


def write_trace(path: str, trace: Sequence[Tuple]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for row in trace:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
