"""Seeded instance generators for the three variants, plus file I/O.

All constants that the literature leaves open (capacity steps beyond
N=100, time-window widths, the prize law) are explicit fields of
GeneratorSpec so runs stay reproducible and tunable.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .core import (
    ContractError,
    Instance,
    Solution,
    instance_from_dict,
    instance_to_dict,
    solution_from_dict,
    solution_to_dict,
    Variant,
)


class FormatError(ValueError):
    """A file failed to parse or validate; message carries the byte offset
    when the underlying JSON decoder provides one."""


class LocationMode(enum.Enum):
    UNIFORM = "uniform"
    CLUSTERED = "clustered"
    MIXED = "mixed"


class CapacityProfile(enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


# Medium-profile capacity by instance size; 100/500/1000/2000 follow the
# usual benchmark conventions, the small sizes extend the series downward
# for desk-scale work.
_CAPACITY_STEPS = [(20, 30.0), (50, 40.0), (100, 50.0), (500, 125.0),
                   (1000, 200.0), (2000, 300.0)]
_PROFILE_SCALE = {
    CapacityProfile.LOW: 0.7,
    CapacityProfile.MEDIUM: 1.0,
    CapacityProfile.HIGH: 1.5,
}

CLUSTER_SIGMA = 0.04
CUSTOMERS_PER_CLUSTER = 50


@dataclass(frozen=True)
class TwProfile:
    horizon: float = 10.0
    service_frac: float = 0.02   # service time as a fraction of the horizon
    width_lo: float = 0.05       # window width ~ U[width_lo, width_hi] * horizon
    width_hi: float = 0.2


@dataclass(frozen=True)
class PrizeProfile:
    lo: float = 0.05             # prize_i = (q_i / mean q) * U[lo, hi]
    hi: float = 0.35


@dataclass(frozen=True)
class GeneratorSpec:
    variant: Variant
    n: int
    location: LocationMode = LocationMode.UNIFORM
    capacity: CapacityProfile = CapacityProfile.MEDIUM
    tw: TwProfile = field(default_factory=TwProfile)
    prize: PrizeProfile = field(default_factory=PrizeProfile)
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ContractError(f"need at least one customer, got n={self.n}")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "n": self.n,
            "location": self.location.value,
            "capacity": self.capacity.value,
            "tw": {"horizon": self.tw.horizon, "service_frac": self.tw.service_frac,
                   "width_lo": self.tw.width_lo, "width_hi": self.tw.width_hi},
            "prize": {"lo": self.prize.lo, "hi": self.prize.hi},
            "seed": int(self.seed),
        }

    @staticmethod
    def from_dict(doc: dict) -> "GeneratorSpec":
        return GeneratorSpec(
            variant=Variant(str(doc["variant"]).upper()),
            n=int(doc["n"]),
            location=LocationMode(doc.get("location", "uniform")),
            capacity=CapacityProfile(doc.get("capacity", "medium")),
            tw=TwProfile(**doc.get("tw", {})),
            prize=PrizeProfile(**doc.get("prize", {})),
            seed=int(doc.get("seed", 0)),
        )


def capacity_for(n: int, profile: CapacityProfile) -> float:
    for limit, cap in _CAPACITY_STEPS:
        if n <= limit:
            return float(round(cap * _PROFILE_SCALE[profile]))
    return float(round(_CAPACITY_STEPS[-1][1] * _PROFILE_SCALE[profile]))


def _locations(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    """Depot plus N customer coordinates in [0,1]^2. The rng draw order is
    fixed: depot, uniform pool, cluster centers, assignments, offsets,
    mixing flags, so seeds stay comparable across modes."""
    n = spec.n
    depot = rng.random(2)
    uniform_pts = rng.random((n, 2))
    if spec.location is LocationMode.UNIFORM:
        pts = uniform_pts
    else:
        n_clusters = math.ceil(n / CUSTOMERS_PER_CLUSTER)
        centers = rng.random((n_clusters, 2))
        assign = rng.integers(0, n_clusters, size=n)
        offsets = rng.normal(0.0, CLUSTER_SIGMA, size=(n, 2))
        clustered = np.clip(centers[assign] + offsets, 0.0, 1.0)
        if spec.location is LocationMode.CLUSTERED:
            pts = clustered
        else:
            take_uniform = rng.random(n) < 0.5
            pts = np.where(take_uniform[:, None], uniform_pts, clustered)
    return np.vstack([depot, pts])


def _demands(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(1, 10, size=n).astype(np.float64)


def _instance_id(spec: GeneratorSpec) -> str:
    return (f"{spec.variant.value.lower()}-n{spec.n}-{spec.location.value}"
            f"-{spec.capacity.value}-s{spec.seed}")


def gen_cvrp(spec: GeneratorSpec) -> Instance:
    if spec.variant is not Variant.CVRP:
        raise ContractError(f"spec variant is {spec.variant.value}, not CVRP")
    rng = np.random.default_rng(spec.seed)
    coords = _locations(spec, rng)
    demand = _demands(spec.n, rng)
    return Instance(
        variant=Variant.CVRP,
        coords=coords,
        demand=demand,
        capacity=capacity_for(spec.n, spec.capacity),
        id=_instance_id(spec),
    )


def gen_vrptw(spec: GeneratorSpec) -> Instance:
    """Windows are drawn around a feasible visit-start center, so every
    customer is individually servable out-and-back by construction."""
    if spec.variant is not Variant.VRPTW:
        raise ContractError(f"spec variant is {spec.variant.value}, not VRPTW")
    rng = np.random.default_rng(spec.seed)
    coords = _locations(spec, rng)
    demand = _demands(spec.n, rng)
    n = spec.n
    horizon = spec.tw.horizon
    service = np.full(n, spec.tw.service_frac * horizon)

    d0 = np.hypot(coords[1:, 0] - coords[0, 0], coords[1:, 1] - coords[0, 1])
    latest = horizon - d0 - service     # latest feasible visit start
    center = rng.uniform(d0, latest)
    width = rng.uniform(spec.tw.width_lo * horizon, spec.tw.width_hi * horizon, size=n)
    tw_open = np.maximum(d0, center - width / 2)
    tw_close = np.minimum(latest, center + width / 2)
    # the construction cannot produce an empty window; widen defensively
    bad = tw_open > tw_close
    if np.any(bad):
        tw_open[bad] = d0[bad]
        tw_close[bad] = latest[bad]

    return Instance(
        variant=Variant.VRPTW,
        coords=coords,
        demand=demand,
        capacity=capacity_for(spec.n, spec.capacity),
        tw_open=np.concatenate(([0.0], tw_open)),
        tw_close=np.concatenate(([horizon], tw_close)),
        service=service,
        id=_instance_id(spec),
    )


def gen_pcvrp(spec: GeneratorSpec) -> Instance:
    """Prizes scale with relative demand, sized so that a nontrivial share
    of customers is unprofitable at typical marginal insertion costs."""
    if spec.variant is not Variant.PCVRP:
        raise ContractError(f"spec variant is {spec.variant.value}, not PCVRP")
    rng = np.random.default_rng(spec.seed)
    coords = _locations(spec, rng)
    demand = _demands(spec.n, rng)
    prize = (demand / demand.mean()) * rng.uniform(spec.prize.lo, spec.prize.hi, size=spec.n)
    return Instance(
        variant=Variant.PCVRP,
        coords=coords,
        demand=demand,
        capacity=capacity_for(spec.n, spec.capacity),
        prize=prize,
        id=_instance_id(spec),
    )


_GENERATORS = {
    Variant.CVRP: gen_cvrp,
    Variant.VRPTW: gen_vrptw,
    Variant.PCVRP: gen_pcvrp,
}


def generate(spec: GeneratorSpec) -> Instance:
    return _GENERATORS[spec.variant](spec)


def derived_seed(base: int, index: int) -> int:
    """Independent per-index stream seed; pure function of (base, index)."""
    return int(np.random.SeedSequence([base, index]).generate_state(1, np.uint64)[0])


def generate_set(spec: GeneratorSpec, count: int, out_dir: str) -> List[str]:
    """Write `count` instances derived from spec.seed plus a manifest; returns
    the instance paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    entries = []
    for i in range(count):
        sub = replace(spec, seed=derived_seed(spec.seed, i))
        inst = generate(sub)
        path = os.path.join(out_dir, f"{inst.id}.json")
        save_instance(path, inst)
        paths.append(path)
        entries.append({"path": os.path.basename(path), "seed": sub.seed,
                        "spec": sub.to_dict()})
    manifest = {"base_seed": spec.seed, "count": count, "instances": entries}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


# ---------------------------------------------------------------------------
# File I/O


def _dump(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse(path: str) -> dict:
    with open(path, "r") as fh:
        text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: parse error at byte {exc.pos}: {exc.msg}") from exc


def save_instance(path: str, instance: Instance) -> None:
    _dump(path, instance_to_dict(instance))


def load_instance(path: str) -> Instance:
    doc = _parse(path)
    try:
        return instance_from_dict(doc)
    except (ContractError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_solution(path: str, solution: Solution, instance_id: str) -> None:
    _dump(path, solution_to_dict(solution, instance_id))


def load_solution(path: str, instance: Optional[Instance] = None) -> Tuple[Solution, str]:
    doc = _parse(path)
    try:
        solution = solution_from_dict(doc, instance)
    except (ContractError, ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return solution, str(doc.get("instance_id", ""))
