"""Deconstruction policies: the neural network plus thin wrappers giving
the handcrafted destroyers the same plans() interface the search loop
consumes. Each wrapper counts invocations (one invocation = one batch of K
plans conditioned on the same solution)."""

from typing import List

import numpy as np

from ..core import Instance, Solution
from ..deconstruction import (
    PlanSource,
    RemovalPlan,
    heuristic_deconstruct,
    random_deconstruct,
)
from .model import (
    ModelConfig,
    Rollout,
    build_features,
    build_views,
    decode_sample,
    encode,
    init_params,
    load_policy,
    rollout_logp,
    rollout_logp_and_grad,
    save_policy,
)
from .params import CheckpointError, ParamStore, load_checkpoint, save_checkpoint


class RandomPolicy:
    name = "random"

    def __init__(self):
        self.invocations = 0

    def plans(self, instance: Instance, solution: Solution, m: int, k: int,
              rng: np.random.Generator) -> List[RemovalPlan]:
        self.invocations += 1
        return [random_deconstruct(instance, solution, m, rng) for _ in range(k)]


class StringRemovalPolicy:
    name = "heuristic"

    def __init__(self):
        self.invocations = 0

    def plans(self, instance: Instance, solution: Solution, m: int, k: int,
              rng: np.random.Generator) -> List[RemovalPlan]:
        self.invocations += 1
        return [heuristic_deconstruct(instance, solution, m, rng) for _ in range(k)]


class NeuralPolicy:
    name = "neural"

    def __init__(self, store: ParamStore, config: ModelConfig):
        self.store = store
        self.config = config
        self.invocations = 0

    def plans(self, instance: Instance, solution: Solution, m: int, k: int,
              rng: np.random.Generator) -> List[RemovalPlan]:
        self.invocations += 1
        feats = build_features(instance, solution)
        emb = encode(self.store, self.config, feats, solution)
        rollouts = decode_sample(self.store, self.config, emb, solution, m, k, rng)
        return [RemovalPlan(r.actions, PlanSource.NEURAL) for r in rollouts]


__all__ = [
    "CheckpointError",
    "ModelConfig",
    "NeuralPolicy",
    "ParamStore",
    "RandomPolicy",
    "Rollout",
    "StringRemovalPolicy",
    "build_features",
    "build_views",
    "decode_sample",
    "encode",
    "init_params",
    "load_checkpoint",
    "load_policy",
    "rollout_logp",
    "rollout_logp_and_grad",
    "save_checkpoint",
    "save_policy",
]
