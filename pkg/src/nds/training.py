"""Policy-gradient training for the neural removal policy.

One training instance = J gradient-free warm-up improvement steps, then I
iterations of: sample K removal plans, reconstruct each in plan order,
reward = clipped objective improvement, accumulate the advantage-weighted
score gradient of the best rollout, move to its solution when it improves.
One Adam (ascent) update per instance.

Reproducibility: every stream (parameter init, instance generation, rollout
sampling, validation) is a pure function of (config seed, stream tag,
index), so resuming from a checkpoint replays the remaining instances
bit-for-bit without serializing generator state.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, fields as dataclass_fields, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .core import ContractError, Instance
from .instances import GeneratorSpec, generate
from .policy import (
    ModelConfig,
    ParamStore,
    build_features,
    decode_sample,
    encode,
    init_params,
    load_policy,
    rollout_logp_and_grad,
    save_policy,
)
from .reconstruction import initial_solution, pack_solution, unpack_solution

log = logging.getLogger("nds.training")

METRICS_COLUMNS = (
    "epoch", "instances_seen", "mean_reward", "mean_val_objective",
    "elapsed_seconds",
)

# Stream tags for derived seeds; changing these invalidates reproducibility
# of old runs, so they are frozen.
_TAG_INIT = 0
_TAG_TRAIN_INSTANCE = 1
_TAG_ROLLOUT = 2
_TAG_VAL_INSTANCE = 3
_TAG_VAL_RNG = 4


class TrainingError(RuntimeError):
    """Raised when the loop hits non-finite parameters or gradients."""


def derived_rng(base_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([base_seed, *key])


def _derived_seed(base_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence([base_seed, *key])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrainConfig:
    spec: GeneratorSpec             # training distribution; spec.seed is the stream base
    model: ModelConfig
    epochs: int = 1
    instances_per_epoch: int = 100
    iterations: int = 100           # improvement iterations per instance
    rollouts: int = 128             # plans sampled per iteration
    warmup_steps: int = 10          # gradient-free steps before the first iteration
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_instances: int = 8
    val_steps: int = 3
    val_rollouts: int = 32
    checkpoint_every: int = 0       # epochs between checkpoints; 0 = final only
    seed: int = 0

    def __post_init__(self):
        if self.spec.variant is not self.model.variant:
            raise ContractError("generator and model variants differ")
        if self.epochs < 1 or self.instances_per_epoch < 1 or self.iterations < 1:
            raise ContractError("epochs, instances_per_epoch, iterations must be >= 1")
        if self.rollouts < 2:
            raise ContractError("need at least 2 rollouts for a mean baseline")
        if self.warmup_steps < 0 or self.val_instances < 0:
            raise ContractError("warmup_steps and val_instances must be >= 0")
        if self.learning_rate <= 0:
            raise ContractError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "model": self.model.to_dict(),
            "epochs": self.epochs,
            "instances_per_epoch": self.instances_per_epoch,
            "iterations": self.iterations,
            "rollouts": self.rollouts,
            "warmup_steps": self.warmup_steps,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "val_instances": self.val_instances,
            "val_steps": self.val_steps,
            "val_rollouts": self.val_rollouts,
            "checkpoint_every": self.checkpoint_every,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in dataclass_fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ContractError(f"unknown train config keys: {sorted(unknown)}")
        if "spec" not in doc or "model" not in doc:
            raise ContractError("train config needs 'spec' and 'model' sections")
        kw = dict(doc)
        kw["spec"] = GeneratorSpec.from_dict(doc["spec"])
        kw["model"] = ModelConfig.from_dict(doc["model"])
        return cls(**kw)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size))


def optimizer_step(params: np.ndarray, grad: np.ndarray, state: AdamState,
                   lr: float, beta1: float = 0.9, beta2: float = 0.999,
                   eps: float = 1e-8) -> None:
    """In-place Adam ascent. A zero gradient advances the step count but
    leaves the parameters untouched."""
    if grad.shape != params.shape:
        raise ContractError("gradient shape does not match parameters")
    state.t += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1 ** state.t)
    v_hat = state.v / (1.0 - beta2 ** state.t)
    params += lr * m_hat / (np.sqrt(v_hat) + eps)


def _reconstruct_plan(p, nodes, starts, unv, actions):
    removal = np.asarray(actions, dtype=np.int64)
    return kernels.greedy_reconstruct(
        p.variant_code, p.xs, p.ys, p.demand, p.capacity,
        p.tw_open, p.tw_close, p.service, p.prize,
        nodes, starts, unv, removal, removal,
    )


def _sample(store: ParamStore, mcfg: ModelConfig, instance: Instance,
            sol, k: int, rng: np.random.Generator):
    feats = build_features(instance, sol)
    emb = encode(store, mcfg, feats, sol)
    return decode_sample(store, mcfg, emb, sol, mcfg.n_remove, k, rng)


def train_one_instance(store: ParamStore, config: TrainConfig,
                       instance: Instance, rng: np.random.Generator
                       ) -> Tuple[np.ndarray, float, float]:
    """Returns (accumulated gradient, mean best-rollout reward, final cost)."""
    mcfg = config.model
    p = instance.packed
    s = initial_solution(instance)
    nodes, starts, unv = pack_solution(s)
    cost = s.cached_cost

    # greedy warm-up: accept any non-worsening rollout, no gradients
    for _ in range(config.warmup_steps):
        sol = unpack_solution(nodes, starts, unv, cost)
        for ro in _sample(store, mcfg, instance, sol, config.rollouts, rng):
            out = _reconstruct_plan(p, nodes, starts, unv, ro.actions)
            if out[3] <= cost:
                nodes, starts, unv, cost = out

    grad = np.zeros(store.size, dtype=np.float64)
    rewards = []
    for _ in range(config.iterations):
        sol = unpack_solution(nodes, starts, unv, cost)
        rollouts = _sample(store, mcfg, instance, sol, config.rollouts, rng)
        outs = []
        rs = np.empty(len(rollouts), dtype=np.float64)
        for j, ro in enumerate(rollouts):
            out = _reconstruct_plan(p, nodes, starts, unv, ro.actions)
            outs.append(out)
            rs[j] = max(cost - out[3], 0.0)
        baseline = float(rs.mean())
        k_star = int(np.argmax(rs))             # lowest index wins ties
        advantage = float(rs[k_star]) - baseline
        _, g = rollout_logp_and_grad(store, mcfg, instance, sol,
                                     rollouts[k_star], advantage)
        grad += g
        rewards.append(float(rs[k_star]))
        if rs[k_star] > 0.0:
            nodes, starts, unv, cost = outs[k_star]
    return grad, float(np.mean(rewards)), cost


def validate_policy(store: ParamStore, config: TrainConfig,
                    val_set: Sequence[Instance], epoch: int) -> float:
    """Mean objective after val_steps greedy improvement steps per instance."""
    if not val_set:
        return float("nan")
    mcfg = config.model
    total = 0.0
    for j, inst in enumerate(val_set):
        rng = derived_rng(config.seed, _TAG_VAL_RNG, epoch, j)
        p = inst.packed
        s = initial_solution(inst)
        nodes, starts, unv = pack_solution(s)
        cost = s.cached_cost
        for _ in range(config.val_steps):
            sol = unpack_solution(nodes, starts, unv, cost)
            for ro in _sample(store, mcfg, inst, sol, config.val_rollouts, rng):
                out = _reconstruct_plan(p, nodes, starts, unv, ro.actions)
                if out[3] <= cost:
                    nodes, starts, unv, cost = out
        total += cost
    return total / len(val_set)


def _val_set(config: TrainConfig) -> List[Instance]:
    return [
        generate(replace(config.spec,
                         seed=_derived_seed(config.spec.seed, _TAG_VAL_INSTANCE, j)))
        for j in range(config.val_instances)
    ]


def training_instance(config: TrainConfig, index: int) -> Instance:
    """Instance `index` of the training stream (index is global, not
    per-epoch)."""
    seed = _derived_seed(config.spec.seed, _TAG_TRAIN_INSTANCE, index)
    return generate(replace(config.spec, seed=seed))


@dataclass
class TrainResult:
    store: ParamStore
    metrics: List[Tuple]
    checkpoint_path: Optional[str] = None


def _write_metrics(path: str, rows: Sequence[Tuple], append: bool) -> None:
    mode = "a" if append and os.path.exists(path) else "w"
    with open(path, mode) as fh:
        if mode == "w":
            fh.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _snapshot(out_dir: Optional[str], store, config, adam, idx, grad) -> Optional[str]:
    if out_dir is None:
        return None
    path = os.path.join(out_dir, "diagnostic.ckpt")
    save_policy(path, store, config.model,
                arrays={"adam_m": adam.m, "adam_v": adam.v, "last_grad": grad},
                train_state={"adam_t": adam.t, "failed_at_instance": idx})
    return path


def train(config: TrainConfig, out_dir: Optional[str] = None,
          resume: Optional[str] = None) -> TrainResult:
    """Run the full loop. With `resume`, pick up after the last completed
    instance recorded in the checkpoint; the result is bit-identical to a
    single uninterrupted run."""
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    if resume is not None:
        store, _, arrays, tstate = load_policy(resume, expect=config.model)
        if tstate is None or "next_instance" not in tstate:
            raise TrainingError("checkpoint has no training state to resume from")
        adam = AdamState(arrays["adam_m"].copy(), arrays["adam_v"].copy(),
                         int(tstate["adam_t"]))
        start = int(tstate["next_instance"])
    else:
        store = init_params(config.model, derived_rng(config.seed, _TAG_INIT))
        adam = AdamState.zeros(store.size)
        start = 0

    val_set = _val_set(config)
    total = config.epochs * config.instances_per_epoch
    metrics: List[Tuple] = []
    epoch_rewards: List[float] = []
    t0 = time.monotonic()

    def checkpoint(path: str, next_instance: int) -> None:
        save_policy(path, store, config.model,
                    arrays={"adam_m": adam.m, "adam_v": adam.v},
                    train_state={"adam_t": adam.t,
                                 "next_instance": next_instance,
                                 "config": config.to_dict()})

    for idx in range(start, total):
        inst = training_instance(config, idx)
        rng = derived_rng(config.seed, _TAG_ROLLOUT, idx)
        grad, mean_reward, final_cost = train_one_instance(store, config, inst, rng)
        if not np.isfinite(grad).all():
            snap = _snapshot(out_dir, store, config, adam, idx, grad)
            raise TrainingError(
                f"non-finite gradient on instance {idx}; snapshot: {snap}")
        optimizer_step(store.flat, grad, adam, config.learning_rate,
                       config.beta1, config.beta2, config.eps)
        if not np.isfinite(store.flat).all():
            snap = _snapshot(out_dir, store, config, adam, idx, grad)
            raise TrainingError(
                f"non-finite parameters after instance {idx}; snapshot: {snap}")
        epoch_rewards.append(mean_reward)
        log.debug("instance %d: mean reward %.6f final cost %.6f",
                  idx, mean_reward, final_cost)

        if (idx + 1) % config.instances_per_epoch == 0:
            epoch = (idx + 1) // config.instances_per_epoch
            val_obj = validate_policy(store, config, val_set, epoch)
            row = (epoch, idx + 1, float(np.mean(epoch_rewards)), val_obj,
                   time.monotonic() - t0)
            metrics.append(row)
            epoch_rewards = []
            log.info("epoch %d: mean reward %.6f, val objective %.6f",
                     epoch, row[2], val_obj)
            if out_dir is not None:
                _write_metrics(os.path.join(out_dir, "metrics.csv"), [row],
                               append=True)
                if config.checkpoint_every and epoch % config.checkpoint_every == 0:
                    checkpoint(os.path.join(out_dir, f"epoch_{epoch:04d}.ckpt"),
                               idx + 1)

    final_path = None
    if out_dir is not None:
        final_path = os.path.join(out_dir, "policy.ckpt")
        checkpoint(final_path, total)
    return TrainResult(store=store, metrics=metrics, checkpoint_path=final_path)
