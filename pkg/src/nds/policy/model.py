"""The deconstruction policy network.

Encoder: separate depot/customer input projections, two self-attention
blocks, a message-passing layer over route neighbours, a tour-encoding
layer over route membership, then two more self-attention blocks.
Decoder: a GRU consumes the embedding of the previously removed customer
(a learned start token at step 1); its hidden state, the mean graph
embedding, and a projected binary seed vector form a query that one
multi-head cross-attention block refines; pointer logits are
clip·tanh(q·kᵀ/√d) with masked entries pushed to -1e9, which makes their
probabilities exact zeros in float64.

Two forward implementations share the same arithmetic: a batched raw-numpy
path for sampling (no gradients) and a taped path over nds.autodiff for
training. A consistency test holds them together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..core import ContractError, Instance, Solution, Variant
from .params import CheckpointError, ParamStore, load_checkpoint, save_checkpoint

EPS_NORM = 1e-5
PTR_CLIP = 10.0
MASK = -1e9

_FEATURE_DIM = {Variant.CVRP: 3, Variant.VRPTW: 6, Variant.PCVRP: 4}


@dataclass(frozen=True)
class ModelConfig:
    variant: Variant
    d_model: int = 128
    heads: int = 8
    ff: int = 512
    d_v: int = 10
    n_remove: int = 15
    use_mpl: bool = True
    use_tel: bool = True

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")

    @property
    def feature_dim(self) -> int:
        return _FEATURE_DIM[self.variant]

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.value,
            "d_model": self.d_model,
            "heads": self.heads,
            "ff": self.ff,
            "d_v": self.d_v,
            "n_remove": self.n_remove,
            "use_mpl": self.use_mpl,
            "use_tel": self.use_tel,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ModelConfig":
        base = ModelConfig(variant=Variant(str(doc["variant"]).upper()))
        unknown = set(doc) - set(base.to_dict())
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return ModelConfig(
            variant=base.variant,
            d_model=int(doc.get("d_model", base.d_model)),
            heads=int(doc.get("heads", base.heads)),
            ff=int(doc.get("ff", base.ff)),
            d_v=int(doc.get("d_v", base.d_v)),
            n_remove=int(doc.get("n_remove", base.n_remove)),
            use_mpl=bool(doc.get("use_mpl", base.use_mpl)),
            use_tel=bool(doc.get("use_tel", base.use_tel)),
        )


@dataclass(frozen=True)
class Rollout:
    """One sampled removal sequence with its log-probabilities."""

    actions: Tuple[int, ...]
    stepwise_logp: np.ndarray
    seed: np.ndarray
    total_logp: float


def build_views(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Named parameter views; the layout is a pure function of the config."""
    f = config.feature_dim
    d = config.d_model
    ff = config.ff
    views: List[Tuple[str, Tuple[int, ...]]] = [
        ("in_depot.w", (f, d)), ("in_depot.b", (d,)),
        ("in_cust.w", (f, d)), ("in_cust.b", (d,)),
    ]
    for i in range(4):
        p = f"enc{i}"
        views += [
            (f"{p}.attn.wq", (d, d)), (f"{p}.attn.wk", (d, d)),
            (f"{p}.attn.wv", (d, d)), (f"{p}.attn.wo", (d, d)),
            (f"{p}.norm1.g", (d,)), (f"{p}.norm1.b", (d,)),
            (f"{p}.ff.w1", (d, ff)), (f"{p}.ff.b1", (ff,)),
            (f"{p}.ff.w2", (ff, d)), (f"{p}.ff.b2", (d,)),
            (f"{p}.norm2.g", (d,)), (f"{p}.norm2.b", (d,)),
        ]
    for p in ("mpl", "tel"):
        if p == "mpl":
            views += [("mpl.w_prev", (d, d)), ("mpl.w_next", (d, d))]
        views += [
            (f"{p}.w_cat", (2 * d, d)),
            (f"{p}.ff.w1", (d, ff)), (f"{p}.ff.b1", (ff,)),
            (f"{p}.ff.w2", (ff, d)), (f"{p}.ff.b2", (d,)),
            (f"{p}.norm.g", (d,)), (f"{p}.norm.b", (d,)),
        ]
    views += [("dec.start", (d,))]
    for gate in ("r", "z", "n"):
        views += [
            (f"dec.gru.w_i{gate}", (d, d)), (f"dec.gru.b_i{gate}", (d,)),
            (f"dec.gru.w_h{gate}", (d, d)), (f"dec.gru.b_h{gate}", (d,)),
        ]
    views += [
        ("dec.seed.w", (config.d_v, d)),
        ("dec.ctx.w", (2 * d, d)), ("dec.ctx.b", (d,)),
        ("dec.attn.wq", (d, d)), ("dec.attn.wk", (d, d)),
        ("dec.attn.wv", (d, d)), ("dec.attn.wo", (d, d)),
        ("dec.ptr.w", (d, d)),
    ]
    return views


def init_params(config: ModelConfig, rng: np.random.Generator) -> ParamStore:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for matrices, zeros for
    biases, ones for norm gains."""
    store = ParamStore(build_views(config))
    for name in store.names:
        v = store.view(name)
        if v.ndim == 2:
            bound = 1.0 / math.sqrt(v.shape[0])
            v[:] = rng.uniform(-bound, bound, size=v.shape)
        elif name.endswith("norm.g") or name.endswith("norm1.g") or name.endswith("norm2.g"):
            v[:] = 1.0
        elif name == "dec.start":
            bound = 1.0 / math.sqrt(v.shape[0])
            v[:] = rng.uniform(-bound, bound, size=v.shape)
        else:
            v[:] = 0.0
    return store


# ---------------------------------------------------------------------------
# Features and solution topology


def build_features(instance: Instance, solution: Optional[Solution] = None) -> np.ndarray:
    """Static per-node feature rows: coords, normalized demand, then variant
    extras. Row 0 is the depot, zero-padded to customer width. The solution
    enters the network through the MPL/TEL topology, not the features."""
    n = instance.n_customers
    feats = np.zeros((n + 1, _FEATURE_DIM[instance.variant]), dtype=np.float64)
    feats[:, 0:2] = instance.coords
    feats[1:, 2] = instance.demand / instance.capacity
    if instance.variant is Variant.VRPTW:
        horizon = float(instance.tw_close[0])
        feats[1:, 3] = instance.tw_open[1:] / horizon
        feats[1:, 4] = instance.tw_close[1:] / horizon
        feats[1:, 5] = instance.service / horizon
    elif instance.variant is Variant.PCVRP:
        feats[1:, 3] = instance.prize / instance.prize.max()
    return feats


def _topology(solution: Solution, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Route neighbours and the tour-mean aggregation matrix.

    prev/next fall back to the depot (index 0) at route ends, for the depot
    itself, and for unvisited customers. Row i of the matrix averages the
    members of i's tour; the depot row averages the route means; unvisited
    customers aggregate only themselves.
    """
    prev = np.zeros(n + 1, dtype=np.int64)
    nxt = np.zeros(n + 1, dtype=np.int64)
    agg = np.zeros((n + 1, n + 1), dtype=np.float64)
    routes = solution.routes
    for route in routes:
        idx = np.asarray(route, dtype=np.int64)
        agg[np.ix_(idx, idx)] = 1.0 / len(route)
        for k, c in enumerate(route):
            prev[c] = route[k - 1] if k > 0 else 0
            nxt[c] = route[k + 1] if k + 1 < len(route) else 0
    if routes:
        for route in routes:
            agg[0, np.asarray(route, dtype=np.int64)] = 1.0 / (len(routes) * len(route))
    for c in solution.unvisited:
        agg[c, c] = 1.0
    return prev, nxt, agg


# ---------------------------------------------------------------------------
# Raw numpy forward path (sampling; no gradients)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _softmax_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax_np(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _norm_np(x, g, b):
    mu = x.mean(axis=0, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=0, keepdims=True)
    return xc / np.sqrt(var + EPS_NORM) * g + b


def _ff_np(x, w1, b1, w2, b2):
    return np.maximum(x @ w1 + b1, 0.0) @ w2 + b2


def _mha_np(x, wq, wk, wv, wo, heads):
    n, d = x.shape
    dk = d // heads
    q = (x @ wq).reshape(n, heads, dk).transpose(1, 0, 2)
    k = (x @ wk).reshape(n, heads, dk).transpose(1, 0, 2)
    v = (x @ wv).reshape(n, heads, dk).transpose(1, 0, 2)
    s = q @ k.swapaxes(-1, -2) / math.sqrt(dk)
    o = _softmax_np(s) @ v
    return o.transpose(1, 0, 2).reshape(n, d) @ wo


def encode(store: ParamStore, config: ModelConfig, features: np.ndarray,
           solution: Solution) -> np.ndarray:
    """Node embeddings, shape (N+1, d_model)."""
    v = store.view
    n = features.shape[0] - 1
    h = np.empty((n + 1, config.d_model), dtype=np.float64)
    h[0] = features[0] @ v("in_depot.w") + v("in_depot.b")
    h[1:] = features[1:] @ v("in_cust.w") + v("in_cust.b")

    def block(i, x):
        p = f"enc{i}"
        y = _norm_np(x + _mha_np(x, v(f"{p}.attn.wq"), v(f"{p}.attn.wk"),
                                 v(f"{p}.attn.wv"), v(f"{p}.attn.wo"),
                                 config.heads),
                     v(f"{p}.norm1.g"), v(f"{p}.norm1.b"))
        return _norm_np(y + _ff_np(y, v(f"{p}.ff.w1"), v(f"{p}.ff.b1"),
                                   v(f"{p}.ff.w2"), v(f"{p}.ff.b2")),
                        v(f"{p}.norm2.g"), v(f"{p}.norm2.b"))

    h = block(0, h)
    h = block(1, h)
    prev, nxt, agg = _topology(solution, n)
    if config.use_mpl:
        nb = h[prev] @ v("mpl.w_prev") + h[nxt] @ v("mpl.w_next")
        t = np.maximum(np.concatenate([h, nb], axis=1) @ v("mpl.w_cat"), 0.0)
        h = _norm_np(h + _ff_np(t, v("mpl.ff.w1"), v("mpl.ff.b1"),
                                v("mpl.ff.w2"), v("mpl.ff.b2")),
                     v("mpl.norm.g"), v("mpl.norm.b"))
    if config.use_tel:
        t = np.maximum(np.concatenate([h, agg @ h], axis=1) @ v("tel.w_cat"), 0.0)
        h = _norm_np(h + _ff_np(t, v("tel.ff.w1"), v("tel.ff.b1"),
                                v("tel.ff.w2"), v("tel.ff.b2")),
                     v("tel.norm.g"), v("tel.norm.b"))
    h = block(2, h)
    h = block(3, h)
    return h


def _gru_np(v, x, h):
    r = _sigmoid(x @ v("dec.gru.w_ir") + v("dec.gru.b_ir")
                 + h @ v("dec.gru.w_hr") + v("dec.gru.b_hr"))
    z = _sigmoid(x @ v("dec.gru.w_iz") + v("dec.gru.b_iz")
                 + h @ v("dec.gru.w_hz") + v("dec.gru.b_hz"))
    nn = np.tanh(x @ v("dec.gru.w_in") + v("dec.gru.b_in")
                 + r * (h @ v("dec.gru.w_hn") + v("dec.gru.b_hn")))
    return (1.0 - z) * nn + z * h


def _glimpse_np(v, heads, q0, emb):
    kk, d = q0.shape
    n1 = emb.shape[0]
    dk = d // heads
    q = (q0 @ v("dec.attn.wq")).reshape(kk, heads, dk).transpose(1, 0, 2)
    k = (emb @ v("dec.attn.wk")).reshape(n1, heads, dk).transpose(1, 0, 2)
    vv = (emb @ v("dec.attn.wv")).reshape(n1, heads, dk).transpose(1, 0, 2)
    s = q @ k.swapaxes(-1, -2) / math.sqrt(dk)
    o = _softmax_np(s) @ vv
    return o.transpose(1, 0, 2).reshape(kk, d) @ v("dec.attn.wo")


def _base_mask(config: ModelConfig, solution: Solution, n: int) -> np.ndarray:
    mask = np.zeros(n + 1, dtype=np.float64)
    mask[0] = MASK
    if config.variant is not Variant.PCVRP:
        # currently-unvisited customers are only selectable under PCVRP
        for c in solution.unvisited:
            mask[c] = MASK
    return mask


def _decode_np(store: ParamStore, config: ModelConfig, emb: np.ndarray,
               solution: Solution, m: int, kk: int,
               rng: Optional[np.random.Generator],
               forced: Optional[np.ndarray] = None,
               seeds: Optional[np.ndarray] = None):
    """Batched decoder. Samples when forced is None, otherwise scores the
    given (kk, m) action matrix. Returns (actions, stepwise_logp, seeds)."""
    v = store.view
    n = emb.shape[0] - 1
    d = config.d_model
    if seeds is None:
        seeds = (rng.random((kk, config.d_v)) < 0.5).astype(np.float64)
    seed_proj = seeds @ v("dec.seed.w")
    gmean = np.broadcast_to(emb.mean(axis=0), (kk, d))
    keys = emb @ v("dec.ptr.w")
    mask = np.broadcast_to(_base_mask(config, solution, n), (kk, n + 1)).copy()

    h = np.zeros((kk, d), dtype=np.float64)
    x = np.broadcast_to(v("dec.start"), (kk, d))
    actions = np.zeros((kk, m), dtype=np.int64)
    logps = np.zeros((kk, m), dtype=np.float64)
    rows = np.arange(kk)
    for step in range(m):
        h = _gru_np(v, x, h)
        q0 = np.concatenate([h, gmean], axis=1) @ v("dec.ctx.w") + v("dec.ctx.b") + seed_proj
        q = _glimpse_np(v, config.heads, q0, emb)
        logits = PTR_CLIP * np.tanh(q @ keys.T / math.sqrt(d)) + mask
        lp = _log_softmax_np(logits)
        if forced is None:
            p = np.exp(lp)
            cum = np.cumsum(p, axis=1)
            u = rng.random(kk) * cum[:, -1]
            chosen = np.array([
                int(np.searchsorted(cum[i], u[i], side="right")) for i in range(kk)
            ], dtype=np.int64)
        else:
            chosen = forced[:, step]
            if np.any(mask[rows, chosen] < 0):
                raise ContractError("rollout action is masked for this solution")
        actions[:, step] = chosen
        logps[:, step] = lp[rows, chosen]
        mask[rows, chosen] = MASK
        x = emb[chosen]
    return actions, logps, seeds


def decode_sample(store: ParamStore, config: ModelConfig, embeddings: np.ndarray,
                  solution: Solution, m: int, k: int,
                  rng: np.random.Generator) -> List[Rollout]:
    """K rollouts of M distinct customers each, conditioned on K fresh
    Bernoulli(0.5) seed vectors."""
    n = embeddings.shape[0] - 1
    selectable = n if config.variant is Variant.PCVRP else n - len(solution.unvisited)
    if not 1 <= m <= selectable:
        raise ContractError(f"cannot remove {m} of {selectable} selectable customers")
    actions, logps, seeds = _decode_np(store, config, embeddings, solution, m, k, rng)
    return [
        Rollout(
            actions=tuple(int(a) for a in actions[i]),
            stepwise_logp=logps[i].copy(),
            seed=seeds[i].copy(),
            total_logp=float(logps[i].sum()),
        )
        for i in range(k)
    ]


def rollout_logp(store: ParamStore, config: ModelConfig, instance: Instance,
                 solution: Solution, rollout: Rollout) -> float:
    """Forward-only re-scoring of a rollout (fresh encode, no gradients)."""
    feats = build_features(instance, solution)
    emb = encode(store, config, feats, solution)
    forced = np.asarray(rollout.actions, dtype=np.int64).reshape(1, -1)
    _, logps, _ = _decode_np(store, config, emb, solution, forced.shape[1], 1,
                             None, forced=forced,
                             seeds=rollout.seed.reshape(1, -1))
    return float(logps.sum())


# ---------------------------------------------------------------------------
# Taped forward path (training gradients)


def _norm_t(x, g, b):
    mu = x.mean(axis=0, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=0, keepdims=True)
    return xc / (var + EPS_NORM).sqrt() * g + b


def _ff_t(x, w1, b1, w2, b2):
    return (x @ w1 + b1).relu() @ w2 + b2


def _mha_t(x, wq, wk, wv, wo, heads, n, d):
    dk = d // heads
    q = (x @ wq).reshape(n, heads, dk).transpose(1, 0, 2)
    k = (x @ wk).reshape(n, heads, dk).transpose(1, 0, 2)
    v = (x @ wv).reshape(n, heads, dk).transpose(1, 0, 2)
    s = q @ k.swapaxes(-1, -2) / math.sqrt(dk)
    o = ad.softmax(s, axis=-1) @ v
    return o.transpose(1, 0, 2).reshape(n, d) @ wo


def _encode_t(store: ParamStore, config: ModelConfig, leaf: Tensor,
              features: np.ndarray, solution: Solution) -> Tensor:
    tv = lambda name: store.tensor_view(leaf, name)
    n = features.shape[0] - 1
    d = config.d_model
    f0 = Tensor(features[0:1])
    fc = Tensor(features[1:])
    h = ad.concatenate([f0 @ tv("in_depot.w") + tv("in_depot.b"),
                        fc @ tv("in_cust.w") + tv("in_cust.b")], axis=0)

    def block(i, x):
        p = f"enc{i}"
        y = _norm_t(x + _mha_t(x, tv(f"{p}.attn.wq"), tv(f"{p}.attn.wk"),
                               tv(f"{p}.attn.wv"), tv(f"{p}.attn.wo"),
                               config.heads, n + 1, d),
                    tv(f"{p}.norm1.g"), tv(f"{p}.norm1.b"))
        return _norm_t(y + _ff_t(y, tv(f"{p}.ff.w1"), tv(f"{p}.ff.b1"),
                                 tv(f"{p}.ff.w2"), tv(f"{p}.ff.b2")),
                       tv(f"{p}.norm2.g"), tv(f"{p}.norm2.b"))

    h = block(0, h)
    h = block(1, h)
    prev, nxt, agg = _topology(solution, n)
    if config.use_mpl:
        nb = h[prev] @ tv("mpl.w_prev") + h[nxt] @ tv("mpl.w_next")
        t = (ad.concatenate([h, nb], axis=1) @ tv("mpl.w_cat")).relu()
        h = _norm_t(h + _ff_t(t, tv("mpl.ff.w1"), tv("mpl.ff.b1"),
                              tv("mpl.ff.w2"), tv("mpl.ff.b2")),
                    tv("mpl.norm.g"), tv("mpl.norm.b"))
    if config.use_tel:
        t = (ad.concatenate([h, Tensor(agg) @ h], axis=1) @ tv("tel.w_cat")).relu()
        h = _norm_t(h + _ff_t(t, tv("tel.ff.w1"), tv("tel.ff.b1"),
                              tv("tel.ff.w2"), tv("tel.ff.b2")),
                    tv("tel.norm.g"), tv("tel.norm.b"))
    h = block(2, h)
    h = block(3, h)
    return h


def _gru_t(tv, x, h):
    r = (x @ tv("dec.gru.w_ir") + tv("dec.gru.b_ir")
         + h @ tv("dec.gru.w_hr") + tv("dec.gru.b_hr")).sigmoid()
    z = (x @ tv("dec.gru.w_iz") + tv("dec.gru.b_iz")
         + h @ tv("dec.gru.w_hz") + tv("dec.gru.b_hz")).sigmoid()
    nn = (x @ tv("dec.gru.w_in") + tv("dec.gru.b_in")
          + r * (h @ tv("dec.gru.w_hn") + tv("dec.gru.b_hn"))).tanh()
    return (1.0 - z) * nn + z * h


def rollout_logp_and_grad(store: ParamStore, config: ModelConfig,
                          instance: Instance, solution: Solution,
                          rollout: Rollout, advantage: float
                          ) -> Tuple[float, np.ndarray]:
    """Recompute the full forward pass for the rollout's actions and seed;
    return its total log-probability and advantage * d(logp)/d(params) as a
    flat vector aligned with the store."""
    feats = build_features(instance, solution)
    leaf = store.leaf()
    tv = lambda name: store.tensor_view(leaf, name)
    emb = _encode_t(store, config, leaf, feats, solution)

    n = feats.shape[0] - 1
    d = config.d_model
    heads = config.heads
    seed = Tensor(rollout.seed.reshape(1, -1))
    seed_proj = seed @ tv("dec.seed.w")
    gmean = emb.mean(axis=0, keepdims=True)
    keys = emb @ tv("dec.ptr.w")
    mask = _base_mask(config, solution, n)

    h = Tensor(np.zeros((1, d)))
    x = tv("dec.start").reshape(1, d)
    total = None
    for a in rollout.actions:
        if not 1 <= a <= n or mask[a] < 0:
            raise ContractError(f"rollout action {a} is masked for this solution")
        h = _gru_t(tv, x, h)
        q0 = ad.concatenate([h, gmean], axis=1) @ tv("dec.ctx.w") + tv("dec.ctx.b") + seed_proj
        dk = d // heads
        qh = (q0 @ tv("dec.attn.wq")).reshape(1, heads, dk).transpose(1, 0, 2)
        kh = (emb @ tv("dec.attn.wk")).reshape(n + 1, heads, dk).transpose(1, 0, 2)
        vh = (emb @ tv("dec.attn.wv")).reshape(n + 1, heads, dk).transpose(1, 0, 2)
        s = qh @ kh.swapaxes(-1, -2) / math.sqrt(dk)
        q = (ad.softmax(s, axis=-1) @ vh).transpose(1, 0, 2).reshape(1, d) @ tv("dec.attn.wo")
        logits = (q @ keys.transpose(1, 0) / math.sqrt(d)).tanh() * PTR_CLIP + Tensor(mask.copy())
        lp = ad.log_softmax(logits, axis=-1)[(0, a)]
        total = lp if total is None else total + lp
        mask[a] = MASK
        x = emb[np.array([a])]

    assert total is not None
    logp = float(total.data)
    if advantage == 0.0:
        return logp, np.zeros(store.size, dtype=np.float64)
    total.backward(np.asarray(advantage, dtype=np.float64))
    assert leaf.grad is not None
    return logp, leaf.grad


# ---------------------------------------------------------------------------
# Checkpoint helpers


def save_policy(path: str, store: ParamStore, config: ModelConfig,
                arrays: Optional[Dict[str, np.ndarray]] = None,
                train_state: Optional[dict] = None) -> None:
    save_checkpoint(path, store, config.to_dict(), arrays, train_state)


def load_policy(path: str, expect: Optional[ModelConfig] = None):
    """Returns (store, config, arrays, train_state). Rejects checkpoints
    whose view manifest does not match their own config echo, or the
    caller's expected config."""
    store, cfg_dict, arrays, train_state = load_checkpoint(path)
    try:
        config = ModelConfig.from_dict(cfg_dict)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"bad config echo in checkpoint: {exc}") from exc
    if store.view_manifest() != build_views(config):
        raise CheckpointError("checkpoint views do not match its config echo")
    if expect is not None and build_views(expect) != store.view_manifest():
        raise CheckpointError(
            f"checkpoint shape mismatch: holds {config.variant.value}"
            f"/d={config.d_model}, expected {expect.variant.value}/d={expect.d_model}"
        )
    return store, config, arrays, train_state
