"""Command-line workbench: generate / train / solve / eval / ablate.

Every run writes one run_manifest.json with the resolved config, seed,
timestamps, artifact paths, and exit status; runs are deterministic given
(config, seed) up to timestamps. Exit codes: 0 success, 1 usage error
(bad flags, missing file, invalid config), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

from . import __version__, kernels
from .core import ContractError, Variant, check_feasibility, validate_solution
from .instances import (
    CapacityProfile,
    FormatError,
    GeneratorSpec,
    LocationMode,
    derived_seed,
    generate,
    generate_set,
    load_instance,
    save_solution,
)
from .policy import CheckpointError, NeuralPolicy, load_policy
from .search import SearchConfig, asa_search, build_policy, write_trace
from .training import TrainConfig, TrainingError, train, validate_policy, _val_set

log = logging.getLogger("nds.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; our convention reserves 2 for runtime
    def error(self, message):
        raise UsageError(message)


def _setup_logging() -> None:
    name = os.environ.get("NDS_LOG_LEVEL", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    if name not in levels:
        raise UsageError(f"NDS_LOG_LEVEL must be one of {sorted(levels)}, got {name!r}")
    logging.basicConfig(level=levels[name],
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: Optional[int]
    started_at: str
    finished_at: str = ""
    artifacts: List[str] = field(default_factory=list)
    exit_status: int = EXIT_OK

    def write(self, out_dir: str) -> str:
        self.finished_at = _now()
        path = os.path.join(out_dir, "run_manifest.json")
        # artifact paths are stored relative to the manifest so reruns into
        # a different directory stay byte-comparable
        rel = [os.path.relpath(a, out_dir) for a in self.artifacts]
        doc = {
            "subcommand": self.subcommand,
            "config": self.config,
            "seed": self.seed,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "artifacts": sorted(rel),
            "exit_status": self.exit_status,
            "version": __version__,
            "kernel_backend": kernels.BACKEND,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at byte {exc.pos}: {exc.msg}") from exc


def _instance_paths(args) -> List[str]:
    if args.instance:
        if not os.path.exists(args.instance):
            raise UsageError(f"instance file not found: {args.instance}")
        return [args.instance]
    if not args.instance_dir:
        raise UsageError("need --instance or --instance-dir")
    if not os.path.isdir(args.instance_dir):
        raise UsageError(f"not a directory: {args.instance_dir}")
    skip = ("manifest.json", "run_manifest.json")
    paths = sorted(
        p for p in glob.glob(os.path.join(args.instance_dir, "*.json"))
        if os.path.basename(p) not in skip
        and not p.endswith(".solution.json")
    )
    if not paths:
        raise UsageError(f"no instance files in {args.instance_dir}")
    return paths


# ---------------------------------------------------------------------------
# flag plumbing

_SEARCH_FLAGS = (
    # (flag dest, SearchConfig field)
    ("policy", "policy"),
    ("checkpoint", "checkpoint"),
    ("time_limit", "time_limit"),
    ("max_iter", "max_iter"),
    ("augmentations", "augmentations"),
    ("rollouts", "rollouts"),
    ("reconstructions", "reconstructions"),
    ("n_remove", "n_remove"),
    ("lambda_start", "lambda_start"),
    ("lambda_end", "lambda_end"),
    ("delta", "delta"),
    ("seed", "seed"),
)


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file mirroring SearchConfig; flags override")
    p.add_argument("--policy", choices=["neural", "heuristic", "random"])
    p.add_argument("--checkpoint", help="policy checkpoint (required for --policy neural)")
    p.add_argument("--time-limit", type=float, dest="time_limit",
                   help="wall seconds per instance")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--augmentations", type=int)
    p.add_argument("--rollouts", type=int)
    p.add_argument("--reconstructions", type=int)
    p.add_argument("--n-remove", type=int, dest="n_remove")
    p.add_argument("--lambda-start", type=float, dest="lambda_start")
    p.add_argument("--lambda-end", type=float, dest="lambda_end")
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)


def _search_config(args) -> SearchConfig:
    doc = _read_json(args.config) if args.config else {}
    for dest, name in _SEARCH_FLAGS:
        value = getattr(args, dest, None)
        if value is not None:
            doc[name] = value
    try:
        cfg = SearchConfig.from_dict(doc)
    except (ContractError, TypeError) as exc:
        raise UsageError(f"invalid search config: {exc}") from exc
    if cfg.policy == "neural" and cfg.checkpoint is None:
        raise UsageError("--policy neural requires --checkpoint")
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args, manifest: RunManifest) -> None:
    try:
        spec = GeneratorSpec(
            variant=Variant[args.variant.upper()],
            n=args.n,
            location=LocationMode(args.location),
            capacity=CapacityProfile(args.capacity),
            seed=args.seed,
        )
    except (KeyError, ValueError, ContractError) as exc:
        raise UsageError(f"invalid generator spec: {exc}") from exc
    manifest.config = {"spec": spec.to_dict(), "count": args.count}
    manifest.seed = args.seed
    paths = generate_set(spec, args.count, args.out_dir)
    manifest.artifacts += paths + [os.path.join(args.out_dir, "manifest.json")]
    print(f"wrote {len(paths)} instance(s) to {args.out_dir}")


def _solve_paths(path: str, out_dir: str, cfg: SearchConfig, policy=None
                 ) -> Tuple[str, float, float, str, str]:
    """Solve one instance file; returns (instance_id, objective, seconds,
    solution_path, trace_path)."""
    inst = load_instance(path)
    t0 = time.monotonic()
    best, trace = asa_search(inst, cfg, policy=policy)
    seconds = time.monotonic() - t0
    validate_solution(inst, best)
    violations = check_feasibility(inst, best)
    if violations:
        raise ContractError(f"{path}: infeasible result: {violations[0]}")
    stem = os.path.splitext(os.path.basename(path))[0]
    sol_path = os.path.join(out_dir, f"{stem}.solution.json")
    trace_path = os.path.join(out_dir, f"{stem}.trace.csv")
    save_solution(sol_path, best, inst.id)
    write_trace(trace_path, trace)
    return inst.id, best.cached_cost, seconds, sol_path, trace_path


def _solve_one_worker(payload) -> Tuple[str, float, float, str, str]:
    path, out_dir, doc = payload
    return _solve_paths(path, out_dir, SearchConfig.from_dict(doc))


def _run_batch(paths: List[str], out_dir: str, cfg: SearchConfig,
               workers: int) -> List[Tuple[str, float, float, str, str]]:
    """Per-instance seeds derive from (cfg.seed, position) so results do not
    depend on worker count or completion order."""
    jobs = [
        (p, out_dir, replace(cfg, seed=derived_seed(cfg.seed, i)).to_dict())
        for i, p in enumerate(paths)
    ]
    if workers <= 1:
        policy = build_policy(cfg)
        return [
            _solve_paths(p, out_dir, SearchConfig.from_dict(doc), policy=policy)
            for p, out_dir, doc in jobs
        ]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_one_worker, jobs))


def cmd_solve(args, manifest: RunManifest) -> None:
    cfg = _search_config(args)
    paths = _instance_paths(args)
    manifest.config = {"search": cfg.to_dict(), "instances": paths}
    manifest.seed = cfg.seed
    results = _run_batch(paths, args.out_dir, cfg, args.workers)
    for inst_id, obj, seconds, sol_path, trace_path in results:
        manifest.artifacts += [sol_path, trace_path]
        print(f"{inst_id}: objective {obj:.6f} in {seconds:.1f}s")


def _read_reference(path: str) -> Dict[str, float]:
    try:
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise UsageError(f"reference CSV not found: {path}") from exc
    ref = {}
    for row in rows:
        try:
            ref[row["instance_id"]] = float(row["objective"])
        except (KeyError, ValueError) as exc:
            raise UsageError(
                f"{path}: reference rows need instance_id and objective columns"
            ) from exc
    return ref


def cmd_eval(args, manifest: RunManifest) -> None:
    cfg = _search_config(args)
    paths = _instance_paths(args)
    ref = _read_reference(args.reference) if args.reference else {}
    manifest.config = {"search": cfg.to_dict(), "instances": paths,
                       "reference": args.reference}
    manifest.seed = cfg.seed
    results = _run_batch(paths, args.out_dir, cfg, args.workers)

    summary = os.path.join(args.out_dir, "summary.csv")
    gaps = []
    with open(summary, "w") as fh:
        fh.write("instance_id,objective,reference,gap,seconds\n")
        for inst_id, obj, seconds, sol_path, trace_path in results:
            manifest.artifacts += [sol_path, trace_path]
            if inst_id in ref:
                gap = (obj - ref[inst_id]) / ref[inst_id]
                gaps.append(gap)
                gap_s = f"{gap * 100.0:.6f}%"
                ref_s = repr(ref[inst_id])
            else:
                gap_s = ""
                ref_s = ""
            fh.write(f"{inst_id},{obj!r},{ref_s},{gap_s},{seconds:.3f}\n")
        objs = [r[1] for r in results]
        secs = [r[2] for r in results]
        mean_gap = f"{100.0 * sum(gaps) / len(gaps):.6f}%" if gaps else ""
        fh.write(f"mean,{sum(objs) / len(objs)!r},,{mean_gap},"
                 f"{sum(secs) / len(secs):.3f}\n")
    manifest.artifacts.append(summary)
    print(f"evaluated {len(results)} instance(s); summary: {summary}")


def _train_config(args) -> TrainConfig:
    doc = _read_json(args.config)
    for dest in ("epochs", "instances_per_epoch", "iterations", "rollouts",
                 "warmup_steps", "learning_rate", "seed"):
        value = getattr(args, dest, None)
        if value is not None:
            doc[dest] = value
    try:
        return TrainConfig.from_dict(doc)
    except (ContractError, FormatError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid train config: {exc}") from exc


def cmd_train(args, manifest: RunManifest) -> None:
    cfg = _train_config(args)
    manifest.config = cfg.to_dict()
    manifest.seed = cfg.seed
    result = train(cfg, out_dir=args.out_dir, resume=args.resume)
    manifest.artifacts.append(os.path.join(args.out_dir, "metrics.csv"))
    if result.checkpoint_path:
        manifest.artifacts.append(result.checkpoint_path)
    if result.metrics:
        last = result.metrics[-1]
        print(f"epoch {last[0]}: mean reward {last[2]:.6f}, "
              f"val objective {last[3]:.6f}")
    print(f"checkpoint: {result.checkpoint_path}")


def _write_ablation(out_dir: str, rows: List[Tuple[str, str, float, float]]) -> str:
    path = os.path.join(out_dir, "ablation.csv")
    with open(path, "w") as fh:
        fh.write("arm,instance_id,objective,seconds\n")
        for arm, inst_id, obj, seconds in rows:
            fh.write(f"{arm},{inst_id},{obj!r},{seconds:.3f}\n")
        arms = sorted({r[0] for r in rows})
        for arm in arms:
            sel = [r for r in rows if r[0] == arm]
            fh.write(f"{arm}/mean,,{sum(r[2] for r in sel) / len(sel)!r},"
                     f"{sum(r[3] for r in sel) / len(sel):.3f}\n")
    return path


def _ablate_search(args, manifest: RunManifest,
                   arms: List[Tuple[str, SearchConfig]]) -> None:
    paths = _instance_paths(args)
    manifest.config = {"arms": {name: c.to_dict() for name, c in arms},
                       "instances": paths}
    rows = []
    for name, cfg in arms:
        policy = build_policy(cfg)
        for i, path in enumerate(paths):
            per = replace(cfg, seed=derived_seed(cfg.seed, i))
            inst = load_instance(path)
            t0 = time.monotonic()
            best, _ = asa_search(inst, per, policy=policy)
            rows.append((name, inst.id, best.cached_cost, time.monotonic() - t0))
    path = _write_ablation(args.out_dir, rows)
    manifest.artifacts.append(path)
    print(f"ablation rows: {path}")


def cmd_ablate(args, manifest: RunManifest) -> None:
    if args.which == "arch":
        base = _train_config(args)
        arms = [
            ("base", base),
            ("no_mpl", replace(base, model=replace(base.model, use_mpl=False))),
            ("no_tel", replace(base, model=replace(base.model, use_tel=False))),
        ]
        manifest.config = {"arms": {n: c.to_dict() for n, c in arms}}
        manifest.seed = base.seed
        rows = []
        for name, cfg in arms:
            arm_dir = os.path.join(args.out_dir, name)
            t0 = time.monotonic()
            result = train(cfg, out_dir=arm_dir)
            val = validate_policy(result.store, cfg, _val_set(cfg), cfg.epochs + 1)
            rows.append((name, "validation", val, time.monotonic() - t0))
            manifest.artifacts.append(result.checkpoint_path)
        path = _write_ablation(args.out_dir, rows)
        manifest.artifacts.append(path)
        print(f"ablation rows: {path}")
        return

    cfg = _search_config(args)
    manifest.seed = cfg.seed
    if args.which == "order":
        arms = [("plan_order", replace(cfg, plan_order_first=True)),
                ("random_order", replace(cfg, plan_order_first=False))]
    else:  # policy
        if cfg.checkpoint is None:
            raise UsageError("ablate policy needs --checkpoint for the neural arm")
        arms = [("neural", replace(cfg, policy="neural")),
                ("heuristic", replace(cfg, policy="heuristic"))]
    _ablate_search(args, manifest, arms)


# ---------------------------------------------------------------------------
# parser / entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nds", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("generate", help="write instance files from a generator spec")
    g.add_argument("--variant", required=True, choices=["cvrp", "vrptw", "pcvrp"])
    g.add_argument("--n", required=True, type=int)
    g.add_argument("--seed", required=True, type=int)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--location", default="uniform",
                   choices=[m.value for m in LocationMode])
    g.add_argument("--capacity", default="medium",
                   choices=[c.value for c in CapacityProfile])
    g.add_argument("--out-dir", required=True, dest="out_dir")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a removal policy")
    t.add_argument("--config", required=True, help="JSON mirroring TrainConfig")
    t.add_argument("--epochs", type=int)
    t.add_argument("--instances-per-epoch", type=int, dest="instances_per_epoch")
    t.add_argument("--iterations", type=int)
    t.add_argument("--rollouts", type=int)
    t.add_argument("--warmup-steps", type=int, dest="warmup_steps")
    t.add_argument("--learning-rate", type=float, dest="learning_rate")
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--out-dir", required=True, dest="out_dir")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", help="run the annealing search on instance files")
    s.add_argument("--instance")
    s.add_argument("--instance-dir", dest="instance_dir")
    _add_search_flags(s)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out-dir", required=True, dest="out_dir")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("eval", help="batch solve with a summary CSV")
    e.add_argument("--instance")
    e.add_argument("--instance-dir", dest="instance_dir")
    e.add_argument("--reference", help="CSV with instance_id,objective columns")
    _add_search_flags(e)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--out-dir", required=True, dest="out_dir")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("ablate", help="canned comparison runs")
    a.add_argument("which", choices=["arch", "order", "policy"])
    a.add_argument("--instance")
    a.add_argument("--instance-dir", dest="instance_dir")
    # --config holds a train config for arch, a search config otherwise
    _add_search_flags(a)
    a.add_argument("--out-dir", required=True, dest="out_dir")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    try:
        _setup_logging()
        parser = build_parser()
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    manifest = RunManifest(subcommand=args.subcommand, config={}, seed=None,
                           started_at=_now())
    wrote_dir = False
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        wrote_dir = True
        args.func(args, manifest)
        return EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.exit_status = EXIT_USAGE
        return EXIT_USAGE
    except (ContractError, FormatError, CheckpointError, TrainingError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.exit_status = EXIT_RUNTIME
        return EXIT_RUNTIME
    finally:
        if wrote_dir:
            manifest.write(args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
