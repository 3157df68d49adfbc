"""Command-line experiment runner.

Subcommands: ``run`` (dispatch on the config's task), ``axelrod-sim``,
``train``, ``influence-labels``, ``sweep`` and ``bench``. Every subcommand
takes ``--config FILE`` and any number of ``--set dotted.key=value``
overrides. Exit codes: 0 success, 2 configuration error, 3 divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import bench as benchmod
from .axelrod import CultureGrid, run_to_equilibrium
from .baseline import MeanAggConfig, MeanAggGNN
from .config import ConfigError, ExperimentConfig, apply_overrides, parse_config
from .diffusion import (DiffusionConfig, estimate, influence_features, sample_seeds,
                        write_labels)
from .graph import (ConsistencyError, FormatError, NodeData, load_edge_list, load_features_csv, load_labels_csv, num_classes_of,
                    row_normalize, split_nodes, synth_sbm, write_mapping)
from .metrics import polarization_report, smoothness
from .model import AxelGNN, ModelConfig
from .training import DivergenceError, TrainConfig, evaluate, fit, grid_search

log = logging.getLogger("axelgnn")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3


class Run:
    """Writes artifacts for one resolved config, confined to its output directory."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.root = cfg.output_path().resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.stamp = f"config_hash={cfg.config_hash} seed={cfg.seed}"
        self.write_json("resolved_config.json", {"config": cfg.to_dict()})

    def path(self, name: str) -> Path:
        p = (self.root / name).resolve()
        if self.root not in p.parents and p != self.root:
            raise ValueError(f"refusing to write outside the output directory: {name}")
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {self.stamp}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return p

    def write_json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        body = {"config_hash": self.cfg.config_hash, "seed": self.cfg.seed, **payload}
        p.write_text(json.dumps(body, indent=2, default=_jsonable))
        return p


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.bool_, bool)):
        return str(bool(v)).lower()
    return v


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


# ------------------------------------------------------------------ datasets

def load_dataset(cfg: ExperimentConfig, run: Run | None = None):
    if cfg.synth is not None:
        s = cfg.synth
        return synth_sbm(s.n, s.k_classes, s.p_intra, s.p_inter, s.feature_model, cfg.seed,
                         delta=s.delta, n_features=s.n_features)
    f = cfg.files
    if f.remap_ids:
        graph, mapping = load_edge_list(f.edges, remap=True)
        if run is not None:
            write_mapping(run.path("id_mapping.csv"), mapping)
    else:
        graph = load_edge_list(f.edges)
    x = load_features_csv(f.features, graph) if f.features else np.ones((graph.n, 1))
    if f.row_normalize:
        x = row_normalize(x)
    labels = load_labels_csv(f.labels, graph) if f.labels else None
    k = num_classes_of(labels) if labels is not None and np.issubdtype(labels.dtype, np.integer) else None
    return graph, NodeData(x, labels, k)


def build_model(cfg: ExperimentConfig, d_in: int, task: str, num_classes: int, seed: int):
    m = cfg.model
    if cfg.architecture == "mean":
        mc = MeanAggConfig(num_layers=m.num_layers, hidden_dim=m.hidden_dims[-1], dropout=m.dropout,
                           task=task, num_classes=num_classes)
        return MeanAggGNN(d_in, mc, seed=seed)
    return AxelGNN(d_in, replace(m, task=task, num_classes=num_classes), seed=seed)


# ------------------------------------------------------------------ tasks

def task_axelrod(cfg: ExperimentConfig) -> dict:
    run = Run(cfg)
    a = cfg.axelrod
    grid = CultureGrid(a.L, a.f, a.q, cfg.seed, periodic=a.periodic, neighborhood=a.neighborhood)
    t0 = time.perf_counter()
    res = run_to_equilibrium(grid, a.max_steps, a.check_interval)
    run.write_csv("trajectory.csv", ["step", "mean_similarity", "region_count", "is_equilibrium"], res.trajectory)
    summary = {"task": cfg.task, "steps_taken": res.steps_taken, "reached": res.reached,
               "regions": grid.count_regions(), "seconds": time.perf_counter() - t0,
               "config": cfg.to_dict()}
    run.write_json("summary.json", summary)
    return summary


def _train_repeat(cfg, run, graph, x, y, split, task, num_classes, r):
    seed = cfg.seed + r
    model = build_model(cfg, x.shape[1], task, num_classes, seed)
    tc = replace(cfg.train, seed=seed)
    try:
        result = fit(model, graph, x, y, split, tc)
    except DivergenceError as exc:
        run.write_json(f"run_{r}/error.json", {"error": str(exc), "repeat": r})
        raise
    run.write_csv(f"run_{r}/history.csv",
                  ["epoch", "train_loss", "val_loss", "val_metric", "mean_embedding_change"],
                  result.history.rows())
    model.save(run.path(f"run_{r}/checkpoint.json"),
               {"config_hash": cfg.config_hash, "seed": seed})
    test = evaluate(model, graph, x, y, split.test)
    emb = model.forward(graph, x).embeddings
    return model, result, test, emb


def task_node_classify(cfg: ExperimentConfig) -> dict:
    run = Run(cfg)
    graph, data = load_dataset(cfg, run)
    if data.labels is None:
        raise ConfigError("node-classify needs labels ('dataset.files.labels')")
    labels = data.labels.astype(np.int64)
    labeled = np.flatnonzero(labels >= 0)
    split = split_nodes(labeled, seed=cfg.seed, n=graph.n)
    if min(split.sizes) == 0:
        raise ConfigError(f"'dataset' has too few labeled nodes for a 60/20/20 split: {split.sizes}")
    k = data.num_classes or num_classes_of(labels)
    accs, runs = [], []
    for r in range(cfg.repeats):
        model, result, acc, emb = _train_repeat(cfg, run, graph, data.features, labels, split, "classify", k, r)
        rep = polarization_report(emb, labels, labeled)
        run.write_csv(f"run_{r}/polarization.csv",
                      ["layer", "inter_class_distance", "intra_class_distance", "polarization_ratio", "flagged"],
                      rep.rows())
        run.write_csv(f"run_{r}/smoothness.csv", ["layer", "smoothness"],
                      [(i + 1, smoothness(e, graph)) for i, e in enumerate(emb)])
        accs.append(acc)
        runs.append({"repeat": r, "seed": cfg.seed + r, "test_accuracy": acc,
                     "best_epoch": result.best_epoch, "best_val_accuracy": result.best_val_metric})
    summary = {"task": cfg.task, "metric": "accuracy", "mean": float(np.mean(accs)),
               "std": float(np.std(accs)), "runs": runs, "split_seed": cfg.seed,
               "split_sizes": split.sizes, "polarization_definition": rep.definition,
               "config": cfg.to_dict()}
    run.write_json("summary.json", summary)
    return summary


def task_influence(cfg: ExperimentConfig) -> dict:
    """Self-defined protocol: every fold draws a fresh seed set, simulates labels and trains on a node split."""
    run = Run(cfg)
    graph, _ = load_dataset(cfg, run)
    maes, runs = [], []
    for fold in range(cfg.influence.folds):
        fold_seed = cfg.seed + fold
        seeds = sample_seeds(graph, cfg.influence.seed_fraction, fold_seed)
        dc = replace(cfg.diffusion, seed=fold_seed)
        labels = estimate(graph, seeds, dc)
        write_labels(run.path(f"fold_{fold}/labels.csv"), labels, comment=run.stamp)
        x = influence_features(graph, seeds)
        split = split_nodes(graph.n, seed=fold_seed)
        _, result, err, _ = _train_repeat(cfg, run, graph, x, labels.probs, split, "regress", 1, fold)
        maes.append(err)
        runs.append({"fold": fold, "seed": fold_seed, "test_mae": err, "best_epoch": result.best_epoch})
    summary = {"task": cfg.task, "metric": "mae", "mean": float(np.mean(maes)), "std": float(np.std(maes)),
               "runs": runs, "protocol": "self-defined: per-fold random seed set, 60/20/20 node split",
               "features": ["seed_indicator", "degree_over_max_degree"], "config": cfg.to_dict()}
    run.write_json("summary.json", summary)
    return summary


def task_influence_labels(cfg: ExperimentConfig) -> dict:
    run = Run(cfg)
    graph, _ = load_dataset(cfg, run)
    seeds = sample_seeds(graph, cfg.influence.seed_fraction, cfg.seed)
    dc = replace(cfg.diffusion, seed=cfg.seed)
    res = estimate(graph, seeds, dc)
    sidecar = {"config_hash": cfg.config_hash, "seed": cfg.seed, "diffusion": asdict(dc),
               "seeds_used": seeds, "num_simulations": res.num_simulations,
               "note": "SIS probabilities are infected-at-horizon snapshots" if dc.model == "SIS" else ""}
    write_labels(run.path("labels.csv"), res, sidecar=sidecar, comment=run.stamp)
    summary = {"task": "influence-labels", "n": graph.n, "num_seeds": len(seeds),
               "mean_prob": float(res.probs.mean()), "config": cfg.to_dict()}
    run.write_json("summary.json", summary)
    return summary


def task_sweep(cfg: ExperimentConfig) -> dict:
    run = Run(cfg)
    graph, data = load_dataset(cfg, run)
    influence = cfg.task == "influence"
    model_keys = set(asdict(cfg.model))
    if influence:
        seeds = sample_seeds(graph, cfg.influence.seed_fraction, cfg.seed)
        y = estimate(graph, seeds, replace(cfg.diffusion, seed=cfg.seed)).probs
        x, split, task, k = influence_features(graph, seeds), split_nodes(graph.n, seed=cfg.seed), "regress", 1
    else:
        if data.labels is None:
            raise ConfigError("sweep over node-classify needs labels")
        y = data.labels.astype(np.int64)
        labeled = np.flatnonzero(y >= 0)
        x, split, task, k = data.features, split_nodes(labeled, seed=cfg.seed, n=graph.n), "classify", num_classes_of(y)

    def protocol(cell, r):
        mkw = {kk: v for kk, v in cell.items() if kk in model_keys}
        tkw = {kk: v for kk, v in cell.items() if kk not in model_keys}
        try:
            cell_cfg = replace(cfg, model=replace(cfg.model, **mkw),
                               train=replace(cfg.train, seed=cfg.seed + r, **tkw))
        except ValueError as exc:  # e.g. segment_size larger than hidden_dim
            log.info("skipping cell %s: %s", cell, exc)
            return float("nan")
        model = build_model(cell_cfg, x.shape[1], task, k, cfg.seed + r)
        return fit(model, graph, x, y, split, cell_cfg.train).best_val_metric

    res = grid_search(cfg.grid["space"], protocol, cfg.grid["repeats"], maximize=not influence)
    keys = list(cfg.grid["space"])
    run.write_csv("cells.csv", keys + ["mean", "std", "failed"],
                  ([c["params"][kk] for kk in keys] + [c["mean"], c["std"], c["failed"]] for c in res.cells))
    summary = {"task": cfg.task, "best": res.best, "best_val": res.best_score,
               "num_cells": len(res.cells), "config": cfg.to_dict()}
    run.write_json("best.json", summary)
    return summary


def task_bench(cfg: ExperimentConfig) -> dict:
    run = Run(cfg)
    b = cfg.bench
    rows = benchmod.bench_layer(b.dims, b.sizes, b.variants, b.segment_size, b.avg_degree, b.repeats, cfg.seed)
    cols = ["n", "m", "d", "variant", "segment_size"] + [f"{s}_s" for s in benchmod.STAGES] + ["total_s"]
    run.write_csv("bench_layer.csv", cols, ([r[c] for c in cols] for r in rows))
    ladder = benchmod.aggregation_ladder(b.ladder_n, b.ladder_d, b.ladder_edges, seed=cfg.seed)
    run.write_csv("aggregation_ladder.csv", ["n", "m", "d", "aggregate_s"],
                  ([r["n"], r["m"], r["d"], r["aggregate_s"]] for r in ladder))
    violations = benchmod.sim_faster_violations(rows)
    if violations:
        log.warning("sim layer not faster than full at cells %s", violations)
    summary = {"task": "bench", "sim_faster_violations": violations,
               "sim_faster_everywhere": not violations,
               "doubling_ratios": benchmod.doubling_ratios(ladder),
               "aggregation_linear_within_2x": benchmod.linear_within(ladder), "config": cfg.to_dict()}
    run.write_json("summary.json", summary)
    return summary


TASK_RUNNERS = {"axelrod-sim": task_axelrod, "node-classify": task_node_classify, "influence": task_influence}


# ------------------------------------------------------------------ entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="axelgnn", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        if config_required:
            sp.add_argument("config", help="JSON config file")
        else:
            sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set train.learning_rate=0.005")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output-dir")

    common(sub.add_parser("run", help="run the task named in the config"), config_required=True)
    ax = sub.add_parser("axelrod-sim", help="discrete Axelrod simulation to equilibrium")
    common(ax)
    for flag in ("L", "f", "q", "max-steps"):
        ax.add_argument(f"--{flag}", type=int)
    common(sub.add_parser("train", help="node classification or influence training"))
    common(sub.add_parser("influence-labels", help="Monte-Carlo activation-probability labels"))
    common(sub.add_parser("sweep", help="grid search"))
    common(sub.add_parser("bench", help="layer timing benchmark"))
    return p


def _resolve(args, default_task: str) -> ExperimentConfig:
    raw = {}
    path = getattr(args, "config", None)
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if args.command != "run":
        raw.setdefault("task", default_task)
    raw = apply_overrides(raw, args.overrides)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.output_dir:
        raw["output_dir"] = args.output_dir
    if args.command == "axelrod-sim":
        for key in ("L", "f", "q", "max_steps"):
            val = getattr(args, key)
            if val is not None:
                raw.setdefault("axelrod", {})[key] = val
    return parse_config(raw)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    defaults = {"axelrod-sim": "axelrod-sim", "train": "node-classify", "influence-labels": "influence",
                "sweep": "node-classify", "bench": "node-classify", "run": None}
    try:
        cfg = _resolve(args, defaults[args.command])
        if args.command == "run":
            summary = TASK_RUNNERS[cfg.task](cfg)
        elif args.command == "axelrod-sim":
            summary = task_axelrod(cfg)
        elif args.command == "train":
            if cfg.task == "axelrod-sim":
                raise ConfigError("'task' must be node-classify or influence for train")
            summary = TASK_RUNNERS[cfg.task](cfg)
        elif args.command == "influence-labels":
            summary = task_influence_labels(cfg)
        elif args.command == "sweep":
            summary = task_sweep(cfg)
        else:
            summary = task_bench(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ConsistencyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    brief = {k: v for k, v in summary.items() if k not in ("config", "runs")}
    print(json.dumps(brief, default=_jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
