"""Wall-clock micro-benchmarks for a single AxelGNN layer (inference, no tape)."""
from __future__ import annotations

import time

import numpy as np

from .graph import Graph, random_graph
from .model import (AxelGNN, ModelConfig, aggregate, copy_full, copy_sim, interaction_probs,
                    transform)
from .tensor import Tensor

STAGES = ("transform", "interaction", "aggregate", "copy")


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def time_layer(layer, X: Tensor, graph: Graph, repeats: int = 5) -> dict[str, float]:
    """Best-of-``repeats`` seconds spent in each stage of one layer forward."""
    best = {k: np.inf for k in STAGES}
    copy = copy_full if layer.phi is not None else copy_sim
    for _ in range(repeats):
        H, t_h = _timed(lambda: transform(layer, X))
        (pe, ps), t_p = _timed(lambda: interaction_probs(layer, H, graph))
        A, t_a = _timed(lambda: aggregate(H, pe, ps, graph))
        _, t_c = _timed(lambda: copy(layer, H, A))
        for k, t in zip(STAGES, (t_h, t_p, t_a, t_c)):
            best[k] = min(best[k], t)
    best["total"] = sum(best[k] for k in STAGES)
    return best


def bench_layer(dims=(16, 32, 64), sizes=(250, 500, 1000), variants=("full", "sim"),
                segment_size: int = 8, avg_degree: float = 10.0, repeats: int = 5, seed: int = 0) -> list[dict]:
    """Per-stage layer timings over a grid of node counts and widths (``d_in = d_out = d``)."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        g = random_graph(n, int(n * avg_degree / 2), seed=seed)
        g.incidence  # build the cached operators outside the timed region
        for d in dims:
            X = Tensor(rng.standard_normal((n, d)))
            for variant in variants:
                cfg = ModelConfig(num_layers=1, hidden_dim=d, segment_size=min(segment_size, d),
                                  variant=variant, dropout=0.0)
                layer = AxelGNN(d, cfg, seed=seed).layers[0]
                t = time_layer(layer, X, g, repeats)
                rows.append({"n": n, "m": g.num_edges, "d": d, "variant": variant,
                             "segment_size": cfg.segment_size, **{f"{k}_s": v for k, v in t.items()}})
    return rows


def sim_faster_violations(rows: list[dict], min_dim: int = 32) -> list[tuple[int, int]]:
    """``(n, d)`` cells with ``d >= min_dim`` where the sim layer was not faster than full."""
    full = {(r["n"], r["d"]): r["total_s"] for r in rows if r["variant"] == "full"}
    sim = {(r["n"], r["d"]): r["total_s"] for r in rows if r["variant"] == "sim"}
    return [k for k in sorted(full) if k[1] >= min_dim and k in sim and not sim[k] < full[k]]


def aggregation_ladder(n: int = 2000, d: int = 64, edge_counts=(10000, 20000, 40000, 80000),
                       repeats: int = 7, seed: int = 0) -> list[dict]:
    """Aggregation-stage time at fixed ``n`` and ``d`` as the edge count grows."""
    rng = np.random.default_rng(seed)
    H = Tensor(rng.standard_normal((n, d)))
    rows = []
    for m in edge_counts:
        g = random_graph(n, m, seed=seed)
        g.incidence
        pe = Tensor(rng.random((g.num_edges, 1)))
        ps = Tensor(rng.random((n, 1)))
        aggregate(H, pe, ps, g)  # warm-up
        best = min(_timed(lambda: aggregate(H, pe, ps, g))[1] for _ in range(repeats))
        rows.append({"n": n, "m": g.num_edges, "d": d, "aggregate_s": best})
    return rows


def doubling_ratios(rows: list[dict]) -> list[float]:
    """Time ratio between consecutive rungs, normalized by their edge-count ratio times 2.

    A value of 2 means exactly linear scaling per doubling.
    """
    out = []
    for a, b in zip(rows, rows[1:]):
        out.append(b["aggregate_s"] / a["aggregate_s"] * 2.0 / (b["m"] / a["m"]))
    return out


def linear_within(rows: list[dict], slack: float = 2.0) -> bool:
    """True when every doubling multiplies the time by a factor in ``[2/slack, 2*slack]``."""
    return all(2.0 / slack <= r <= 2.0 * slack for r in doubling_ratios(rows))
