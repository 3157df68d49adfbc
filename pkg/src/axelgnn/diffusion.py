"""Linear Threshold and SIS diffusion: Monte-Carlo activation probabilities and an exact LT oracle.

LT weights are a sparse ``n x n`` matrix with ``W[u, v]`` the influence of
``u`` on ``v``; incoming weights of each node must sum to at most 1.
SIS "activation probability" means the probability of being infected at
the horizon ``T``, since SIS is non-progressive.

Runs are simulated in fixed blocks of :data:`BLOCK` runs; block ``i`` owns the
generator seeded with ``(seed, i)`` so estimates do not depend on how
blocks are scheduled.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph

BLOCK = 1000


class DiffusionConfigError(ValueError):
    pass


@dataclass
class DiffusionConfig:
    model: str = "LT"
    num_simulations: int = 1000
    seed: int = 0
    beta_inf: float = 0.1
    gamma: float = 0.1
    horizon: int = 10

    def __post_init__(self):
        if self.model not in ("LT", "SIS"):
            raise DiffusionConfigError(f"model must be 'LT' or 'SIS', got {self.model!r}")
        if self.num_simulations < 1:
            raise DiffusionConfigError("num_simulations must be >= 1")
        for name in ("beta_inf", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DiffusionConfigError(f"{name}={v} outside [0, 1]")
        if self.horizon < 1:
            raise DiffusionConfigError("horizon must be >= 1")


@dataclass
class DiffusionResult:
    probs: np.ndarray
    seeds_used: np.ndarray
    num_simulations: int
    stderr: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.stderr is None:
            p = self.probs
            self.stderr = np.sqrt(p * (1.0 - p) / self.num_simulations)


def sample_seeds(graph: Graph, fraction: float = 0.10, seed=None) -> np.ndarray:
    """Uniform sample of ``max(1, round(fraction * n))`` nodes, sorted."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    k = max(1, int(round(fraction * graph.n)))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(graph.n, size=k, replace=False))


def default_lt_weights(graph: Graph) -> sp.csr_matrix:
    """``W[u, v] = 1 / deg(v)`` for every edge, so incoming weights sum to 1."""
    src, dst = graph.directed_edges
    w = 1.0 / graph.degree[dst]
    return sp.csr_matrix((w, (src, dst)), shape=(graph.n, graph.n))


def _check_weights(weights) -> sp.csr_matrix:
    W = sp.csr_matrix(weights, dtype=float)
    col = np.asarray(W.sum(axis=0)).ravel()
    if (col > 1.0 + 1e-9).any():
        v = int(np.argmax(col))
        raise DiffusionConfigError(f"incoming LT weights of node {v} sum to {col[v]:.6g} > 1")
    if W.nnz and W.data.min() < 0:
        raise DiffusionConfigError("LT weights must be non-negative")
    return W


def _lt_cascade(Wt: sp.csr_matrix, active: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Progressive cascade for a batch of runs; rows of ``active`` are runs.

    A node needs positive influence from active neighbors, so a zero
    threshold alone never activates it.
    """
    while True:
        influence = np.asarray(Wt @ active.T.astype(float)).T
        new = active | ((influence >= thresholds) & (influence > 0))
        if (new == active).all():
            return new
        active = new


def lt_run(graph: Graph, seeds, thresholds, weights=None) -> np.ndarray:
    """Final active set (boolean mask) of one LT cascade with fixed thresholds."""
    W = _check_weights(default_lt_weights(graph) if weights is None else weights)
    thr = np.asarray(thresholds, dtype=float).reshape(1, -1)
    if thr.shape[1] != graph.n:
        raise ValueError("need one threshold per node")
    active = np.zeros((1, graph.n), dtype=bool)
    active[0, np.asarray(seeds, dtype=np.int64)] = True
    return _lt_cascade(W.T.tocsr(), active, thr)[0]


def _blocks(total: int):
    i = 0
    while i * BLOCK < total:
        yield i, min(BLOCK, total - i * BLOCK)
        i += 1


def lt_estimate(graph: Graph, seeds, config: DiffusionConfig, weights=None) -> DiffusionResult:
    """Activation probabilities with thresholds resampled from U[0, 1) every run."""
    W = _check_weights(default_lt_weights(graph) if weights is None else weights)
    Wt = W.T.tocsr()
    seeds = np.asarray(seeds, dtype=np.int64)
    counts = np.zeros(graph.n)
    for i, size in _blocks(config.num_simulations):
        rng = np.random.default_rng([config.seed, i])
        thr = rng.random((size, graph.n))
        active = np.zeros((size, graph.n), dtype=bool)
        active[:, seeds] = True
        counts += _lt_cascade(Wt, active, thr).sum(axis=0)
    return DiffusionResult(counts / config.num_simulations, seeds, config.num_simulations)


def sis_estimate(graph: Graph, seeds, config: DiffusionConfig) -> DiffusionResult:
    """Discrete-time SIS, synchronous infect-then-recover.

    In each step every node infected at the start of the step infects each
    susceptible neighbor independently with probability ``beta_inf``; then
    each node infected at the start of the step recovers with probability
    ``gamma``. Nodes infected during a step do not recover in that step.
    """
    A = graph.adjacency
    seeds = np.asarray(seeds, dtype=np.int64)
    counts = np.zeros(graph.n)
    log_escape = np.log1p(-config.beta_inf) if config.beta_inf < 1 else -np.inf
    for i, size in _blocks(config.num_simulations):
        rng = np.random.default_rng([config.seed, i])
        inf = np.zeros((size, graph.n), dtype=bool)
        inf[:, seeds] = True
        for _ in range(config.horizon):
            k = np.asarray(A @ inf.T.astype(float)).T
            with np.errstate(invalid="ignore"):
                p_hit = np.where(k > 0, -np.expm1(k * log_escape), 0.0)
            new = ~inf & (rng.random(inf.shape) < p_hit)
            recover = inf & (rng.random(inf.shape) < config.gamma)
            inf = (inf & ~recover) | new
        counts += inf.sum(axis=0)
    return DiffusionResult(counts / config.num_simulations, seeds, config.num_simulations)


def estimate(graph: Graph, seeds, config: DiffusionConfig) -> DiffusionResult:
    return lt_estimate(graph, seeds, config) if config.model == "LT" else sis_estimate(graph, seeds, config)


def exact_lt_oracle(graph: Graph, seeds, weights=None, max_free: int = 12) -> np.ndarray:
    """Exact LT activation probabilities under i.i.d. U[0, 1] thresholds.

    Uses the live-edge equivalence: every non-seed node independently keeps
    at most one incoming edge, ``u -> v`` with probability ``W[u, v]``. A node
    is active iff its chain of kept edges reaches a seed, so its probability
    is the sum, over simple backward paths ending at the first seed, of the
    product of edge weights. Paths are enumerated by a DP over visited
    subsets of non-seed nodes.
    """
    W = _check_weights(default_lt_weights(graph) if weights is None else weights).tocsc()
    seeds = set(int(s) for s in np.asarray(seeds).ravel())
    free = [v for v in range(graph.n) if v not in seeds]
    if len(free) > max_free:
        raise ValueError(f"{len(free)} non-seed nodes exceeds the oracle limit of {max_free}")
    bit = {v: 1 << i for i, v in enumerate(free)}
    incoming = {}
    for v in free:
        col = W.getcol(v)
        incoming[v] = [(int(u), float(w)) for u, w in zip(col.indices, col.data) if w > 0]
    probs = np.zeros(graph.n)
    probs[list(seeds)] = 1.0
    for target in free:
        total = 0.0
        frontier = {(bit[target], target): 1.0}
        while frontier:
            nxt: dict[tuple[int, int], float] = {}
            for (mask, x), pr in frontier.items():
                for u, w in incoming[x]:
                    if u in seeds:
                        total += pr * w
                    elif not mask & bit[u]:
                        key = (mask | bit[u], u)
                        nxt[key] = nxt.get(key, 0.0) + pr * w
            frontier = nxt
        probs[target] = total
    return probs


def write_labels(path, result: DiffusionResult, sidecar: dict | None = None, comment: str | None = None) -> None:
    """CSV ``node_id,prob,stderr`` plus an optional JSON sidecar next to it."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["node_id", "prob", "stderr"])
        for v, (p, s) in enumerate(zip(result.probs, result.stderr)):
            w.writerow([v, repr(float(p)), repr(float(s))])
    if sidecar is not None:
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=2, default=_jsonable)


def read_labels(path) -> tuple[np.ndarray, np.ndarray]:
    probs, errs = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in rows:
            probs.append(float(row["prob"]))
            errs.append(float(row["stderr"]))
    return np.array(probs), np.array(errs)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"not serializable: {type(o)}")


def influence_features(graph: Graph, seeds) -> np.ndarray:
    """Per-node inputs ``[seed indicator, degree / max degree]``."""
    x = np.zeros((graph.n, 2))
    x[np.asarray(seeds, dtype=np.int64), 0] = 1.0
    mx = graph.degree.max() if graph.n else 0
    if mx > 0:
        x[:, 1] = graph.degree / mx
    return x
