"""Undirected graphs, CSV/edge-list ingestion, synthetic SBMs and node splits."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class FormatError(ValueError):
    """An input file could not be parsed."""


class ConsistencyError(ValueError):
    """Inputs parsed fine but disagree with each other."""


class Graph:
    """Immutable undirected graph stored as sorted CSR neighbor lists.

    Self-loops are never stored; aggregation adds the node itself explicitly.
    """

    def __init__(self, n: int, edges=None):
        if n < 0:
            raise ValueError("n must be non-negative")
        e = np.zeros((0, 2), dtype=np.int64) if edges is None else np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError(f"edge endpoint outside [0, {n})")
        e = e[e[:, 0] != e[:, 1]]
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if len(e) else e
        self.n = int(n)
        self._edges = e
        both = np.concatenate([e, e[:, ::-1]]) if len(e) else e
        adj = sp.csr_matrix((np.ones(len(both)), (both[:, 0], both[:, 1])) if len(both) else ([], ([], [])),
                            shape=(n, n))
        adj.sort_indices()
        self.indptr = adj.indptr.astype(np.int64)
        self.indices = adj.indices.astype(np.int64)
        for arr in (self.indptr, self.indices, self._edges):
            arr.setflags(write=False)

    @classmethod
    def from_networkx(cls, g) -> "Graph":
        nodes = sorted(g.nodes())
        pos = {v: i for i, v in enumerate(nodes)}
        return cls(len(nodes), [(pos[u], pos[v]) for u, v in g.edges()])

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.num_edges})"

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    @property
    def edges(self) -> np.ndarray:
        """Undirected edges as an (m, 2) array with ``u < v``."""
        return self._edges

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @cached_property
    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        return sp.csr_matrix((np.ones(len(self.indices)), self.indices, self.indptr), shape=(self.n, self.n))

    @cached_property
    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) covering both directions of every edge; row order follows CSR."""
        dst = np.repeat(np.arange(self.n), self.degree)
        return self.indices.copy(), dst

    @cached_property
    def incidence(self) -> dict[str, sp.csr_matrix]:
        """Constant 0/1 operators for gather/scatter over directed and undirected edges.

        ``src``/``dst``: (2m x n) pick the source / destination row of each
        directed edge. ``scatter``: (n x 2m) sums directed-edge rows into their
        destination. ``u``/``v``: (m x n) pick endpoints of undirected edges.
        ``dup``: (2m x m) copies an undirected-edge row onto both directions.
        """
        src, dst = self.directed_edges
        E, m, n = len(src), self.num_edges, self.n
        ones = np.ones(E)
        ar = np.arange(E)
        pick_src = sp.csr_matrix((ones, (ar, src)), shape=(E, n))
        pick_dst = sp.csr_matrix((ones, (ar, dst)), shape=(E, n))
        u, v = self._edges[:, 0], self._edges[:, 1]
        # edges are lexicographically sorted, so u*n+v keys are sorted too
        und = np.searchsorted(u * n + v, np.minimum(src, dst) * n + np.maximum(src, dst))
        ops = {
            "src": pick_src,
            "dst": pick_dst,
            "scatter": pick_dst.T.tocsr(),
            "u": sp.csr_matrix((np.ones(m), (np.arange(m), u)), shape=(m, n)),
            "v": sp.csr_matrix((np.ones(m), (np.arange(m), v)), shape=(m, n)),
            "dup": sp.csr_matrix((ones, (ar, und)), shape=(E, m)),
        }
        ops.update({k + "_T": mat.T.tocsr() for k, mat in list(ops.items())})
        return ops

    def permute(self, perm) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        return Graph(self.n, perm[self._edges])


@dataclass(frozen=True)
class NodeData:
    features: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        if self.labels is not None and len(self.labels) != len(self.features):
            raise ConsistencyError(
                f"{len(self.labels)} labels for {len(self.features)} feature rows")
        if self.num_classes is not None and self.labels is not None:
            lab = self.labels[self.labels >= 0]
            if lab.size and lab.max() >= self.num_classes:
                raise ValueError("class label outside [0, num_classes)")

    @property
    def n(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class SplitMask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int | None = None

    @property
    def sizes(self) -> tuple[int, int, int]:
        return int(self.train.sum()), int(self.val.sum()), int(self.test.sum())


# ------------------------------------------------------------------ loaders

_HEADER_N = re.compile(r"#\s*(?:nodes|n)\s*[:=]\s*(\d+)", re.IGNORECASE)


def load_edge_list(path, remap: bool = False) -> Graph | tuple[Graph, dict[int, int]]:
    """Read a whitespace-separated ``u v`` edge list.

    Lines starting with ``#`` are comments; a comment like ``# nodes: 2708``
    fixes the node count. Otherwise ``n = max id + 1``. With ``remap=True``
    ids are compacted to ``0..m-1`` in sorted order and the mapping
    ``original -> dense`` is returned alongside the graph.
    """
    pairs = []
    n_header = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                m = _HEADER_N.match(s)
                if m:
                    n_header = int(m.group(1))
                continue
            tok = s.split()
            if len(tok) < 2:
                raise FormatError(f"{path}:{lineno}: expected 'u v', got {s!r}")
            try:
                u, v = int(tok[0]), int(tok[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer node id in {s!r}") from None
            if u < 0 or v < 0:
                raise FormatError(f"{path}:{lineno}: negative node id in {s!r}")
            pairs.append((u, v))
    e = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if remap:
        ids = np.unique(e)
        mapping = {int(o): i for i, o in enumerate(ids)}
        return Graph(len(ids), np.searchsorted(ids, e)), mapping
    n = int(e.max()) + 1 if e.size else 0
    if n_header is not None:
        if n_header < n:
            raise ConsistencyError(f"header declares {n_header} nodes but ids reach {n - 1}")
        n = n_header
    return Graph(n, e)


def write_mapping(path, mapping: dict[int, int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["original_id", "dense_id"])
        for orig, dense in sorted(mapping.items(), key=lambda kv: kv[1]):
            w.writerow([orig, dense])


def _read_csv(path) -> tuple[list[str] | None, list[tuple[int, list[str]]]]:
    rows = []
    header = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if header is None and not rows:
                try:
                    [float(c) for c in row]
                except ValueError:
                    header = [c.strip() for c in row]
                    continue
            rows.append((lineno, row))
    return header, rows


def load_features_csv(path, graph: Graph | None = None) -> np.ndarray:
    """Dense ``n x d`` float features, one node per row (row index = node id)."""
    header, rows = _read_csv(path)
    width = len(header) if header else (len(rows[0][1]) if rows else 0)
    out = np.empty((len(rows), width))
    for i, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise FormatError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        try:
            out[i] = [float(c) for c in row]
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric value") from None
    if graph is not None and len(out) != graph.n:
        raise ConsistencyError(f"{len(out)} feature rows for a graph with {graph.n} nodes")
    return out


def load_labels_csv(path, graph: Graph | None = None) -> np.ndarray:
    """Read a single label column; a header like ``label:int`` or ``prob:float`` sets the type.

    Without a typed header, labels are integers when every value parses as
    one. Use ``-1`` for unlabeled nodes in integer files.
    """
    header, rows = _read_csv(path)
    kind = None
    if header:
        if len(header) != 1:
            raise FormatError(f"{path}: label file must have one column, header has {len(header)}")
        if ":" in header[0]:
            kind = header[0].split(":", 1)[1].strip().lower()
            if kind not in ("int", "float"):
                raise FormatError(f"{path}: unknown label type {kind!r}")
    vals = []
    for lineno, row in rows:
        if len(row) != 1:
            raise FormatError(f"{path}:{lineno}: expected 1 column, got {len(row)}")
        vals.append(row[0].strip())
    if kind is None:
        try:
            [int(v) for v in vals]
            kind = "int"
        except ValueError:
            kind = "float"
    try:
        out = np.array([int(v) for v in vals] if kind == "int" else [float(v) for v in vals])
    except ValueError:
        raise FormatError(f"{path}: value does not match declared type {kind}") from None
    if graph is not None and len(out) != graph.n:
        raise ConsistencyError(f"{len(out)} labels for a graph with {graph.n} nodes")
    return out


def num_classes_of(labels: np.ndarray) -> int:
    lab = labels[labels >= 0]
    return int(lab.max()) + 1 if lab.size else 0


def row_normalize(x: np.ndarray) -> np.ndarray:
    s = np.abs(x).sum(axis=1, keepdims=True)
    return np.divide(x, s, out=np.zeros_like(x), where=s > 0)


def load_content_cites(directory, name: str = "cora") -> tuple[Graph, NodeData, dict]:
    """Read the ``<name>.content`` / ``<name>.cites`` citation-network format.

    ``.content`` rows are ``doc_id f_1 .. f_d class_name`` (tab separated);
    ``.cites`` rows are ``cited citing``. Document ids are remapped to dense ids
    in ``.content`` order; citations to unknown documents are dropped. Returns
    the graph, node data and ``{"ids": ..., "classes": ...}``.
    """
    directory = Path(directory)
    ids, feats, names = [], [], []
    with open(directory / f"{name}.content", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            if len(tok) < 3:
                raise FormatError(f"{name}.content:{lineno}: too few columns")
            ids.append(tok[0])
            feats.append(np.array(tok[1:-1], dtype=np.float64))
            names.append(tok[-1])
    if len({len(f) for f in feats}) > 1:
        raise FormatError(f"{name}.content: ragged feature rows")
    pos = {pid: i for i, pid in enumerate(ids)}
    edges = []
    with open(directory / f"{name}.cites", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            if len(tok) != 2:
                raise FormatError(f"{name}.cites:{lineno}: expected 2 ids")
            if tok[0] in pos and tok[1] in pos:
                edges.append((pos[tok[0]], pos[tok[1]]))
    classes = sorted(set(names))
    labels = np.searchsorted(classes, names)
    g = Graph(len(ids), edges)
    return g, NodeData(np.stack(feats), labels, len(classes)), {"ids": ids, "classes": classes}


# ------------------------------------------------------------------ statistics

def edge_homophily_ratio(g: Graph, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) != g.n:
        raise ConsistencyError(f"{len(labels)} labels for {g.n} nodes")
    if g.num_edges == 0:
        return float("nan")
    u, v = g.edges[:, 0], g.edges[:, 1]
    if np.issubdtype(labels.dtype, np.integer) and ((labels[u] < 0).any() or (labels[v] < 0).any()):
        raise ValueError("edge endpoint without a label")
    return float(np.mean(labels[u] == labels[v]))


def expected_homophily(class_sizes, p_intra: float, p_inter: float) -> float:
    sizes = np.asarray(class_sizes, dtype=float)
    intra = float(np.sum(sizes * (sizes - 1) / 2))
    inter = float((sizes.sum() ** 2 - np.sum(sizes ** 2)) / 2)
    a, b = p_intra * intra, p_inter * inter
    return a / (a + b) if a + b > 0 else float("nan")


# ------------------------------------------------------------------ synthetic data

def synth_sbm(n: int, k_classes: int, p_intra: float, p_inter: float,
              feature_model: str = "gaussian", seed=None, *, delta: float = 1.0,
              n_features: int = 8) -> tuple[Graph, NodeData]:
    """Stochastic block model with balanced classes.

    ``gaussian`` features put class means at pairwise distance ``delta``
    (scaled one-hot directions) with identity covariance; ``noise`` draws
    class-independent standard normal features.
    """
    for name, p in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name}={p} outside [0, 1]")
    if k_classes < 1 or n < k_classes:
        raise ValueError("need n >= k_classes >= 1")
    if feature_model == "gaussian" and n_features < k_classes:
        raise ValueError("gaussian features need n_features >= k_classes")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % k_classes
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_intra, p_inter)
    keep = rng.random(len(iu)) < prob
    g = Graph(n, np.stack([iu[keep], ju[keep]], axis=1))
    if feature_model == "gaussian":
        means = np.zeros((k_classes, n_features))
        means[np.arange(k_classes), np.arange(k_classes)] = delta / np.sqrt(2.0)
        x = means[labels] + rng.standard_normal((n, n_features))
    elif feature_model == "noise":
        x = rng.standard_normal((n, n_features))
    else:
        raise ValueError(f"unknown feature_model {feature_model!r}")
    return g, NodeData(x, labels, k_classes)


def random_graph(n: int, m: int, seed=None) -> Graph:
    """Uniform random simple graph with exactly ``m`` edges (rejection on duplicates)."""
    if m > n * (n - 1) // 2:
        raise ValueError("too many edges requested")
    rng = np.random.default_rng(seed)
    seen: set[tuple[int, int]] = set()
    out = []
    while len(out) < m:
        batch = rng.integers(0, n, size=(2 * (m - len(out)) + 16, 2))
        for a, b in batch.tolist():
            if a == b:
                continue
            key = (a, b) if a < b else (b, a)
            if key not in seen:
                seen.add(key)
                out.append(key)
                if len(out) == m:
                    break
    return Graph(n, out)


# ------------------------------------------------------------------ splits

def split_nodes(n_labeled, ratios=(0.6, 0.2, 0.2), seed=None, n: int | None = None) -> SplitMask:
    """Random train/val/test split.

    ``n_labeled`` is either a count (nodes ``0..n_labeled-1``) or an index
    array of labeled nodes, in which case ``n`` sets the mask length. Val and
    test get ``floor(ratio * count)`` nodes; train gets the remainder.
    """
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    idx = np.arange(n_labeled) if np.isscalar(n_labeled) else np.asarray(n_labeled, dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("no labeled nodes to split")
    total = len(idx) if n is None else n
    if np.isscalar(n_labeled) and n is None:
        total = int(n_labeled)
    rng = np.random.default_rng(seed)
    perm = idx[rng.permutation(len(idx))]
    n_val = int(np.floor(ratios[1] * len(idx) + 1e-9))
    n_test = int(np.floor(ratios[2] * len(idx) + 1e-9))
    n_train = len(idx) - n_val - n_test
    masks = []
    for part in (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]):
        m = np.zeros(total, dtype=bool)
        m[part] = True
        masks.append(m)
    return SplitMask(*masks, seed=seed)
