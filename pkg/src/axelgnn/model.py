"""AxelGNN layers: similarity-gated aggregation followed by segment-wise trait copying.

One layer maps ``X`` (n x d_in) to ``X_out`` (n x d_out):

1. ``H = X W + b``
2. ``s_vu = cos(H_v, H_u)`` on every edge and ``s_vv`` on every node,
   ``p = sigmoid(beta * (s - theta))``
3. ``A_v = (p_vv H_v + sum_{u in N(v)} p_uv H_u) / (|N(v)| + 1)``
4. per segment of width ``s``: ``X_out = c * A + (1 - c) * H`` where the
   copy gate ``c`` comes from a small per-segment network on ``[H, A]``
   (``variant="full"``) or from a free ``sigmoid(W_group)`` table
   (``variant="sim"``).

beta is stored as ``log beta`` and theta as ``atanh``-space so the
constraints ``beta > 0`` and ``theta in [-1, 1]`` survive any optimizer step.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph
from .tensor import (Tensor, add, concat_cols, cosine_rows, dropout, exp, matmul, mul,
                     sigmoid, slice_cols, spmm, sub, take_rows, tanh)

CHECKPOINT_FORMAT = "axelgnn-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    num_layers: int = 2
    hidden_dim: int | list[int] = 64
    segment_size: int = 8
    variant: str = "full"
    dropout: float = 0.5
    task: str = "classify"
    num_classes: int = 2
    phi_hidden: int | None = None
    literal_normalization: bool = False
    eps: float = 1e-8

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.segment_size < 1:
            raise ValueError("segment_size must be >= 1")
        if self.variant not in ("full", "sim"):
            raise ValueError(f"variant must be 'full' or 'sim', got {self.variant!r}")
        if self.task not in ("classify", "regress"):
            raise ValueError(f"task must be 'classify' or 'regress', got {self.task!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        for d in self.hidden_dims:
            if self.segment_size > d:
                raise ValueError(f"segment_size {self.segment_size} exceeds hidden_dim {d}")

    @property
    def hidden_dims(self) -> list[int]:
        if isinstance(self.hidden_dim, int):
            return [self.hidden_dim] * self.num_layers
        if len(self.hidden_dim) != self.num_layers:
            raise ValueError("hidden_dim list length must equal num_layers")
        return list(self.hidden_dim)

    @property
    def out_dim(self) -> int:
        return self.num_classes if self.task == "classify" else 1


def segments(d: int, s: int) -> list[tuple[int, int]]:
    """Column ranges ``[j*s, min((j+1)*s, d))`` for ``j < ceil(d/s)``."""
    return [(j * s, min((j + 1) * s, d)) for j in range(math.ceil(d / s))]


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> Tensor:
    lim = math.sqrt(6.0 / (d_in + d_out))
    return Tensor(rng.uniform(-lim, lim, size=(d_in, d_out)), requires_grad=True)


def _zeros(*shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


@dataclass
class AxelLayerParams:
    W: Tensor
    b: Tensor
    log_beta: Tensor
    theta_raw: Tensor
    segment_size: int
    phi: list[tuple[Tensor, Tensor, Tensor, Tensor]] | None = None
    W_group: Tensor | None = None

    @property
    def variant(self) -> str:
        return "full" if self.phi is not None else "sim"

    @property
    def beta(self) -> float:
        return float(np.exp(self.log_beta.data[0, 0]))

    @property
    def theta(self) -> float:
        return float(np.tanh(self.theta_raw.data[0, 0]))

    def named(self):
        """Yield ``(name, tensor, weight_decay_applies)``."""
        yield "W", self.W, True
        yield "b", self.b, True
        yield "log_beta", self.log_beta, False
        yield "theta_raw", self.theta_raw, False
        if self.phi is not None:
            for j, (w1, b1, w2, b2) in enumerate(self.phi):
                yield f"phi{j}.W1", w1, True
                yield f"phi{j}.b1", b1, True
                yield f"phi{j}.W2", w2, True
                yield f"phi{j}.b2", b2, True
        else:
            yield "W_group", self.W_group, True


def init_layer(d_in: int, d_out: int, config: ModelConfig, rng: np.random.Generator) -> AxelLayerParams:
    s = config.segment_size
    p = AxelLayerParams(W=glorot(rng, d_in, d_out), b=_zeros(1, d_out),
                        log_beta=_zeros(1, 1), theta_raw=_zeros(1, 1), segment_size=s)
    if config.variant == "full":
        k = config.phi_hidden or 2 * s
        p.phi = []
        for a, z in segments(d_out, s):
            w = z - a
            p.phi.append((glorot(rng, 2 * w, k), _zeros(1, k), glorot(rng, k, w), _zeros(1, w)))
    else:
        p.W_group = _zeros(len(segments(d_out, s)), s)
    return p


# ------------------------------------------------------------------ layer stages

def transform(params: AxelLayerParams, X: Tensor) -> Tensor:
    return add(matmul(X, params.W), params.b)


def interaction_probs(params: AxelLayerParams, H: Tensor, graph: Graph, eps: float = 1e-8):
    """Gate probabilities ``sigmoid(beta (cos - theta))``.

    Returns ``(p_edge, p_self)``: an (m x 1) column over the undirected edges
    of ``graph`` (order of ``graph.edges``) and an (n x 1) column for the
    self-interaction of each node.
    """
    beta = exp(params.log_beta)
    theta = tanh(params.theta_raw)
    inc = graph.incidence
    hu = spmm(inc["u"], H, inc["u_T"])
    hv = spmm(inc["v"], H, inc["v_T"])
    s_edge = cosine_rows(hu, hv, eps)
    s_self = cosine_rows(H, H, eps)
    p_edge = sigmoid(mul(sub(s_edge, theta), beta))
    p_self = sigmoid(mul(sub(s_self, theta), beta))
    return p_edge, p_self


def _inverse_counts(graph: Graph, literal: bool) -> Tensor:
    deg = graph.degree.astype(float)
    den = np.maximum(deg, 1.0) if literal else deg + 1.0
    return Tensor((1.0 / den)[:, None])


def aggregate(H: Tensor, p_edge: Tensor, p_self: Tensor, graph: Graph,
              literal_normalization: bool = False) -> Tensor:
    """Gated mean over ``N(v) U {v}`` of the messages ``p_uv * H_u``."""
    inc = graph.incidence
    own = mul(H, p_self)
    if graph.num_edges:
        h_src = spmm(inc["src"], H, inc["src_T"])
        p_dir = spmm(inc["dup"], p_edge, inc["dup_T"])
        total = add(spmm(inc["scatter"], mul(h_src, p_dir), inc["scatter_T"]), own)
    else:
        total = own
    return mul(total, _inverse_counts(graph, literal_normalization))


def _blend(c: Tensor, a_seg: Tensor, h_seg: Tensor) -> Tensor:
    return add(mul(c, a_seg), mul(sub(Tensor(1.0), c), h_seg))


def copy_full(params: AxelLayerParams, H: Tensor, A: Tensor):
    """Segment-wise convex update with gates from per-segment two-layer networks.

    Returns ``(X_out, gates)`` where ``gates[j]`` is the (n x s_j) gate tensor.
    """
    if params.phi is None:
        raise ValueError("copy_full needs per-segment networks (variant='full')")
    segs = segments(H.shape[1], params.segment_size)
    if len(segs) != len(params.phi):
        raise RuntimeError(f"{len(segs)} segments but {len(params.phi)} gate networks")
    outs, gates = [], []
    for (a, z), (w1, b1, w2, b2) in zip(segs, params.phi):
        h_seg, a_seg = slice_cols(H, a, z), slice_cols(A, a, z)
        hidden = tanh(add(matmul(concat_cols([h_seg, a_seg]), w1), b1))
        c = sigmoid(add(matmul(hidden, w2), b2))
        outs.append(_blend(c, a_seg, h_seg))
        gates.append(c)
    return concat_cols(outs), gates


def copy_sim(params: AxelLayerParams, H: Tensor, A: Tensor):
    """Segment-wise convex update with node-independent gates ``sigmoid(W_group)``."""
    if params.W_group is None:
        raise ValueError("copy_sim needs W_group (variant='sim')")
    segs = segments(H.shape[1], params.segment_size)
    if len(segs) != params.W_group.shape[0]:
        raise RuntimeError(f"{len(segs)} segments but W_group has {params.W_group.shape[0]} rows")
    table = sigmoid(params.W_group)
    outs, gates = [], []
    for j, (a, z) in enumerate(segs):
        c = slice_cols(take_rows(table, [j]), 0, z - a)
        outs.append(_blend(c, slice_cols(A, a, z), slice_cols(H, a, z)))
        gates.append(c)
    return concat_cols(outs), gates


@dataclass
class LayerDiagnostics:
    p_edge: np.ndarray
    p_self: np.ndarray
    segment_copy_mean: np.ndarray
    beta: float
    theta: float


def layer_forward(params: AxelLayerParams, X: Tensor, graph: Graph, train_mode: bool = False,
                  rng: np.random.Generator | None = None, dropout_rate: float = 0.0,
                  literal_normalization: bool = False, eps: float = 1e-8):
    H = transform(params, X)
    p_edge, p_self = interaction_probs(params, H, graph, eps)
    A = aggregate(H, p_edge, p_self, graph, literal_normalization)
    if params.phi is not None:
        out, gates = copy_full(params, H, A)
    else:
        out, gates = copy_sim(params, H, A)
    if train_mode and dropout_rate > 0:
        out = dropout(out, dropout_rate, rng)
    diag = LayerDiagnostics(
        p_edge=p_edge.data[:, 0].copy(), p_self=p_self.data[:, 0].copy(),
        segment_copy_mean=np.array([g.data.mean() for g in gates]),
        beta=params.beta, theta=params.theta)
    return out, diag


# ------------------------------------------------------------------ models

@dataclass
class ForwardResult:
    output: Tensor
    embeddings: list[np.ndarray]
    diagnostics: list = field(default_factory=list)


class GraphModel:
    """Shared parameter bookkeeping for the node-level models."""

    config: object
    head_W: Tensor
    head_b: Tensor

    def named_parameters(self):
        raise NotImplementedError

    def parameters(self) -> list[Tensor]:
        return [t for _, t, _ in self.named_parameters()]

    def decay_flags(self) -> list[bool]:
        return [d for _, _, d in self.named_parameters()]

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t, _ in self.named_parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, t, _ in self.named_parameters():
            if state[name].shape != t.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {t.shape}")
            t.data = np.array(state[name], dtype=np.float64)

    def _head(self, x: Tensor) -> Tensor:
        out = add(matmul(x, self.head_W), self.head_b)
        return sigmoid(out) if self.config.task == "regress" else out

    def save(self, path, extra: dict | None = None) -> None:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model": type(self).__name__,
            "config": asdict(self.config),
            "d_in": self.d_in,
            "params": {name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
                       for name, t, _ in self.named_parameters()},
        }
        if extra:
            payload.update(extra)
        Path(path).write_text(json.dumps(payload))


class AxelGNN(GraphModel):
    """Stack of AxelGNN layers with a linear classification or sigmoid regression head."""

    def __init__(self, d_in: int, config: ModelConfig, seed=None):
        self.config = config
        self.d_in = d_in
        rng = np.random.default_rng(seed)
        dims = [d_in] + config.hidden_dims
        self.layers = [init_layer(dims[i], dims[i + 1], config, rng) for i in range(config.num_layers)]
        self.head_W = glorot(rng, dims[-1], config.out_dim)
        self.head_b = _zeros(1, config.out_dim)

    def named_parameters(self):
        for i, layer in enumerate(self.layers):
            for name, t, decay in layer.named():
                yield f"layer{i}.{name}", t, decay
        yield "head.W", self.head_W, True
        yield "head.b", self.head_b, True

    def forward(self, graph: Graph, X, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> ForwardResult:
        x = X if isinstance(X, Tensor) else Tensor(X)
        cfg = self.config
        embeddings, diags = [], []
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x, diag = layer_forward(layer, x, graph, train_mode and i < last, rng,
                                    cfg.dropout, cfg.literal_normalization, cfg.eps)
            embeddings.append(x.data)
            diags.append(diag)
        return ForwardResult(self._head(x), embeddings, diags)


def model_forward(config: ModelConfig, model: GraphModel, graph: Graph, X, train_mode: bool = False,
                  rng: np.random.Generator | None = None) -> ForwardResult:
    if model.config != config:
        raise ValueError("model was built with a different config")
    return model.forward(graph, X, train_mode, rng)


def load_checkpoint(path) -> GraphModel:
    from .baseline import MeanAggConfig, MeanAggGNN

    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not an axelgnn checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    kind = payload["model"]
    if kind == "AxelGNN":
        model = AxelGNN(payload["d_in"], ModelConfig(**payload["config"]))
    elif kind == "MeanAggGNN":
        model = MeanAggGNN(payload["d_in"], MeanAggConfig(**payload["config"]))
    else:
        raise ValueError(f"{path}: unknown model type {kind!r}")
    model.load_state({k: np.array(v["values"]).reshape(v["shape"]) for k, v in payload["params"].items()})
    return model
