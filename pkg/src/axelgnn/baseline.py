"""GCN-style mean-aggregation network used as the degradation reference.

Each layer computes ``relu(mean_{N(v) U {v}}(X) W + b)``; there is no gating
and no copying, so deep stacks smooth node representations together.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .model import ForwardResult, GraphModel, _zeros, glorot
from .tensor import Tensor, add, dropout, matmul, mul, relu, spmm


@dataclass
class MeanAggConfig:
    num_layers: int = 2
    hidden_dim: int = 64
    dropout: float = 0.5
    task: str = "classify"
    num_classes: int = 2

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.task not in ("classify", "regress"):
            raise ValueError(f"task must be 'classify' or 'regress', got {self.task!r}")

    @property
    def out_dim(self) -> int:
        return self.num_classes if self.task == "classify" else 1


def mean_aggregate(X: Tensor, graph: Graph) -> Tensor:
    inc = graph.incidence
    inv = Tensor((1.0 / (graph.degree + 1.0))[:, None])
    if graph.num_edges == 0:
        return mul(X, inv)
    nbr = spmm(inc["scatter"], spmm(inc["src"], X, inc["src_T"]), inc["scatter_T"])
    return mul(add(nbr, X), inv)


class MeanAggGNN(GraphModel):
    def __init__(self, d_in: int, config: MeanAggConfig, seed=None):
        self.config = config
        self.d_in = d_in
        rng = np.random.default_rng(seed)
        dims = [d_in] + [config.hidden_dim] * config.num_layers
        self.weights = [(glorot(rng, dims[i], dims[i + 1]), _zeros(1, dims[i + 1]))
                        for i in range(config.num_layers)]
        self.head_W = glorot(rng, dims[-1], config.out_dim)
        self.head_b = _zeros(1, config.out_dim)

    def named_parameters(self):
        for i, (w, b) in enumerate(self.weights):
            yield f"layer{i}.W", w, True
            yield f"layer{i}.b", b, True
        yield "head.W", self.head_W, True
        yield "head.b", self.head_b, True

    def forward(self, graph: Graph, X, train_mode: bool = False,
                rng: np.random.Generator | None = None) -> ForwardResult:
        x = X if isinstance(X, Tensor) else Tensor(X)
        embeddings = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(self.weights):
            x = relu(add(matmul(mean_aggregate(x, graph), w), b))
            if train_mode and i < last and self.config.dropout > 0:
                x = dropout(x, self.config.dropout, rng)
            embeddings.append(x.data)
        return ForwardResult(self._head(x), embeddings)
