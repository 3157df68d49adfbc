import numpy as np

from axelgnn.bench import (STAGES, aggregation_ladder, bench_layer, doubling_ratios, linear_within,
                           sim_faster_violations)
from axelgnn.graph import Graph
from axelgnn.model import aggregate
from axelgnn.tensor import Tensor


def test_bench_rows():
    rows = bench_layer(dims=(8,), sizes=(40,), repeats=1)
    assert len(rows) == 2
    for r in rows:
        assert all(r[f"{s}_s"] >= 0 for s in STAGES)
        assert r["total_s"] == sum(r[f"{s}_s"] for s in STAGES)


def test_violations_logic():
    rows = [{"n": 10, "d": 64, "variant": "full", "total_s": 1.0},
            {"n": 10, "d": 64, "variant": "sim", "total_s": 2.0},
            {"n": 10, "d": 16, "variant": "full", "total_s": 1.0},
            {"n": 10, "d": 16, "variant": "sim", "total_s": 2.0}]
    assert sim_faster_violations(rows) == [(10, 64)]


def test_ratios():
    rows = [{"m": 100, "aggregate_s": 1.0}, {"m": 200, "aggregate_s": 2.0}, {"m": 400, "aggregate_s": 9.0}]
    assert doubling_ratios(rows) == [2.0, 4.5]
    assert not linear_within(rows)
    assert linear_within(rows[:2])


def test_ladder_shape():
    rows = aggregation_ladder(n=100, d=4, edge_counts=(50, 100), repeats=1)
    assert [r["m"] for r in rows] == [50, 100]


def test_empty_graph_fast():
    g = Graph(1000)
    H = Tensor(np.ones((1000, 16)))
    import time
    t0 = time.perf_counter()
    aggregate(H, Tensor(np.zeros((0, 1))), Tensor(np.ones((1000, 1))), g)
    assert time.perf_counter() - t0 < 0.05
