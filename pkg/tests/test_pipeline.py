import json

import numpy as np
import pytest

from offsetopt import generators, netmodel as nm, oracle, pipeline
from conftest import make_e1


def test_e1_end_to_end():
    res = pipeline.solve_network(make_e1())
    d = res.to_dict()
    assert d["ratio"] == pytest.approx(1.0, abs=1e-4)
    theta = np.array(d["offsets"])
    gap = np.mod(theta - [0.0, 0.25] + 0.5, 1.0) - 0.5
    assert np.abs(gap).max() <= 1e-3
    assert set(d["timings"]) == {"model", "order", "symbolic", "ctc", "solve", "completion", "rounding"}
    assert d["sec"] >= 0 and d["n"] == 2 and d["links"] == 2


def test_tree_is_exact():
    res = pipeline.solve_network(generators.generate("tree", n=50, seed=0))
    assert res.omega == 2
    assert res.solution.ratio == pytest.approx(1.0, abs=1e-4)


def test_grid_10_seed_1():
    res = pipeline.solve_network(generators.generate("grid", rows=10, cols=10, seed=1))
    assert res.sdp_solution.optimal
    assert res.solution.ratio >= 0.98
    assert res.solution.ratio <= 1 + 1e-6
    d = res.to_dict()
    assert d["lower"] <= d["upper"]


def test_queue_total_matches_identity():
    res = pipeline.solve_network(generators.generate("random-city", n=50, seed=3))
    W = res.objective
    ident = W.constant - res.solution.rounded_value / (2 * np.pi) ** 2
    assert res.solution.queue_total == pytest.approx(ident, rel=1e-9)


def test_orderings_agree():
    net = generators.generate("random-city", n=40, seed=8)
    vals = []
    for order in ("amd", "natural", "reverse"):
        res = pipeline.solve_network(net, pipeline.PipelineOptions(order=order))
        vals.append(res.sdp_solution.objective)
    assert max(vals) - min(vals) <= 1e-7 * abs(vals[0])
    with pytest.raises(ValueError):
        pipeline.solve_network(net, pipeline.PipelineOptions(order="metis"))


def test_orderings_give_close_queue_totals():
    net = generators.generate("grid", rows=4, cols=4, seed=2)
    a = pipeline.solve_network(net, pipeline.PipelineOptions(order="amd"))
    b = pipeline.solve_network(net, pipeline.PipelineOptions(order="natural"))
    assert a.solution.queue_total == pytest.approx(b.solution.queue_total, rel=1e-4)


def test_clique_modes_agree():
    net = generators.generate("grid", rows=5, cols=5, seed=4)
    a = pipeline.solve_network(net, pipeline.PipelineOptions(cliques="column"))
    b = pipeline.solve_network(net, pipeline.PipelineOptions(cliques="maximal"))
    assert a.sdp_solution.objective == pytest.approx(b.sdp_solution.objective, rel=1e-7)


def test_deterministic_dict():
    net = generators.generate("random-city", n=30, seed=2)
    a = pipeline.solve_network(net).to_dict(include_timings=False)
    b = pipeline.solve_network(net).to_dict(include_timings=False)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert "timings" not in a


def test_matches_dense_oracle_on_small_city():
    net = generators.generate("random-city", n=25, seed=6)
    res = pipeline.solve_network(net)
    rep = oracle.dense_cross_check(net)
    assert rep.ok
    assert res.sdp_solution.objective == pytest.approx(rep.value_dense, rel=1e-6)
