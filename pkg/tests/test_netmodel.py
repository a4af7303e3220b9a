import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from offsetopt import generators, netmodel as nm
from conftest import E1_JSON, make_e1, random_unit

TWO_PI = 2 * math.pi


def test_e1_w_entries(e1_objective):
    _, ph, W = e1_objective
    np.testing.assert_allclose(ph.A, [1, -1j], atol=1e-15)
    np.testing.assert_allclose(ph.D, [1, 1], atol=1e-15)
    expect = np.array([[2, -1j, 1], [1j, 1, 0], [1, 0, 1]])
    np.testing.assert_allclose(W.dense(), expect, atol=1e-15)
    assert W.constant == pytest.approx(8 / TWO_PI**2, rel=1e-14)


def test_w_is_hermitian_and_skeleton_pattern():
    net, _, W = nm.build_objective(generators.generate("random-city", n=40, seed=4))
    M = W.dense()
    assert np.array_equal(M, M.conj().T)
    off = {(i, j) for i, j in zip(*np.nonzero(np.triu(M, 1)))}
    assert off == net.skeleton_edges()


def test_e1_queue_lengths(e1_objective):
    _, ph, _ = e1_objective
    Q, total = nm.queue_lengths(ph, np.array([1, 1j, 1]))
    np.testing.assert_allclose(Q, 0, atol=1e-15)
    assert total == pytest.approx(0, abs=1e-30)
    Q, _ = nm.queue_lengths(ph, np.ones(3))
    assert Q[1] == pytest.approx(math.sqrt(2) / TWO_PI, rel=1e-14)


def test_qcqp_objective(e1_objective):
    _, _, W = e1_objective
    assert nm.qcqp_objective(W, np.array([1, 1j, 1])) == pytest.approx(8.0)
    assert nm.qcqp_objective(sp.csr_matrix((4, 4)), np.ones(4)) == 0.0
    rng = np.random.default_rng(0)
    H = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    H = H + H.conj().T
    z = random_unit(rng, 5)
    assert nm.qcqp_objective(sp.csr_matrix(H), z) == pytest.approx(np.real(z.conj() @ H @ z), rel=1e-13)


def test_unit_modulus_rejected(e1_objective):
    _, ph, _ = e1_objective
    with pytest.raises(ValueError):
        nm.queue_lengths(ph, np.array([1, 1.01, 1]))


def test_flow_chain_and_split():
    net = nm.TrafficNetwork(2, (nm.Link(2, 0, flow=1.0), nm.Link(0, 1)), ((0, 1, 1.0),))
    assert nm.propagate_flows(net).flows[1] == pytest.approx(1.0)
    net = nm.TrafficNetwork(
        3, (nm.Link(3, 0, flow=1.0), nm.Link(0, 1), nm.Link(0, 2)), ((0, 1, 0.5), (0, 2, 0.5))
    )
    np.testing.assert_allclose(nm.propagate_flows(net).flows, [1.0, 0.5, 0.5])


def test_flow_ring_matches_dense_solve():
    links = (nm.Link(3, 0, flow=1.0), nm.Link(0, 1), nm.Link(1, 2), nm.Link(2, 0))
    ratios = ((0, 1, 1.0), (1, 2, 0.5), (2, 3, 0.5), (3, 1, 0.5))
    net = nm.TrafficNetwork(3, links, ratios)
    B = net.turn_matrix().toarray()
    expect = np.linalg.solve(np.eye(4) - B.T, [1.0, 0, 0, 0])
    np.testing.assert_allclose(nm.propagate_flows(net).flows, expect, rtol=1e-12)


def test_closed_cycle_is_ill_posed():
    links = (nm.Link(2, 0, flow=1.0), nm.Link(0, 1), nm.Link(1, 0))
    net = nm.TrafficNetwork(2, links, ((1, 2, 1.0), (2, 1, 1.0)))
    with pytest.raises(nm.IllPosedNetworkError):
        nm.propagate_flows(net)


def test_phasor_examples():
    # two feeders with D = 1 and D = i (green split 0.75) merge, half each, no delay
    net = nm.TrafficNetwork(
        3,
        (
            nm.Link(3, 0, flow=1.0, entry_amplitude=1.0),
            nm.Link(3, 1, flow=1.0, entry_amplitude=1.0),
            nm.Link(0, 2, green_split=0.0),
            nm.Link(1, 2, green_split=0.75),
            nm.Link(2, 0, travel_time=0.0),
            nm.Link(0, 1, travel_time=0.25),
        ),
        ((0, 2, 1.0), (1, 3, 1.0), (2, 4, 0.5), (3, 4, 0.5), (4, 5, 1.0)),
    )
    ph = nm.compute_phasors(nm.propagate_flows(net))
    assert ph.A[0] == pytest.approx(1.0) and ph.D[0] == pytest.approx(1.0)
    np.testing.assert_allclose(ph.D[2:4], [1, 1j], atol=1e-15)
    assert ph.A[4] == pytest.approx(0.5 + 0.5j)
    # link 4 has D = f = 1 (green split 0); a quarter-cycle delay turns it into -i
    assert ph.A[5] == pytest.approx(-1j)


def test_zero_flow_gives_zero_w():
    net = nm.TrafficNetwork(2, (nm.Link(0, 1, travel_time=0.2), nm.Link(1, 0)))
    _, _, W = nm.build_objective(net)
    assert not np.any(W.dense()) and W.constant == 0.0


@pytest.mark.parametrize(
    "bad",
    [
        nm.Link(0, 0),
        nm.Link(0, 1, green_split=1.0),
        nm.Link(0, 1, travel_time=1.0),
        nm.Link(0, 1, flow=-1.0),
        nm.Link(2, 0, flow=1.0, entry_amplitude=2.0),
        nm.Link(0, 2),
    ],
)
def test_validation_errors(bad):
    with pytest.raises(nm.NetworkError):
        nm.validate_network(nm.TrafficNetwork(2, (bad,)))


def test_turn_ratio_validation():
    links = (nm.Link(2, 0, flow=1.0), nm.Link(0, 1), nm.Link(1, 0))
    with pytest.raises(nm.NetworkError, match="do not meet"):
        nm.validate_network(nm.TrafficNetwork(2, links, ((0, 2, 0.5),)))
    with pytest.raises(nm.NetworkError, match="sum"):
        nm.validate_network(nm.TrafficNetwork(2, links, ((0, 1, 0.7), (1, 2, 0.2), (0, 1, 0.7))))


def test_json_round_trip(tmp_path):
    net = nm.network_from_dict(E1_JSON)
    assert net == make_e1()
    path = tmp_path / "net.json"
    big = nm.propagate_flows(generators.generate("grid", rows=3, cols=2, seed=1))
    nm.save_network(big, path)
    assert nm.load_network(path) == big


def test_json_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(nm.NetworkError, match="malformed"):
        nm.load_network(p)
    with pytest.raises(nm.NetworkError):
        nm.network_from_dict({"links": []})
    with pytest.raises(nm.NetworkError):
        nm.network_from_dict({"num_signals": 2, "links": [{"tail": "x", "head": 1}]})
    with pytest.raises(nm.NetworkError):
        nm.network_from_dict({"num_signals": 2, "links": [{"tail": 1, "head": 3}]})


def test_offsets_to_z():
    z = nm.offsets_to_z(np.array([0.0, 0.25]), 2)
    np.testing.assert_allclose(z, [1, 1j, 1], atol=1e-15)
    with pytest.raises(ValueError):
        nm.offsets_to_z(np.zeros(3), 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), kind=st.sampled_from(["grid", "ring", "tree", "random-city"]))
def test_psd_and_identity_property(seed, kind):
    params = {"grid": {"rows": 3, "cols": 4}, "ring": {"n": 7}, "tree": {"n": 9}, "random-city": {"n": 30}}[kind]
    _, ph, W = nm.build_objective(generators.generate(kind, seed=seed, **params))
    M = W.dense()
    assert np.linalg.eigvalsh(M).min() >= -1e-8 * np.linalg.norm(M)
    rng = np.random.default_rng(seed)
    for z in random_unit(rng, W.n, 10):
        _, total = nm.queue_lengths(ph, z)
        assert abs(total - (W.constant - nm.qcqp_objective(W, z) / TWO_PI**2)) <= 1e-10 * W.constant
