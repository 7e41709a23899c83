import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qscgrn import grn
from qscgrn.grn import BaselineGRN, Edge, GeneNetwork

GENES = ["IRF4", "REL", "PAX5", "RELA"]


@pytest.mark.parametrize("value, kept", [(0.05, 0.0), (-0.10, -0.10), (-0.087, -0.087), (0.087, 0.087)])
def test_prune_threshold(value, kept):
    theta = np.array([[1.0, value], [0.0, 2.0]])
    adj = grn.prune(theta)
    assert adj[0, 1] == kept
    assert adj[0, 0] == adj[1, 1] == 0.0


theta_arrays = arrays(np.float64, st.tuples(st.integers(2, 5)).map(lambda t: (t[0], t[0])),
                      elements=st.floats(-3, 3))


@settings(max_examples=100, deadline=None)
@given(theta_arrays, st.floats(0, 1))
def test_prune_idempotent_and_edge_count(theta, threshold):
    once = grn.prune(theta, threshold)
    np.testing.assert_array_equal(grn.prune(once, threshold), once)
    n = theta.shape[0]
    offdiag = ~np.eye(n, dtype=bool)
    names = [f"g{i}" for i in range(n)]
    net = grn.to_network(once, names, threshold)
    expected = np.count_nonzero((np.abs(theta) >= threshold) & (theta != 0) & offdiag)
    assert len(net.edges) == expected
    for e in net.edges:
        assert e.source != e.target
        assert abs(e.weight) >= threshold
        k, p = names.index(e.source), names.index(e.target)
        assert np.sign(e.weight) == np.sign(theta[k, p])
        assert (e.sign == "up") == (e.weight > 0)


def test_to_network_examples():
    names = ["g0", "g1"]
    assert grn.to_network(np.zeros((2, 2)), names).edges == []
    net = grn.to_network(np.array([[0, 0.3], [0, 0]]), names)
    assert net.edges == [Edge("g0", "g1", 0.3)]
    assert net.edges[0].sign == "up"
    net = grn.to_network(np.array([[0, 0], [-0.2, 0]]), names)
    assert net.edges[0].source == "g1" and net.edges[0].target == "g0"
    assert net.edges[0].sign == "down"


def network_from(signs):
    return GeneNetwork(GENES, [Edge(s, t, 0.3 * v) for (s, t), v in signs.items()])


BASE = {("IRF4", "PAX5"): 1, ("PAX5", "REL"): -1, ("RELA", "IRF4"): 1}


def test_self_comparison_is_perfect():
    score = grn.score_against_baseline(network_from(BASE), BaselineGRN(BASE))
    assert score["accuracy"] == score["f1"] == score["precision"] == 1.0
    assert sum(score["confusion"].values()) == score["pairs"] == 12


def test_empty_prediction():
    score = grn.score_against_baseline(GeneNetwork(GENES, []), BaselineGRN(BASE))
    assert score["precision"] == 0.0 and not score["precision_defined"]
    assert score["f1"] == 0.0
    assert score["confusion"]["fn_missed"] == 3


def test_wrong_sign_counts_both_ways():
    pred = dict(BASE)
    pred[("PAX5", "REL")] = 1
    pred[("REL", "RELA")] = -1
    score = grn.score_against_baseline(network_from(pred), BaselineGRN(BASE))
    c = score["confusion"]
    assert c == dict(tp=2, tn=8, fp_absent=1, fn_missed=0, sign_mismatch=1)
    assert score["fp"] == 2 and score["fn"] == 1
    assert score["precision"] == pytest.approx(0.5)
    assert score["recall"] == pytest.approx(2 / 3)
    assert score["accuracy"] == pytest.approx(10 / 12)


def test_score_permutation_invariant():
    pred = {("IRF4", "PAX5"): 1, ("REL", "RELA"): -1, ("PAX5", "REL"): 1}
    a = grn.score_against_baseline(network_from(pred), BaselineGRN(BASE))
    shuffled = GeneNetwork(GENES[::-1], network_from(pred).edges[::-1])
    b = grn.score_against_baseline(shuffled, BaselineGRN(BASE))
    assert a == b


def test_score_errors():
    with pytest.raises(grn.UndefinedMetricError):
        grn.score_against_baseline(network_from(BASE), BaselineGRN({}))
    with pytest.raises(ValueError):
        grn.score_against_baseline(network_from(BASE), BaselineGRN({("X", "IRF4"): 1}))


def test_load_baseline(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("source,target,sign\nIRF4,PAX5,+\nPAX5,REL,-\nRELA,IRF4,activation\n")
    assert grn.load_baseline(path).edges == BASE
    path.write_text("IRF4,PAX5,?\n")
    with pytest.raises(ValueError):
        grn.load_baseline(path)


def test_export_empty(tmp_path):
    net = GeneNetwork(["a", "b"], [])
    dot = grn.export(net, tmp_path / "n.dot").read_text()
    assert dot.startswith("digraph") and "->" not in dot
    ET.parse(grn.export(net, tmp_path / "n.graphml"))
    assert json.loads(grn.export(net, tmp_path / "n.json").read_text())["edges"] == []


def test_export_single_edge_dot(tmp_path):
    net = GeneNetwork(["a", "b"], [Edge("a", "b", -0.4)])
    dot = grn.export(net, tmp_path / "n.dot").read_text()
    assert dot.count("->") == 1
    assert "color=red" in dot and "penwidth=2.6" in dot


def test_json_round_trip(tmp_path):
    net = GeneNetwork(GENES, [Edge("IRF4", "PAX5", 0.31), Edge("PAX5", "REL", -0.2)])
    back = grn.load_network_json(grn.export(net, tmp_path / "n.json"))
    assert set(back.edges) == set(net.edges)
    assert back.gene_names == GENES


def test_graphml_attributes(tmp_path):
    net = GeneNetwork(["a", "b"], [Edge("a", "b", 0.5)])
    root = ET.parse(grn.export(net, tmp_path / "n.graphml")).getroot()
    ns = {"g": "http://graphml.graphdrawing.org/xmlns"}
    data = {d.get("key"): d.text for d in root.findall(".//g:edge/g:data", ns)}
    assert data == {"weight": "0.5", "sign": "up"}


def test_csv_export_is_adjacency(tmp_path):
    net = GeneNetwork(["a", "b"], [Edge("b", "a", -0.3)])
    lines = grn.export(net, tmp_path / "adj.csv").read_text().splitlines()
    assert lines == [",a,b", "a,0,0", "b,-0.29999999999999999,0"]
    with pytest.raises(ValueError):
        grn.export(net, tmp_path / "n.png")
