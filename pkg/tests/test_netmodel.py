from __future__ import annotations

import os

import msgspec
import networkx as nx
import numpy as np
import pytest

from voltvar.exceptions import ContractViolation, InputError, ParameterError, TopologyError
from voltvar.netmodel import (
    Bus,
    FeederNetwork,
    Line,
    NetworkFile,
    baseline_voltage,
    build_incidence,
    compute_sensitivities,
    graph_matrices,
    network_from_file,
)
from voltvar.pack import read_json

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


def laplacian_oracle(net: FeederNetwork) -> np.ndarray:
    g = nx.Graph()
    g.add_nodes_from(range(len(net.buses)))
    for line in net.lines:
        g.add_edge(line.from_bus, line.to_bus, w=1.0 / line.x)
    L = nx.laplacian_matrix(g, nodelist=range(len(net.buses)), weight="w").toarray()
    return L[1:, 1:]


def test_two_bus_incidence(two_bus):
    net, _ = two_bus
    gm = build_incidence(net)
    np.testing.assert_array_equal(gm.M0, [[1.0], [-1.0]])
    np.testing.assert_array_equal(gm.m0, [1.0])
    np.testing.assert_array_equal(gm.M, [[-1.0]])
    np.testing.assert_array_equal(gm.dx, [0.5])
    assert gm.X is None


def test_two_bus_sensitivities(two_bus):
    _, gm = two_bus
    np.testing.assert_allclose(gm.X, [[0.5]])
    np.testing.assert_allclose(gm.R, [[0.2]])
    np.testing.assert_allclose(gm.B, [[2.0]])


def test_feeder16_incidence(feeder16, feeder16_meshed):
    _, gm = feeder16
    assert gm.M.shape == (15, 15)
    assert np.linalg.matrix_rank(gm.M) == 15
    assert gm.is_tree

    _, gm = feeder16_meshed
    assert gm.M.shape == (15, 17)
    assert np.linalg.matrix_rank(gm.B) == 15
    assert not gm.is_tree


def test_incidence_columns(feeder):
    _, gm = feeder
    assert np.all((gm.M0 == 1).sum(axis=0) == 1)
    assert np.all((gm.M0 == -1).sum(axis=0) == 1)
    assert np.all((gm.M0 != 0).sum(axis=0) == 2)


def test_per_unit_conversion():
    doc = read_json(os.path.join(DATA_DIR, "feeder16.json"), NetworkFile)
    net = network_from_file(msgspec.structs.replace(doc, s_base_mva=1.0))
    gm = build_incidence(net)
    np.testing.assert_allclose(gm.dx, 0.733 * 1e6 / 12000**2)
    assert gm.dx[0] == pytest.approx(5.09e-3, abs=1e-5)
    assert net.p[0] == pytest.approx(-0.1)
    assert net.q_max[0] == pytest.approx(0.1)


def test_baseline_voltage(two_bus, feeder16):
    net, gm = two_bus
    np.testing.assert_allclose(baseline_voltage(gm, [0.0], [0.0], 1.0), [1.0])
    np.testing.assert_allclose(baseline_voltage(gm, [-0.1], [0.05], 1.0), [0.955])

    net, gm = feeder16
    np.testing.assert_allclose(baseline_voltage(gm, np.zeros(15), np.zeros(15)), np.ones(15))
    v_bar = baseline_voltage(gm, net.p, net.qc, net.v0)
    assert v_bar.min() < 0.95
    assert np.argmin(v_bar) == 14

    with pytest.raises(ContractViolation):
        baseline_voltage(gm, np.zeros(3), np.zeros(15))


def test_random_matrix_properties(make_tree, make_meshed):
    rng = np.random.default_rng(7)
    nets = [make_tree(rng, int(rng.integers(1, 51))) for _ in range(200)]
    nets += [make_meshed(rng, int(rng.integers(2, 31))) for _ in range(50)]
    for net in nets:
        gm = graph_matrices(net)
        n = net.n
        np.testing.assert_array_equal(gm.X, gm.X.T)
        np.testing.assert_array_equal(gm.R, gm.R.T)
        assert np.linalg.eigvalsh(gm.X)[0] > 0
        assert np.linalg.eigvalsh(gm.R)[0] > 0
        assert np.max(np.abs(gm.B @ gm.X - np.eye(n))) < 1e-8
        np.testing.assert_allclose(gm.B, laplacian_oracle(net), rtol=0, atol=1e-10)
        np.testing.assert_allclose(gm.slack, np.ones(n), rtol=0, atol=1e-10)
        if gm.is_tree:
            np.testing.assert_allclose(
                np.linalg.solve(gm.M.T, gm.m0), -np.ones(n), rtol=0, atol=1e-10
            )


def test_tree_and_laplacian_paths_agree(make_tree):
    rng = np.random.default_rng(11)
    for _ in range(30):
        gm = build_incidence(make_tree(rng, int(rng.integers(1, 16))))
        tree = compute_sensitivities(gm, method="tree")
        generic = compute_sensitivities(gm, method="laplacian")
        np.testing.assert_allclose(tree.X, generic.X, rtol=0, atol=1e-10)
        np.testing.assert_allclose(tree.R, generic.R, rtol=0, atol=1e-10)


def test_laplacian_is_orientation_invariant(feeder16_meshed):
    net, gm = feeder16_meshed
    flipped = FeederNetwork(
        buses=net.buses,
        lines=[Line(l.to_bus, l.from_bus, l.r, l.x) for l in net.lines],
    )
    np.testing.assert_allclose(graph_matrices(flipped).B, gm.B, rtol=0, atol=1e-12)
    np.testing.assert_allclose(graph_matrices(flipped).X, gm.X, rtol=0, atol=1e-10)


def test_matrices_are_read_only(feeder16):
    _, gm = feeder16
    with pytest.raises(ValueError):
        gm.X[0, 0] = 1.0


@pytest.mark.parametrize(
    "lines, error",
    [
        ([Line(0, 1, 0.1, 0.0), Line(1, 2, 0.1, 0.2)], ParameterError),
        ([Line(0, 1, 0.1, 0.2), Line(1, 1, 0.1, 0.2)], ParameterError),
        ([Line(0, 1, -0.1, 0.2), Line(1, 2, 0.1, 0.2)], ParameterError),
        ([Line(0, 1, 0.1, 0.2), Line(1, 0, 0.1, 0.2)], TopologyError),
        ([Line(0, 1, 0.1, 0.2)], TopologyError),
    ],
)
def test_invalid_networks(lines, error):
    net = FeederNetwork(buses=[Bus(0), Bus(1), Bus(2)], lines=lines)
    with pytest.raises(error):
        build_incidence(net)


def test_invalid_buses():
    lines = [Line(0, 1, 0.1, 0.2)]
    with pytest.raises(ParameterError):
        FeederNetwork(buses=[Bus(0), Bus(1, q_min=0.1, q_max=-0.1)], lines=lines).validate()
    with pytest.raises(ParameterError):
        FeederNetwork(buses=[Bus(0), Bus(1, c=-1.0)], lines=lines).validate()
    with pytest.raises(ParameterError):
        FeederNetwork(buses=[Bus(0), Bus(1, mu=0.0)], lines=lines).validate()
    with pytest.raises(ParameterError):
        FeederNetwork(buses=[Bus(0), Bus(2)], lines=[Line(0, 2, 0.1, 0.2)]).validate()


def test_method_checks(feeder16_meshed):
    net, _ = feeder16_meshed
    gm = build_incidence(net)
    with pytest.raises(ContractViolation):
        compute_sensitivities(gm, method="tree")
    with pytest.raises(ValueError):
        compute_sensitivities(gm, method="newton")

    lossless = FeederNetwork(
        buses=net.buses, lines=[Line(l.from_bus, l.to_bus, 0.0, l.x) for l in net.lines]
    )
    with pytest.raises(ParameterError):
        graph_matrices(lossless)


def test_load_network_errors(tmp_path):
    with pytest.raises(InputError, match="not found"):
        read_json(tmp_path / "missing.json", NetworkFile)

    bad_type = tmp_path / "bad_type.json"
    bad_type.write_text(
        '{"buses": [{"id": 0}, {"id": 1}], '
        '"lines": [{"from": 0, "to": 1, "r_ohm": 0.1, "x_ohm": "abc"}]}'
    )
    with pytest.raises(InputError, match=r"lines\[0\]\.x_ohm"):
        read_json(bad_type, NetworkFile)

    bad_syntax = tmp_path / "bad_syntax.json"
    bad_syntax.write_text('{\n  "buses": [\n    {"id": 0},,\n  ]\n}\n')
    with pytest.raises(InputError, match="line 3"):
        read_json(bad_syntax, NetworkFile)
