"""
test_topology_io
================

Tests for reading and writing topologies and weights in the `resparc`
package.
"""

# Import Python standard libraries
import json
import pathlib
import pytest

# Import 3rd-party libraries
import numpy as np

# Import the library being tested
import resparc
from resparc.benchmarks import benchmark
from resparc.snn import LayerKind
from resparc.topology_io import (
    auto_threshold,
    load_topology,
    parse_topology,
    read_weights,
    topology_to_dict,
    write_weights,
)

DATA = pathlib.Path(__file__).parent.parent / "data"


def test_minimal():
    topology = load_topology(DATA / "minimal.json")

    assert len(topology) == 1
    assert topology.input_size == 2
    assert topology.output_size == 1
    assert topology.layers[0].threshold == 1.0
    assert topology.weights[0].tolist() == [[0.5], [0.5]]


def test_shipped_benchmarks():
    """
    Test that the shipped files describe the built-in benchmarks.
    """

    for name in ["desk_mlp", "desk_cnn"]:
        from_file = load_topology(DATA / ("%s.json" % name))
        built_in = benchmark(name)
        assert [layer.threshold for layer in from_file.layers] == [
            layer.threshold for layer in built_in.layers
        ]
        for got, want in zip(from_file.weights, built_in.weights):
            assert np.array_equal(got, want)

    with pytest.raises(resparc.InputError):
        benchmark("lenet")


def test_auto_threshold():
    """
    Test that generated hidden layers fire under a full input.
    """

    cnn = benchmark("desk_cnn")
    hidden, weights = cnn.layers[0], cnn.weights[0]

    sums = weights.sum(axis=0)
    assert hidden.threshold == pytest.approx(0.8 * sums.min())
    assert np.all(sums >= hidden.threshold)
    assert cnn.layers[2].threshold == 15.0
    assert weights.min() >= -0.1
    assert cnn.weights[2].min() < 0.0
    assert [layer.kind for layer in cnn.layers] == [LayerKind.CONV, LayerKind.CONV, LayerKind.DENSE]
    assert cnn.input_size == 256
    assert cnn.output_size == 10

    with pytest.raises(resparc.InputError):
        auto_threshold(resparc.LayerSpec.dense(2, 1), np.array([[-1.0], [0.5]]), 0.8)


def test_perceptron_weights():
    """
    Test that the perceptron weights lie on the 4-bit grid, with centred
    columns and thresholds between grid points.
    """

    topology = benchmark("desk_mlp")
    hidden, output = topology.weights

    for matrix in topology.weights:
        assert np.allclose(matrix * 15, np.round(matrix * 15), rtol=0.0, atol=1e-9)
        assert np.abs(matrix).max() == 1.0
    assert np.all(np.abs(hidden.mean(axis=0) - 0.08) < 0.01)
    assert np.all(np.abs(output.mean(axis=0)) < 0.05)
    assert hidden.min() < 0.0

    # Every hidden neuron fires at every step under a full input
    assert np.all(hidden.sum(axis=0) >= topology.layers[0].threshold)

    for layer in topology.layers:
        offset = layer.threshold * 15 - np.round(layer.threshold * 15)
        assert abs(offset) > 0.1


def test_random_weights_shape():
    data = {
        "layers": [{"kind": "dense", "n_in": 50, "n_out": 3}],
        "random_weights": {"seed": 1, "low": -1.0, "high": 1.0, "column_mean": 0.25, "grid": 4},
    }
    weights = parse_topology(data).weights[0]

    assert set(np.unique(weights * 4)) <= set(range(-4, 5))
    assert np.all(np.abs(weights.mean(axis=0) - 0.25) < 0.2)

    data["layers"][0]["init"] = {"grid": 0}
    with pytest.raises(resparc.InputError, match="grid"):
        parse_topology(data)


def test_random_weights_seed():
    data = {
        "layers": [{"kind": "dense", "n_in": 5, "n_out": 3}],
        "random_weights": {"seed": 3, "low": 0.0, "high": 1.0},
    }
    first = parse_topology(data)
    second = parse_topology(data)
    other = parse_topology({**data, "random_weights": {"seed": 4, "low": 0.0, "high": 1.0}})

    assert np.array_equal(first.weights[0], second.weights[0])
    assert not np.array_equal(first.weights[0], other.weights[0])
    assert first.weights[0].min() >= 0.0


def test_sidecar(tmp_path):
    """
    Test sidecar weight files and their precedence over inline weights.
    """

    data = {
        "layers": [
            {"kind": "conv", "in_width": 4, "in_height": 4, "in_channels": 1, "kernel_size": 3, "out_channels": 2},
            {"kind": "subsample", "in_width": 2, "in_height": 2, "channels": 2, "window": 2, "stride": 2},
            {"kind": "dense", "n_in": 2, "n_out": 2, "weights": [[1.0, 0.0], [0.0, 1.0]]},
        ]
    }
    weights = [np.linspace(-1.0, 1.0, 18).reshape(9, 2), None, np.array([[0.25, 0.5], [0.75, 1.0]])]
    path = tmp_path / "weights.bin"
    write_weights(path, weights)

    assert path.stat().st_size == 8 + 18 * 4 + 8 + 4 * 4

    topology = parse_topology(data, weights_path=path)
    assert np.allclose(topology.weights[0], weights[0].astype(np.float32))
    assert topology.weights[1] is None
    assert topology.weights[2].tolist() == [[0.25, 0.5], [0.75, 1.0]]

    # Named by the topology itself, relative to its directory
    (tmp_path / "net.json").write_text(json.dumps({**data, "weights_file": "weights.bin"}))
    assert load_topology(tmp_path / "net.json").weights[2].tolist() == [[0.25, 0.5], [0.75, 1.0]]


def test_sidecar_errors(tmp_path):
    layers = [resparc.LayerSpec.dense(2, 2)]
    path = tmp_path / "weights.bin"

    write_weights(path, [np.ones((2, 2))])
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(resparc.InputError, match="truncated"):
        read_weights(path, layers)

    write_weights(path, [np.ones((2, 2))])
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(resparc.InputError, match="trailing"):
        read_weights(path, layers)

    write_weights(path, [np.ones((2, 3))])
    with pytest.raises(resparc.InputError, match="2x3"):
        read_weights(path, layers)


@pytest.mark.parametrize(
    "data,message",
    [
        [{"layers": []}, "non-empty"],
        [{"layers": [{"n_in": 2, "n_out": 1}]}, "kind"],
        [{"layers": [{"kind": "lstm"}]}, "unknown kind"],
        [{"layers": [{"kind": "dense", "n_in": 2}]}, "missing n_out"],
        [{"layers": [{"kind": "dense", "n_in": 2, "n_out": 1, "bias": 0}]}, "unknown fields bias"],
        [{"layers": [{"kind": "dense", "n_in": 2, "n_out": 1}]}, "no weights"],
        [{"layers": [{"kind": "dense", "n_in": 2, "n_out": 1, "weights": [[1.0, 2.0]]}]}, "1x2"],
        [
            {"layers": [{"kind": "dense", "n_in": 2, "n_out": 1, "weights": [[1.0], [1.0]], "threshold": -1}]},
            "threshold",
        ],
    ],
)
def test_parse_errors(data, message):
    with pytest.raises(resparc.InputError, match=message):
        parse_topology(data)


def test_load_errors(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n "layers": [\n  {"kind": "dense",}\n ]\n}\n')
    with pytest.raises(resparc.InputError, match="line 3"):
        load_topology(path)

    with pytest.raises(resparc.InputError, match="cannot read"):
        load_topology(tmp_path / "missing.json")


def test_topology_to_dict():
    topology = benchmark("desk_cnn")
    again = parse_topology(json.loads(json.dumps(topology_to_dict(topology))))

    assert [layer.threshold for layer in again.layers] == [layer.threshold for layer in topology.layers]
    assert all(np.array_equal(a, b) for a, b in zip(again.weights, topology.weights))
