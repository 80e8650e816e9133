"""
Reading and writing of network topologies and weights.

Topologies are JSON documents with a list of layers:

    {
      "layers": [
        {"kind": "conv", "in_width": 16, "in_height": 16, "in_channels": 1,
         "kernel_size": 3, "out_channels": 4},
        {"kind": "subsample", "in_width": 14, "in_height": 14, "channels": 4,
         "window": 2, "stride": 2},
        {"kind": "dense", "n_in": 196, "n_out": 10, "threshold": 12.0}
      ],
      "random_weights": {"seed": 7, "low": -0.1, "high": 1.0}
    }

Weights of dense and convolutional layers come, in order of precedence, from
a sidecar binary file given by the caller, from a `"weights"` array inline
in the layer, from a sidecar file named by the top-level `"weights_file"`
entry, or are drawn at random as described by `"random_weights"`: `seed`,
`low`, `high`, and optionally `column_mean` and `grid`, any of the last four
overridden by the `"init"` entry of a layer.

Sidecar files hold, for every layer with weights (sub-sampling layers are
skipped), two little-endian unsigned 32-bit integers with the number of rows
and columns, followed by the weights as little-endian 32-bit floats in
row-major (input-major) order.
"""

# Import Python standard libraries
from dataclasses import replace
import json
import logging
import pathlib
from typing import List, Optional, Sequence, Union

# Import 3rd-party libraries
import numpy as np

# Import other modules from this library
from .common import InputError, rng_for
from .snn import LayerKind, LayerSpec, SnnTopology, build_connectivity

logger = logging.getLogger(__name__)

PathLike = Union[str, pathlib.Path]

# Fraction of the smallest full-input column current used as automatic
# threshold, so that every neuron fires at each step when all inputs spike
DEFAULT_MARGIN = 0.8

_LAYER_KEYS = {
    "dense": {"n_in", "n_out"},
    "conv": {"in_width", "in_height", "in_channels", "kernel_size", "out_channels"},
    "subsample": {"in_width", "in_height", "channels", "window", "stride"},
}
_OPTIONAL_KEYS = {"kind", "threshold", "weights", "init", "stride"}


def _layer_spec(entry: dict, index: int) -> LayerSpec:
    """
    Internal function building a `LayerSpec` (with a unit threshold) from
    its JSON description.
    """

    if not isinstance(entry, dict) or "kind" not in entry:
        raise InputError(f"layer {index}: every layer needs a `kind`")

    kind = entry["kind"]
    if kind not in _LAYER_KEYS:
        raise InputError(
            f"layer {index}: unknown kind `{kind}` (expected one of {', '.join(sorted(_LAYER_KEYS))})"
        )

    missing = _LAYER_KEYS[kind] - set(entry)
    if missing:
        raise InputError(f"layer {index}: missing {', '.join(sorted(missing))}")
    unknown = set(entry) - _LAYER_KEYS[kind] - _OPTIONAL_KEYS
    if unknown:
        raise InputError(f"layer {index}: unknown fields {', '.join(sorted(unknown))}")

    try:
        dims = {key: int(entry[key]) for key in _LAYER_KEYS[kind]}
        if kind == "dense":
            return LayerSpec.dense(dims["n_in"], dims["n_out"])
        if kind == "conv":
            return LayerSpec.conv(stride=int(entry.get("stride", 1)), **dims)
        return LayerSpec.subsample(**dims)
    except (TypeError, ValueError) as exc:
        raise InputError(f"layer {index}: {exc}") from exc


def read_weights(path: PathLike, layers: Sequence[LayerSpec]) -> List[Optional[np.ndarray]]:
    """
    Reads a sidecar weight file.

    :param path: The path to the binary file.
    :param layers: The layers the weights are for.
    :return: One matrix per layer, `None` for sub-sampling layers.
    """

    path = pathlib.Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read weights file `{path}`: {exc}") from exc

    weights: List[Optional[np.ndarray]] = []
    offset = 0
    for index, layer in enumerate(layers):
        shape = layer.weight_shape
        if shape is None:
            weights.append(None)
            continue

        if len(data) < offset + 8:
            raise InputError(f"{path}: truncated header for layer {index}")
        rows, cols = (int(dim) for dim in np.frombuffer(data, dtype="<u4", count=2, offset=offset))
        offset += 8

        if (rows, cols) != shape:
            raise InputError(
                f"{path}: layer {index}: weight shape {rows}x{cols} does not match "
                f"expected {shape[0]}x{shape[1]}"
            )
        if len(data) < offset + 4 * rows * cols:
            raise InputError(f"{path}: truncated weights for layer {index}")

        blob = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=offset)
        weights.append(blob.astype(np.float64).reshape(rows, cols))
        offset += 4 * rows * cols

    if offset != len(data):
        raise InputError(f"{path}: {len(data) - offset} unexpected trailing bytes")

    return weights


def write_weights(path: PathLike, weights: Sequence[Optional[np.ndarray]]):
    """
    Writes a sidecar weight file; `None` entries (sub-sampling layers) are
    skipped.
    """

    with open(path, "wb") as handler:
        for matrix in weights:
            if matrix is None:
                continue
            matrix = np.asarray(matrix)
            handler.write(np.asarray(matrix.shape, dtype="<u4").tobytes())
            handler.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def _random_weights(layer: LayerSpec, index: int, block: dict, init: dict) -> np.ndarray:
    """
    Draws the weights of a layer uniformly in `[low, high]`.

    Two optional keys, from the layer `init` or from the block, reshape the
    draw: `column_mean` shifts every column to that mean before clipping it
    back into the range, and `grid` snaps the weights to `grid` uniform
    steps of `max(|low|, |high|)`, so that devices with at least that many
    levels hold them exactly.
    """

    low = float(init.get("low", block.get("low", -1.0)))
    high = float(init.get("high", block.get("high", 1.0)))
    if not low < high:
        raise InputError(f"layer {index}: random weight range must satisfy low < high")

    rng = rng_for(block.get("seed", 0), index)
    matrix = rng.uniform(low, high, size=layer.weight_shape)

    column_mean = init.get("column_mean", block.get("column_mean"))
    if column_mean is not None:
        matrix = np.clip(matrix - matrix.mean(axis=0) + float(column_mean), low, high)

    grid = init.get("grid", block.get("grid"))
    if grid is not None:
        steps = int(grid)
        if steps < 1:
            raise InputError(f"layer {index}: the weight grid needs at least one step, got {grid}")
        scale = max(abs(low), abs(high))
        matrix = np.round(matrix * steps / scale) * scale / steps

    return matrix


def auto_threshold(layer: LayerSpec, weights: Optional[np.ndarray], margin: float) -> float:
    """
    Returns `margin` times the smallest column sum of the layer weights.

    With a positive margin below one, every neuron receives at least its
    threshold whenever all of its inputs spike.
    """

    sums = build_connectivity(layer, weights).weights.sum(axis=0)
    smallest = float(np.min(sums))
    if not smallest > 0.0:
        raise InputError(
            f"cannot derive an automatic threshold from a non-positive column sum ({smallest})"
        )

    return margin * smallest


def parse_topology(
    data: dict,
    base_dir: Optional[PathLike] = None,
    weights_path: Optional[PathLike] = None,
) -> SnnTopology:
    """
    Builds a topology from its JSON description.

    :param data: The decoded JSON document.
    :param base_dir: Directory against which `"weights_file"` is resolved.
    :param weights_path: Optional sidecar weight file, overriding all other
        weight sources.
    :return: The `SnnTopology`.
    """

    if not isinstance(data, dict) or not isinstance(data.get("layers"), list) or not data["layers"]:
        raise InputError("a topology needs a non-empty `layers` list")

    entries = data["layers"]
    layers = [_layer_spec(entry, index) for index, entry in enumerate(entries)]

    sidecar = None
    if weights_path is not None:
        sidecar = read_weights(weights_path, layers)
    elif "weights_file" in data:
        sidecar = read_weights(pathlib.Path(base_dir or ".") / data["weights_file"], layers)

    block = data.get("random_weights")
    margin = float((block or {}).get("threshold_margin", DEFAULT_MARGIN))

    weights: List[Optional[np.ndarray]] = []
    thresholds: List[float] = []
    for index, (layer, entry) in enumerate(zip(layers, entries)):
        generated = False
        if layer.weight_shape is None:
            matrix = None
        elif sidecar is not None:
            matrix = sidecar[index]
        elif "weights" in entry:
            try:
                matrix = np.asarray(entry["weights"], dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise InputError(f"layer {index}: weights must be a numeric matrix") from exc
            expected = layer.weight_shape
            if matrix.shape != expected:
                raise InputError(
                    f"layer {index}: weight shape {'x'.join(str(d) for d in matrix.shape)} "
                    f"does not match expected {expected[0]}x{expected[1]}"
                )
        elif block is not None:
            matrix = _random_weights(layer, index, block, entry.get("init", {}))
            generated = True
        else:
            raise InputError(f"layer {index}: no weights given and no `random_weights` block")

        threshold = entry.get("threshold")
        if threshold is None and generated:
            threshold = "auto"
        if threshold == "auto":
            if matrix is not None:
                # Mirror columns that could never drive the neuron; every
                # output of a column shares the same full-window sum
                flip = matrix.sum(axis=0) <= 0.0
                matrix = np.where(flip[None, :], np.abs(matrix), matrix)
            threshold = auto_threshold(layer, matrix, margin)
        elif threshold is None:
            threshold = 1.0

        try:
            thresholds.append(float(threshold))
        except (TypeError, ValueError) as exc:
            raise InputError(f"layer {index}: invalid threshold `{threshold}`") from exc
        weights.append(matrix)

    layers = [_with_threshold(layer, value, index) for index, (layer, value) in enumerate(zip(layers, thresholds))]

    return SnnTopology(layers, weights)


def _with_threshold(layer: LayerSpec, threshold: float, index: int) -> LayerSpec:
    layer = replace(layer, threshold=threshold)
    try:
        layer.validate()
    except InputError as exc:
        raise InputError(f"layer {index}: {exc}") from exc

    return layer


def load_topology(path: PathLike, weights_path: Optional[PathLike] = None) -> SnnTopology:
    """
    Loads a topology from a JSON file.

    :param path: The path to the JSON file.
    :param weights_path: Optional sidecar weight file.
    :return: The `SnnTopology`.
    """

    path = pathlib.Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read topology file `{path}`: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}, line {exc.lineno}: invalid JSON ({exc.msg})") from exc

    try:
        topology = parse_topology(data, path.parent, weights_path)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc

    logger.info(
        "loaded %s: %i layers, %i inputs, %i outputs",
        path.name,
        len(topology),
        topology.input_size,
        topology.output_size,
    )

    return topology


def topology_to_dict(topology: SnnTopology, inline: bool = True) -> dict:
    """
    Returns the JSON description of a topology, with explicit thresholds.

    :param inline: Whether to include the weights inline.
    """

    entries = []
    for layer, weights in zip(topology.layers, topology.weights):
        if layer.kind is LayerKind.DENSE:
            entry = {"kind": "dense", "n_in": layer.n_in, "n_out": layer.n_out}
        elif layer.kind is LayerKind.CONV:
            entry = {
                "kind": "conv",
                "in_width": layer.in_width,
                "in_height": layer.in_height,
                "in_channels": layer.in_channels,
                "kernel_size": layer.kernel_size,
                "out_channels": layer.out_channels,
                "stride": layer.stride,
            }
        else:
            entry = {
                "kind": "subsample",
                "in_width": layer.in_width,
                "in_height": layer.in_height,
                "channels": layer.in_channels,
                "window": layer.window,
                "stride": layer.stride,
            }
        entry["threshold"] = layer.threshold
        if inline and weights is not None:
            entry["weights"] = weights.tolist()
        entries.append(entry)

    return {"layers": entries}
