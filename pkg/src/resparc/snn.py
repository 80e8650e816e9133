"""
Spiking neural network topologies and the dense reference simulator.

This module defines layered spiking networks (dense, convolutional and
sub-sampling layers) built from integrate-and-fire neurons, the spike
encoding of inputs, and `reference_forward()`, a straightforward dense
simulator that serves as the oracle against which the mapped architecture is
checked.

Neurons follow the integrate-and-fire model with reset by subtraction: the
input current of a timestep is added to the membrane potential and, if the
potential reaches the threshold, the neuron emits a single spike and the
threshold is subtracted from the potential (carrying any overshoot into the
next timestep).
"""

# Import Python standard libraries
from dataclasses import dataclass, field
from enum import Enum
import logging
from typing import Hashable, List, Optional, Sequence, Tuple, Union

# Import 3rd-party libraries
import numpy as np

# Import other modules from this library
from . import common
from .common import InputError
from .quantization import QuantConfig, level_threshold, quantize_matrix

logger = logging.getLogger(__name__)


class LayerKind(Enum):
    """
    Kinds of layers supported in a topology.
    """

    DENSE = "dense"
    CONV = "conv"
    SUBSAMPLE = "subsample"


@dataclass(frozen=True)
class LayerSpec:
    """
    Description of a single layer of neurons.

    Layers should be built with the `dense()`, `conv()` and `subsample()`
    constructors. Convolutional and sub-sampling layers use "valid" windows
    only (no padding), and both their inputs and outputs are laid out in
    channel-major order, that is, the neuron at channel `c`, row `y` and
    column `x` has index `(c * height + y) * width + x`.
    """

    kind: LayerKind
    n_in: int = 0
    n_out: int = 0
    in_width: int = 0
    in_height: int = 0
    in_channels: int = 0
    kernel_size: int = 0
    out_channels: int = 0
    stride: int = 1
    threshold: float = 1.0

    @classmethod
    def dense(cls, n_in: int, n_out: int, threshold: float = 1.0) -> "LayerSpec":
        """
        Builds a fully connected layer.
        """

        layer = cls(LayerKind.DENSE, n_in=n_in, n_out=n_out, threshold=threshold)
        layer.validate()
        return layer

    @classmethod
    def conv(
        cls,
        in_width: int,
        in_height: int,
        in_channels: int,
        kernel_size: int,
        out_channels: int,
        stride: int = 1,
        threshold: float = 1.0,
    ) -> "LayerSpec":
        """
        Builds a convolutional layer with a shared kernel.
        """

        layer = cls(
            LayerKind.CONV,
            in_width=in_width,
            in_height=in_height,
            in_channels=in_channels,
            kernel_size=kernel_size,
            out_channels=out_channels,
            stride=stride,
            threshold=threshold,
        )
        layer.validate()
        return layer

    @classmethod
    def subsample(
        cls,
        in_width: int,
        in_height: int,
        channels: int,
        window: int,
        stride: int,
        threshold: float = 1.0,
    ) -> "LayerSpec":
        """
        Builds a sub-sampling layer, averaging each window of each channel.
        """

        layer = cls(
            LayerKind.SUBSAMPLE,
            in_width=in_width,
            in_height=in_height,
            in_channels=channels,
            kernel_size=window,
            out_channels=channels,
            stride=stride,
            threshold=threshold,
        )
        layer.validate()
        return layer

    def validate(self):
        """
        Checks the layer invariants, raising `InputError` on failure.
        """

        if not self.threshold > 0.0 or not np.isfinite(self.threshold):
            raise InputError(f"layer threshold must be positive, got {self.threshold}")

        if self.kind is LayerKind.DENSE:
            if self.n_in < 1 or self.n_out < 1:
                raise InputError(
                    f"dense layer dimensions must be positive, got {self.n_in}x{self.n_out}"
                )
            return

        dims = [
            self.in_width,
            self.in_height,
            self.in_channels,
            self.kernel_size,
            self.out_channels,
            self.stride,
        ]
        if min(dims) < 1:
            raise InputError(f"{self.kind.value} layer dimensions must be positive")

        for name, size in [("width", self.in_width), ("height", self.in_height)]:
            if size < self.kernel_size:
                raise InputError(
                    f"{self.kind.value} window {self.kernel_size} larger than input {name} {size}"
                )
            if (size - self.kernel_size) % self.stride != 0:
                raise InputError(
                    f"{self.kind.value} output {name} is not integral: "
                    f"({size} - {self.kernel_size}) mod {self.stride} != 0"
                )

    @property
    def window(self) -> int:
        return self.kernel_size

    @property
    def out_width(self) -> int:
        if self.kind is LayerKind.DENSE:
            return self.n_out
        return (self.in_width - self.kernel_size) // self.stride + 1

    @property
    def out_height(self) -> int:
        if self.kind is LayerKind.DENSE:
            return 1
        return (self.in_height - self.kernel_size) // self.stride + 1

    @property
    def input_size(self) -> int:
        """
        Number of neurons feeding the layer.
        """

        if self.kind is LayerKind.DENSE:
            return self.n_in
        return self.in_width * self.in_height * self.in_channels

    @property
    def output_size(self) -> int:
        """
        Number of neurons in the layer.
        """

        if self.kind is LayerKind.DENSE:
            return self.n_out
        return self.out_width * self.out_height * self.out_channels

    @property
    def fan_in(self) -> int:
        """
        Number of synapses per output neuron.
        """

        if self.kind is LayerKind.DENSE:
            return self.n_in
        if self.kind is LayerKind.CONV:
            return self.kernel_size * self.kernel_size * self.in_channels
        return self.kernel_size * self.kernel_size

    @property
    def weight_shape(self) -> Optional[Tuple[int, int]]:
        """
        Shape of the learned weight matrix, or `None` for fixed-weight layers.

        Convolutional kernels are stored as a `(k * k * in_channels) x
        out_channels` matrix whose row `(c * k + dy) * k + dx` holds the
        kernel tap at channel `c`, offset `(dy, dx)`.
        """

        if self.kind is LayerKind.DENSE:
            return (self.n_in, self.n_out)
        if self.kind is LayerKind.CONV:
            return (self.fan_in, self.out_channels)
        return None


def _check_weights(layer: LayerSpec, weights: Optional[np.ndarray], index: int) -> Optional[np.ndarray]:
    """
    Internal function validating (and copying) the weights of a layer.
    """

    shape = layer.weight_shape
    if shape is None:
        if weights is not None:
            raise InputError(f"layer {index}: {layer.kind.value} layers take no weights")
        return None

    if weights is None:
        raise InputError(f"layer {index}: missing weights of shape {shape[0]}x{shape[1]}")

    weights = np.array(weights, dtype=np.float64)
    if weights.shape != shape:
        raise InputError(
            f"layer {index}: weight shape {'x'.join(str(d) for d in weights.shape)} "
            f"does not match expected {shape[0]}x{shape[1]}"
        )
    if not np.all(np.isfinite(weights)):
        raise InputError(f"layer {index}: weights must be finite")

    weights.setflags(write=False)
    return weights


class SnnTopology:
    """
    A layered spiking network: layer descriptions plus one weight matrix per
    layer (`None` for sub-sampling layers, whose weights are fixed).

    Weight matrices are copied and flagged read-only when the topology is
    built.
    """

    def __init__(self, layers: Sequence[LayerSpec], weights: Sequence[Optional[np.ndarray]]):
        if not layers:
            raise InputError("a topology needs at least one layer")
        if len(layers) != len(weights):
            raise InputError(
                f"got {len(layers)} layers but {len(weights)} weight matrices"
            )

        for idx, (prev, layer) in enumerate(zip(layers, layers[1:])):
            if prev.output_size != layer.input_size:
                raise InputError(
                    f"layer {idx + 1}: input size {layer.input_size} does not match "
                    f"the {prev.output_size} outputs of layer {idx}"
                )

        checked = [_check_weights(layer, w, idx) for idx, (layer, w) in enumerate(zip(layers, weights))]

        self.layers: Tuple[LayerSpec, ...] = tuple(layers)
        self.weights: Tuple[Optional[np.ndarray], ...] = tuple(checked)

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def output_size(self) -> int:
        return self.layers[-1].output_size

    def __len__(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class SpikeTrain:
    """
    Binary spike raster of `timesteps x width` entries.
    """

    spikes: np.ndarray

    def __post_init__(self):
        spikes = np.asarray(self.spikes)
        if spikes.ndim != 2:
            raise InputError("a spike train must be a two-dimensional timesteps x neurons array")
        if spikes.size and not np.all((spikes == 0) | (spikes == 1)):
            raise InputError("spike trains can only hold 0 or 1 entries")

        spikes = spikes.astype(np.uint8)
        spikes.setflags(write=False)
        object.__setattr__(self, "spikes", spikes)

    @property
    def timesteps(self) -> int:
        return self.spikes.shape[0]

    @property
    def width(self) -> int:
        return self.spikes.shape[1]

    def counts(self) -> np.ndarray:
        """
        Returns the number of spikes emitted by each neuron.
        """

        return self.spikes.sum(axis=0, dtype=np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SpikeTrain):
            return NotImplemented
        return self.spikes.shape == other.spikes.shape and bool(
            np.array_equal(self.spikes, other.spikes)
        )

    def __hash__(self):
        return hash((self.spikes.shape, self.spikes.tobytes()))


@dataclass
class NeuronState:
    """
    State of an integrate-and-fire neuron (or of a vector of neurons).
    """

    membrane_potential: Union[float, np.ndarray]
    threshold: float = 1.0


@dataclass(frozen=True, eq=False)
class ConnectivityMatrix:
    """
    Input x output synapse matrix of a layer, the object the mapper partitions.

    `weights` holds the synaptic weights and `mask` the synapse structure:
    every `True` entry of `mask` is a synapse that must be mapped, even if its
    weight happens to be zero. Dense layers have a full mask, convolutional and
    sub-sampling layers a sparse one.
    """

    weights: np.ndarray
    mask: np.ndarray
    sparse: bool = False
    w_max: float = field(init=False)

    def __post_init__(self):
        weights = np.where(self.mask, self.weights, 0.0)
        weights.setflags(write=False)
        mask = np.array(self.mask, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "mask", mask)

        # Layers whose weights are all zero get a unit scale, so that
        # quantization is still defined
        w_max = float(np.max(np.abs(weights))) if weights.size else 0.0
        object.__setattr__(self, "w_max", w_max if w_max > 0.0 else 1.0)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weights.shape

    @property
    def nnz(self) -> int:
        return int(self.mask.sum())

    def column_rows(self, column: int) -> np.ndarray:
        """
        Returns the (ascending) input indices of the synapses of an output.
        """

        return np.flatnonzero(self.mask[:, column])


def _window_inputs(layer: LayerSpec, channels: Sequence[int]) -> np.ndarray:
    """
    Internal function enumerating receptive fields.

    Returns an array of shape `(len(channels) * k * k, out_h * out_w)` whose
    entry `[(c * k + dy) * k + dx, oy * out_w + ox]` is the input index read
    by tap `(c, dy, dx)` of the output at `(oy, ox)`.
    """

    k, stride = layer.kernel_size, layer.stride
    out_y, out_x = np.meshgrid(
        np.arange(layer.out_height), np.arange(layer.out_width), indexing="ij"
    )
    chan, d_y, d_x = np.meshgrid(
        np.asarray(channels), np.arange(k), np.arange(k), indexing="ij"
    )

    rows = chan.ravel()[:, None] * layer.in_height + out_y.ravel()[None, :] * stride + d_y.ravel()[:, None]
    return rows * layer.in_width + out_x.ravel()[None, :] * stride + d_x.ravel()[:, None]


def build_connectivity(layer: LayerSpec, weights: Optional[np.ndarray]) -> ConnectivityMatrix:
    """
    Builds the connectivity matrix of a layer.

    Dense layers map to their own weight matrix. Convolutional layers unroll
    the shared kernel into a sparse matrix whose column for each output neuron
    has synapses exactly at the input positions of its receptive field.
    Sub-sampling layers become sparse averaging matrices with uniform weights
    `1 / window**2`.

    :param layer: The layer description.
    :param weights: The layer weights (`None` for sub-sampling layers).
    :return: The `ConnectivityMatrix` of the layer.
    """

    layer.validate()
    weights = _check_weights(layer, weights, 0)

    if layer.kind is LayerKind.DENSE:
        return ConnectivityMatrix(weights, np.ones(weights.shape, dtype=bool), sparse=False)

    matrix = np.zeros((layer.input_size, layer.output_size))
    mask = np.zeros((layer.input_size, layer.output_size), dtype=bool)
    per_channel = layer.out_height * layer.out_width

    if layer.kind is LayerKind.CONV:
        rows = _window_inputs(layer, range(layer.in_channels))
        for out_c in range(layer.out_channels):
            cols = out_c * per_channel + np.arange(per_channel)
            matrix[rows, cols[None, :]] = weights[:, out_c][:, None]
            mask[rows, cols[None, :]] = True
    else:
        value = 1.0 / (layer.window * layer.window)
        for chan in range(layer.in_channels):
            rows = _window_inputs(layer, [chan])
            cols = chan * per_channel + np.arange(per_channel)
            matrix[rows, cols[None, :]] = value
            mask[rows, cols[None, :]] = True

    return ConnectivityMatrix(matrix, mask, sparse=True)


def topology_connectivity(topology: SnnTopology) -> List[ConnectivityMatrix]:
    """
    Returns the connectivity matrices of all layers of a topology.
    """

    return [
        build_connectivity(layer, weights)
        for layer, weights in zip(topology.layers, topology.weights)
    ]


def integrate_and_fire(
    potential: np.ndarray, current: np.ndarray, threshold: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized integrate-and-fire update, shared by all simulators.

    :param potential: Membrane potentials (float64).
    :param current: Input currents of this timestep, in the same unit.
    :param threshold: Firing threshold, in the same unit.
    :return: A tuple of updated potentials and the uint8 spike vector.
    """

    potential = potential + current
    spikes = potential >= threshold
    potential = np.where(spikes, potential - threshold, potential)

    return potential, spikes.astype(np.uint8)


def if_step(state: NeuronState, input_current: float) -> Tuple[NeuronState, int]:
    """
    Advances an integrate-and-fire neuron by one timestep.

    At most one spike is emitted per timestep, however large the overshoot.

    :param state: The neuron state before the step.
    :param input_current: The input current of this step.
    :return: The new state and the emitted spike (0 or 1).
    """

    potential, spike = integrate_and_fire(
        np.asarray(state.membrane_potential, dtype=np.float64),
        np.asarray(input_current, dtype=np.float64),
        state.threshold,
    )

    if potential.ndim == 0:
        return NeuronState(float(potential), state.threshold), int(spike)

    return NeuronState(potential, state.threshold), spike


def rate_encode(values: Sequence[float], timesteps: int, seed: Optional[Hashable] = None) -> SpikeTrain:
    """
    Encodes values in [0, 1] as Bernoulli spike trains.

    The neuron `i` spikes at timestep `t` when a uniform draw, a pure function
    of `(seed, i, t)`, is below `values[i]`. Raising a value therefore never
    removes spikes, and the expected spike count of a neuron is
    `values[i] * timesteps`.

    :param values: The values (e.g., normalized pixel intensities).
    :param timesteps: The length of the train.
    :param seed: The seed of the counter-based generator.
    :return: The encoded `SpikeTrain`.
    """

    values = np.asarray(values, dtype=np.float64).ravel()
    if timesteps < 1:
        raise InputError(f"the number of timesteps must be positive, got {timesteps}")
    if not np.all((values >= 0.0) & (values <= 1.0)):
        raise InputError("values for rate encoding must be in the [0, 1] range")

    draws = common.counter_uniform(seed, timesteps, len(values))
    return SpikeTrain((draws < values[None, :]).astype(np.uint8))


@dataclass(frozen=True, eq=False)
class LayerOperator:
    """
    A layer ready for simulation: the matrix applied to the input spikes and
    the threshold, both in the same current unit.

    Without quantization the matrix holds the real weights. With quantization
    it holds signed integer conductance levels and the threshold is expressed
    in units of one conductance step, so that all accumulations are exact.
    """

    matrix: np.ndarray
    threshold: float


def layer_operators(topology: SnnTopology, quant: Optional[QuantConfig] = None) -> List[LayerOperator]:
    """
    Builds the per-layer operators used by `reference_forward()`.
    """

    operators = []
    for layer, conn in zip(topology.layers, topology_connectivity(topology)):
        if quant is None:
            operators.append(LayerOperator(conn.weights, layer.threshold))
        else:
            qmatrix = quantize_matrix(conn.weights, conn.w_max, quant)
            operators.append(
                LayerOperator(
                    qmatrix.signed_levels,
                    level_threshold(layer.threshold, conn.w_max, quant),
                )
            )

    return operators


def reference_forward(
    topology: SnnTopology,
    train: SpikeTrain,
    quant: Optional[QuantConfig] = None,
) -> List[SpikeTrain]:
    """
    Dense reference simulation of a topology.

    At every timestep, layer by layer, each neuron receives the sum of the
    weights of its spiking inputs and is updated with the integrate-and-fire
    rule. When `quant` is given, the quantized effective weights are used.

    :param topology: The network to simulate.
    :param train: The input spike train, as wide as the first layer input.
    :param quant: An optional quantization configuration.
    :return: The output `SpikeTrain` of every layer.
    """

    if train.width != topology.input_size:
        raise InputError(
            f"input train has {train.width} neurons but the topology expects {topology.input_size}"
        )

    operators = layer_operators(topology, quant)
    integer = quant is not None

    potentials = [np.zeros(op.matrix.shape[1]) for op in operators]
    outputs = [np.zeros((train.timesteps, op.matrix.shape[1]), dtype=np.uint8) for op in operators]

    for step in range(train.timesteps):
        spikes = train.spikes[step]
        for idx, op in enumerate(operators):
            if integer:
                current = spikes.astype(np.int64) @ op.matrix
            else:
                current = spikes.astype(np.float64) @ op.matrix
            potentials[idx], spikes = integrate_and_fire(potentials[idx], current, op.threshold)
            outputs[idx][step] = spikes

    return [SpikeTrain(out) for out in outputs]


def classify(train: SpikeTrain) -> int:
    """
    Returns the index of the neuron with most spikes (lowest index on ties).
    """

    return int(np.argmax(train.counts()))
