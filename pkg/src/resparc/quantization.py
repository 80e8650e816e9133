"""
Discretization of synaptic weights to memristor conductance levels.

A crossbar stores each weight as the conductance of the device at a cross
point. Devices are programmed to one of `L = 2**bits` levels, linearly spaced
in conductance between `g_min = 1 / r_max` (level 0) and `g_max = 1 / r_min`
(level `L - 1`). A column driven by spiking rows at `v_read` sources the
current `v_read * sum(G_i)`, the analog inner product the architecture is
built around.

As conductances are non-negative, signed weights use pairs of columns in
`Differential` mode: the magnitude of a weight is programmed in the `plus` or
the `minus` column according to its sign, the other device staying at level
0, and the column currents are subtracted. In `Unsigned` mode negative
weights are rejected and the `g_min` baseline of the spiking rows is
subtracted analytically before integration.
"""

# Import Python standard libraries
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

# Import 3rd-party libraries
import numpy as np

# Import other modules from this library
from .common import InputError


class SignedMode(Enum):
    """
    How signed weights are realized on crossbars.
    """

    DIFFERENTIAL = "differential"
    UNSIGNED = "unsigned"


@dataclass(frozen=True)
class QuantConfig:
    """
    Device and quantization parameters.

    The defaults are a 4-bit (16 level) device over 20k--200k ohms, read at
    0.5 V (half of a 1 V supply).
    """

    bits: int = 4
    r_min: float = 20e3
    r_max: float = 200e3
    v_read: float = 0.5
    signed_mode: SignedMode = SignedMode.DIFFERENTIAL

    def __post_init__(self):
        if isinstance(self.signed_mode, str):
            try:
                object.__setattr__(self, "signed_mode", SignedMode(self.signed_mode.lower()))
            except ValueError:
                raise InputError(f"unknown signed mode `{self.signed_mode}`")

        if not 1 <= self.bits <= 8:
            raise InputError(f"bits must be in [1, 8], got {self.bits}")
        if not 0.0 < self.r_min < self.r_max:
            raise InputError(
                f"resistance range must satisfy 0 < r_min < r_max, got {self.r_min}, {self.r_max}"
            )
        if not self.v_read > 0.0:
            raise InputError(f"read voltage must be positive, got {self.v_read}")

    @property
    def levels(self) -> int:
        return 1 << self.bits

    @property
    def top_level(self) -> int:
        return self.levels - 1

    @property
    def g_min(self) -> float:
        return 1.0 / self.r_max

    @property
    def g_max(self) -> float:
        return 1.0 / self.r_min

    @property
    def g_step(self) -> float:
        """
        Conductance difference between consecutive levels.
        """

        return (self.g_max - self.g_min) / self.top_level

    @property
    def current_quantum(self) -> float:
        """
        Current of a single spiking row through one conductance step, in amps.
        """

        return self.v_read * self.g_step

    @property
    def differential(self) -> bool:
        return self.signed_mode is SignedMode.DIFFERENTIAL

    @property
    def columns_per_output(self) -> int:
        """
        Physical crossbar columns used by a logical output neuron.
        """

        return 2 if self.differential else 1


@dataclass(frozen=True)
class ConductanceCell:
    """
    A single programmed device.
    """

    level: int
    conductance: float


@dataclass(frozen=True)
class QuantizedEntry:
    """
    The pair of levels encoding one weight; `minus` is always 0 in
    `Unsigned` mode.
    """

    plus: int
    minus: int

    @property
    def signed_level(self) -> int:
        return self.plus - self.minus


@dataclass(frozen=True, eq=False)
class QuantizedColumn:
    """
    The quantized weights of a crossbar column (or differential column pair).
    """

    plus: np.ndarray
    minus: np.ndarray
    w_max: float

    @property
    def rows(self) -> int:
        return len(self.plus)

    @property
    def signed_levels(self) -> np.ndarray:
        return self.plus.astype(np.int64) - self.minus.astype(np.int64)


@dataclass(frozen=True, eq=False)
class QuantizedMatrix:
    """
    The quantized weights of a whole connectivity matrix.
    """

    plus: np.ndarray
    minus: np.ndarray
    w_max: float

    @property
    def signed_levels(self) -> np.ndarray:
        return self.plus.astype(np.int64) - self.minus.astype(np.int64)

    def column(self, index: int) -> QuantizedColumn:
        return QuantizedColumn(self.plus[:, index], self.minus[:, index], self.w_max)


def _levels(magnitudes: np.ndarray, w_max: float, cfg: QuantConfig) -> np.ndarray:
    """
    Internal function mapping weight magnitudes to levels, rounding half up.
    """

    scaled = np.floor(magnitudes / w_max * cfg.top_level + 0.5)
    return np.minimum(scaled, cfg.top_level).astype(np.int64)


def _check_range(weights: np.ndarray, w_max: float, cfg: QuantConfig):
    """
    Internal function checking the preconditions of quantization.
    """

    if not w_max > 0.0:
        raise InputError(f"w_max must be positive, got {w_max}")
    if np.any(np.abs(weights) > w_max):
        raise InputError(f"weight magnitude exceeds w_max={w_max}; rescale before quantizing")
    if not cfg.differential and np.any(weights < 0.0):
        raise InputError("negative weights cannot be encoded in unsigned mode")


def quantize_weight(w: float, w_max: float, cfg: QuantConfig) -> QuantizedEntry:
    """
    Quantizes a single weight.

    :param w: The weight, with `|w| <= w_max`.
    :param w_max: The scale of the layer (its largest weight magnitude).
    :param cfg: The quantization configuration.
    :return: The `QuantizedEntry` with the plus and minus levels.
    """

    _check_range(np.asarray([w]), w_max, cfg)
    level = int(_levels(np.asarray([abs(w)]), w_max, cfg)[0])

    if w < 0.0:
        return QuantizedEntry(0, level)
    return QuantizedEntry(level, 0)


def quantize_matrix(weights: np.ndarray, w_max: float, cfg: QuantConfig) -> QuantizedMatrix:
    """
    Quantizes a full weight (or connectivity) matrix, entry by entry.
    """

    weights = np.asarray(weights, dtype=np.float64)
    _check_range(weights, w_max, cfg)

    levels = _levels(np.abs(weights), w_max, cfg)
    plus = np.where(weights >= 0.0, levels, 0)
    minus = np.where(weights < 0.0, levels, 0)

    return QuantizedMatrix(plus, minus, w_max)


def quantize_column(weights: Sequence[float], w_max: float, cfg: QuantConfig) -> QuantizedColumn:
    """
    Quantizes the weights of a single column.
    """

    matrix = quantize_matrix(np.asarray(weights, dtype=np.float64)[:, None], w_max, cfg)
    return matrix.column(0)


def level_to_conductance(level: int, cfg: QuantConfig) -> float:
    """
    Returns the conductance of a level, in siemens.
    """

    if not 0 <= level <= cfg.top_level:
        raise InputError(f"level {level} out of range [0, {cfg.top_level}]")

    return cfg.g_min + level * (cfg.g_max - cfg.g_min) / cfg.top_level


def program_cell(level: int, cfg: QuantConfig) -> ConductanceCell:
    """
    Returns the device programmed to a level.
    """

    return ConductanceCell(level, level_to_conductance(level, cfg))


def _conductances(levels: np.ndarray, cfg: QuantConfig) -> np.ndarray:
    return cfg.g_min + np.asarray(levels, dtype=np.float64) * (cfg.g_max - cfg.g_min) / cfg.top_level


def column_current(spikes: Sequence[int], column: QuantizedColumn, cfg: QuantConfig) -> float:
    """
    Returns the current sourced by a column for a vector of input spikes.

    In `Differential` mode this is `v_read * sum(spike_i * (G+_i - G-_i))`, in
    which the `g_min` baseline of the two devices cancels out. In `Unsigned`
    mode it is the raw `v_read * sum(spike_i * G_i)`, baseline included (see
    `baseline_current()`).

    :param spikes: Binary input vector, as long as the column.
    :param column: The quantized column.
    :param cfg: The quantization configuration.
    :return: The column current, in amps.
    """

    spikes = np.asarray(spikes, dtype=np.float64)
    if spikes.shape != (column.rows,):
        raise InputError(f"got {spikes.size} spikes for a column of {column.rows} rows")

    if cfg.differential:
        delta = _conductances(column.plus, cfg) - _conductances(column.minus, cfg)
        return float(cfg.v_read * np.dot(spikes, delta))

    return float(cfg.v_read * np.dot(spikes, _conductances(column.plus, cfg)))


def baseline_current(spikes: Sequence[int], cfg: QuantConfig) -> float:
    """
    Returns the `g_min` baseline current of the spiking rows of a column.

    This is zero in `Differential` mode; in `Unsigned` mode it is subtracted
    from `column_current()` before integration.
    """

    if cfg.differential:
        return 0.0
    return float(cfg.v_read * cfg.g_min * np.sum(np.asarray(spikes, dtype=np.float64)))


def integrated_current(spikes: Sequence[int], column: QuantizedColumn, cfg: QuantConfig) -> float:
    """
    Returns the current a neuron integrates from a column.
    """

    return column_current(spikes, column, cfg) - baseline_current(spikes, cfg)


def effective_weight(entry: QuantizedEntry, w_max: float, cfg: QuantConfig) -> float:
    """
    Returns the real weight represented by a quantized entry.
    """

    return entry.signed_level / cfg.top_level * w_max


def effective_matrix(matrix: QuantizedMatrix, cfg: QuantConfig) -> np.ndarray:
    """
    Returns the real weights represented by a quantized matrix.
    """

    return matrix.signed_levels / cfg.top_level * matrix.w_max


def kappa(w_max: float, cfg: QuantConfig) -> float:
    """
    Amps of integrated current per unit of effective weight.

    Every integrated current equals `kappa * sum(spike_i * effective_weight_i)`,
    and the neuron threshold of mapped execution is the topology threshold
    scaled by the same constant.
    """

    return cfg.v_read * (cfg.g_max - cfg.g_min) / w_max


def level_threshold(threshold: float, w_max: float, cfg: QuantConfig) -> float:
    """
    Expresses a threshold in units of `cfg.current_quantum`.

    Mapped execution tracks currents as integer multiples of the current of a
    single conductance step, so that accumulations are exact.
    """

    return threshold * cfg.top_level / w_max


def quantization_step(w_max: float, cfg: QuantConfig) -> float:
    """
    Returns the largest possible quantization error, `w_max / (2 (L - 1))`.
    """

    return w_max / (2.0 * cfg.top_level)


def describe(cfg: QuantConfig) -> str:
    """
    Returns a short human readable summary of a configuration.
    """

    return "%i bits, %s, %.3g-%.3g ohm, %.3g V" % (
        cfg.bits,
        cfg.signed_mode.value,
        cfg.r_min,
        cfg.r_max,
        cfg.v_read,
    )


__all__ = [
    "ConductanceCell",
    "QuantConfig",
    "QuantizedColumn",
    "QuantizedEntry",
    "QuantizedMatrix",
    "SignedMode",
    "baseline_current",
    "column_current",
    "effective_matrix",
    "effective_weight",
    "integrated_current",
    "kappa",
    "level_threshold",
    "level_to_conductance",
    "program_cell",
    "quantization_step",
    "quantize_column",
    "quantize_matrix",
    "quantize_weight",
]
