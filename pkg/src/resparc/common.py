"""
Module with utility data and functions.
"""

# Import Python standard libraries
import hashlib
from typing import Hashable, Optional

# Import 3rd-party libraries
import numpy as np


class ResparcError(Exception):
    """
    Base class for all the errors raised by the library.

    Each error carries the exit status the command-line tool returns when the
    error reaches it.
    """

    exit_code = 1


class InputError(ResparcError, ValueError):
    """
    Invalid input: parse failures, dimension mismatches, out-of-range values.
    """

    exit_code = 1


class CapacityError(ResparcError):
    """
    The network does not fit the configured core.
    """

    exit_code = 2


class SimulationError(ResparcError):
    """
    Failure during architectural simulation (routing miss, buffer overflow).
    """

    exit_code = 3


def seed_to_key(seed: Optional[Hashable]) -> int:
    """
    Maps a user provided seed to a 64-bit integer key.

    Integers are used as they are (modulo 2**64), while strings, floats and
    other hashable values are hashed, so that any seed allowed by the
    command line leads to reproducible results.

    :param seed: The user seed; `None` is treated as zero.
    :return: An unsigned 64-bit integer key.
    """

    if seed is None:
        return 0

    if isinstance(seed, (int, np.integer)) and not isinstance(seed, bool):
        return int(seed) % (1 << 64)

    digest = hashlib.sha256(str(seed).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def counter_uniform(seed: Optional[Hashable], timesteps: int, width: int) -> np.ndarray:
    """
    Returns a `timesteps x width` matrix of uniform draws in [0, 1).

    Every neuron reads its own stream of numpy's counter-based Philox
    generator, keyed by the seed and starting at a counter that holds the
    neuron index. The draw at `(t, i)` is thus a pure function of
    `(seed, i, t)`: it does not depend on the shape of the matrix nor on the
    order of evaluation, which makes spike trains reproducible across
    machines and slices.

    :param seed: The user seed.
    :param timesteps: Number of rows.
    :param width: Number of columns (neurons).
    :return: A float64 matrix with values in [0, 1).
    """

    key = seed_to_key(seed)
    draws = np.empty((timesteps, width))
    for neuron in range(width):
        stream = np.random.Generator(np.random.Philox(key=key, counter=[0, neuron, 0, 0]))
        draws[:, neuron] = stream.random(timesteps)

    return draws


def rng_for(seed: Optional[Hashable], *salt: int) -> np.random.Generator:
    """
    Returns a numpy generator derived from a seed and an optional salt.

    :param seed: The user seed.
    :param salt: Integers distinguishing independent streams from the same seed.
    :return: A `numpy.random.Generator`.
    """

    return np.random.default_rng([seed_to_key(seed), *[int(value) for value in salt]])
