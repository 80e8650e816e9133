"""
Desk-scale benchmark networks.

Both networks draw their weights at random under a fixed seed and end with
a dense classifier of balanced weights and an explicit threshold.

The convolutional network uses mostly excitatory hidden weights and
automatic thresholds, so that every hidden neuron fires at every step under
a fully active input.

The perceptron draws its weights on a grid of fifteen steps, which 4-bit
and wider devices represent exactly, and centres every hidden column on a
small positive mean, so that which hidden neurons fire depends on which
pixels are active. Its thresholds lie between grid points, so no membrane
potential ever equals a threshold. Under a full input every hidden neuron
still fires at every step.
"""

# Import Python standard libraries
from typing import Dict, Optional

# Import other modules from this library
from .common import InputError
from .snn import SnnTopology
from .topology_io import parse_topology


def desk_mlp(seed: int = 7) -> dict:
    """
    Returns the description of a 784-128-10 perceptron.
    """

    return {
        "name": "desk_mlp",
        "layers": [
            {
                "kind": "dense",
                "n_in": 784,
                "n_out": 128,
                "threshold": 48.0123,
                "init": {"column_mean": 0.08},
            },
            {
                "kind": "dense",
                "n_in": 128,
                "n_out": 10,
                "threshold": 9.9877,
                "init": {"column_mean": 0.0},
            },
        ],
        "random_weights": {"seed": seed, "low": -1.0, "high": 1.0, "grid": 15},
    }


def desk_cnn(seed: int = 7) -> dict:
    """
    Returns the description of a small convolutional network on 16x16
    inputs: two 3x3 convolutions with four channels and a dense classifier.
    """

    return {
        "name": "desk_cnn",
        "layers": [
            {
                "kind": "conv",
                "in_width": 16,
                "in_height": 16,
                "in_channels": 1,
                "kernel_size": 3,
                "out_channels": 4,
            },
            {
                "kind": "conv",
                "in_width": 14,
                "in_height": 14,
                "in_channels": 4,
                "kernel_size": 3,
                "out_channels": 4,
            },
            {
                "kind": "dense",
                "n_in": 576,
                "n_out": 10,
                "threshold": 15.0,
                "init": {"low": -1.0, "high": 1.0},
            },
        ],
        "random_weights": {"seed": seed, "low": -0.1, "high": 1.0, "threshold_margin": 0.8},
    }


BENCHMARKS = {"desk_mlp": desk_mlp, "desk_cnn": desk_cnn}


def benchmark(name: str, seed: Optional[int] = None) -> SnnTopology:
    """
    Builds one of the shipped benchmarks by name.
    """

    if name not in BENCHMARKS:
        raise InputError(f"unknown benchmark `{name}` (expected one of {', '.join(sorted(BENCHMARKS))})")

    kwargs: Dict[str, int] = {} if seed is None else {"seed": seed}
    return parse_topology(BENCHMARKS[name](**kwargs))
