"""
resparc __init__.py
"""

# Version of the resparc package
__version__ = "0.3.0"
__author__ = "Tiago Tresoldi"
__email__ = "tiago.tresoldi@lingfil.uu.se"

# Import from local modules
from .archsim import SimOptions, SimResult, simulate, switch_transfer, zero_check
from .benchmarks import benchmark
from .common import CapacityError, InputError, ResparcError, SimulationError
from .config import Config, load_config
from .costmodel import (
    CmosConfig,
    EnergyConfig,
    cmos_baseline,
    comparison,
    resparc_energy,
    resparc_latency,
    spike_stats,
)
from .harness import RunSpec, event_ablation, run_single, sweep_bits, sweep_mca, verify_oracle
from .mapper import ArchConfig, assign_and_place, compile_topology, pack_sparse, tile_dense, utilization
from .quantization import QuantConfig, SignedMode, quantize_matrix, quantize_weight
from .snn import LayerSpec, SnnTopology, SpikeTrain, if_step, rate_encode, reference_forward
from .topology_io import load_topology, parse_topology

# Build the namespace
__all__ = [
    "ArchConfig",
    "CapacityError",
    "CmosConfig",
    "Config",
    "EnergyConfig",
    "InputError",
    "LayerSpec",
    "QuantConfig",
    "ResparcError",
    "RunSpec",
    "SignedMode",
    "SimOptions",
    "SimResult",
    "SimulationError",
    "SnnTopology",
    "SpikeTrain",
    "assign_and_place",
    "benchmark",
    "cmos_baseline",
    "comparison",
    "compile_topology",
    "event_ablation",
    "if_step",
    "load_config",
    "load_topology",
    "pack_sparse",
    "parse_topology",
    "quantize_matrix",
    "quantize_weight",
    "rate_encode",
    "reference_forward",
    "resparc_energy",
    "resparc_latency",
    "run_single",
    "simulate",
    "spike_stats",
    "sweep_bits",
    "sweep_mca",
    "switch_transfer",
    "tile_dense",
    "utilization",
    "verify_oracle",
    "zero_check",
]
