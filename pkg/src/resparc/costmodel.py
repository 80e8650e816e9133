"""
Energy and latency models.

`resparc_energy()` and `resparc_latency()` turn the event counters of a
simulation into reports, weighting every event with a per-event energy (or
cycle count) from the configuration; `cmos_baseline()` estimates the cost of
the same inference on an event-driven digital accelerator from the spike
activity of the reference simulation.

All models are linear in the counters. The default constants are
calibration values chosen to reproduce the qualitative behaviour of the
architecture at desk scale; they are not measurements.
"""

# Import Python standard libraries
from dataclasses import dataclass, field
import math
from typing import Dict, List, Optional, Sequence

# Import 3rd-party libraries
import numpy as np

# Import other modules from this library
from .archsim import SimResult
from .common import InputError
from .mapper import MappingPlan
from .snn import SnnTopology, SpikeTrain, topology_connectivity


def _check_fields(obj, names: Sequence[str], section: str):
    for name in names:
        value = getattr(obj, name)
        if not np.isfinite(value) or value < 0.0:
            raise InputError(f"{section}.{name} must be a non-negative number, got {value}")


@dataclass(frozen=True)
class EnergyConfig:
    """
    Per-event energies (joules), static powers (watts) and cycle time
    (seconds) of the architecture.

    The energy of a crossbar read is affine in its geometry,
    `xbar_base + xbar_cell * R * C + xbar_column * C`, covering drivers,
    array and column sensing.
    """

    xbar_base: float = 1.0e-12
    xbar_cell: float = 1.0e-15
    xbar_column: float = 5.0e-15
    neuron_integrate: float = 5.0e-14
    spike: float = 2.0e-14
    switch_hop: float = 2.0e-13
    buffer_access: float = 1.0e-14
    bus_broadcast: float = 1.0e-12
    sram_read: float = 5.0e-13
    sram_write: float = 5.0e-13
    cext: float = 1.0e-14
    mpe_static_power: float = 2.0e-5
    switch_static_power: float = 1.0e-5
    cycle_time: float = 1.0e-9

    def __post_init__(self):
        _check_fields(self, list(self.__dataclass_fields__), "energy")
        if not self.cycle_time > 0.0:
            raise InputError(f"energy.cycle_time must be positive, got {self.cycle_time}")

    def e_xbar_read(self, rows: int, cols: int) -> float:
        """
        Energy of one activation of a `rows x cols` crossbar.
        """

        return self.xbar_base + self.xbar_cell * rows * cols + self.xbar_column * cols

    def scaled(self, factor: float) -> "EnergyConfig":
        """
        Returns a copy with every energy and power multiplied by `factor`.
        """

        values = {
            name: getattr(self, name) * (1.0 if name == "cycle_time" else factor)
            for name in self.__dataclass_fields__
        }
        return EnergyConfig(**values)


@dataclass(frozen=True)
class EnergyReport:
    """
    Energy of a run, split in neuron, crossbar and peripheral components.

    `details` breaks the peripheral component down by event kind.
    """

    neuron: float
    crossbar: float
    peripheral: float
    classifications: int = 1
    details: Dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.neuron + self.crossbar + self.peripheral

    @property
    def per_classification(self) -> float:
        return self.total / self.classifications

    def components(self) -> Dict[str, float]:
        return {
            "neuron": self.neuron,
            "crossbar": self.crossbar,
            "peripheral": self.peripheral,
            "total": self.total,
        }


@dataclass(frozen=True)
class LatencyReport:
    """
    Latency of a run.
    """

    cycles: int
    seconds: float
    classifications_per_second: float
    stages: Dict[str, int] = field(default_factory=dict)


def _switch_count(plan: MappingPlan) -> int:
    return len({plan.arch.switch_of(mpe.index) for mpe in plan.mpes})


def resparc_energy(
    result: SimResult,
    plan: MappingPlan,
    ecfg: EnergyConfig,
    classifications: int = 1,
) -> EnergyReport:
    """
    Computes the energy of a simulated run.

    :param result: The counters of a completed simulation.
    :param plan: The plan that was simulated.
    :param ecfg: The energy configuration.
    :param classifications: The number of inferences the run stands for,
        used for per-classification figures.
    :return: The `EnergyReport`.
    """

    arch = plan.arch
    neuron = ecfg.neuron_integrate * result.neuron_integrations + ecfg.spike * result.spikes_emitted
    crossbar = ecfg.e_xbar_read(arch.mca_rows, arch.mca_cols) * result.crossbar_reads

    static_power = ecfg.mpe_static_power * len(plan.mpes)
    static_power += ecfg.switch_static_power * _switch_count(plan)

    details = {
        "switch_hops": ecfg.switch_hop * result.hop_count,
        "buffers": ecfg.buffer_access * result.buffer_accesses,
        "bus": ecfg.bus_broadcast * result.bus_broadcasts,
        "sram": ecfg.sram_read * result.sram_reads + ecfg.sram_write * result.sram_writes,
        "cext": ecfg.cext * result.cext_transfers,
        "static": static_power * result.cycles_elapsed * ecfg.cycle_time,
    }

    return EnergyReport(
        neuron=neuron,
        crossbar=crossbar,
        peripheral=sum(details.values()),
        classifications=classifications,
        details=details,
    )


def resparc_latency(
    result: SimResult,
    plan: MappingPlan,
    ecfg: EnergyConfig,
    classifications: int = 1,
) -> LatencyReport:
    """
    Computes the latency of a simulated run from its stage tallies.

    Each timestep costs, for every layer in order, the crossbar reads
    serialized at the home mPE of the slowest neuron (one cycle per
    time-multiplexed partial sum), one cycle per external partial sum, the
    cycles the switch network takes to drain (contention included), the
    serialized SRAM and bus cycles, and one cycle to fire.
    """

    cycles = int(result.cycles_elapsed)
    seconds = cycles * ecfg.cycle_time

    return LatencyReport(
        cycles=cycles,
        seconds=seconds,
        classifications_per_second=classifications / seconds if seconds > 0.0 else 0.0,
        stages=result.stage_totals(),
    )


@dataclass(frozen=True)
class CmosConfig:
    """
    Parameters of the digital baseline.

    `e_weight_fetch` is the energy per byte fetched from memory, and
    `leakage_power` the leakage of the weight memory per byte of weight
    precision; `buffer_reuse` is the fraction of weight fetches served by
    the on-chip buffers.
    """

    e_mac: float = 1.0e-12
    e_weight_fetch: float = 2.0e-11
    e_buffer: float = 5.0e-13
    leakage_power: float = 5.0e-2
    cycle_time: float = 1.0e-9
    buffer_reuse: float = 0.5
    macs_per_cycle: int = 64
    bits: int = 4

    def __post_init__(self):
        _check_fields(
            self, ["e_mac", "e_weight_fetch", "e_buffer", "leakage_power"], "cmos"
        )
        if not self.cycle_time > 0.0:
            raise InputError(f"cmos.cycle_time must be positive, got {self.cycle_time}")
        if not 0.0 <= self.buffer_reuse < 1.0:
            raise InputError(f"cmos.buffer_reuse must be in [0, 1), got {self.buffer_reuse}")
        if self.macs_per_cycle < 1:
            raise InputError(f"cmos.macs_per_cycle must be positive, got {self.macs_per_cycle}")
        if not 1 <= self.bits <= 32:
            raise InputError(f"cmos.bits must be in [1, 32], got {self.bits}")

    @property
    def weight_bytes(self) -> float:
        return self.bits / 8.0


@dataclass(frozen=True)
class CmosReport:
    """
    Energy and latency of the digital baseline.
    """

    macs: int
    cycles: int
    core: float
    memory_access: float
    memory_leakage: float
    seconds: float
    classifications: int = 1

    @property
    def total(self) -> float:
        return self.core + self.memory_access + self.memory_leakage

    @property
    def per_classification(self) -> float:
        return self.total / self.classifications

    @property
    def classifications_per_second(self) -> float:
        return self.classifications / self.seconds if self.seconds > 0.0 else 0.0

    def components(self) -> Dict[str, float]:
        return {
            "core": self.core,
            "memory_access": self.memory_access,
            "memory_leakage": self.memory_leakage,
            "total": self.total,
        }


def spike_stats(train: SpikeTrain, outputs: Sequence[SpikeTrain]) -> List[np.ndarray]:
    """
    Returns the spike count of every input neuron of every layer.

    :param train: The network input.
    :param outputs: The per-layer outputs of `reference_forward()` on it.
    :return: One count vector per layer, for the neurons feeding the layer.
    """

    return [train.counts()] + [out.counts() for out in outputs[:-1]]


def cmos_baseline(
    topology: SnnTopology,
    stats: Sequence[np.ndarray],
    ccfg: CmosConfig,
    classifications: int = 1,
) -> CmosReport:
    """
    Estimates the cost of an event-driven digital implementation.

    Only spiking inputs are processed: every input spike costs one MAC per
    synapse it fans out to. Weights are fetched from the buffers for a
    `buffer_reuse` fraction of the MACs and from memory for the rest,
    `bits / 8` bytes each; leakage of the weight memory accrues over the
    cycles taken at `macs_per_cycle`.

    :param topology: The network.
    :param stats: Per-layer input spike counts, see `spike_stats()`.
    :param ccfg: The baseline configuration.
    :param classifications: The number of inferences the counts stand for.
    :return: The `CmosReport`.
    """

    matrices = topology_connectivity(topology)
    if len(stats) != len(matrices):
        raise InputError(f"got spike statistics for {len(stats)} layers, expected {len(matrices)}")

    macs = 0
    for counts, matrix in zip(stats, matrices):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (matrix.shape[0],):
            raise InputError(
                f"spike statistics of {counts.size} neurons for a layer of {matrix.shape[0]} inputs"
            )
        macs += int(counts @ matrix.mask.sum(axis=1, dtype=np.int64))

    cycles = math.ceil(macs / ccfg.macs_per_cycle)
    seconds = cycles * ccfg.cycle_time

    core = macs * ccfg.e_mac + macs * ccfg.buffer_reuse * ccfg.e_buffer
    memory_access = macs * (1.0 - ccfg.buffer_reuse) * ccfg.weight_bytes * ccfg.e_weight_fetch
    memory_leakage = ccfg.leakage_power * ccfg.weight_bytes * seconds

    return CmosReport(
        macs=macs,
        cycles=cycles,
        core=core,
        memory_access=memory_access,
        memory_leakage=memory_leakage,
        seconds=seconds,
        classifications=classifications,
    )


@dataclass(frozen=True)
class ComparisonRow:
    """
    One metric of the architecture against the baseline; `ratio` is the
    baseline value over the architecture one (the improvement factor).
    """

    metric: str
    resparc: float
    cmos: float

    @property
    def ratio(self) -> Optional[float]:
        if self.resparc == 0.0:
            return None
        return self.cmos / self.resparc


def comparison(energy: EnergyReport, latency: LatencyReport, cmos: CmosReport) -> List[ComparisonRow]:
    """
    Lines up the figures of merit of a run and of its baseline.

    Throughput is compared inverted (seconds per classification), so that
    every ratio above one favours the crossbar architecture.
    """

    per_second = latency.classifications_per_second
    cmos_per_second = cmos.classifications_per_second

    return [
        ComparisonRow("energy_total", energy.total, cmos.total),
        ComparisonRow("energy_per_classification", energy.per_classification, cmos.per_classification),
        ComparisonRow("seconds", latency.seconds, cmos.seconds),
        ComparisonRow(
            "seconds_per_classification",
            1.0 / per_second if per_second else 0.0,
            1.0 / cmos_per_second if cmos_per_second else 0.0,
        ),
    ]
