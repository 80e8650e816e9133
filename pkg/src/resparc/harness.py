"""
Experiment harness.

Runs the compile, simulate and cost pipeline on a topology, alone or over
sweeps of crossbar sizes, device precisions and event-driven execution, and
writes the resulting tables and charts. Every run checks the simulated
spikes against the reference simulator.

Classification accuracy requires trained networks and datasets; on the
random-weight benchmarks it is replaced by fidelity, the agreement between
the decisions of the quantized network and of its full-precision reference.
"""

# Import Python standard libraries
from dataclasses import dataclass, field, replace
import logging
import pathlib
from typing import Dict, List, Optional, Sequence, Tuple, Union

# Import 3rd-party libraries
import numpy as np

# Import other modules from this library
from . import output, quantization
from .archsim import SimOptions, SimResult, simulate
from .benchmarks import BENCHMARKS, benchmark
from .common import InputError, SimulationError, rng_for, seed_to_key
from .config import Config
from .costmodel import (
    cmos_baseline,
    comparison,
    resparc_energy,
    resparc_latency,
    spike_stats,
)
from .mapper import ArchConfig, MappingPlan, compile_topology, utilization
from .quantization import QuantConfig, SignedMode
from .snn import LayerKind, LayerSpec, SnnTopology, SpikeTrain, rate_encode, reference_forward
from .topology_io import load_topology

logger = logging.getLogger(__name__)

PathLike = Union[str, pathlib.Path]

EXPERIMENTS = ("single", "sweep_mca", "sweep_bits", "event_ablation")


@dataclass(frozen=True)
class RunSpec:
    """
    Description of an experiment.

    `topology` is either the path to a JSON file or the name of a shipped
    benchmark; sweep values are taken from `config.run`.
    """

    topology: str
    config: Config = field(default_factory=Config)
    weights: Optional[str] = None
    experiment: str = "single"
    out_dir: str = "."
    trace: bool = False
    inputs: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InputError(f"unknown experiment `{self.experiment}`")

    @property
    def sizes(self) -> Tuple[int, ...]:
        return self.config.run.sizes

    @property
    def bits(self) -> Tuple[int, ...]:
        return self.config.run.bits

    def out_path(self, name: str) -> pathlib.Path:
        path = pathlib.Path(self.out_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path / name


@dataclass(frozen=True)
class FidelityMetric:
    """
    Agreement between two classifiers over a set of inputs.

    `agreement` is the fraction of inputs with the same decision, `l1` the
    mean absolute difference of the output spike counts, per output neuron.
    """

    agreement: float
    l1: np.ndarray

    @property
    def mean_l1(self) -> float:
        return float(np.mean(self.l1)) if self.l1.size else 0.0


def fidelity(counts_a: Sequence[np.ndarray], counts_b: Sequence[np.ndarray]) -> FidelityMetric:
    """
    Compares the output spike counts of two classifiers on the same inputs.

    :param counts_a: Output spike counts of the first classifier, per input.
    :param counts_b: Output spike counts of the second classifier, per input.
    :return: The `FidelityMetric`.
    """

    counts_a = np.asarray(counts_a, dtype=np.int64)
    counts_b = np.asarray(counts_b, dtype=np.int64)
    if counts_a.shape != counts_b.shape or counts_a.ndim != 2 or not len(counts_a):
        raise InputError("fidelity needs two non-empty count matrices of the same shape")

    decisions_a = np.argmax(counts_a, axis=1)
    decisions_b = np.argmax(counts_b, axis=1)

    return FidelityMetric(
        agreement=float(np.mean(decisions_a == decisions_b)),
        l1=np.mean(np.abs(counts_a - counts_b), axis=0),
    )


def load_spec_topology(spec: RunSpec) -> SnnTopology:
    """
    Loads the topology of a run, from a file or from the shipped benchmarks.
    """

    path = pathlib.Path(spec.topology)
    if not path.exists() and spec.topology in BENCHMARKS:
        if spec.weights is not None:
            raise InputError("sidecar weights cannot be combined with a shipped benchmark")
        return benchmark(spec.topology)

    return load_topology(path, spec.weights)


def input_image_shape(topology: SnnTopology) -> Tuple[int, int, int]:
    """
    Returns the `(channels, height, width)` geometry of the input of a
    topology, in the channel-major order of input indices.

    Dense inputs read as a square image when their size is a perfect square,
    and as a single row otherwise.
    """

    first = topology.layers[0]
    if first.kind is not LayerKind.DENSE:
        return first.in_channels, first.in_height, first.in_width

    side = int(np.sqrt(topology.input_size))
    if side * side == topology.input_size:
        return 1, side, side
    return 1, 1, topology.input_size


def input_rates(topology: SnnTopology, rate: float, pattern: str = "uniform") -> np.ndarray:
    """
    Returns the spike probability of every input neuron.

    With the `"uniform"` pattern every neuron spikes with probability `rate`;
    with `"foreground"` only a centred box of half the image height and
    width (in every channel) is active, at the rate that keeps the mean at
    `rate` (capped at one), over a silent background.
    """

    if pattern == "uniform":
        return np.full(topology.input_size, rate)
    if pattern != "foreground":
        raise InputError(f"unknown input pattern `{pattern}`")

    channels, height, width = input_image_shape(topology)
    box_h, box_w = max(1, height // 2), max(1, width // 2)
    top, left = (height - box_h) // 2, (width - box_w) // 2

    mask = np.zeros((channels, height, width), dtype=bool)
    mask[:, top : top + box_h, left : left + box_w] = True
    mask = mask.ravel()

    return np.where(mask, min(1.0, rate * mask.size / np.count_nonzero(mask)), 0.0)


def input_train(
    topology: SnnTopology, rate: float, timesteps: int, seed, pattern: str = "uniform"
) -> SpikeTrain:
    """
    Returns a rate-coded random input, with the spike probabilities of
    `input_rates()`.
    """

    return rate_encode(input_rates(topology, rate, pattern), timesteps, seed)


def spec_train(spec: RunSpec, topology: SnnTopology) -> SpikeTrain:
    """
    Returns the input of a run: the spike train file it names, if any, or a
    rate-coded random input.
    """

    run = spec.config.run
    if spec.inputs is not None:
        return output.read_spike_train(spec.inputs, run.timesteps, topology.input_size)

    return input_train(topology, run.input_rate, run.timesteps, run.seed, run.input_pattern)


def sized_arch(arch: ArchConfig, size: int) -> ArchConfig:
    """
    Returns `arch` with square crossbars of `size` and packets as wide.
    """

    return replace(arch, mca_rows=size, mca_cols=size, packet_width=size)


def check_oracle(topology: SnnTopology, train: SpikeTrain, quant: QuantConfig, result: SimResult):
    """
    Raises `SimulationError` unless the simulated spikes of every layer match
    the reference simulation.
    """

    expected = reference_forward(topology, train, quant)
    for layer, (got, want) in enumerate(zip(result.outputs, expected)):
        if got != want:
            mismatch = np.argwhere(got.spikes != want.spikes)[0]
            raise SimulationError(
                f"layer {layer}: simulated spikes differ from the reference at "
                f"timestep {mismatch[0]}, neuron {mismatch[1]}"
            )


@dataclass
class _Point:
    """
    Internal structure with the outcome of a pipeline run.
    """

    plan: MappingPlan
    train: SpikeTrain
    result: SimResult


def _run_point(
    topology: SnnTopology,
    config: Config,
    arch: ArchConfig,
    event_driven: bool,
    train: Optional[SpikeTrain] = None,
    trace: bool = False,
) -> _Point:
    run = config.run
    if train is None:
        train = input_train(topology, run.input_rate, run.timesteps, run.seed, run.input_pattern)

    plan = compile_topology(topology, arch, config.quant)
    result = simulate(plan, train, arch, SimOptions(event_driven=event_driven, trace=trace))
    check_oracle(topology, train, config.quant, result)

    return _Point(plan, train, result)


def run_compile(spec: RunSpec) -> Dict[str, pathlib.Path]:
    """
    Compiles the topology of a run and writes the plan and its utilization.
    """

    plan = compile_topology(load_spec_topology(spec), spec.config.arch, spec.config.quant)
    report = utilization(plan)
    logger.info(
        "compiled onto %i tiles, %i mPEs, %i NeuroCells (%s)",
        report.total_tiles,
        report.total_mpes,
        report.total_neurocells,
        quantization.describe(spec.config.quant),
    )

    artifacts = {"plan": spec.out_path("plan.json"), "utilization": spec.out_path("utilization.csv")}
    output.write_plan(artifacts["plan"], plan)
    output.write_utilization(artifacts["utilization"], report)

    return artifacts


def run_simulation(spec: RunSpec) -> Dict[str, pathlib.Path]:
    """
    Compiles and simulates, writing the counters and the spikes of every
    layer (and the packet trace, if requested).
    """

    config = spec.config
    topology = load_spec_topology(spec)
    train = spec_train(spec, topology)
    point = _run_point(topology, config, config.arch, config.run.event_driven, train, spec.trace)

    artifacts = {"counters": spec.out_path("counters.csv")}
    output.write_counters(artifacts["counters"], point.result)
    output.write_spike_train(spec.out_path("input_spikes.csv"), point.train)
    artifacts["input_spikes"] = spec.out_path("input_spikes.csv")
    for layer, train in enumerate(point.result.outputs):
        artifacts["spikes_layer%i" % layer] = spec.out_path("spikes_layer%i.csv" % layer)
        output.write_spike_train(artifacts["spikes_layer%i" % layer], train)

    if spec.trace:
        artifacts["trace"] = spec.out_path("trace.csv")
        output.write_trace(artifacts["trace"], point.result.trace)

    return artifacts


def run_single(spec: RunSpec) -> Dict[str, pathlib.Path]:
    """
    Runs the full pipeline once and writes its artifacts.

    :return: The paths of the artifacts, by kind.
    """

    config = spec.config
    topology = load_spec_topology(spec)
    train = spec_train(spec, topology)
    point = _run_point(topology, config, config.arch, config.run.event_driven, train, spec.trace)

    energy = resparc_energy(point.result, point.plan, config.energy)
    latency = resparc_latency(point.result, point.plan, config.energy)
    cmos = cmos_baseline(topology, spike_stats(point.train, point.result.outputs), config.cmos)

    artifacts = {
        "plan": spec.out_path("plan.json"),
        "utilization": spec.out_path("utilization.csv"),
        "counters": spec.out_path("counters.csv"),
        "spikes": spec.out_path("spikes.csv"),
        "energy": spec.out_path("energy.csv"),
        "comparison": spec.out_path("comparison.csv"),
    }
    output.write_plan(artifacts["plan"], point.plan)
    output.write_utilization(artifacts["utilization"], utilization(point.plan))
    output.write_counters(artifacts["counters"], point.result)
    output.write_spike_train(artifacts["spikes"], point.result.output)
    output.write_energy(artifacts["energy"], "single", energy, cmos)
    output.write_comparison(artifacts["comparison"], comparison(energy, latency, cmos))

    if spec.trace:
        artifacts["trace"] = spec.out_path("trace.csv")
        output.write_trace(artifacts["trace"], point.result.trace)

    logger.info(
        "single run: %.4g J (CMOS %.4g J), %i cycles", energy.total, cmos.total, latency.cycles
    )

    return artifacts


def sweep_mca(spec: RunSpec) -> Dict[str, pathlib.Path]:
    """
    Runs the pipeline for every crossbar size of the run.

    Writes one row per size with the energy breakdown, the crossbar
    utilization and the cycles, and a stacked bar chart of the energy.
    """

    config = spec.config
    topology = load_spec_topology(spec)
    run = config.run
    train = input_train(topology, run.input_rate, run.timesteps, run.seed, run.input_pattern)

    rows = []
    for size in spec.sizes:
        point = _run_point(topology, config, sized_arch(config.arch, size), run.event_driven, train)
        energy = resparc_energy(point.result, point.plan, config.energy)
        report = utilization(point.plan)
        rows.append(
            [
                size,
                report.total_tiles,
                report.total_mpes,
                report.total_neurocells,
                report.mean_fill,
                point.result.cycles_elapsed,
                energy.neuron,
                energy.crossbar,
                energy.peripheral,
                energy.total,
            ]
        )
        logger.info("size %i: %i tiles, %.4g J", size, report.total_tiles, energy.total)

    header = [
        "size",
        "tiles",
        "mpes",
        "neurocells",
        "mean_fill",
        "cycles",
        "neuron",
        "crossbar",
        "peripheral",
        "total",
    ]
    artifacts = {"table": spec.out_path("sweep_mca.csv"), "chart": spec.out_path("sweep_mca.svg")}
    output.write_csv(artifacts["table"], header, rows)
    output.stacked_bar_svg(
        artifacts["chart"],
        ["%i" % row[0] for row in rows],
        {name: [row[idx] for row in rows] for idx, name in [(6, "neuron"), (7, "crossbar"), (8, "peripheral")]},
        title="Energy by crossbar size",
    )

    return artifacts


def _sample_trains(topology: SnnTopology, config: Config) -> List[SpikeTrain]:
    """
    Internal function drawing the random inputs of fidelity measurements.
    """

    run = config.run
    values = rng_for(run.seed, 1).uniform(0.0, 1.0, size=(run.samples, topology.input_size))
    key = seed_to_key(run.seed)

    return [
        rate_encode(row, run.bits_timesteps, (key + idx + 1) % (1 << 64))
        for idx, row in enumerate(values)
    ]


def sweep_bits(spec: RunSpec) -> Dict[str, pathlib.Path]:
    """
    Measures fidelity and energy over the device precisions of the run.

    Fidelity compares the decisions of the quantized network with those of
    the full-precision reference over `run.samples` random inputs. The
    energy of the architecture is computed for the spike activity of the
    configured precision, so that only the mapping changes across rows,
    alongside the energy of a run at each precision; the baseline is
    computed for the full-precision activity. The number of distinct
    decisions of each quantized network flags classifiers whose output does
    not depend on the input.
    """

    config = spec.config
    topology = load_spec_topology(spec)
    trains = _sample_trains(topology, config)

    full = [reference_forward(topology, train) for train in trains]
    full_counts = [outputs[-1].counts() for outputs in full]
    stats = spike_stats(trains[0], full[0])

    shared = _run_point(topology, config, config.arch, config.run.event_driven, trains[0])

    rows = []
    for bits in spec.bits:
        quant = replace(config.quant, bits=bits)
        counts = [reference_forward(topology, train, quant)[-1].counts() for train in trains]
        metric = fidelity(counts, full_counts)
        decisions = np.unique(np.argmax(np.asarray(counts), axis=1)).size

        point = _run_point(
            topology, replace(config, quant=quant), config.arch, config.run.event_driven, trains[0]
        )
        fixed = resparc_energy(shared.result, point.plan, config.energy)
        own = resparc_energy(point.result, point.plan, config.energy)
        cmos = cmos_baseline(topology, stats, replace(config.cmos, bits=bits))

        rows.append(
            [
                bits,
                metric.agreement,
                metric.mean_l1,
                decisions,
                fixed.total,
                own.total,
                cmos.core,
                cmos.memory_access,
                cmos.memory_leakage,
                cmos.total,
            ]
        )
        logger.info("bits %i: fidelity %.3f, %i distinct decisions", bits, metric.agreement, decisions)

    header = [
        "bits",
        "fidelity",
        "spike_count_l1",
        "decisions",
        "resparc_total",
        "resparc_total_run",
        "cmos_core",
        "cmos_memory_access",
        "cmos_memory_leakage",
        "cmos_total",
    ]
    artifacts = {
        "table": spec.out_path("sweep_bits.csv"),
        "chart": spec.out_path("sweep_bits.svg"),
        "energy_chart": spec.out_path("sweep_bits_energy.svg"),
    }
    output.write_csv(artifacts["table"], header, rows)
    output.line_svg(
        artifacts["chart"],
        [row[0] for row in rows],
        {"fidelity": [row[1] for row in rows]},
        title="Fidelity to the full-precision network",
        xlabel="bits",
        ylabel="argmax agreement",
    )
    output.line_svg(
        artifacts["energy_chart"],
        [row[0] for row in rows],
        {"resparc": [row[4] for row in rows], "cmos": [row[9] for row in rows]},
        title="Energy by precision",
        xlabel="bits",
        ylabel="energy (J)",
    )

    return artifacts


def event_ablation(spec: RunSpec) -> Dict[str, pathlib.Path]:
    """
    Compares event-driven execution against dense execution for every
    crossbar size of the run, on one random input of the configured rate
    and pattern.
    """

    config = spec.config
    topology = load_spec_topology(spec)
    run = config.run
    train = input_train(topology, run.input_rate, run.timesteps, run.seed, run.input_pattern)

    rows = []
    for size in spec.sizes:
        arch = sized_arch(config.arch, size)
        on = _run_point(topology, config, arch, True, train)
        off = _run_point(topology, config, arch, False, train)
        energy_on = resparc_energy(on.result, on.plan, config.energy).total
        energy_off = resparc_energy(off.result, off.plan, config.energy).total
        savings = 1.0 - energy_on / energy_off if energy_off > 0.0 else 0.0

        rows.append(
            [
                size,
                energy_on,
                energy_off,
                savings,
                on.result.packets_suppressed,
                on.result.bus_suppressed,
                on.result.crossbar_skipped,
            ]
        )
        logger.info("size %i: event-driven savings %.4f", size, savings)

    header = [
        "size",
        "energy_event_driven",
        "energy_dense",
        "savings",
        "packets_suppressed",
        "bus_suppressed",
        "crossbar_skipped",
    ]
    artifacts = {
        "table": spec.out_path("event_ablation.csv"),
        "chart": spec.out_path("event_ablation.svg"),
    }
    output.write_csv(artifacts["table"], header, rows)
    output.stacked_bar_svg(
        artifacts["chart"],
        ["%i" % row[0] for row in rows],
        {"savings": [row[3] for row in rows]},
        title="Event-driven energy savings",
        ylabel="fraction of dense energy",
    )

    return artifacts


@dataclass(frozen=True)
class OracleCase:
    """
    One randomized equivalence check and its outcome.
    """

    index: int
    kind: str
    size: int
    bits: int
    signed_mode: str
    event_driven: bool
    max_degree: int
    equal: bool


def _random_topology(rng: np.random.Generator, size: int, unsigned: bool) -> Tuple[str, SnnTopology]:
    """
    Internal function drawing a small random network.

    Dense networks reach time-multiplexing degrees up to 8 with inputs up to
    eight crossbars tall.
    """

    def weights(shape):
        matrix = rng.uniform(-1.0, 1.0, size=shape)
        return np.abs(matrix) if unsigned else matrix

    def threshold(fan_in):
        return float(rng.uniform(0.1, 0.6) * fan_in * 0.5)

    if rng.random() < 0.5:
        n_in = int(rng.integers(2, 8 * size + 1))
        hidden = int(rng.integers(2, 24))
        n_out = int(rng.integers(2, 12))
        layers = [
            LayerSpec.dense(n_in, hidden, threshold(n_in)),
            LayerSpec.dense(hidden, n_out, threshold(hidden)),
        ]
        return "dense", SnnTopology(layers, [weights((n_in, hidden)), weights((hidden, n_out))])

    width = int(rng.integers(4, 9))
    channels = int(rng.integers(1, 3))
    conv = LayerSpec.conv(width, width, channels, 3, 2, threshold=threshold(9 * channels))
    side = conv.out_width
    layers = [conv]
    mats = [weights(conv.weight_shape)]
    if side % 2 == 0:
        layers.append(LayerSpec.subsample(side, side, 2, 2, 2, threshold=0.5))
        mats.append(None)
        side //= 2
    layers.append(LayerSpec.dense(side * side * 2, 4, threshold(side * side * 2)))
    mats.append(weights(layers[-1].weight_shape))

    return "conv", SnnTopology(layers, mats)


def verify_oracle(cases: int = 60, seed=0, timesteps: int = 12) -> List[OracleCase]:
    """
    Checks the simulator against the reference on randomized networks,
    quantizations, crossbar sizes, inputs and execution modes.

    :return: One `OracleCase` per check.
    """

    rng = rng_for(seed, 2)
    outcomes = []
    for index in range(cases):
        size = int(rng.choice([4, 8, 16]))
        mode = SignedMode.UNSIGNED if rng.random() < 0.3 else SignedMode.DIFFERENTIAL
        quant = QuantConfig(bits=int(rng.integers(1, 9)), signed_mode=mode)
        event_driven = bool(rng.random() < 0.5)
        kind, topology = _random_topology(rng, size, mode is SignedMode.UNSIGNED)

        arch = ArchConfig(
            mca_rows=size,
            mca_cols=size,
            mcas_per_mpe=int(rng.integers(1, 5)),
            packet_width=int(rng.choice([0, 3, 8])),
            num_neurocells=64,
        )
        train = rate_encode(
            rng.uniform(0.0, 1.0, size=topology.input_size), timesteps, int(rng.integers(0, 1 << 31))
        )

        plan = compile_topology(topology, arch, quant)
        result = simulate(plan, train, arch, SimOptions(event_driven=event_driven))
        expected = reference_forward(topology, train, quant)
        equal = all(got == want for got, want in zip(result.outputs, expected))

        outcomes.append(
            OracleCase(
                index,
                kind,
                size,
                quant.bits,
                mode.value,
                event_driven,
                max(schedule.max_degree for schedule in plan.schedules),
                equal,
            )
        )
        if not equal:
            logger.warning("oracle mismatch in case %i (%s, size %i)", index, kind, size)

    return outcomes
