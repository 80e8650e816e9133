"""
test_costmodel
==============

Tests for the energy and latency models of the `resparc` package.
"""

# Import Python standard libraries
import pytest

# Import 3rd-party libraries
import numpy as np

# Import the library being tested
import resparc
from resparc.archsim import SimOptions, SimResult, simulate
from resparc.costmodel import (
    CmosConfig,
    ComparisonRow,
    EnergyConfig,
    cmos_baseline,
    comparison,
    resparc_energy,
    resparc_latency,
    spike_stats,
)
from resparc.mapper import ArchConfig, compile_topology
from resparc.quantization import QuantConfig, SignedMode
from resparc.snn import LayerSpec, SnnTopology, SpikeTrain, reference_forward

UNSIGNED = QuantConfig(bits=4, signed_mode=SignedMode.UNSIGNED)


def _minimal_plan():
    topology = SnnTopology([LayerSpec.dense(2, 1)], [np.full((2, 1), 0.5)])
    return topology, compile_topology(topology, ArchConfig(), QuantConfig())


def _result(**counters):
    return SimResult(outputs=[SpikeTrain(np.zeros((1, 1), dtype=np.uint8))], **counters)


def test_energy_components():
    """
    Test the weighting of every counter.
    """

    _, plan = _minimal_plan()
    ecfg = EnergyConfig()
    result = _result(
        crossbar_reads=3,
        neuron_integrations=4,
        spikes_emitted=2,
        hop_count=5,
        buffer_accesses=7,
        bus_broadcasts=1,
        sram_reads=2,
        sram_writes=1,
        cext_transfers=6,
    )

    report = resparc_energy(result, plan, ecfg)
    assert report.crossbar == pytest.approx(3 * (1e-12 + 1e-15 * 64 * 64 + 5e-15 * 64))
    assert report.neuron == pytest.approx(4 * 5e-14 + 2 * 2e-14)
    assert report.details["switch_hops"] == pytest.approx(5 * 2e-13)
    assert report.details["sram"] == pytest.approx(3 * 5e-13)
    assert report.details["cext"] == pytest.approx(6 * 1e-14)
    assert report.details["static"] == 0.0
    assert report.peripheral == pytest.approx(sum(report.details.values()))
    assert report.total == pytest.approx(report.neuron + report.crossbar + report.peripheral)


def test_static_energy():
    _, plan = _minimal_plan()
    report = resparc_energy(_result(cycles_elapsed=100), plan, EnergyConfig())

    assert report.neuron == 0.0
    assert report.crossbar == 0.0
    assert report.peripheral == pytest.approx((2e-5 + 1e-5) * 100 * 1e-9)


def test_energy_linearity():
    """
    Test that scaling every per-event energy scales the total.
    """

    topology, plan = _minimal_plan()
    result = simulate(plan, SpikeTrain(np.ones((4, 2), dtype=np.uint8)))
    ecfg = EnergyConfig()

    single = resparc_energy(result, plan, ecfg)
    double = resparc_energy(result, plan, ecfg.scaled(2.0))
    assert double.total == pytest.approx(2.0 * single.total)

    per_run = resparc_energy(result, plan, ecfg, classifications=4)
    assert per_run.per_classification == pytest.approx(single.total / 4)

    with pytest.raises(resparc.InputError):
        EnergyConfig(spike=-1.0)
    with pytest.raises(resparc.InputError):
        EnergyConfig(cycle_time=0.0)


def test_time_multiplexing_cycles():
    """
    Test that two partial sums per neuron double the compute cycles.
    """

    topology = SnnTopology([LayerSpec.dense(4, 1)], [np.ones((4, 1))])
    train = SpikeTrain(np.ones((3, 4), dtype=np.uint8))
    opts = SimOptions(event_driven=False)

    single = compile_topology(topology, ArchConfig(mca_rows=4, mca_cols=4), UNSIGNED)
    split = compile_topology(topology, ArchConfig(mca_rows=2, mca_cols=2), UNSIGNED)
    assert single.schedules[0].max_degree == 1
    assert split.schedules[0].max_degree == 2

    compute_single = simulate(single, train, opts=opts).stage_totals()["compute"]
    compute_split = simulate(split, train, opts=opts).stage_totals()["compute"]
    assert compute_single == 3
    assert compute_split == 2 * compute_single


def test_neurocell_split_cycles():
    """
    Test that spreading a network over more NeuroCells adds bus cycles.
    """

    topology = SnnTopology(
        [LayerSpec.dense(4, 4), LayerSpec.dense(4, 4)], [np.ones((4, 4)), np.ones((4, 4))]
    )
    train = SpikeTrain(np.ones((5, 4), dtype=np.uint8))
    opts = SimOptions(event_driven=False)

    one = compile_topology(topology, ArchConfig(mca_rows=2, mca_cols=2, mcas_per_mpe=1), UNSIGNED)
    two = compile_topology(
        topology, ArchConfig(mca_rows=2, mca_cols=2, mcas_per_mpe=1, nc_grid_w=2, nc_grid_h=1), UNSIGNED
    )
    assert len(one.neurocells) == 1
    assert len(two.neurocells) > 1

    one_result = simulate(one, train, opts=opts)
    two_result = simulate(two, train, opts=opts)
    assert two_result.outputs == one_result.outputs
    assert two_result.cycles_elapsed > one_result.cycles_elapsed
    assert two_result.stage_totals()["bus"] > one_result.stage_totals()["bus"]

    ecfg = EnergyConfig()
    assert resparc_latency(two_result, two, ecfg).cycles > resparc_latency(one_result, one, ecfg).cycles


def test_latency():
    topology, plan = _minimal_plan()
    result = simulate(plan, SpikeTrain(np.ones((4, 2), dtype=np.uint8)))
    latency = resparc_latency(result, plan, EnergyConfig(), classifications=2)

    assert latency.cycles == result.cycles_elapsed
    assert latency.seconds == pytest.approx(result.cycles_elapsed * 1e-9)
    assert latency.classifications_per_second == pytest.approx(2 / latency.seconds)
    assert latency.stages["fire"] == 4


def test_cmos_baseline():
    """
    Test the digital baseline on hand-computed activity.
    """

    topology = SnnTopology([LayerSpec.dense(2, 3)], [np.ones((2, 3))])
    report = cmos_baseline(topology, [np.array([3, 1])], CmosConfig(bits=8))

    assert report.macs == 12
    assert report.cycles == 1
    assert report.core == pytest.approx(12 * 1e-12 + 12 * 0.5 * 5e-13)
    assert report.memory_access == pytest.approx(12 * 0.5 * 1.0 * 2e-11)
    assert report.memory_leakage == pytest.approx(5e-2 * 1.0 * 1e-9)

    with pytest.raises(resparc.InputError):
        cmos_baseline(topology, [np.array([3, 1, 0])], CmosConfig())
    with pytest.raises(resparc.InputError):
        CmosConfig(buffer_reuse=1.0)


def test_cmos_bits():
    """
    Test that doubling the weight precision doubles memory traffic.
    """

    rng = np.random.default_rng(0)
    topology = SnnTopology([LayerSpec.dense(20, 5)], [rng.uniform(-1, 1, size=(20, 5))])
    stats = [rng.integers(0, 10, size=20)]

    four = cmos_baseline(topology, stats, CmosConfig(bits=4))
    eight = cmos_baseline(topology, stats, CmosConfig(bits=8))
    assert eight.memory_access == pytest.approx(2 * four.memory_access)
    assert eight.memory_leakage == pytest.approx(2 * four.memory_leakage)
    assert eight.core == four.core
    assert eight.total > four.total


def test_cmos_zero_spikes():
    layer = LayerSpec.conv(4, 4, 1, 3, 2)
    topology = SnnTopology([layer], [np.ones(layer.weight_shape)])
    train = SpikeTrain(np.zeros((6, 16), dtype=np.uint8))

    stats = spike_stats(train, reference_forward(topology, train))
    report = cmos_baseline(topology, stats, CmosConfig())
    assert (report.macs, report.cycles, report.total) == (0, 0, 0.0)
    assert report.classifications_per_second == 0.0


def test_comparison():
    assert ComparisonRow("x", 2.0, 4.0).ratio == 2.0
    assert ComparisonRow("x", 0.0, 4.0).ratio is None

    topology, plan = _minimal_plan()
    train = SpikeTrain(np.ones((4, 2), dtype=np.uint8))
    result = simulate(plan, train)
    energy = resparc_energy(result, plan, EnergyConfig())
    latency = resparc_latency(result, plan, EnergyConfig())
    cmos = cmos_baseline(topology, spike_stats(train, result.outputs), CmosConfig())

    rows = comparison(energy, latency, cmos)
    assert [row.metric for row in rows] == [
        "energy_total",
        "energy_per_classification",
        "seconds",
        "seconds_per_classification",
    ]
    assert rows[0].resparc == energy.total
    assert rows[0].cmos == cmos.total
