"""
test_mapper
===========

Tests for the mapping compiler of the `resparc` package.
"""

# Import Python standard libraries
import json
import pytest

# Import 3rd-party libraries
import numpy as np

# Import the library being tested
import resparc
from resparc.mapper import (
    ArchConfig,
    FlowKind,
    assign_and_place,
    compile_topology,
    pack_sparse,
    reconstruct_levels,
    route_kind,
    tile_dense,
    utilization,
)
from resparc.quantization import QuantConfig, SignedMode, quantize_matrix
from resparc.snn import LayerSpec, SnnTopology, build_connectivity

UNSIGNED = QuantConfig(bits=4, signed_mode=SignedMode.UNSIGNED)


def _dense(n_in, n_out, seed=0, unsigned=True):
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.0 if unsigned else -1.0, 1.0, size=(n_in, n_out))
    return build_connectivity(LayerSpec.dense(n_in, n_out), weights)


def test_arch_geometry():
    """
    Test the serpentine numbering of mPEs and their switches.
    """

    cfg = ArchConfig()
    assert cfg.mpes_per_nc == 16
    assert cfg.total_mpes == 1024
    assert cfg.mpe_position(0) == (0, 0, 0)
    assert cfg.mpe_position(3) == (0, 3, 0)
    assert cfg.mpe_position(4) == (0, 3, 1)
    assert cfg.mpe_position(7) == (0, 0, 1)
    assert cfg.mpe_position(17) == (1, 1, 0)
    assert cfg.switch_of(10) == (0, 1, 1)
    assert cfg.nc_tag(9) == (1, 1)
    assert ArchConfig(packet_width=0, mca_rows=16).effective_packet_width == 16

    with pytest.raises(resparc.InputError):
        ArchConfig(mca_rows=0)


def test_route_kind():
    cfg = ArchConfig()
    assert route_kind(cfg, 0, 0) == "local"
    assert route_kind(cfg, 0, 1) == "shared"
    assert route_kind(cfg, 0, 7) == "shared"
    assert route_kind(cfg, 0, 2) == "row"
    assert route_kind(cfg, 0, 8) == "column"
    assert route_kind(cfg, 0, 10) == "unlinked"

    with pytest.raises(resparc.InputError):
        route_kind(cfg, 0, 16)


def test_tile_dense():
    """
    Test grid tiling of a layer with fan-in 4 on 2x2 crossbars.
    """

    cfg = ArchConfig(mca_rows=2, mca_cols=2)
    tiles, schedule = tile_dense(_dense(4, 4), cfg, UNSIGNED)

    assert len(tiles) == 4
    assert [schedule.degree(neuron) for neuron in range(4)] == [2, 2, 2, 2]
    assert schedule.max_degree == 2
    assert [tile.row_map for tile in tiles] == [(0, 1), (2, 3), (0, 1), (2, 3)]
    assert [tile.col_map for tile in tiles] == [(0, 1), (0, 1), (2, 3), (2, 3)]
    assert [entry.tile_id for entry in schedule.entries[3]] == [2, 3]

    # Differential pairs halve the outputs of a crossbar
    tiles, schedule = tile_dense(_dense(4, 4, unsigned=False), cfg, QuantConfig())
    assert len(tiles) == 8
    assert all(tile.cols_used == 2 for tile in tiles)

    with pytest.raises(resparc.InputError):
        tile_dense(_dense(4, 4, unsigned=False), ArchConfig(mca_rows=2, mca_cols=1), QuantConfig())


def test_reconstruction_dense():
    """
    Test that tiles hold every synapse exactly once, with its levels.
    """

    matrix = _dense(10, 7, seed=3, unsigned=False)
    quant = QuantConfig(bits=3)
    tiles, schedule = tile_dense(matrix, ArchConfig(mca_rows=4, mca_cols=4), quant)
    plan = assign_and_place(tiles, [schedule], ArchConfig(mca_rows=4, mca_cols=4), quant)

    plus, minus, cover = reconstruct_levels(plan, 0, matrix.shape)
    expected = quantize_matrix(matrix.weights, matrix.w_max, quant)
    assert np.array_equal(plus, expected.plus)
    assert np.array_equal(minus, expected.minus)
    assert np.all(cover == 1)


def test_pack_sparse_conv():
    """
    Test input-sharing packing of a convolution, with fan-in larger than the
    crossbar height.
    """

    layer = LayerSpec.conv(6, 6, 2, 3, 2)
    rng = np.random.default_rng(2)
    matrix = build_connectivity(layer, rng.uniform(-1.0, 1.0, size=layer.weight_shape))
    cfg = ArchConfig(mca_rows=8, mca_cols=8)

    tiles, schedule = pack_sparse(matrix, cfg, QuantConfig())
    plan = assign_and_place(tiles, [schedule], cfg, QuantConfig())
    plus, minus, cover = reconstruct_levels(plan, 0, matrix.shape)

    assert np.array_equal(cover, matrix.mask.astype(np.int64))
    expected = quantize_matrix(matrix.weights, matrix.w_max, QuantConfig())
    assert np.array_equal(plus, expected.plus)
    assert np.array_equal(minus, expected.minus)

    # Eighteen inputs per neuron in lanes of eight rows
    assert {schedule.degree(neuron) for neuron in range(len(schedule))} == {3}
    for tile in tiles:
        assert tile.rows_used <= 8
        assert tile.cols_used <= 8


def test_pack_sparse_dense_matrix():
    cfg = ArchConfig(mca_rows=2, mca_cols=2)
    matrix = _dense(4, 4)

    packed, packed_schedule = pack_sparse(matrix, cfg, UNSIGNED)
    tiled, tiled_schedule = tile_dense(matrix, cfg, UNSIGNED)
    assert len(packed) == len(tiled)
    assert packed_schedule.max_degree == tiled_schedule.max_degree


def _conv_fills(size):
    layer = LayerSpec.conv(4, 4, 1, 3, 1)
    matrix = build_connectivity(layer, np.ones(layer.weight_shape))
    cfg = ArchConfig(mca_rows=size, mca_cols=size)
    tiles, schedule = pack_sparse(matrix, cfg, UNSIGNED)
    return [report.fill for report in utilization(assign_and_place(tiles, [schedule], cfg, UNSIGNED)).tiles]


def test_pack_sparse_receptive_fields():
    """
    Test the packing of a 3x3 convolution over a 4x4 input: the four
    receptive fields share a 16-row crossbar, but not a 9-row one.
    """

    assert _conv_fills(16) == [0.140625]
    assert _conv_fills(9) == pytest.approx([9 / 81] * 4, abs=1e-15)

    # Beyond the union of the receptive fields, larger crossbars are emptier
    fills = [_conv_fills(size)[0] for size in [16, 32, 64, 128]]
    assert fills == [36 / 256, 36 / 1024, 36 / 4096, 36 / 16384]


def test_tile_dense_remainders():
    cfg = ArchConfig(mca_rows=64, mca_cols=64)
    tiles, schedule = tile_dense(_dense(100, 100), cfg, UNSIGNED)

    assert sorted(tile.cells_used for tile in tiles) == [1296, 2304, 2304, 4096]
    assert schedule.max_degree == 2
    report = utilization(assign_and_place(tiles, [schedule], cfg, UNSIGNED))
    assert report.mean_fill == 0.6103515625


def test_capacity():
    """
    Test that networks exceeding the core are rejected.
    """

    tiny = ArchConfig(mca_rows=2, mca_cols=2, mcas_per_mpe=1, nc_grid_w=1, nc_grid_h=1, num_neurocells=2)
    topology = SnnTopology([LayerSpec.dense(4, 4)], [np.ones((4, 4))])
    with pytest.raises(resparc.CapacityError):
        compile_topology(topology, tiny, UNSIGNED)

    topology = SnnTopology([LayerSpec.dense(2, 8)], [np.ones((2, 8))])
    with pytest.raises(resparc.CapacityError):
        compile_topology(topology, tiny, UNSIGNED)


def test_compile_two_layers():
    """
    Test placement, homes and flows of a two-layer network.
    """

    rng = np.random.default_rng(4)
    topology = SnnTopology(
        [LayerSpec.dense(4, 4, 1.0), LayerSpec.dense(4, 4, 1.0)],
        [rng.uniform(0.0, 1.0, size=(4, 4)), rng.uniform(0.0, 1.0, size=(4, 4))],
    )
    cfg = ArchConfig(mca_rows=2, mca_cols=2, mcas_per_mpe=1)
    plan = compile_topology(topology, cfg, UNSIGNED)

    assert plan.num_layers == 2
    assert len(plan.tiles) == 8
    assert plan.tile_mpe == {idx: idx for idx in range(8)}
    assert plan.homes == ((0, 0, 2, 2), (4, 4, 6, 6))
    assert plan.cext_links == ((0, 1), (2, 3), (4, 5), (6, 7))
    assert plan.neurocells == (0,)
    assert plan.bus_segments == (0,)
    assert plan.input_size == 4

    assert all(flow.kind is FlowKind.BUS for flow in plan.flows[0])
    switch_flows = [flow for flow in plan.flows[1] if flow.kind is FlowKind.SWITCH]
    assert {(flow.producer, flow.consumer) for flow in switch_flows} == {
        (0, 4),
        (2, 5),
        (0, 6),
        (2, 7),
    }
    for flow in switch_flows:
        assert len(plan.routes[(flow.producer, flow.consumer)]) == 1
        for hop in plan.routes[(flow.producer, flow.consumer)]:
            assert hop.switch in plan.routing_tables
            assert plan.routing_tables[hop.switch][flow.consumer] == hop.out_port

    # Thresholds are expressed in current quanta
    assert plan.thresholds[0] == pytest.approx(15.0 / plan.w_max[0])

    json.dumps(plan.to_dict())


def test_compile_skips_unlinked_mpes():
    """
    Test that consumers are never placed on a switch diagonal to the switch
    of their producers.
    """

    topology = SnnTopology(
        [LayerSpec.dense(2, 4), LayerSpec.dense(4, 16)], [np.ones((2, 4)), np.ones((4, 16))]
    )
    plan = compile_topology(topology, ArchConfig(mca_rows=2, mca_cols=2, mcas_per_mpe=1), UNSIGNED)

    assert plan.homes[0] == (0, 0, 1, 1)
    consumers = {mpe.index for mpe in plan.mpes if mpe.layer == 1}
    assert consumers == set(range(2, 10)) | set(range(14, 22))

    for flow in plan.flows[1]:
        if flow.consumer < 16:
            assert flow.kind is FlowKind.SWITCH
            assert route_kind(plan.arch, flow.producer, flow.consumer) != "unlinked"
        else:
            assert flow.kind is FlowKind.BUS
    assert all(len(hops) == 1 for hops in plan.routes.values())


@pytest.mark.parametrize("name", ["desk_mlp", "desk_cnn"])
def test_benchmark_routes_one_hop(name):
    """
    Test that every switch route of the shipped benchmarks takes one hop.
    """

    topology = resparc.benchmark(name)
    routes = 0
    for size in [32, 64, 128]:
        cfg = ArchConfig(mca_rows=size, mca_cols=size, packet_width=size)
        plan = compile_topology(topology, cfg, QuantConfig())
        for (producer, consumer), hops in plan.routes.items():
            assert len(hops) == 1
            assert route_kind(cfg, producer, consumer) in ("shared", "row", "column")
            assert plan.routing_tables[hops[0].switch][consumer] == hops[0].out_port
        routes += len(plan.routes)

    assert routes > 0


def test_spill_over_mpes():
    """
    Test that a neuron with six tiles spills from a four-crossbar mPE to the
    next one.
    """

    topology = SnnTopology([LayerSpec.dense(12, 1)], [np.ones((12, 1))])
    plan = compile_topology(topology, ArchConfig(mca_rows=2, mca_cols=2, mcas_per_mpe=4), UNSIGNED)

    assert plan.schedules[0].degree(0) == 6
    assert sorted(plan.tile_mpe.values()) == [0, 0, 0, 0, 1, 1]
    assert plan.cext_links == ((0, 1),)
    assert plan.homes == ((0,),)

    # Four tiles fit a single mPE
    topology = SnnTopology([LayerSpec.dense(4, 4)], [np.ones((4, 4))])
    plan = compile_topology(topology, ArchConfig(mca_rows=2, mca_cols=2, mcas_per_mpe=4), UNSIGNED)
    assert len(plan.mpes) == 1
    assert plan.cext_links == ()


def test_compile_across_neurocells():
    cfg = ArchConfig(mca_rows=2, mca_cols=2, mcas_per_mpe=1, nc_grid_w=2, nc_grid_h=1)
    topology = SnnTopology(
        [LayerSpec.dense(4, 4), LayerSpec.dense(4, 4)], [np.ones((4, 4)), np.ones((4, 4))]
    )
    plan = compile_topology(topology, cfg, UNSIGNED)

    assert plan.neurocells == (0, 1, 2, 3)
    assert plan.bus_segments == (0, 1)
    assert all(flow.kind is FlowKind.BUS for flow in plan.flows[1])


def test_utilization():
    cfg = ArchConfig(mca_rows=2, mca_cols=2)
    topology = SnnTopology([LayerSpec.dense(3, 4)], [np.ones((3, 4))])
    report = utilization(compile_topology(topology, cfg, UNSIGNED))

    assert report.total_tiles == 4
    assert [tile.fill for tile in report.tiles] == [1.0, 0.5, 1.0, 0.5]
    assert report.mean_fill == 0.75
    assert report.layer_mean == (0.75,)

    # Larger crossbars leave sparse layers emptier
    layer = LayerSpec.conv(8, 8, 1, 3, 2)
    conv = SnnTopology([layer], [np.ones(layer.weight_shape)])
    small = utilization(compile_topology(conv, ArchConfig(mca_rows=16, mca_cols=16), QuantConfig()))
    large = utilization(compile_topology(conv, ArchConfig(mca_rows=64, mca_cols=64), QuantConfig()))
    assert large.mean_fill < small.mean_fill
