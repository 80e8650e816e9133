"""
Mapping compiler.

The compiler partitions the connectivity matrix of every layer into crossbar
tiles, packs tiles into mPEs (macro Processing Engines, each with a few
crossbars) and mPEs into NeuroCells, builds the time-multiplexing schedules
that let a neuron integrate partial sums from several tiles, and routes the
spike traffic between layers either through the switch network of a
NeuroCell or, across NeuroCells, through the shared bus and input SRAM.

Geometry conventions:

- mPEs have a global index; NeuroCell `n` holds the `nc_grid_w * nc_grid_h`
  consecutive indices starting at `n * nc_grid_w * nc_grid_h`. Inside a
  NeuroCell the indices run over the grid in serpentine (boustrophedon)
  row-major order, so that consecutive indices are always grid neighbours.
- Switches serve 2x2 blocks of mPEs; the switch of the mPE at `(x, y)` is
  `(x // 2, y // 2)`. Switches in the same row or column of a NeuroCell have
  dedicated links between them.
"""

# Import Python standard libraries
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

# Import 3rd-party libraries
import numpy as np

# Import other modules from this library
from .common import CapacityError, InputError
from .quantization import QuantConfig, level_threshold, quantize_matrix
from .snn import ConnectivityMatrix, SnnTopology, topology_connectivity

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArchConfig:
    """
    Geometry of the core.

    A `packet_width` of zero means "as wide as a crossbar" (`mca_rows`).
    """

    mca_rows: int = 64
    mca_cols: int = 64
    mcas_per_mpe: int = 4
    nc_grid_w: int = 4
    nc_grid_h: int = 4
    num_neurocells: int = 64
    core_grid_w: int = 8
    packet_width: int = 32
    buffer_depth: int = 16
    bus_cycles: int = 2
    sram_cycles: int = 1

    def __post_init__(self):
        for name in [
            "mca_rows",
            "mca_cols",
            "mcas_per_mpe",
            "nc_grid_w",
            "nc_grid_h",
            "num_neurocells",
            "core_grid_w",
            "buffer_depth",
            "bus_cycles",
            "sram_cycles",
        ]:
            if getattr(self, name) < 1:
                raise InputError(f"arch.{name} must be positive, got {getattr(self, name)}")
        if self.packet_width < 0:
            raise InputError(f"arch.packet_width must be positive, got {self.packet_width}")

    @property
    def mpes_per_nc(self) -> int:
        return self.nc_grid_w * self.nc_grid_h

    @property
    def total_mpes(self) -> int:
        return self.mpes_per_nc * self.num_neurocells

    @property
    def effective_packet_width(self) -> int:
        return self.packet_width or self.mca_rows

    def mpe_position(self, mpe: int) -> Tuple[int, int, int]:
        """
        Returns the NeuroCell and the `(x, y)` grid position of an mPE.
        """

        nc, local = divmod(mpe, self.mpes_per_nc)
        y, offset = divmod(local, self.nc_grid_w)
        x = offset if y % 2 == 0 else self.nc_grid_w - 1 - offset

        return nc, x, y

    def nc_tag(self, nc: int) -> Tuple[int, int]:
        """
        Returns the `(x, y)` tag of a NeuroCell on the core.
        """

        return nc % self.core_grid_w, nc // self.core_grid_w

    def switch_of(self, mpe: int) -> Tuple[int, int, int]:
        """
        Returns the `(nc, sx, sy)` identifier of the switch serving an mPE.
        """

        nc, x, y = self.mpe_position(mpe)
        return nc, x // 2, y // 2


@dataclass(frozen=True, eq=False)
class CrossbarTile:
    """
    A block of a connectivity matrix programmed on one crossbar.

    `row_map` and `col_map` hold the global input and output neuron indices
    of the tile rows and logical columns; `plus` and `minus` the levels of the
    devices (`minus` is all zero in `Unsigned` mode) and `synapses` the cells
    holding an actual synapse.
    """

    tile_id: int
    layer: int
    row_map: Tuple[int, ...]
    col_map: Tuple[int, ...]
    plus: np.ndarray
    minus: np.ndarray
    synapses: np.ndarray
    columns_per_output: int = 1

    @property
    def rows_used(self) -> int:
        return len(self.row_map)

    @property
    def cols_used(self) -> int:
        """
        Physical columns used, counting differential pairs twice.
        """

        return len(self.col_map) * self.columns_per_output

    @property
    def cells_used(self) -> int:
        return int(self.synapses.sum()) * self.columns_per_output

    @property
    def signed_levels(self) -> np.ndarray:
        return self.plus.astype(np.int64) - self.minus.astype(np.int64)


@dataclass(frozen=True)
class ScheduleEntry:
    """
    One partial sum integrated by a neuron: a tile and its local column.
    """

    tile_id: int
    column: int


@dataclass(frozen=True)
class TimeMuxSchedule:
    """
    Partial-sum sources of every output neuron of a layer, in integration
    order (ascending input indices).
    """

    layer: int
    entries: Tuple[Tuple[ScheduleEntry, ...], ...]

    def degree(self, neuron: int) -> int:
        return len(self.entries[neuron])

    @property
    def max_degree(self) -> int:
        return max((len(entries) for entries in self.entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)


# A packing strategy maps a connectivity matrix onto tiles. The last two
# arguments are the layer index and the identifier of the first tile.
PackingStrategy = Callable[
    [ConnectivityMatrix, ArchConfig, QuantConfig, int, int],
    Tuple[List[CrossbarTile], TimeMuxSchedule],
]


def _logical_columns(cfg: ArchConfig, quant: QuantConfig) -> int:
    """
    Internal function returning the number of output neurons per crossbar.
    """

    columns = cfg.mca_cols // quant.columns_per_output
    if columns < 1:
        raise InputError(
            f"a {cfg.mca_cols}-column crossbar cannot hold a differential column pair"
        )

    return columns


def _make_tile(
    tile_id: int,
    layer: int,
    row_map: Sequence[int],
    col_map: Sequence[int],
    cells: Sequence[Tuple[int, int]],
    qmatrix,
    quant: QuantConfig,
) -> CrossbarTile:
    """
    Internal function programming a tile.

    :param cells: The `(input, output)` global pairs whose synapses the tile
        holds; cells of the tile outside this list stay at level 0.
    """

    row_pos = {row: pos for pos, row in enumerate(row_map)}
    col_pos = {col: pos for pos, col in enumerate(col_map)}

    plus = np.zeros((len(row_map), len(col_map)), dtype=np.int64)
    minus = np.zeros_like(plus)
    synapses = np.zeros(plus.shape, dtype=bool)

    if cells:
        rows = np.array([row for row, _ in cells])
        cols = np.array([col for _, col in cells])
        local_r = np.array([row_pos[row] for row in rows])
        local_c = np.array([col_pos[col] for col in cols])
        plus[local_r, local_c] = qmatrix.plus[rows, cols]
        minus[local_r, local_c] = qmatrix.minus[rows, cols]
        synapses[local_r, local_c] = True

    for array in (plus, minus, synapses):
        array.setflags(write=False)

    return CrossbarTile(
        tile_id,
        layer,
        tuple(int(row) for row in row_map),
        tuple(int(col) for col in col_map),
        plus,
        minus,
        synapses,
        quant.columns_per_output,
    )


def tile_dense(
    matrix: ConnectivityMatrix,
    cfg: ArchConfig,
    quant: QuantConfig,
    layer: int = 0,
    first_id: int = 0,
) -> Tuple[List[CrossbarTile], TimeMuxSchedule]:
    """
    Grid tiling of a connectivity matrix.

    The matrix is cut in `ceil(N_in / R)` row blocks and `ceil(N_out / C_eff)`
    column blocks, `C_eff` being the number of output neurons a crossbar
    holds (half of its columns in `Differential` mode). Tiles of the same
    column block get consecutive identifiers, and the schedule of each neuron
    lists its row-block tiles in ascending input order.

    :param matrix: The connectivity matrix of the layer.
    :param cfg: The core geometry.
    :param quant: The quantization configuration.
    :param layer: The index of the layer.
    :param first_id: The identifier of the first tile.
    :return: The list of tiles and the time-multiplexing schedule.
    """

    n_in, n_out = matrix.shape
    rows_per_tile, cols_per_tile = cfg.mca_rows, _logical_columns(cfg, quant)
    qmatrix = quantize_matrix(matrix.weights, matrix.w_max, quant)

    tiles = []
    entries: List[List[ScheduleEntry]] = [[] for _ in range(n_out)]
    for col_start in range(0, n_out, cols_per_tile):
        col_map = list(range(col_start, min(col_start + cols_per_tile, n_out)))
        for row_start in range(0, n_in, rows_per_tile):
            row_map = list(range(row_start, min(row_start + rows_per_tile, n_in)))
            block = matrix.mask[row_start : row_start + len(row_map), col_start : col_start + len(col_map)]
            cells = [(row_start + r, col_start + c) for r, c in zip(*np.nonzero(block))]

            tile = _make_tile(first_id + len(tiles), layer, row_map, col_map, cells, qmatrix, quant)
            tiles.append(tile)
            for pos, col in enumerate(col_map):
                entries[col].append(ScheduleEntry(tile.tile_id, pos))

    return tiles, TimeMuxSchedule(layer, tuple(tuple(entry) for entry in entries))


@dataclass
class _OpenGroup:
    """
    Internal structure of `pack_sparse()`: tiles being filled in lockstep,
    one per row chunk ("lane").
    """

    lanes: List[set]
    columns: List[int] = field(default_factory=list)
    cells: List[List[Tuple[int, int]]] = field(default_factory=list)


def _chunks(rows: np.ndarray, size: int) -> List[np.ndarray]:
    """
    Internal function splitting the rows of a column in chunks of `size`.
    """

    if len(rows) == 0:
        return [rows]
    return [rows[start : start + size] for start in range(0, len(rows), size)]


def pack_sparse(
    matrix: ConnectivityMatrix,
    cfg: ArchConfig,
    quant: QuantConfig,
    layer: int = 0,
    first_id: int = 0,
) -> Tuple[List[CrossbarTile], TimeMuxSchedule]:
    """
    Greedy input-sharing packing of a sparse connectivity matrix.

    Output columns are visited in ascending order and added to the open tile
    as long as the union of their input rows with the rows already in the
    tile fits the crossbar and a physical column is free; otherwise the tile
    is closed and a new one opened. Columns with more inputs than crossbar
    rows are split in chunks of `R` rows ("lanes"): consecutive columns with
    the same number of lanes share one open tile per lane, all lanes being
    opened and closed together, and the neuron integrates its lanes in
    order.

    A dense matrix degenerates to the grid tiling of `tile_dense()`, as all
    its columns share all their rows.

    :param matrix: The connectivity matrix of the layer.
    :param cfg: The core geometry.
    :param quant: The quantization configuration.
    :param layer: The index of the layer.
    :param first_id: The identifier of the first tile.
    :return: The list of tiles and the time-multiplexing schedule.
    """

    rows_per_tile, cols_per_tile = cfg.mca_rows, _logical_columns(cfg, quant)
    qmatrix = quantize_matrix(matrix.weights, matrix.w_max, quant)

    tiles: List[CrossbarTile] = []
    entries: List[List[ScheduleEntry]] = [[] for _ in range(matrix.shape[1])]

    def close(group: Optional[_OpenGroup]):
        if group is None:
            return
        for lane, rows in enumerate(group.lanes):
            tile = _make_tile(
                first_id + len(tiles),
                layer,
                sorted(rows),
                group.columns,
                group.cells[lane],
                qmatrix,
                quant,
            )
            tiles.append(tile)
            for pos, col in enumerate(group.columns):
                entries[col].append(ScheduleEntry(tile.tile_id, pos))

    group: Optional[_OpenGroup] = None
    for col in range(matrix.shape[1]):
        chunks = _chunks(matrix.column_rows(col), rows_per_tile)

        fits = (
            group is not None
            and len(group.lanes) == len(chunks)
            and len(group.columns) < cols_per_tile
            and all(
                len(lane.union(chunk.tolist())) <= rows_per_tile
                for lane, chunk in zip(group.lanes, chunks)
            )
        )
        if not fits:
            close(group)
            group = _OpenGroup([set() for _ in chunks], cells=[[] for _ in chunks])

        group.columns.append(col)
        for lane, chunk in enumerate(chunks):
            group.lanes[lane].update(chunk.tolist())
            group.cells[lane].extend((int(row), col) for row in chunk)

    close(group)

    # Lanes of a group are closed together: reorder each neuron's entries by
    # the first input row of the tile, so integration follows input order
    first_row = {tile.tile_id: (tile.row_map[0] if tile.row_map else 0) for tile in tiles}
    ordered = tuple(
        tuple(sorted(neuron, key=lambda entry: (first_row[entry.tile_id], entry.tile_id)))
        for neuron in entries
    )

    return tiles, TimeMuxSchedule(layer, ordered)


class FlowKind(Enum):
    """
    How spikes travel from the mPEs producing them to the mPEs consuming them.
    """

    LOCAL = "local"
    SWITCH = "switch"
    BUS = "bus"


@dataclass(frozen=True)
class Flow:
    """
    Spikes of `neurons` (the outputs of layer `layer - 1`, or the network
    input for layer 0) sent from mPE `producer` to mPE `consumer`. The
    producer of bus flows is `None` for the network input (read from SRAM).
    """

    layer: int
    producer: Optional[int]
    consumer: int
    neurons: Tuple[int, ...]
    kind: FlowKind


@dataclass(frozen=True)
class Hop:
    """
    One switch traversal: the switch, the input port the packet arrives on
    and the output port it leaves by.
    """

    switch: Tuple[int, int, int]
    in_port: str
    out_port: str


@dataclass(frozen=True)
class MpeInfo:
    """
    Placement of one mPE.
    """

    index: int
    nc: int
    x: int
    y: int
    layer: int
    tiles: Tuple[int, ...]


@dataclass(eq=False)
class MappingPlan:
    """
    Complete placement of a topology on the core.
    """

    arch: ArchConfig
    quant: QuantConfig
    tiles: Tuple[CrossbarTile, ...]
    schedules: Tuple[TimeMuxSchedule, ...]
    tile_mpe: Dict[int, int]
    mpes: Tuple[MpeInfo, ...]
    homes: Tuple[Tuple[int, ...], ...]
    cext_links: Tuple[Tuple[int, int], ...]
    flows: Tuple[Tuple[Flow, ...], ...]
    routes: Dict[Tuple[int, int], Tuple[Hop, ...]]
    routing_tables: Dict[Tuple[int, int, int], Dict[int, str]]
    bus_segments: Tuple[int, ...]
    w_max: Tuple[float, ...]
    thresholds: Tuple[float, ...]
    input_size: int

    @property
    def num_layers(self) -> int:
        return len(self.schedules)

    @property
    def neurocells(self) -> Tuple[int, ...]:
        return tuple(sorted({mpe.nc for mpe in self.mpes}))

    def tile(self, tile_id: int) -> CrossbarTile:
        return self.tiles[tile_id]

    def layer_tiles(self, layer: int) -> List[CrossbarTile]:
        return [tile for tile in self.tiles if tile.layer == layer]

    def layer_mpes(self, layer: int) -> List[MpeInfo]:
        return [mpe for mpe in self.mpes if mpe.layer == layer]

    def layer_size(self, layer: int) -> int:
        return len(self.schedules[layer])

    def nc_tag(self, nc: int) -> Tuple[int, int]:
        return self.arch.nc_tag(nc)

    def to_dict(self) -> dict:
        """
        Returns a JSON-serializable description of the plan.
        """

        return {
            "arch": {key: getattr(self.arch, key) for key in self.arch.__dataclass_fields__},
            "quant": {
                "bits": self.quant.bits,
                "r_min": self.quant.r_min,
                "r_max": self.quant.r_max,
                "v_read": self.quant.v_read,
                "signed_mode": self.quant.signed_mode.value,
            },
            "layers": [
                {
                    "index": layer,
                    "neurons": self.layer_size(layer),
                    "w_max": self.w_max[layer],
                    "threshold_levels": self.thresholds[layer],
                    "max_degree": self.schedules[layer].max_degree,
                    "homes": list(self.homes[layer]),
                    "bus_segment": layer in self.bus_segments,
                }
                for layer in range(self.num_layers)
            ],
            "tiles": [
                {
                    "id": tile.tile_id,
                    "layer": tile.layer,
                    "mpe": self.tile_mpe[tile.tile_id],
                    "rows": list(tile.row_map),
                    "cols": list(tile.col_map),
                    "plus": tile.plus.tolist(),
                    "minus": tile.minus.tolist(),
                }
                for tile in self.tiles
            ],
            "schedules": [
                [[[entry.tile_id, entry.column] for entry in neuron] for neuron in schedule.entries]
                for schedule in self.schedules
            ],
            "mpes": [
                {
                    "index": mpe.index,
                    "neurocell": mpe.nc,
                    "tag": list(self.arch.nc_tag(mpe.nc)),
                    "x": mpe.x,
                    "y": mpe.y,
                    "layer": mpe.layer,
                    "tiles": list(mpe.tiles),
                }
                for mpe in self.mpes
            ],
            "cext_links": [list(link) for link in self.cext_links],
            "routing_tables": [
                {
                    "switch": list(switch),
                    "entries": {str(dst): port for dst, port in sorted(table.items())},
                }
                for switch, table in sorted(self.routing_tables.items())
            ],
            "bus_segments": list(self.bus_segments),
        }


def _clusters(tiles: Sequence[CrossbarTile], schedule: TimeMuxSchedule) -> List[List[int]]:
    """
    Internal function grouping tiles that feed a common neuron.

    Tiles linked, directly or transitively, by the schedule of some neuron
    must be placed on contiguous mPEs of a single NeuroCell, as their partial
    sums meet over the analog links between neighbouring mPEs.
    """

    parent = {tile.tile_id: tile.tile_id for tile in tiles}

    def find(node: int) -> int:
        while parent[node] != node:
            parent[node] = parent[parent[node]]
            node = parent[node]
        return node

    for neuron in schedule.entries:
        for first, other in zip(neuron, neuron[1:]):
            root_a, root_b = find(first.tile_id), find(other.tile_id)
            if root_a != root_b:
                parent[max(root_a, root_b)] = min(root_a, root_b)

    groups: Dict[int, List[int]] = defaultdict(list)
    for tile in tiles:
        groups[find(tile.tile_id)].append(tile.tile_id)

    return [sorted(group) for _, group in sorted(groups.items())]


def route_kind(cfg: ArchConfig, src: int, dst: int) -> str:
    """
    Returns how two mPEs of the same NeuroCell are connected.

    The result is `"local"` (same mPE), `"shared"` (same switch), `"row"` or
    `"column"` (switches linked in the same row or column), or `"unlinked"`
    for switches differing in both row and column, which no single hop joins.
    """

    if src == dst:
        return "local"

    nc_a, sx_a, sy_a = cfg.switch_of(src)
    nc_b, sx_b, sy_b = cfg.switch_of(dst)
    if nc_a != nc_b:
        raise InputError(f"mPEs {src} and {dst} are in different NeuroCells")

    if (sx_a, sy_a) == (sx_b, sy_b):
        return "shared"
    if sy_a == sy_b:
        return "row"
    if sx_a == sx_b:
        return "column"
    return "unlinked"


def _route(cfg: ArchConfig, src: int, dst: int) -> Tuple[Hop, ...]:
    """
    Internal function computing the single hop of a switch route.
    """

    kind = route_kind(cfg, src, dst)
    nc, sx_a, sy_a = cfg.switch_of(src)
    _, sx_b, sy_b = cfg.switch_of(dst)
    in_port = f"mpe:{src}"

    if kind == "shared":
        return (Hop((nc, sx_a, sy_a), in_port, f"mpe:{dst}"),)
    if kind == "row":
        return (Hop((nc, sx_a, sy_a), in_port, f"row:{sx_b}"),)
    if kind == "column":
        return (Hop((nc, sx_a, sy_a), in_port, f"col:{sy_b}"),)

    raise CapacityError(f"no one-hop route from mPE {src} to mPE {dst}")


def _one_hop(cfg: ArchConfig, producers: Iterable[int], spots: Iterable[int]) -> bool:
    """
    Internal function checking that every producer sharing a NeuroCell with
    one of the spots reaches it in one hop.
    """

    per_nc = cfg.mpes_per_nc
    return all(
        route_kind(cfg, producer, spot) != "unlinked"
        for spot in spots
        for producer in producers
        if producer // per_nc == spot // per_nc
    )


def _place(
    layer_tiles: Sequence[Sequence[CrossbarTile]],
    schedules: Sequence[TimeMuxSchedule],
    cfg: ArchConfig,
) -> Dict[int, int]:
    """
    Internal function assigning tiles to mPEs.

    Layers start on a fresh mPE. A cluster of tiles goes into the free
    crossbars of the current mPE when it fits there, otherwise on fresh
    consecutive mPEs, moving to the next NeuroCell if the remaining mPEs of
    the current one are not enough. mPEs whose switch cannot reach the home
    of some input neuron in one hop are skipped; in a later NeuroCell all
    inputs arrive over the bus, so the search always ends.
    """

    per_mpe, per_nc = cfg.mcas_per_mpe, cfg.mpes_per_nc
    tile_mpe: Dict[int, int] = {}
    current, used = -1, per_mpe
    previous_homes: Tuple[int, ...] = ()

    for tiles, schedule in zip(layer_tiles, schedules):
        rows = {tile.tile_id: tile.row_map for tile in tiles}
        used = per_mpe
        for cluster in _clusters(tiles, schedule):
            size = len(cluster)
            producers = set()
            if previous_homes:
                producers = {previous_homes[row] for tile_id in cluster for row in rows[tile_id]}

            if size <= per_mpe - used and _one_hop(cfg, producers, [current]):
                for tile_id in cluster:
                    tile_mpe[tile_id] = current
                used += size
                continue

            needed = math.ceil(size / per_mpe)
            if needed > per_nc:
                raise CapacityError(
                    f"layer {schedule.layer}: {size} tiles feeding a single neuron group need "
                    f"{needed} adjacent mPEs but a NeuroCell holds {per_nc}"
                )

            start = current + 1
            while True:
                if start % per_nc + needed > per_nc:
                    start = (start // per_nc + 1) * per_nc
                if _one_hop(cfg, producers, range(start, start + needed)):
                    break
                start += 1

            if start > current + 1:
                logger.debug(
                    "layer %i: skipped mPEs %i-%i",
                    schedule.layer,
                    current + 1,
                    start - 1,
                )

            for pos, tile_id in enumerate(cluster):
                tile_mpe[tile_id] = start + pos // per_mpe
            current = start + needed - 1
            used = size - (needed - 1) * per_mpe

        previous_homes = tuple(tile_mpe[neuron[0].tile_id] for neuron in schedule.entries)

    required = current + 1
    if required > cfg.total_mpes:
        raise CapacityError(
            f"mapping requires {required} mPEs but the core has {cfg.total_mpes} "
            f"({cfg.num_neurocells} NeuroCells of {per_nc} mPEs)"
        )

    return tile_mpe


def assign_and_place(
    tiles: Sequence[CrossbarTile],
    schedules: Sequence[TimeMuxSchedule],
    cfg: ArchConfig,
    quant: Optional[QuantConfig] = None,
    w_max: Optional[Sequence[float]] = None,
    thresholds: Optional[Sequence[float]] = None,
    input_size: Optional[int] = None,
) -> MappingPlan:
    """
    Places tiles on mPEs and NeuroCells and routes the spike traffic.

    Tiles feeding the same neuron share an mPE when they fit its crossbars,
    otherwise they spill to the following (grid adjacent) mPEs, whose partial
    sums reach the neuron over external-current links. The home of a neuron,
    where its integrator lives, is the mPE of its first scheduled tile.
    Spikes between mPEs of the same NeuroCell use the switch network, spikes
    crossing NeuroCells go through the shared bus and the input SRAM.

    :param tiles: The tiles of all layers, with consecutive identifiers.
    :param schedules: One schedule per layer, in layer order.
    :param cfg: The core geometry.
    :param quant: The quantization configuration the tiles were programmed with.
    :param w_max: The per-layer weight scales (defaults to 1.0).
    :param thresholds: Per-layer thresholds in current quanta (defaults to 1.0).
    :param input_size: Width of the network input (defaults to the largest
        row index used by layer 0, plus one).
    :return: The `MappingPlan`.
    """

    quant = quant or QuantConfig()
    tiles = tuple(sorted(tiles, key=lambda tile: tile.tile_id))
    if [tile.tile_id for tile in tiles] != list(range(len(tiles))):
        raise InputError("tile identifiers must be consecutive and start at zero")

    num_layers = len(schedules)
    by_layer: List[List[CrossbarTile]] = [[] for _ in range(num_layers)]
    for tile in tiles:
        by_layer[tile.layer].append(tile)

    tile_mpe = _place(by_layer, schedules, cfg)

    # Collect the mPEs actually used
    mpe_tiles: Dict[int, List[int]] = defaultdict(list)
    mpe_layer: Dict[int, int] = {}
    for tile in tiles:
        mpe_tiles[tile_mpe[tile.tile_id]].append(tile.tile_id)
        mpe_layer[tile_mpe[tile.tile_id]] = tile.layer

    mpes = []
    for index in sorted(mpe_tiles):
        nc, x, y = cfg.mpe_position(index)
        mpes.append(MpeInfo(index, nc, x, y, mpe_layer[index], tuple(mpe_tiles[index])))

    homes = tuple(
        tuple(tile_mpe[neuron[0].tile_id] for neuron in schedule.entries)
        for schedule in schedules
    )

    # External-current links along the chain of mPEs of every neuron
    links = set()
    for schedule in schedules:
        for neuron in schedule.entries:
            spots = [tile_mpe[entry.tile_id] for entry in neuron]
            if spots:
                links.update((idx, idx + 1) for idx in range(min(spots), max(spots)))

    if input_size is None:
        input_size = 1 + max((max(tile.row_map, default=-1) for tile in by_layer[0]), default=-1)

    # Spike flows between producers and consumers of every layer
    flows: List[Tuple[Flow, ...]] = []
    routes: Dict[Tuple[int, int], Tuple[Hop, ...]] = {}
    tables: Dict[Tuple[int, int, int], Dict[int, str]] = defaultdict(dict)
    bus_segments = []

    for layer in range(num_layers):
        layer_flows = []
        needed: Dict[int, set] = defaultdict(set)
        for tile in by_layer[layer]:
            needed[tile_mpe[tile.tile_id]].update(tile.row_map)

        for consumer in sorted(needed):
            neurons = sorted(needed[consumer])
            if layer == 0:
                layer_flows.append(Flow(0, None, consumer, tuple(neurons), FlowKind.BUS))
                continue

            by_producer: Dict[int, List[int]] = defaultdict(list)
            for neuron in neurons:
                by_producer[homes[layer - 1][neuron]].append(neuron)

            for producer, group in sorted(by_producer.items()):
                if producer == consumer:
                    kind = FlowKind.LOCAL
                elif cfg.mpe_position(producer)[0] == cfg.mpe_position(consumer)[0]:
                    kind = FlowKind.SWITCH
                    hops = _route(cfg, producer, consumer)
                    routes[(producer, consumer)] = hops
                    for hop in hops:
                        tables[hop.switch][consumer] = hop.out_port
                else:
                    kind = FlowKind.BUS
                layer_flows.append(Flow(layer, producer, consumer, tuple(group), kind))

        if any(flow.kind is FlowKind.BUS for flow in layer_flows):
            bus_segments.append(layer)
        flows.append(tuple(layer_flows))

    plan = MappingPlan(
        arch=cfg,
        quant=quant,
        tiles=tiles,
        schedules=tuple(schedules),
        tile_mpe=tile_mpe,
        mpes=tuple(mpes),
        homes=homes,
        cext_links=tuple(sorted(links)),
        flows=tuple(flows),
        routes=routes,
        routing_tables=dict(tables),
        bus_segments=tuple(bus_segments),
        w_max=tuple(w_max) if w_max is not None else (1.0,) * num_layers,
        thresholds=tuple(thresholds) if thresholds is not None else (1.0,) * num_layers,
        input_size=input_size,
    )

    logger.info(
        "placed %i tiles on %i mPEs in %i NeuroCells (%i C_ext links, bus segments %s)",
        len(tiles),
        len(mpes),
        len(plan.neurocells),
        len(links),
        list(bus_segments),
    )

    return plan


def compile_topology(
    topology: SnnTopology,
    cfg: ArchConfig,
    quant: QuantConfig,
    sparse_strategy: PackingStrategy = pack_sparse,
) -> MappingPlan:
    """
    Compiles a topology into a `MappingPlan`.

    Dense layers are grid-tiled with `tile_dense()`; convolutional and
    sub-sampling layers are packed with `sparse_strategy`.

    :param topology: The network to map.
    :param cfg: The core geometry.
    :param quant: The quantization configuration.
    :param sparse_strategy: The packing strategy for sparse layers.
    :return: The compiled plan.
    """

    tiles: List[CrossbarTile] = []
    schedules = []
    for layer, matrix in enumerate(topology_connectivity(topology)):
        strategy = sparse_strategy if matrix.sparse else tile_dense
        layer_tiles, schedule = strategy(matrix, cfg, quant, layer, len(tiles))
        tiles.extend(layer_tiles)
        schedules.append(schedule)
        logger.debug(
            "layer %i: %i tiles, max degree %i", layer, len(layer_tiles), schedule.max_degree
        )

    w_max = [matrix.w_max for matrix in topology_connectivity(topology)]
    thresholds = [
        level_threshold(layer.threshold, scale, quant)
        for layer, scale in zip(topology.layers, w_max)
    ]

    return assign_and_place(
        tiles,
        schedules,
        cfg,
        quant=quant,
        w_max=w_max,
        thresholds=thresholds,
        input_size=topology.input_size,
    )


@dataclass(frozen=True)
class TileUtilization:
    """
    Occupation of one crossbar.
    """

    tile_id: int
    layer: int
    rows_used: int
    cols_used: int
    fill: float


@dataclass(frozen=True)
class UtilizationReport:
    """
    Crossbar occupation of a plan.
    """

    tiles: Tuple[TileUtilization, ...]
    layer_mean: Tuple[float, ...]
    total_tiles: int
    total_mpes: int
    total_neurocells: int

    @property
    def mean_fill(self) -> float:
        if not self.tiles:
            return 0.0
        return float(np.mean([tile.fill for tile in self.tiles]))


def utilization(plan: MappingPlan) -> UtilizationReport:
    """
    Computes the fill of every tile: cells holding a synapse over `R * C`.
    """

    capacity = plan.arch.mca_rows * plan.arch.mca_cols
    tiles = tuple(
        TileUtilization(
            tile.tile_id,
            tile.layer,
            tile.rows_used,
            tile.cols_used,
            tile.cells_used / capacity,
        )
        for tile in plan.tiles
    )

    layer_mean = []
    for layer in range(plan.num_layers):
        fills = [tile.fill for tile in tiles if tile.layer == layer]
        layer_mean.append(float(np.mean(fills)) if fills else 0.0)

    return UtilizationReport(
        tiles, tuple(layer_mean), len(plan.tiles), len(plan.mpes), len(plan.neurocells)
    )


def reconstruct_levels(plan: MappingPlan, layer: int, shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Rebuilds the quantized matrix of a layer from its tiles.

    :return: The plus and minus level matrices and, for every cell, the number
        of tiles holding a synapse there (1 for every synapse of a valid plan).
    """

    plus = np.zeros(shape, dtype=np.int64)
    minus = np.zeros(shape, dtype=np.int64)
    cover = np.zeros(shape, dtype=np.int64)

    for tile in plan.layer_tiles(layer):
        rows = np.asarray(tile.row_map)
        cols = np.asarray(tile.col_map)
        local_r, local_c = np.nonzero(tile.synapses)
        plus[rows[local_r], cols[local_c]] += tile.plus[local_r, local_c]
        minus[rows[local_r], cols[local_c]] += tile.minus[local_r, local_c]
        cover[rows[local_r], cols[local_c]] += 1

    return plus, minus, cover
