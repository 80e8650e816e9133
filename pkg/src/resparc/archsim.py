"""
Event-driven functional simulator of a compiled network.

The simulator executes a `MappingPlan` timestep by timestep and, inside each
timestep, layer by layer:

1. the input spikes are read from the input SRAM in `packet_width` chunks
   and broadcast over the shared bus to the NeuroCells holding the first
   layer (all-zero chunks are suppressed by the zero-check logic when
   running event-driven);
2. every mPE of the layer applies its buffered input spikes to its
   crossbars; neurons integrate their partial sums in schedule order, those
   computed on other mPEs arriving over the external-current links, and
   fire;
3. output spikes are packed and sent to the mPEs of the next layer, through
   the switch network inside a NeuroCell or, across NeuroCells, written to
   the SRAM and broadcast over the bus once the producing NeuroCell is done.

Currents are tracked as integer multiples of the conductance-step current,
and the integrate-and-fire update is the one of the reference simulator, so
that output spikes match `snn.reference_forward()` exactly. Besides the
spikes, the simulation counts every architectural event for the cost model.
"""

# Import Python standard libraries
from collections import deque
import copy
from dataclasses import dataclass, field
import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

# Import 3rd-party libraries
import numpy as np

# Import other modules from this library
from .common import InputError, SimulationError
from .mapper import ArchConfig, FlowKind, MappingPlan
from .snn import SpikeTrain, integrate_and_fire

logger = logging.getLogger(__name__)

# Per-timestep pipeline stages tallied by the simulator, in column order
STAGES = ("compute", "cext", "switch", "bus", "fire")

# Fields of `ArchConfig` that must agree between a plan and a run
_GEOMETRY = ("mca_rows", "mca_cols", "mcas_per_mpe", "nc_grid_w", "nc_grid_h", "num_neurocells")

SwitchId = Tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class SpikePacket:
    """
    A packet of spikes.

    `payload` always holds `packet_width` bits, the last packet of a flow
    being padded with zeros; bit `i` is the spike of neuron `neurons[i]`.
    Bus broadcasts have no destination mPE but a set of NeuroCell tags.
    """

    layer: int
    source: Optional[int]
    destination: Optional[int]
    neurons: Tuple[int, ...]
    payload: np.ndarray
    tags: Tuple[Tuple[int, int], ...] = ()

    @property
    def base(self) -> int:
        """
        Index of the first neuron of the packet.
        """

        return self.neurons[0]


@dataclass
class SwitchState:
    """
    State of a programmable switch.

    Every input port has a bounded FIFO of packets; the routing table maps
    destination mPEs to output ports, and each output port keeps the input
    port it granted last (its round-robin cursor).
    """

    switch: SwitchId
    table: Dict[int, str]
    depth: int = 16
    inputs: Dict[str, deque] = field(default_factory=dict)
    cursors: Dict[str, str] = field(default_factory=dict)

    @property
    def occupancy(self) -> int:
        return sum(len(fifo) for fifo in self.inputs.values())

    def free(self, port: str) -> int:
        return self.depth - len(self.inputs.get(port, ()))


@dataclass(frozen=True)
class TraceEvent:
    """
    One packet event: a switch grant, a bus broadcast or a suppression.
    """

    timestep: int
    cycle: int
    switch: str
    in_port: str
    out_port: str
    suppressed: bool


@dataclass(frozen=True)
class SimOptions:
    """
    Run options; `trace` collects a `TraceEvent` for every packet.
    """

    event_driven: bool = True
    trace: bool = False


@dataclass(eq=False)
class SimResult:
    """
    Output spikes and event counters of a simulation.

    `stages` holds, for every timestep, the cycles spent in each pipeline
    stage (see `STAGES`), summed over layers.
    """

    outputs: List[SpikeTrain]
    crossbar_reads: int = 0
    crossbar_skipped: int = 0
    neuron_integrations: int = 0
    spikes_emitted: int = 0
    packets_sent: int = 0
    packets_suppressed: int = 0
    hop_count: int = 0
    cext_transfers: int = 0
    bus_broadcasts: int = 0
    bus_suppressed: int = 0
    sram_reads: int = 0
    sram_writes: int = 0
    buffer_accesses: int = 0
    cycles_elapsed: int = 0
    stages: Optional[np.ndarray] = None
    trace: List[TraceEvent] = field(default_factory=list)

    @property
    def output(self) -> SpikeTrain:
        return self.outputs[-1]

    @property
    def timesteps(self) -> int:
        return self.outputs[0].timesteps

    @property
    def packets_generated(self) -> int:
        return self.packets_sent + self.packets_suppressed

    def counters(self) -> Dict[str, int]:
        """
        Returns all counters by name, in a fixed order.
        """

        names = [
            "crossbar_reads",
            "crossbar_skipped",
            "neuron_integrations",
            "spikes_emitted",
            "packets_generated",
            "packets_sent",
            "packets_suppressed",
            "hop_count",
            "cext_transfers",
            "bus_broadcasts",
            "bus_suppressed",
            "sram_reads",
            "sram_writes",
            "buffer_accesses",
            "cycles_elapsed",
        ]

        return {name: int(getattr(self, name)) for name in names}

    def stage_totals(self) -> Dict[str, int]:
        """
        Returns the cycles spent in each stage over the whole run.
        """

        totals = self.stages.sum(axis=0) if self.stages is not None else np.zeros(len(STAGES))
        return {stage: int(value) for stage, value in zip(STAGES, totals)}


def zero_check(payload: Union[int, Sequence[int], np.ndarray]) -> bool:
    """
    Returns whether a packet payload has no spike at all.

    :param payload: The payload, either as an integer bit field or as a
        sequence of bits.
    :return: `True` iff every bit is zero.
    """

    if isinstance(payload, (int, np.integer)):
        if payload < 0:
            raise InputError("integer payloads must be non-negative bit fields")
        return int(payload) == 0

    return not np.any(np.asarray(payload))


def _port_key(port: str) -> Tuple[str, int]:
    kind, _, index = port.partition(":")
    return kind, int(index)


def _switch_name(switch: SwitchId) -> str:
    return "%i/%i/%i" % switch


def _step_switch(
    state: SwitchState,
    arrivals: Iterable[Tuple[str, SpikePacket]],
    timestep: int,
) -> Tuple[List[Tuple[str, str, SpikePacket]], int]:
    """
    Internal function advancing a switch by one cycle, in place.

    :return: The granted `(in_port, out_port, packet)` triples and the number
        of buffer accesses performed.
    """

    accesses = 0
    for port, packet in arrivals:
        fifo = state.inputs.setdefault(port, deque())
        if len(fifo) >= state.depth:
            raise SimulationError(
                f"buffer overflow at switch {_switch_name(state.switch)}, port {port}, "
                f"timestep {timestep} (depth {state.depth})"
            )
        fifo.append(packet)
        accesses += 1

    # Head-of-line requests, by output port
    requests: Dict[str, List[str]] = {}
    for port in sorted(state.inputs, key=_port_key):
        fifo = state.inputs[port]
        if not fifo:
            continue
        out_port = state.table.get(fifo[0].destination)
        if out_port is None:
            raise SimulationError(
                f"routing-table miss at switch {_switch_name(state.switch)}, port {port}, "
                f"timestep {timestep}: no route to mPE {fifo[0].destination}"
            )
        requests.setdefault(out_port, []).append(port)

    # Round-robin: the first contender after the last granted port wins
    granted = []
    for out_port in sorted(requests, key=_port_key):
        contenders = requests[out_port]
        last = state.cursors.get(out_port)
        winner = contenders[0]
        if last is not None:
            after = [port for port in contenders if _port_key(port) > _port_key(last)]
            if after:
                winner = after[0]

        state.cursors[out_port] = winner
        granted.append((winner, out_port, state.inputs[winner].popleft()))
        accesses += 1

    return granted, accesses


def switch_transfer(
    state: SwitchState,
    packets: Sequence[Tuple[str, SpikePacket]],
    timestep: int = 0,
) -> Tuple[SwitchState, List[Tuple[str, SpikePacket]], List[TraceEvent]]:
    """
    Runs one cycle of a switch.

    Arriving packets are appended to the FIFOs of their input ports; then
    every output port requested by the head of some FIFO grants exactly one
    of them, in round-robin order. Packets not granted stay buffered.

    :param state: The switch state, which is not modified.
    :param packets: The `(input port, packet)` pairs arriving this cycle.
    :param timestep: The current timestep, for diagnostics.
    :return: The new state, the `(output port, packet)` pairs granted this
        cycle (each charged one hop) and the hop events.
    """

    state = copy.deepcopy(state)
    granted, _ = _step_switch(state, packets, timestep)

    delivered = [(out_port, packet) for _, out_port, packet in granted]
    events = [
        TraceEvent(timestep, 0, _switch_name(state.switch), in_port, out_port, False)
        for in_port, out_port, _ in granted
    ]

    return state, delivered, events


def _next_hop(switch: SwitchId, out_port: str) -> Tuple[SwitchId, str]:
    """
    Internal function following a switch-to-switch link.
    """

    nc, sx, sy = switch
    kind, index = _port_key(out_port)
    if kind == "row":
        return (nc, index, sy), f"row:{sx}"
    return (nc, sx, index), f"col:{sy}"


@dataclass
class _LayerProgram:
    """
    Internal structure with the static data of a layer used at every step.
    """

    layer: int
    in_size: int
    mpes: List[int]
    mpe_tiles: Dict[int, list]
    tile_offset: Dict[int, int]
    tile_slot: Dict[int, int]
    tile_rows: Dict[int, np.ndarray]
    width: int
    entry_flat: np.ndarray
    entry_neuron: np.ndarray
    entry_slot: np.ndarray
    entry_links: np.ndarray
    compute_cycles: int
    cext_cycles: int


def _layer_programs(plan: MappingPlan) -> List[_LayerProgram]:
    programs = []
    for layer in range(plan.num_layers):
        tiles = plan.layer_tiles(layer)
        mpe_tiles: Dict[int, list] = {}
        for tile in tiles:
            mpe_tiles.setdefault(plan.tile_mpe[tile.tile_id], []).append(tile)

        tile_offset, tile_slot, tile_rows, width = {}, {}, {}, 0
        for slot, tile in enumerate(tiles):
            tile_offset[tile.tile_id] = width
            tile_slot[tile.tile_id] = slot
            tile_rows[tile.tile_id] = np.asarray(tile.row_map, dtype=np.int64)
            width += len(tile.col_map)

        flat, neurons, slots, links = [], [], [], []
        compute, cext = 0, 0
        homes = plan.homes[layer]
        for neuron, entries in enumerate(plan.schedules[layer].entries):
            local = 0
            for entry in entries:
                flat.append(tile_offset[entry.tile_id] + entry.column)
                neurons.append(neuron)
                slots.append(tile_slot[entry.tile_id])
                distance = abs(plan.tile_mpe[entry.tile_id] - homes[neuron])
                links.append(distance)
                local += distance == 0
            compute = max(compute, local)
            cext = max(cext, len(entries) - local)

        programs.append(
            _LayerProgram(
                layer=layer,
                in_size=plan.input_size if layer == 0 else plan.layer_size(layer - 1),
                mpes=sorted(mpe_tiles),
                mpe_tiles=mpe_tiles,
                tile_offset=tile_offset,
                tile_slot=tile_slot,
                tile_rows=tile_rows,
                width=width,
                entry_flat=np.asarray(flat, dtype=np.int64),
                entry_neuron=np.asarray(neurons, dtype=np.int64),
                entry_slot=np.asarray(slots, dtype=np.int64),
                entry_links=np.asarray(links, dtype=np.int64),
                compute_cycles=compute,
                cext_cycles=cext,
            )
        )

    return programs


def _check_geometry(plan: MappingPlan, cfg: ArchConfig):
    for name in _GEOMETRY:
        if getattr(plan.arch, name) != getattr(cfg, name):
            raise InputError(
                f"configuration does not match the plan: arch.{name} is "
                f"{getattr(cfg, name)}, the plan was compiled with {getattr(plan.arch, name)}"
            )


def _chunks(neurons: Sequence[int], width: int) -> List[Tuple[int, ...]]:
    return [tuple(neurons[start : start + width]) for start in range(0, len(neurons), width)]


def _payload(spikes: np.ndarray, neurons: Sequence[int], width: int) -> np.ndarray:
    payload = np.zeros(width, dtype=np.uint8)
    payload[: len(neurons)] = spikes[list(neurons)]
    return payload


class _Simulator:
    """
    Internal class holding the mutable state of a run.
    """

    def __init__(self, plan: MappingPlan, cfg: ArchConfig, opts: SimOptions, timesteps: int):
        self.plan = plan
        self.cfg = cfg
        self.opts = opts
        self.width = cfg.effective_packet_width
        self.programs = _layer_programs(plan)
        self.switches: Dict[SwitchId, SwitchState] = {}
        self.result = SimResult(outputs=[])
        self.stages = np.zeros((timesteps, len(STAGES)), dtype=np.int64)
        self.timestep = 0

        # Per layer, the SRAM chunks read for bus flows, each with the
        # neurons every consumer takes from it
        self.bus_chunks: List[List[Tuple[int, str, List[Tuple[int, np.ndarray]]]]] = []
        for program, flows in zip(self.programs, plan.flows):
            needs: Dict[int, List[int]] = {}
            for flow in flows:
                if flow.kind is FlowKind.BUS:
                    needs.setdefault(flow.consumer, []).extend(flow.neurons)

            chunks = []
            self.bus_chunks.append(chunks)
            if not needs:
                continue

            for start in range(0, program.in_size, self.width):
                stop = start + self.width
                takes = []
                for mpe in sorted(needs):
                    group = np.asarray(sorted(needs[mpe]), dtype=np.int64)
                    group = group[(group >= start) & (group < stop)]
                    if len(group):
                        takes.append((mpe, group))
                if takes:
                    tags = sorted({plan.nc_tag(cfg.mpe_position(mpe)[0]) for mpe, _ in takes})
                    chunks.append((start, ";".join("nc:%i.%i" % tag for tag in tags), takes))

    def _trace(self, cycle: int, switch: str, in_port: str, out_port: str, suppressed: bool):
        if self.opts.trace:
            self.result.trace.append(
                TraceEvent(self.timestep, cycle, switch, in_port, out_port, suppressed)
            )

    def _switch(self, switch: SwitchId) -> SwitchState:
        if switch not in self.switches:
            self.switches[switch] = SwitchState(
                switch, self.plan.routing_tables.get(switch, {}), self.cfg.buffer_depth
            )
        return self.switches[switch]

    def bus_transfer(self, layer: int, spikes: np.ndarray, buffers: Dict[int, np.ndarray]) -> int:
        """
        Reads spikes from the SRAM and broadcasts them to the consumers of
        `layer`; returns the cycles spent.
        """

        chunks = self.bus_chunks[layer]
        if not chunks:
            return 0

        result = self.result
        writes = 0
        if layer > 0:
            # The producing NeuroCells write their whole output, then raise
            # their event flag
            writes = math.ceil(len(spikes) / self.width)
            result.sram_writes += writes

        reads = broadcasts = 0
        for start, tags, takes in chunks:
            reads += 1
            result.sram_reads += 1

            # One broadcast reaches every tagged NeuroCell
            if self.opts.event_driven and zero_check(spikes[start : start + self.width]):
                result.bus_suppressed += 1
                self._trace(0, "bus", f"sram:{start}", tags, True)
                continue

            broadcasts += 1
            result.bus_broadcasts += 1
            self._trace(0, "bus", f"sram:{start}", tags, False)
            for mpe, group in takes:
                buffers[mpe][group] = spikes[group]
                result.buffer_accesses += 1

        return (writes + reads) * self.cfg.sram_cycles + broadcasts * self.cfg.bus_cycles

    def switch_network(self, outboxes: Dict[int, deque], buffers: Dict[int, np.ndarray]) -> int:
        """
        Moves packets from the output buffers of the mPEs to their
        destinations; returns the number of cycles until the network drains.
        """

        result = self.result
        in_flight: List[Tuple[SwitchId, str, SpikePacket]] = []
        cycle = 0

        def pending() -> bool:
            return (
                bool(in_flight)
                or any(outboxes.values())
                or any(state.occupancy for state in self.switches.values())
            )

        while pending():
            cycle += 1
            arrivals: Dict[SwitchId, List[Tuple[str, SpikePacket]]] = {}
            for switch, port, packet in in_flight:
                arrivals.setdefault(switch, []).append((port, packet))

            # Injection from the output buffers, with back-pressure
            for mpe in sorted(outboxes):
                if not outboxes[mpe]:
                    continue
                switch, port = self.cfg.switch_of(mpe), f"mpe:{mpe}"
                if self._switch(switch).free(port) > 0:
                    arrivals.setdefault(switch, []).append((port, outboxes[mpe].popleft()))

            in_flight = []
            for switch in sorted(set(self.switches) | set(arrivals)):
                state = self._switch(switch)
                granted, accesses = _step_switch(state, arrivals.get(switch, []), self.timestep)
                result.buffer_accesses += accesses
                for in_port, out_port, packet in granted:
                    result.hop_count += 1
                    self._trace(cycle, _switch_name(switch), in_port, out_port, False)

                    # Links end at the destination mPE when they reach its switch
                    if not out_port.startswith("mpe:"):
                        target, port = _next_hop(switch, out_port)
                        if target != self.cfg.switch_of(packet.destination):
                            in_flight.append((target, port, packet))
                            continue

                    neurons = list(packet.neurons)
                    buffers[packet.destination][neurons] = packet.payload[: len(neurons)]
                    result.buffer_accesses += 1

        return cycle

    def deliver(self, layer: int, spikes: np.ndarray) -> Tuple[Dict[int, np.ndarray], int, int]:
        """
        Delivers the spikes feeding `layer` to its mPEs.

        :return: The input buffers of the mPEs, and the switch and bus cycles.
        """

        program = self.programs[layer]
        buffers = {mpe: np.zeros(program.in_size, dtype=np.uint8) for mpe in program.mpes}
        outboxes: Dict[int, deque] = {}
        result = self.result

        for flow in self.plan.flows[layer]:
            if flow.kind is FlowKind.LOCAL:
                neurons = list(flow.neurons)
                buffers[flow.consumer][neurons] = spikes[neurons]
            elif flow.kind is FlowKind.SWITCH:
                for neurons in _chunks(flow.neurons, self.width):
                    packet = SpikePacket(
                        layer,
                        flow.producer,
                        flow.consumer,
                        neurons,
                        _payload(spikes, neurons, self.width),
                    )
                    if self.opts.event_driven and zero_check(packet.payload):
                        result.packets_suppressed += 1
                        self._trace(
                            0,
                            _switch_name(self.cfg.switch_of(flow.producer)),
                            f"mpe:{flow.producer}",
                            f"mpe:{flow.consumer}",
                            True,
                        )
                        continue
                    result.packets_sent += 1
                    result.buffer_accesses += 1
                    outboxes.setdefault(flow.producer, deque()).append(packet)

        switch_cycles = self.switch_network(outboxes, buffers) if outboxes else 0
        bus_cycles = self.bus_transfer(layer, spikes, buffers)

        return buffers, switch_cycles, bus_cycles

    def compute(self, layer: int, buffers: Dict[int, np.ndarray], potential: np.ndarray):
        """
        Applies the buffered spikes to the crossbars of a layer and fires.
        """

        program = self.programs[layer]
        result = self.result
        partials = np.zeros(program.width, dtype=np.int64)
        read = np.zeros(len(program.tile_slot), dtype=bool)

        for mpe in program.mpes:
            spikes = buffers[mpe]
            for tile in program.mpe_tiles[mpe]:
                rows = spikes[program.tile_rows[tile.tile_id]]
                if self.opts.event_driven and not rows.any():
                    result.crossbar_skipped += 1
                    continue
                result.crossbar_reads += 1
                read[program.tile_slot[tile.tile_id]] = True
                offset = program.tile_offset[tile.tile_id]
                partials[offset : offset + len(tile.col_map)] = rows.astype(np.int64) @ tile.signed_levels

        # Time-multiplexed integration of the partial sums, in schedule order
        current = np.zeros(len(potential), dtype=np.int64)
        np.add.at(current, program.entry_neuron, partials[program.entry_flat])

        used = read[program.entry_slot]
        result.neuron_integrations += int(used.sum())
        result.cext_transfers += int(program.entry_links[used].sum())

        potential, spikes = integrate_and_fire(potential, current, self.plan.thresholds[layer])
        result.spikes_emitted += int(spikes.sum())

        return potential, spikes

    def run(self, train: SpikeTrain) -> SimResult:
        plan = self.plan
        potentials = [np.zeros(plan.layer_size(layer)) for layer in range(plan.num_layers)]
        outputs = [
            np.zeros((train.timesteps, plan.layer_size(layer)), dtype=np.uint8)
            for layer in range(plan.num_layers)
        ]

        for step in range(train.timesteps):
            self.timestep = step
            spikes = train.spikes[step]
            for layer, program in enumerate(self.programs):
                buffers, switch_cycles, bus_cycles = self.deliver(layer, spikes)
                potentials[layer], spikes = self.compute(layer, buffers, potentials[layer])
                outputs[layer][step] = spikes

                self.stages[step] += (
                    program.compute_cycles,
                    program.cext_cycles,
                    switch_cycles,
                    bus_cycles,
                    1,
                )

            # The output layer is written back to the SRAM
            self.result.sram_writes += math.ceil(len(spikes) / self.width)

        result = self.result
        result.outputs = [SpikeTrain(out) for out in outputs]
        result.stages = self.stages
        result.cycles_elapsed = int(self.stages.sum())

        return result


def simulate(
    plan: MappingPlan,
    train: SpikeTrain,
    cfg: Optional[ArchConfig] = None,
    opts: Optional[SimOptions] = None,
) -> SimResult:
    """
    Simulates the execution of a compiled network on an input spike train.

    :param plan: The compiled plan.
    :param train: The input spike train, as wide as the network input.
    :param cfg: The run configuration; its geometry must match the one the
        plan was compiled with, while packet width, buffer depth and bus and
        SRAM timings may differ. Defaults to the configuration of the plan.
    :param opts: The run options (event-driven execution and tracing).
    :return: The `SimResult`, with the output spikes of every layer.
    """

    cfg = cfg or plan.arch
    opts = opts or SimOptions()
    _check_geometry(plan, cfg)

    if train.width != plan.input_size:
        raise InputError(
            f"input train has {train.width} neurons but the plan expects {plan.input_size}"
        )

    result = _Simulator(plan, cfg, opts, train.timesteps).run(train)

    logger.debug(
        "simulated %i timesteps: %i crossbar reads, %i packets sent, %i suppressed, %i cycles",
        train.timesteps,
        result.crossbar_reads,
        result.packets_sent,
        result.packets_suppressed,
        result.cycles_elapsed,
    )

    return result
