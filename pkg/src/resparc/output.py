"""
Module with auxiliary functions for output generation.

Tables are written as RFC-4180 CSV files, plans as JSON with sorted keys and
charts as static SVG files; all outputs are pure functions of their inputs,
so that re-running an experiment reproduces them byte by byte.
"""

# Import Python standard libraries
import csv
import json
import pathlib
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

# Import 3rd-party libraries
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Import other modules from this library
from .archsim import SimResult, TraceEvent  # noqa: E402
from .common import InputError  # noqa: E402
from .costmodel import CmosReport, ComparisonRow, EnergyReport  # noqa: E402
from .mapper import MappingPlan, UtilizationReport  # noqa: E402
from .snn import SpikeTrain  # noqa: E402

PathLike = Union[str, pathlib.Path]

# Fixed salt for the identifiers matplotlib writes in SVG files
matplotlib.rcParams["svg.hashsalt"] = "resparc"


def format_value(value: Any) -> str:
    """
    Returns the textual representation of a table cell.
    """

    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return "%.12g" % value
    return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]):
    """
    Writes a table to a CSV file.
    """

    with open(path, "w", encoding="utf-8", newline="") as handler:
        writer = csv.writer(handler)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    """
    Reads a CSV file written by `write_csv()` as a list of dictionaries.
    """

    with open(path, encoding="utf-8", newline="") as handler:
        return list(csv.DictReader(handler))


def write_spike_train(path: PathLike, train: SpikeTrain):
    """
    Writes a spike train as `(timestep, neuron_index)` pairs, one per spike.
    """

    steps, neurons = np.nonzero(train.spikes)
    write_csv(path, ["timestep", "neuron_index"], zip(steps.tolist(), neurons.tolist()))


def read_spike_train(path: PathLike, timesteps: int, width: int) -> SpikeTrain:
    """
    Reads a spike train written by `write_spike_train()`.

    :param path: The path to the CSV file.
    :param timesteps: The length of the train.
    :param width: The number of neurons.
    :return: The `SpikeTrain`.
    """

    spikes = np.zeros((timesteps, width), dtype=np.uint8)
    for line, row in enumerate(read_csv(path), start=2):
        try:
            step, neuron = int(row["timestep"]), int(row["neuron_index"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}, line {line}: expected `timestep,neuron_index`") from exc
        if not (0 <= step < timesteps and 0 <= neuron < width):
            raise InputError(
                f"{path}, line {line}: spike ({step}, {neuron}) outside a "
                f"{timesteps}x{width} train"
            )
        spikes[step, neuron] = 1

    return SpikeTrain(spikes)


def write_counters(path: PathLike, result: SimResult):
    """
    Writes the counters of a simulation as `(counter, value)` rows.
    """

    rows = list(result.counters().items())
    rows += [("cycles_%s" % stage, value) for stage, value in result.stage_totals().items()]
    write_csv(path, ["counter", "value"], rows)


def energy_rows(run_id: str, energy: EnergyReport, cmos: Optional[CmosReport] = None) -> List[list]:
    """
    Returns the `(run_id, component, joules)` rows of the energy reports.
    """

    rows = [[run_id, "resparc_%s" % name, value] for name, value in energy.components().items()]
    rows += [
        [run_id, "resparc_peripheral_%s" % name, value] for name, value in energy.details.items()
    ]
    rows.append([run_id, "resparc_per_classification", energy.per_classification])

    if cmos is not None:
        rows += [[run_id, "cmos_%s" % name, value] for name, value in cmos.components().items()]
        rows.append([run_id, "cmos_per_classification", cmos.per_classification])

    return rows


def write_energy(path: PathLike, run_id: str, energy: EnergyReport, cmos: Optional[CmosReport] = None):
    write_csv(path, ["run_id", "component", "joules"], energy_rows(run_id, energy, cmos))


def write_comparison(path: PathLike, rows: Sequence[ComparisonRow]):
    """
    Writes a `(metric, resparc, cmos, ratio)` table.
    """

    write_csv(
        path,
        ["metric", "resparc", "cmos", "ratio"],
        [[row.metric, row.resparc, row.cmos, row.ratio] for row in rows],
    )


def write_utilization(path: PathLike, report: UtilizationReport):
    write_csv(
        path,
        ["tile_id", "layer", "rows_used", "cols_used", "fill"],
        [[t.tile_id, t.layer, t.rows_used, t.cols_used, t.fill] for t in report.tiles],
    )


def write_trace(path: PathLike, events: Sequence[TraceEvent]):
    """
    Writes a packet trace, one line per event.
    """

    write_csv(
        path,
        ["timestep", "cycle", "switch", "in_port", "out_port", "suppressed"],
        [
            [e.timestep, e.cycle, e.switch, e.in_port, e.out_port, e.suppressed]
            for e in events
        ],
    )


def plan_json(plan: MappingPlan) -> str:
    """
    Returns the JSON text of a plan.
    """

    return json.dumps(plan.to_dict(), sort_keys=True, indent=1) + "\n"


def write_plan(path: PathLike, plan: MappingPlan):
    pathlib.Path(path).write_text(plan_json(plan), encoding="utf-8")


def _save(fig, path: PathLike):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def stacked_bar_svg(
    path: PathLike,
    labels: Sequence[str],
    components: Dict[str, Sequence[float]],
    title: str = "",
    ylabel: str = "energy (J)",
):
    """
    Writes a stacked bar chart, one bar per label and one stack per component.
    """

    fig, ax = plt.subplots(figsize=(6, 4))
    bottom = np.zeros(len(labels))
    for name, values in components.items():
        values = np.asarray(values, dtype=np.float64)
        ax.bar(list(labels), values, bottom=bottom, label=name)
        bottom += values

    ax.set_title(title)
    ax.set_ylabel(ylabel)
    ax.legend()
    _save(fig, path)


def line_svg(
    path: PathLike,
    x: Sequence[float],
    series: Dict[str, Sequence[float]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
):
    """
    Writes a line chart with one line per series.
    """

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in series.items():
        ax.plot(list(x), list(values), marker="o", label=name)

    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    _save(fig, path)
