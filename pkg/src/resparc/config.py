"""
Configuration of runs.

Defaults are specified in code and can be overridden by an INI file with the
sections `[quant]`, `[arch]`, `[energy]`, `[cmos]` and `[run]`, and then by
command-line flags. The file shipped in `data/resparc.ini` documents every
key.
"""

# Import Python standard libraries
import configparser
from dataclasses import dataclass, field, replace
import logging
import pathlib
from typing import Any, Dict, Optional, Tuple, Union

# Import other modules from this library
from .common import InputError
from .costmodel import CmosConfig, EnergyConfig
from .mapper import ArchConfig
from .quantization import QuantConfig

logger = logging.getLogger(__name__)

INPUT_PATTERNS = ("uniform", "foreground")


@dataclass(frozen=True)
class RunConfig:
    """
    Parameters of an experiment.

    `input_rate` is the mean spike probability of the input neurons of
    rate-coded random inputs, spread over all of them or over a centred box
    depending on `input_pattern`; `samples` the number of inputs used for
    fidelity measurements.
    """

    timesteps: int = 20
    seed: str = "resparc"
    input_rate: float = 0.25
    input_pattern: str = "uniform"
    event_driven: bool = True
    samples: int = 200
    bits_timesteps: int = 64
    sizes: Tuple[int, ...] = (32, 64, 128)
    bits: Tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8)

    def __post_init__(self):
        if self.timesteps < 1 or self.bits_timesteps < 1:
            raise InputError("run.timesteps must be positive")
        if not 0.0 <= self.input_rate <= 1.0:
            raise InputError(f"run.input_rate must be in [0, 1], got {self.input_rate}")
        if self.input_pattern not in INPUT_PATTERNS:
            raise InputError(
                f"run.input_pattern must be one of {', '.join(INPUT_PATTERNS)}, got `{self.input_pattern}`"
            )
        if self.samples < 1:
            raise InputError(f"run.samples must be positive, got {self.samples}")
        for name in ["sizes", "bits"]:
            values = getattr(self, name)
            if not values:
                raise InputError(f"run.{name} cannot be empty")
            if list(values) != sorted(set(values)):
                raise InputError(f"run.{name} must be sorted in ascending order, without repetitions")
        if min(self.sizes) < 2:
            raise InputError("crossbar sizes must be at least 2")
        if min(self.bits) < 1 or max(self.bits) > 8:
            raise InputError("bits must be in [1, 8]")


@dataclass(frozen=True)
class Config:
    """
    Complete configuration of a run.
    """

    quant: QuantConfig = field(default_factory=QuantConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    cmos: CmosConfig = field(default_factory=CmosConfig)
    run: RunConfig = field(default_factory=RunConfig)


_SECTIONS = {
    "quant": QuantConfig,
    "arch": ArchConfig,
    "energy": EnergyConfig,
    "cmos": CmosConfig,
    "run": RunConfig,
}

# The precision of the baseline follows the one of the devices
_DERIVED = {("cmos", "bits")}


def _default_section(name: str) -> Dict[str, Any]:
    instance = _SECTIONS[name]()
    return {
        key: getattr(instance, key)
        for key in instance.__dataclass_fields__
        if (name, key) not in _DERIVED
    }


# Default values of every section, as specified in code
DEFAULTS: Dict[str, Dict[str, Any]] = {name: _default_section(name) for name in _SECTIONS}


def parse_int_list(text: str) -> Tuple[int, ...]:
    """
    Parses a comma separated list of integers, such as `32,64,128`.
    """

    try:
        return tuple(int(value) for value in str(text).split(",") if value.strip())
    except ValueError as exc:
        raise InputError(f"invalid list of integers `{text}`") from exc


def _coerce(section: str, key: str, value: str, default: Any) -> Any:
    """
    Internal function converting a textual value to the type of its default.
    """

    try:
        if isinstance(default, bool):
            lowered = value.strip().lower()
            if lowered in ("1", "yes", "true", "on"):
                return True
            if lowered in ("0", "no", "false", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, tuple):
            return parse_int_list(value)
        if hasattr(default, "value"):
            return value.strip()
        return type(default)(value.strip())
    except (ValueError, InputError) as exc:
        raise InputError(f"invalid value `{value}` for {section}.{key}") from exc


def _build(values: Dict[str, Dict[str, Any]]) -> Config:
    sections = {name: _SECTIONS[name](**values[name]) for name in _SECTIONS}
    sections["cmos"] = replace(sections["cmos"], bits=sections["quant"].bits)
    return Config(**sections)


def load_config(
    path: Optional[Union[str, pathlib.Path]] = None,
    overrides: Optional[Dict[str, Dict[str, Any]]] = None,
) -> Config:
    """
    Builds a configuration from the defaults, a file and explicit overrides.

    :param path: Optional path to an INI file.
    :param overrides: Optional mapping of section to mapping of key to
        (already typed) value, applied last.
    :return: The `Config`.
    """

    values = {name: dict(section) for name, section in DEFAULTS.items()}

    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as handler:
                parser.read_file(handler)
        except OSError as exc:
            raise InputError(f"cannot read configuration file `{path}`: {exc}") from exc
        except configparser.Error as exc:
            raise InputError(f"{path}: {exc}") from exc

        for section in parser.sections():
            if section not in values:
                raise InputError(f"{path}: unknown section [{section}]")
            for key, value in parser.items(section):
                if key not in values[section]:
                    raise InputError(f"{path}: unknown key `{key}` in section [{section}]")
                values[section][key] = _coerce(section, key, value, DEFAULTS[section][key])

        logger.info("read configuration from %s", path)

    for section, entries in (overrides or {}).items():
        for key, value in entries.items():
            if section not in values or key not in values[section]:
                raise InputError(f"unknown configuration key {section}.{key}")
            values[section][key] = value

    return _build(values)
