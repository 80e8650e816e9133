"""
test_config
===========

Tests for the configuration layer of the `resparc` package.
"""

# Import Python standard libraries
import pathlib
import pytest

# Import the library being tested
import resparc
from resparc.config import DEFAULTS, Config, RunConfig, load_config, parse_int_list
from resparc.quantization import SignedMode

DATA = pathlib.Path(__file__).parent.parent / "data"


def test_defaults():
    config = load_config()
    assert config == Config()
    assert config.quant.bits == 4
    assert config.arch.mca_rows == 64
    assert config.run.sizes == (32, 64, 128)
    assert "bits" not in DEFAULTS["cmos"]


def test_shipped_file():
    """
    Test that the documented configuration file matches the code defaults.
    """

    assert load_config(DATA / "resparc.ini") == Config()


def test_file_and_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(
        "[quant]\nbits = 6\nsigned_mode = unsigned\n\n[arch]\nmca_rows = 32\n\n"
        "[run]\nevent_driven = off\nsizes = 16, 32\nseed = 11\n"
    )

    config = load_config(path)
    assert config.quant.bits == 6
    assert config.quant.signed_mode is SignedMode.UNSIGNED
    assert config.cmos.bits == 6
    assert config.arch.mca_rows == 32
    assert config.run.event_driven is False
    assert config.run.sizes == (16, 32)
    assert config.run.seed == "11"

    config = load_config(path, {"run": {"timesteps": 5}, "quant": {"bits": 2}})
    assert config.run.timesteps == 5
    assert config.quant.bits == 2
    assert config.cmos.bits == 2


@pytest.mark.parametrize(
    "text,message",
    [
        ["[network]\nlayers = 2\n", "unknown section"],
        ["[arch]\nrows = 2\n", "unknown key"],
        ["[arch]\nmca_rows = many\n", "arch.mca_rows"],
        ["[run]\nevent_driven = maybe\n", "run.event_driven"],
        ["[arch]\nmca_rows = 0\n", "positive"],
        ["[run]\nsizes = 64,32\n", "ascending"],
        ["[run]\nbits = 0,4\n", "bits"],
        ["bits = 4\n", "section"],
    ],
)
def test_invalid_files(tmp_path, text, message):
    path = tmp_path / "bad.ini"
    path.write_text(text)

    with pytest.raises(resparc.InputError, match=message):
        load_config(path)


def test_invalid_overrides():
    with pytest.raises(resparc.InputError):
        load_config(overrides={"run": {"colour": "red"}})
    with pytest.raises(resparc.InputError):
        load_config("/nonexistent/resparc.ini")
    with pytest.raises(resparc.InputError):
        RunConfig(input_rate=1.5)
    with pytest.raises(resparc.InputError, match="input_pattern"):
        RunConfig(input_pattern="stripes")


def test_parse_int_list():
    assert parse_int_list("32,64,128") == (32, 64, 128)
    assert parse_int_list("4, 8,") == (4, 8)

    with pytest.raises(resparc.InputError):
        parse_int_list("4,eight")
