"""
test_quantization
=================

Tests for the conductance quantization of the `resparc` package.
"""

# Import Python standard libraries
import pytest

# Import 3rd-party libraries
import numpy as np

# Import the library being tested
import resparc
from resparc.quantization import (
    QuantConfig,
    SignedMode,
    baseline_current,
    column_current,
    describe,
    effective_matrix,
    effective_weight,
    integrated_current,
    kappa,
    level_threshold,
    level_to_conductance,
    program_cell,
    quantization_step,
    quantize_column,
    quantize_matrix,
    quantize_weight,
)


def test_config():
    cfg = QuantConfig()
    assert cfg.levels == 16
    assert cfg.top_level == 15
    assert cfg.g_min == pytest.approx(5.0e-6)
    assert cfg.g_max == pytest.approx(5.0e-5)
    assert cfg.columns_per_output == 2

    unsigned = QuantConfig(signed_mode="unsigned")
    assert unsigned.signed_mode is SignedMode.UNSIGNED
    assert unsigned.columns_per_output == 1
    assert "unsigned" in describe(unsigned)

    for kwargs in [{"bits": 0}, {"bits": 9}, {"r_min": 3e5}, {"v_read": 0.0}, {"signed_mode": "x"}]:
        with pytest.raises(resparc.InputError):
            QuantConfig(**kwargs)


def test_quantize_weight():
    """
    Test the mapping of single weights to level pairs.
    """

    cfg = QuantConfig(bits=4)
    assert quantize_weight(1.0, 1.0, cfg).plus == 15
    assert quantize_weight(0.0, 1.0, cfg) == resparc.quantization.QuantizedEntry(0, 0)

    entry = quantize_weight(-0.5, 1.0, cfg)
    assert (entry.plus, entry.minus) == (0, 8)
    assert entry.signed_level == -8

    with pytest.raises(resparc.InputError):
        quantize_weight(1.5, 1.0, cfg)
    with pytest.raises(resparc.InputError):
        quantize_weight(-0.1, 1.0, QuantConfig(signed_mode=SignedMode.UNSIGNED))
    with pytest.raises(resparc.InputError):
        quantize_weight(0.1, 0.0, cfg)


def test_nearest_level():
    """
    Test that quantization picks the nearest level, by enumeration.
    """

    cfg = QuantConfig(bits=3)
    for weight in np.linspace(0.0, 1.0, 101):
        level = quantize_weight(float(weight), 1.0, cfg).plus
        errors = [abs(weight - candidate / 7) for candidate in range(8)]
        assert errors[level] == pytest.approx(min(errors))


def test_quantization_error_bound():
    """
    Test that effective weights are within half a step of the originals.
    """

    rng = np.random.default_rng(1)
    weights = rng.uniform(-2.0, 2.0, size=(500, 200))
    w_max = float(np.max(np.abs(weights)))

    for bits in range(1, 9):
        cfg = QuantConfig(bits=bits)
        matrix = quantize_matrix(weights, w_max, cfg)
        error = np.abs(effective_matrix(matrix, cfg) - weights)
        assert error.max() <= quantization_step(w_max, cfg) + 1e-12

    cfg = QuantConfig(bits=8)
    value = effective_weight(quantize_weight(0.3, 1.0, cfg), 1.0, cfg)
    assert abs(value - 0.3) <= 1.0 / (2 * 255)


def test_conductance():
    cfg = QuantConfig(bits=4)
    assert level_to_conductance(5, cfg) == pytest.approx(2.0e-5)
    assert program_cell(15, cfg).conductance == pytest.approx(5.0e-5, abs=1e-12)

    for bits in range(1, 9):
        cfg = QuantConfig(bits=bits)
        assert level_to_conductance(0, cfg) == pytest.approx(5.0e-6, abs=1e-12)
        assert level_to_conductance(cfg.top_level, cfg) == pytest.approx(5.0e-5, abs=1e-12)

    with pytest.raises(resparc.InputError):
        level_to_conductance(16, QuantConfig(bits=4))
    with pytest.raises(resparc.InputError):
        level_to_conductance(-1, QuantConfig(bits=4))


def test_column_current():
    """
    Test analog column currents in both signed modes.
    """

    cfg = QuantConfig(bits=4)
    column = quantize_column([1.0, 1.0, 1.0, -0.5], 1.0, cfg)

    assert column_current([0, 0, 0, 0], column, cfg) == 0.0
    assert column_current([1, 0, 0, 0], column, cfg) == pytest.approx(2.25e-5)
    assert column_current([1, 1, 1, 0], column, cfg) == pytest.approx(3 * 2.25e-5)

    # Currents are proportional to the effective weights
    spikes = [1, 0, 1, 1]
    effective = effective_matrix(quantize_matrix(np.array([[1.0], [1.0], [1.0], [-0.5]]), 1.0, cfg), cfg)
    assert integrated_current(spikes, column, cfg) == pytest.approx(
        kappa(1.0, cfg) * float(np.dot(spikes, effective[:, 0]))
    )

    with pytest.raises(resparc.InputError):
        column_current([1, 0], column, cfg)


def test_kappa_consistency():
    """
    Test that the integrated current per unit of effective weight is the
    same constant for every column, in both signed modes.
    """

    rng = np.random.default_rng(5)
    for mode in SignedMode:
        cfg = QuantConfig(bits=6, signed_mode=mode)
        low = 0.0 if mode is SignedMode.UNSIGNED else -1.0
        weights = rng.uniform(low, 1.0, size=(48, 200))
        w_max = float(np.max(np.abs(weights)))
        matrix = quantize_matrix(weights, w_max, cfg)
        effective = effective_matrix(matrix, cfg)

        ratios = []
        for index in range(weights.shape[1]):
            spikes = (rng.random(48) < 0.5).astype(np.uint8)
            # Columns whose active levels cancel out carry no current
            if int(np.dot(spikes, matrix.signed_levels[:, index])) == 0:
                continue
            current = integrated_current(spikes, matrix.column(index), cfg)
            ratios.append(current / float(np.dot(spikes, effective[:, index])))

        assert len(ratios) > 150
        assert ratios == pytest.approx([kappa(w_max, cfg)] * len(ratios), rel=1e-12)


def test_unsigned_baseline():
    cfg = QuantConfig(bits=4, signed_mode=SignedMode.UNSIGNED)
    column = quantize_column([1.0, 0.0, 0.5], 1.0, cfg)
    spikes = [1, 1, 1]

    raw = column_current(spikes, column, cfg)
    assert baseline_current(spikes, cfg) == pytest.approx(3 * 0.5 * 5.0e-6)
    assert integrated_current(spikes, column, cfg) == pytest.approx(raw - 3 * 0.5 * 5.0e-6)
    assert integrated_current(spikes, column, cfg) == pytest.approx(kappa(1.0, cfg) * (1.0 + 8 / 15))


def test_level_threshold():
    cfg = QuantConfig(bits=4)
    assert level_threshold(1.0, 1.0, cfg) == 15.0
    assert level_threshold(1.0, 0.5, cfg) == 30.0
    assert level_threshold(2.0, 1.0, QuantConfig(bits=1)) == 2.0
