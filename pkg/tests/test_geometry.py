import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from smartpur.geometry import CellConfig, dequantize_ta, label_validity, quantize_ta


def test_q_dist_matches_step_distance(cell):
    assert cell.q_dist == pytest.approx(311.784, abs=1e-3)
    assert cell.q_dist == oracles.Q_DIST


@pytest.mark.parametrize("d, expected", [(0.0, 0), (1000.0, 3), (702.0, 2), (311.0, 0), (311.79, 1)])
def test_quantize_examples(cell, d, expected):
    assert quantize_ta(d, cell) == expected


@pytest.mark.parametrize("tau, meters", [(0, 0.0), (3, 935.35), (2, 623.57)])
def test_dequantize_examples(cell, tau, meters):
    assert dequantize_ta(tau, cell) == pytest.approx(meters, abs=0.01)
    assert quantize_ta(dequantize_ta(tau, cell), cell) == tau


def test_quantize_returns_python_int_for_scalars(cell):
    assert isinstance(quantize_ta(1000.0, cell), int)


def test_quantize_vectorized_agrees_with_loop_oracle(cell, rng):
    d = rng.uniform(0, 5000, 2000)
    assert quantize_ta(d, cell).tolist() == [oracles.quantize(x) for x in d]


@pytest.mark.parametrize("bad", [-1.0, -1e-9, float("nan")])
def test_quantize_rejects_bad_distances(cell, bad):
    with pytest.raises(ValueError):
        quantize_ta(bad, cell)


def test_dequantize_rejects_negative(cell):
    with pytest.raises(ValueError):
        dequantize_ta(-1, cell)


@pytest.mark.parametrize("a, b, ok", [(1000, 1000, True), (1000, 1702, True), (1000, 1703, False), (1702, 1000, True)])
def test_label_examples(big_cell, a, b, ok):
    assert bool(label_validity(a, b, big_cell)) is ok


@given(st.integers(min_value=0, max_value=10**6))
def test_round_trip_every_tau(tau):
    cfg = CellConfig()
    assert quantize_ta(dequantize_ta(tau, cfg), cfg) == tau


@given(st.floats(min_value=0, max_value=1e6, allow_nan=False))
def test_quantization_error_within_one_step(d):
    cfg = CellConfig()
    err = d - dequantize_ta(quantize_ta(d, cfg), cfg)
    assert 0 <= err < cfg.q_dist


@settings(max_examples=200)
@given(st.floats(0, 1e5), st.floats(0, 1e5))
def test_quantize_monotone(a, b):
    cfg = CellConfig()
    lo, hi = sorted((a, b))
    assert quantize_ta(lo, cfg) <= quantize_ta(hi, cfg)


@given(st.floats(0, 3000), st.floats(0, 3000))
def test_label_symmetric_and_closed(a, b):
    cfg = CellConfig(r_cell=3000.0)
    assert label_validity(a, b, cfg) == label_validity(b, a, cfg)
    assert label_validity(a, b, cfg) == (abs(a - b) <= 702.0)


def test_config_invariants():
    with pytest.raises(ValueError):
        CellConfig(r_cell=0)
    with pytest.raises(ValueError):
        CellConfig(r_cell=500.0)  # smaller than the permissible movement
    with pytest.raises(ValueError):
        CellConfig(tau_step=0)
    # equal radius and movement is accepted: all in-cell moves are valid
    assert CellConfig(r_cell=702.0).r_cell == 702.0


def test_config_json_round_trip():
    cfg = CellConfig(r_cell=2500.0, delta_d_per=650.0)
    doc = cfg.to_json()
    assert set(doc) == {"r_cell_m", "delta_d_per_m", "tau_step_s", "scs_hz"}
    assert CellConfig.from_json(doc) == cfg


def test_label_validity_vectorized(cell):
    got = label_validity(np.array([0.0, 100.0]), np.array([702.0, 803.0]), cell)
    assert got.tolist() == [True, False]
    assert not math.isnan(float(got.sum()))
