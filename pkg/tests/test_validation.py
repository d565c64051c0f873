import json
import math

import numpy as np
import pytest
from sklearn.base import clone

import oracles
from conftest import NOISELESS_MEAS
from smartpur.channel import PRESETS, RsrpObservation, mean_rsrp_dbm
from smartpur.datagen import DatasetSpec, generate_dataset
from smartpur.exceptions import DataError, ModelEvaluationError
from smartpur.geometry import CellConfig, quantize_ta
from smartpur.learners import StumpEnsemble, TrainOptions, train_adaboost
from smartpur.validation import (
    ENHANCED, INVALID_TA, LEGACY, ThresholdParams, ThresholdValidator, ValidatorModel, load_validator,
    margin_bounds, threshold_decisions, thresholds, validate_ml, validate_threshold,
)

K = 3.76


def _obs(d_prev, d_curr, k=K):
    pl = PRESETS["UMa"].with_overrides(k=k, shadow_sigma_db=0.0)
    p, c = mean_rsrp_dbm(d_prev, pl), mean_rsrp_dbm(d_curr, pl)
    return RsrpObservation(p, c, p - c, k)


def test_threshold_examples(cell):
    pos, neg = thresholds(1000.0, ThresholdParams(K, mode=LEGACY, cfg=cell))
    assert pos == pytest.approx(8.684, abs=1e-3)
    assert neg == pytest.approx(-19.77, abs=1e-2)
    pos_eps, neg_eps = thresholds(1000.0, ThresholdParams(K, 1.5, 2.0, LEGACY, cell))
    assert pos - pos_eps == pytest.approx(1.5)
    assert neg_eps - neg == pytest.approx(2.0)


def test_negative_threshold_undefined_close_to_bs(cell):
    params = ThresholdParams(K, cfg=cell)
    with pytest.raises(ValueError):
        thresholds(500.0, params)
    assert thresholds(500.0, params, need_neg=False)[1] == -math.inf
    with pytest.raises(ValueError):
        thresholds(0.0, params)


def test_margin_bound_examples(cell):
    legacy = margin_bounds(LEGACY, K, cell)
    assert legacy == pytest.approx((37.6 * math.log10(1.468), 10.306), abs=1e-3)
    assert round(legacy[0], 2) == 6.27
    assert margin_bounds(ENHANCED, K, cell) == pytest.approx((10.306, 34.58), abs=1e-2)


def test_enhanced_positive_margin_always_wider():
    for r in np.linspace(1405.0, 20000.0, 300):
        cfg = CellConfig(r_cell=float(r))
        assert margin_bounds(ENHANCED, K, cfg)[0] > margin_bounds(LEGACY, K, cfg)[0]


def test_margin_bounds_cell_constraints():
    with pytest.raises(ValueError):
        margin_bounds(ENHANCED, K, CellConfig(r_cell=1404.0))
    with pytest.raises(ValueError):
        margin_bounds(LEGACY, K, CellConfig(r_cell=702.0))
    with pytest.raises(ValueError):
        margin_bounds("fuzzy", K, CellConfig())


def test_margins_checked_against_bounds(cell):
    with pytest.raises(ValueError):
        ThresholdParams(K, eps_pos=6.3, mode=LEGACY, cfg=cell)
    with pytest.raises(ValueError):
        ThresholdParams(K, eps_neg=-0.1, cfg=cell)
    assert ThresholdParams(K, eps_pos=6.3, mode=ENHANCED, cfg=cell).eps_pos == 6.3
    half = ThresholdParams.with_default_margins(K, ENHANCED, cell)
    assert (half.eps_pos, half.eps_neg) == pytest.approx(tuple(0.5 * b for b in margin_bounds(ENHANCED, K, cell)))


def test_no_movement_is_valid(cell):
    tau = quantize_ta(1000.0, cell)
    out = validate_threshold(_obs(1000.0, 1000.0), tau, ThresholdParams(K, cfg=cell))
    assert out.valid and out.ta_out == tau and not out.proactive_fallback


def test_large_move_away_is_invalid(big_cell):
    obs = _obs(1000.0, 1800.0)
    assert obs.delta_p_db == pytest.approx(9.598, abs=1e-3)
    for mode in (LEGACY, ENHANCED):
        out = validate_threshold(obs, quantize_ta(1000.0, big_cell), ThresholdParams(K, mode=mode, cfg=big_cell))
        assert out.ta_out == INVALID_TA and out.proactive_fallback


def test_branch_one_tests_only_positive_threshold(cell):
    # moving toward the BS from inside the permissible radius
    obs = _obs(200.0, 60.0)
    assert obs.delta_p_db < 0
    out = validate_threshold(obs, quantize_ta(200.0, cell), ThresholdParams(K, mode=ENHANCED, cfg=cell))
    assert out.valid
    # the two-sided rule would need a negative threshold that does not exist here
    with pytest.raises(ValueError):
        thresholds(200.0, ThresholdParams(K, mode=LEGACY, cfg=cell))


def test_edge_branch_diverges_from_legacy(cell):
    params = dict(k=K, cfg=cell)
    # a noisy, strongly positive difference near the cell edge
    assert not threshold_decisions(1400.0, 15.0, ThresholdParams(mode=LEGACY, **params))
    assert threshold_decisions(1400.0, 15.0, ThresholdParams(mode=ENHANCED, **params))


def test_vectorized_decisions_match_scalar_oracle(rng):
    cfg = CellConfig(r_cell=2500.0)
    d = rng.uniform(10.0, 2500.0, 4000)
    dp = rng.uniform(-40.0, 40.0, 4000)
    leg = threshold_decisions(d, dp, ThresholdParams(K, 1.0, 2.0, LEGACY, cfg))
    enh = threshold_decisions(d, dp, ThresholdParams(K, 1.0, 2.0, ENHANCED, cfg))
    assert leg.tolist() == [oracles.legacy_valid(a, b, K, 1.0, 2.0) for a, b in zip(d, dp)]
    assert enh.tolist() == [oracles.enhanced_valid(a, b, K, 2500.0, 1.0, 2.0) for a, b in zip(d, dp)]


def test_enhanced_never_rejects_what_legacy_accepts():
    cfg = CellConfig(r_cell=3000.0)
    d, dp = np.meshgrid(np.linspace(10, 3000, 300), np.linspace(-50, 50, 301))
    for eps in (0.0, 1.0):
        leg = threshold_decisions(d, dp, ThresholdParams(K, eps, eps, LEGACY, cfg))
        enh = threshold_decisions(d, dp, ThresholdParams(K, eps, eps, ENHANCED, cfg))
        assert not np.any(leg & ~enh)


def test_valid_region_is_one_interval(cell):
    dp = np.linspace(-60, 60, 2001)
    for mode in (LEGACY, ENHANCED):
        params = ThresholdParams(K, mode=mode, cfg=cell)
        for d in (50.0, 700.0, 703.0, 1000.0, 1450.0):
            ok = threshold_decisions(np.full_like(dp, d), dp, params).astype(int)
            assert np.count_nonzero(np.diff(ok)) <= 2
            assert ok.any()


def test_output_contract(cell, rng):
    params = ThresholdParams.with_default_margins(K, ENHANCED, cell)
    for _ in range(200):
        tau = int(rng.integers(0, 5))
        out = validate_threshold(RsrpObservation(0.0, 0.0, float(rng.normal(0, 10))), tau, params)
        assert out.ta_out in (tau, INVALID_TA)
        assert (out.ta_out == INVALID_TA) == out.proactive_fallback


def test_out_of_cell_ta_warns_and_clamps(cell):
    with pytest.warns(RuntimeWarning):
        out = validate_threshold(_obs(1500.0, 1500.0), 10, ThresholdParams(K, cfg=cell))
    assert out.valid


def test_negative_tau_rejected(cell):
    with pytest.raises(ValueError):
        validate_threshold(_obs(100.0, 100.0), -1, ThresholdParams(K, cfg=cell))


# --- ML validation ------------------------------------------------------------


def test_always_positive_model_accepts_everything(cell):
    model = ValidatorModel("adaboost", StumpEnsemble(bias=1.0, n_features=2), 3.9, cell)
    for tau, dp in [(0, 50.0), (4, -30.0)]:
        out = validate_ml(RsrpObservation(0, 0, dp), tau, model, 3.9, 3.6)
        assert out.valid and out.ta_out == tau


def test_missing_model_raises():
    with pytest.raises(ModelEvaluationError):
        validate_ml(RsrpObservation(0, 0, 1.0), 1, None, 3.9, 3.9)


@pytest.fixture(scope="module")
def noiseless_model():
    cell = CellConfig()
    pl = PRESETS["UMa"].with_overrides(shadow_sigma_db=0.0)
    train = generate_dataset(DatasetSpec(20000, cell, pl, meas=NOISELESS_MEAS, seed=1))
    X = np.column_stack([train.d_prev, train.delta_p])
    # stumps approximate the curved valid band, so convergence takes many rounds
    clf, _ = train_adaboost(X, np.where(train.label_valid, 1, -1), TrainOptions(adaboost_rounds=3000))
    return ValidatorModel("adaboost", clf, pl.k, cell)


def test_noiseless_trained_model_matches_labels(noiseless_model):
    pl = PRESETS["UMa"].with_overrides(shadow_sigma_db=0.0)
    test = generate_dataset(DatasetSpec(10000, CellConfig(), pl, meas=NOISELESS_MEAS, seed=2))
    X = np.column_stack([test.d_prev, test.delta_p])
    assert np.mean(noiseless_model.decide(X) == test.label_valid) >= 0.99


def test_scaled_cross_model_decisions_identical(noiseless_model):
    cell = CellConfig()
    same = generate_dataset(DatasetSpec(800, cell, PRESETS["UMa"].with_overrides(shadow_sigma_db=0.0),
                                        meas=NOISELESS_MEAS, seed=3))
    other = generate_dataset(DatasetSpec(800, cell, PRESETS["RMa"].with_overrides(shadow_sigma_db=0.0),
                                         meas=NOISELESS_MEAS, seed=3))
    assert np.array_equal(same.d_prev, other.d_prev) and np.array_equal(same.d_curr, other.d_curr)
    a = [validate_ml(r.obs, r.sample.tau_q_prev, noiseless_model, 3.9, 3.9).valid for r in same]
    b = [validate_ml(r.obs, r.sample.tau_q_prev, noiseless_model, 3.9, 3.0).valid for r in other]
    assert a == b


def test_model_files_round_trip(tmp_path, noiseless_model, cell):
    p = tmp_path / "v.json"
    p.write_text(json.dumps(noiseless_model.to_json()))
    back = load_validator(p)
    X = np.random.default_rng(0).uniform([0, -30], [1500, 30], (300, 2))
    assert np.array_equal(back.decide(X), noiseless_model.decide(X))

    thr = ThresholdParams.with_default_margins(3.9, LEGACY, cell)
    p.write_text(json.dumps(thr.to_json()))
    assert load_validator(p) == thr

    p.write_text(json.dumps({"model_type": "predictor"}))
    with pytest.raises(DataError):
        load_validator(p)


def test_threshold_estimator(cell):
    est = ThresholdValidator(k=K, mode=LEGACY)
    assert clone(est).get_params()["mode"] == LEGACY
    est.fit()
    X = np.array([[1000.0, 0.0], [1000.0, 9.6]])
    assert est.predict(X).tolist() == [1, -1]
    with pytest.raises(ModelEvaluationError):
        est.predict(np.zeros((2, 3)))
