"""Experiment configuration, the evaluation runner and report writers.

A configuration is a JSON document overlaid on ``configs/defaults.json``.
Every radius in ``sweep.radii_m`` is an independent experiment cell with its
own train, test and Monte Carlo trial datasets, each drawn from a seed
derived from the master seed, the radius index and the dataset role.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .channel import MeasurementConfig, PathLossModel, RadioConfig
from .datagen import DatasetSpec, derive_seed, generate_dataset, movement_exceedance_rate
from .exceptions import ConfigError, DataError
from .geometry import CellConfig
from .learners import TrainOptions, train_adaboost, train_linear_svm
from .metrics import confusion_metrics, fallback_stap, fallback_stav_closed_form, table3_check
from .prediction import PredictorModel, equation_distance, equation_distance_from, train_predictor
from .validation import ThresholdParams, ValidatorModel, load_validator, threshold_decisions

log = logging.getLogger(__name__)

VALIDATORS = ("legacy", "enhanced", "svm", "adaboost")
PREDICTORS = ("equation", "l2boost")
BUNDLED = ("defaults", "table3-check", "noiseless-sanity", "radius-sweep", "cross-model")

# dataset roles in seed derivation
_TRAIN, _TEST, _TRIALS = 1, 2, 3

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_count = {"type": "integer", "minimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


_MODEL = _obj({"k": _pos, "beta_db": _num, "shadow_sigma_db": _nonneg})
_TEST_RULE = _obj({"max_radius_m": {"type": ["number", "null"]}, "model": {"type": "string"}}, ["model"])

SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "cell": _obj({"r_cell_m": _pos, "delta_d_per_m": _pos, "tau_step_s": _pos, "scs_hz": _pos}),
    "channel": _obj({
        "train_model": {"type": "string"},
        "test_model": {"oneOf": [{"type": "string"}, {"type": "array", "items": _TEST_RULE, "minItems": 1}]},
        "models": {"type": "object", "additionalProperties": _MODEL},
        "shadow_decorrelation_m": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "radio": _obj({"tx_power_dbm": _num, "carrier_hz": _pos, "bandwidth_hz": _pos,
                       "noise_figure_db": _num, "thermal_noise_dbm_hz": _num}),
        "measurement": _obj({"n_crs_subframes": _posint, "subframe_spacing_ms": _nonneg,
                             "base_noise_sigma_db": _nonneg, "doppler_coeff_db_per_kmh": _nonneg}),
    }),
    "datagen": _obj({"n_samples": _count, "n_train": _posint, "n_test": _posint, "n_trials": _posint,
                     "velocity_max_kmh": _nonneg, "history_len": _posint}),
    "train": _obj({"fp_cost_ratio": _pos, "adaboost_rounds": _posint, "l2boost_rounds": _posint,
                   "shrinkage": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}, "svm_c": _pos,
                   "svm_epochs": _posint, "svm_degree": _posint, "svm_lr": _pos}),
    "sweep": _obj({
        "radii_m": {"type": "array", "items": _pos},
        "validators": {"type": "array", "items": {"enum": list(VALIDATORS)}, "uniqueItems": True},
        "predictors": {"type": "array", "items": {"enum": list(PREDICTORS)}, "uniqueItems": True},
        "p_exceed_overrides": {"type": "array", "items": _prob},
        "threshold_margin_fraction": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "oracle_d_prev": {"type": "boolean"},
    }),
    "models_in": _obj({"validator": {"type": ["string", "null"]}, "predictor": {"type": ["string", "null"]}}),
    "report": _obj({"table3_check": {"type": "boolean"}}),
    "output": _obj({"dir": {"type": "string"}, "json": {"type": "boolean"}, "csv": {"type": "boolean"}}),
})


# ---------------------------------------------------------------------------
# configuration


def _read_bundled(name: str) -> dict:
    text = resources.files("smartpur").joinpath("configs", f"{name}.json").read_text()
    return json.loads(text)


def default_config() -> dict:
    return _read_bundled("defaults")


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(doc: dict) -> None:
    """Raise :class:`ConfigError` naming the first offending key path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            key = extra[0] if path == "<root>" else f"{path}.{extra[0]}"
            raise ConfigError(f"unknown key(s) {extra}", key)
        raise ConfigError(err.message, path)


def load_config(source=None, overrides: dict | None = None) -> dict:
    """Resolve a config file path, a bundled config name or a dict into a full config."""
    if source is None:
        user = {}
    elif isinstance(source, dict):
        user = source
    elif str(source) in BUNDLED and not Path(str(source)).exists():
        user = _read_bundled(str(source))
    else:
        try:
            with open(source) as fh:
                user = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config ({exc.strerror})", str(source)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON ({exc})", str(source)) from None
    if not isinstance(user, dict):
        raise ConfigError("top level must be a JSON object")
    validate_config(user)
    cfg = _deep_merge(default_config(), user)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    validate_config(cfg)
    _check_semantics(cfg)
    return cfg


def _check_semantics(cfg: dict) -> None:
    models = cfg["channel"]["models"]
    for name in [cfg["channel"]["train_model"]] + [r["model"] for r in _test_rules(cfg)]:
        if name not in models:
            raise ConfigError(f"model {name!r} is not defined under channel.models", "channel.models")
        if "k" not in models[name]:
            raise ConfigError("path-loss exponent k is required", f"channel.models.{name}.k")
    try:
        cell_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc), "cell") from None
    for r in cfg["sweep"]["radii_m"]:
        if not r >= cfg["cell"]["delta_d_per_m"]:
            raise ConfigError(f"radius {r} is below the permissible movement", "sweep.radii_m")


def _test_rules(cfg: dict) -> list:
    tm = cfg["channel"]["test_model"]
    return [{"max_radius_m": None, "model": tm}] if isinstance(tm, str) else tm


def cell_config(cfg: dict, r_cell: float | None = None) -> CellConfig:
    cell = CellConfig.from_json(cfg["cell"])
    return cell if r_cell is None else cell.replace(r_cell=float(r_cell))


def path_loss_model(cfg: dict, name: str) -> PathLossModel:
    m = cfg["channel"]["models"][name]
    return PathLossModel(name, float(m["k"]), float(m.get("beta_db", 0.0)), float(m.get("shadow_sigma_db", 0.0)),
                         cfg["channel"]["shadow_decorrelation_m"])


def test_model_name(cfg: dict, r_cell: float) -> str:
    for rule in _test_rules(cfg):
        if rule.get("max_radius_m") is None or r_cell <= rule["max_radius_m"]:
            return rule["model"]
    raise ConfigError(f"no test_model rule covers radius {r_cell}", "channel.test_model")


def radio_config(cfg: dict) -> RadioConfig:
    return RadioConfig(**cfg["channel"]["radio"])


def measurement_config(cfg: dict) -> MeasurementConfig:
    return MeasurementConfig(**cfg["channel"]["measurement"])


def train_options(cfg: dict) -> TrainOptions:
    return TrainOptions(seed=cfg["seed"], **cfg["train"])


def dataset_spec(cfg: dict, n: int, model_name: str, seed: int, r_cell: float | None = None) -> DatasetSpec:
    return DatasetSpec(
        n_samples=n, cfg=cell_config(cfg, r_cell), pl=path_loss_model(cfg, model_name), radio=radio_config(cfg),
        meas=measurement_config(cfg), velocity_max_kmh=cfg["datagen"]["velocity_max_kmh"], seed=seed,
        history_len=cfg["datagen"]["history_len"],
    )


# ---------------------------------------------------------------------------
# evaluation


def _labels_pm(ds) -> np.ndarray:
    return np.where(ds.label_valid, 1.0, -1.0)


def train_validator(method: str, ds, cell: CellConfig, k_train: float, opts: TrainOptions):
    """Train an ML validator on a dataset; returns ``(ValidatorModel, diagnostics)``."""
    X = ds.validator_features(cell, k_train, k_train)
    y = _labels_pm(ds)
    if method == "svm":
        clf, hist = train_linear_svm(X, y, opts)
        diag = {"epochs": len(hist) - 1, "final_objective": hist[-1]}
    elif method == "adaboost":
        clf, errors = train_adaboost(X, y, opts)
        diag = {"rounds": len(errors), "final_round_error": errors[-1] if errors else None}
    else:
        raise ValueError(f"{method!r} is not a trainable validator")
    model = ValidatorModel(method, clf, k_train, cell)
    diag["training_accuracy"] = float(np.mean(model.decide(X) == ds.label_valid))
    return model, diag


def threshold_params(mode: str, k: float, cell: CellConfig, fraction: float) -> ThresholdParams:
    if fraction == 0:
        return ThresholdParams(k, 0.0, 0.0, mode, cell)
    try:
        return ThresholdParams.with_default_margins(k, mode, cell, fraction)
    except ValueError:
        # margins undefined for this cell size
        return ThresholdParams(k, 0.0, 0.0, mode, cell)


def _validator_decisions(validator, ds, cell: CellConfig, k_system: float, oracle: bool) -> np.ndarray:
    if isinstance(validator, ThresholdParams):
        d_prev = ds.d_prev if oracle else ds.validator_features(cell, 1.0, 1.0)[:, 0]
        return threshold_decisions(d_prev, ds.delta_p, validator)
    return validator.decide(ds.validator_features(cell, validator.k_train, k_system))


def _stav_entry(validator, test_ds, trials_ds, cell, k_system, oracle, overrides) -> dict:
    counts = confusion_metrics(_validator_decisions(validator, test_ds, cell, k_system, oracle), test_ds.label_valid)
    p_exceed = movement_exceedance_rate(test_ds)
    closed = fallback_stav_closed_form(p_exceed, counts.p_tn, counts.p_fn)

    trial_dec = _validator_decisions(validator, trials_ds, cell, k_system, oracle)
    n = len(trials_ds)
    mc_pro = float(np.sum(~trial_dec)) / n
    mc_re = float(np.sum(trial_dec & ~trials_ds.label_valid)) / n
    mc_exceed = movement_exceedance_rate(trials_ds)
    tol = 2.0 / math.sqrt(n)
    return {
        "kind": "sTAV",
        "confusion": counts.to_json(),
        "fallback_closed_form": closed.to_json(),
        "fallback_monte_carlo": {"p_exceed": mc_exceed, "p_f_pro": mc_pro, "p_f_re": mc_re,
                                 "p_f_total": mc_pro + mc_re, "n_trials": n},
        "mc_agreement": {"abs_diff": abs(mc_pro + mc_re - closed.p_f_total), "tolerance": tol,
                         "agree": abs(mc_pro + mc_re - closed.p_f_total) <= tol},
        "fallback_overrides": [fallback_stav_closed_form(p, counts.p_tn, counts.p_fn).to_json() for p in overrides],
    }


def _stap_entry(d_hat_test, d_hat_trials, test_ds, trials_ds, cell, overrides) -> dict:
    err = np.abs(d_hat_test - test_ds.d_curr)
    eta = _eta(d_hat_test, test_ds.d_curr, cell)
    eta_mc = _eta(d_hat_trials, trials_ds.d_curr, cell)
    rep = fallback_stap(eta, movement_exceedance_rate(test_ds))
    return {
        "kind": "sTAP",
        "eta": eta,
        "mean_abs_error_m": float(err.mean()),
        "fallback_closed_form": rep.to_json(),
        "fallback_monte_carlo": {"p_f_pro": 0.0, "p_f_re": 1.0 - eta_mc, "p_f_total": 1.0 - eta_mc,
                                 "n_trials": len(trials_ds)},
        "fallback_overrides": [fallback_stap(eta, p).to_json() for p in overrides],
    }


def _eta(d_hat, d_true, cell: CellConfig) -> float:
    # same rule as prediction_accuracy, vectorized for large trial sets
    return float(np.mean(np.abs(d_true - d_hat) <= cell.delta_d_per))


def run_cell(cfg: dict, radius_index: int, radius: float) -> dict:
    """Evaluate every configured method for one cell radius."""
    seed = cfg["seed"]
    cell = cell_config(cfg, radius)
    train_name = cfg["channel"]["train_model"]
    test_name = test_model_name(cfg, radius)
    k_train = path_loss_model(cfg, train_name).k
    k_system = path_loss_model(cfg, test_name).k
    dg = cfg["datagen"]
    sweep = cfg["sweep"]
    opts = train_options(cfg)
    oracle = sweep["oracle_d_prev"]
    overrides = sweep["p_exceed_overrides"]

    log.info("radius %.0f m: train=%s test=%s", radius, train_name, test_name)
    train_ds = generate_dataset(dataset_spec(cfg, dg["n_train"], train_name, derive_seed(seed, radius_index, _TRAIN), radius))
    test_ds = generate_dataset(dataset_spec(cfg, dg["n_test"], test_name, derive_seed(seed, radius_index, _TEST), radius))
    trials_ds = generate_dataset(dataset_spec(cfg, dg["n_trials"], test_name, derive_seed(seed, radius_index, _TRIALS), radius))

    validators, predictors, diagnostics = {}, {}, {}
    for method in sweep["validators"]:
        if method in ("legacy", "enhanced"):
            v = threshold_params(method, k_system, cell, sweep["threshold_margin_fraction"])
            diagnostics[method] = {"eps_pos_db": v.eps_pos, "eps_neg_db": v.eps_neg, "k": v.k}
        else:
            v, diagnostics[method] = train_validator(method, train_ds, cell, k_train, opts)
        validators[method] = _stav_entry(v, test_ds, trials_ds, cell, k_system, oracle, overrides)

    file_validator = cfg["models_in"]["validator"]
    if file_validator:
        v = load_validator(file_validator)
        if isinstance(v, ThresholdParams):
            v = ThresholdParams(v.k, v.eps_pos, v.eps_neg, v.mode, cell)
        validators["file"] = _stav_entry(v, test_ds, trials_ds, cell, k_system, oracle, overrides)

    for method in sweep["predictors"]:
        if method == "equation":
            if oracle:
                d_test, _ = equation_distance_from(test_ds.d_prev, test_ds.delta_p, k_system, cell)
                d_trials, _ = equation_distance_from(trials_ds.d_prev, trials_ds.delta_p, k_system, cell)
            else:
                d_test, _ = equation_distance(test_ds.tau_q_prev, test_ds.delta_p, k_system, cell)
                d_trials, _ = equation_distance(trials_ds.tau_q_prev, trials_ds.delta_p, k_system, cell)
        else:
            model, mse = train_predictor(train_ds.predictor_features(k_train, k_train), train_ds.d_curr, k_train,
                                         dg["history_len"], cell, opts)
            diagnostics[method] = {"rounds": len(mse) - 1, "final_train_mse": mse[-1]}
            d_test = model.predict_distance(test_ds.predictor_features(k_train, k_system))
            d_trials = model.predict_distance(trials_ds.predictor_features(k_train, k_system))
        predictors[method] = _stap_entry(d_test, d_trials, test_ds, trials_ds, cell, overrides)

    file_predictor = cfg["models_in"]["predictor"]
    if file_predictor:
        model = PredictorModel.load(file_predictor)
        d_test = model.predict_distance(test_ds.predictor_features(model.k_train, k_system))
        d_trials = model.predict_distance(trials_ds.predictor_features(model.k_train, k_system))
        predictors["file"] = _stap_entry(d_test, d_trials, test_ds, trials_ds, cell, overrides)

    return {
        "radius_m": radius,
        "train_model": train_name,
        "test_model": test_name,
        "k_train": k_train,
        "k_system": k_system,
        "p_exceed_measured": movement_exceedance_rate(test_ds),
        "validators": validators,
        "predictors": predictors,
        "training": diagnostics,
    }


def _cell_job(args):
    return run_cell(*args)


def run_experiment(cfg: dict, jobs: int = 1) -> dict:
    """Run every radius of the sweep; the report does not depend on ``jobs``."""
    for key in ("validator", "predictor"):
        path = cfg["models_in"][key]
        if path and not Path(path).exists():
            raise DataError(f"model file not found: {path}")
    tasks = [(cfg, i, float(r)) for i, r in enumerate(cfg["sweep"]["radii_m"])]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_cell_job, tasks))
    else:
        cells = [run_cell(*t) for t in tasks]
    report = {"config": cfg, "cells": cells}
    if cfg["report"]["table3_check"]:
        report["table3_check"] = [row.__dict__ for row in table3_check()]
    return report


# ---------------------------------------------------------------------------
# reports

_p = {"type": ["number", "null"], "minimum": 0, "maximum": 1}
_fallback = {"type": "object", "required": ["p_f_pro", "p_f_re", "p_f_total"],
             "properties": {"p_exceed": {"type": "number"}, "p_f_pro": _p, "p_f_re": _p, "p_f_total": _p}}
_method = {
    "type": "object",
    "required": ["kind", "fallback_closed_form", "fallback_monte_carlo", "fallback_overrides"],
    "properties": {
        "kind": {"enum": ["sTAV", "sTAP"]},
        "eta": _p,
        "confusion": {"type": "object", "properties": {n: _p for n in ("p_tp", "p_tn", "p_fp", "p_fn")}},
        "fallback_closed_form": _fallback,
        "fallback_monte_carlo": _fallback,
        "fallback_overrides": {"type": "array", "items": _fallback},
    },
}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["config", "cells"],
    "properties": {
        "config": SCHEMA,
        "cells": {"type": "array", "items": {
            "type": "object",
            "required": ["radius_m", "train_model", "test_model", "p_exceed_measured", "validators", "predictors"],
            "properties": {
                "radius_m": _pos,
                "p_exceed_measured": _prob,
                "validators": {"type": "object", "additionalProperties": _method},
                "predictors": {"type": "object", "additionalProperties": _method},
            },
        }},
    },
}


def validate_report(report: dict) -> None:
    """Check a report against :data:`REPORT_SCHEMA` (raises ``jsonschema.ValidationError``)."""
    jsonschema.validate(json.loads(report_json(report)), REPORT_SCHEMA)


CSV_COLUMNS = [
    "radius_m", "train_model", "test_model", "method", "kind", "p_exceed_source", "p_exceed",
    "p_tn", "p_tp", "eta", "p_f_pro", "p_f_re", "p_f_total", "p_f_total_mc",
]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_rows(report: dict) -> list[dict]:
    """Flatten a report into one row per (radius, method, p_exceed source)."""
    rows = []
    for cell in report["cells"]:
        base = {"radius_m": cell["radius_m"], "train_model": cell["train_model"], "test_model": cell["test_model"]}
        for group in ("validators", "predictors"):
            for method, entry in cell[group].items():
                conf = entry.get("confusion", {})
                common = dict(base, method=method, kind=entry["kind"], p_tn=conf.get("p_tn"), p_tp=conf.get("p_tp"),
                              eta=entry.get("eta"))
                cf = entry["fallback_closed_form"]
                rows.append(dict(common, p_exceed_source="measured", p_exceed=cell["p_exceed_measured"],
                                 p_f_pro=cf["p_f_pro"], p_f_re=cf["p_f_re"], p_f_total=cf["p_f_total"],
                                 p_f_total_mc=entry["fallback_monte_carlo"]["p_f_total"]))
                for ov in entry["fallback_overrides"]:
                    rows.append(dict(common, p_exceed_source="override", p_exceed=ov["p_exceed"], p_f_pro=ov["p_f_pro"],
                                     p_f_re=ov["p_f_re"], p_f_total=ov["p_f_total"], p_f_total_mc=None))
    return rows


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in report_rows(report):
        writer.writerow({k: _fmt(row.get(k)) for k in CSV_COLUMNS})
    return buf.getvalue()


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_reports(report: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if report["config"]["output"]["json"]:
        p = out / "report.json"
        p.write_text(report_json(report))
        written.append(p)
    if report["config"]["output"]["csv"]:
        p = out / "report.csv"
        p.write_text(report_csv(report))
        written.append(p)
    return written
