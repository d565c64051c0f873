"""``smartpur`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error (unreadable or
malformed inputs, missing model files, untrainable datasets), 4 any other
runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .datagen import TransitionDataset, generate_dataset
from .exceptions import ConfigError, DataError, TrainingError
from .metrics import table3_check
from .prediction import train_predictor

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("smartpur")


def _setup_logging():
    level = os.environ.get("SMARTPUR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _config(args, overrides=None):
    extra = dict(overrides or {})
    if getattr(args, "seed", None) is not None:
        extra["seed"] = args.seed
    if getattr(args, "history_len", None) is not None:
        extra.setdefault("datagen", {})["history_len"] = args.history_len
    return ex.load_config(args.config, extra)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------


def cmd_gen_dataset(args) -> int:
    cfg = _config(args)
    model = args.model or cfg["channel"]["train_model"]
    if model not in cfg["channel"]["models"]:
        raise ConfigError(f"model {model!r} is not defined under channel.models", "channel.models")
    n = cfg["datagen"]["n_samples"]
    spec = ex.dataset_spec(cfg, n, model, cfg["seed"], args.radius)
    ds = generate_dataset(spec, jobs=args.jobs)
    out = Path(args.out) if args.out else Path(args.out_dir or cfg["output"]["dir"]) / "dataset.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.to_csv(out)
    invalid = float(np.mean(~ds.label_valid)) if len(ds) else float("nan")
    print(f"wrote {len(ds)} rows to {out}")
    print(f"label balance: valid={len(ds) - int(np.sum(~ds.label_valid))} invalid={int(np.sum(~ds.label_valid))} "
          f"invalid_fraction={invalid:.4f}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    if (args.validator is None) == (args.predictor is None):
        raise ConfigError("train needs exactly one of --validator or --predictor", "train")
    try:
        ds = TransitionDataset.from_csv(args.dataset)
    except FileNotFoundError:
        raise DataError(f"dataset not found: {args.dataset}") from None
    if len(ds) == 0:
        raise DataError("dataset is empty")
    cell = ex.cell_config(cfg, args.radius)
    k_train = ex.path_loss_model(cfg, cfg["channel"]["train_model"]).k
    opts = ex.train_options(cfg)
    out = Path(args.model_out) if args.model_out else Path(args.out_dir or cfg["output"]["dir"]) / "model.json"

    if args.validator in ("legacy", "enhanced"):
        model = ex.threshold_params(args.validator, k_train, cell, cfg["sweep"]["threshold_margin_fraction"])
        print(f"threshold validator ({args.validator}): eps_pos={model.eps_pos:.4f} dB eps_neg={model.eps_neg:.4f} dB")
    elif args.validator is not None:
        model, diag = ex.train_validator(args.validator, ds, cell, k_train, opts)
        for key, value in diag.items():
            print(f"{key}: {value}")
        print(f"training accuracy: {100.0 * diag['training_accuracy']:.2f}%")
    else:
        if ds.history_len != cfg["datagen"]["history_len"]:
            raise DataError(f"dataset history length {ds.history_len} differs from the configured "
                            f"{cfg['datagen']['history_len']}")
        model, mse = train_predictor(ds.predictor_features(k_train, k_train), ds.d_curr, k_train,
                                     ds.history_len, cell, opts)
        print(f"rounds: {len(mse) - 1}")
        print(f"mse: initial={mse[0]:.3f} final={mse[-1]:.3f} non_increasing={all(b <= a for a, b in zip(mse, mse[1:]))}")
    _write(out, json.dumps(model.to_json(), indent=2, sort_keys=True) + "\n")
    print(f"model written to {out}")
    return EXIT_OK


def _method_overrides(args) -> dict:
    """``--validator``/``--predictor`` take method names (comma separated) or a model file path."""
    sweep, models_in = {}, {}
    for flag, names, key in ((args.validator, ex.VALIDATORS, "validators"), (args.predictor, ex.PREDICTORS, "predictors")):
        if flag is None:
            continue
        parts = [p for p in flag.split(",") if p]
        if parts and all(p in names for p in parts):
            sweep[key] = parts
        else:
            if not Path(flag).exists():
                raise DataError(f"model file not found: {flag}")
            models_in[key[:-1]] = flag
            sweep[key] = []
    out = {}
    if sweep:
        out["sweep"] = sweep
    if models_in:
        out["models_in"] = models_in
    return out


def _print_table3(rows) -> bool:
    print("radius_km  q   p   listed  computed  stap_listed  stap_computed  result")
    for r in rows:
        print(f"{r.radius_km:9.1f} {r.rate_q:3.0f} {r.p_exceed:3.0f} {r.listed_stav:7.1f} {r.computed_stav:9.2f} "
              f"{r.listed_stap:12.1f} {r.computed_stap:14.2f}  {'PASS' if r.passed else 'FAIL'}")
    return all(r.passed for r in rows)


def _print_summary(report):
    for cell in report["cells"]:
        print(f"r_cell={cell['radius_m']:.0f} m  train={cell['train_model']} test={cell['test_model']}  "
              f"p_exceed={cell['p_exceed_measured']:.4f}")
        for name, e in cell["validators"].items():
            c = e["confusion"]
            print(f"  {name:9s} p_TN={_pct(c['p_tn'])} p_TP={_pct(c['p_tp'])} "
                  f"p_f={_pct(e['fallback_closed_form']['p_f_total'])} mc={_pct(e['fallback_monte_carlo']['p_f_total'])}")
        for name, e in cell["predictors"].items():
            print(f"  {name:9s} eta={_pct(e['eta'])} p_f={_pct(e['fallback_closed_form']['p_f_total'])}")


def _pct(v):
    return "   n/a" if v is None else f"{100.0 * v:6.2f}%"


def cmd_evaluate(args, default_config=None) -> int:
    if args.config is None and default_config is not None:
        args.config = default_config
    overrides = _method_overrides(args)
    if getattr(args, "radii", None):
        overrides.setdefault("sweep", {})["radii_m"] = args.radii
    cfg = _config(args, overrides)
    report = ex.run_experiment(cfg, jobs=args.jobs)
    out_dir = Path(args.out_dir or cfg["output"]["dir"])
    written = ex.write_reports(report, out_dir)
    _print_summary(report)
    status = EXIT_OK
    if "table3_check" in report:
        if not _print_table3(table3_check()):
            status = EXIT_RUNTIME
    for p in written:
        print(f"report written to {p}")
    return status


def cmd_sweep(args) -> int:
    return cmd_evaluate(args, default_config="radius-sweep")


def cmd_table3(args) -> int:
    rows = table3_check()
    ok = _print_table3(rows)
    if args.out_dir:
        _write(Path(args.out_dir) / "table3_check.json",
               json.dumps([r.__dict__ for r in rows], indent=2, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_RUNTIME


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smartpur", description="TA validation and prediction experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file, or a bundled name such as 'table3-check'")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    common.add_argument("--out-dir", help="output directory (default: output.dir of the config)")
    common.add_argument("--history-len", type=int, help="predictor history length K")

    g = sub.add_parser("gen-dataset", parents=[common], help="generate a labeled transition dataset CSV")
    g.add_argument("--out", help="output CSV path (default: <out-dir>/dataset.csv)")
    g.add_argument("--model", help="channel model name (default: channel.train_model)")
    g.add_argument("--radius", type=float, help="cell radius in meters (default: cell.r_cell_m)")
    g.set_defaults(func=cmd_gen_dataset)

    t = sub.add_parser("train", parents=[common], help="train a validator or predictor")
    t.add_argument("--dataset", required=True, help="dataset CSV from gen-dataset")
    t.add_argument("--model-out", help="model JSON path (default: <out-dir>/model.json)")
    t.add_argument("--validator", choices=ex.VALIDATORS)
    t.add_argument("--predictor", choices=("l2boost",))
    t.add_argument("--radius", type=float, help="cell radius in meters (default: cell.r_cell_m)")
    t.set_defaults(func=cmd_train)

    for name, func, text in (("evaluate", cmd_evaluate, "run the evaluation campaign"),
                             ("sweep", cmd_sweep, "evaluate over several radii (default config: radius-sweep)")):
        e = sub.add_parser(name, parents=[common], help=text)
        e.add_argument("--validator", help="validator methods (comma separated) or a validator model file")
        e.add_argument("--predictor", help="predictor methods (comma separated) or a predictor model file")
        if name == "sweep":
            e.add_argument("--radii", type=float, nargs="+", help="cell radii in meters")
        e.set_defaults(func=func)

    c = sub.add_parser("table3-check", parents=[common], help="recompute the published fallback table")
    c.set_defaults(func=cmd_table3)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TrainingError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the runtime exit code
        log.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
