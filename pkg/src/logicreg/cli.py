"""Command-line interface: train, search, compile, predict.

Option precedence is flags > config file > defaults. The config file is
flat JSON holding any long-flag equivalents (underscored) plus an
optional "search_space" object of per-hyperparameter grids; unknown keys
are rejected before any compute. Usage problems exit 2, runtime failures
print a one-line diagnostic and exit 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import fields

from .circuit import (
    count_atoms,
    discretize,
    export_dot,
    extract_rules,
    predict_original_units,
    simplify,
)
from .costs import CostTable, count_ops
from .data import (
    CATEGORICAL,
    TARGET,
    apply_schema,
    load_csv,
    split,
)
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    LogicRegError,
    ModelFormatError,
)
from .model_io import load_model, save_model
from .network import STEConfig
from .search import SearchSpace, final_fit, run_search
from .training import TrainConfig, evaluate, train

TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))
RUN_KEYS = ("data", "target", "categorical", "test_fraction", "budget",
            "out", "search_space", "no_simplify", "model")


class UsageError(ConfigError):
    """Missing or malformed command-line usage; exits 2 like argparse."""


def _read_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    allowed = set(TRAIN_KEYS) | set(RUN_KEYS)
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _merge_options(args: argparse.Namespace) -> dict:
    """defaults < config file < explicitly passed flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(_read_config_file(args.config))
    flag_map = {
        "data": "data", "target": "target", "categorical": "categorical",
        "test_fraction": "test_fraction", "seed": "seed", "budget": "budget",
        "out": "out", "epochs": "epochs", "batch_size": "batch_size",
        "lr": "learning_rate", "tau": "tau_init", "gamma": "gamma",
        "tau_min": "tau_min", "layers": "n_logic_layers",
        "width": "layer_width",
        "thresholds_per_feature": "thresholds_per_feature",
        "subspace": "subspace_size", "no_concat": "no_concat",
        "no_ste": "no_ste", "no_tau_schedule": "no_tau_schedule",
        "two_phase": "two_phase", "no_simplify": "no_simplify",
        "model": "model",
    }
    for attr, key in flag_map.items():
        val = getattr(args, attr, None)
        if val is not None:
            merged[key] = val
    return merged


def _build_train_config(merged: dict) -> TrainConfig:
    kw = {k: merged[k] for k in TRAIN_KEYS if k in merged}
    if merged.get("no_concat"):
        kw["concat_inputs"] = False
    if merged.get("no_ste"):
        kw["ste"] = STEConfig.all_off()
    if merged.get("no_tau_schedule"):
        kw["gamma"] = 1.0   # temperature never moves off tau_init
        kw["tau_min"] = min(float(kw.get("tau_min", 0.05)),
                            float(kw.get("tau_init", 1.0)))
    if isinstance(kw.get("ste"), dict):
        kw["ste"] = STEConfig.from_json(kw["ste"])
    return TrainConfig(**kw)


def _categorical_list(merged: dict):
    raw = merged.get("categorical")
    if raw is None:
        return []
    if isinstance(raw, str):
        raw = [raw]
    out = []
    for item in raw:
        out.extend(p.strip() for p in str(item).split(",") if p.strip())
    return out


def _load_split(merged: dict):
    if not merged.get("data"):
        raise UsageError("--data is required")
    if not merged.get("target"):
        raise UsageError("--target is required")
    hints = {merged["target"]: TARGET}
    for col in _categorical_list(merged):
        hints[col] = CATEGORICAL
    raw = load_csv(merged["data"], hints)
    return split(raw, float(merged.get("test_fraction", 0.2)),
                 int(merged.get("seed", 0)))


def _ensure_out(merged: dict) -> str:
    out = merged.get("out", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path: str, obj: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _compile_artifacts(params, schema, feature_names, feature_origin,
                       out_dir: str, do_simplify: bool = True):
    tau_final = params.final_tau if params.final_tau is not None else 0.05
    circ = discretize(params, tau_final, schema=schema,
                      feature_names=feature_names,
                      feature_origin=feature_origin)
    if do_simplify:
        circ = simplify(circ)
    save_model(circ, os.path.join(out_dir, "circuit.json"))
    with open(os.path.join(out_dir, "rules.txt"), "w", encoding="utf-8") as fh:
        fh.write(extract_rules(circ).to_text())
    with open(os.path.join(out_dir, "circuit.dot"), "w", encoding="utf-8") as fh:
        fh.write(export_dot(circ))
    report = count_ops(circ, CostTable())
    _write_json(os.path.join(out_dir, "cost.json"), report.to_json())
    return circ, report


def _metrics_json(metrics, extra=None) -> dict:
    out = {"r2": metrics.r2, "rmse": metrics.rmse, "mae": metrics.mae}
    if extra:
        out.update(extra)
    return out


def cmd_train(args) -> int:
    merged = _merge_options(args)
    config = _build_train_config(merged)
    train_ds, test_ds = _load_split(merged)
    out_dir = _ensure_out(merged)
    params, report = train(train_ds, config, verbose=args.verbose)
    save_model(
        params, os.path.join(out_dir, "model.json"),
        schema=train_ds.schema, feature_names=train_ds.feature_names,
        feature_origin=train_ds.feature_origin,
        train_config=config.to_json(),
    )
    circ = discretize(params, params.final_tau, schema=train_ds.schema,
                      feature_names=train_ds.feature_names,
                      feature_origin=train_ds.feature_origin)
    metrics = evaluate(circ, test_ds)
    _write_json(os.path.join(out_dir, "metrics.json"), _metrics_json(
        metrics,
        {"final_train_mse": report.train_mse[-1],
         "final_tau": report.tau_trajectory[-1],
         "n_train": train_ds.n_rows, "n_test": test_ds.n_rows},
    ))
    print(f"test r2 {metrics.r2:.4f}  rmse {metrics.rmse:.4g}  "
          f"mae {metrics.mae:.4g}")
    return 0


def cmd_search(args) -> int:
    merged = _merge_options(args)
    base = _build_train_config(merged)
    space = SearchSpace.from_json(merged.get("search_space") or {})
    budget = int(merged.get("budget", 32))
    seed = int(merged.get("seed", 0))
    train_ds, test_ds = _load_split(merged)
    out_dir = _ensure_out(merged)

    trials_path = os.path.join(out_dir, "trials.jsonl")
    with open(trials_path, "w", encoding="utf-8") as fh:
        def log_trial(trial):
            fh.write(json.dumps(trial.to_json(), sort_keys=True) + "\n")
            fh.flush()
            if args.verbose:
                print(f"trial {trial.index}: cv mse {trial.mean_cv_mse:.5f}")

        best, _ = run_search(train_ds, space, budget, seed,
                             base_config=base, on_trial=log_trial)

    params = final_fit(train_ds, best.config, seed)
    save_model(
        params, os.path.join(out_dir, "model.json"),
        schema=train_ds.schema, feature_names=train_ds.feature_names,
        feature_origin=train_ds.feature_origin,
        train_config=best.config.to_json(),
    )
    circ = discretize(params, params.final_tau, schema=train_ds.schema,
                      feature_names=train_ds.feature_names,
                      feature_origin=train_ds.feature_origin)
    metrics = evaluate(circ, test_ds)
    _write_json(os.path.join(out_dir, "metrics.json"), _metrics_json(
        metrics,
        {"best_trial_index": best.index,
         "best_cv_mse": best.mean_cv_mse,
         "budget": budget,
         "n_train": train_ds.n_rows, "n_test": test_ds.n_rows},
    ))
    print(f"best trial {best.index}  cv mse {best.mean_cv_mse:.5f}  "
          f"test r2 {metrics.r2:.4f}")
    return 0


def cmd_compile(args) -> int:
    merged = _merge_options(args)
    model_path = merged.get("model")
    if not model_path:
        raise UsageError("--model is required")
    loaded = load_model(model_path)
    if loaded.kind != "model":
        raise ModelFormatError(
            f"{model_path} holds a compiled circuit; compile wants trained "
            "parameters"
        )
    out_dir = _ensure_out(merged)
    circ, report = _compile_artifacts(
        loaded.params, loaded.schema, loaded.feature_names,
        loaded.feature_origin, out_dir,
        do_simplify=not merged.get("no_simplify", False),
    )
    print(f"circuit: {count_atoms(circ)} thresholds, "
          f"{circ.n_gate_nodes()} gates, {len(circ.links)} links, "
          f"total {report.total_ops} OPs")
    return 0


def cmd_predict(args) -> int:
    merged = _merge_options(args)
    model_path = merged.get("model")
    if not model_path:
        raise UsageError("--model is required")
    if not merged.get("data"):
        raise UsageError("--data is required")
    loaded = load_model(model_path)
    if loaded.schema is None:
        raise ModelFormatError(
            f"{model_path} carries no schema; cannot transform raw inputs")
    raw = load_csv(merged["data"])
    features, _ = apply_schema(raw, loaded.schema, require_target=False)
    if loaded.kind == "circuit":
        preds = predict_original_units(features, loaded.circuit)
    else:
        params = loaded.params
        tau = params.final_tau if params.final_tau is not None else 0.05
        circ = discretize(params, tau, schema=loaded.schema,
                          feature_names=loaded.feature_names,
                          feature_origin=loaded.feature_origin)
        preds = predict_original_units(features, circ)
    out_dir = _ensure_out(merged)
    out_path = os.path.join(out_dir, "predictions.csv")
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prediction"])
        for v in preds:
            writer.writerow([repr(float(v))])
    print(f"wrote {len(preds)} predictions to {out_path}")
    return 0


def _add_common_flags(p: argparse.ArgumentParser, with_train_flags=True):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--data", help="input CSV path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--verbose", action="store_true")
    if with_train_flags:
        p.add_argument("--target", default=None, help="target column name")
        p.add_argument("--categorical", action="append", default=None,
                       help="categorical column (repeat or comma-separate)")
        p.add_argument("--test-fraction", dest="test_fraction", type=float,
                       default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int,
                       default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--tau", type=float, default=None,
                       help="initial temperature")
        p.add_argument("--gamma", type=float, default=None,
                       help="temperature decay factor")
        p.add_argument("--tau-min", dest="tau_min", type=float, default=None)
        p.add_argument("--layers", type=int, default=None,
                       help="number of logic layers")
        p.add_argument("--width", type=int, default=None,
                       help="neurons per logic layer")
        p.add_argument("--thresholds-per-feature", dest="thresholds_per_feature",
                       type=int, default=None)
        p.add_argument("--subspace", type=int, default=None,
                       help="candidate subset size for gates and links")
        p.add_argument("--no-concat", dest="no_concat", action="store_const",
                       const=True, default=None,
                       help="do not append threshold bits to deep layer inputs")
        p.add_argument("--no-ste", dest="no_ste", action="store_const",
                       const=True, default=None,
                       help="train on fully soft forwards")
        p.add_argument("--no-tau-schedule", dest="no_tau_schedule",
                       action="store_const", const=True, default=None,
                       help="hold temperature at its initial value")
        p.add_argument("--two-phase", dest="two_phase", action="store_const",
                       const=True, default=None,
                       help="train gate-side then link-side parameters")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logicreg",
        description="Train, tune, compile, and run logic-circuit regressors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit one model and report test metrics")
    _add_common_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_search = sub.add_parser("search", help="random-search hyperparameters with CV")
    _add_common_flags(p_search)
    p_search.add_argument("--budget", type=int, default=None,
                          help="number of trials (default 32)")
    p_search.set_defaults(func=cmd_search)

    p_compile = sub.add_parser("compile",
                               help="discretize a model into a logic circuit")
    _add_common_flags(p_compile, with_train_flags=False)
    p_compile.add_argument("--model", default=None, help="trained model.json")
    p_compile.add_argument("--no-simplify", dest="no_simplify",
                           action="store_const", const=True, default=None,
                           help="skip simplification passes")
    p_compile.set_defaults(func=cmd_compile)

    p_predict = sub.add_parser("predict", help="run a model or circuit on a CSV")
    _add_common_flags(p_predict, with_train_flags=False)
    p_predict.add_argument("--model", default=None,
                           help="model.json or circuit.json")
    p_predict.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ConfigError, ModelFormatError, DivergenceError,
            LogicRegError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
