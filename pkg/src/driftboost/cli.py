"""Command-line harness: train, predict, evaluate, benchmark, synth, diagnose.

Exit codes: 0 success, 1 runtime failure, 2 usage error. Runtime failures
print one machine-parseable JSON line to stderr. The default output
directory comes from $DRIFTBOOST_OUT_DIR (falling back to ./driftboost_out);
everything else is flags or a flat key=value config file, with precedence
command line > config file > built-in defaults.

Config file keys (benchmark): label, dataset, synth_n, synth_seed,
synth_noise_sd, test_fraction, seed, models (comma-separated kinds),
out_dir, and dotted per-model hyperparameters such as gbdt.num_rounds=200
or random_forest.num_trees=100.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (
    ALL_MODEL_KINDS,
    IMPLEMENTED_MODEL_KINDS,
    BenchmarkConfig,
    fit_model,
    run_benchmark,
    save_report,
)
from .boosting import Ensemble, GbdtParams, fit_gbdt, staged_predict
from .dataset import SplitSpec, canonical_schema, load_csv, synth_generate, train_test_split, write_csv
from .metrics import evaluate, rmse
from .serialize import load_model, model_kind, predict_any, save_model, schema_hash

DIAGNOSE_KINDS = ["prediction_error", "residuals", "learning_curve", "validation_curve"]
DEFAULT_VALIDATION_GRID = [2, 4, 8, 16, 31, 63]


class UsageError(Exception):
    """Bad invocation (unknown kind, malformed key=value, ...): exit code 2."""


def _default_out_dir() -> Path:
    return Path(os.environ.get("DRIFTBOOST_OUT_DIR", "driftboost_out"))


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def _parse_kv_item(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise UsageError(f"expected key=value, got {item!r}")
    key, value = item.split("=", 1)
    return key.strip(), value.strip()


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value lines; blank lines and '#' comments ignored."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


_PLAIN_CONFIG_KEYS = {
    "label", "dataset", "synth_n", "synth_seed", "synth_noise_sd",
    "test_fraction", "seed", "models", "out_dir",
}


def benchmark_config_from_kv(kv: dict[str, str]) -> BenchmarkConfig:
    plain: dict = {}
    model_params: dict[str, dict] = {}
    for key, raw in kv.items():
        if "." in key:
            kind, param = key.split(".", 1)
            if kind not in ALL_MODEL_KINDS:
                raise UsageError(f"unknown model kind in config key {key!r}")
            model_params.setdefault(kind, {})[param] = _coerce(raw)
        elif key in _PLAIN_CONFIG_KEYS:
            plain[key] = raw
        else:
            raise UsageError(f"unknown config key {key!r}")
    cfg = BenchmarkConfig(model_params=model_params)
    if "label" in plain:
        cfg.label = plain["label"]
    if "dataset" in plain:
        cfg.dataset_path = plain["dataset"]
    if "synth_n" in plain:
        cfg.synth_n = int(plain["synth_n"])
    if "synth_seed" in plain:
        cfg.synth_seed = int(plain["synth_seed"])
    if "synth_noise_sd" in plain:
        cfg.synth_noise_sd = float(plain["synth_noise_sd"])
    if "test_fraction" in plain:
        cfg.test_fraction = float(plain["test_fraction"])
    if "seed" in plain:
        cfg.seed = int(plain["seed"])
    if "models" in plain:
        models = [m.strip() for m in plain["models"].split(",") if m.strip()]
        unknown = [m for m in models if m not in ALL_MODEL_KINDS]
        if unknown:
            raise UsageError(f"unknown model kinds: {unknown}; choose from {ALL_MODEL_KINDS}")
        cfg.models = models
    if "out_dir" in plain:
        cfg.out_dir = Path(plain["out_dir"])
    return cfg


def _sidecar_path(model_path: str | Path) -> Path:
    p = Path(model_path)
    return p.with_name(p.stem + ".meta.json")


def _load_dataset_arg(args) -> "Dataset":
    if args.dataset is not None:
        return load_csv(args.dataset, canonical_schema())
    return synth_generate(args.synth_n, args.synth_seed, args.synth_noise_sd)


def _write_rows(path: str | None, header: list[str], rows) -> None:
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            fh.close()


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    ds = synth_generate(args.n, args.seed, args.noise_sd)
    write_csv(ds, args.out)
    print(f"wrote {ds.n} rows x {ds.d} features to {args.out}")
    return 0


def cmd_train(args) -> int:
    if args.model not in IMPLEMENTED_MODEL_KINDS:
        raise UsageError(
            f"unknown or unimplemented model kind {args.model!r}; "
            f"choose from {IMPLEMENTED_MODEL_KINDS}"
        )
    ds = _load_dataset_arg(args)
    overrides = dict(_parse_kv_item(item) for item in (args.param or []))
    overrides = {k: _coerce(v) for k, v in overrides.items()}
    t0 = time.perf_counter()
    model = fit_model(args.model, ds, args.seed, overrides)
    tt = time.perf_counter() - t0
    save_model(model, args.out)
    meta = {
        "format": "driftboost-model-meta",
        "version": 1,
        "model_kind": args.model,
        "schema_hash": schema_hash(ds.schema),
        "seed": args.seed,
        "training_time_s": tt,
        "n_train": ds.n,
        "package_version": __version__,
    }
    _sidecar_path(args.out).write_text(json.dumps(meta, indent=2))
    print(f"wrote {args.out} and {_sidecar_path(args.out)} (fit in {tt:.3f}s)")
    return 0


def _load_model_checked(model_file: str, ds) -> object:
    model = load_model(model_file)
    sidecar = _sidecar_path(model_file)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        want = meta.get("schema_hash")
        if want is not None and want != schema_hash(ds.schema):
            raise ValueError(
                f"dataset schema hash {schema_hash(ds.schema)[:12]}... does not match "
                f"model metadata {want[:12]}...; refusing to predict"
            )
    return model


def cmd_predict(args) -> int:
    ds = _load_dataset_arg(args)
    model = _load_model_checked(args.model_file, ds)
    preds = predict_any(model, ds.X)
    _write_rows(args.out, ["prediction"], ([repr(float(p))] for p in preds))
    if args.out:
        print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    ds = _load_dataset_arg(args)
    model = _load_model_checked(args.model_file, ds)
    preds = predict_any(model, ds.X)
    report = evaluate(preds, ds.y, model_kind(model), 0.0)
    doc = report.to_dict()
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_benchmark(args) -> int:
    kv: dict[str, str] = {}
    if args.config:
        kv.update(parse_config_file(args.config))
    for item in args.set or []:
        key, value = _parse_kv_item(item)
        kv[key] = value
    if args.dataset is not None:
        kv["dataset"] = args.dataset
    if args.label is not None:
        kv["label"] = args.label
    if args.models is not None:
        kv["models"] = args.models
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    if args.test_fraction is not None:
        kv["test_fraction"] = str(args.test_fraction)
    if args.synth_n is not None:
        kv["synth_n"] = str(args.synth_n)
    if args.synth_seed is not None:
        kv["synth_seed"] = str(args.synth_seed)
    if args.synth_noise_sd is not None:
        kv["synth_noise_sd"] = str(args.synth_noise_sd)
    if args.out_dir is not None:
        kv["out_dir"] = args.out_dir
    config = benchmark_config_from_kv(kv)
    if config.out_dir is None:
        config.out_dir = _default_out_dir()
    report = run_benchmark(config)
    paths = save_report(report, config.out_dir)
    print(report.render_text())
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    failed = [o for o in report.outcomes if o.status == "failed"]
    if failed and not report.ok_outcomes:
        print(json.dumps({"error": "BenchmarkFailed", "message": "all models failed"}), file=sys.stderr)
        return 1
    return 0


def _gbdt_params_from_model(model: Ensemble) -> GbdtParams:
    payload = {
        k: v for k, v in model.params.items()
        if k in GbdtParams.__dataclass_fields__
    }
    return GbdtParams.from_dict(payload)


def cmd_diagnose(args) -> int:
    ds = _load_dataset_arg(args)
    model = _load_model_checked(args.model_file, ds)
    train, test = train_test_split(ds, SplitSpec(args.test_fraction, args.seed))

    if args.kind == "prediction_error":
        preds = predict_any(model, test.X)
        rows = (
            [repr(float(a)), repr(float(p)), int(abs(a - p) <= 1e-9)]
            for a, p in zip(test.y, preds)
        )
        _write_rows(args.out, ["actual", "predicted", "on_identity"], rows)
    elif args.kind == "residuals":
        preds = predict_any(model, test.X)
        rows = (
            [repr(float(p)), repr(float(a - p))]
            for a, p in zip(test.y, preds)
        )
        _write_rows(args.out, ["predicted", "residual"], rows)
    elif args.kind == "learning_curve":
        if not isinstance(model, Ensemble):
            raise ValueError(f"learning_curve requires a boosted ensemble, got {model_kind(model)}")
        staged_tr = staged_predict(model, train.X)
        staged_te = staged_predict(model, test.X)
        rows = (
            [t, repr(rmse(train.y, staged_tr[t])), repr(rmse(test.y, staged_te[t]))]
            for t in range(1, len(model.trees) + 1)
        )
        _write_rows(args.out, ["round", "train_rmse", "test_rmse"], rows)
    elif args.kind == "validation_curve":
        if not (isinstance(model, Ensemble) and model.params.get("kind") == "gbdt"):
            raise ValueError(f"validation_curve requires a gbdt model, got {model_kind(model)}")
        base = _gbdt_params_from_model(model)
        grid = [int(v) for v in args.grid.split(",")] if args.grid else DEFAULT_VALIDATION_GRID
        rows = []
        for leaves in grid:
            params = GbdtParams.from_dict({**base.to_dict(), "num_leaves": leaves})
            refit = fit_gbdt(train, params)
            rows.append(
                [leaves, repr(rmse(train.y, refit.predict(train.X))), repr(rmse(test.y, refit.predict(test.X)))]
            )
        _write_rows(args.out, ["num_leaves", "train_rmse", "test_rmse"], rows)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_dataset_args(sub, synth_defaults=(200, 7, 0.1)):
    n, seed, noise = synth_defaults
    sub.add_argument("--dataset", help="CSV table in the canonical schema")
    sub.add_argument("--synth-n", type=int, default=n, dest="synth_n")
    sub.add_argument("--synth-seed", type=int, default=seed, dest="synth_seed")
    sub.add_argument("--synth-noise-sd", type=float, default=noise, dest="synth_noise_sd")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftboost",
        description="Gradient-boosted regression trees and a seismic damage prediction benchmark.",
    )
    parser.add_argument("--version", action="version", version=f"driftboost {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="write a synthetic dataset CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sd", type=float, default=0.0, dest="noise_sd")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("train", help="fit one model and write versioned JSON + sidecar metadata")
    p.add_argument("--model", required=True, help=f"one of {IMPLEMENTED_MODEL_KINDS}")
    _add_dataset_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="hyperparameter override")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("predict", help="predict a dataset with a saved model")
    p.add_argument("--model-file", required=True, dest="model_file")
    _add_dataset_args(p)
    p.add_argument("--out", help="output CSV (stdout when omitted)")
    p.set_defaults(func=cmd_predict)

    p = subs.add_parser("evaluate", help="metrics of a saved model on a dataset")
    p.add_argument("--model-file", required=True, dest="model_file")
    _add_dataset_args(p)
    p.add_argument("--out", help="write the metrics JSON here as well")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("benchmark", help="fit, evaluate and rank the model roster")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--dataset")
    p.add_argument("--label")
    p.add_argument("--models", help="comma-separated model kinds")
    p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", type=float, dest="test_fraction")
    p.add_argument("--synth-n", type=int, dest="synth_n")
    p.add_argument("--synth-seed", type=int, dest="synth_seed")
    p.add_argument("--synth-noise-sd", type=float, dest="synth_noise_sd")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_benchmark)

    p = subs.add_parser("diagnose", help="plot-ready CSV series for a saved model")
    p.add_argument("--model-file", required=True, dest="model_file")
    _add_dataset_args(p)
    p.add_argument("--kind", required=True, choices=DIAGNOSE_KINDS)
    p.add_argument("--test-fraction", type=float, default=0.2, dest="test_fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", help="comma-separated num_leaves grid for validation_curve")
    p.add_argument("--out", help="output CSV (stdout when omitted)")
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
