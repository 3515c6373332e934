"""Benchmark orchestration: fit every configured model on one train/test
split, evaluate on the holdout, rank, and emit CSV / JSON / text tables.

The comparison roster mirrors a published evaluation of regressors on R/C
seismic damage data. Five of the listed methods are deliberately not
implemented here (Bayesian ridge, AdaBoost, orthogonal matching pursuit,
Huber, least angle regression); they appear as explicit "n/a" rows so the
table shows the gap instead of silently shrinking.

Dataset labels (BARE / FULL-MASONRY / PILOTIS by convention) are opaque
strings: they name the three masonry-infill sub-corpora users may hold, but
the harness treats any label the same way.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import __version__
from .baselines import fit_elastic_net, fit_forest, fit_knn, fit_lasso, fit_ols, fit_ridge
from .boosting import GbdtParams, fit_gbdt, fit_residual_boosting
from .dataset import Dataset, SplitSpec, canonical_schema, load_csv, synth_generate, train_test_split
from .metrics import REPORT_COLUMNS, MetricsReport, evaluate, rank_models
from .rng import derive_seed
from .serialize import predict_any
from .tree import fit_cart

# kind -> (display name, default hyperparameters, fitter or None)
# fitter signature: (train: Dataset, seed: int, params: dict) -> model
_FITTERS: dict[str, tuple[str, dict, Optional[Callable]]] = {
    "gbdt": (
        "Light Gradient Boosting Machine",
        {"num_rounds": 100, "learning_rate": 0.1, "num_leaves": 31},
        lambda ds, seed, p: fit_gbdt(ds, GbdtParams(seed=seed, **p)),
    ),
    "gbr": (
        "Gradient Boosting Regressor",
        {"num_rounds": 100, "learning_rate": 0.1, "max_leaves": 8, "min_samples_leaf": 5},
        lambda ds, seed, p: fit_residual_boosting(ds, **p),
    ),
    "random_forest": (
        "Random Forest Regressor",
        {"num_trees": 50, "min_samples_leaf": 5},
        lambda ds, seed, p: fit_forest(ds, mode="random_forest", seed=seed, **p),
    ),
    "extra_trees": (
        "Extra Trees Regressor",
        {"num_trees": 50, "min_samples_leaf": 5},
        lambda ds, seed, p: fit_forest(ds, mode="extra_trees", seed=seed, **p),
    ),
    "knn": (
        "k-Nearest Neighbors Regressor",
        {"k": 5},
        lambda ds, seed, p: fit_knn(ds, **p),
    ),
    "ols": (
        "Linear Regression",
        {},
        lambda ds, seed, p: fit_ols(ds),
    ),
    "ridge": (
        "Ridge Regression",
        {"l2": 1.0},
        lambda ds, seed, p: fit_ridge(ds, **p),
    ),
    "cart": (
        "Decision Tree Regressor",
        {"max_leaves": 256, "min_samples_leaf": 5},
        lambda ds, seed, p: fit_cart(ds, **p),
    ),
    "elastic_net": (
        "Elastic Net",
        {"l1": 0.01, "l2": 0.1},
        lambda ds, seed, p: fit_elastic_net(ds, **p),
    ),
    "lasso": (
        "Lasso Regression",
        {"l1": 0.01},
        lambda ds, seed, p: fit_lasso(ds, **p),
    ),
    "bayesian_ridge": ("Bayesian Ridge", {}, None),
    "adaboost": ("AdaBoost Regressor", {}, None),
    "omp": ("Orthogonal Matching Pursuit", {}, None),
    "huber": ("Huber Regressor", {}, None),
    "lars": ("Least Angle Regression", {}, None),
}

ALL_MODEL_KINDS = list(_FITTERS)
IMPLEMENTED_MODEL_KINDS = [k for k, (_, _, fit) in _FITTERS.items() if fit is not None]


def display_name(kind: str) -> str:
    return _FITTERS[kind][0]


def default_params(kind: str) -> dict:
    return dict(_FITTERS[kind][1])


def fit_model(kind: str, train: Dataset, seed: int, overrides: dict | None = None):
    """Fit one registered model kind with defaults merged under overrides."""
    if kind not in _FITTERS:
        raise KeyError(f"unknown model kind {kind!r}")
    name, defaults, fitter = _FITTERS[kind]
    if fitter is None:
        raise ValueError(f"model {name!r} is registered but not implemented")
    params = {**defaults, **(overrides or {})}
    return fitter(train, seed, params)


@dataclass
class BenchmarkConfig:
    """Everything one benchmark run depends on (besides wall-clock time)."""

    label: str = "BARE"
    dataset_path: Optional[str] = None
    synth_n: int = 5850
    synth_seed: int = 7
    synth_noise_sd: float = 0.1
    test_fraction: float = 0.2
    seed: int = 0
    models: list[str] = field(default_factory=lambda: list(ALL_MODEL_KINDS))
    out_dir: Optional[Path] = None
    model_params: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        if not self.models:
            raise ValueError("benchmark needs at least one model")
        unknown = [m for m in self.models if m not in _FITTERS]
        if unknown:
            raise KeyError(f"unknown model kinds: {unknown}")

    def load_dataset(self) -> Dataset:
        if self.dataset_path is not None:
            return load_csv(self.dataset_path, canonical_schema())
        return synth_generate(self.synth_n, self.synth_seed, self.synth_noise_sd)


@dataclass
class ModelOutcome:
    kind: str
    model_name: str
    status: str  # "ok" | "not_implemented" | "failed"
    report: Optional[MetricsReport] = None
    error: Optional[str] = None


@dataclass
class BenchmarkReport:
    """Ranked table plus environment stamp for one dataset label."""

    label: str
    seed: int
    n_train: int
    n_test: int
    package_version: str
    outcomes: list[ModelOutcome]

    @property
    def ok_outcomes(self) -> list[ModelOutcome]:
        return [o for o in self.outcomes if o.status == "ok"]

    def to_json_dict(self) -> dict:
        return {
            "format": "driftboost-benchmark",
            "version": 1,
            "label": self.label,
            "environment": {"package_version": self.package_version, "seed": self.seed},
            "n_train": self.n_train,
            "n_test": self.n_test,
            "columns": REPORT_COLUMNS,
            "results": [
                {
                    "model": o.model_name,
                    "kind": o.kind,
                    "status": o.status,
                    "metrics": o.report.to_dict() if o.report else None,
                    "error": o.error,
                }
                for o in self.outcomes
            ],
        }

    def to_csv_text(self) -> str:
        lines = ["Model," + ",".join(REPORT_COLUMNS)]
        for o in self.outcomes:
            if o.report is not None:
                r = o.report
                cells = [repr(r.r2), repr(r.mae), repr(r.mse), repr(r.rmse), repr(r.mape), f"{r.training_time_s:.3f}"]
            else:
                cells = ["n/a"] * len(REPORT_COLUMNS)
            lines.append(",".join([o.model_name] + cells))
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        head = ["Machine Learning Algorithm", "R²", "MAE", "MSE", "RMSE", "MAPE", "TT (Sec)"]
        rows = []
        for o in self.outcomes:
            if o.report is not None:
                r = o.report
                rows.append(
                    [o.model_name, f"{r.r2:.4f}", f"{r.mae:.4f}", f"{r.mse:.4f}",
                     f"{r.rmse:.4f}", f"{r.mape:.4f}", f"{r.training_time_s:.3f}"]
                )
            else:
                note = "n/a (not implemented)" if o.status == "not_implemented" else f"n/a ({o.error})"
                rows.append([o.model_name, note, "", "", "", "", ""])
        widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(head)]
        out = [f"Benchmark results [{self.label}]  (n_train={self.n_train}, n_test={self.n_test}, seed={self.seed})"]
        out.append("  ".join(h.ljust(w) for h, w in zip(head, widths)))
        out.append("  ".join("-" * w for w in widths))
        for row in rows:
            out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        out.append("TT (Sec) = wall-clock training time; ranking uses R² only.")
        return "\n".join(out) + "\n"


def run_benchmark(config: BenchmarkConfig, dataset: Dataset | None = None) -> BenchmarkReport:
    """Fit, evaluate, and rank every configured model on one split.

    Per-model failures are recorded and the run continues; the report holds
    ranked ok rows first, then not-implemented rows, then failures. Model i
    trains with the seed stream (config.seed, i), so the run is a pure
    function of the config apart from training times.
    """
    ds = dataset if dataset is not None else config.load_dataset()
    train, test = train_test_split(ds, SplitSpec(config.test_fraction, config.seed))
    by_kind: dict[str, ModelOutcome] = {}
    for index, kind in enumerate(config.models):
        name, _, fitter = _FITTERS[kind]
        if fitter is None:
            by_kind[kind] = ModelOutcome(kind, name, "not_implemented")
            continue
        try:
            t0 = time.perf_counter()
            model = fit_model(kind, train, derive_seed(config.seed, index), config.model_params.get(kind))
            tt = time.perf_counter() - t0
            y_hat = predict_any(model, test.X)
            report = evaluate(y_hat, test.y, name, tt)
            by_kind[kind] = ModelOutcome(kind, name, "ok", report=report)
        except Exception as exc:  # keep going; the table shows the hole
            by_kind[kind] = ModelOutcome(kind, name, "failed", error=f"{type(exc).__name__}: {exc}")

    ok = [o for o in by_kind.values() if o.status == "ok"]
    ranked_names = [r.model_name for r in rank_models([o.report for o in ok])] if ok else []
    ordered = sorted(ok, key=lambda o: ranked_names.index(o.model_name))
    ordered += [o for k, o in by_kind.items() if o.status == "not_implemented"]
    ordered += [o for k, o in by_kind.items() if o.status == "failed"]
    return BenchmarkReport(
        label=config.label,
        seed=config.seed,
        n_train=train.n,
        n_test=test.n,
        package_version=__version__,
        outcomes=ordered,
    )


def save_report(report: BenchmarkReport, out_dir: str | Path) -> dict[str, Path]:
    """Write benchmark_<label>.{csv,json,txt}; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"benchmark_{report.label}"
    paths = {
        "csv": out_dir / f"{stem}.csv",
        "json": out_dir / f"{stem}.json",
        "txt": out_dir / f"{stem}.txt",
    }
    paths["csv"].write_text(report.to_csv_text())
    paths["json"].write_text(json.dumps(report.to_json_dict(), indent=2))
    paths["txt"].write_text(report.render_text())
    return paths
