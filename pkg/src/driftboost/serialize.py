"""Versioned JSON container shared by every model kind.

Layout: {"format": "driftboost-model", "version": 1, "kind": <tag>,
"package_version": ..., "payload": {...}}. Floats are emitted with their
shortest round-trip representation, so save/load is bit-exact for finite
doubles. The split log of a boosted ensemble is training-time audit data and
is intentionally not serialized.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import ForestModel, KnnModel, LinearModel
from .boosting import Ensemble
from .dataset import FeatureSchema
from .tree import RegressionTree, tree_from_dict, tree_to_dict

MODEL_FORMAT = "driftboost-model"
MODEL_FORMAT_VERSION = 1

Model = Ensemble | LinearModel | KnnModel | ForestModel | RegressionTree


def schema_hash(schema: FeatureSchema) -> str:
    """Stable content hash of a schema (names, units, ranges, target)."""
    doc = {
        "features": [
            {"name": f.name, "unit": f.unit, "range": list(f.physical_range) if f.physical_range else None}
            for f in schema.features
        ],
        "target": schema.target,
        "target_min": schema.target_min,
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def model_kind(model: Model) -> str:
    if isinstance(model, Ensemble):
        return str(model.params.get("kind", "gbdt"))
    if isinstance(model, LinearModel):
        return {"none": "ols", "l2": "ridge", "l1": "lasso", "elastic": "elastic_net"}[
            model.regularization["kind"]
        ]
    if isinstance(model, KnnModel):
        return "knn"
    if isinstance(model, ForestModel):
        return model.mode
    if isinstance(model, RegressionTree):
        return "cart"
    raise TypeError(f"unknown model type {type(model).__name__}")


def _encode(model: Model) -> dict:
    if isinstance(model, Ensemble):
        return {
            "base_score": model.base_score,
            "learning_rate": model.learning_rate,
            "params": model.params,
            "trees": [tree_to_dict(t) for t in model.trees],
        }
    if isinstance(model, LinearModel):
        return {
            "coefficients": model.coefficients.tolist(),
            "intercept": model.intercept,
            "regularization": model.regularization,
            "means": model.means.tolist(),
            "sds": model.sds.tolist(),
        }
    if isinstance(model, KnnModel):
        return {
            "k": model.k,
            "Z": model.Z.tolist(),
            "y": model.y.tolist(),
            "means": model.means.tolist(),
            "sds": model.sds.tolist(),
        }
    if isinstance(model, ForestModel):
        return {
            "mode": model.mode,
            "feature_subsample": model.feature_subsample,
            "seed": model.seed,
            "min_samples_leaf": model.min_samples_leaf,
            "max_depth": model.max_depth,
            "trees": [tree_to_dict(t) for t in model.trees],
        }
    if isinstance(model, RegressionTree):
        return tree_to_dict(model)
    raise TypeError(f"unknown model type {type(model).__name__}")


def _decode(kind: str, payload: dict) -> Model:
    if kind in ("gbdt", "residual_boosting"):
        return Ensemble(
            base_score=float(payload["base_score"]),
            learning_rate=float(payload["learning_rate"]),
            trees=[tree_from_dict(t) for t in payload["trees"]],
            params=dict(payload["params"]),
        )
    if kind in ("ols", "ridge", "lasso", "elastic_net"):
        return LinearModel(
            coefficients=np.array(payload["coefficients"], dtype=np.float64),
            intercept=float(payload["intercept"]),
            regularization=dict(payload["regularization"]),
            means=np.array(payload["means"], dtype=np.float64),
            sds=np.array(payload["sds"], dtype=np.float64),
        )
    if kind == "knn":
        return KnnModel(
            k=int(payload["k"]),
            Z=np.array(payload["Z"], dtype=np.float64),
            y=np.array(payload["y"], dtype=np.float64),
            means=np.array(payload["means"], dtype=np.float64),
            sds=np.array(payload["sds"], dtype=np.float64),
        )
    if kind in ("random_forest", "extra_trees"):
        return ForestModel(
            trees=[tree_from_dict(t) for t in payload["trees"]],
            mode=payload["mode"],
            feature_subsample=float(payload["feature_subsample"]),
            seed=int(payload["seed"]),
            min_samples_leaf=int(payload["min_samples_leaf"]),
            max_depth=payload["max_depth"],
        )
    if kind == "cart":
        return tree_from_dict(payload)
    raise ValueError(f"unknown model kind {kind!r}")


def model_to_dict(model: Model) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "package_version": __version__,
        "kind": model_kind(model),
        "payload": _encode(model),
    }


def model_from_dict(doc: dict) -> Model:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')!r}")
    return _decode(doc["kind"], doc["payload"])


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))


def predict_any(model: Model, X: np.ndarray) -> np.ndarray:
    """Uniform batch-predict across model kinds."""
    if isinstance(model, RegressionTree):
        from .tree import predict_tree_batch

        return predict_tree_batch(model, X)
    return model.predict(X)
