"""Comparison regressors for the benchmark: least squares, ridge, lasso /
elastic net, k-nearest neighbors, and randomized tree ensembles.

All linear models and kNN standardize features internally (population sd;
the seismic feature table mixes units spanning four orders of magnitude) and
report coefficients back in original units. Tree ensembles work on raw
features. Every fitter is deterministic given its seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .dataset import Dataset
from .rng import make_rng
from .tree import Internal, Leaf, RegressionTree, best_split_exact, predict_tree_batch


class RankDeficiencyError(ValueError):
    """The design matrix is not full rank; ``columns`` names the dependent ones."""

    def __init__(self, columns: list[str]):
        self.columns = columns
        super().__init__(f"design matrix is rank deficient; collinear columns: {columns}")


class ConvergenceError(RuntimeError):
    """Coordinate descent hit max_iter; ``model`` carries the last iterate."""

    def __init__(self, model: "LinearModel", iterations: int, last_delta: float):
        self.model = model
        self.iterations = iterations
        self.last_delta = last_delta
        super().__init__(
            f"coordinate descent did not converge in {iterations} iterations "
            f"(last max coefficient change {last_delta:.3e})"
        )


@dataclass
class Standardizer:
    """Column-wise (x - mean) / sd with population sd; constant columns map to 0."""

    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        sds = X.std(axis=0)
        return cls(means=X.mean(axis=0), sds=np.where(sds == 0.0, 1.0, sds))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.means) / self.sds


@dataclass
class LinearModel:
    """Linear predictor in original feature units: y = X @ coefficients + intercept."""

    coefficients: np.ndarray
    intercept: float
    regularization: dict
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.coefficients).all() and np.isfinite(self.intercept)):
            raise ValueError("non-finite linear model parameters")

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return X @ self.coefficients + self.intercept


def _standardized_problem(ds: Dataset):
    std = Standardizer.fit(ds.X)
    Z = std.transform(ds.X)
    ybar = float(ds.y.mean())
    return std, Z, ds.y - ybar, ybar


def _finish_linear(beta_z: np.ndarray, ybar: float, std: Standardizer, regularization: dict) -> LinearModel:
    coef = beta_z / std.sds
    intercept = ybar - float(coef @ std.means)
    return LinearModel(coef, intercept, regularization, std.means.copy(), std.sds.copy())


def fit_ols(ds: Dataset) -> LinearModel:
    """Least squares via pivoted QR on standardized features.

    Rank deficiency is an error naming the dependent columns rather than a
    silent pseudo-inverse answer.
    """
    std, Z, yc, ybar = _standardized_problem(ds)
    n, d = Z.shape
    _, R, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = diag.max(initial=0.0)
    rank = 0 if scale == 0.0 else int((diag > max(n, d) * np.finfo(np.float64).eps * scale).sum())
    if rank < d:
        names = [ds.schema.feature_names[j] for j in sorted(piv[rank:])]
        raise RankDeficiencyError(names)
    beta_z = np.linalg.lstsq(Z, yc, rcond=None)[0]
    return _finish_linear(beta_z, ybar, std, {"kind": "none"})


def fit_ridge(ds: Dataset, l2: float) -> LinearModel:
    """Closed-form (Z'Z + l2*I)^-1 Z'y on standardized features, intercept unpenalized."""
    if l2 < 0:
        raise ValueError(f"l2 must be >= 0, got {l2}")
    if l2 == 0.0:
        model = fit_ols(ds)
        model.regularization = {"kind": "l2", "l2": 0.0}
        return model
    std, Z, yc, ybar = _standardized_problem(ds)
    d = Z.shape[1]
    beta_z = np.linalg.solve(Z.T @ Z + l2 * np.eye(d), Z.T @ yc)
    return _finish_linear(beta_z, ybar, std, {"kind": "l2", "l2": l2})


def _soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def fit_elastic_net(
    ds: Dataset,
    l1: float,
    l2: float,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> LinearModel:
    """Cyclic coordinate descent with soft-thresholding on standardized features.

    Minimizes (1/2n)||y - Zb||^2 + l1*||b||_1 + (l2/2)*||b||^2; converged when
    the largest coefficient change in a sweep drops below ``tol``. Lasso is
    the l2 = 0 case. Raises ConvergenceError (carrying the last iterate) if
    ``max_iter`` sweeps are not enough.
    """
    if l1 < 0 or l2 < 0:
        raise ValueError(f"penalties must be >= 0, got l1={l1}, l2={l2}")
    std, Z, yc, ybar = _standardized_problem(ds)
    n, d = Z.shape
    col_scale = (Z**2).mean(axis=0)  # 1.0 except for constant (all-zero) columns
    beta = np.zeros(d)
    resid = yc.copy()
    reg = {"kind": "elastic", "l1": l1, "l2": l2}
    last_delta = np.inf
    for _ in range(max_iter):
        last_delta = 0.0
        for j in range(d):
            if col_scale[j] == 0.0:
                continue
            old = beta[j]
            rho = float(Z[:, j] @ resid) / n + old * col_scale[j]
            new = _soft_threshold(rho, l1) / (col_scale[j] + l2)
            if new != old:
                resid -= Z[:, j] * (new - old)
                beta[j] = new
            last_delta = max(last_delta, abs(new - old))
        if last_delta < tol:
            return _finish_linear(beta, ybar, std, reg)
    raise ConvergenceError(_finish_linear(beta, ybar, std, reg), max_iter, last_delta)


def fit_lasso(ds: Dataset, l1: float, tol: float = 1e-8, max_iter: int = 10_000) -> LinearModel:
    """L1-only shrinkage; the l2 = 0 corner of the elastic net."""
    model = fit_elastic_net(ds, l1, 0.0, tol=tol, max_iter=max_iter)
    model.regularization = {"kind": "l1", "l1": l1}
    return model


# ---------------------------------------------------------------------------
# k-nearest neighbors


@dataclass
class KnnModel:
    """Stored standardized training matrix; predicts the mean target of the
    k nearest rows by Euclidean distance (ties: lower row index)."""

    k: int
    Z: np.ndarray
    y: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        Q = (X - self.means) / self.sds
        d2 = (Q**2).sum(axis=1)[:, None] + (self.Z**2).sum(axis=1)[None, :] - 2.0 * Q @ self.Z.T
        order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return self.y[order].mean(axis=1)


def fit_knn(ds: Dataset, k: int) -> KnnModel:
    if not 1 <= k <= ds.n:
        raise ValueError(f"k must lie in [1, {ds.n}], got {k}")
    std = Standardizer.fit(ds.X)
    return KnnModel(k=k, Z=std.transform(ds.X), y=ds.y.copy(), means=std.means, sds=std.sds)


def predict_knn(model: KnnModel, x: np.ndarray) -> float:
    return float(model.predict(np.asarray(x, dtype=np.float64))[0])


# ---------------------------------------------------------------------------
# randomized tree ensembles


@dataclass
class ForestModel:
    """Unweighted average of independently randomized regression trees."""

    trees: list[RegressionTree]
    mode: str
    feature_subsample: float
    seed: int
    min_samples_leaf: int = 1
    max_depth: Optional[int] = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += predict_tree_batch(tree, X)
        return total / len(self.trees)


def _leaf_from_rows(y, rows) -> Leaf:
    sy = float(y[rows].sum())
    return Leaf(value=sy / len(rows), n=len(rows), grad_sum=-sy, hess_sum=float(len(rows)))


def _sse_reduction(y_node, mask):
    nl = int(mask.sum())
    nr = len(y_node) - nl
    if nl == 0 or nr == 0:
        return None
    sl = float(y_node[mask].sum())
    sr = float(y_node.sum()) - sl
    total = sl + sr
    return sl * sl / nl + sr * sr / nr - total * total / len(y_node)


def _grow_forest_tree(X, y, rows, depth, rng, mode, n_candidates, min_samples_leaf, max_depth):
    y_node = y[rows]
    if (
        len(rows) < 2 * min_samples_leaf
        or (max_depth is not None and depth >= max_depth)
        or y_node.min() == y_node.max()
    ):
        return _leaf_from_rows(y, rows)
    d = X.shape[1]
    feats = np.sort(rng.choice(d, size=n_candidates, replace=False))
    feature = threshold = None
    if mode == "random_forest":
        cand = best_split_exact(
            -y_node, np.ones_like(y_node), X[np.ix_(rows, feats)],
            l2=0.0, min_split_gain=0.0, min_child_hess=0.0, min_samples_leaf=min_samples_leaf,
        )
        if cand is not None:
            feature = int(feats[cand.feature_index])
            threshold = cand.threshold
    else:  # extra_trees: one uniform threshold per candidate feature
        best_red = 0.0
        for f in feats:
            col = X[rows, f]
            lo, hi = float(col.min()), float(col.max())
            if lo == hi:
                continue
            thr = float(rng.uniform(lo, hi))
            mask = col <= thr
            if mask.sum() < min_samples_leaf or (~mask).sum() < min_samples_leaf:
                continue
            red = _sse_reduction(y_node, mask)
            if red is not None and red > best_red:
                best_red, feature, threshold = red, int(f), thr
    if feature is None:
        return _leaf_from_rows(y, rows)
    mask = X[rows, feature] <= threshold
    left = _grow_forest_tree(X, y, rows[mask], depth + 1, rng, mode, n_candidates, min_samples_leaf, max_depth)
    right = _grow_forest_tree(X, y, rows[~mask], depth + 1, rng, mode, n_candidates, min_samples_leaf, max_depth)
    return Internal(feature, threshold, left, right)


def _count_leaves(node) -> int:
    if isinstance(node, Leaf):
        return 1
    return _count_leaves(node.left) + _count_leaves(node.right)


def fit_forest(
    ds: Dataset,
    num_trees: int,
    feature_subsample: float = 1.0 / 3.0,
    mode: str = "random_forest",
    seed: int = 0,
    min_samples_leaf: int = 1,
    max_depth: Optional[int] = None,
) -> ForestModel:
    """Bagged (random_forest) or fully randomized (extra_trees) tree ensemble.

    random_forest bootstraps rows per tree and takes the exact best split
    over a fresh uniform feature subset at every node; extra_trees keeps all
    rows and scores one uniformly drawn threshold per candidate feature,
    keeping the best. Tree t uses the generator stream (seed, t), so serial
    and parallel fits agree bitwise.
    """
    if num_trees < 1:
        raise ValueError(f"num_trees must be >= 1, got {num_trees}")
    if mode not in ("random_forest", "extra_trees"):
        raise ValueError(f"mode must be 'random_forest' or 'extra_trees', got {mode!r}")
    if not 0.0 < feature_subsample <= 1.0:
        raise ValueError(f"feature_subsample must lie in (0, 1], got {feature_subsample}")
    X, y = ds.X, ds.y
    n_candidates = max(1, round(ds.d * feature_subsample))
    trees = []
    for t in range(num_trees):
        rng = make_rng(seed, t)
        rows = rng.integers(0, ds.n, size=ds.n) if mode == "random_forest" else np.arange(ds.n)
        root = _grow_forest_tree(X, y, rows, 0, rng, mode, n_candidates, min_samples_leaf, max_depth)
        trees.append(
            RegressionTree(
                root=root,
                num_leaves=_count_leaves(root),
                params={"kind": mode, "num_features": ds.d, "tree_index": t},
            )
        )
    return ForestModel(
        trees=trees, mode=mode, feature_subsample=feature_subsample, seed=seed,
        min_samples_leaf=min_samples_leaf, max_depth=max_depth,
    )
