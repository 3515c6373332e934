"""Gradient boosted tree ensembles.

Two fitters share the :class:`Ensemble` container:

* :func:`fit_residual_boosting` is classical stagewise boosting: each round
  fits an exact CART tree to the current residuals and adds it with
  shrinkage (base score 0).
* :func:`fit_gbdt` is the second-order, regularized, histogram-based method:
  per round it takes gradients/hessians of the halved squared loss at the
  current predictions, optionally subsamples rows by gradient magnitude
  (one-side sampling), accumulates per-feature histograms, grows a tree
  leaf-wise by maximal regularized gain, and sets each leaf to
  -G/(H + l2_reg).

Feature bin edges are computed once on the full training set before round 1
and reused every round, so split thresholds are stable under row sampling.
All randomness derives from the params seed; refitting with identical
params produces a bitwise-identical ensemble.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .rng import make_rng
from .tree import (
    Internal,
    Leaf,
    RegressionTree,
    _best_matrix_split,
    _set_child,
    bin_column,
    fit_cart_arrays,
    predict_tree,
    predict_tree_batch,
    quantile_bin_edges,
)

_GOSS_STREAM = 7  # stream key separating per-round sampling from other draws


@dataclass(frozen=True)
class GossConfig:
    """One-side sampling fractions: keep the top ``a`` of rows by |gradient|,
    subsample ``b`` of the remainder and reweight it by (1-a)/b."""

    a: float
    b: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ValueError(f"goss fractions must be >= 0, got a={self.a}, b={self.b}")
        if self.a + self.b > 1.0:
            raise ValueError(f"goss fractions must satisfy a + b <= 1, got a={self.a}, b={self.b}")
        if self.a < 1.0 and self.b == 0.0:
            raise ValueError("goss with a < 1 requires b > 0 (the sampled rest would be lost)")


@dataclass
class GbdtParams:
    """Knobs of the second-order fitter.

    ``learning_rate`` is the shrinkage multiplier on every added tree;
    ``l2_reg`` and ``min_split_gain`` are the leaf-weight and per-split
    penalties of the regularized objective. ``growth`` selects leaf-wise
    (default) or depth-wise expansion.
    """

    num_rounds: int = 100
    learning_rate: float = 0.1
    num_leaves: int = 31
    max_depth: Optional[int] = None
    l2_reg: float = 0.0
    min_split_gain: float = 0.0
    max_bins: int = 255
    min_child_hess: float = 1e-3
    goss: Optional[GossConfig] = None
    seed: int = 0
    growth: str = "leaf_wise"

    def __post_init__(self):
        if isinstance(self.goss, (tuple, list)):
            self.goss = GossConfig(*self.goss)
        if self.num_rounds < 1:
            raise ValueError(f"num_rounds must be >= 1, got {self.num_rounds}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if self.num_leaves < 2:
            raise ValueError(f"num_leaves must be >= 2, got {self.num_leaves}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.l2_reg < 0:
            raise ValueError(f"l2_reg must be >= 0, got {self.l2_reg}")
        if self.min_split_gain < 0:
            raise ValueError(f"min_split_gain must be >= 0, got {self.min_split_gain}")
        if self.max_bins < 2:
            raise ValueError(f"max_bins must be >= 2, got {self.max_bins}")
        if self.min_child_hess < 0:
            raise ValueError(f"min_child_hess must be >= 0, got {self.min_child_hess}")
        if self.growth not in ("leaf_wise", "depth_wise"):
            raise ValueError(f"growth must be 'leaf_wise' or 'depth_wise', got {self.growth!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["goss"] = [self.goss.a, self.goss.b] if self.goss else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtParams":
        d = dict(d)
        if d.get("goss") is not None:
            d["goss"] = GossConfig(*d["goss"])
        return cls(**d)


@dataclass
class GradHess:
    """Per-sample first and second derivatives of the training loss."""

    grads: np.ndarray
    hessians: np.ndarray

    def __post_init__(self):
        self.grads = np.asarray(self.grads, dtype=np.float64)
        self.hessians = np.asarray(self.hessians, dtype=np.float64)
        if self.grads.shape != self.hessians.shape:
            raise ValueError("grads and hessians must have equal length")
        if not (np.isfinite(self.grads).all() and np.isfinite(self.hessians).all()):
            raise ValueError("non-finite gradient or hessian")


@dataclass
class GossSample:
    """Selected row ids (ascending) and their accumulation weights."""

    indices: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class SplitRecord:
    """Audit record of one realized split, kept on the fitted ensemble.

    ``rival_gain`` is the best gain any *other* splittable leaf offered at
    the moment this split was chosen (None when no rival existed or growth
    was depth-wise), which is what makes leaf-wise dominance checkable.
    """

    round_index: int
    feature_index: int
    threshold: float
    gain: float
    left_grad_sum: float
    left_hess_sum: float
    left_count: int
    right_grad_sum: float
    right_hess_sum: float
    right_count: int
    rival_gain: Optional[float]


@dataclass
class Ensemble:
    """Additive tree model: base_score + learning_rate * sum of tree outputs."""

    base_score: float
    learning_rate: float
    trees: list[RegressionTree]
    params: dict
    split_log: list[SplitRecord] = field(default_factory=list, repr=False)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += self.learning_rate * predict_tree_batch(tree, X)
        return out


def squared_loss_grad_hess(y: np.ndarray, y_hat: np.ndarray) -> GradHess:
    """Derivatives of the halved squared loss: g = y_hat - y, h = 1."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    return GradHess(grads=y_hat - y, hessians=np.ones_like(y))


def leaf_weight(G: float, H: float, l2: float) -> float:
    """Optimal leaf value -G / (H + l2) for the second-order objective."""
    if H + l2 <= 0:
        raise ValueError(f"need H + l2 > 0, got H={H}, l2={l2}")
    return -G / (H + l2)


def structure_score(leaf_sums: Sequence[tuple[float, float]], l2: float, gamma: float) -> float:
    """Quality of a fixed tree structure: -1/2 sum G^2/(H+l2) + gamma * T."""
    total = 0.0
    for G, H in leaf_sums:
        if H + l2 <= 0:
            raise ValueError(f"need H + l2 > 0 for every leaf, got H={H}, l2={l2}")
        total += G * G / (H + l2)
    return -0.5 * total + gamma * len(leaf_sums)


def split_gain(GL: float, HL: float, GR: float, HR: float, l2: float, gamma: float) -> float:
    """Gain of one split: half the structure-score improvement, minus gamma."""
    if HL + l2 <= 0 or HR + l2 <= 0 or HL + HR + l2 <= 0:
        raise ValueError("need positive regularized hessian sums on both sides")
    G = GL + GR
    return 0.5 * (GL * GL / (HL + l2) + GR * GR / (HR + l2) - G * G / (HL + HR + l2)) - gamma


def regularized_objective(
    y: np.ndarray,
    y_hat: np.ndarray,
    leaf_weights_per_tree: Sequence[Sequence[float]],
    l2: float,
    gamma: float,
) -> float:
    """Halved squared loss plus gamma * leaves + l2/2 * sum of squared leaf weights."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    loss = 0.5 * float(((y - y_hat) ** 2).sum())
    for weights in leaf_weights_per_tree:
        w = np.asarray(weights, dtype=np.float64)
        loss += gamma * len(w) + 0.5 * l2 * float((w**2).sum())
    return loss


# ---------------------------------------------------------------------------
# one-side sampling


def _ceil_frac(x: float) -> int:
    # guards against 0.1 * 30 = 3.0000000000000004 -> 4
    return math.ceil(round(x, 9))


def _goss_indices(grads: np.ndarray, a: float, b: float, rng: np.random.Generator) -> GossSample:
    g = np.asarray(grads, dtype=np.float64)
    n = len(g)
    GossConfig(a, b)
    n_top = min(_ceil_frac(a * n), n)
    order = np.argsort(-np.abs(g), kind="stable")
    top = order[:n_top]
    rest = order[n_top:]
    n_rest = min(_ceil_frac(b * len(rest)), len(rest))
    if n_rest > 0:
        picked = rng.choice(rest, size=n_rest, replace=False)
        indices = np.concatenate([top, picked])
        weights = np.concatenate([np.ones(n_top), np.full(n_rest, (1.0 - a) / b)])
    else:
        indices = top
        weights = np.ones(n_top)
    order = np.argsort(indices, kind="stable")
    return GossSample(indices=indices[order], weights=weights[order])


def goss_sample(grads: np.ndarray, a: float, b: float, seed: int) -> GossSample:
    """Gradient-based one-side sample.

    The ceil(a*n) rows with the largest |gradient| are always kept at weight
    1 (ties broken toward lower row index); ceil(b * remaining) rows are
    drawn uniformly without replacement from the rest and reweighted by
    (1-a)/b so their gradient mass stays representative of what was dropped.
    """
    return _goss_indices(grads, a, b, make_rng(seed))


# ---------------------------------------------------------------------------
# histogram tree growing


@dataclass
class _NodeState:
    rows: np.ndarray
    depth: int
    ref: tuple
    grad_sum: float
    hess_sum: float
    hist: tuple
    best: Optional[tuple] = None


class _HistGrower:
    """Grows one tree on pre-binned features from weighted grad/hess sums."""

    def __init__(self, bins, wg, wh, edges, prefix_valid, params: GbdtParams):
        self.bins = bins
        self.wg = wg
        self.wh = wh
        self.edges = edges
        self.params = params
        self.prefix_valid = prefix_valid
        self.d = bins.shape[1]
        self.maxb = prefix_valid.shape[1] + 1
        self._offsets = (np.arange(self.d, dtype=np.int64) * self.maxb)[None, :]

    def _hist(self, rows):
        codes = (self.bins[rows].astype(np.int64) + self._offsets).ravel()
        size = self.d * self.maxb
        hg = np.bincount(codes, weights=np.repeat(self.wg[rows], self.d), minlength=size)
        hh = np.bincount(codes, weights=np.repeat(self.wh[rows], self.d), minlength=size)
        hc = np.bincount(codes, minlength=size)
        return hg.reshape(self.d, self.maxb), hh.reshape(self.d, self.maxb), hc.reshape(self.d, self.maxb)

    def _scan(self, state: _NodeState):
        p = self.params
        if len(state.rows) < 2:
            return None
        if p.max_depth is not None and state.depth >= p.max_depth:
            return None
        return _best_matrix_split(
            *state.hist, self.prefix_valid, p.l2_reg, p.min_split_gain, p.min_child_hess, 1
        )

    def _make_node(self, rows, depth, ref, gsum, hsum, hist) -> _NodeState:
        state = _NodeState(rows, depth, ref, gsum, hsum, hist)
        state.best = self._scan(state)
        return state

    def _split(self, leaves, pick, round_index, records, rival):
        state = leaves[pick]
        j, k, gain, gl, hl, cl, gr, hr, cr = state.best
        node = Internal(j, float(self.edges[j][k]), None, None)
        _set_child(state.ref, node)
        mask = self.bins[state.rows, j] <= k
        lrows, rrows = state.rows[mask], state.rows[~mask]
        if len(lrows) <= len(rrows):
            lhist = self._hist(lrows)
            rhist = tuple(p - c for p, c in zip(state.hist, lhist))
        else:
            rhist = self._hist(rrows)
            lhist = tuple(p - c for p, c in zip(state.hist, rhist))
        records.append(
            SplitRecord(round_index, j, float(self.edges[j][k]), gain, gl, hl, cl, gr, hr, cr, rival)
        )
        leaves[pick] = self._make_node(lrows, state.depth + 1, (node, "left"), gl, hl, lhist)
        leaves.append(self._make_node(rrows, state.depth + 1, (node, "right"), gr, hr, rhist))

    def grow(self, rows, round_index, records) -> tuple[RegressionTree, list[np.ndarray]]:
        p = self.params
        holder = [None]
        root = self._make_node(
            rows, 0, (holder, 0), float(self.wg[rows].sum()), float(self.wh[rows].sum()), self._hist(rows)
        )
        leaves = [root]
        if p.growth == "leaf_wise":
            while len(leaves) < p.num_leaves:
                pick = -1
                for i, lf in enumerate(leaves):
                    if lf.best is not None and (pick < 0 or lf.best[2] > leaves[pick].best[2]):
                        pick = i
                if pick < 0:
                    break
                rivals = [lf.best[2] for i, lf in enumerate(leaves) if i != pick and lf.best is not None]
                self._split(leaves, pick, round_index, records, max(rivals) if rivals else None)
        else:
            frontier = [0]
            while frontier and len(leaves) < p.num_leaves:
                next_frontier = []
                for i in frontier:
                    if len(leaves) >= p.num_leaves:
                        break
                    if leaves[i].best is None:
                        continue
                    self._split(leaves, i, round_index, records, None)
                    next_frontier.extend([i, len(leaves) - 1])
                frontier = next_frontier
        assignments = []
        for lf in leaves:
            value = -lf.grad_sum / (lf.hess_sum + p.l2_reg)
            _set_child(lf.ref, Leaf(value=value, n=len(lf.rows), grad_sum=lf.grad_sum, hess_sum=lf.hess_sum))
            assignments.append((lf.rows, value))
        tree = RegressionTree(root=holder[0], num_leaves=len(leaves), params={"kind": "gbdt", "num_features": self.d})
        return tree, assignments


# ---------------------------------------------------------------------------
# fitters


def fit_gbdt(ds: Dataset, params: GbdtParams) -> Ensemble:
    """Second-order regularized GBDT with histogram splits.

    Base score is mean(y). Each round computes squared-loss gradients at the
    current predictions, optionally one-side-samples the rows, grows one
    tree from weighted histograms, and adds it with shrinkage. The returned
    ensemble carries a ``split_log`` auditing every realized split.
    """
    if not isinstance(params, GbdtParams):
        raise TypeError("params must be a GbdtParams")
    X, y = ds.X, ds.y
    n, d = X.shape
    edges = [quantile_bin_edges(X[:, j], params.max_bins) for j in range(d)]
    bins = np.column_stack([bin_column(X[:, j], edges[j]) for j in range(d)])
    nbins = np.array([len(e) + 1 for e in edges])
    maxb = int(nbins.max())
    prefix_valid = np.arange(maxb - 1)[None, :] < (nbins - 1)[:, None]

    base = float(y.mean())
    pred = np.full(n, base)
    trees: list[RegressionTree] = []
    records: list[SplitRecord] = []
    sampling = params.goss is not None and params.goss.a < 1.0
    all_rows = np.arange(n)

    for t in range(params.num_rounds):
        gh = squared_loss_grad_hess(y, pred)
        if sampling:
            sample = _goss_indices(gh.grads, params.goss.a, params.goss.b, make_rng(params.seed, _GOSS_STREAM, t))
            rows = sample.indices
            wg = gh.grads[rows] * sample.weights
            wh = gh.hessians[rows] * sample.weights
            grower = _HistGrower(bins[rows], wg, wh, edges, prefix_valid, params)
            tree, _ = grower.grow(np.arange(len(rows)), t, records)
            # leaf membership is only known for the sampled rows; route everyone
            pred = pred + params.learning_rate * predict_tree_batch(tree, X)
        else:
            grower = _HistGrower(bins, gh.grads, gh.hessians, edges, prefix_valid, params)
            tree, assignments = grower.grow(all_rows, t, records)
            pred = pred.copy()
            for rows_in_leaf, leaf_value in assignments:
                pred[rows_in_leaf] += params.learning_rate * leaf_value
        trees.append(tree)

    model_params = params.to_dict()
    model_params["kind"] = "gbdt"
    model_params["num_features"] = d
    return Ensemble(base_score=base, learning_rate=params.learning_rate, trees=trees,
                    params=model_params, split_log=records)


def _leaf_values_inorder(tree: RegressionTree) -> list[float]:
    values = []

    def walk(node):
        if isinstance(node, Leaf):
            values.append(node.value)
        else:
            walk(node.left)
            walk(node.right)

    walk(tree.root)
    return values


def fit_residual_boosting(
    ds: Dataset,
    num_rounds: int,
    learning_rate: float,
    max_leaves: int = 8,
    min_samples_leaf: int = 1,
) -> Ensemble:
    """Stagewise residual boosting with exact CART trees and base score 0."""
    if num_rounds < 1:
        raise ValueError(f"num_rounds must be >= 1, got {num_rounds}")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError(f"learning_rate must lie in (0, 1], got {learning_rate}")
    X, y = ds.X, ds.y
    pred = np.zeros(ds.n)
    trees = []
    for _ in range(num_rounds):
        tree = fit_cart_arrays(X, y - pred, max_leaves, min_samples_leaf)
        pred = pred + learning_rate * predict_tree_batch(tree, X)
        trees.append(tree)
    params = {
        "kind": "residual_boosting",
        "num_rounds": num_rounds,
        "learning_rate": learning_rate,
        "max_leaves": max_leaves,
        "min_samples_leaf": min_samples_leaf,
        "num_features": ds.d,
    }
    return Ensemble(base_score=0.0, learning_rate=learning_rate, trees=trees, params=params)


# ---------------------------------------------------------------------------
# prediction


def predict(ens: Ensemble, x: np.ndarray) -> float:
    """base_score + learning_rate * sum of tree outputs, for one row."""
    total = ens.base_score
    for tree in ens.trees:
        total += ens.learning_rate * predict_tree(tree, x)
    return total


def staged_predict(ens: Ensemble, ds: Dataset | np.ndarray) -> np.ndarray:
    """Matrix of predictions per boosting round, shape (K+1, n).

    Row 0 is the base score; row t uses the first t trees; the final row
    equals :func:`predict` on every sample.
    """
    X = ds.X if isinstance(ds, Dataset) else np.asarray(ds, dtype=np.float64)
    out = np.empty((len(ens.trees) + 1, X.shape[0]))
    out[0] = ens.base_score
    for t, tree in enumerate(ens.trees, start=1):
        out[t] = out[t - 1] + ens.learning_rate * predict_tree_batch(tree, X)
    return out


def ensemble_leaf_weights(ens: Ensemble) -> list[list[float]]:
    """Leaf values of every tree (for the regularized-objective accounting)."""
    return [_leaf_values_inorder(tree) for tree in ens.trees]
