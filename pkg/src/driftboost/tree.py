"""Regression trees and split search.

Three layers live here:

* exact greedy CART fitting (best-first growth, squared-error splits,
  region-mean leaves) and weakest-link cost-complexity pruning;
* histogram machinery: quantile bin edges, per-feature gradient/hessian
  accumulation, and split search restricted to bin boundaries;
* the second-order split gain shared by both searches,

      gain = 1/2 * [ GL^2/(HL+l2) + GR^2/(HR+l2) - (GL+GR)^2/(HL+HR+l2) ] - min_split_gain.

Conventions fixed across the package: candidate thresholds sit at midpoints
between consecutive distinct feature values; a sample with x[f] exactly equal
to a threshold routes LEFT; ties between equal-gain splits resolve to the
lowest feature index, then the smallest threshold. Mean-fitted (CART) leaves
store the squared-loss gradient statistics taken at a zero baseline, so
``value == -grad_sum / hess_sum`` holds for every leaf regardless of which
fitter produced it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import Dataset

TREE_FORMAT_VERSION = 1


@dataclass
class Leaf:
    value: float
    n: int
    grad_sum: float
    hess_sum: float


@dataclass
class Internal:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Internal, Leaf]


@dataclass
class RegressionTree:
    """Binary tree with (feature, threshold) internals and constant leaves."""

    root: TreeNode
    num_leaves: int
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SplitCandidate:
    """A scored split: threshold, Eq-style gain, and both children's sums."""

    feature_index: int
    threshold: float
    gain: float
    left_grad_sum: float
    left_hess_sum: float
    left_count: int
    right_grad_sum: float
    right_hess_sum: float
    right_count: int


@dataclass
class Histogram:
    """Binned gradient/hessian/count sums for one feature.

    ``bin_edges`` has one more entry than there are bins; the interior
    entries ``bin_edges[1:-1]`` are the candidate split thresholds and lie
    strictly between distinct feature values. The outer two entries pad
    slightly beyond the observed min/max.
    """

    bin_edges: np.ndarray
    grad_sums: np.ndarray
    hess_sums: np.ndarray
    counts: np.ndarray

    @property
    def num_bins(self) -> int:
        return len(self.counts)

    @property
    def thresholds(self) -> np.ndarray:
        return self.bin_edges[1:-1]


# ---------------------------------------------------------------------------
# binning


def quantile_bin_edges(values: np.ndarray, max_bins: int) -> np.ndarray:
    """Interior bin boundaries for one feature, at empirical quantiles.

    Boundaries are midpoints between consecutive distinct values, thinned to
    at most ``max_bins - 1`` entries by quantile when the feature has more
    distinct values than bins. Returned array is strictly increasing and no
    data value ever equals a boundary, so bin membership is unambiguous.
    """
    if max_bins < 2:
        raise ValueError(f"max_bins must be >= 2, got {max_bins}")
    u = np.unique(np.asarray(values, dtype=np.float64))
    if len(u) <= 1:
        return np.empty(0, dtype=np.float64)
    if len(u) <= max_bins:
        lo, hi = u[:-1], u[1:]
    else:
        qs = np.quantile(values, np.arange(1, max_bins) / max_bins, method="lower")
        idx = np.unique(np.searchsorted(u, qs))
        idx = idx[idx < len(u) - 1]
        lo, hi = u[idx], u[idx + 1]
    mids = 0.5 * (lo + hi)
    # halfway rounding can land on the right neighbour for adjacent floats
    return mids[mids < hi]


def bin_column(values: np.ndarray, interior_edges: np.ndarray) -> np.ndarray:
    """Bin index per value; value <= edge k means bin index <= k."""
    return np.searchsorted(interior_edges, values, side="left").astype(np.int32)


def build_histogram(
    feature_values: np.ndarray,
    grads: np.ndarray,
    hessians: np.ndarray,
    max_bins: int,
) -> Histogram:
    """Accumulate per-bin gradient/hessian/count sums for one feature."""
    x = np.asarray(feature_values, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    h = np.asarray(hessians, dtype=np.float64)
    if not (len(x) == len(g) == len(h)):
        raise ValueError(f"length mismatch: {len(x)} values, {len(g)} grads, {len(h)} hessians")
    interior = quantile_bin_edges(x, max_bins)
    bins = bin_column(x, interior)
    nbins = len(interior) + 1
    lo, hi = float(x.min()), float(x.max())
    pad = (hi - lo) / (2.0 * nbins) if hi > lo else 0.5
    edges = np.concatenate([[lo - pad], interior, [hi + pad]])
    return Histogram(
        bin_edges=edges,
        grad_sums=np.bincount(bins, weights=g, minlength=nbins),
        hess_sums=np.bincount(bins, weights=h, minlength=nbins),
        counts=np.bincount(bins, minlength=nbins).astype(np.int64),
    )


# ---------------------------------------------------------------------------
# split search


def _gain_matrix(GL, HL, GR, HR, G, H, l2, min_split_gain):
    with np.errstate(divide="ignore", invalid="ignore"):
        return (
            0.5 * (GL * GL / (HL + l2) + GR * GR / (HR + l2) - G * G / (H + l2))
            - min_split_gain
        )


def _best_matrix_split(bg, bh, bc, prefix_valid, l2, min_split_gain, min_child_hess, min_samples_leaf):
    """Best split over a (d, bins) histogram stack.

    ``prefix_valid[j, k]`` marks structurally available boundaries (bin k is
    not the last bin of feature j). Returns None or a tuple
    (feature, bin, gain, GL, HL, CL, GR, HR, CR). Row-major argmax realizes
    the lowest-feature-then-smallest-threshold tie rule.
    """
    CG = np.cumsum(bg, axis=1)
    CH = np.cumsum(bh, axis=1)
    CC = np.cumsum(bc, axis=1)
    G, H, C = CG[:, -1:], CH[:, -1:], CC[:, -1:]
    GL, HL, CL = CG[:, :-1], CH[:, :-1], CC[:, :-1]
    GR, HR, CR = G - GL, H - HL, C - CL
    gains = _gain_matrix(GL, HL, GR, HR, G, H, l2, min_split_gain)
    valid = (
        prefix_valid
        & (HL >= min_child_hess)
        & (HR >= min_child_hess)
        & (CL >= min_samples_leaf)
        & (CR >= min_samples_leaf)
        & np.isfinite(gains)
    )
    if not valid.any():
        return None
    gains = np.where(valid, gains, -np.inf)
    flat = int(np.argmax(gains))
    j, k = divmod(flat, gains.shape[1])
    if gains[j, k] <= 0.0:
        return None
    return (
        j,
        k,
        float(gains[j, k]),
        float(GL[j, k]),
        float(HL[j, k]),
        int(CL[j, k]),
        float(GR[j, k]),
        float(HR[j, k]),
        int(CR[j, k]),
    )


def best_split_exact(
    grads: np.ndarray,
    hessians: np.ndarray,
    features: np.ndarray,
    l2: float = 0.0,
    min_split_gain: float = 0.0,
    min_child_hess: float = 1e-3,
    min_samples_leaf: int = 1,
) -> Optional[SplitCandidate]:
    """Exact greedy split: scan every midpoint of every feature.

    Returns None when no candidate has strictly positive gain or when every
    candidate violates ``min_child_hess`` / ``min_samples_leaf``.
    """
    g = np.asarray(grads, dtype=np.float64)
    h = np.asarray(hessians, dtype=np.float64)
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not (np.isfinite(g).all() and np.isfinite(h).all()):
        raise ValueError("non-finite gradient or hessian")
    n = len(g)
    if n < 2:
        return None
    H_tot = float(h.sum())
    G_tot = float(g.sum())
    best: Optional[SplitCandidate] = None
    counts = np.arange(1, n, dtype=np.int64)
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        if xs[0] == xs[-1]:
            continue
        cg = np.cumsum(g[order])[:-1]
        ch = np.cumsum(h[order])[:-1]
        thr = 0.5 * (xs[:-1] + xs[1:])
        valid = (
            (xs[1:] > xs[:-1])
            & (thr < xs[1:])
            & (ch >= min_child_hess)
            & (H_tot - ch >= min_child_hess)
            & (counts >= min_samples_leaf)
            & (n - counts >= min_samples_leaf)
        )
        if not valid.any():
            continue
        gains = _gain_matrix(cg, ch, G_tot - cg, H_tot - ch, G_tot, H_tot, l2, min_split_gain)
        gains = np.where(valid & np.isfinite(gains), gains, -np.inf)
        k = int(np.argmax(gains))
        if gains[k] > 0.0 and (best is None or gains[k] > best.gain):
            best = SplitCandidate(
                feature_index=j,
                threshold=float(thr[k]),
                gain=float(gains[k]),
                left_grad_sum=float(cg[k]),
                left_hess_sum=float(ch[k]),
                left_count=int(counts[k]),
                right_grad_sum=float(G_tot - cg[k]),
                right_hess_sum=float(H_tot - ch[k]),
                right_count=int(n - counts[k]),
            )
    return best


def best_split_histogram(
    hists: Sequence[Histogram],
    l2: float = 0.0,
    min_split_gain: float = 0.0,
    min_child_hess: float = 1e-3,
    min_samples_leaf: int = 1,
) -> Optional[SplitCandidate]:
    """Same contract as :func:`best_split_exact` but thresholds are bin edges.

    When bins cover all distinct values of every feature this returns the
    same feature and gain as the exact scan, with the threshold in the same
    inter-value gap.
    """
    if not hists:
        return None
    maxb = max(h.num_bins for h in hists)
    d = len(hists)
    bg = np.zeros((d, maxb))
    bh = np.zeros((d, maxb))
    bc = np.zeros((d, maxb), dtype=np.int64)
    prefix_valid = np.zeros((d, maxb - 1), dtype=bool) if maxb > 1 else np.zeros((d, 0), dtype=bool)
    for j, hist in enumerate(hists):
        nb = hist.num_bins
        bg[j, :nb] = hist.grad_sums
        bh[j, :nb] = hist.hess_sums
        bc[j, :nb] = hist.counts
        prefix_valid[j, : nb - 1] = True
    found = _best_matrix_split(bg, bh, bc, prefix_valid, l2, min_split_gain, min_child_hess, min_samples_leaf)
    if found is None:
        return None
    j, k, gain, gl, hl, cl, gr, hr, cr = found
    return SplitCandidate(j, float(hists[j].thresholds[k]), gain, gl, hl, cl, gr, hr, cr)


# ---------------------------------------------------------------------------
# CART fitting (exact greedy, squared error)


def _set_child(parent_ref, node):
    holder, key = parent_ref
    if isinstance(holder, list):
        holder[key] = node
    elif key == "left":
        holder.left = node
    else:
        holder.right = node


@dataclass
class _GrowingLeaf:
    rows: np.ndarray
    depth: int
    ref: tuple
    best: Optional[SplitCandidate]


def fit_cart(ds: Dataset, max_leaves: int, min_samples_leaf: int = 1) -> RegressionTree:
    """Exact greedy CART: each split is the squared-error-optimal
    (feature, midpoint) pair; leaves predict the region mean.

    Growth is best-first (the leaf whose best split removes the most squared
    error is expanded next) and stops at ``max_leaves``, at purity, or when
    ``min_samples_leaf`` blocks every candidate.
    """
    return fit_cart_arrays(ds.X, ds.y, max_leaves, min_samples_leaf)


def fit_cart_arrays(X: np.ndarray, y: np.ndarray, max_leaves: int, min_samples_leaf: int = 1) -> RegressionTree:
    """:func:`fit_cart` on raw arrays (used by boosting and the forests)."""
    if max_leaves < 1:
        raise ValueError(f"max_leaves must be >= 1, got {max_leaves}")
    if min_samples_leaf < 1:
        raise ValueError(f"min_samples_leaf must be >= 1, got {min_samples_leaf}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    # squared-loss gradients at a zero baseline: the gain is then half the
    # SSE reduction and the optimal leaf value is the region mean
    g = -y
    h = np.ones_like(y)

    def scan(rows):
        if max_leaves == 1 or len(rows) < 2 * min_samples_leaf:
            return None
        return best_split_exact(
            g[rows], h[rows], X[rows], l2=0.0, min_split_gain=0.0,
            min_child_hess=0.0, min_samples_leaf=min_samples_leaf,
        )

    holder = [None]
    all_rows = np.arange(len(y))
    leaves = [_GrowingLeaf(all_rows, 0, (holder, 0), scan(all_rows))]
    while len(leaves) < max_leaves:
        pick = -1
        for i, lf in enumerate(leaves):
            if lf.best is not None and (pick < 0 or lf.best.gain > leaves[pick].best.gain):
                pick = i
        if pick < 0:
            break
        lf = leaves[pick]
        cand = lf.best
        mask = X[lf.rows, cand.feature_index] <= cand.threshold
        node = Internal(cand.feature_index, cand.threshold, None, None)
        _set_child(lf.ref, node)
        lrows, rrows = lf.rows[mask], lf.rows[~mask]
        leaves[pick] = _GrowingLeaf(lrows, lf.depth + 1, (node, "left"), scan(lrows))
        leaves.append(_GrowingLeaf(rrows, lf.depth + 1, (node, "right"), scan(rrows)))
    for lf in leaves:
        sy = float(y[lf.rows].sum())
        cnt = len(lf.rows)
        _set_child(lf.ref, Leaf(value=sy / cnt, n=cnt, grad_sum=-sy, hess_sum=float(cnt)))
    params = {
        "kind": "cart",
        "max_leaves": max_leaves,
        "min_samples_leaf": min_samples_leaf,
        "num_features": X.shape[1],
    }
    return RegressionTree(root=holder[0], num_leaves=len(leaves), params=params)


# ---------------------------------------------------------------------------
# prediction


def predict_tree(tree: RegressionTree, x: np.ndarray) -> float:
    """Value of the unique leaf ``x`` routes to (x[f] <= threshold goes left)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    want = tree.params.get("num_features")
    if want is not None and len(x) != want:
        raise ValueError(f"expected {want} features, got {len(x)}")
    node = tree.root
    while isinstance(node, Internal):
        if node.feature >= len(x):
            raise ValueError(f"tree splits on feature {node.feature} but input has {len(x)}")
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.value


def predict_tree_batch(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    """Vectorized routing of an (n, d) matrix through the tree."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    want = tree.params.get("num_features")
    if want is not None and X.shape[1] != want:
        raise ValueError(f"expected {want} features, got {X.shape[1]}")
    out = np.empty(X.shape[0])
    _route_batch(tree.root, X, np.arange(X.shape[0]), out)
    return out


def _route_batch(node, X, idx, out):
    if isinstance(node, Leaf):
        out[idx] = node.value
        return
    if node.feature >= X.shape[1]:
        raise ValueError(f"tree splits on feature {node.feature} but input has {X.shape[1]}")
    mask = X[idx, node.feature] <= node.threshold
    _route_batch(node.left, X, idx[mask], out)
    _route_batch(node.right, X, idx[~mask], out)


def leaf_assignments(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    """Index (in depth-first pre-order) of the leaf each row routes to."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=np.int64)
    counter = [0]

    def walk(node, idx):
        if isinstance(node, Leaf):
            out[idx] = counter[0]
            counter[0] += 1
            return
        mask = X[idx, node.feature] <= node.threshold
        walk(node.left, idx[mask])
        walk(node.right, idx[~mask])

    walk(tree.root, np.arange(X.shape[0]))
    return out


# ---------------------------------------------------------------------------
# cost-complexity pruning


@dataclass
class _PruneInfo:
    node: TreeNode
    depth: int
    n: int
    sum_y: float
    sum_yy: float
    left: Optional["_PruneInfo"] = None
    right: Optional["_PruneInfo"] = None
    collapsed: bool = False

    @property
    def sse_as_leaf(self) -> float:
        if self.n == 0:
            return 0.0
        return max(self.sum_yy - self.sum_y * self.sum_y / self.n, 0.0)

    @property
    def mean(self) -> float:
        return self.sum_y / self.n if self.n else 0.0

    def is_leaf_now(self) -> bool:
        return self.collapsed or isinstance(self.node, Leaf)

    def subtree_cost(self) -> tuple[float, int]:
        """(sum of leaf SSEs, leaf count) of the current collapsed state."""
        if self.is_leaf_now():
            return self.sse_as_leaf, 1
        lc, ln = self.left.subtree_cost()
        rc, rn = self.right.subtree_cost()
        return lc + rc, ln + rn


def _annotate(node: TreeNode, X, y, idx, depth) -> _PruneInfo:
    info = _PruneInfo(
        node=node, depth=depth, n=len(idx),
        sum_y=float(y[idx].sum()), sum_yy=float((y[idx] ** 2).sum()),
    )
    if isinstance(node, Internal):
        if node.feature >= X.shape[1]:
            raise ValueError(f"tree/dataset mismatch: split on feature {node.feature}, data has {X.shape[1]}")
        mask = X[idx, node.feature] <= node.threshold
        info.left = _annotate(node.left, X, y, idx[mask], depth + 1)
        info.right = _annotate(node.right, X, y, idx[~mask], depth + 1)
    return info


def _rebuild(info: _PruneInfo) -> tuple[TreeNode, int]:
    if isinstance(info.node, Leaf):
        lf = info.node
        return Leaf(lf.value, lf.n, lf.grad_sum, lf.hess_sum), 1
    if info.collapsed:
        return Leaf(info.mean, info.n, -info.sum_y, float(info.n)), 1
    left, nl = _rebuild(info.left)
    right, nr = _rebuild(info.right)
    return Internal(info.node.feature, info.node.threshold, left, right), nl + nr


def prune_ccp(tree: RegressionTree, ds: Dataset, alpha: float) -> RegressionTree:
    """Weakest-link cost-complexity pruning.

    Returns the collapse-subtree minimizing total leaf SSE + alpha * leaves.
    Ties favour the unpruned tree (alpha = 0 returns the input structure);
    equal weakest links collapse shallowest-first, then by lowest split
    feature index. Leaf SSE is measured against region means of ``ds``.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    root = _annotate(tree.root, ds.X, ds.y, np.arange(ds.n), 0)

    def internal_nodes(info, acc):
        if not info.is_leaf_now() and isinstance(info.node, Internal):
            acc.append(info)
            internal_nodes(info.left, acc)
            internal_nodes(info.right, acc)
        return acc

    while True:
        candidates = internal_nodes(root, [])
        if not candidates:
            break
        weakest, weakest_g = None, np.inf
        for info in candidates:
            sub_sse, sub_leaves = info.subtree_cost()
            g = (info.sse_as_leaf - sub_sse) / (sub_leaves - 1)
            key = (g, info.depth, info.node.feature)
            if weakest is None or key < (weakest_g, weakest.depth, weakest.node.feature):
                weakest, weakest_g = info, g
        if weakest_g < alpha:
            weakest.collapsed = True
        else:
            break
    new_root, leaves = _rebuild(root)
    params = dict(tree.params)
    params["ccp_alpha"] = alpha
    return RegressionTree(root=new_root, num_leaves=leaves, params=params)


# ---------------------------------------------------------------------------
# serialization


def tree_to_dict(tree: RegressionTree) -> dict:
    def enc(node):
        if isinstance(node, Leaf):
            return {"value": node.value, "n": node.n, "grad_sum": node.grad_sum, "hess_sum": node.hess_sum}
        return {
            "feature": node.feature,
            "threshold": node.threshold,
            "left": enc(node.left),
            "right": enc(node.right),
        }

    return {
        "format_version": TREE_FORMAT_VERSION,
        "num_leaves": tree.num_leaves,
        "params": tree.params,
        "root": enc(tree.root),
    }


def tree_from_dict(payload: dict) -> RegressionTree:
    if payload.get("format_version") != TREE_FORMAT_VERSION:
        raise ValueError(f"unsupported tree format version {payload.get('format_version')!r}")

    def dec(obj):
        if "value" in obj:
            return Leaf(float(obj["value"]), int(obj["n"]), float(obj["grad_sum"]), float(obj["hess_sum"]))
        return Internal(int(obj["feature"]), float(obj["threshold"]), dec(obj["left"]), dec(obj["right"]))

    return RegressionTree(root=dec(payload["root"]), num_leaves=int(payload["num_leaves"]), params=dict(payload["params"]))


def save_tree(tree: RegressionTree, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(tree)))


def load_tree(path: str | Path) -> RegressionTree:
    return tree_from_dict(json.loads(Path(path).read_text()))
