"""Binary-classification random forest built from scratch on CART trees.

Trees grow on bootstrap samples (n draws with replacement) with ``mtry``
candidate features sampled uniformly at each node. Split quality is Gini
impurity decrease; thresholds sit at midpoints between adjacent observed
feature values, so the fitted structure depends only on the ordering of
values within each column.

Split selection is exact: the score maximized per node is the rational
sum(child class-count squares / child size), whose numerator and denominator
stay below 2^53 for any realistic node, so IEEE division yields the
correctly rounded value and mathematically tied splits compare as exact
float ties. Ties break toward the lower feature index, then the lower
threshold.

Per-tree randomness comes from ``SeedSequence(seed, spawn_key=(stream, i))``
so growing ``ntree`` never disturbs earlier trees and results are identical
regardless of execution order.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import FeatureSchema

# spawn_key streams for the per-seed RNG families
_TREE_STREAM = 0
_IMPORTANCE_STREAM = 1
_TUNE_STREAM = 2
_RFCV_STREAM = 3

_MODEL_FORMAT_VERSION = 1


class EmptyNodeError(ValueError):
    """Gini requested for a node with no rows."""


class SchemaMismatchError(ValueError):
    """Input columns do not match the model's training schema."""


class OobUnavailableError(RuntimeError):
    """No out-of-bag rows retained; refit on a larger sample."""


@dataclass(frozen=True)
class ForestParams:
    ntree: int
    mtry: int
    min_node_size: int = 1
    max_depth: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ntree < 1:
            raise ValueError(f"ntree must be >= 1, got {self.ntree}")
        if self.mtry < 1:
            raise ValueError(f"mtry must be >= 1, got {self.mtry}")
        if self.min_node_size < 1:
            raise ValueError(f"min_node_size must be >= 1, got {self.min_node_size}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {self.max_depth}")

    def to_json_dict(self) -> dict:
        return {
            "ntree": self.ntree,
            "mtry": self.mtry,
            "min_node_size": self.min_node_size,
            "max_depth": self.max_depth,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ForestParams":
        return cls(
            ntree=int(doc["ntree"]),
            mtry=int(doc["mtry"]),
            min_node_size=int(doc["min_node_size"]),
            max_depth=None if doc.get("max_depth") is None else int(doc["max_depth"]),
            seed=int(doc["seed"]),
        )


@dataclass
class Tree:
    """Flat-array tree: ``feature[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def leaf_fraction(self) -> np.ndarray:
        return self.pos / (self.pos + self.neg)


@dataclass(frozen=True)
class ImportanceReport:
    features: tuple[str, ...]
    impurity_decrease: tuple[float, ...]
    permutation: tuple[float, ...]
    ranking: tuple[str, ...]


@dataclass(frozen=True)
class PartialDependenceCurve:
    feature: str
    grid: tuple[float, ...]
    contribution: tuple[float, ...]


def gini(counts: Sequence[int]) -> float:
    """Gini impurity 1 - sum(p_i^2); 0 for a pure node, 0.5 for a 50/50 binary one."""
    total = 0
    for c in counts:
        if c < 0:
            raise ValueError(f"negative class count {c}")
        total += c
    if total == 0:
        raise EmptyNodeError("gini of an empty node is undefined")
    return 1.0 - sum((c / total) ** 2 for c in counts)


def _rng(seed: int, stream: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, index))
    return np.random.Generator(np.random.PCG64(ss))


def _midpoint(lo: float, hi: float) -> float:
    """Midpoint of two adjacent observed values, nudged down if rounding hits ``hi``.

    The split contract is "value <= threshold goes left"; a threshold equal to
    the right-hand value would misroute it, which can only happen when lo and
    hi are within a couple of ulps.
    """
    mid = (lo + hi) / 2.0
    if mid >= hi:
        mid = lo
    return float(mid)


def _split_kernel(values: np.ndarray, y: np.ndarray):
    """Best boundary over all columns of ``values`` (codes or raw numbers).

    Returns None when no column admits a split, else a tuple
    (local column, lo, hi, n_left, pos_left) where lo/hi are the adjacent
    distinct sorted entries around the winning boundary.
    """
    m, _ = values.shape
    order = np.argsort(values, axis=0, kind="stable")
    sv = np.take_along_axis(values, order, axis=0)
    sy = y[order]
    is_cut = sv[1:] > sv[:-1]
    if not is_cut.any():
        return None
    pos_prefix = np.cumsum(sy, axis=0, dtype=np.float64)
    total_pos = float(pos_prefix[-1, 0])
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    pos_left = pos_prefix[:-1]
    neg_left = n_left - pos_left
    n_right = m - n_left
    pos_right = total_pos - pos_left
    neg_right = (m - total_pos) - pos_right
    # score = sum over children of (pos^2 + neg^2)/size; maximizing it minimizes
    # the weighted Gini. Numerator <= 2 m^3 and denominator <= m^2/4 are exact
    # in float64, so the division is the correctly rounded true rational.
    num = (pos_left * pos_left + neg_left * neg_left) * n_right
    num += (pos_right * pos_right + neg_right * neg_right) * n_left
    score = num / (n_left * n_right)
    score = np.where(is_cut, score, -np.inf)
    # [feature, boundary] layout: first argmax = lowest feature, then lowest threshold
    flat = int(np.argmax(score.T))
    col, boundary = divmod(flat, m - 1)
    if not is_cut[boundary, col]:
        return None
    return (
        col,
        sv[boundary, col],
        sv[boundary + 1, col],
        boundary + 1,
        int(round(float(pos_prefix[boundary, col]))),
    )


def _gain_if_positive(m: int, pos_total: int, n_left: int, pos_left: int) -> float | None:
    """Gini decrease of a split, or None when it is not strictly positive.

    The positivity test runs in exact integer arithmetic so zero-gain splits
    are never taken on float noise.
    """
    neg_total = m - pos_total
    n_right = m - n_left
    neg_left = n_left - pos_left
    pos_right = pos_total - pos_left
    neg_right = neg_total - pos_right
    s_num = (pos_left**2 + neg_left**2) * n_right + (pos_right**2 + neg_right**2) * n_left
    if s_num * m <= (pos_total**2 + neg_total**2) * n_left * n_right:
        return None
    return s_num / (n_left * n_right) / m - (pos_total**2 + neg_total**2) / (m * m)


def best_split(X: np.ndarray, y: np.ndarray, candidates: Sequence[int] | None = None):
    """Best (feature, threshold, gain) over the candidate features, or None.

    Maximizes weighted Gini decrease; ties resolve to the lower feature index,
    then the lower threshold. Thresholds are midpoints between adjacent
    distinct observed values. Returns None when no split has positive gain.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("best_split needs a 2-D matrix with at least 2 rows")
    if candidates is None:
        candidates = range(X.shape[1])
    cand = sorted(int(c) for c in candidates)
    if not cand:
        raise ValueError("candidate feature set must be nonempty")
    values = X[:, cand]
    res = _split_kernel(values, y.astype(np.int64))
    if res is None:
        return None
    col, lo, hi, n_left, pos_left = res
    gain = _gain_if_positive(X.shape[0], int(y.sum()), n_left, pos_left)
    if gain is None:
        return None
    return cand[col], _midpoint(float(lo), float(hi)), gain


def _grow_tree(
    codes: np.ndarray,
    uniques: list[np.ndarray],
    y: np.ndarray,
    root_rows: np.ndarray,
    rng: np.random.Generator,
    params: ForestParams,
    impurity_out: np.ndarray,
) -> Tree:
    n_features = codes.shape[1]
    n_root = root_rows.size
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    pos: list[int] = []
    neg: list[int] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        pos.append(0)
        neg.append(0)
        return len(feature) - 1

    stack: list[tuple[int, np.ndarray, int]] = [(new_node(), root_rows, 0)]
    while stack:
        node_id, rows, depth = stack.pop()
        m = rows.size
        y_node = y[rows]
        n_pos = int(y_node.sum())
        pos[node_id] = n_pos
        neg[node_id] = m - n_pos
        if n_pos == 0 or n_pos == m or m <= params.min_node_size:
            continue
        if params.max_depth is not None and depth >= params.max_depth:
            continue
        cand = np.sort(rng.choice(n_features, size=params.mtry, replace=False))
        node_values = codes[np.ix_(rows, cand)]
        res = _split_kernel(node_values, y_node)
        if res is None:
            continue
        col, lo, hi, n_left, pos_left = res
        gain = _gain_if_positive(m, n_pos, n_left, pos_left)
        if gain is None:
            continue
        feat = int(cand[col])
        uniq = uniques[feat]
        feature[node_id] = feat
        threshold[node_id] = _midpoint(float(uniq[int(lo)]), float(uniq[int(hi)]))
        impurity_out[feat] += (m / n_root) * gain
        go_left = node_values[:, col] <= lo
        left_id = new_node()
        right_id = new_node()
        left[node_id] = left_id
        right[node_id] = right_id
        stack.append((right_id, rows[~go_left], depth + 1))
        stack.append((left_id, rows[go_left], depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        pos=np.asarray(pos, dtype=np.int64),
        neg=np.asarray(neg, dtype=np.int64),
    )


class ForestModel:
    """Trained ensemble plus training bookkeeping (OOB rows, impurity sums).

    The bookkeeping and training-data references never serialize; a model
    loaded from JSON predicts but cannot produce importance reports.
    """

    def __init__(
        self,
        params: ForestParams,
        trees: list[Tree],
        schema: FeatureSchema,
        fingerprint: str,
        degenerate: bool = False,
    ):
        self.params = params
        self.trees = trees
        self.schema = schema
        self.fingerprint = fingerprint
        self.degenerate = degenerate
        self._oob: list[np.ndarray] | None = None
        self._impurity: np.ndarray | None = None
        self._train: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def n_features(self) -> int:
        return len(self.schema.columns)

    def to_json_dict(self) -> dict:
        return {
            "format_version": _MODEL_FORMAT_VERSION,
            "params": self.params.to_json_dict(),
            "schema": self.schema.to_json_dict(),
            "fingerprint": self.fingerprint,
            "degenerate": self.degenerate,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "pos": t.pos.tolist(),
                    "neg": t.neg.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ForestModel":
        if doc.get("format_version") != _MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
        trees = [
            Tree(
                feature=np.asarray(t["feature"], dtype=np.int32),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int32),
                right=np.asarray(t["right"], dtype=np.int32),
                pos=np.asarray(t["pos"], dtype=np.int64),
                neg=np.asarray(t["neg"], dtype=np.int64),
            )
            for t in doc["trees"]
        ]
        return cls(
            params=ForestParams.from_json_dict(doc["params"]),
            trees=trees,
            schema=FeatureSchema.from_json_dict(doc["schema"]),
            fingerprint=str(doc["fingerprint"]),
            degenerate=bool(doc["degenerate"]),
        )

    def model_hash(self) -> str:
        payload = json.dumps(self.to_json_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def _validate_matrix(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("training matrix must be 2-D and nonempty")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be one per row")
    if not np.isfinite(X).all():
        raise ValueError("training matrix contains non-finite values")
    y = y.astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    return X, y


def fit(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    schema: FeatureSchema | None = None,
) -> ForestModel:
    """Grow ``params.ntree`` trees on bootstrap samples of (X, y).

    A single-class training set is legal: it yields a degenerate all-leaf
    model (flagged and warned about), not an error.
    """
    X, y = _validate_matrix(X, y)
    n, p = X.shape
    if params.mtry > p:
        raise ValueError(f"mtry={params.mtry} exceeds {p} features")
    if schema is None:
        schema = FeatureSchema.custom([f"f{i}" for i in range(p)])
    if len(schema.columns) != p:
        raise SchemaMismatchError(
            f"schema has {len(schema.columns)} columns, matrix has {p}"
        )

    degenerate = len(np.unique(y)) < 2
    if degenerate:
        warnings.warn("single-class training set: model is degenerate", stacklevel=2)

    uniques: list[np.ndarray] = []
    codes = np.empty((n, p), dtype=np.int32)
    for f in range(p):
        uniq, inverse = np.unique(X[:, f], return_inverse=True)
        uniques.append(uniq)
        codes[:, f] = inverse

    all_rows = np.arange(n)
    trees: list[Tree] = []
    oob: list[np.ndarray] = []
    impurity = np.zeros((params.ntree, p))
    for i in range(params.ntree):
        rng = _rng(params.seed, _TREE_STREAM, i)
        boot = rng.integers(0, n, size=n)
        oob.append(np.setdiff1d(all_rows, boot))
        trees.append(_grow_tree(codes, uniques, y, boot, rng, params, impurity[i]))

    fingerprint = hashlib.sha256(X.tobytes() + y.tobytes()).hexdigest()
    model = ForestModel(params, trees, schema, fingerprint, degenerate)
    model._oob = oob
    model._impurity = impurity.mean(axis=0)
    model._train = (X, y)
    return model


def _apply(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Leaf index reached by every row."""
    node = np.zeros(X.shape[0], dtype=np.int32)
    active = np.nonzero(tree.feature[node] >= 0)[0]
    while active.size:
        cur = node[active]
        go_left = X[active, tree.feature[cur]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
        active = active[tree.feature[node[active]] >= 0]
    return node


def _check_width(model: ForestModel, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaMismatchError(
            f"expected {model.n_features} feature columns, got {X.shape[1] if X.ndim == 2 else 'non-matrix'}"
        )
    return X


def predict_proba_matrix(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Positive-class probability per row: mean leaf fraction over trees."""
    X = _check_width(model, X)
    total = np.zeros(X.shape[0])
    for tree in model.trees:
        total += tree.leaf_fraction()[_apply(tree, X)]
    return total / len(model.trees)


def predict_proba(model: ForestModel, row: Sequence[float]) -> float:
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise SchemaMismatchError("predict_proba takes a single row; use predict_proba_matrix")
    return float(predict_proba_matrix(model, row[None, :])[0])


def _tree_predict_class(tree: Tree, X: np.ndarray) -> np.ndarray:
    return (tree.leaf_fraction()[_apply(tree, X)] >= 0.5).astype(np.int64)


def importance(
    model: ForestModel,
    X: np.ndarray | None = None,
    y: np.ndarray | None = None,
) -> ImportanceReport:
    """Permutation importance over per-tree OOB rows plus mean impurity decrease.

    Permutation importance of feature f = mean over trees of (OOB accuracy
    minus OOB accuracy with column f shuffled among the OOB rows). Trees whose
    bootstrap happened to cover every row are skipped; if none remain the
    sample was too small to leave OOB rows at all.
    """
    if model._oob is None or model._impurity is None:
        raise OobUnavailableError(
            "model has no bootstrap bookkeeping (was it loaded from JSON?); refit to compute importance"
        )
    if X is None or y is None:
        if model._train is None:
            raise OobUnavailableError("no training data retained; pass X and y explicitly")
        X, y = model._train
    X = _check_width(model, X)
    y = np.asarray(y, dtype=np.int64)

    p = model.n_features
    drops = np.zeros(p)
    used = 0
    for i, tree in enumerate(model.trees):
        oob = model._oob[i]
        if oob.size == 0:
            continue
        used += 1
        X_oob = X[oob]
        y_oob = y[oob]
        base_acc = float(np.mean(_tree_predict_class(tree, X_oob) == y_oob))
        rng = _rng(model.params.seed, _IMPORTANCE_STREAM, i)
        work = X_oob.copy()
        for f in range(p):
            perm = rng.permutation(oob.size)
            work[:, f] = X_oob[perm, f]
            acc = float(np.mean(_tree_predict_class(tree, work) == y_oob))
            drops[f] += base_acc - acc
            work[:, f] = X_oob[:, f]
    if used == 0:
        raise OobUnavailableError("every tree used all rows in its bootstrap; fit on a larger sample")

    permutation = drops / used
    order = sorted(range(p), key=lambda f: (-permutation[f], f))
    return ImportanceReport(
        features=tuple(model.schema.columns),
        impurity_decrease=tuple(float(v) for v in model._impurity),
        permutation=tuple(float(v) for v in permutation),
        ranking=tuple(model.schema.columns[f] for f in order),
    )


_PD_EPS = 1e-6


def partial_dependence(
    model: ForestModel,
    X: np.ndarray,
    feature: str | int,
    grid: Sequence[float],
) -> PartialDependenceCurve:
    """Average centered log-odds 0.5*(ln p - ln (1-p)) as one feature sweeps a grid.

    Probabilities are clamped to [1e-6, 1 - 1e-6] so pure leaves cannot send
    the log-odds to infinity.
    """
    X = _check_width(model, X)
    if isinstance(feature, str):
        try:
            col = model.schema.columns.index(feature)
        except ValueError:
            raise KeyError(f"unknown feature {feature!r}") from None
        name = feature
    else:
        col = int(feature)
        if not 0 <= col < model.n_features:
            raise KeyError(f"feature index {col} out of range")
        name = model.schema.columns[col]

    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("grid must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    lo, hi = float(X[:, col].min()), float(X[:, col].max())
    if grid[0] < lo or grid[-1] > hi:
        raise ValueError(f"grid [{grid[0]}, {grid[-1]}] outside observed range [{lo}, {hi}]")

    work = X.copy()
    contributions = []
    for v in grid:
        work[:, col] = v
        probs = np.clip(predict_proba_matrix(model, work), _PD_EPS, 1.0 - _PD_EPS)
        contributions.append(float(np.mean(0.5 * (np.log(probs) - np.log(1.0 - probs)))))
    return PartialDependenceCurve(feature=name, grid=tuple(grid), contribution=tuple(contributions))


def _stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row; each class shuffled then dealt round-robin."""
    assignment = np.empty(y.shape[0], dtype=np.int64)
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        if idx.size < folds:
            raise ValueError(
                f"class {cls} has {idx.size} rows, fewer than {folds} folds"
            )
        idx = rng.permutation(idx)
        assignment[idx] = np.arange(idx.size) % folds
    return assignment


def _grid_search(
    X: np.ndarray,
    y: np.ndarray,
    grid: Sequence[tuple[int, int]],
    folds: int,
    seed: int,
    min_node_size: int,
    max_depth: int | None,
) -> tuple[ForestParams, list[dict]]:
    X, y = _validate_matrix(X, y)
    points = [(int(nt), int(mt)) for nt, mt in grid]
    if not points:
        raise ValueError("grid must be nonempty")
    for nt, mt in points:
        if mt > X.shape[1]:
            raise ValueError(f"grid point mtry={mt} exceeds {X.shape[1]} features")
        if nt < 1 or mt < 1:
            raise ValueError(f"invalid grid point ({nt}, {mt})")

    fold_of = _stratified_folds(y, folds, _rng(seed, _TUNE_STREAM, 0))
    table = []
    for nt, mt in points:
        params = ForestParams(ntree=nt, mtry=mt, min_node_size=min_node_size,
                              max_depth=max_depth, seed=seed)
        accs = []
        for k in range(folds):
            test = fold_of == k
            model = fit(X[~test], y[~test], params)
            pred = predict_proba_matrix(model, X[test]) >= 0.5
            accs.append(float(np.mean(pred == (y[test] == 1))))
        table.append({"ntree": nt, "mtry": mt, "cv_accuracy": float(np.mean(accs))})

    best = max(table, key=lambda r: (r["cv_accuracy"], -r["ntree"], -r["mtry"]))
    best_params = ForestParams(
        ntree=best["ntree"], mtry=best["mtry"], min_node_size=min_node_size,
        max_depth=max_depth, seed=seed,
    )
    return best_params, table


def tune(
    X: np.ndarray,
    y: np.ndarray,
    grid: Sequence[tuple[int, int]],
    folds: int = 10,
    seed: int = 0,
    min_node_size: int = 1,
    max_depth: int | None = None,
) -> ForestParams:
    """Grid-search (ntree, mtry) by mean stratified cross-validated accuracy.

    Ties go to the smaller ntree, then the smaller mtry.
    """
    best, _ = _grid_search(X, y, grid, folds, seed, min_node_size, max_depth)
    return best


def tune_table(
    X: np.ndarray,
    y: np.ndarray,
    grid: Sequence[tuple[int, int]],
    folds: int = 10,
    seed: int = 0,
    min_node_size: int = 1,
    max_depth: int | None = None,
) -> tuple[ForestParams, list[dict]]:
    """Like ``tune`` but also returns the per-point CV accuracy table."""
    return _grid_search(X, y, grid, folds, seed, min_node_size, max_depth)


def rfcv(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    steps: Sequence[int],
    folds: int = 5,
) -> list[tuple[int, float]]:
    """Cross-validated error with sequentially reduced feature counts.

    For each outer fold a full model ranks features by permutation importance,
    then for each step k a model restricted to that fold's top-k features is
    refit and scored on the held-out fold. Returns (k, mean error) pairs in
    step order; the first step must cover all features so its entry equals the
    plain CV error of the full model.
    """
    X, y = _validate_matrix(X, y)
    p = X.shape[1]
    steps = [int(k) for k in steps]
    if not steps or steps[0] != p:
        raise ValueError(f"steps must start at the full feature count {p}")
    if any(b >= a for a, b in zip(steps, steps[1:])):
        raise ValueError("steps must be strictly decreasing")
    if steps[-1] < 1:
        raise ValueError("steps must stay >= 1")
    for k in steps:
        if k > p:
            raise ValueError(f"step {k} larger than feature count {p}")

    fold_of = _stratified_folds(y, folds, _rng(params.seed, _RFCV_STREAM, 0))
    errors = np.zeros(len(steps))
    for fold in range(folds):
        test = fold_of == fold
        X_train, y_train = X[~test], y[~test]
        X_test, y_test = X[test], y[test]
        full = fit(X_train, y_train, params)
        report = importance(full)
        ranked = [full.schema.columns.index(name) for name in report.ranking]
        for si, k in enumerate(steps):
            if k == p:
                model = full
                cols = list(range(p))
            else:
                cols = sorted(ranked[:k])
                model = fit(X_train[:, cols], y_train, params)
            pred = predict_proba_matrix(model, X_test[:, cols]) >= 0.5
            errors[si] += float(np.mean(pred != (y_test == 1)))
    errors /= folds
    return [(k, float(err)) for k, err in zip(steps, errors)]
