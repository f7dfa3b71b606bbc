"""Tree-based regressors: CART, bagged forest and two gradient-boosting variants."""
from __future__ import annotations

import numpy as np

from ._kernels import grow_exact, grow_hist, predict_forest
from .base import RegressionModel, rmse
from .linear import ElasticNet


class TreeStore:
    """Trees packed back to back as flat node arrays.

    Each node has a feature (-1 for a leaf), a threshold (go left when
    x <= threshold), child indices local to its tree and a value.
    """

    def __init__(self):
        self._trees: list[tuple[np.ndarray, ...]] = []
        self._packed = None

    def __len__(self):
        return len(self._trees)

    def append(self, feature, threshold, left, right, value):
        self._trees.append((
            np.asarray(feature, dtype=np.int64),
            np.asarray(threshold, dtype=float),
            np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64),
            np.asarray(value, dtype=float),
        ))
        self._packed = None

    def truncate(self, n: int) -> None:
        del self._trees[n:]
        self._packed = None

    def _pack(self):
        if self._packed is None:
            if not self._trees:
                empty_i = np.zeros(0, dtype=np.int64)
                self._packed = (empty_i, np.zeros(0), empty_i, empty_i, np.zeros(0), np.zeros(1, dtype=np.int64))
            else:
                cols = list(zip(*self._trees))
                offsets = np.zeros(len(self._trees) + 1, dtype=np.int64)
                offsets[1:] = np.cumsum([t[0].size for t in self._trees])
                self._packed = tuple(np.concatenate(c) for c in cols) + (offsets,)
        return self._packed

    def accumulate(self, X: np.ndarray, scale: float, out: np.ndarray) -> np.ndarray:
        feature, threshold, left, right, value, offsets = self._pack()
        predict_forest(feature, threshold, left, right, value, offsets, np.ascontiguousarray(X), scale, out)
        return out

    def to_list(self) -> list[dict]:
        return [
            {"feature": f.tolist(), "threshold": t.tolist(), "left": l.tolist(), "right": r.tolist(), "value": v.tolist()}
            for f, t, l, r, v in self._trees
        ]

    @classmethod
    def from_list(cls, items) -> "TreeStore":
        store = cls()
        for item in items:
            store.append(item["feature"], item["threshold"], item["left"], item["right"], item["value"])
        return store

    def n_nodes(self) -> int:
        return sum(t[0].size for t in self._trees)


def _depth_arg(max_depth) -> int:
    return -1 if max_depth is None else int(max_depth)


def presort(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stable per-column argsort and the sorted columns, column-major."""
    order = np.argsort(X, axis=0, kind="stable")
    return np.asfortranarray(order), np.asfortranarray(np.take_along_axis(X, order, axis=0))


class DecisionTree(RegressionModel):
    family = "decision_tree"

    def __init__(self, max_depth=None, min_leaf=1):
        super().__init__(max_depth=max_depth, min_leaf=min_leaf)

    def _fit(self, X, y, X_val, y_val):
        min_leaf = int(self.hyperparameters["min_leaf"])
        if min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        f, t, l, r, v, _ = grow_exact(
            X, *presort(X), y, _depth_arg(self.hyperparameters["max_depth"]), min_leaf, X.shape[1], 0
        )
        self.trees_ = TreeStore()
        self.trees_.append(f, t, l, r, v)
        self.metadata = {"n_nodes": int(f.size), "n_leaves": int(np.sum(f < 0))}

    def _predict(self, X):
        return self.trees_.accumulate(X, 1.0, np.zeros(X.shape[0]))

    def _state(self):
        return {"trees": self.trees_.to_list()}

    def _load_state(self, state):
        self.trees_ = TreeStore.from_list(state["trees"])


class RandomForest(RegressionModel):
    family = "random_forest"

    def __init__(self, n_trees=50, max_depth=None, min_leaf=1, max_features=1.0, bootstrap=True, seed=0):
        super().__init__(
            n_trees=n_trees, max_depth=max_depth, min_leaf=min_leaf,
            max_features=max_features, bootstrap=bootstrap, seed=seed,
        )

    def _fit(self, X, y, X_val, y_val):
        hp = self.hyperparameters
        n_trees = int(hp["n_trees"])
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        n, d = X.shape
        n_feat = min(d, max(1, int(round(float(hp["max_features"]) * d))))
        rng = np.random.default_rng(int(hp["seed"]))
        self.trees_ = TreeStore()
        for _ in range(n_trees):
            idx = rng.integers(0, n, n) if hp["bootstrap"] else np.arange(n)
            Xb = np.ascontiguousarray(X[idx])
            yb = y[idx]
            tree_seed = int(rng.integers(0, 2**31 - 1))
            f, t, l, r, v, _ = grow_exact(
                Xb, *presort(Xb), yb, _depth_arg(hp["max_depth"]), int(hp["min_leaf"]), n_feat, tree_seed
            )
            self.trees_.append(f, t, l, r, v)
        self.metadata = {"n_nodes": self.trees_.n_nodes()}

    def _predict(self, X):
        return self.trees_.accumulate(X, 1.0 / len(self.trees_), np.zeros(X.shape[0]))

    def _state(self):
        return {"trees": self.trees_.to_list()}

    def _load_state(self, state):
        self.trees_ = TreeStore.from_list(state["trees"])


def _boost(grow, predict_tree, y, base_train, base_val, y_val, learning_rate, max_trees, patience):
    """Least-squares boosting with early stopping on a validation set.

    ``grow(residual)`` returns node arrays plus the leaf of every training
    row; ``predict_tree(arrays)`` returns the raw tree output on the
    validation rows. Returns the retained trees and the training record.
    """
    F = base_train.astype(float).copy()
    Fv = base_val.astype(float).copy()
    store = TreeStore()
    val_curve = [rmse(y_val, Fv)]
    train_curve = [rmse(y, F)]
    best_k = 0
    for k in range(1, max_trees + 1):
        f, t, l, r, v, leaf = grow(y - F)
        F += learning_rate * v[leaf]
        Fv += learning_rate * predict_tree((f, t, l, r, v))
        store.append(f, t, l, r, v)
        val_curve.append(rmse(y_val, Fv))
        train_curve.append(rmse(y, F))
        if val_curve[k] < val_curve[best_k]:
            best_k = k
        elif k - best_k >= patience:
            break
    store.truncate(best_k)
    record = {
        "stages_fit": len(val_curve) - 1,
        "best_iteration": best_k,
        "validation_curve": val_curve,
        "train_curve": train_curve[: best_k + 1],
    }
    return store, record


def _check_boost_args(max_trees, patience, X_val):
    if int(max_trees) < 1:
        raise ValueError("max_trees must be >= 1")
    if int(patience) < 1:
        raise ValueError("patience must be >= 1")
    if X_val is None or X_val.shape[0] == 0:
        raise ValueError("boosting needs a nonempty validation set for early stopping")


def _start_value(y: np.ndarray) -> float:
    # exact for constant targets, so no stage chases rounding residue
    return float(y[0]) if np.all(y == y[0]) else float(np.mean(y))


class GradientBoostedTrees(RegressionModel):
    """First-order least-squares boosting of exact CART trees."""

    family = "gbt"

    def __init__(self, learning_rate=0.02, max_trees=1000, max_depth=4, min_leaf=1, patience=50):
        super().__init__(
            learning_rate=learning_rate, max_trees=max_trees, max_depth=max_depth,
            min_leaf=min_leaf, patience=patience,
        )

    def _fit(self, X, y, X_val, y_val):
        hp = self.hyperparameters
        _check_boost_args(hp["max_trees"], hp["patience"], X_val)
        order, sorted_x = presort(X)
        depth, min_leaf, d = _depth_arg(hp["max_depth"]), int(hp["min_leaf"]), X.shape[1]
        self.f0_ = _start_value(y)

        def grow(residual):
            return grow_exact(X, order, sorted_x, residual, depth, min_leaf, d, 0)

        def predict_tree(arrays):
            one = TreeStore()
            one.append(*arrays)
            return one.accumulate(X_val, 1.0, np.zeros(X_val.shape[0]))

        self.trees_, self.metadata = _boost(
            grow, predict_tree, y, np.full(y.size, self.f0_), np.full(y_val.size, self.f0_), y_val,
            float(hp["learning_rate"]), int(hp["max_trees"]), int(hp["patience"]),
        )

    def _predict(self, X):
        out = np.full(X.shape[0], self.f0_)
        return self.trees_.accumulate(X, float(self.hyperparameters["learning_rate"]), out)

    def _state(self):
        return {"f0": self.f0_, "trees": self.trees_.to_list()}

    def _load_state(self, state):
        self.f0_ = float(state["f0"])
        self.trees_ = TreeStore.from_list(state["trees"])


def quantile_bin_edges(x: np.ndarray, n_bins: int) -> np.ndarray:
    """At most n_bins - 1 increasing edges taken from training quantiles."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    values = np.unique(x)
    if n_bins == 1 or values.size < 2:
        return np.zeros(0)
    if values.size <= n_bins:
        return values[:-1] + 0.5 * np.diff(values)
    qs = np.quantile(x, np.arange(1, n_bins) / n_bins)
    return np.unique(qs)


def bin_codes(X: np.ndarray, edges: list[np.ndarray]) -> np.ndarray:
    codes = np.empty(X.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        codes[:, j] = np.searchsorted(e, X[:, j], side="left")
    return codes


class LightGBTStacked(RegressionModel):
    """Histogram boosting on top of an elastic-net fit.

    The elastic-net prediction is both the starting margin and an extra
    input column; trees grow level-wise over quantile bins.
    """

    family = "light_gbt_stacked"

    def __init__(self, learning_rate=0.02, max_trees=1000, max_depth=4, min_leaf=20, patience=50,
                 n_bins=255, l1=1e-4, l2=1e-4):
        super().__init__(
            learning_rate=learning_rate, max_trees=max_trees, max_depth=max_depth, min_leaf=min_leaf,
            patience=patience, n_bins=n_bins, l1=l1, l2=l2,
        )

    def _fit(self, X, y, X_val, y_val):
        hp = self.hyperparameters
        _check_boost_args(hp["max_trees"], hp["patience"], X_val)
        self.enet_ = ElasticNet(l1=hp["l1"], l2=hp["l2"]).fit(X, y)
        p, pv = self.enet_.predict(X), self.enet_.predict(X_val)
        Xa = np.column_stack([X, p])
        Xva = np.ascontiguousarray(np.column_stack([X_val, pv]))
        edges = [quantile_bin_edges(Xa[:, j], int(hp["n_bins"])) for j in range(Xa.shape[1])]
        codes = bin_codes(Xa, edges)
        n_bins = np.array([e.size + 1 for e in edges], dtype=np.int64)
        depth, min_leaf = _depth_arg(hp["max_depth"]), int(hp["min_leaf"])

        def real_threshold(f, b):
            t = np.zeros(f.size)
            for i in np.flatnonzero(f >= 0):
                t[i] = edges[f[i]][int(b[i])]
            return t

        def grow(residual):
            f, b, l, r, v, leaf = grow_hist(codes, n_bins, residual, depth, min_leaf)
            return f, real_threshold(f, b), l, r, v, leaf

        def predict_tree(arrays):
            one = TreeStore()
            one.append(*arrays)
            return one.accumulate(Xva, 1.0, np.zeros(Xva.shape[0]))

        self.trees_, record = _boost(
            grow, predict_tree, y, p, pv, y_val,
            float(hp["learning_rate"]), int(hp["max_trees"]), int(hp["patience"]),
        )
        record["n_thresholds"] = [int(e.size) for e in edges]
        record["elasticnet_converged"] = self.enet_.metadata["converged"]
        self.metadata = record

    def _predict(self, X):
        p = self.enet_.predict(X)
        Xa = np.ascontiguousarray(np.column_stack([X, p]))
        return self.trees_.accumulate(Xa, float(self.hyperparameters["learning_rate"]), p.copy())

    def _state(self):
        return {"elasticnet": self.enet_.to_dict(), "trees": self.trees_.to_list()}

    def _load_state(self, state):
        self.enet_ = RegressionModel.from_dict(state["elasticnet"])
        self.trees_ = TreeStore.from_list(state["trees"])
