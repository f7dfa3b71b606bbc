"""Regression models written from scratch, one instance per target."""
from .base import (
    FAMILIES,
    MeanBaseline,
    NotFittedError,
    RegressionModel,
    load_model,
    model_class,
    rmse,
    save_model,
)
from .linear import ElasticNet
from .neighbors import KNearestNeighbors
from .trees import (
    DecisionTree,
    GradientBoostedTrees,
    LightGBTStacked,
    RandomForest,
    TreeStore,
    quantile_bin_edges,
)


def fit_decision_tree(X, y, max_depth=None, min_leaf=1) -> DecisionTree:
    return DecisionTree(max_depth=max_depth, min_leaf=min_leaf).fit(X, y)


def fit_gbt(X, y, X_val, y_val, learning_rate=0.02, max_trees=1000, max_depth=4, patience=50,
            min_leaf=1) -> GradientBoostedTrees:
    model = GradientBoostedTrees(
        learning_rate=learning_rate, max_trees=max_trees, max_depth=max_depth, min_leaf=min_leaf, patience=patience
    )
    return model.fit(X, y, X_val, y_val)


def fit_light_gbt_stacked(X, y, X_val, y_val, n_bins=255, learning_rate=0.02, max_trees=1000, max_depth=4,
                          min_leaf=20, patience=50, l1=1e-4, l2=1e-4) -> LightGBTStacked:
    model = LightGBTStacked(
        learning_rate=learning_rate, max_trees=max_trees, max_depth=max_depth, min_leaf=min_leaf,
        patience=patience, n_bins=n_bins, l1=l1, l2=l2,
    )
    return model.fit(X, y, X_val, y_val)


def fit_elasticnet(X, y, l1=1e-4, l2=1e-4, max_iter=10_000, tol=1e-10) -> ElasticNet:
    return ElasticNet(l1=l1, l2=l2, max_iter=max_iter, tol=tol).fit(X, y)


def fit_knn(X, y, k=5) -> KNearestNeighbors:
    return KNearestNeighbors(k=k).fit(X, y)


def fit_random_forest(X, y, n_trees=50, max_depth=None, seed=0, min_leaf=1, max_features=1.0,
                      bootstrap=True) -> RandomForest:
    model = RandomForest(
        n_trees=n_trees, max_depth=max_depth, min_leaf=min_leaf, max_features=max_features,
        bootstrap=bootstrap, seed=seed,
    )
    return model.fit(X, y)


__all__ = [
    "FAMILIES",
    "DecisionTree",
    "ElasticNet",
    "GradientBoostedTrees",
    "KNearestNeighbors",
    "LightGBTStacked",
    "MeanBaseline",
    "NotFittedError",
    "RandomForest",
    "RegressionModel",
    "TreeStore",
    "fit_decision_tree",
    "fit_elasticnet",
    "fit_gbt",
    "fit_knn",
    "fit_light_gbt_stacked",
    "fit_random_forest",
    "load_model",
    "model_class",
    "quantile_bin_edges",
    "rmse",
    "save_model",
]
