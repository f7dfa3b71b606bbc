"""Shared model contract, scoring and JSON persistence."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

FAMILIES = (
    "mean_baseline",
    "elasticnet",
    "knn",
    "decision_tree",
    "gbt",
    "light_gbt_stacked",
    "random_forest",
)

_REGISTRY: dict[str, type["RegressionModel"]] = {}


class NotFittedError(RuntimeError):
    pass


def rmse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size != y_pred.size:
        raise ValueError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        raise ValueError("rmse of empty vectors")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    return X


class RegressionModel:
    """fit/predict contract common to all families.

    Subclasses set ``family`` and implement ``_fit``, ``_predict``,
    ``_state`` and ``_load_state``.
    """

    family: ClassVar[str] = ""

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if cls.family:
            _REGISTRY[cls.family] = cls

    def __init__(self, **hyperparameters):
        self.hyperparameters: dict[str, Any] = hyperparameters
        self.metadata: dict[str, Any] = {}
        self.fitted = False

    def fit(self, X, y, X_val=None, y_val=None) -> "RegressionModel":
        X = as_matrix(X)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] == 0:
            raise ValueError("cannot fit on empty data")
        if y.size != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.size}")
        if X_val is not None:
            X_val = as_matrix(X_val)
            y_val = np.asarray(y_val, dtype=float).ravel()
        self.n_features = X.shape[1]
        self._fit(X, y, X_val, y_val)
        self.fitted = True
        return self

    def predict(self, X) -> np.ndarray:
        if not self.fitted:
            raise NotFittedError(f"{self.family} model is not fitted")
        X = as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return self._predict(X)

    def _fit(self, X, y, X_val, y_val):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError

    def _state(self) -> dict:
        raise NotImplementedError

    def _load_state(self, state: dict) -> None:
        raise NotImplementedError

    def to_dict(self) -> dict:
        if not self.fitted:
            raise NotFittedError("only fitted models can be serialized")
        return {
            "family": self.family,
            "hyperparameters": self.hyperparameters,
            "n_features": self.n_features,
            "metadata": self.metadata,
            "state": self._state(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionModel":
        family = data["family"]
        if family not in _REGISTRY:
            raise ValueError(f"unknown model family {family!r}")
        model = _REGISTRY[family](**data["hyperparameters"])
        model.n_features = int(data["n_features"])
        model.metadata = dict(data.get("metadata", {}))
        model._load_state(data["state"])
        model.fitted = True
        return model

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in sorted(self.hyperparameters.items()))
        return f"{type(self).__name__}({params})"


def model_class(family: str) -> type[RegressionModel]:
    if family not in _REGISTRY:
        raise ValueError(f"unknown model family {family!r}; choose from {sorted(_REGISTRY)}")
    return _REGISTRY[family]


def save_model(model: RegressionModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True), encoding="utf-8")


def load_model(path) -> RegressionModel:
    return RegressionModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class MeanBaseline(RegressionModel):
    family = "mean_baseline"

    def _fit(self, X, y, X_val, y_val):
        self.mean_ = float(np.mean(y))

    def _predict(self, X):
        return np.full(X.shape[0], self.mean_)

    def _state(self):
        return {"mean": self.mean_}

    def _load_state(self, state):
        self.mean_ = float(state["mean"])
