import numpy as np

from ._kernels import knn_table, table_mean
from .base import RegressionModel


class KNearestNeighbors(RegressionModel):
    """Unweighted k-NN mean; inputs are expected to be standardized already."""

    family = "knn"

    def __init__(self, k=5):
        super().__init__(k=k)

    @property
    def k(self) -> int:
        return int(self.hyperparameters["k"])

    def _fit(self, X, y, X_val, y_val):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k > X.shape[0]:
            raise ValueError(f"k={self.k} exceeds the {X.shape[0]} training rows")
        self.X_ = X.copy()
        self.y_ = y.copy()

    def neighbors(self, X, k: int | None = None) -> np.ndarray:
        """Neighbor index table; pass a larger k to share it between several models."""
        return knn_table(self.X_, np.ascontiguousarray(X, dtype=float), self.k if k is None else int(k))

    def predict_from_table(self, table: np.ndarray) -> np.ndarray:
        if table.shape[1] < self.k:
            raise ValueError("neighbor table is narrower than k")
        return table_mean(table, self.y_, self.k)

    def _predict(self, X):
        return self.predict_from_table(self.neighbors(X))

    def _state(self):
        return {"X": self.X_.tolist(), "y": self.y_.tolist()}

    def _load_state(self, state):
        self.X_ = np.ascontiguousarray(state["X"], dtype=float).reshape(-1, self.n_features)
        self.y_ = np.asarray(state["y"], dtype=float)
