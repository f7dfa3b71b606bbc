import numpy as np

from .base import RegressionModel


def _soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


class ElasticNet(RegressionModel):
    """Coordinate descent on 1/(2n)||y - Xw - b||^2 + l1|w|_1 + l2/2 |w|^2.

    Works on the centered Gram matrix, so each coordinate update is O(d).
    Non-convergence is reported in ``metadata["converged"]``.
    """

    family = "elasticnet"

    def __init__(self, l1=1e-4, l2=1e-4, max_iter=10_000, tol=1e-10):
        super().__init__(l1=l1, l2=l2, max_iter=max_iter, tol=tol)

    def _fit(self, X, y, X_val, y_val):
        l1 = float(self.hyperparameters["l1"])
        l2 = float(self.hyperparameters["l2"])
        max_iter = int(self.hyperparameters["max_iter"])
        tol = float(self.hyperparameters["tol"])
        if l1 < 0 or l2 < 0:
            raise ValueError("penalties must be >= 0")
        n, d = X.shape
        x_mean = X.mean(axis=0)
        y_mean = float(y.mean())
        Xc = X - x_mean
        gram = Xc.T @ Xc / n
        corr = Xc.T @ (y - y_mean) / n
        w = np.zeros(d)
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            max_step = 0.0
            for j in range(d):
                denom = gram[j, j] + l2
                if denom == 0.0:
                    continue
                rho = corr[j] - gram[j] @ w + gram[j, j] * w[j]
                new = _soft_threshold(rho, l1) / denom
                max_step = max(max_step, abs(new - w[j]))
                w[j] = new
            if max_step < tol:
                converged = True
                break
        self.coef_ = w
        self.intercept_ = y_mean - float(x_mean @ w)
        self.metadata = {"iterations": it, "converged": converged}

    def _predict(self, X):
        return X @ self.coef_ + self.intercept_

    def _state(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_}

    def _load_state(self, state):
        self.coef_ = np.asarray(state["coef"], dtype=float)
        self.intercept_ = float(state["intercept"])
