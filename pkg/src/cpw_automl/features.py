"""Feature pipeline: imputation, derived columns, correlation pruning, z-scoring.

All statistics come from the training rows; ``transform`` is pure afterwards.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RAW_COLUMNS = ("freq_hz", "alpha_np_m", "beta_rad_m")
FEATURE_NAMES = (
    "freq_hz",
    "alpha",
    "beta",
    "log10_freq",
    "alpha_over_sqrt_f",
    "beta_over_f",
    "beta_over_f_sq",
    "alpha_times_beta",
)
DEFAULT_MAX_ABS_CORR = 0.98


def create_features(row) -> np.ndarray:
    """[f, a, b, log10 f, a/sqrt(f), b/f, (b/f)^2, a*b] for one (f, alpha, beta) row."""
    return create_feature_matrix(np.asarray(row, dtype=float).reshape(1, 3))[0]


def create_feature_matrix(raw: np.ndarray) -> np.ndarray:
    raw = np.asarray(raw, dtype=float).reshape(-1, 3)
    f, a, b = raw[:, 0], raw[:, 1], raw[:, 2]
    if np.any(~(f > 0)):
        raise ValueError("frequency must be > 0 to build features")
    bf = b / f
    return np.column_stack([f, a, b, np.log10(f), a / np.sqrt(f), bf, bf * bf, a * b])


def fit_medians(train_raw: np.ndarray) -> np.ndarray:
    train_raw = np.asarray(train_raw, dtype=float)
    missing = np.all(np.isnan(train_raw), axis=0)
    if train_raw.shape[0] == 0 or missing.any():
        cols = [RAW_COLUMNS[i] for i in np.flatnonzero(missing)] if train_raw.shape[0] else list(RAW_COLUMNS)
        raise ValueError(f"no training values to impute from in column(s) {cols}")
    return np.nanmedian(train_raw, axis=0)


def impute_missing(raw: np.ndarray, medians: np.ndarray) -> np.ndarray:
    out = np.array(raw, dtype=float, copy=True)
    holes = np.isnan(out)
    if holes.any():
        out[holes] = np.broadcast_to(medians, out.shape)[holes]
    return out


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, train: np.ndarray) -> "Standardizer":
        train = np.asarray(train, dtype=float)
        if train.ndim != 2 or train.shape[0] < 2:
            raise ValueError("standardizer needs at least two training rows")
        return cls(mean=train.mean(axis=0), std=train.std(axis=0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scaled = self.std > 0
        out = X.copy()
        out[..., scaled] = (X[..., scaled] - self.mean[scaled]) / self.std[scaled]
        return out


def fit_standardizer(train: np.ndarray) -> Standardizer:
    return Standardizer.fit(train)


def select_features(train: np.ndarray, max_abs_corr: float = DEFAULT_MAX_ABS_CORR) -> list[int]:
    """Columns kept after dropping constants and the later member of each highly correlated pair."""
    if not 0 < max_abs_corr <= 1:
        raise ValueError("max_abs_corr must lie in (0, 1]")
    train = np.asarray(train, dtype=float)
    std = train.std(axis=0)
    kept: list[int] = []
    z = np.zeros_like(train)
    live = std > 0
    z[:, live] = (train[:, live] - train[:, live].mean(axis=0)) / std[live]
    for j in np.flatnonzero(live):
        ok = True
        for k in kept:
            corr = float(np.mean(z[:, j] * z[:, k]))
            if abs(corr) > max_abs_corr:
                ok = False
                break
        if ok:
            kept.append(int(j))
    return kept


class FeaturePipeline:
    """impute -> create -> select -> standardize, fitted once on training rows."""

    def __init__(self, max_abs_corr: float = DEFAULT_MAX_ABS_CORR):
        self.max_abs_corr = max_abs_corr
        self.medians: np.ndarray | None = None
        self.selected: list[int] = []
        self.scaler: Standardizer | None = None
        self.freq_range: tuple[float, float] | None = None

    @property
    def fitted(self) -> bool:
        return self.scaler is not None

    @property
    def output_names(self) -> list[str]:
        return [FEATURE_NAMES[i] for i in self.selected]

    def fit(self, train_raw: np.ndarray) -> "FeaturePipeline":
        train_raw = np.asarray(train_raw, dtype=float).reshape(-1, 3)
        self.medians = fit_medians(train_raw)
        full = create_feature_matrix(impute_missing(train_raw, self.medians))
        self.selected = select_features(full, self.max_abs_corr)
        if not self.selected:
            raise ValueError("feature selection removed every column")
        self.scaler = Standardizer.fit(full[:, self.selected])
        f = train_raw[:, 0][np.isfinite(train_raw[:, 0])]
        self.freq_range = (float(f.min()), float(f.max()))
        return self

    def transform(self, raw: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise RuntimeError("feature pipeline is not fitted")
        raw = np.asarray(raw, dtype=float).reshape(-1, 3)
        full = create_feature_matrix(impute_missing(raw, self.medians))
        return np.ascontiguousarray(self.scaler.apply(full[:, self.selected]))

    def to_dict(self) -> dict:
        if not self.fitted:
            raise RuntimeError("feature pipeline is not fitted")
        return {
            "input_schema": list(RAW_COLUMNS),
            "feature_names": list(FEATURE_NAMES),
            "output_schema": self.output_names,
            "max_abs_corr": self.max_abs_corr,
            "medians": self.medians.tolist(),
            "selected": self.selected,
            "mean": self.scaler.mean.tolist(),
            "std": self.scaler.std.tolist(),
            "freq_range": list(self.freq_range),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeaturePipeline":
        if list(data["input_schema"]) != list(RAW_COLUMNS) or list(data["feature_names"]) != list(FEATURE_NAMES):
            raise ValueError("feature pipeline schema does not match this version")
        pipe = cls(max_abs_corr=float(data["max_abs_corr"]))
        pipe.medians = np.asarray(data["medians"], dtype=float)
        pipe.selected = [int(i) for i in data["selected"]]
        pipe.scaler = Standardizer(np.asarray(data["mean"], dtype=float), np.asarray(data["std"], dtype=float))
        pipe.freq_range = tuple(float(v) for v in data["freq_range"])
        return pipe

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FeaturePipeline":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
