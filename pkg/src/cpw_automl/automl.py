"""Per-target model search: low-fidelity screening, full training, leaderboards.

Each target gets its own leaderboard. Trials are independent and may run
on a thread pool; results are merged by trial id, so the outcome does not
depend on execution order.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .dataset import TARGETS, Dataset, Partition
from .features import FeaturePipeline
from .models import FAMILIES, KNearestNeighbors, RegressionModel, model_class, rmse
from .seeding import derive_seed

log = logging.getLogger(__name__)

# column order of the published tables
REPORT_TARGETS = ("sigma_ink", "eps_ds", "eps_fs", "tan_delta")
TARGET_LABELS = {"sigma_ink": "σ_ink", "eps_ds": "ε_DS", "eps_fs": "ε_FS", "tan_delta": "tanδ"}
BOOSTED = ("gbt", "light_gbt_stacked")


def default_grids() -> dict[str, dict[str, list]]:
    # l1_rel is scaled by the training-target std before fitting
    return {
        "mean_baseline": {},
        "elasticnet": {"l1_rel": [0.0, 1e-4, 1e-3, 1e-2, 1e-1], "l2": [0.0, 1e-3, 1e-2, 1e-1]},
        "knn": {"k": [1, 2, 3, 4, 5, 6, 8, 10, 12, 16, 20, 24, 32, 40, 48, 64]},
        "decision_tree": {"max_depth": [4, 6, 8, 10, 12, 16, None], "min_leaf": [1, 5, 10, 20, 50, 100]},
        "gbt": {
            "learning_rate": [0.02],
            "max_depth": [2, 3, 4, 5, 6],
            "min_leaf": [1, 10, 50],
            "max_trees": [600, 1200],
            "patience": [40],
        },
        "light_gbt_stacked": {
            "learning_rate": [0.02],
            "max_depth": [2, 3, 4, 5, 6],
            "min_leaf": [10, 20, 50],
            "n_bins": [63, 127, 255],
            "max_trees": [600, 1200],
            "patience": [40],
            "l1_rel": [1e-4, 1e-3],
        },
        "random_forest": {
            "n_trees": [16, 32],
            "max_depth": [8, 12, 16],
            "min_leaf": [1, 5, 20],
            "max_features": [0.5, 0.8, 1.0],
        },
    }


@dataclass
class SearchSpace:
    grids: dict[str, dict[str, list]] = field(default_factory=default_grids)
    trials_per_family: int = 16
    screen_fraction: float = 0.25
    seed: int = 0
    finalists: int = 4

    def __post_init__(self):
        unknown = set(self.grids) - set(FAMILIES)
        if unknown:
            raise ValueError(f"unknown model families {sorted(unknown)}")
        if not self.grids:
            raise ValueError("search space has no families")
        if self.trials_per_family < 1:
            raise ValueError("trials_per_family must be >= 1")
        if not 0 < self.screen_fraction <= 1:
            raise ValueError("screen_fraction must lie in (0, 1]")
        if self.finalists < 1:
            raise ValueError("finalists must be >= 1")

    @property
    def families(self) -> list[str]:
        return [f for f in FAMILIES if f in self.grids]

    @property
    def budget(self) -> int:
        return self.trials_per_family * len(self.grids)


@dataclass(frozen=True)
class Trial:
    trial_id: int
    family: str
    hyperparameters: dict[str, Any]
    seed: int


@dataclass
class TrialResult:
    trial: Trial
    stage: str
    rmse_validation: float = math.nan
    rmse_holdout: float | None = None
    fit_seconds: float = 0.0
    error: str | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    model: RegressionModel | None = field(default=None, repr=False)
    residuals: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None and math.isfinite(self.rmse_validation)

    def sort_key(self):
        return (self.rmse_validation if self.ok else math.inf, self.trial.trial_id)

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "trial_id": self.trial.trial_id,
            "family": self.trial.family,
            "hyperparameters": self.trial.hyperparameters,
            "seed": self.trial.seed,
            "stage": self.stage,
            "rmse_validation": self.rmse_validation if self.ok else None,
            "rmse_holdout": self.rmse_holdout,
            "error": self.error,
        }
        if "best_iteration" in self.metadata:
            out["best_iteration"] = self.metadata["best_iteration"]
        if timing:
            out["fit_seconds"] = self.fit_seconds
        return out


@dataclass
class Leaderboard:
    target: str
    entries: list[TrialResult]
    screened_out: list[TrialResult]
    comparison: dict[str, Any] | None = None

    @property
    def selected(self) -> TrialResult:
        return self.entries[0]

    @property
    def selected_id(self) -> int:
        return self.selected.trial.trial_id

    def best_by_family(self) -> dict[str, TrialResult]:
        best: dict[str, TrialResult] = {}
        for e in self.entries:
            best.setdefault(e.trial.family, e)
        return best

    def to_dict(self, timing: bool = False) -> dict:
        return {
            "target": self.target,
            "selected_trial_id": self.selected_id,
            "selected_family": self.selected.trial.family,
            "entries": [e.to_dict(timing) for e in self.entries],
            "screened_out": [e.to_dict(timing) for e in self.screened_out],
            "comparison": self.comparison,
        }


def sample_trials(space: SearchSpace, target: str) -> list[Trial]:
    """Seeded random draw without replacement from each family's grid."""
    trials = []
    for family in space.families:
        grid = space.grids[family]
        keys = sorted(grid)
        combos = list(itertools.product(*(grid[k] for k in keys)))
        rng = np.random.default_rng(derive_seed(space.seed, "trials", target, family))
        n = min(space.trials_per_family, len(combos))
        picks = rng.choice(len(combos), size=n, replace=False)
        for i, c in enumerate(picks):
            trials.append(Trial(
                trial_id=len(trials),
                family=family,
                hyperparameters=dict(zip(keys, combos[int(c)])),
                seed=derive_seed(space.seed, "fit", target, family, i),
            ))
    return trials


def build_model(trial: Trial, y_train: np.ndarray) -> RegressionModel:
    hp = dict(trial.hyperparameters)
    if "l1_rel" in hp:
        hp["l1"] = float(hp.pop("l1_rel")) * float(np.std(y_train))
    if trial.family == "random_forest":
        hp["seed"] = trial.seed
    return model_class(trial.family)(**hp)


@dataclass
class _Split:
    X: np.ndarray
    y: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    knn_table: np.ndarray | None = None


def _run_trial(trial: Trial, split: _Split, stage: str) -> TrialResult:
    start = time.perf_counter()
    try:
        model = build_model(trial, split.y)
        model.fit(split.X, split.y, split.X_val, split.y_val)
        if isinstance(model, KNearestNeighbors) and split.knn_table is not None:
            pred = model.predict_from_table(split.knn_table)
        else:
            pred = model.predict(split.X_val)
        if not np.all(np.isfinite(pred)):
            raise FloatingPointError("non-finite validation predictions")
        residuals = split.y_val - pred
        meta = {k: model.metadata[k] for k in ("best_iteration", "stages_fit", "converged") if k in model.metadata}
        return TrialResult(
            trial, stage, rmse_validation=rmse(split.y_val, pred), fit_seconds=time.perf_counter() - start,
            metadata=meta, model=model, residuals=residuals,
        )
    except Exception as exc:  # a crashing trial is recorded and skipped
        log.warning("trial %d (%s) failed: %s", trial.trial_id, trial.family, exc)
        return TrialResult(trial, stage, error=f"{type(exc).__name__}: {exc}", fit_seconds=time.perf_counter() - start)


def _run_all(trials: Sequence[Trial], split: _Split, stage: str, workers: int) -> list[TrialResult]:
    if workers <= 1 or len(trials) <= 1:
        results = [_run_trial(t, split, stage) for t in trials]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: _run_trial(t, split, stage), trials))
    return sorted(results, key=lambda r: r.trial.trial_id)


def _attach_knn_table(split: _Split, trials: Sequence[Trial]) -> None:
    ks = [int(t.hyperparameters["k"]) for t in trials if t.family == "knn"]
    if not ks or split.knn_table is not None:
        return
    k_max = min(max(ks), split.X.shape[0])
    probe = KNearestNeighbors(k=k_max).fit(split.X, split.y)
    split.knn_table = probe.neighbors(split.X_val)


def _shortlist(results: Sequence[TrialResult]) -> tuple[list[TrialResult], list[TrialResult]]:
    keep, drop = [], []
    by_family: dict[str, list[TrialResult]] = {}
    for r in results:
        by_family.setdefault(r.trial.family, []).append(r)
    for family in FAMILIES:
        group = sorted(by_family.get(family, []), key=TrialResult.sort_key)
        n_keep = math.ceil(len(group) / 2)
        keep.extend(group[:n_keep])
        drop.extend(group[n_keep:])
    return sorted(keep, key=lambda r: r.trial.trial_id), sorted(drop, key=lambda r: r.trial.trial_id)


def _screen_rows(space: SearchSpace, n_train: int) -> np.ndarray:
    if space.screen_fraction >= 1.0:
        return np.arange(n_train)
    n = max(2, int(round(space.screen_fraction * n_train)))
    rng = np.random.default_rng(derive_seed(space.seed, "screen"))
    return np.sort(rng.choice(n_train, size=min(n, n_train), replace=False))


@dataclass
class SearchData:
    """Feature matrices for the three splits plus raw targets."""

    X_train: np.ndarray
    X_val: np.ndarray
    X_test: np.ndarray
    Y_train: np.ndarray
    Y_val: np.ndarray
    Y_test: np.ndarray

    @classmethod
    def build(cls, ds: Dataset, part: Partition, pipeline: FeaturePipeline) -> "SearchData":
        return cls(
            pipeline.transform(ds.inputs[part.train]),
            pipeline.transform(ds.inputs[part.validation]),
            pipeline.transform(ds.inputs[part.test]),
            ds.targets[part.train],
            ds.targets[part.validation],
            ds.targets[part.test],
        )


def screen(space: SearchSpace, data: SearchData, target: str, workers: int = 1,
           _cache: dict | None = None) -> tuple[list[TrialResult], list[TrialResult]]:
    """Train every trial on a seeded subsample of the training rows; keep the better half per family."""
    t = TARGETS.index(target)
    rows = _screen_rows(space, data.X_train.shape[0])
    cache = {} if _cache is None else _cache
    split = _Split(np.ascontiguousarray(data.X_train[rows]), data.Y_train[rows, t], data.X_val, data.Y_val[:, t],
                   knn_table=cache.get("screen"))
    trials = sample_trials(space, target)
    _attach_knn_table(split, trials)
    cache["screen"] = split.knn_table
    return _shortlist(_run_all(trials, split, "screen", workers))


def compare(residuals_a, residuals_b, n_boot: int = 2000, seed: int = 0) -> float:
    """Two-sided paired-bootstrap p-value for a difference in RMSE."""
    a = np.asarray(residuals_a, dtype=float).ravel()
    b = np.asarray(residuals_b, dtype=float).ravel()
    if a.size != b.size:
        raise ValueError(f"residual vectors differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty residual vectors")
    sa, sb = a * a, b * b
    observed = math.sqrt(sa.mean()) - math.sqrt(sb.mean())
    rng = np.random.default_rng(seed)
    extreme = 0
    chunk = max(1, min(n_boot, 2_000_000 // a.size))
    done = 0
    while done < n_boot:
        m = min(chunk, n_boot - done)
        idx = rng.integers(0, a.size, size=(m, a.size))
        diff = np.sqrt(sa[idx].mean(axis=1)) - np.sqrt(sb[idx].mean(axis=1))
        extreme += int(np.sum(np.abs(diff - observed) >= abs(observed)))
        done += m
    return min(1.0, (1 + extreme) / (1 + n_boot))


def search(space: SearchSpace, dataset: Dataset, part: Partition, pipeline: FeaturePipeline | None = None,
           targets: Sequence[str] = TARGETS, workers: int = 1, data: SearchData | None = None) -> dict[str, Leaderboard]:
    """Screen, fully train the survivors, and select the lowest-validation-RMSE trial per target."""
    if pipeline is None:
        pipeline = FeaturePipeline().fit(dataset.inputs[part.train])
    if data is None:
        data = SearchData.build(dataset, part, pipeline)
    cache: dict = {}
    boards = {}
    for target in targets:
        t = TARGETS.index(target)
        survivors, dropped = screen(space, data, target, workers, cache)
        split = _Split(data.X_train, data.Y_train[:, t], data.X_val, data.Y_val[:, t], knn_table=cache.get("full"))
        _attach_knn_table(split, [r.trial for r in survivors])
        cache["full"] = split.knn_table
        full = _run_all([r.trial for r in survivors], split, "full", workers)
        ok = sorted((r for r in full if r.ok), key=TrialResult.sort_key)
        failed = [r for r in full if not r.ok]
        if not ok:
            raise RuntimeError(f"every trial failed for target {target}")
        board = Leaderboard(target, ok + failed, dropped)
        families = list(board.best_by_family().values())[: space.finalists]
        for r in families:
            r.rmse_holdout = rmse(data.Y_test[:, t], r.model.predict(data.X_test))
        rivals = [r for r in families if r.trial.family != board.selected.trial.family]
        if rivals:
            rival = rivals[0]
            board.comparison = {
                "selected": board.selected_id,
                "versus": rival.trial.trial_id,
                "versus_family": rival.trial.family,
                "p_value": compare(board.selected.residuals, rival.residuals,
                                   seed=derive_seed(space.seed, "compare", target)),
            }
        boards[target] = board
    return boards


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.4g}"


def report(leaderboards: dict[str, Leaderboard]) -> tuple[str, dict]:
    """Markdown validation and holdout tables (rows: families; columns: targets) and the JSON detail."""
    if not leaderboards:
        raise ValueError("no leaderboards to report")
    cols = [t for t in REPORT_TARGETS if t in leaderboards]
    families = [f for f in FAMILIES if any(f in b.best_by_family() for b in leaderboards.values())]
    header = "| Model | " + " | ".join(TARGET_LABELS[t] for t in cols) + " |"
    rule = "|---|" + "---:|" * len(cols)

    def table(title: str, holdout: bool) -> list[str]:
        lines = [f"### {title}", "", header, rule]
        for fam in families:
            cells = []
            for t in cols:
                best = leaderboards[t].best_by_family().get(fam)
                if best is None:
                    cells.append("")
                    continue
                text = _fmt(best.rmse_holdout if holdout else best.rmse_validation)
                if text and best.trial.trial_id == leaderboards[t].selected_id:
                    text += "*"
                cells.append(text)
            lines.append(f"| {fam} | " + " | ".join(cells) + " |")
        return lines

    md = ["## Model performance", ""]
    md += table("RMSE validation score", holdout=False)
    md += [""]
    md += table("RMSE holdout score", holdout=True)
    md += ["", "`*` selected model for the target. Holdout scores are computed for finalists only.", ""]
    detail = {"targets": {t: leaderboards[t].to_dict() for t in cols}}
    return "\n".join(md), detail


def leaderboard_json(leaderboards: dict[str, Leaderboard], provenance: dict | None = None) -> str:
    _, detail = report(leaderboards)
    if provenance:
        detail = {**provenance, **detail}
    return json.dumps(detail, sort_keys=True, indent=1, allow_nan=False)


def trial_log_lines(leaderboards: dict[str, Leaderboard]) -> list[str]:
    lines = []
    for target in TARGETS:
        if target not in leaderboards:
            continue
        board = leaderboards[target]
        for r in sorted(board.entries + board.screened_out, key=lambda r: r.trial.trial_id):
            lines.append(json.dumps({"target": target, **r.to_dict(timing=True)}, sort_keys=True))
    return lines
