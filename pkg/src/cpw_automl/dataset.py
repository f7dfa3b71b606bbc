"""Supervised dataset: (frequency, alpha, beta) -> material parameters."""
from __future__ import annotations

import csv
import enum
import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import physics
from .fixture import PRINTED_CPW
from .physics import CpwGeometry, MaterialParams

TARGETS = ("sigma_ink", "eps_fs", "eps_ds", "tan_delta")
INPUTS = ("freq_hz", "alpha_np_m", "beta_rad_m")
CSV_HEADER = INPUTS + TARGETS + ("provenance",)

GRID, AUGMENTED = 0, 1
_PROVENANCE_NAMES = {GRID: "grid", AUGMENTED: "augmented"}
_PROVENANCE_CODES = {v: k for k, v in _PROVENANCE_NAMES.items()}

DEFAULT_SIZE = 47_200


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ParamRange:
    min: float
    max: float
    count: int

    def __post_init__(self):
        if not self.min < self.max:
            raise ConfigError(f"range needs min < max, got [{self.min}, {self.max}]")
        if self.count < 1:
            raise ConfigError(f"count must be >= 1, got {self.count}")

    def cell(self, i: int) -> tuple[float, float]:
        width = (self.max - self.min) / self.count
        return self.min + i * width, self.min + (i + 1) * width


def default_ranges() -> dict[str, ParamRange]:
    return {
        "sigma_ink": ParamRange(1e7, 5e7, 5),
        "eps_fs": ParamRange(2.0, 4.5, 5),
        "eps_ds": ParamRange(1.0, 3.0, 4),
        "tan_delta": ParamRange(0.002, 0.03, 4),
    }


@dataclass(frozen=True)
class SweepConfig:
    """Factorial sweep; with ``jitter`` each combination is drawn inside its grid cell."""

    geometry: CpwGeometry = PRINTED_CPW
    ranges: dict[str, ParamRange] = field(default_factory=default_ranges)
    freq_points: int = 118
    f_min: float = physics.BAND_MIN_HZ
    f_max: float = physics.BAND_MAX_HZ
    seed: int = 0
    jitter: bool = True
    declared_size: int | None = DEFAULT_SIZE

    def __post_init__(self):
        if set(self.ranges) != set(TARGETS):
            raise ConfigError(f"ranges must cover exactly {TARGETS}, got {sorted(self.ranges)}")
        if self.freq_points < 1:
            raise ConfigError("freq_points must be >= 1")
        if not 0 < self.f_min < self.f_max or self.f_max > physics.BAND_MAX_HZ or self.f_min < physics.BAND_MIN_HZ:
            raise ConfigError(f"frequency span [{self.f_min:g}, {self.f_max:g}] must lie inside the measurement band")
        if self.declared_size is not None and self.size != self.declared_size:
            raise ConfigError(
                f"{self.n_combinations} combinations x {self.freq_points} frequencies = {self.size} rows, "
                f"but the declared dataset size is {self.declared_size}"
            )

    @property
    def n_combinations(self) -> int:
        return math.prod(self.ranges[t].count for t in TARGETS)

    @property
    def size(self) -> int:
        return self.n_combinations * self.freq_points

    def frequencies(self) -> np.ndarray:
        return physics.band_grid(self.freq_points, self.f_min, self.f_max)


@dataclass(frozen=True)
class DataRow:
    frequency: float
    alpha: float
    beta: float
    sigma_ink: float
    eps_fs: float
    eps_ds: float
    tan_delta: float
    provenance: str


@dataclass
class Dataset:
    inputs: np.ndarray  # (n, 3): frequency, alpha, beta
    targets: np.ndarray  # (n, 4) in TARGETS order
    provenance: np.ndarray  # (n,) int8

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float).reshape(-1, 3)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 4)
        self.provenance = np.asarray(self.provenance, dtype=np.int8).ravel()
        if not (self.inputs.shape[0] == self.targets.shape[0] == self.provenance.size):
            raise ValueError("column lengths differ")

    def __len__(self):
        return self.inputs.shape[0]

    def take(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx], self.provenance[idx])

    @staticmethod
    def concat(parts) -> "Dataset":
        parts = list(parts)
        return Dataset(
            np.concatenate([p.inputs for p in parts]),
            np.concatenate([p.targets for p in parts]),
            np.concatenate([p.provenance for p in parts]),
        )

    def target(self, name: str) -> np.ndarray:
        return self.targets[:, TARGETS.index(name)]

    def groups(self) -> np.ndarray:
        """Group id per row: rows with identical material parameters share a group."""
        _, first, inverse = np.unique(self.targets, axis=0, return_index=True, return_inverse=True)
        # renumber by first appearance so ids follow row order
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        return rank[inverse.ravel()]

    def rows(self) -> Iterator[DataRow]:
        for x, t, p in zip(self.inputs, self.targets, self.provenance):
            yield DataRow(*map(float, x), *map(float, t), _PROVENANCE_NAMES[int(p)])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for x, t, p in zip(self.inputs.tolist(), self.targets.tolist(), self.provenance.tolist()):
            buf.write(",".join(repr(v) for v in x + t) + "," + _PROVENANCE_NAMES[p] + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with Path(path).open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {header}, expected {CSV_HEADER}")
            values, prov = [], []
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(CSV_HEADER):
                    raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
                try:
                    values.append([float(v) if v else math.nan for v in rec[:7]])
                    prov.append(_PROVENANCE_CODES[rec[7]])
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        arr = np.array(values, dtype=float).reshape(-1, 7)
        return cls(arr[:, :3], arr[:, 3:], np.array(prov, dtype=np.int8))


def parameter_grid(config: SweepConfig) -> np.ndarray:
    """(n_combinations, 4) material parameters in combination order."""
    rng = np.random.default_rng(config.seed)
    ranges = [config.ranges[t] for t in TARGETS]
    combos = list(itertools.product(*(range(r.count) for r in ranges)))
    out = np.empty((len(combos), 4))
    for c, cells in enumerate(combos):
        for p, (r, i) in enumerate(zip(ranges, cells)):
            lo, hi = r.cell(i)
            out[c, p] = rng.uniform(lo, hi) if config.jitter else 0.5 * (lo + hi)
    return out


def generate(config: SweepConfig) -> Dataset:
    freqs = config.frequencies()
    params = parameter_grid(config)
    nf = freqs.size
    inputs = np.empty((params.shape[0] * nf, 3))
    for c, p in enumerate(params):
        alpha, beta = physics.alpha_beta(config.geometry, MaterialParams(*p), freqs)
        block = slice(c * nf, (c + 1) * nf)
        inputs[block, 0] = freqs
        inputs[block, 1] = alpha
        inputs[block, 2] = beta
    targets = np.repeat(params, nf, axis=0)
    return Dataset(inputs, targets, np.zeros(len(targets), dtype=np.int8))


def clean(ds: Dataset) -> Dataset:
    """Drop rows with non-finite fields and exact duplicates, keeping first occurrences in order."""
    finite = np.isfinite(ds.inputs).all(axis=1) & np.isfinite(ds.targets).all(axis=1)
    kept = np.flatnonzero(finite)
    if kept.size == 0:
        return ds.take(kept)
    table = np.column_stack([ds.inputs[kept], ds.targets[kept], ds.provenance[kept]]) + 0.0  # folds -0.0 into 0.0
    _, first = np.unique(table, axis=0, return_index=True)
    return ds.take(kept[np.sort(first)])


def augment(ds: Dataset, noise_rel: float, multiplier: int, seed: int) -> Dataset:
    """Append ``multiplier`` copies of every row with alpha, beta jittered by relative Gaussian noise."""
    if noise_rel < 0:
        raise ValueError("noise_rel must be >= 0")
    if multiplier < 0:
        raise ValueError("multiplier must be >= 0")
    if multiplier == 0 or len(ds) == 0:
        return ds
    rng = np.random.default_rng(seed)
    copies = [ds]
    for _ in range(multiplier):
        inputs = ds.inputs.copy()
        inputs[:, 1:] *= 1.0 + noise_rel * rng.standard_normal((len(ds), 2))
        copies.append(Dataset(inputs, ds.targets.copy(), np.full(len(ds), AUGMENTED, dtype=np.int8)))
    return Dataset.concat(copies)


class PartitionScheme(str, enum.Enum):
    P75_20_5 = "P75_20_5"
    P90_5_5 = "P90_5_5"

    @property
    def fractions(self) -> tuple[float, float, float]:
        """(train, validation, test)"""
        return {"P75_20_5": (0.75, 0.20, 0.05), "P90_5_5": (0.90, 0.05, 0.05)}[self.value]


@dataclass(frozen=True)
class Partition:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    scheme: PartitionScheme
    group_counts: tuple[int, int, int]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def partition(ds: Dataset, scheme, seed: int, groups: np.ndarray | None = None) -> Partition:
    """Group-wise seeded split; a parameter combination never spans two splits."""
    scheme = PartitionScheme(scheme)
    if len(ds) < 20:
        raise ValueError(f"need at least 20 rows to partition, got {len(ds)}")
    groups = ds.groups() if groups is None else np.asarray(groups)
    n_groups = int(groups.max()) + 1
    _, f_val, f_test = scheme.fractions
    n_val = _round_half_up(n_groups * f_val)
    n_test = _round_half_up(n_groups * f_test)
    n_train = n_groups - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"{n_groups} parameter combinations are too few for scheme {scheme.value}")
    perm = np.random.default_rng(seed).permutation(n_groups)
    split_of_group = np.empty(n_groups, dtype=np.int8)
    split_of_group[perm[:n_train]] = 0
    split_of_group[perm[n_train:n_train + n_val]] = 1
    split_of_group[perm[n_train + n_val:]] = 2
    split = split_of_group[groups]
    return Partition(
        train=np.flatnonzero(split == 0),
        validation=np.flatnonzero(split == 1),
        test=np.flatnonzero(split == 2),
        scheme=scheme,
        group_counts=(n_train, n_val, n_test),
    )
