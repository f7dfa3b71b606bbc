"""Inverse characterization from a measured propagation constant, plus forward verification."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import trim_mean

from . import physics
from .dataset import TARGETS
from .features import FeaturePipeline
from .fixture import VERIFY_THRESHOLD_NP_M
from .models import RegressionModel
from .netparams import GammaTrace, TwoPortRecord, ideal_line_records
from .physics import CpwGeometry, MaterialParams

TRIM_FRACTION = 0.10
AGGREGATION = "trimmed_mean_10pct"
_BAND_SLOP = 1e-9
# lower edge of the physical domain; regressors may extrapolate slightly past it
_PHYSICAL_FLOOR = {"sigma_ink": 1.0, "eps_fs": 1.0, "eps_ds": 1.0, "tan_delta": 0.0}


class OutOfBandWarning(UserWarning):
    pass


def trimmed_mean(values, proportion: float = TRIM_FRACTION) -> float:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot aggregate an empty trace")
    # sorting first makes the result independent of input order, bit for bit
    return float(trim_mean(np.sort(v), proportion))


def iqr(values) -> float:
    q1, q3 = np.percentile(np.asarray(values, dtype=float), [25, 75])
    return float(q3 - q1)


@dataclass
class MaterialEstimate:
    frequency: np.ndarray
    traces: dict[str, np.ndarray]
    aggregates: dict[str, float]
    dispersion: dict[str, float]
    in_band: np.ndarray
    method: str = AGGREGATION
    warnings: list[str] = field(default_factory=list)

    @property
    def params(self) -> MaterialParams:
        return MaterialParams(**{t: self.aggregates[t] for t in TARGETS})

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "frequency_hz": self.frequency.tolist(),
            "in_band": self.in_band.tolist(),
            "traces": {t: self.traces[t].tolist() for t in TARGETS},
            "aggregates": {t: self.aggregates[t] for t in TARGETS},
            "iqr": {t: self.dispersion[t] for t in TARGETS},
            "warnings": list(self.warnings),
        }


@dataclass
class VerificationReport:
    frequency: np.ndarray
    simulated_alpha: np.ndarray
    measured_alpha: np.ndarray
    residual: np.ndarray
    threshold: float

    @property
    def max_residual(self) -> float:
        return float(self.residual.max())

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.threshold

    def to_dict(self) -> dict:
        return {
            "threshold_np_m": self.threshold,
            "max_residual_np_m": self.max_residual,
            "passed": self.passed,
            "frequency_hz": self.frequency.tolist(),
            "simulated_alpha_np_m": self.simulated_alpha.tolist(),
            "measured_alpha_np_m": self.measured_alpha.tolist(),
            "residual_np_m": self.residual.tolist(),
        }


def _band_mask(freq: np.ndarray, band: tuple[float, float]) -> np.ndarray:
    lo, hi = band
    return (freq >= lo * (1 - _BAND_SLOP)) & (freq <= hi * (1 + _BAND_SLOP))


def extract(gamma: GammaTrace, pipeline: FeaturePipeline, models: Mapping[str, RegressionModel]) -> MaterialEstimate:
    """Predict every target at every frequency, then aggregate the in-band rows."""
    if len(gamma) == 0:
        raise ValueError("empty propagation-constant trace")
    missing = [t for t in TARGETS if t not in models]
    if missing:
        raise ValueError(f"no model for target(s) {missing}")
    in_band = _band_mask(gamma.frequency, pipeline.freq_range)
    notes = []
    if not in_band.any():
        raise ValueError(
            f"all {len(gamma)} frequencies lie outside the training band "
            f"[{pipeline.freq_range[0]:g}, {pipeline.freq_range[1]:g}] Hz"
        )
    if not in_band.all():
        msg = (f"{int((~in_band).sum())} of {len(gamma)} frequencies lie outside the training band "
               f"[{pipeline.freq_range[0]:g}, {pipeline.freq_range[1]:g}] Hz and are left out of the aggregate")
        warnings.warn(msg, OutOfBandWarning, stacklevel=2)
        notes.append(msg)
    X = pipeline.transform(np.column_stack([gamma.frequency, gamma.alpha, gamma.beta]))
    traces, aggregates, spread = {}, {}, {}
    for t in TARGETS:
        trace = models[t].predict(X)
        traces[t] = trace
        agg = trimmed_mean(trace[in_band])
        if agg < _PHYSICAL_FLOOR[t]:
            notes.append(f"{t} aggregate {agg:.6g} clamped to physical floor {_PHYSICAL_FLOOR[t]:g}")
            agg = _PHYSICAL_FLOOR[t]
        aggregates[t] = agg
        spread[t] = iqr(trace[in_band])
    return MaterialEstimate(gamma.frequency.copy(), traces, aggregates, spread, in_band, warnings=notes)


def verify(estimate: MaterialEstimate, geom: CpwGeometry, measured: GammaTrace,
           threshold: float = VERIFY_THRESHOLD_NP_M) -> VerificationReport:
    """Re-simulate alpha with the aggregated parameters on the measurement grid."""
    if not all(math.isfinite(v) for v in estimate.aggregates.values()):
        raise ValueError("estimate has non-finite aggregates")
    curve = physics.sweep_curve(geom, estimate.params, measured.frequency)
    sim = np.array([s.alpha for s in curve])
    return VerificationReport(
        frequency=measured.frequency.copy(),
        simulated_alpha=sim,
        measured_alpha=measured.alpha.copy(),
        residual=np.abs(sim - measured.alpha),
        threshold=float(threshold),
    )


def compare_table(estimate: MaterialEstimate, reference: MaterialParams) -> dict:
    """Reference vs predicted values with relative errors |pred - ref| / ref."""
    rows = []
    for t, ref in zip(TARGETS, reference.as_tuple()):
        pred = estimate.aggregates[t]
        rows.append({"parameter": t, "measured": ref, "predicted": pred, "relative_error": abs(pred - ref) / abs(ref)})
    return {"rows": rows}


def compare_markdown(table: dict) -> str:
    lines = ["| Parameter | Measured | Predicted | Relative error |", "|---|---:|---:|---:|"]
    for r in table["rows"]:
        lines.append(f"| {r['parameter']} | {r['measured']:.4g} | {r['predicted']:.4g} | {100 * r['relative_error']:.2f}% |")
    return "\n".join(lines)


def trace_csv(estimate: MaterialEstimate) -> str:
    """Plot data: per-frequency predictions of every target."""
    out = ["freq_hz," + ",".join(TARGETS) + ",in_band"]
    for i, f in enumerate(estimate.frequency.tolist()):
        vals = [repr(float(estimate.traces[t][i])) for t in TARGETS]
        out.append(",".join([repr(f), *vals, str(int(estimate.in_band[i]))]))
    return "\n".join(out) + "\n"


def residual_csv(report: VerificationReport) -> str:
    """Plot data: measured vs re-simulated attenuation."""
    out = ["freq_hz,measured_alpha_np_m,simulated_alpha_np_m,residual_np_m"]
    for row in zip(report.frequency.tolist(), report.measured_alpha.tolist(),
                   report.simulated_alpha.tolist(), report.residual.tolist()):
        out.append(",".join(repr(v) for v in row))
    return "\n".join(out) + "\n"


def synthesize_lines(geom: CpwGeometry, mat: MaterialParams, freqs, noise: float = 0.0,
                     seed: int = 0) -> list[tuple[float, list]]:
    """Ideal line S-parameters for every fixture length, with optional complex Gaussian noise on each entry."""
    if noise < 0:
        raise ValueError("noise must be >= 0")
    freqs = np.asarray(freqs, dtype=float)
    alpha, beta = physics.alpha_beta(geom, mat, freqs)
    gamma = alpha + 1j * beta
    rng = np.random.default_rng(seed)
    lines = []
    for length in geom.line_lengths:
        recs = ideal_line_records(gamma, freqs, length)
        if noise > 0:
            z = noise * (rng.standard_normal((len(recs), 4)) + 1j * rng.standard_normal((len(recs), 4))) / math.sqrt(2)
            recs = [TwoPortRecord(r.frequency, r.s11 + e[0], r.s12 + e[1], r.s21 + e[2], r.s22 + e[3])
                    for r, e in zip(recs, z)]
        lines.append((float(length), recs))
    return lines
