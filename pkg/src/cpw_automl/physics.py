"""Quasi-TEM forward model of a conductor-on-two-layer-dielectric CPW.

The effective permittivity uses the partial-capacitance conformal mapping
for finite-thickness layers; conductor loss blends the dc and skin-effect
regimes. Everything here is pure and safe to call from several threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

C0 = 299_792_458.0
MU0 = 4e-7 * math.pi

BAND_MIN_HZ = 10e6
BAND_MAX_HZ = 20e9

_AGM_TOL = 1e-14


@dataclass(frozen=True)
class MaterialParams:
    sigma_ink: float
    eps_fs: float
    eps_ds: float
    tan_delta: float

    def __post_init__(self):
        if not self.sigma_ink > 0:
            raise ValueError(f"sigma_ink must be > 0, got {self.sigma_ink}")
        if not self.eps_fs >= 1:
            raise ValueError(f"eps_fs must be >= 1, got {self.eps_fs}")
        if not self.eps_ds >= 1:
            raise ValueError(f"eps_ds must be >= 1, got {self.eps_ds}")
        if not self.tan_delta >= 0:
            raise ValueError(f"tan_delta must be >= 0, got {self.tan_delta}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.sigma_ink, self.eps_fs, self.eps_ds, self.tan_delta)


@dataclass(frozen=True)
class CpwGeometry:
    w_center: float
    gap: float
    w_ground: float
    t_substrate: float
    t_spacer: float
    t_metal: float
    line_lengths: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "line_lengths", tuple(float(v) for v in self.line_lengths))
        for name in ("w_center", "gap", "w_ground", "t_substrate", "t_spacer", "t_metal"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if any(not v > 0 for v in self.line_lengths):
            raise ValueError("line lengths must be > 0")
        if any(b <= a for a, b in zip(self.line_lengths, self.line_lengths[1:])):
            raise ValueError("line lengths must be strictly increasing")


@dataclass(frozen=True)
class PropagationConstant:
    alpha: float
    beta: float
    frequency: float


# one (frequency, alpha, beta) observation
PropagationSample = PropagationConstant


@dataclass(frozen=True)
class EffectivePermittivity:
    eps_eff: float
    fill_substrate: float
    fill_spacer: float
    z0: float


def _agm(a: float, b: float) -> float:
    while abs(a - b) > _AGM_TOL * a:
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def _complement(k: float) -> float:
    return math.sqrt((1.0 - k) * (1.0 + k))


def _check_modulus(k: float) -> None:
    if not 0.0 <= k < 1.0:
        raise ValueError(f"elliptic modulus must lie in [0, 1), got {k}")


def ellipk(k: float) -> float:
    """Complete elliptic integral of the first kind, modulus convention."""
    _check_modulus(k)
    return math.pi / (2.0 * _agm(1.0, _complement(k)))


def ellipk_ratio(k: float) -> float:
    """Return K(k)/K(k') with k' = sqrt(1 - k^2).

    Since K(k) = pi / (2 agm(1, k')), the ratio reduces to
    agm(1, k) / agm(1, k') and needs no explicit integral.
    """
    k = float(k)
    _check_modulus(k)
    if k == 0.0:
        return 0.0
    return _agm(1.0, k) / _agm(1.0, _complement(k))


def _sinh_ratio(a: float, b: float) -> float:
    # sinh(a)/sinh(b) for 0 < a < b without overflow
    if b > 20.0:
        return math.exp(a - b) * (-math.expm1(-2.0 * a)) / (-math.expm1(-2.0 * b))
    return math.sinh(a) / math.sinh(b)


def _layer_modulus(geom: CpwGeometry, depth: float) -> float:
    a = math.pi * geom.w_center / (4.0 * depth)
    b = math.pi * (geom.w_center + 2.0 * geom.gap) / (4.0 * depth)
    return _sinh_ratio(a, b)


def _slot_modulus(geom: CpwGeometry) -> float:
    return geom.w_center / (geom.w_center + 2.0 * geom.gap)


def filling_factors(geom: CpwGeometry) -> tuple[float, float]:
    """Partial-capacitance filling factors (substrate, spacer)."""
    air = ellipk_ratio(_slot_modulus(geom))

    def q(depth: float) -> float:
        return 0.5 * ellipk_ratio(_layer_modulus(geom, depth)) / air

    q1 = q(geom.t_substrate)
    q2 = q(geom.t_substrate + geom.t_spacer) - q1
    return q1, max(q2, 0.0)


def cpw_eeff(geom: CpwGeometry, mat: MaterialParams) -> EffectivePermittivity:
    q1, q2 = filling_factors(geom)
    eps_eff = 1.0 + q1 * (mat.eps_fs - 1.0) + q2 * (mat.eps_ds - 1.0)
    k0 = _slot_modulus(geom)
    z0 = 30.0 * math.pi / math.sqrt(eps_eff) / ellipk_ratio(k0)
    return EffectivePermittivity(eps_eff=eps_eff, fill_substrate=q1, fill_spacer=q2, z0=z0)


def _effective_perimeters(geom: CpwGeometry) -> tuple[float, float]:
    """Edge-crowding effective perimeters of the strip and the ground pair.

    Conformal-mapping conductor-loss factors (Owyang-Wu form). Falls back to
    the physical perimeter when the thin-metal expansion is not valid.
    """
    w, s, t = geom.w_center, geom.gap, geom.t_metal
    k0 = _slot_modulus(geom)
    kk = ellipk(k0)
    lead = 4.0 * w * (1.0 - k0 * k0) * kk * kk
    log_k = math.log((1.0 + k0) / (1.0 - k0))
    strip = math.pi + math.log(4.0 * math.pi * w / t) - k0 * log_k
    ground = k0 * (math.pi + math.log(4.0 * math.pi * (w + 2.0 * s) / t)) - log_k

    strip_phys = 2.0 * (w + t)
    ground_phys = 4.0 * (geom.w_ground + t)
    p_strip = lead / strip if strip > 0 else strip_phys
    p_ground = lead / ground if ground > 0 else ground_phys
    return min(p_strip, strip_phys), min(p_ground, ground_phys)


def series_resistance(geom: CpwGeometry, sigma: float, freqs) -> np.ndarray:
    """Per-unit-length resistance, root-sum-square of dc and skin terms."""
    f = np.asarray(freqs, dtype=float)
    r_dc = 1.0 / (sigma * geom.t_metal * geom.w_center) + 1.0 / (2.0 * sigma * geom.t_metal * geom.w_ground)
    p_strip, p_ground = _effective_perimeters(geom)
    r_surface = np.sqrt(np.pi * f * MU0 / sigma)
    r_skin = r_surface * (1.0 / p_strip + 1.0 / p_ground)
    return np.hypot(r_dc, r_skin)


def alpha_beta(geom: CpwGeometry, mat: MaterialParams, freqs) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (alpha, beta) over a frequency array."""
    f = np.asarray(freqs, dtype=float)
    ee = cpw_eeff(geom, mat)
    beta = 2.0 * np.pi * f / C0 * math.sqrt(ee.eps_eff)
    alpha_d = 0.5 * beta * ee.fill_substrate * (mat.eps_fs / ee.eps_eff) * mat.tan_delta
    alpha_c = series_resistance(geom, mat.sigma_ink, f) / (2.0 * ee.z0)
    return alpha_c + alpha_d, beta


def conductor_attenuation(geom: CpwGeometry, mat: MaterialParams, freqs) -> np.ndarray:
    ee = cpw_eeff(geom, mat)
    return series_resistance(geom, mat.sigma_ink, freqs) / (2.0 * ee.z0)


def skin_depth(sigma: float, f: float) -> float:
    return math.sqrt(1.0 / (math.pi * f * MU0 * sigma))


def propagation(geom: CpwGeometry, mat: MaterialParams, f: float) -> PropagationConstant:
    if not f > 0:
        raise ValueError(f"frequency must be > 0, got {f}")
    alpha, beta = alpha_beta(geom, mat, np.array([f]))
    return PropagationConstant(alpha=float(alpha[0]), beta=float(beta[0]), frequency=float(f))


def sweep_curve(geom: CpwGeometry, mat: MaterialParams, freq_grid: Sequence[float]) -> list[PropagationSample]:
    f = np.asarray(freq_grid, dtype=float)
    if f.ndim != 1 or f.size == 0:
        raise ValueError("frequency grid must be a nonempty 1-D sequence")
    if np.any(np.diff(f) <= 0):
        raise ValueError("frequency grid must be strictly ascending")
    slop = 1e-9
    if f[0] < BAND_MIN_HZ * (1 - slop) or f[-1] > BAND_MAX_HZ * (1 + slop):
        raise ValueError(
            f"frequency grid [{f[0]:g}, {f[-1]:g}] Hz leaves the band "
            f"[{BAND_MIN_HZ:g}, {BAND_MAX_HZ:g}] Hz"
        )
    alpha, beta = alpha_beta(geom, mat, f)
    return [PropagationSample(alpha=float(a), beta=float(b), frequency=float(x)) for a, b, x in zip(alpha, beta, f)]


def band_grid(n: int, f_min: float = BAND_MIN_HZ, f_max: float = BAND_MAX_HZ) -> np.ndarray:
    """Linear grid including both band edges."""
    if n < 1:
        raise ValueError("need at least one frequency point")
    if n == 1:
        return np.array([f_min])
    return np.linspace(f_min, f_max, n)
