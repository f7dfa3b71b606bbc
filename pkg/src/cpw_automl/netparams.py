"""Two-port network parameters and multiline propagation-constant extraction."""
from __future__ import annotations

import cmath
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

_SINGULAR_S21 = 1e-12


class SingularConversionError(ValueError):
    pass


class TouchstoneError(ValueError):
    def __init__(self, message: str, path=None, lineno: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}"
        super().__init__(f"{where}: {message}" if where else message)
        self.lineno = lineno


@dataclass(frozen=True)
class TwoPortRecord:
    frequency: float
    s11: complex
    s12: complex
    s21: complex
    s22: complex

    def matrix(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s21, self.s22]], dtype=complex)


@dataclass(frozen=True)
class CascadeMatrix:
    m11: complex
    m12: complex
    m21: complex
    m22: complex
    frequency: float

    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m21, self.m22]], dtype=complex)

    @classmethod
    def from_array(cls, m: np.ndarray, frequency: float) -> "CascadeMatrix":
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]), float(frequency))

    def det(self) -> complex:
        return self.m11 * self.m22 - self.m12 * self.m21


@dataclass(frozen=True)
class GammaTrace:
    frequency: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequency, dtype=float)
        g = np.asarray(self.gamma, dtype=complex)
        if f.shape != g.shape or f.ndim != 1:
            raise ValueError("frequency and gamma must be 1-D arrays of equal length")
        if np.any(np.diff(f) <= 0):
            raise ValueError("gamma trace frequencies must be strictly increasing")
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "gamma", g)

    @property
    def alpha(self) -> np.ndarray:
        return self.gamma.real

    @property
    def beta(self) -> np.ndarray:
        return self.gamma.imag

    def __len__(self):
        return self.frequency.size


def s_to_m(rec: TwoPortRecord) -> CascadeMatrix:
    s11, s12, s21, s22 = rec.s11, rec.s12, rec.s21, rec.s22
    scale = max(1.0, abs(s11), abs(s12), abs(s22))
    if abs(s21) <= _SINGULAR_S21 * scale:
        raise SingularConversionError(f"|S21| too small for cascade conversion at {rec.frequency:g} Hz")
    return CascadeMatrix(
        m11=(s12 * s21 - s11 * s22) / s21,
        m12=s11 / s21,
        m21=-s22 / s21,
        m22=1.0 / s21,
        frequency=rec.frequency,
    )


def m_to_s(m: CascadeMatrix) -> TwoPortRecord:
    if m.m22 == 0:
        raise SingularConversionError(f"M22 = 0 at {m.frequency:g} Hz")
    s21 = 1.0 / m.m22
    s11 = m.m12 * s21
    s22 = -m.m21 * s21
    s12 = m.m11 + s11 * s22 / s21
    return TwoPortRecord(m.frequency, s11=s11, s12=s12, s21=s21, s22=s22)


def line_pair_matrix(mi: CascadeMatrix, mj: CascadeMatrix) -> np.ndarray:
    """Mj @ inv(Mi); raises on a singular Mi."""
    if not math.isclose(mi.frequency, mj.frequency, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(f"line pair frequencies differ: {mi.frequency:g} vs {mj.frequency:g} Hz")
    det = mi.det()
    if det == 0 or not cmath.isfinite(det):
        raise SingularConversionError(f"singular cascade matrix at {mi.frequency:g} Hz")
    inv = np.array([[mi.m22, -mi.m12], [-mi.m21, mi.m11]], dtype=complex) / det
    return mj.matrix() @ inv


def eig_pair(mi: CascadeMatrix, mj: CascadeMatrix) -> tuple[complex, complex]:
    """Eigenvalues of Mj Mi^-1, smaller magnitude first."""
    m = line_pair_matrix(mi, mj)
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    trace = a + d
    root = cmath.sqrt((a - d) ** 2 + 4.0 * b * c)
    # take the sign that avoids cancellation, then recover the partner from det
    big = 0.5 * (trace + root) if abs(trace + root) >= abs(trace - root) else 0.5 * (trace - root)
    det = a * d - b * c
    small = det / big if big != 0 else 0.5 * (trace - root)
    if abs(small) > abs(big):
        small, big = big, small
    return complex(small), complex(big)


def gamma_from_pair(lam: complex, dl: float, phase_hint: float | None = None) -> complex:
    """Propagation constant from the forward eigenvalue of a line pair.

    ``phase_hint`` is the expected total phase beta*dl in radians; the
    branch of the complex log nearest to it is taken.
    """
    if dl == 0:
        raise ValueError("line length difference must be nonzero")
    if lam == 0:
        raise ValueError("eigenvalue is zero; propagation constant undefined")
    lam = complex(lam)
    phase = -cmath.phase(lam)
    if phase_hint is not None:
        phase += 2.0 * math.pi * round((phase_hint - phase) / (2.0 * math.pi))
    return complex(-math.log(abs(lam)), phase) / dl


def multiline_gamma(lines: Sequence[tuple[float, Sequence[TwoPortRecord]]]) -> GammaTrace:
    """Weighted multiline estimate of gamma(f) from every line pair.

    Pairs are weighted by the squared length difference. Phase is
    unwrapped from the longest pair at the lowest frequency and carried
    up the grid as a hint scaled linearly with frequency.
    """
    if len(lines) < 2:
        raise ValueError("need at least two lines")
    ordered = sorted(((float(length), list(recs)) for length, recs in lines), key=lambda x: x[0])
    lengths = [length for length, _ in ordered]
    if len(set(lengths)) != len(lengths):
        raise ValueError("line lengths must be distinct")
    freqs = np.array([r.frequency for r in ordered[0][1]], dtype=float)
    for length, recs in ordered[1:]:
        f = np.array([r.frequency for r in recs], dtype=float)
        if f.shape != freqs.shape or not np.allclose(f, freqs, rtol=1e-12, atol=0.0):
            raise ValueError(f"line of length {length:g} m is on a different frequency grid")
    if freqs.size == 0:
        raise ValueError("empty frequency grid")

    cascades = [[s_to_m(r) for r in recs] for _, recs in ordered]
    pairs = list(itertools.combinations(range(len(ordered)), 2))
    pairs.sort(key=lambda p: (-(lengths[p[1]] - lengths[p[0]]), p))
    gammas = np.empty(freqs.size, dtype=complex)
    beta_prev = None
    for k, f in enumerate(freqs):
        hint_beta = None if beta_prev is None else beta_prev * f / freqs[k - 1]
        num = 0j
        den = 0.0
        for i, j in pairs:
            dl = lengths[j] - lengths[i]
            try:
                lam, _ = eig_pair(cascades[i][k], cascades[j][k])
                hint = None if hint_beta is None else hint_beta * dl
                g = gamma_from_pair(lam, dl, hint)
            except (ValueError, ZeroDivisionError) as exc:
                log.warning("dropping line pair (%d, %d) at %g Hz: %s", i, j, f, exc)
                continue
            if hint_beta is None:
                # longest pair on the principal branch seeds everything else
                hint_beta = g.imag
            num += dl * dl * g
            den += dl * dl
        if den == 0.0:
            raise ValueError(f"no line pair survived at {f:g} Hz")
        gammas[k] = num / den
        beta_prev = gammas[k].imag
    return GammaTrace(frequency=freqs, gamma=gammas)


def dc_conductivity(l: float, r: float, a: float) -> float:
    """Conductivity from the dc resistance of a conductor of length l and cross-section a."""
    if not (l > 0 and r > 0 and a > 0):
        raise ValueError(f"length, resistance and area must be > 0, got l={l}, r={r}, a={a}")
    return l / (r * a)


def ideal_line_records(gamma: np.ndarray, freqs: np.ndarray, length: float) -> list[TwoPortRecord]:
    """Matched, reciprocal line S-parameters for a given gamma(f)."""
    t = np.exp(-np.asarray(gamma, dtype=complex) * length)
    return [TwoPortRecord(float(f), 0j, complex(x), complex(x), 0j) for f, x in zip(freqs, t)]


# --- Touchstone v1 -----------------------------------------------------------

_UNITS = {"HZ": 1.0, "KHZ": 1e3, "MHZ": 1e6, "GHZ": 1e9}
_FORMATS = ("RI", "MA", "DB")


@dataclass(frozen=True)
class TouchstoneOptions:
    unit: str = "GHZ"
    fmt: str = "MA"
    z0: float = 50.0


def _parse_option_line(line: str, path, lineno: int) -> TouchstoneOptions:
    tokens = line[1:].upper().split()
    unit, fmt, z0 = "GHZ", "MA", 50.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in _UNITS:
            unit = tok
        elif tok in _FORMATS:
            fmt = tok
        elif tok == "S":
            pass
        elif tok in ("Y", "Z", "H", "G"):
            raise TouchstoneError(f"parameter type {tok} not supported, only S", path, lineno)
        elif tok == "R":
            if i + 1 >= len(tokens):
                raise TouchstoneError("option line 'R' without a value", path, lineno)
            try:
                z0 = float(tokens[i + 1])
            except ValueError:
                raise TouchstoneError(f"bad reference resistance {tokens[i + 1]!r}", path, lineno) from None
            i += 1
        else:
            raise TouchstoneError(f"unrecognized option token {tok!r}", path, lineno)
        i += 1
    return TouchstoneOptions(unit=unit, fmt=fmt, z0=z0)


def _pair_to_complex(x: float, y: float, fmt: str) -> complex:
    if fmt == "RI":
        return complex(x, y)
    mag = x if fmt == "MA" else 10.0 ** (x / 20.0)
    return cmath.rect(mag, math.radians(y))


def read_touchstone(path) -> list[TwoPortRecord]:
    path = Path(path)
    options = None
    records: list[TwoPortRecord] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("!", 1)[0].strip()
            if not line:
                continue
            if line.startswith("#"):
                if options is not None:
                    raise TouchstoneError("duplicate option line", path, lineno)
                options = _parse_option_line(line, path, lineno)
                continue
            if line.startswith("["):
                raise TouchstoneError("Touchstone v2 keywords are not supported", path, lineno)
            if options is None:
                options = TouchstoneOptions()
            tokens = line.split()
            if len(tokens) != 9:
                raise TouchstoneError(f"expected 9 columns for a two-port row, got {len(tokens)}", path, lineno)
            try:
                values = [float(t) for t in tokens]
            except ValueError as exc:
                raise TouchstoneError(f"non-numeric value: {exc}", path, lineno) from None
            f = values[0] * _UNITS[options.unit]
            if records and f <= records[-1].frequency:
                raise TouchstoneError("frequencies must be strictly increasing", path, lineno)
            s11, s21, s12, s22 = (
                _pair_to_complex(values[1 + 2 * p], values[2 + 2 * p], options.fmt) for p in range(4)
            )
            records.append(TwoPortRecord(f, s11=s11, s12=s12, s21=s21, s22=s22))
    if not records:
        raise TouchstoneError("no data rows", path)
    return records


def write_touchstone(path, records: Iterable[TwoPortRecord], z0: float = 50.0, comment: str | None = None) -> None:
    """Write RI / Hz two-port data with round-trip-exact floats."""
    lines = []
    if comment:
        lines.extend("! " + c for c in comment.splitlines())
    lines.append(f"# HZ S RI R {z0:g}")
    for r in records:
        cols = [r.frequency]
        for s in (r.s11, r.s21, r.s12, r.s22):
            cols.extend((s.real, s.imag))
        lines.append(" ".join(repr(float(c)) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- gamma CSV ---------------------------------------------------------------

GAMMA_HEADER = ("freq_hz", "alpha_np_m", "beta_rad_m")


def gamma_to_csv(trace: GammaTrace, path=None) -> str:
    rows = [",".join(GAMMA_HEADER)]
    for f, a, b in zip(trace.frequency.tolist(), trace.alpha.tolist(), trace.beta.tolist()):
        rows.append(f"{f!r},{a!r},{b!r}")
    text = "\n".join(rows) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8", newline="")
    return text


def gamma_from_csv(path) -> GammaTrace:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or tuple(c.strip() for c in lines[0].split(",")) != GAMMA_HEADER:
        raise ValueError(f"{path}: expected header {','.join(GAMMA_HEADER)}")
    data = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            data.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not data:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(data)
    return GammaTrace(arr[:, 0], arr[:, 1] + 1j * arr[:, 2])
