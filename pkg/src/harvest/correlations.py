"""Local and non-local detector correlations and the negativity estimator.

Values are in units of the geometry-dependent prefactor
``A = c e^2 T^2 sigma^2 / (2 eps0 hbar L R^2)``.  Multiplying by
``geometry_scale = 1 / ((L/sigma) (R/sigma)^2)`` converts to the fixed unit
``A0 = c e^2 T^2 / (2 eps0 hbar sigma)``, which is what comparisons across
cavity sizes need.

Switching amplitude
-------------------
With x = omega*T and s = t_BA/T the scaled amplitude is

    Et(x, s) = exp(-x^2/2) E(x, s) = exp(-s^2/2) w((-x + i s)/sqrt(2)),

finite for all real inputs.  Only the symmetric sum enters the non-local
term and it has a closed form needing a single Faddeeva call:

    Et(x, s) + Et(x, -s) = 2i exp(-s^2/2) Im w((-x + i|s|)/sqrt(2))
                           + 2 exp(-x^2/2) exp(-i x |s|),

so its modulus never exceeds 4.

Reduction order
---------------
Mode sums are split into per-l column sums over m, accumulated in fixed
m-chunks of ``CHUNK_ROWS`` rows added in ascending order.  Column sums depend
only on the geometry and on |t_BA| (non-local) or Omega*T (local) and are
cached, so scans over D/sigma and tilt are cheap.  Even and odd l are summed
separately and the full result is their sum, which makes parity additivity
exact.  Worker threads only evaluate chunks; the reduction order is fixed, so
results are bit-identical for any worker count.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import constants
from scipy.special import wofz

from .errors import DomainError
from .params import (
    CavityGeometry,
    DetectorPair,
    Lightcone,
    ParityFilter,
    classify_lightcone,
)
from .spectrum import (
    ModeGrid,
    TruncationPolicy,
    TruncationReport,
    _LRU,
    mode_grid,
    parity_weights,
    resolve_truncation,
)

__all__ = [
    "CHUNK_ROWS",
    "CorrelationResult",
    "amplitude_E_scaled",
    "symmetric_amplitude",
    "tilt_factor",
    "local_term",
    "nonlocal_term",
    "negativity",
    "geometry_scale",
    "prefactor_si",
]

CHUNK_ROWS = 256
_SQRT2 = math.sqrt(2.0)


def amplitude_E_scaled(omegaT, delay_ratio):
    """exp(-(omega T)^2/2) * E(omega, t_BA), evaluated without overflow."""
    x = np.asarray(omegaT, dtype=float)
    s = np.asarray(delay_ratio, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s))):
        raise DomainError("amplitude arguments must be finite")
    x, s = np.broadcast_arrays(x, s)
    neg = s < 0
    sa = np.abs(s)
    # reflect into the upper half plane; the reflected Gaussian is written
    # out exactly rather than as exp(a - z^2), which loses digits to cancellation
    w = wofz((np.where(neg, x, -x) + 1j * sa) / _SQRT2)
    out = np.exp(-0.5 * sa * sa) * w
    out = np.where(neg, 2.0 * np.exp(-0.5 * x * x + 1j * x * s) - out, out)
    if out.ndim == 0:
        return complex(out)
    return out


def symmetric_amplitude(omegaT, delay_ratio):
    """Et(omega, t) + Et(omega, -t), even in t."""
    x = np.asarray(omegaT, dtype=float)
    s = np.abs(np.asarray(delay_ratio, dtype=float))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s))):
        raise DomainError("amplitude arguments must be finite")
    w = wofz((-x + 1j * s) / _SQRT2)
    out = 2j * np.exp(-0.5 * s * s) * w.imag + 2.0 * np.exp(-0.5 * x * x - 1j * x * s)
    if out.ndim == 0:
        return complex(out)
    return out


def tilt_factor(tilt: float) -> float:
    """cos(tilt), written as sin(pi/2 - tilt) so that pi/2 gives exactly 0."""
    return math.sin(0.5 * math.pi - tilt)


def _chunk_bounds(n_rows: int) -> list[tuple[int, int]]:
    return [(a, min(a + CHUNK_ROWS, n_rows)) for a in range(0, n_rows, CHUNK_ROWS)]


def _column_sum(grid: ModeGrid, kernel, dtype, workers: int) -> np.ndarray:
    chunks = _chunk_bounds(grid.max_m)

    def part(bounds):
        a, b = bounds
        return np.sum(grid.xi[a:b] * kernel(grid.omegaT[a:b]), axis=0)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(part, chunks))
    else:
        parts = [part(c) for c in chunks]
    total = np.zeros(grid.max_l + 1, dtype=dtype)
    for p in parts:
        total += p
    total.setflags(write=False)
    return total


_LOCAL_COLUMNS = _LRU(512)
_NONLOCAL_COLUMNS = _LRU(512)


def local_columns(geom: CavityGeometry, report: TruncationReport, omega_T: float, workers: int = 1) -> np.ndarray:
    """Per-l sums over m of xi * exp(-(omega T + Omega T)^2 / 2)."""
    grid = mode_grid(geom, report.max_m, report.max_l)
    key = (geom, report.max_m, report.max_l, float(omega_T))

    def build():
        return _column_sum(grid, lambda w: np.exp(-0.5 * (w + omega_T) ** 2), float, workers)

    return _LOCAL_COLUMNS.get(key, build)


def nonlocal_columns(geom: CavityGeometry, report: TruncationReport, delay_ratio: float,
                     workers: int = 1) -> np.ndarray:
    """Per-l sums over m of xi * (Et(omega, t) + Et(omega, -t))."""
    grid = mode_grid(geom, report.max_m, report.max_l)
    s = abs(float(delay_ratio))
    key = (geom, report.max_m, report.max_l, s)

    def build():
        return _column_sum(grid, lambda w: symmetric_amplitude(w, s), complex, workers)

    return _NONLOCAL_COLUMNS.get(key, build)


def _parity_split(columns: np.ndarray, weights: np.ndarray):
    weighted = columns * weights
    return np.sum(weighted[0::2]), np.sum(weighted[1::2])


def _select(even, odd, filt: ParityFilter):
    if filt is ParityFilter.EVEN:
        return even
    if filt is ParityFilter.ODD:
        return odd
    return even + odd


def _prepare(geom: CavityGeometry, det: DetectorPair, policy: Optional[TruncationPolicy]):
    geom.check_detectors(det)
    report = resolve_truncation(geom, policy)
    ls = np.arange(report.max_l + 1)
    q, p = parity_weights(ls, det.distance_ratio, geom.length_ratio)
    return report, q, p


def _local_parts(geom, det, report, q, workers):
    return _parity_split(local_columns(geom, report, det.omega_T, workers), q)


def _nonlocal_parts(geom, det, report, p, workers):
    even, odd = _parity_split(nonlocal_columns(geom, report, det.delay_ratio, workers), p)
    # the tilt goes on each parity part so that All = Even + Odd stays exact
    envelope = tilt_factor(det.tilt) * 0.5 * math.exp(-0.5 * det.omega_T**2)
    return envelope * even, envelope * odd


def local_term(geom: CavityGeometry, det: DetectorPair, filt=ParityFilter.ALL,
               policy: Optional[TruncationPolicy] = None, workers: int = 1) -> float:
    """Local correlations L / A."""
    filt = ParityFilter.parse(filt)
    report, q, _ = _prepare(geom, det, policy)
    even, odd = _local_parts(geom, det, report, q, workers)
    return float(_select(even, odd, filt))


def nonlocal_term(geom: CavityGeometry, det: DetectorPair, filt=ParityFilter.ALL,
                  policy: Optional[TruncationPolicy] = None, workers: int = 1) -> complex:
    """Non-local correlations M / A (complex)."""
    filt = ParityFilter.parse(filt)
    report, _, p = _prepare(geom, det, policy)
    even, odd = _nonlocal_parts(geom, det, report, p, workers)
    return complex(_select(even, odd, filt))


def geometry_scale(geom: CavityGeometry) -> float:
    """Ratio of the prefactor A to the geometry-free unit A0."""
    return 1.0 / (geom.length_ratio * geom.radius_ratio**2)


def prefactor_si(switching_time: float, sigma: float, length: float, radius: float) -> float:
    """The prefactor A in metres for SI inputs (seconds and metres)."""
    for name, value in (("switching_time", switching_time), ("sigma", sigma), ("length", length), ("radius", radius)):
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"{name} must be finite and positive")
    c, e, eps0, hbar = constants.c, constants.e, constants.epsilon_0, constants.hbar
    return c * e**2 * switching_time**2 * sigma**2 / (2 * eps0 * hbar * length * radius**2)


@dataclass(frozen=True)
class CorrelationResult:
    """Local and non-local terms with the resulting negativity (units of A)."""

    local: float
    non_local: complex
    estimator: float
    negativity: float
    truncation: TruncationReport
    lightcone: Lightcone
    filter: ParityFilter
    geometry_scale: float

    def to_dict(self, digits: Optional[int] = None) -> dict:
        def num(v):
            return float(f"{v:.{digits}g}") if digits else float(v)

        return {
            "local": num(self.local),
            "nonlocal": {"re": num(self.non_local.real), "im": num(self.non_local.imag),
                         "abs": num(abs(self.non_local))},
            "estimator": num(self.estimator),
            "negativity": num(self.negativity),
            "lightcone": self.lightcone.value,
            "filter": self.filter.value,
            "geometry_scale": num(self.geometry_scale),
            "truncation": self.truncation.to_dict(),
        }

    def to_json(self, digits: Optional[int] = 12) -> str:
        return json.dumps(self.to_dict(digits), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "CorrelationResult":
        nl = data["nonlocal"]
        return cls(
            local=float(data["local"]),
            non_local=complex(nl["re"], nl["im"]),
            estimator=float(data["estimator"]),
            negativity=float(data["negativity"]),
            truncation=TruncationReport(**data["truncation"]),
            lightcone=Lightcone(data["lightcone"]),
            filter=ParityFilter(data["filter"]),
            geometry_scale=float(data["geometry_scale"]),
        )


def negativity(geom: CavityGeometry, det: DetectorPair, filt=ParityFilter.ALL,
               policy: Optional[TruncationPolicy] = None, workers: int = 1) -> CorrelationResult:
    """Evaluate both correlation terms and the negativity estimator."""
    filt = ParityFilter.parse(filt)
    report, q, p = _prepare(geom, det, policy)
    local = float(_select(*_local_parts(geom, det, report, q, workers), filt))
    non_local = complex(_select(*_nonlocal_parts(geom, det, report, p, workers), filt))
    estimator = abs(non_local) - local
    return CorrelationResult(
        local=local,
        non_local=non_local,
        estimator=estimator,
        negativity=max(0.0, estimator),
        truncation=report,
        lightcone=classify_lightcone(geom.tau, det.delay_ratio, det.distance_ratio),
        filter=filt,
        geometry_scale=geometry_scale(geom),
    )


def clear_caches() -> None:
    _LOCAL_COLUMNS.clear()
    _NONLOCAL_COLUMNS.clear()
