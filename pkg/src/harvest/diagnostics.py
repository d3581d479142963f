"""Reduced mode sums, beat periods and related scale estimates.

The reduced sums strip the factors that do not depend on the summed index,
so that, with the same caps,

    L / A = exp(-Omega^2/2) * R^2 * sum_l L_l q_l
          = exp(-Omega^2/2) * sum_m (L kappa_m^2 / J1(chi_m)^2) L_m

and the pre-modulus non-local values reconstruct M / A the same way with
``cos(theta)/2`` and ``p_l`` in place of ``q_l``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .correlations import symmetric_amplitude
from .errors import DomainError
from .params import CavityGeometry, DetectorPair
from .spectrum import TruncationPolicy, mode_grid, parity_weights, resolve_truncation
from .specfun import ZERO_TABLE

__all__ = [
    "ReducedKind",
    "ReducedSum",
    "reduced_radial",
    "reduced_longitudinal",
    "beat_period_radial",
    "beat_period_longitudinal",
    "beat_period_radial_approx",
    "stationary_wavenumber",
    "overlap_magnitude",
]


class ReducedKind(enum.Enum):
    RADIAL_AT_FIXED_L = "radial"
    LONGITUDINAL_AT_FIXED_M = "longitudinal"


@dataclass(frozen=True)
class ReducedSum:
    """One reduced sum; ``pre_modulus`` is the complex value before |.| for M-type sums."""

    kind: ReducedKind
    quantity: str
    fixed_index: int
    value: float
    pre_modulus: complex


def _local_kernel(omega: np.ndarray, omega_T: float) -> np.ndarray:
    # exp(-omega^2/2) * lambda with lambda = exp(-omega * Omega)
    return np.exp(-omega * (0.5 * omega + omega_T))


def reduced_radial(l: int, geom: CavityGeometry, det: DetectorPair,
                   policy: Optional[TruncationPolicy] = None) -> tuple[ReducedSum, ReducedSum]:
    """``(M_l, L_l)``: sums over m at fixed l of xi / R^2 times the time kernels."""
    if int(l) != l or l < 0:
        raise DomainError(f"l must be an integer >= 0, got {l!r}")
    l = int(l)
    report = resolve_truncation(geom, policy)
    grid = mode_grid(geom, report.max_m, max(report.max_l, l))
    weight = grid.xi[:, l] / geom.radius_ratio**2
    omega = grid.omegaT[:, l]
    m_pre = complex(np.sum(weight * symmetric_amplitude(omega, det.delay_ratio)))
    l_val = float(np.sum(weight * _local_kernel(omega, det.omega_T)))
    kind = ReducedKind.RADIAL_AT_FIXED_L
    return (ReducedSum(kind, "M", l, abs(m_pre), m_pre), ReducedSum(kind, "L", l, l_val, complex(l_val)))


def reduced_longitudinal(m: int, geom: CavityGeometry, det: DetectorPair,
                         policy: Optional[TruncationPolicy] = None) -> tuple[ReducedSum, ReducedSum]:
    """``(M_m, L_m)``: sums over l at fixed m of exp(-kappa^2/2)/(L kappa) with parity weights."""
    if int(m) != m or m < 1:
        raise DomainError(f"m must be an integer >= 1, got {m!r}")
    m = int(m)
    report = resolve_truncation(geom, policy)
    grid = mode_grid(geom, max(report.max_m, m), report.max_l)
    kappa = grid.kappa[m - 1]
    omega = grid.omegaT[m - 1]
    weight = np.exp(-0.5 * kappa * kappa) / (geom.length_ratio * kappa)
    ls = np.arange(grid.max_l + 1)
    q, p = parity_weights(ls, det.distance_ratio, geom.length_ratio)
    m_pre = complex(np.sum(weight * symmetric_amplitude(omega, det.delay_ratio) * p))
    l_val = float(np.sum(weight * _local_kernel(omega, det.omega_T) * q))
    kind = ReducedKind.LONGITUDINAL_AT_FIXED_M
    return (ReducedSum(kind, "M", m, abs(m_pre), m_pre), ReducedSum(kind, "L", m, l_val, complex(l_val)))


def _kappa(m: int, l: int, geom: CavityGeometry) -> float:
    return math.hypot(ZERO_TABLE.zero(m) / geom.radius_ratio, l * math.pi / geom.length_ratio)


def beat_period_radial(l: int, geom: CavityGeometry) -> float:
    """Beat period of the two lowest radial modes at fixed l, in units of T."""
    if int(l) != l or l < 0:
        raise DomainError(f"l must be an integer >= 0, got {l!r}")
    return 2 * math.pi / ((_kappa(2, int(l), geom) - _kappa(1, int(l), geom)) * geom.tau)


def beat_period_longitudinal(m: int, geom: CavityGeometry) -> float:
    """Beat period of l = 0 and l = 1 at fixed m, in units of T."""
    if int(m) != m or m < 1:
        raise DomainError(f"m must be an integer >= 1, got {m!r}")
    return 2 * math.pi / ((_kappa(int(m), 1, geom) - _kappa(int(m), 0, geom)) * geom.tau)


def beat_period_radial_approx(l: int, geom: CavityGeometry) -> float:
    """As :func:`beat_period_radial` but with the crude zeros chi_m ~ m*pi (comparison only)."""
    kl = l * math.pi / geom.length_ratio
    k1 = math.hypot(math.pi / geom.radius_ratio, kl)
    k2 = math.hypot(2 * math.pi / geom.radius_ratio, kl)
    return 2 * math.pi / ((k2 - k1) * geom.tau)


def stationary_wavenumber(m: int, geom: CavityGeometry, det: DetectorPair) -> float:
    """Stationary-phase wavenumber 2 (D/sigma) / ((t_BA/T) tau) * kappa_(m,0)."""
    if det.delay_ratio == 0:
        raise DomainError("the stationary wavenumber is undefined for t_BA = 0")
    return 2 * det.distance_ratio / (det.delay_ratio * geom.tau) * _kappa(m, 0, geom)


def overlap_magnitude(distance_ratio: float) -> float:
    """Overlap of two Gaussian detectors D/sigma apart: exp(-(D/sigma)^2/4)."""
    d = float(distance_ratio)
    if not math.isfinite(d) or d < 0:
        raise DomainError("distance_ratio must be finite and non-negative")
    return math.exp(-0.25 * d * d)
