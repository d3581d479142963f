"""Brute-force quadrature checks of the closed-form correlation terms.

Everything here is deliberately independent of the fast path: time and space
integrals are done with adaptive Gauss-Kronrod quadrature
(:func:`scipy.integrate.quad`), Bessel values and zeros come from
:mod:`scipy.special` rather than :mod:`harvest.specfun`, and no Faddeeva
function is used.  Infinite time ranges are cut at +-8 T and the radial range
at min(R, 8 sigma).

Per mode, the local and non-local terms factor as

    local     = N_j * (S_A / C)^2 * |T_loc|^2 / pi
    non-local = cos(theta) * N_j * (S_A S_B / C^2) * (I(t) + I(-t)) / pi

with N_j = kappa_m^2 / (J1(chi_m)^2 kappa) the mode normalisation,
S_alpha the smearing/mode overlap at detector alpha, C = 2 pi sqrt(pi) / 4,
T_loc the single-detector time integral and I the time-ordered double
integral.  All of S, T and I are computed numerically.
"""
from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special
from scipy.integrate import IntegrationWarning, quad

from .correlations import negativity, symmetric_amplitude, tilt_factor
from .errors import DomainError, OracleError
from .params import CavityGeometry, DetectorPair, ParityFilter
from .spectrum import ModeIndex, TruncationPolicy, mode_data

__all__ = [
    "QuadratureSpec",
    "local_time_integral",
    "nonlocal_time_integral",
    "spatial_overlap_integral",
    "OVERLAP_CONSTANT",
    "oracle_mode_terms",
    "closed_form_mode_terms",
    "OracleTuple",
    "random_tuples",
    "mode_deviation",
    "assembled_deviation",
    "smearing_exponent",
    "wide_smearing_ratio",
    "run_suite",
]

TIME_HALF_WIDTH = 8.0
RADIAL_LIMIT = 8.0
OVERLAP_CONSTANT = 2 * math.pi * math.sqrt(math.pi) / 4
_FATAL = ("maximum number of subdivisions", "divergent", "extremely bad")


@dataclass(frozen=True)
class QuadratureSpec:
    absolute_tolerance: float = 1e-15
    relative_tolerance: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.absolute_tolerance > 0 and self.relative_tolerance > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")


def _quad(f, a: float, b: float, spec: QuadratureSpec, weight=None, wvar=None) -> float:
    if b <= a:
        return 0.0
    kwargs = dict(epsabs=spec.absolute_tolerance, epsrel=spec.relative_tolerance, limit=spec.max_subdivisions)
    if weight is not None:
        kwargs.update(weight=weight, wvar=wvar)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        value = quad(f, a, b, **kwargs)[0]
    for w in caught:
        text = str(w.message)
        if any(key in text for key in _FATAL):
            raise OracleError(f"quadrature on [{a}, {b}] failed: {text.strip().splitlines()[0]}")
    return value


def _gauss_phase_integral(center: float, freq: float, a: float, b: float, spec: QuadratureSpec) -> complex:
    # int_a^b exp(-(t - center)^2) exp(i freq t) dt
    g = lambda t: math.exp(-(t - center) ** 2)
    if freq == 0.0:
        return complex(_quad(g, a, b, spec))
    return complex(_quad(g, a, b, spec, "cos", freq), _quad(g, a, b, spec, "sin", freq))


def local_time_integral(omegaT: float, OmegaT: float, spec: Optional[QuadratureSpec] = None,
                        t_A: float = 0.0) -> complex:
    """int exp(-(t_A - t)^2) exp(i t (Omega + omega)) dt over t_A +- 8."""
    spec = spec or QuadratureSpec()
    return _gauss_phase_integral(t_A, OmegaT + omegaT, t_A - TIME_HALF_WIDTH, t_A + TIME_HALF_WIDTH, spec)


def nonlocal_time_integral(omegaT: float, OmegaT: float, delay_ratio: float,
                           spec: Optional[QuadratureSpec] = None) -> complex:
    """Time-ordered double integral over t2 < t1.

    Detector A (phase Omega - omega) sits at t_A = -t/2 on the later time
    t1 and detector B (phase Omega + omega) at t_B = +t/2 on t2.
    """
    spec = spec or QuadratureSpec()
    t_a, t_b = -0.5 * delay_ratio, 0.5 * delay_ratio
    a_freq, b_freq = OmegaT - omegaT, OmegaT + omegaT
    lo_b, hi_b = t_b - TIME_HALF_WIDTH, t_b + TIME_HALF_WIDTH
    memo: dict[float, complex] = {}

    def inner(t1: float) -> complex:
        if t1 not in memo:
            memo[t1] = _gauss_phase_integral(t_b, b_freq, lo_b, min(t1, hi_b), spec)
        return memo[t1]

    env = lambda t1: math.exp(-(t1 - t_a) ** 2)
    lo = max(t_a - TIME_HALF_WIDTH, lo_b)
    hi = t_a + TIME_HALF_WIDTH
    if a_freq == 0.0:
        re = _quad(lambda t: env(t) * inner(t).real, lo, hi, spec)
        im = _quad(lambda t: env(t) * inner(t).imag, lo, hi, spec)
        return complex(re, im)
    cr = _quad(lambda t: env(t) * inner(t).real, lo, hi, spec, "cos", a_freq)
    ci = _quad(lambda t: env(t) * inner(t).imag, lo, hi, spec, "cos", a_freq)
    sr = _quad(lambda t: env(t) * inner(t).real, lo, hi, spec, "sin", a_freq)
    si = _quad(lambda t: env(t) * inner(t).imag, lo, hi, spec, "sin", a_freq)
    return complex(cr - si, sr + ci)


def _detector_position(geom: CavityGeometry, det: DetectorPair, which: str) -> float:
    if which == "A":
        return 0.5 * (geom.length_ratio - det.distance_ratio)
    if which == "B":
        return 0.5 * (geom.length_ratio + det.distance_ratio)
    raise DomainError(f"detector must be 'A' or 'B', got {which!r}")


def _mode_wavenumbers(j: ModeIndex, geom: CavityGeometry) -> tuple[float, float, float]:
    chi = float(special.jn_zeros(0, j.m)[-1])
    return chi / geom.radius_ratio, j.l * math.pi / geom.length_ratio, chi


def spatial_overlap_integral(j: ModeIndex, geom: CavityGeometry, det: DetectorPair,
                             spec: Optional[QuadratureSpec] = None, which: str = "A") -> float:
    """Overlap of the detector smearing with the TM_(0 m l) electric field.

    Integrates 2 pi rho exp(-rho^2 - z'^2) z' (rho E_rho + z' E_z) over the
    detector neighbourhood, with E_z = J0(k_m rho) cos(k_l z) and
    E_rho = (k_l/k_m) J1(k_m rho) sin(k_l z), z = z_alpha + z'.
    """
    if not isinstance(j, ModeIndex):
        j = ModeIndex(*j)
    spec = spec or QuadratureSpec()
    z0 = _detector_position(geom, det, which)
    if min(z0, geom.length_ratio - z0) < 3.0:
        raise DomainError("detector needs 3 sigma clearance from the mirrors for the overlap oracle")
    km, kl, _ = _mode_wavenumbers(j, geom)
    ratio = kl / km

    def z_integral(rho: float) -> float:
        j0v, j1v = special.j0(km * rho), special.j1(km * rho)

        def f(zp):
            z = z0 + zp
            return math.exp(-zp * zp) * zp * (rho * ratio * j1v * math.sin(kl * z) + zp * j0v * math.cos(kl * z))

        return _quad(f, -TIME_HALF_WIDTH, TIME_HALF_WIDTH, spec)

    rmax = min(geom.radius_ratio, RADIAL_LIMIT)
    return _quad(lambda rho: 2 * math.pi * rho * math.exp(-rho * rho) * z_integral(rho), 0.0, rmax, spec)


def _normalisation(j: ModeIndex, geom: CavityGeometry) -> float:
    km, kl, chi = _mode_wavenumbers(j, geom)
    return km * km / (special.j1(chi) ** 2 * math.hypot(km, kl))


def oracle_mode_terms(j: ModeIndex, geom: CavityGeometry, det: DetectorPair,
                      spec: Optional[QuadratureSpec] = None) -> tuple[float, complex]:
    """Per-mode (local, non-local) assembled from quadratures."""
    if not isinstance(j, ModeIndex):
        j = ModeIndex(*j)
    spec = spec or QuadratureSpec()
    km, kl, _ = _mode_wavenumbers(j, geom)
    omega = math.hypot(km, kl) * geom.tau
    norm = _normalisation(j, geom)
    s_a = spatial_overlap_integral(j, geom, det, spec, "A") / OVERLAP_CONSTANT
    s_b = spatial_overlap_integral(j, geom, det, spec, "B") / OVERLAP_CONSTANT
    t_loc = local_time_integral(omega, det.omega_T, spec)
    local = norm * s_a * s_a * abs(t_loc) ** 2 / math.pi
    ordered = nonlocal_time_integral(omega, det.omega_T, det.delay_ratio, spec)
    ordered += nonlocal_time_integral(omega, det.omega_T, -det.delay_ratio, spec)
    non_local = math.cos(det.tilt) * norm * s_a * s_b * ordered / math.pi
    return local, non_local


def closed_form_mode_terms(j: ModeIndex, geom: CavityGeometry, det: DetectorPair) -> tuple[float, complex]:
    """Per-mode (local, non-local) summands of the fast path."""
    md = mode_data(j, geom, det)
    local = md.xi * math.exp(-0.5 * (md.omegaT + det.omega_T) ** 2) * md.q_l
    non_local = (tilt_factor(det.tilt) * 0.5 * math.exp(-0.5 * det.omega_T**2) * md.xi
                 * symmetric_amplitude(md.omegaT, det.delay_ratio) * md.p_l)
    return local, complex(non_local)


def smearing_exponent(j: ModeIndex, geom: CavityGeometry, det: DetectorPair,
                      spec: Optional[QuadratureSpec] = None) -> float:
    """Measured c in |S| = C |cos(k_l z_A)| exp(-c kappa^2); the closed-form weights use c = 1/4."""
    if not isinstance(j, ModeIndex):
        j = ModeIndex(*j)
    km, kl, _ = _mode_wavenumbers(j, geom)
    kappa2 = km * km + kl * kl
    cos_a = math.cos(kl * _detector_position(geom, det, "A"))
    s = spatial_overlap_integral(j, geom, det, spec, "A")
    return -math.log(abs(s) / (OVERLAP_CONSTANT * abs(cos_a))) / kappa2


def wide_smearing_ratio(kappa: float) -> float:
    """Per-mode ratio of a term built with exp(-kappa^2) per smearing factor to the closed-form term.

    Two smearing factors give exp(-2 kappa^2) against exp(-kappa^2/2).
    """
    return math.exp(-1.5 * kappa * kappa)


@dataclass(frozen=True)
class OracleTuple:
    geometry: CavityGeometry
    detectors: DetectorPair
    mode: ModeIndex
    max_m: int
    max_l: int


def random_tuples(count: int = 20, seed: int = 20240611) -> list[OracleTuple]:
    """Random small-parameter cases: m <= 3, l <= 5, omega T <= 5, Omega T <= 3, |t| <= 3.

    Detector positions within 1e-3 of a parity node are redrawn, since a
    relative comparison is meaningless there.
    """
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        geom = CavityGeometry(rng.uniform(20, 40), rng.uniform(6, 15), 3.0)
        det = DetectorPair(
            omega_T=rng.uniform(0, 3),
            distance_ratio=rng.uniform(5, geom.length_ratio - 8),
            delay_ratio=rng.uniform(-3, 3),
            tilt=rng.uniform(0, math.pi),
        )
        max_m, max_l = rng.randint(1, 3), rng.randint(0, 5)
        mode = ModeIndex(rng.randint(1, max_m), rng.randint(0, max_l))
        ls = np.arange(max_l + 1)
        ratio = det.distance_ratio / geom.length_ratio
        cos_m = np.cos(0.5 * np.pi * ls * (1 - ratio))
        cos_p = np.cos(0.5 * np.pi * ls * (1 + ratio))
        if np.min(np.abs(np.concatenate([cos_m, cos_p]))) < 1e-3:
            continue
        if abs(math.cos(det.tilt)) < 1e-3:
            continue
        out.append(OracleTuple(geom, det, mode, max_m, max_l))
    return out


def _rel(a: complex, b: complex) -> float:
    return abs(a - b) / abs(b)


def mode_deviation(case: OracleTuple, spec: Optional[QuadratureSpec] = None) -> tuple[float, float]:
    """Relative deviations (local, non-local) for the tuple's single mode."""
    ol, om = oracle_mode_terms(case.mode, case.geometry, case.detectors, spec)
    cl, cm = closed_form_mode_terms(case.mode, case.geometry, case.detectors)
    return _rel(ol, cl), _rel(om, cm)


def assembled_deviation(case: OracleTuple, spec: Optional[QuadratureSpec] = None) -> tuple[float, float]:
    """Relative deviations of full local and non-local sums over the tuple's caps."""
    total_l, total_m = 0.0, 0j
    for m in range(1, case.max_m + 1):
        for l in range(case.max_l + 1):
            ol, om = oracle_mode_terms(ModeIndex(m, l), case.geometry, case.detectors, spec)
            total_l += ol
            total_m += om
    policy = TruncationPolicy(max_m=case.max_m, max_l=case.max_l)
    res = negativity(case.geometry, case.detectors, ParityFilter.ALL, policy)
    return _rel(total_l, res.local), _rel(total_m, res.non_local)


@dataclass
class SuiteReport:
    tolerance: float
    mode_local: list[float] = field(default_factory=list)
    mode_nonlocal: list[float] = field(default_factory=list)
    sum_local: list[float] = field(default_factory=list)
    sum_nonlocal: list[float] = field(default_factory=list)

    def max_deviation(self) -> float:
        values = self.mode_local + self.mode_nonlocal + self.sum_local + self.sum_nonlocal
        return max(values) if values else 0.0

    @property
    def passed(self) -> bool:
        return self.max_deviation() <= self.tolerance


def run_suite(count: int = 20, assembled: int = 20, seed: int = 20240611, tolerance: float = 1e-8,
              spec: Optional[QuadratureSpec] = None) -> SuiteReport:
    """Per-mode checks on ``count`` tuples and full-sum checks on the first ``assembled``."""
    report = SuiteReport(tolerance)
    for i, case in enumerate(random_tuples(count, seed)):
        dl, dm = mode_deviation(case, spec)
        report.mode_local.append(dl)
        report.mode_nonlocal.append(dm)
        if i < assembled:
            sl, sm = assembled_deviation(case, spec)
            report.sum_local.append(sl)
            report.sum_nonlocal.append(sm)
    return report
