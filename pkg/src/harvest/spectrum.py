"""TM (n = 0) mode spectrum of a cylindrical cavity in detector-width units.

A mode j = (m, l) with m >= 1, l >= 0 has transverse wavenumber
``kappa_m = chi_m / R`` (chi_m the m-th zero of J0), longitudinal wavenumber
``kappa_l = l*pi / L`` and dimensionless frequency ``omegaT = kappa * tau``.
Its coupling weight is

    xi = kappa_m**2 / (J1(chi_m)**2 * kappa) * exp(-kappa**2 / 2).

Truncation
----------
The double sum is cut at ``m <= max_m`` and ``l <= max_l``.  Using
``xi <= g_m * h_l`` with ``g_m = kappa_m exp(-kappa_m^2/2) / J1(chi_m)^2`` and
``h_l = exp(-kappa_l^2/2)``, the neglected weight obeys

    tail <= G_tail * H_all + G_incl * H_tail

where G_incl is summed exactly and the other three pieces are integral
bounds (consecutive chi_m are more than 3.1 apart, and
1/(chi J1(chi)^2) < 1.6 at every zero).  Every correlation summand is bounded
by 2*xi in modulus (see :mod:`harvest.correlations`), local plus non-local by
3*xi, so ``tail_bound = 3 * weight_tail`` bounds the change of the estimator
caused by the cut.
"""
from __future__ import annotations

import csv
import io
import math
import threading
from collections import OrderedDict
from dataclasses import asdict, dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.special import erfc

from .errors import DomainError, TruncationError
from .params import CavityGeometry, DetectorPair
from .specfun import ZERO_TABLE

__all__ = [
    "HARD_CAP",
    "TruncationPolicy",
    "TruncationReport",
    "ModeIndex",
    "ModeData",
    "ModeGrid",
    "ModeTable",
    "mode_grid",
    "mode_data",
    "parity_weights",
    "resolve_truncation",
    "enumerate_modes",
    "truncation_bounds",
]

HARD_CAP = 10_000
# Lower bound on chi_{m+1} - chi_m (the minimum, 3.1153, occurs at m = 1).
_ZERO_SPACING = 3.1
# Upper bound on 1 / (chi_m * J1(chi_m)^2); the supremum pi/2 is approached from below.
_J1_CONST = 1.6
_SQRT_HALF_PI = math.sqrt(math.pi / 2)
_KAPPA_STEP = 0.25
MODE_CSV_COLUMNS = ("m", "l", "kappa", "omegaT", "xi", "gamma_minus", "gamma_plus", "q_l", "p_l", "lambda")


@dataclass(frozen=True)
class TruncationPolicy:
    """How many modes to keep.

    Caps left as ``None`` are chosen adaptively so that the neglected weight
    is at most ``tail_tolerance`` times the included weight.
    """

    tail_tolerance: float = 1e-8
    max_m: Optional[int] = None
    max_l: Optional[int] = None
    hard_cap_m: int = HARD_CAP
    hard_cap_l: int = HARD_CAP

    def __post_init__(self):
        tol = float(self.tail_tolerance)
        if not (0 < tol < 1):
            raise DomainError(f"tail_tolerance must lie in (0, 1), got {tol!r}")
        object.__setattr__(self, "tail_tolerance", tol)
        if self.max_m is not None:
            if int(self.max_m) != self.max_m or self.max_m < 1:
                raise DomainError(f"max_m must be an integer >= 1, got {self.max_m!r}")
            object.__setattr__(self, "max_m", int(self.max_m))
        if self.max_l is not None:
            if int(self.max_l) != self.max_l or self.max_l < 0:
                raise DomainError(f"max_l must be an integer >= 0, got {self.max_l!r}")
            object.__setattr__(self, "max_l", int(self.max_l))
        for name in ("hard_cap_m", "hard_cap_l"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be >= 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.max_m is not None and self.max_m > self.hard_cap_m:
            raise DomainError(f"max_m {self.max_m} exceeds the hard cap {self.hard_cap_m}")
        if self.max_l is not None and self.max_l > self.hard_cap_l:
            raise DomainError(f"max_l {self.max_l} exceeds the hard cap {self.hard_cap_l}")

    def with_(self, **changes) -> "TruncationPolicy":
        data = asdict(self)
        data.update(changes)
        return TruncationPolicy(**data)


@dataclass(frozen=True)
class TruncationReport:
    """Caps in use and rigorous bounds on what they leave out.

    ``weight_tail`` bounds the neglected sum of xi, ``gaussian_tail`` the
    neglected sum of exp(-kappa^2/2), and ``tail_bound`` the induced change
    of local, non-local and estimator values.
    """

    max_m: int
    max_l: int
    included_weight: float
    weight_tail: float
    gaussian_tail: float
    tail_bound: float
    tail_tolerance: float
    converged: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ModeIndex:
    m: int
    l: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"radial index m must be an integer >= 1, got {self.m!r}")
        if int(self.l) != self.l or self.l < 0:
            raise DomainError(f"longitudinal index l must be an integer >= 0, got {self.l!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "l", int(self.l))


@dataclass(frozen=True)
class ModeData:
    m: int
    l: int
    kappa_m: float
    kappa_l: float
    kappa: float
    omegaT: float
    xi: float
    gamma_minus: float
    gamma_plus: float
    q_l: float
    p_l: float
    lam: float


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Detector-independent mode arrays, shape (max_m, max_l + 1), m-major."""

    length_ratio: float
    radius_ratio: float
    tau: float
    max_m: int
    max_l: int
    chi: np.ndarray
    j1_at_chi: np.ndarray
    kappa_m: np.ndarray
    kappa_l: np.ndarray
    kappa: np.ndarray
    omegaT: np.ndarray
    xi: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.max_m, self.max_l + 1)


def _build_grid(length_ratio: float, radius_ratio: float, tau: float, max_m: int, max_l: int) -> ModeGrid:
    chi = np.array(ZERO_TABLE.zeros(max_m))
    j1 = np.array(ZERO_TABLE.j1_at_zeros(max_m))
    kappa_m = chi / radius_ratio
    kappa_l = np.arange(max_l + 1) * (math.pi / length_ratio)
    kappa = np.hypot(kappa_m[:, None], kappa_l[None, :])
    xi = (kappa_m**2 / j1**2)[:, None] * np.exp(-0.5 * kappa * kappa) / kappa
    return ModeGrid(
        length_ratio, radius_ratio, tau, max_m, max_l,
        _readonly(chi), _readonly(j1), _readonly(kappa_m), _readonly(kappa_l),
        _readonly(kappa), _readonly(kappa * tau), _readonly(xi),
    )


class _LRU:
    """Small thread-safe LRU cache for expensive, immutable values."""

    def __init__(self, size: int):
        self._size = size
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key, build):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = build()
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self._size:
                self._data.popitem(last=False)
        return value

    def clear(self):
        with self._lock:
            self._data.clear()


_GRID_CACHE = _LRU(8)
_REPORT_CACHE = _LRU(256)


def mode_grid(geom: CavityGeometry, max_m: int, max_l: int) -> ModeGrid:
    """Cached mode arrays for the given caps."""
    key = (geom.length_ratio, geom.radius_ratio, geom.tau, int(max_m), int(max_l))
    return _GRID_CACHE.get(key, lambda: _build_grid(*key))


def parity_weights(l, distance_ratio: float, length_ratio: float):
    """Local and non-local parity weights ``(q_l, p_l)``.

    q_l = (1 + (-1)^l cos(k_l D)) / 2 and p_l = (-1)^l q_l.  Works on scalar
    or array ``l``.
    """
    d = float(distance_ratio)
    length = float(length_ratio)
    if not (0 < d < length):
        raise DomainError(f"parity weights need 0 < D < L, got D={d}, L={length}")
    larr = np.asarray(l)
    if np.any(larr < 0):
        raise DomainError("longitudinal index must be >= 0")
    sign = np.where(larr % 2 == 0, 1.0, -1.0)
    cos_kd = np.cos(math.pi * larr * (d / length))
    q = 0.5 * (1.0 + sign * cos_kd)
    p = sign * q
    if larr.ndim == 0:
        return float(q), float(p)
    return q, p


def phases(l, distance_ratio: float, length_ratio: float):
    """Longitudinal phases (gamma_minus, gamma_plus) = (pi l / 2)(1 -/+ D/L)."""
    half = 0.5 * math.pi * np.asarray(l, dtype=float)
    ratio = distance_ratio / length_ratio
    return half * (1.0 - ratio), half * (1.0 + ratio)


def mode_data(j: ModeIndex, geom: CavityGeometry, det: DetectorPair) -> ModeData:
    """All per-mode quantities for one index pair."""
    if not isinstance(j, ModeIndex):
        j = ModeIndex(*j)
    chi = ZERO_TABLE.zero(j.m)
    j1 = float(ZERO_TABLE.j1_at_zeros(j.m)[j.m - 1])
    kappa_m = chi / geom.radius_ratio
    kappa_l = j.l * math.pi / geom.length_ratio
    kappa = math.hypot(kappa_m, kappa_l)
    xi = kappa_m**2 / (j1 * j1 * kappa) * math.exp(-0.5 * kappa * kappa)
    gm, gp = phases(j.l, det.distance_ratio, geom.length_ratio)
    q, p = parity_weights(j.l, det.distance_ratio, geom.length_ratio)
    omega = kappa * geom.tau
    return ModeData(j.m, j.l, kappa_m, kappa_l, kappa, omega, xi, float(gm), float(gp), q, p,
                    math.exp(-omega * det.omega_T))


def _integral_u2_gauss(a: float) -> float:
    # int_a^inf u^2 exp(-u^2/2) du
    return a * math.exp(-0.5 * a * a) + _SQRT_HALF_PI * erfc(a / math.sqrt(2))


def truncation_bounds(geom: CavityGeometry, max_m: int, max_l: int) -> tuple[float, float, float]:
    """``(included_weight, weight_tail, gaussian_tail)`` for the given caps."""
    grid = mode_grid(geom, max_m, max_l)
    included = float(grid.xi.sum())
    radius, length = geom.radius_ratio, geom.length_ratio
    km = grid.kappa_m
    # radial factors
    g_incl = float(np.sum(km * np.exp(-0.5 * km * km) / grid.j1_at_chi**2))
    a = float(km[-1])
    g_tail = _J1_CONST * radius * (radius / _ZERO_SPACING) * _integral_u2_gauss(a)
    if a < math.sqrt(2):
        g_tail += 2.0 * _J1_CONST * radius * (2.0 / math.e)
    e_incl = float(np.sum(np.exp(-0.5 * km * km)))
    e_tail = (radius / _ZERO_SPACING) * _SQRT_HALF_PI * erfc(a / math.sqrt(2))
    # longitudinal factors
    scale_l = length / math.pi
    h_all = 1.0 + scale_l * _SQRT_HALF_PI
    kl = float(grid.kappa_l[-1])
    h_tail = scale_l * _SQRT_HALF_PI * erfc(kl / math.sqrt(2))
    weight_tail = g_tail * h_all + g_incl * h_tail
    gaussian_tail = e_tail * h_all + e_incl * h_tail
    return included, float(weight_tail), float(gaussian_tail)


def _caps_for_cutoff(geom: CavityGeometry, kc: float) -> tuple[int, int]:
    max_m = ZERO_TABLE.count_below(kc * geom.radius_ratio) + 1
    max_l = int(math.ceil(kc * geom.length_ratio / math.pi))
    return max_m, max_l


def _resolve(geom: CavityGeometry, policy: TruncationPolicy) -> TruncationReport:
    tol = policy.tail_tolerance
    kc = math.sqrt(2.0 * math.log(1.0 / tol))
    previous = math.inf
    while True:
        auto_m, auto_l = _caps_for_cutoff(geom, kc)
        max_m = policy.max_m if policy.max_m is not None else auto_m
        max_l = policy.max_l if policy.max_l is not None else auto_l
        if max_m > policy.hard_cap_m or max_l > policy.hard_cap_l:
            raise TruncationError(
                f"tail tolerance {tol:g} needs caps (m={max_m}, l={max_l}) beyond the hard caps "
                f"({policy.hard_cap_m}, {policy.hard_cap_l})"
            )
        included, weight_tail, gaussian_tail = truncation_bounds(geom, max_m, max_l)
        converged = bool(weight_tail <= tol * included)
        explicit = policy.max_m is not None and policy.max_l is not None
        # with one cap pinned, stop once the free cap no longer improves the bound
        saturated = weight_tail >= 0.99 * previous
        if converged or explicit or saturated:
            break
        previous = weight_tail
        kc += _KAPPA_STEP
    return TruncationReport(max_m, max_l, included, weight_tail, gaussian_tail, 3.0 * weight_tail, tol, converged)


def resolve_truncation(geom: CavityGeometry, policy: Optional[TruncationPolicy] = None) -> TruncationReport:
    """Choose caps for ``geom`` under ``policy`` (cached)."""
    policy = policy or TruncationPolicy()
    key = (geom.length_ratio, geom.radius_ratio, geom.tau, policy)
    return _REPORT_CACHE.get(key, lambda: _resolve(geom, policy))


@dataclass(frozen=True, eq=False)
class ModeTable:
    """Flattened modes for one detector configuration, m-major then l."""

    m: np.ndarray
    l: np.ndarray
    kappa: np.ndarray
    omegaT: np.ndarray
    xi: np.ndarray
    gamma_minus: np.ndarray
    gamma_plus: np.ndarray
    q_l: np.ndarray
    p_l: np.ndarray
    lam: np.ndarray

    def __len__(self) -> int:
        return int(self.m.size)

    def __iter__(self) -> Iterator[tuple]:
        cols = (self.m, self.l, self.kappa, self.omegaT, self.xi, self.gamma_minus,
                self.gamma_plus, self.q_l, self.p_l, self.lam)
        for row in zip(*cols):
            yield (int(row[0]), int(row[1])) + tuple(float(v) for v in row[2:])

    def write_csv(self, fh, digits: int = 12) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MODE_CSV_COLUMNS)
        fmt = f"{{:.{digits}g}}"
        for row in self:
            writer.writerow([row[0], row[1]] + [fmt.format(v) for v in row[2:]])

    def to_csv(self, digits: int = 12) -> str:
        buf = io.StringIO()
        self.write_csv(buf, digits)
        return buf.getvalue()


def enumerate_modes(geom: CavityGeometry, det: DetectorPair,
                    policy: Optional[TruncationPolicy] = None) -> tuple[ModeTable, TruncationReport]:
    """All retained modes in fixed (m-major, l-minor) order plus the truncation report."""
    geom.check_detectors(det)
    report = resolve_truncation(geom, policy)
    grid = mode_grid(geom, report.max_m, report.max_l)
    n_m, n_l = grid.shape
    ls = np.arange(n_l)
    q, p = parity_weights(ls, det.distance_ratio, geom.length_ratio)
    gm, gp = phases(ls, det.distance_ratio, geom.length_ratio)
    omega = grid.omegaT.ravel()
    table = ModeTable(
        m=np.repeat(np.arange(1, n_m + 1), n_l),
        l=np.tile(ls, n_m),
        kappa=grid.kappa.ravel(),
        omegaT=omega,
        xi=grid.xi.ravel(),
        gamma_minus=np.tile(gm, n_m),
        gamma_plus=np.tile(gp, n_m),
        q_l=np.tile(q, n_m),
        p_l=np.tile(p, n_m),
        lam=np.exp(-omega * det.omega_T),
    )
    return table, report


def clear_caches() -> None:
    _GRID_CACHE.clear()
    _REPORT_CACHE.clear()
