"""Parameter records shared by the spectrum, correlation and sweep layers.

All lengths are in units of the detector width sigma and all times in units
of the switching duration T.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import asdict, dataclass

from .errors import DomainError

DEFAULT_TAU = 3.0
# Below this separation the Gaussian wave-function overlap exp(-(D/sigma)^2/4)
# exceeds ~1.9e-3.
MIN_SAFE_DISTANCE = 5.0
WALL_CLEARANCE = 3.0


def _finite_positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be finite and positive, got {value!r}")
    return value


@dataclass(frozen=True)
class CavityGeometry:
    """Cylindrical cavity in detector-width units.

    ``tau`` is the light-crossing parameter c*T/sigma that converts
    dimensionless wavenumbers into dimensionless mode frequencies.
    """

    length_ratio: float
    radius_ratio: float
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        object.__setattr__(self, "length_ratio", _finite_positive("length_ratio", self.length_ratio))
        object.__setattr__(self, "radius_ratio", _finite_positive("radius_ratio", self.radius_ratio))
        object.__setattr__(self, "tau", _finite_positive("tau", self.tau))

    def with_(self, **changes) -> "CavityGeometry":
        data = asdict(self)
        data.update(changes)
        return CavityGeometry(**data)

    def check_detectors(self, det: "DetectorPair") -> None:
        """Raise if the detectors do not fit, warn if they crowd the mirrors."""
        if det.distance_ratio >= self.length_ratio:
            raise DomainError(
                f"detector distance {det.distance_ratio} does not fit in cavity length {self.length_ratio}"
            )
        clearance = 0.5 * (self.length_ratio - det.distance_ratio)
        if clearance < WALL_CLEARANCE:
            warnings.warn(
                f"detectors sit {clearance:.3g} sigma from the mirrors; the smearing is not negligible there",
                stacklevel=3,
            )


@dataclass(frozen=True)
class DetectorPair:
    """Two identical Gaussian detectors on the cavity axis.

    Only ``tilt`` (the polar Euler angle between the two orientations) enters
    the correlations; ``psi`` and ``phi`` are accepted and ignored.
    """

    omega_T: float = 1.0
    distance_ratio: float = 5.0
    delay_ratio: float = 0.0
    tilt: float = 0.0
    psi: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        omega = float(self.omega_T)
        if not math.isfinite(omega) or omega < 0:
            raise DomainError(f"omega_T must be finite and >= 0, got {omega!r}")
        object.__setattr__(self, "omega_T", omega)
        object.__setattr__(self, "distance_ratio", _finite_positive("distance_ratio", self.distance_ratio))
        delay = float(self.delay_ratio)
        if not math.isfinite(delay):
            raise DomainError("delay_ratio must be finite")
        object.__setattr__(self, "delay_ratio", delay)
        tilt = float(self.tilt)
        if not (0.0 <= tilt <= math.pi):
            raise DomainError(f"tilt must lie in [0, pi], got {tilt!r}")
        object.__setattr__(self, "tilt", tilt)
        for name in ("psi", "phi"):
            angle = float(getattr(self, name))
            if not math.isfinite(angle):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, angle)
        if self.distance_ratio < MIN_SAFE_DISTANCE:
            warnings.warn(
                f"distance_ratio {self.distance_ratio} < {MIN_SAFE_DISTANCE}: "
                f"wave-function overlap {math.exp(-self.distance_ratio**2 / 4):.2e} is no longer negligible",
                stacklevel=3,
            )
        if self.psi != 0.0 or self.phi != 0.0:
            warnings.warn("Euler angles psi and phi do not enter the correlations and are ignored", stacklevel=3)

    def with_(self, **changes) -> "DetectorPair":
        data = asdict(self)
        data.update(changes)
        return DetectorPair(**data)


class ParityFilter(enum.Enum):
    ALL = "all"
    EVEN = "even"
    ODD = "odd"

    @classmethod
    def parse(cls, value) -> "ParityFilter":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"evenl": "even", "oddl": "odd"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown parity filter {value!r}; expected all, even or odd") from None


class Lightcone(enum.Enum):
    SPACELIKE = "spacelike"
    TIMELIKE = "timelike"


def classify_lightcone(tau: float, delay_ratio: float, distance_ratio: float) -> Lightcone:
    """Hard light-cone cut: spacelike iff c*|t_BA| < D."""
    if tau * abs(delay_ratio) < distance_ratio:
        return Lightcone.SPACELIKE
    return Lightcone.TIMELIKE


@dataclass(frozen=True)
class RegimePreset:
    name: str
    length_ratio: float
    radius_ratio: float

    def geometry(self, tau: float = DEFAULT_TAU) -> CavityGeometry:
        return CavityGeometry(self.length_ratio, self.radius_ratio, tau)


PRESETS = {
    "microcavity": RegimePreset("microcavity", 20.0, 10.0),
    "waveguide": RegimePreset("waveguide", 1000.0, 10.0),
    "disc": RegimePreset("disc", 20.0, 500.0),
    "optical": RegimePreset("optical", 1000.0, 500.0),
}


def get_preset(name: str) -> RegimePreset:
    try:
        return PRESETS[str(name).strip().lower()]
    except KeyError:
        raise DomainError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
