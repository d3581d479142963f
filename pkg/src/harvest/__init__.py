"""Entanglement harvesting between two Gaussian detectors in a cylindrical cavity.

Lengths are measured in detector widths sigma and times in switching
durations T; correlation values are in units of the cavity prefactor.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .correlations import (  # noqa: E402
    CorrelationResult,
    amplitude_E_scaled,
    local_term,
    negativity,
    nonlocal_term,
    symmetric_amplitude,
)
from .errors import DomainError, HarvestError, OracleError, TruncationError  # noqa: E402
from .params import (  # noqa: E402
    PRESETS,
    CavityGeometry,
    DetectorPair,
    Lightcone,
    ParityFilter,
    get_preset,
)
from .spectrum import ModeIndex, TruncationPolicy, TruncationReport, enumerate_modes, mode_data  # noqa: E402

__all__ = [
    "__version__",
    "CavityGeometry",
    "DetectorPair",
    "ParityFilter",
    "Lightcone",
    "PRESETS",
    "get_preset",
    "ModeIndex",
    "TruncationPolicy",
    "TruncationReport",
    "enumerate_modes",
    "mode_data",
    "CorrelationResult",
    "amplitude_E_scaled",
    "symmetric_amplitude",
    "local_term",
    "nonlocal_term",
    "negativity",
    "HarvestError",
    "DomainError",
    "TruncationError",
    "OracleError",
]
