from __future__ import annotations

import json
import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harvest.correlations import (
    CorrelationResult,
    amplitude_E_scaled,
    geometry_scale,
    local_term,
    negativity,
    nonlocal_term,
    prefactor_si,
    symmetric_amplitude,
    tilt_factor,
)
from harvest.errors import DomainError
from harvest.oracle import oracle_mode_terms
from harvest.params import CavityGeometry, DetectorPair, Lightcone, ParityFilter, get_preset
from harvest.spectrum import ModeIndex, TruncationPolicy, mode_data

MICRO = get_preset("microcavity").geometry()
WAVE = get_preset("waveguide").geometry()
# exp(-x^2/2) E(x, s) at (x, s) = (50, 3) from 200-digit quadrature of the erfc integral
E_50_3 = complex(1.061091904278039430847649e-05, -1.767075118824993606208225e-04)


def literal_scaled(x, s):
    return complex(mp.exp(-x * x / 2) * mp.exp(1j * x * s) * mp.erfc((s + 1j * x) / mp.sqrt(2)))


class TestAmplitude:
    @given(st.floats(0, 40))
    def test_zero_delay_real_part(self, x):
        assert abs(amplitude_E_scaled(x, 0.0).real - math.exp(-x * x / 2)) <= 1e-15

    @given(st.floats(-20, 20))
    def test_zero_frequency_sum(self, s):
        total = amplitude_E_scaled(0.0, s) + amplitude_E_scaled(0.0, -s)
        assert abs(total - 2) <= 1e-14
        assert abs(symmetric_amplitude(0.0, s) - 2) <= 1e-14

    def test_high_precision_reference(self):
        assert abs(amplitude_E_scaled(50.0, 3.0) - E_50_3) <= 1e-9 * abs(E_50_3)

    @pytest.mark.parametrize("x,s", [(0.7, 6.5), (3.0, -2.0), (1.2, 0.4), (8.0, -5.0), (0.0, 2.0), (15.0, 1.0)])
    def test_matches_literal_product(self, x, s):
        mp.mp.dps = 40
        ref = literal_scaled(x, s)
        ref_sum = ref + literal_scaled(x, -s)
        mp.mp.dps = 15
        assert abs(amplitude_E_scaled(x, s) - ref) <= 1e-12 * abs(ref)
        assert abs(symmetric_amplitude(x, s) - ref_sum) <= 1e-12 * abs(ref_sum)

    @given(st.floats(0, 1e3), st.floats(-50, 50))
    def test_symmetric_sum_consistent_and_bounded(self, x, s):
        sym = symmetric_amplitude(x, s)
        assert abs(sym) <= 4.0
        assert sym == symmetric_amplitude(x, -s)
        direct = amplitude_E_scaled(x, s) + amplitude_E_scaled(x, -s)
        assert abs(direct - sym) <= 1e-12 * max(1.0, abs(sym))

    def test_no_overflow_for_large_frequencies(self):
        x = np.linspace(0, 1e3, 2001)
        for s in (-40.0, -3.0, 0.0, 3.0, 40.0):
            vals = amplitude_E_scaled(x, s)
            assert np.all(np.isfinite(vals))
            assert np.max(np.abs(vals)) <= 2.0

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            amplitude_E_scaled(math.nan, 1.0)


def _det(**kw):
    base = dict(omega_T=1.0, distance_ratio=5.0, delay_ratio=0.5, tilt=0.0)
    base.update(kw)
    return DetectorPair(**base)


class TestTerms:
    def test_single_mode_local(self):
        det = _det()
        got = local_term(MICRO, det, policy=TruncationPolicy(max_m=1, max_l=0))
        md = mode_data(ModeIndex(1, 0), MICRO, det)
        assert got == pytest.approx(md.xi * math.exp(-0.5 * (md.omegaT + 1.0) ** 2), rel=1e-15)

    def test_local_matches_oracle_sum(self):
        det = _det()
        policy = TruncationPolicy(max_m=2, max_l=3)
        total = sum(oracle_mode_terms(ModeIndex(m, l), MICRO, det)[0] for m in (1, 2) for l in range(4))
        assert local_term(MICRO, det, policy=policy) == pytest.approx(total, rel=1e-8)

    def test_perpendicular_detectors(self):
        res = negativity(MICRO, _det(tilt=math.pi / 2))
        assert res.non_local == 0
        assert res.negativity == 0.0

    @pytest.mark.parametrize("t", [0.3, 2.0, 6.9])
    def test_even_in_delay(self, t):
        assert nonlocal_term(MICRO, _det(delay_ratio=t)) == nonlocal_term(MICRO, _det(delay_ratio=-t))

    @given(st.floats(0, math.pi))
    def test_tilt_is_a_prefactor(self, theta):
        base = nonlocal_term(MICRO, _det())
        tilted = nonlocal_term(MICRO, _det(tilt=theta))
        c = tilt_factor(theta)
        assert c == pytest.approx(math.cos(theta), abs=4e-16)
        even = nonlocal_term(MICRO, _det(), ParityFilter.EVEN)
        odd = nonlocal_term(MICRO, _det(), ParityFilter.ODD)
        assert abs(tilted - c * base) <= 4 * np.finfo(float).eps * (abs(c) * (abs(even) + abs(odd)) + abs(base))

    def test_lightcone_labels(self):
        assert negativity(MICRO, _det(delay_ratio=0.5)).lightcone is Lightcone.SPACELIKE
        assert negativity(MICRO, _det(delay_ratio=3.0)).lightcone is Lightcone.TIMELIKE

    @pytest.mark.parametrize("geom", [MICRO, WAVE, CavityGeometry(37.0, 23.0)], ids=["micro", "wave", "odd"])
    @pytest.mark.parametrize("t", [0.2, 3.0, 6.8])
    def test_parity_additivity(self, geom, t):
        det = _det(delay_ratio=t)
        parts = {f: negativity(geom, det, f) for f in ParityFilter}
        whole, even, odd = parts[ParityFilter.ALL], parts[ParityFilter.EVEN], parts[ParityFilter.ODD]
        assert whole.local == even.local + odd.local
        assert whole.non_local == even.non_local + odd.non_local
        assert abs(whole.non_local) <= abs(even.non_local) + abs(odd.non_local)

    @given(st.floats(0, 6))
    def test_gap_enters_nonlocal_only_as_envelope(self, omega):
        ref = nonlocal_term(MICRO, _det(omega_T=0.0))
        got = nonlocal_term(MICRO, _det(omega_T=omega)) * math.exp(0.5 * omega * omega)
        assert abs(got - ref) <= 1e-13 * abs(ref)

    @given(st.floats(10, 200), st.floats(5, 60), st.floats(0, 10), st.floats(-10, 10))
    def test_positive_local_and_consistent_estimator(self, length, radius, omega, t):
        geom = CavityGeometry(length, radius)
        res = negativity(geom, DetectorPair(omega, 5.0, t))
        assert res.local > 0
        assert res.negativity >= 0
        assert (res.negativity > 0) == (abs(res.non_local) > res.local)
        assert res.estimator == abs(res.non_local) - res.local

    def test_workers_do_not_change_result(self):
        from harvest.correlations import clear_caches

        det = _det(delay_ratio=1.3)
        geom = get_preset("disc").geometry()
        clear_caches()
        one = negativity(geom, det, workers=1)
        clear_caches()
        many = negativity(geom, det, workers=4)
        assert one == many


class TestResult:
    def test_json_round_trip(self):
        res = negativity(MICRO, _det())
        back = CorrelationResult.from_dict(json.loads(json.dumps(res.to_dict())))
        assert back == res

    def test_json_has_all_fields(self):
        data = json.loads(negativity(MICRO, _det()).to_json())
        assert set(data) == {"local", "nonlocal", "estimator", "negativity", "lightcone", "filter",
                             "geometry_scale", "truncation"}
        assert data["lightcone"] == "spacelike"

    def test_geometry_scale(self):
        assert geometry_scale(MICRO) == 1 / (20 * 100)

    def test_prefactor_si(self):
        a = prefactor_si(1e-9, 1e-6, 1e-3, 1e-4)
        ratio = prefactor_si(1e-9, 1e-6, 2e-3, 1e-4) / a
        assert ratio == pytest.approx(0.5)
        with pytest.raises(DomainError):
            prefactor_si(0.0, 1e-6, 1e-3, 1e-4)


class TestParams:
    def test_warning_for_close_detectors(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            DetectorPair(1.0, 4.0, 0.5)
        assert any("overlap" in str(w.message) for w in caught)

    def test_warning_for_unused_angles(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            det = DetectorPair(1.0, 5.0, 0.5, psi=0.3)
        assert any("ignored" in str(w.message) for w in caught)
        assert negativity(MICRO, det) == negativity(MICRO, _det())

    @pytest.mark.parametrize("kw", [dict(tilt=4.0), dict(omega_T=-1.0), dict(distance_ratio=0.0),
                                    dict(delay_ratio=math.inf)])
    def test_detector_validation(self, kw):
        with pytest.raises(DomainError):
            _det(**kw)

    def test_geometry_validation(self):
        with pytest.raises(DomainError):
            CavityGeometry(20, -1)
        with pytest.raises(DomainError):
            CavityGeometry(20, 10, tau=0)

    def test_parity_parse(self):
        assert ParityFilter.parse("EvenL") is ParityFilter.EVEN
        with pytest.raises(DomainError):
            ParityFilter.parse("sideways")
