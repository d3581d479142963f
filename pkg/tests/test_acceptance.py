"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line (shown in the terminal summary) before
asserting, so a failing criterion still reports its measured values.
"""
from __future__ import annotations

import math
import re
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import find_peaks

from harvest.cli import main
from harvest.correlations import amplitude_E_scaled, negativity
from harvest.oracle import closed_form_mode_terms, oracle_mode_terms
from harvest.params import CavityGeometry, DetectorPair, ParityFilter
from harvest.spectrum import ModeIndex, TruncationPolicy, parity_weights
from harvest.sweep import SweepPlan, run_sweep

PLANS = Path(__file__).resolve().parent.parent / "plans"
WORKERS = 4
# frozen after the first oracle-confirmed run of the radial scan (observed 1.12953)
LOCAL_FLATNESS_BOUND = 1.135
EPS = np.finfo(float).eps


def _sweep(name: str):
    return run_sweep(SweepPlan.from_json(PLANS / f"{name}.json"), workers=WORKERS)


def _cli(capsys, *argv):
    code = main(list(argv))
    out, _ = capsys.readouterr()
    return code, out


def beam_peaks(t: np.ndarray, y: np.ndarray):
    """Local maxima above 1% of the window maximum with their half-maximum widths.

    The width is the distance between the half-height crossings on either
    side, linearly interpolated; None if a crossing lies outside the window.
    """
    top = float(y.max())
    if top <= 0:
        return []
    peaks = []
    for i in find_peaks(y, height=0.01 * top)[0]:
        half = 0.5 * y[i]
        j = i
        while j > 0 and y[j] > half:
            j -= 1
        k = i
        while k < len(y) - 1 and y[k] > half:
            k += 1
        width = None
        if y[j] <= half and y[k] <= half:
            left = np.interp(half, [y[j], y[j + 1]], [t[j], t[j + 1]])
            right = np.interp(half, [y[k], y[k - 1]], [t[k], t[k - 1]])
            width = float(right - left)
        peaks.append((float(t[i]), float(y[i]), width))
    return sorted(peaks, key=lambda p: -p[1])


def test_criterion_1_beat_periods(capsys, record_criterion):
    start = time.perf_counter()
    code, out = _cli(capsys, "diag", "--L", "20", "--R", "10", "--tau", "3", "--max-index", "1")
    radial = {tuple(r.split(",")[:2]): float(r.split(",")[2]) for r in out.splitlines()[1:]}
    code_d, out_d = _cli(capsys, "diag", "--preset", "disc", "--tau", "3", "--max-index", "1")
    disc = {tuple(r.split(",")[:2]): float(r.split(",")[2]) for r in out_d.splitlines()[1:]}
    elapsed = time.perf_counter() - start
    d0 = radial[("beat_period_radial", "0")]
    d1 = disc[("beat_period_longitudinal", "1")]
    ok0 = abs(d0 - 6.8) <= 0.02 * 6.8
    ok1 = abs(d1 - 13.3) <= 0.03 * 13.3
    passed = code == code_d == 0 and ok0 and ok1 and elapsed < 1.0
    record_criterion("1 beat periods", passed,
                     f"D0/T={d0:.4f} ({'ok' if ok0 else 'out'} vs 6.8+-2%), "
                     f"D1/T={d1:.4f} ({'ok' if ok1 else 'out'} vs 13.3+-3%), {elapsed:.2f} s")
    assert passed


@pytest.mark.slow
def test_criterion_2_beam(record_criterion):
    start = time.perf_counter()
    details, passed = [], True
    for preset in ("microcavity", "waveguide"):
        res = _sweep(f"beam_{preset}")
        peaks = beam_peaks(res.axis_values()[0], res.values("negativity"))
        if not peaks:
            details.append(f"{preset}: no peak")
            passed = False
            continue
        loc, _, width = peaks[0]
        ok = abs(loc - 6.9) <= 0.3 and width is not None and abs(width - 1.2) <= 0.5
        passed &= ok
        details.append(f"{preset}: peak {loc:.3f}, FWHM {width if width is None else round(width, 3)}")
    for preset in ("disc", "optical"):
        res = _sweep(f"beam_{preset}")
        peaks = beam_peaks(res.axis_values()[0], res.values("negativity"))
        passed &= not peaks
        details.append(f"{preset}: {len(peaks)} peaks (max {res.values('negativity').max():.3g})")
    elapsed = time.perf_counter() - start
    passed &= elapsed < 300
    record_criterion("2 beam", passed, "; ".join(details) + f"; {elapsed:.1f} s")
    assert passed


def test_criterion_3_parity_suppression(record_criterion):
    start = time.perf_counter()
    details, passed = [], True
    for half in ("even", "odd"):
        res = _sweep(f"beam_waveguide_{half}")
        peaks = beam_peaks(res.axis_values()[0], res.values("negativity"))
        passed &= not peaks
        details.append(f"{half} l: " + (f"peak {peaks[0][1]:.3g} at {peaks[0][0]:.3f}" if peaks else "no peak"))
    elapsed = time.perf_counter() - start
    passed &= elapsed < 300
    record_criterion("3 parity suppression", passed, "; ".join(details) + f"; {elapsed:.1f} s")
    assert passed


def test_criterion_4_radial_flatness(record_criterion):
    start = time.perf_counter()
    local_scan = _sweep("radial_scan_t0p5")
    delay_scan = _sweep("radial_scan_t3p0")
    scale = local_scan.values("geometry_scale")
    local = local_scan.values("local") * scale
    nonlocal_abs = delay_scan.values("abs_nonlocal") * delay_scan.values("geometry_scale")
    local_ratio = local.max() / local.min()
    decay = nonlocal_abs.max() / nonlocal_abs.min()
    # oracle confirmation of the leading mode at both ends of the span
    det = DetectorPair(omega_T=1.0, distance_ratio=5.0, delay_ratio=3.0)
    worst = 0.0
    for radius in (5.0, 1000.0):
        geom = CavityGeometry(20.0, radius)
        ol, om = oracle_mode_terms(ModeIndex(1, 0), geom, det)
        cl, cm = closed_form_mode_terms(ModeIndex(1, 0), geom, det)
        worst = max(worst, abs(ol - cl) / cl, abs(om - cm) / abs(cm))
    elapsed = time.perf_counter() - start
    passed = (local_ratio < LOCAL_FLATNESS_BOUND and math.log(decay) > 10 * math.log(local_ratio)
              and worst <= 1e-8 and elapsed < 120)
    record_criterion("4 radial flatness", passed,
                     f"L max/min {local_ratio:.5f} (bound {LOCAL_FLATNESS_BOUND}), |M|(t=3) decay {decay:.3g}x, "
                     f"log ratio {math.log(decay) / math.log(local_ratio):.1f} (> 10), oracle dev {worst:.1e}, "
                     f"{elapsed:.1f} s")
    assert passed


def test_criterion_5_turning_point(record_criterion):
    start = time.perf_counter()
    res = _sweep("radial_scan_t3p0")
    radius = res.axis_values()[0]
    gap = res.values("abs_nonlocal") - res.values("local")
    crossings = []
    for i in range(len(radius) - 1):
        if gap[i] > 0 >= gap[i + 1]:
            # interpolate on the log-spaced axis
            frac = gap[i] / (gap[i] - gap[i + 1])
            crossings.append(float(np.exp(np.log(radius[i]) + frac * np.log(radius[i + 1] / radius[i]))))
    elapsed = time.perf_counter() - start
    passed = len(crossings) == 1 and abs(crossings[0] - 7.5) <= 1.5 and elapsed < 120
    record_criterion("5 turning point", passed, f"|M| drops below L at R/sigma = {crossings}, {elapsed:.1f} s")
    assert passed


@pytest.mark.slow
def test_criterion_6_smallest_separation(record_criterion):
    start = time.perf_counter()
    details, passed = [], True
    for preset in ("microcavity", "waveguide", "disc", "optical"):
        summary = _sweep(f"distance_delay_{preset}").summary()
        where = summary["argmax"]
        ok = where["distance_ratio"] == 5.0 and summary["argmax_lightcone"] == "spacelike"
        passed &= ok
        details.append(f"{preset}: D={where['distance_ratio']:g}, t={where['delay_ratio']:.3g}, "
                       f"{summary['argmax_lightcone']}")
    elapsed = time.perf_counter() - start
    passed &= elapsed < 900
    record_criterion("6 smallest-separation maximum", passed, "; ".join(details) + f"; {elapsed:.1f} s")
    assert passed


@pytest.mark.slow
def test_criterion_7_oracle(capsys, record_criterion):
    start = time.perf_counter()
    code, out = _cli(capsys, "verify", "--count", "20", "--assembled", "20")
    elapsed = time.perf_counter() - start
    match = re.search(r"max deviation ([0-9.e+-]+)", out)
    deviation = float(match.group(1)) if match else math.inf
    passed = code == 0 and deviation <= 1e-8 and elapsed < 120
    record_criterion("7 oracle equivalence", passed, f"20 tuples, max relative deviation {deviation:.2e}, {elapsed:.1f} s")
    assert passed


_INVARIANT_CASES = {"count": 0, "failures": []}


@settings(max_examples=1000, deadline=None, derandomize=True)
@given(
    length=st.floats(10, 60), radius=st.floats(5, 30), distance=st.floats(0.5, 1.0),
    omega=st.floats(0, 3), delay=st.floats(-10, 10), tilt=st.floats(0, math.pi),
    caps=st.tuples(st.integers(1, 12), st.integers(0, 40)), x=st.floats(0, 40), s=st.floats(-20, 20),
)
def _invariants(length, radius, distance, omega, delay, tilt, caps, x, s):
    _INVARIANT_CASES["count"] += 1
    geom = CavityGeometry(length, radius)
    det = DetectorPair(omega_T=omega, distance_ratio=distance * (length - 6.0), delay_ratio=delay, tilt=tilt)
    policy = TruncationPolicy(max_m=caps[0], max_l=caps[1])
    ls = np.arange(caps[1] + 1)
    q, p = parity_weights(ls, det.distance_ratio, length)
    checks = {
        "p = (-1)^l q": bool(np.array_equal(p, np.where(ls % 2 == 0, q, -q))),
    }
    full, even, odd = (negativity(geom, det, f, policy) for f in ParityFilter)
    flat = negativity(geom, det.with_(tilt=0.0), ParityFilter.ALL, policy)
    checks["L additive"] = full.local == even.local + odd.local
    checks["M additive"] = full.non_local == even.non_local + odd.non_local
    # rounding is measured against the parity parts (which may cancel) and M(0)
    scale = abs(even.non_local) + abs(odd.non_local)
    checks["M tilt"] = abs(full.non_local - math.cos(tilt) * flat.non_local) <= 4 * EPS * (scale + abs(flat.non_local))
    checks["negativity >= 0"] = full.negativity >= 0 and even.negativity >= 0 and odd.negativity >= 0
    checks["Re E(x, 0)"] = abs(amplitude_E_scaled(x, 0.0).real - math.exp(-0.5 * x * x)) <= 1e-15
    checks["E(0, s) + E(0, -s)"] = abs(amplitude_E_scaled(0.0, s) + amplitude_E_scaled(0.0, -s) - 2) <= 1e-14
    bad = [k for k, v in checks.items() if not v]
    if bad:
        _INVARIANT_CASES["failures"].append(bad)
    assert not bad, bad


def test_criterion_8_invariants(record_criterion):
    start = time.perf_counter()
    error = None
    try:
        _invariants()
    except AssertionError as exc:
        error = exc
    elapsed = time.perf_counter() - start
    n = _INVARIANT_CASES["count"]
    passed = error is None and n >= 1000 and elapsed < 60
    record_criterion("8 algebraic invariants", passed,
                     f"{n} randomized cases, failures {_INVARIANT_CASES['failures'][:1]}, {elapsed:.1f} s")
    assert passed


def test_criterion_9_convergence_caps(capsys, record_criterion):
    start = time.perf_counter()
    anchors = [
        (("--L", "20", "--R", "10", "--index", "l"), 100),
        (("--L", "1000", "--R", "10", "--index", "l"), 4000),
        (("--L", "20", "--R", "5", "--index", "m"), 10),
        (("--L", "20", "--R", "500", "--index", "m"), 1000),
    ]
    details, passed = [], True
    for argv, expected in anchors:
        code, out = _cli(capsys, "converge", *argv)
        last = out.strip().splitlines()[-1]
        flagged = int(last.split(",")[1]) if code == 0 and last.startswith("flagged_cap") else None
        ok = flagged is not None and expected / 2 <= flagged <= expected * 2
        passed &= ok
        details.append(f"{' '.join(argv[:4])} {argv[-1]}: {flagged} vs {expected}")
    elapsed = time.perf_counter() - start
    passed &= elapsed < 600
    record_criterion("9 convergence caps", passed, "; ".join(details) + f"; {elapsed:.1f} s")
    assert passed
