"""Command-line interface.

Every subcommand reads an optional JSON config (``--config``) whose fields
are overridden one-to-one by flags::

    {
      "preset": "microcavity",
      "geometry": {"length_ratio": 20, "radius_ratio": 10, "tau": 3.0},
      "detectors": {"omega_T": 1, "distance_ratio": 5, "delay_ratio": 0.5,
                    "tilt": 0, "psi": 0, "phi": 0},
      "filter": "all",
      "policy": {"tail_tolerance": 1e-8, "max_m": null, "max_l": null},
      "workers": 1
    }

Exit codes: 0 success, 1 verification failure, 2 usage or domain error,
3 truncation failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .correlations import negativity
from .diagnostics import (
    beat_period_longitudinal,
    beat_period_radial,
    beat_period_radial_approx,
    overlap_magnitude,
    reduced_longitudinal,
    reduced_radial,
    stationary_wavenumber,
)
from .errors import DomainError, HarvestError, OracleError, TruncationError
from .params import DEFAULT_TAU, CavityGeometry, DetectorPair, ParityFilter, get_preset
from .spectrum import HARD_CAP, TruncationPolicy, enumerate_modes, parity_weights, phases

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_TRUNCATION, EXIT_IO = 0, 1, 2, 3, 4
DIGITS = 12


def fmt(value: float) -> str:
    return f"{value:.{DIGITS}g}"


class UsageError(HarvestError):
    pass


@dataclass
class RunConfig:
    """Fully resolved run parameters."""

    length_ratio: float
    radius_ratio: float
    tau: float = DEFAULT_TAU
    preset: Optional[str] = None
    detectors: dict = field(default_factory=lambda: {
        "omega_T": 1.0, "distance_ratio": 5.0, "delay_ratio": 0.5, "tilt": 0.0, "psi": 0.0, "phi": 0.0})
    filter: str = "all"
    policy: dict = field(default_factory=lambda: {"tail_tolerance": 1e-8, "max_m": None, "max_l": None})
    workers: int = 1

    def geometry(self) -> CavityGeometry:
        return CavityGeometry(self.length_ratio, self.radius_ratio, self.tau)

    def detector_pair(self) -> DetectorPair:
        return DetectorPair(**self.detectors)

    def parity(self) -> ParityFilter:
        return ParityFilter.parse(self.filter)

    def truncation(self) -> TruncationPolicy:
        return TruncationPolicy(**{k: v for k, v in self.policy.items() if v is not None})

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "geometry": {"length_ratio": self.length_ratio, "radius_ratio": self.radius_ratio, "tau": self.tau},
            "detectors": dict(self.detectors),
            "filter": self.filter,
            "policy": dict(self.policy),
            "workers": self.workers,
        }


_CONFIG_KEYS = {"preset", "geometry", "detectors", "filter", "parity", "policy", "workers", "output"}


def load_config(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    preset = args.preset if args.preset is not None else data.get("preset")
    geometry = dict(data.get("geometry", {}))
    if preset is not None:
        p = get_preset(preset)
        preset = p.name
        geometry.setdefault("length_ratio", p.length_ratio)
        geometry.setdefault("radius_ratio", p.radius_ratio)
    for key, flag in (("length_ratio", "L"), ("radius_ratio", "R"), ("tau", "tau")):
        value = getattr(args, flag)
        if value is not None:
            geometry[key] = value
    if preset is not None and (args.L is not None or args.R is not None):
        p = get_preset(preset)
        if (geometry["length_ratio"], geometry["radius_ratio"]) != (p.length_ratio, p.radius_ratio):
            preset = None  # explicit dimensions override the preset label
    if "length_ratio" not in geometry or "radius_ratio" not in geometry:
        raise UsageError("give a preset or both --L and --R")
    cfg = RunConfig(float(geometry["length_ratio"]), float(geometry["radius_ratio"]),
                    float(geometry.get("tau", DEFAULT_TAU)), preset)
    unknown = set(data.get("detectors", {})) - set(cfg.detectors)
    if unknown:
        raise UsageError(f"unknown detector fields: {sorted(unknown)}")
    cfg.detectors.update({k: float(v) for k, v in data.get("detectors", {}).items()})
    for key, flag in (("omega_T", "omega_t"), ("distance_ratio", "d"), ("delay_ratio", "tba"),
                      ("tilt", "theta"), ("psi", "psi"), ("phi", "phi")):
        value = getattr(args, flag)
        if value is not None:
            cfg.detectors[key] = value
    cfg.filter = ParityFilter.parse(args.parity or data.get("filter", data.get("parity", "all"))).value
    policy = dict(cfg.policy)
    policy.update(data.get("policy", {}))
    for key, flag in (("tail_tolerance", "tail_tol"), ("max_m", "max_m"), ("max_l", "max_l")):
        value = getattr(args, flag)
        if value is not None:
            policy[key] = value
    cfg.policy = policy
    workers = args.workers if args.workers is not None else data.get("workers")
    if workers is None:
        workers = os.environ.get("HARVEST_WORKERS", 1)
    try:
        cfg.workers = int(workers)
    except ValueError:
        raise UsageError(f"worker count must be an integer, got {workers!r}") from None
    if cfg.workers < 1:
        raise UsageError("worker count must be >= 1")
    # validate eagerly so bad configs fail before any work
    geom = cfg.geometry()
    det = cfg.detector_pair()
    geom.check_detectors(det)
    cfg.truncation()
    return cfg


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--preset", help="microcavity, waveguide, disc or optical")
    g.add_argument("--L", type=float, help="cavity length L/sigma")
    g.add_argument("--R", type=float, help="cavity radius R/sigma")
    g.add_argument("--tau", type=float, help="c T / sigma (default 3)")
    g.add_argument("--omega-t", dest="omega_t", type=float, help="detector gap Omega T")
    g.add_argument("--d", type=float, help="detector separation D/sigma")
    g.add_argument("--tba", type=float, help="switching delay t_BA/T")
    g.add_argument("--theta", type=float, help="tilt between detector orientations (rad)")
    g.add_argument("--psi", type=float, help="accepted and ignored")
    g.add_argument("--phi", type=float, help="accepted and ignored")
    g.add_argument("--parity", help="all, even or odd")
    g.add_argument("--tail-tol", dest="tail_tol", type=float, help="relative tail tolerance")
    g.add_argument("--max-m", dest="max_m", type=int, help="explicit radial cap")
    g.add_argument("--max-l", dest="max_l", type=int, help="explicit longitudinal cap")
    g.add_argument("--workers", type=int, help="worker count (default $HARVEST_WORKERS or 1)")


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


# ---------------------------------------------------------------- commands


def cmd_eval(args) -> int:
    cfg = load_config(args)
    res = negativity(cfg.geometry(), cfg.detector_pair(), cfg.parity(), cfg.truncation(), workers=cfg.workers)
    out = res.to_dict(DIGITS)
    out["config"] = cfg.to_dict()
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import SweepPlan, run_sweep, write_outputs

    try:
        with open(args.plan) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"plan {args.plan} is not valid JSON: {exc}") from None
    plan = SweepPlan.from_dict(raw)
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("HARVEST_WORKERS", 1))
    out_dir = Path(args.out)
    stem = args.stem or plan.name
    cache = None if args.no_cache else (Path(args.cache) if args.cache else out_dir / f"{stem}.cache.jsonl")
    if cache is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.touch()
    result = run_sweep(plan, workers=workers, cache_path=cache)
    paths = write_outputs(result, out_dir, stem)
    summary = result.summary()
    summary["files"] = {k: str(v) for k, v in paths.items()}
    summary["plan_hash"] = result.metadata["plan_hash"]
    print(json.dumps(summary, indent=2))
    verb = "resumed" if result.metadata["reused"] else "completed"
    print(f"{verb}, {result.metadata['computed']} points computed")
    return EXIT_OK


def diag_rows(cfg: RunConfig, max_index: int) -> list[tuple[str, str, float]]:
    geom, det, policy = cfg.geometry(), cfg.detector_pair(), cfg.truncation()
    rows: list[tuple[str, str, float]] = []
    for l in range(max_index + 1):
        rows.append(("beat_period_radial", str(l), beat_period_radial(l, geom)))
        rows.append(("beat_period_radial_approx", str(l), beat_period_radial_approx(l, geom)))
    for m in range(1, max_index + 1):
        rows.append(("beat_period_longitudinal", str(m), beat_period_longitudinal(m, geom)))
    for l in range(max_index + 1):
        m_l, l_l = reduced_radial(l, geom, det, policy)
        rows.append(("M_l", str(l), m_l.value))
        rows.append(("L_l", str(l), l_l.value))
    for m in range(1, max_index + 1):
        m_m, l_m = reduced_longitudinal(m, geom, det, policy)
        rows.append(("M_m", str(m), m_m.value))
        rows.append(("L_m", str(m), l_m.value))
    if det.delay_ratio != 0:
        for m in range(1, max_index + 1):
            rows.append(("stationary_wavenumber", str(m), stationary_wavenumber(m, geom, det)))
    rows.append(("overlap_magnitude", "", overlap_magnitude(det.distance_ratio)))
    return rows


def cmd_diag(args) -> int:
    cfg = load_config(args)
    rows = diag_rows(cfg, args.max_index)
    fh, close = _open_out(args.out)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["quantity", "index", "value"])
        for q, i, v in rows:
            writer.writerow([q, i, fmt(v)])
    finally:
        if close:
            fh.close()
    return EXIT_OK


def decade_ladder(start: int, stop: int) -> list[int]:
    """1-2-5 ladder from ``start`` up to ``stop``."""
    caps, decade = [], 1
    while decade <= stop:
        for f in (1, 2, 5):
            c = f * decade
            if start <= c <= stop:
                caps.append(c)
        decade *= 10
    return caps


@dataclass
class ConvergenceRow:
    cap: int
    local: float
    abs_nonlocal: float
    negativity: float
    change: float
    flagged: bool = False


def convergence_study(cfg: RunConfig, index: str, start: int = 10, threshold: float = 1e-6,
                      stop: int = HARD_CAP) -> tuple[list[ConvergenceRow], Optional[int]]:
    """Evaluate on a cap ladder for one index; the other index stays adaptive.

    The change at a cap is max(|dL|/L, |d|M||/|M|) relative to the previous
    rung; the first cap with change below ``threshold`` is flagged.
    """
    if index not in ("m", "l"):
        raise UsageError("index must be 'm' or 'l'")
    geom, det, filt = cfg.geometry(), cfg.detector_pair(), cfg.parity()
    base = {k: v for k, v in cfg.policy.items() if v is not None}
    base.pop("max_m" if index == "m" else "max_l", None)
    rows: list[ConvergenceRow] = []
    flagged = None
    prev = None
    for cap in decade_ladder(start, stop):
        policy = TruncationPolicy(**base, **{("max_m" if index == "m" else "max_l"): cap})
        res = negativity(geom, det, filt, policy, workers=cfg.workers)
        change = math.nan
        if prev is not None:
            dl = abs(res.local - prev.local) / abs(prev.local)
            dm = abs(abs(res.non_local) - abs(prev.non_local)) / abs(prev.non_local) if prev.non_local else 0.0
            change = max(dl, dm)
        row = ConvergenceRow(cap, res.local, abs(res.non_local), res.negativity, change)
        rows.append(row)
        if prev is not None and change < threshold:
            row.flagged = True
            flagged = cap
            break
        prev = res
    return rows, flagged


def cmd_converge(args) -> int:
    cfg = load_config(args)
    rows, flagged = convergence_study(cfg, args.index, args.start, args.threshold)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow([f"max_{args.index}", "local", "abs_nonlocal", "negativity", "relative_change", "flag"])
    for r in rows:
        writer.writerow([r.cap, fmt(r.local), fmt(r.abs_nonlocal), fmt(r.negativity),
                         "" if math.isnan(r.change) else fmt(r.change), "converged" if r.flagged else ""])
    if flagged is None:
        print(f"ladder exhausted without change < {args.threshold:g}", file=sys.stderr)
        return EXIT_TRUNCATION
    print(f"flagged_cap,{flagged}")
    return EXIT_OK


def specfun_checks() -> list[tuple[str, float, float]]:
    """(name, observed, tolerance) for the special-function invariants."""
    from scipy import special as sp

    from .specfun import ZERO_TABLE, bessel_j0, bessel_j1, faddeeva

    checks = []
    zeros = ZERO_TABLE.zeros(2000)
    checks.append(("max |J0(chi_m)|, m <= 2000", float(np.max(np.abs(bessel_j0(zeros)))), 1e-12))
    m = np.arange(1, zeros.size + 1)
    excess = np.abs(zeros - (m - 0.25) * np.pi) - (1.0 / (4 * m) + 1e-3)
    checks.append(("McMahon bound excess", float(max(0.0, excess.max())), 0.0))
    checks.append(("zeros not increasing", float(np.sum(np.diff(zeros) <= 0)), 0.0))
    j1 = bessel_j1(zeros[:201])
    checks.append(("J1 interlacing violations, m <= 200", float(np.sum(np.sign(j1[1:]) == np.sign(j1[:-1]))), 0.0))
    x = np.linspace(0.0, 60.0, 6001)
    ref0, ref1 = sp.j0(x), sp.j1(x)
    checks.append(("max |J0 - scipy j0| on [0, 60]", float(np.max(np.abs(bessel_j0(x) - ref0))), 1e-10))
    checks.append(("max |J1 - scipy j1| on [0, 60]", float(np.max(np.abs(bessel_j1(x) - ref1))), 1e-10))
    xr = np.linspace(-20, 20, 4001)
    checks.append(("max |Re w(x) - exp(-x^2)|", float(np.max(np.abs(faddeeva(xr).real - np.exp(-xr**2)))), 1e-10))
    rng = np.random.default_rng(7)
    z = rng.uniform(-10, 10, 500) + 1j * rng.uniform(0, 10, 500)
    sym = np.abs(faddeeva(np.conj(-z)) - np.conj(faddeeva(z))) / np.abs(faddeeva(z))
    checks.append(("max conjugation-symmetry error", float(sym.max()), 1e-10))
    wi = faddeeva(1j).real
    checks.append(("|w(i) - e erfc(1)| / e erfc(1)", abs(wi - sp.erfcx(1.0)) / sp.erfcx(1.0), 1e-10))
    return checks


def parity_checks() -> list[tuple[str, float, float]]:
    ls = np.arange(0, 400)
    worst_sign = worst_cos = 0.0
    for d, length in ((5.0, 20.0), (7.3, 20.0), (5.0, 1000.0), (12.0, 31.0)):
        q, p = parity_weights(ls, d, length)
        gm, gp = phases(ls, d, length)
        worst_sign = max(worst_sign, float(np.max(np.abs(p - np.where(ls % 2 == 0, 1, -1) * q))))
        worst_cos = max(worst_cos, float(np.max(np.abs(q - np.cos(gm) ** 2))),
                        float(np.max(np.abs(p - np.cos(gm) * np.cos(gp)))))
    return [("max |p_l - (-1)^l q_l|", worst_sign, 0.0),
            ("max parity-weight deviation from phase form", worst_cos, 1e-12)]


def _report(checks: list[tuple[str, float, float]]) -> bool:
    ok = True
    for name, observed, tol in checks:
        passed = observed <= tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {observed:.3e} (tolerance {tol:.1e})")
    return ok


def cmd_selftest(args) -> int:
    return EXIT_OK if _report(specfun_checks()) else EXIT_VERIFY


def cmd_verify(args) -> int:
    from .oracle import run_suite

    start = time.perf_counter()
    checks = parity_checks()
    try:
        suite = run_suite(count=args.count, assembled=args.assembled, seed=args.seed)
        checks += [
            ("max per-mode local deviation", max(suite.mode_local), 1e-8),
            ("max per-mode non-local deviation", max(suite.mode_nonlocal), 1e-8),
        ]
        if suite.sum_local:
            checks += [
                ("max assembled local deviation", max(suite.sum_local), 1e-8),
                ("max assembled non-local deviation", max(suite.sum_nonlocal), 1e-8),
            ]
    except OracleError as exc:
        print(f"FAIL  oracle quadrature: {exc}")
        return EXIT_VERIFY
    ok = _report(checks)
    print(f"oracle tuples: {args.count}, assembled: {min(args.assembled, args.count)}, "
          f"max deviation {max(c[1] for c in checks[2:]):.3e}, {time.perf_counter() - start:.1f} s")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_modes(args) -> int:
    cfg = load_config(args)
    table, report = enumerate_modes(cfg.geometry(), cfg.detector_pair(), cfg.truncation())
    fh, close = _open_out(args.out)
    try:
        table.write_csv(fh, DIGITS)
    finally:
        if close:
            fh.close()
    print(json.dumps(report.to_dict()), file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harvest", description="Cavity entanglement-harvesting calculator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate one parameter point")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run a sweep plan")
    p.add_argument("plan", help="JSON sweep plan")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--stem", help="output file stem (default: plan name)")
    p.add_argument("--cache", help="resume cache file (default: <out>/<stem>.cache.jsonl)")
    p.add_argument("--no-cache", action="store_true", help="do not read or write a resume cache")
    p.add_argument("--workers", type=int, help="worker processes (default $HARVEST_WORKERS or 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diag", help="beat periods, reduced sums and related scales as CSV")
    _add_config_flags(p)
    p.add_argument("--max-index", dest="max_index", type=int, default=3)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_diag)

    p = sub.add_parser("converge", help="convergence table over a 1-2-5 cap ladder")
    _add_config_flags(p)
    p.add_argument("--index", choices=("m", "l"), default="l")
    p.add_argument("--start", type=int, default=10)
    p.add_argument("--threshold", type=float, default=1e-6)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("verify", help="compare closed forms with quadrature")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--assembled", type=int, default=20)
    p.add_argument("--seed", type=int, default=20240611)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("selftest-specfun", help="check special-function invariants")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("modes", help="dump the retained mode table as CSV")
    _add_config_flags(p)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_modes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except TruncationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRUNCATION
    except (UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
