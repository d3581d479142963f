"""Parameter sweeps over geometry, detector separation, gap and delay.

A :class:`SweepPlan` names zero, one or two swept axes plus fixed values.
Grid points are evaluated independently by :func:`harvest.correlations.negativity`,
optionally in a process pool.  Points are handed out in contiguous chunks
sorted by (geometry, |delay|) so each worker reuses its cached mode column
sums; results are reassembled in grid order, so output does not depend on
the worker count.

Finished points can be persisted to a JSON-lines file keyed by the plan hash;
re-running the same plan skips them.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import random
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .correlations import CorrelationResult, negativity
from .errors import DomainError, HarvestError
from .params import DEFAULT_TAU, CavityGeometry, DetectorPair, ParityFilter, get_preset
from .spectrum import TruncationPolicy

__all__ = [
    "SCHEMA_VERSION",
    "PARAMETERS",
    "Axis",
    "SweepPlan",
    "SweepPoint",
    "SweepResult",
    "run_sweep",
    "lightcone_overlay",
    "write_outputs",
]

SCHEMA_VERSION = 1
MIN_LENGTH = 10.0
MIN_RADIUS = 5.0
PARAMETERS = ("length_ratio", "radius_ratio", "distance_ratio", "omega_T", "delay_ratio")
FIXED_ONLY = ("tilt",)
ALIASES = {
    "l": "length_ratio", "length": "length_ratio",
    "r": "radius_ratio", "radius": "radius_ratio",
    "d": "distance_ratio", "distance": "distance_ratio",
    "omega": "omega_T", "omegat": "omega_T", "omega_t": "omega_T", "gap": "omega_T",
    "t": "delay_ratio", "tba": "delay_ratio", "delay": "delay_ratio",
    "theta": "tilt",
}
DETECTOR_DEFAULTS = {"omega_T": 1.0, "distance_ratio": 5.0, "delay_ratio": 0.5, "tilt": 0.0}
CSV_RESULT_COLUMNS = ("local", "re_nonlocal", "im_nonlocal", "abs_nonlocal", "estimator", "negativity",
                      "lightcone", "max_m", "max_l", "tail_bound", "geometry_scale", "error")


def canonical_name(name: str) -> str:
    key = str(name).strip()
    if key in PARAMETERS or key in FIXED_ONLY:
        return key
    alias = ALIASES.get(key.lower())
    if alias is None:
        raise DomainError(f"unknown sweep parameter {name!r}")
    return alias


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    count: int
    scale: str = "linear"

    def __post_init__(self):
        name = canonical_name(self.name)
        if name not in PARAMETERS:
            raise DomainError(f"{name} cannot be swept")
        object.__setattr__(self, "name", name)
        if int(self.count) != self.count or self.count < 2:
            raise DomainError(f"axis {name} needs count >= 2, got {self.count!r}")
        object.__setattr__(self, "count", int(self.count))
        lo, hi = float(self.min), float(self.max)
        if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
            raise DomainError(f"axis {name} needs finite bounds with min <= max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)
        scale = str(self.scale).lower()
        if scale not in ("linear", "log"):
            raise DomainError(f"axis scale must be 'linear' or 'log', got {self.scale!r}")
        if scale == "log" and lo <= 0:
            raise DomainError(f"log axis {name} needs positive bounds")
        object.__setattr__(self, "scale", scale)

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)

    def to_dict(self) -> dict:
        return {"name": self.name, "min": self.min, "max": self.max, "count": self.count, "scale": self.scale}


@dataclass(frozen=True)
class SweepPlan:
    """A 0-, 1- or 2-axis grid with fixed values for everything else."""

    axes: tuple
    fixed: dict
    filter: ParityFilter = ParityFilter.ALL
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    preset: Optional[str] = None
    tau: float = DEFAULT_TAU
    name: str = "sweep"

    @classmethod
    def from_dict(cls, data: dict) -> "SweepPlan":
        data = dict(data)
        unknown = set(data) - {"axes", "fixed", "filter", "parity", "policy", "preset", "tau", "name"}
        if unknown:
            raise DomainError(f"unknown plan keys: {sorted(unknown)}")
        axes = tuple(Axis(**a) if isinstance(a, dict) else a for a in data.get("axes", []))
        if len(axes) > 2:
            raise DomainError("at most two axes can be swept")
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise DomainError("an axis appears twice")
        fixed = {}
        for key, value in dict(data.get("fixed", {})).items():
            name = canonical_name(key)
            if name in fixed:
                raise DomainError(f"fixed parameter {name} given twice")
            fixed[name] = float(value)
        clash = set(names) & set(fixed)
        if clash:
            raise DomainError(f"parameters both swept and fixed: {sorted(clash)}")
        preset = data.get("preset")
        if preset is not None:
            p = get_preset(preset)
            preset = p.name
            for key, value in (("length_ratio", p.length_ratio), ("radius_ratio", p.radius_ratio)):
                if key not in names and key not in fixed:
                    fixed[key] = value
        for key, value in DETECTOR_DEFAULTS.items():
            if key not in names:
                fixed.setdefault(key, value)
        for key in ("length_ratio", "radius_ratio"):
            if key not in names and key not in fixed:
                raise DomainError(f"{key} must be swept, fixed or given by a preset")
        policy = data.get("policy", {})
        if not isinstance(policy, TruncationPolicy):
            policy = TruncationPolicy(**policy)
        filt = ParityFilter.parse(data.get("filter", data.get("parity", "all")))
        plan = cls(axes, fixed, filt, policy, preset, float(data.get("tau", DEFAULT_TAU)),
                   str(data.get("name", "sweep")))
        plan.validate()
        return plan

    @classmethod
    def from_json(cls, path) -> "SweepPlan":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self) -> None:
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise DomainError("tau must be finite and positive")
        for key, floor in (("length_ratio", MIN_LENGTH), ("radius_ratio", MIN_RADIUS)):
            low = self._range(key)[0]
            if low < floor:
                raise DomainError(f"{key} must stay >= {floor} in sweeps, got {low}")
        d_hi = self._range("distance_ratio")[1]
        l_lo = self._range("length_ratio")[0]
        if d_hi >= l_lo:
            raise DomainError(f"detector distance up to {d_hi} does not fit in cavity length {l_lo}")

    def _range(self, name: str) -> tuple[float, float]:
        for a in self.axes:
            if a.name == name:
                return a.min, a.max
        return self.fixed[name], self.fixed[name]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "axes": [a.to_dict() for a in self.axes],
            "fixed": {k: self.fixed[k] for k in sorted(self.fixed)},
            "filter": self.filter.value,
            "policy": {"tail_tolerance": self.policy.tail_tolerance, "max_m": self.policy.max_m,
                       "max_l": self.policy.max_l, "hard_cap_m": self.policy.hard_cap_m,
                       "hard_cap_l": self.policy.hard_cap_l},
            "preset": self.preset,
            "tau": self.tau,
        }

    def plan_hash(self) -> str:
        data = self.to_dict()
        data.pop("name")
        text = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def shape(self) -> tuple:
        return tuple(a.count for a in self.axes)

    def points(self) -> list[dict]:
        """Parameter dicts in row-major grid order (first axis slowest)."""
        grids = [a.values() for a in self.axes]
        out = []
        for idx in np.ndindex(*self.shape) if self.axes else [()]:
            point = dict(self.fixed)
            for a, g, i in zip(self.axes, grids, idx):
                point[a.name] = float(g[i])
            out.append(point)
        return out


@dataclass
class SweepPoint:
    coords: dict
    result: Optional[CorrelationResult]
    error: Optional[dict] = None

    def to_dict(self) -> dict:
        out = {"coords": self.coords}
        if self.result is not None:
            out["result"] = self.result.to_dict()
        if self.error is not None:
            out["error"] = self.error
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SweepPoint":
        result = CorrelationResult.from_dict(data["result"]) if "result" in data else None
        return cls(data["coords"], result, data.get("error"))


@dataclass
class SweepResult:
    plan: SweepPlan
    points: list
    metadata: dict

    def values(self, quantity: str) -> np.ndarray:
        """Grid-shaped array of a result field (NaN at failed points)."""
        getters = {
            "local": lambda r: r.local,
            "abs_nonlocal": lambda r: abs(r.non_local),
            "re_nonlocal": lambda r: r.non_local.real,
            "im_nonlocal": lambda r: r.non_local.imag,
            "estimator": lambda r: r.estimator,
            "negativity": lambda r: r.negativity,
            "tail_bound": lambda r: r.truncation.tail_bound,
            "geometry_scale": lambda r: r.geometry_scale,
        }
        get = getters[quantity]
        arr = np.array([get(p.result) if p.result is not None else np.nan for p in self.points])
        return arr.reshape(self.plan.shape) if self.plan.axes else arr

    def axis_values(self) -> list[np.ndarray]:
        return [a.values() for a in self.plan.axes]

    def summary(self) -> dict:
        neg = np.array([p.result.negativity if p.result is not None else np.nan for p in self.points])
        ok = np.isfinite(neg)
        out = {"points": len(self.points), "failed": int((~ok).sum())}
        if ok.any():
            best = int(np.nanargmax(neg))
            out.update(
                min_negativity=float(np.nanmin(neg)),
                max_negativity=float(np.nanmax(neg)),
                argmax={a.name: self.points[best].coords[a.name] for a in self.plan.axes},
                argmax_lightcone=self.points[best].result.lightcone.value,
            )
        return out

    def to_csv(self, digits: int = 12) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = [a.name for a in self.plan.axes]
        writer.writerow(names + list(CSV_RESULT_COLUMNS))
        fmt = lambda v: f"{v:.{digits}g}"
        for p in self.points:
            row = [fmt(p.coords[n]) for n in names]
            r = p.result
            if r is None:
                row += [""] * (len(CSV_RESULT_COLUMNS) - 1) + [p.error.get("type", "error")]
            else:
                row += [fmt(r.local), fmt(r.non_local.real), fmt(r.non_local.imag), fmt(abs(r.non_local)),
                        fmt(r.estimator), fmt(r.negativity), r.lightcone.value, r.truncation.max_m,
                        r.truncation.max_l, fmt(r.truncation.tail_bound), fmt(r.geometry_scale), ""]
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self, digits: int = 12) -> str:
        def point(p):
            out = {"coords": {a.name: float(f"{p.coords[a.name]:.{digits}g}") for a in self.plan.axes}}
            if p.result is not None:
                out["result"] = p.result.to_dict(digits)
            if p.error is not None:
                out["error"] = p.error
            return out

        doc = {
            "schema_version": SCHEMA_VERSION,
            "metadata": self.metadata,
            "plan": self.plan.to_dict(),
            "summary": self.summary(),
            "points": [point(p) for p in self.points],
        }
        return json.dumps(doc, indent=1)


def _evaluate(point: dict, plan: SweepPlan) -> SweepPoint:
    coords = dict(point)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            geom = CavityGeometry(point["length_ratio"], point["radius_ratio"], plan.tau)
            det = DetectorPair(point["omega_T"], point["distance_ratio"], point["delay_ratio"], point["tilt"])
            return SweepPoint(coords, negativity(geom, det, plan.filter, plan.policy))
    except HarvestError as exc:
        return SweepPoint(coords, None, {"type": type(exc).__name__, "message": str(exc)})


def _evaluate_chunk(args) -> list[tuple[int, SweepPoint]]:
    plan, items = args
    return [(i, _evaluate(p, plan)) for i, p in items]


def _cache_order(points: list[dict], todo: list[int]) -> list[int]:
    key = lambda i: (points[i]["length_ratio"], points[i]["radius_ratio"], abs(points[i]["delay_ratio"]), i)
    return sorted(todo, key=key)


def _load_cache(path: Path, plan_hash: str) -> dict[int, SweepPoint]:
    done: dict[int, SweepPoint] = {}
    if not path.exists():
        return done
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # a torn final line from an interrupted run
            if rec.get("plan_hash") != plan_hash:
                continue
            done[int(rec["index"])] = SweepPoint.from_dict(rec["point"])
    return done


def _parity_check(plan: SweepPlan, points: list[SweepPoint], seed: str) -> dict:
    """Recompute ~1% of points per parity and confirm All = Even + Odd exactly."""
    ok = [i for i, p in enumerate(points) if p.result is not None]
    if not ok:
        return {"checked": 0, "max_local_mismatch": 0.0, "max_nonlocal_mismatch": 0.0}
    rng = random.Random(seed)
    chosen = sorted(rng.sample(ok, max(1, math.ceil(0.01 * len(ok)))))
    worst_l = worst_m = 0.0
    for i in chosen:
        c = points[i].coords
        geom = CavityGeometry(c["length_ratio"], c["radius_ratio"], plan.tau)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            det = DetectorPair(c["omega_T"], c["distance_ratio"], c["delay_ratio"], c["tilt"])
        parts = {f: negativity(geom, det, f, plan.policy) for f in ParityFilter}
        all_, ev, od = parts[ParityFilter.ALL], parts[ParityFilter.EVEN], parts[ParityFilter.ODD]
        worst_l = max(worst_l, abs(all_.local - (ev.local + od.local)))
        worst_m = max(worst_m, abs(all_.non_local - (ev.non_local + od.non_local)))
    return {"checked": len(chosen), "indices": chosen, "max_local_mismatch": worst_l,
            "max_nonlocal_mismatch": worst_m}


def default_workers() -> int:
    env = os.environ.get("HARVEST_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise DomainError(f"HARVEST_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise DomainError("HARVEST_WORKERS must be >= 1")
        return n
    return 1


def run_sweep(plan: SweepPlan, workers: Optional[int] = None, cache_path=None,
              parity_check: bool = True) -> SweepResult:
    """Evaluate every grid point of ``plan``.

    ``cache_path`` names a JSON-lines file; points already stored there for
    the same plan hash are reused and new ones appended.
    """
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise DomainError("workers must be >= 1")
    start = time.perf_counter()
    plan_hash = plan.plan_hash()
    raw = plan.points()
    done: dict[int, SweepPoint] = {}
    cache = Path(cache_path) if cache_path is not None else None
    if cache is not None:
        done = _load_cache(cache, plan_hash)
    todo = _cache_order(raw, [i for i in range(len(raw)) if i not in done])

    fresh: list[tuple[int, SweepPoint]] = []
    if todo:
        n_chunks = min(len(todo), workers * 4) if workers > 1 else 1
        size = math.ceil(len(todo) / n_chunks)
        chunks = [[(i, raw[i]) for i in todo[k:k + size]] for k in range(0, len(todo), size)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for part in pool.map(_evaluate_chunk, [(plan, c) for c in chunks]):
                    fresh.extend(part)
        else:
            for c in chunks:
                fresh.extend(_evaluate_chunk((plan, c)))
        if cache is not None:
            cache.parent.mkdir(parents=True, exist_ok=True)
            with open(cache, "a") as fh:
                for i, p in sorted(fresh, key=lambda x: x[0]):
                    fh.write(json.dumps({"plan_hash": plan_hash, "index": i, "point": p.to_dict()}) + "\n")
    for i, p in fresh:
        done[i] = p
    points = [done[i] for i in range(len(raw))]
    metadata = {
        "preset": plan.preset,
        "filter": plan.filter.value,
        "tau": plan.tau,
        "policy": plan.to_dict()["policy"],
        "code_version": __version__,
        "plan_hash": plan_hash,
        "computed": len(fresh),
        "reused": len(raw) - len(fresh),
        "workers": workers,
    }
    if parity_check:
        metadata["parity_check"] = _parity_check(plan, points, plan_hash)
    metadata["wall_time_s"] = time.perf_counter() - start
    return SweepResult(plan, points, metadata)


def lightcone_overlay(plan: SweepPlan) -> list[tuple[float, float]]:
    """Boundary tau * (t_BA/T) = D/sigma as (distance_ratio, delay_ratio) vertices."""
    names = {a.name: a for a in plan.axes}
    tau = plan.tau
    if "distance_ratio" in names and "delay_ratio" in names:
        d_axis, t_axis = names["distance_ratio"], names["delay_ratio"]
        # clip the line to the plotted rectangle
        d_lo = max(d_axis.min, tau * t_axis.min)
        d_hi = min(d_axis.max, tau * t_axis.max)
        if d_lo > d_hi:
            return []
        ds = d_axis.values()
        inner = [float(d) for d in ds if d_lo < d < d_hi]
        return [(d, d / tau) for d in [d_lo] + inner + [d_hi]]
    if "distance_ratio" in names:
        t = plan.fixed["delay_ratio"]
        return [(tau * abs(t), abs(t))]
    if "delay_ratio" in names:
        d = plan.fixed["distance_ratio"]
        return [(d, d / tau)]
    raise DomainError("the light-cone overlay needs a sweep over distance_ratio or delay_ratio")


def overlay_csv(vertices: list[tuple[float, float]], digits: int = 12) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["distance_ratio", "delay_ratio"])
    for d, t in vertices:
        writer.writerow([f"{d:.{digits}g}", f"{t:.{digits}g}"])
    return buf.getvalue()


def write_outputs(result: SweepResult, out_dir, stem: Optional[str] = None) -> dict[str, Path]:
    """Write ``<stem>.csv``, ``<stem>.json`` and, when meaningful, ``<stem>_overlay.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or result.plan.name
    paths = {"csv": out / f"{stem}.csv", "json": out / f"{stem}.json"}
    paths["csv"].write_text(result.to_csv())
    paths["json"].write_text(result.to_json())
    try:
        vertices = lightcone_overlay(result.plan)
    except DomainError:
        vertices = None
    if vertices is not None:
        paths["overlay"] = out / f"{stem}_overlay.csv"
        paths["overlay"].write_text(overlay_csv(vertices))
    return paths
