"""Experiment orchestration: measure specs, the comparability table, and the
rectifiable-vs-unrectifiable discrimination run."""

from __future__ import annotations

import hashlib
import json
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curvature import comparability_report
from .defaults import CALIBRATION
from .errors import ValidationError
from .measures import (
    PointMeasure,
    gen_cantor4,
    gen_circle,
    gen_lipschitz_graph,
    gen_segment,
    load_measure,
)
from .multiscale import ScaleGrid, profile_matrix


def build_measure(spec: dict, seed: int = 0) -> PointMeasure:
    """Construct a measure from a serializable spec dict."""
    kind = spec.get("gen")
    if kind == "segment":
        return gen_segment(int(spec["count"]), float(spec.get("length", 1.0)), float(spec.get("mass", 1.0)))
    if kind == "circle":
        return gen_circle(int(spec["count"]), float(spec.get("radius", 1.0)), float(spec.get("mass", 1.0)))
    if kind == "graph":
        return gen_lipschitz_graph(
            int(spec["count"]),
            float(spec.get("lip", 0.5)),
            int(spec.get("seed", seed)),
            float(spec.get("mass", 1.0)),
        )
    if kind == "cantor":
        return gen_cantor4(int(spec["generation"]), float(spec.get("mass", 1.0)))
    if kind == "file":
        return load_measure(spec["path"], spec.get("format"), int(spec.get("target_dim", 1)))
    raise ValidationError(f"unknown measure spec {spec!r}")


@dataclass
class ExperimentConfig:
    """Fully serializable run description; the manifest hash is derived from it."""

    command: str
    measure: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    fmt: str = "csv"

    def to_json(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "measure": self.measure,
                "grid": self.grid,
                "options": self.options,
                "seed": self.seed,
                "threads": self.threads,
                "fmt": self.fmt,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        obj = json.loads(text)
        return ExperimentConfig(
            command=obj["command"],
            measure=obj.get("measure", {}),
            grid=obj.get("grid", {}),
            options=obj.get("options", {}),
            seed=obj.get("seed", 0),
            threads=obj.get("threads", 1),
            fmt=obj.get("fmt", "csv"),
        )

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def write_manifest(config: ExperimentConfig, path: str) -> None:
    manifest = {
        "config": json.loads(config.to_json()),
        "config_sha256": config.digest,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "package": "rectify 0.1.0",
        "seed": config.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


DEFAULT_FAMILY = (
    {"gen": "segment", "label": "segment"},
    {"gen": "circle", "label": "circle"},
    {"gen": "graph", "lip": 0.5, "label": "graph05"},
    {"gen": "graph", "lip": 1.0, "label": "graph10"},
)


@dataclass
class ComparabilityRow:
    label: str
    count: int
    c2: float
    mass: float
    energy_p1: float
    ratio: float
    growth_max: float

    def as_csv(self) -> str:
        return (
            f"{self.label},{self.count},{self.c2!r},{self.mass!r},"
            f"{self.energy_p1!r},{self.ratio!r},{self.growth_max!r}"
        )


@dataclass
class ComparabilityResult:
    rows: list[ComparabilityRow]
    band: float  # max ratio / min ratio over all rows
    max_drift: float  # worst per-generator ratio spread across sizes
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def csv(self) -> str:
        head = "generator,N,c2,mass,energy_p1,ratio,growth_max"
        return "\n".join([head] + [r.as_csv() for r in self.rows])


def _comparability_row(spec: dict, count: int, scales: int, ratio: float, seed: int) -> ComparabilityRow:
    full = dict(spec)
    full["count"] = count
    measure = build_measure(full, seed)
    grid = ScaleGrid(measure.support_diameter(), scales, ratio)
    rep = comparability_report(measure, grid, seed=seed)
    return ComparabilityRow(
        label=spec.get("label", spec["gen"]),
        count=count,
        c2=rep.c2,
        mass=rep.mass,
        energy_p1=rep.energy_p1,
        ratio=rep.ratio,
        growth_max=rep.growth_max,
    )


def run_comparability(
    family=DEFAULT_FAMILY,
    sizes=(256, 512, 1024),
    scales: int = 12,
    ratio: float = 0.5,
    seed: int = 0,
    threads: int = 1,
    band_limit: float | None = None,
    drift_limit: float | None = None,
) -> ComparabilityResult:
    """Ratio table over the generator family; asserts the calibrated band and drift."""
    band_limit = CALIBRATION["comparability_band"] if band_limit is None else band_limit
    drift_limit = CALIBRATION["comparability_drift"] if drift_limit is None else drift_limit
    jobs = [(spec, count) for spec in family for count in sizes]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_comparability_row, spec, count, scales, ratio, seed)
                for spec, count in jobs
            ]
            rows = [f.result() for f in futures]  # config order, not completion order
    else:
        rows = [_comparability_row(spec, count, scales, ratio, seed) for spec, count in jobs]
    ratios = [r.ratio for r in rows]
    band = max(ratios) / min(ratios)
    violations = []
    if band > band_limit:
        worst = max(rows, key=lambda r: r.ratio)
        violations.append(
            f"ratio band {band:.3g} exceeds {band_limit} (offender {worst.label} N={worst.count})"
        )
    max_drift = 0.0
    for spec in family:
        label = spec.get("label", spec["gen"])
        group = [r.ratio for r in rows if r.label == label]
        drift = max(group) / min(group)
        max_drift = max(max_drift, drift)
        if drift > drift_limit:
            violations.append(f"generator {label} ratio drift {drift:.3g} exceeds {drift_limit}")
    return ComparabilityResult(rows=rows, band=band, max_drift=max_drift, violations=violations)


@dataclass
class DiscriminationSide:
    label: str
    medians: dict[int, float]  # scale count -> median truncated square function
    increment_per_scale: float  # (J_K - J_{2K/3}) / (K/3)
    tail_fraction: float  # (J_K - J_{2K/3}) / J_K, 0 when J_K = 0
    slope: float  # least-squares slope of median vs scale count


@dataclass
class DiscriminationResult:
    rectifiable: DiscriminationSide
    unrectifiable: DiscriminationSide
    separated: bool
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def _discrimination_side(measure: PointMeasure, label: str, scales: int) -> DiscriminationSide:
    grid = ScaleGrid(measure.support_diameter(), scales, 0.5)
    beta_sq, _ = profile_matrix(measure, grid)
    cum = np.cumsum(beta_sq, axis=1) * grid.log_weight
    marks = sorted({max(1, scales // 3), max(1, 2 * scales // 3), scales})
    medians = {m: float(np.median(cum[:, m - 1])) for m in marks}
    k, k23 = scales, max(1, 2 * scales // 3)
    inc = medians[k] - medians[k23]
    denom = k - k23
    xs = np.array(marks, dtype=float)
    ys = np.array([medians[m] for m in marks])
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(marks) > 1 else 0.0
    return DiscriminationSide(
        label=label,
        medians=medians,
        increment_per_scale=inc / denom if denom else 0.0,
        tail_fraction=inc / medians[k] if medians[k] > 0 else 0.0,
        slope=slope,
    )


def run_discrimination(
    rect_spec: dict,
    unrect_spec: dict,
    scales: int = 12,
    seed: int = 0,
    increment_factor: float | None = None,
    tail_fraction: float | None = None,
) -> DiscriminationResult:
    """Median truncated square functions of a matched rectifiable/unrectifiable pair.

    The unrectifiable side must gain at least `increment_factor` times the
    rectifiable per-scale increment, and the rectifiable tail must stay below
    `tail_fraction` of its full truncation.  A pair with no separation is
    reported, not an error.
    """
    increment_factor = (
        CALIBRATION["discrimination_increment_factor"] if increment_factor is None else increment_factor
    )
    tail_fraction = (
        CALIBRATION["discrimination_tail_fraction"] if tail_fraction is None else tail_fraction
    )
    rect_measure = build_measure(rect_spec, seed)
    unrect_measure = build_measure(unrect_spec, seed)
    if rect_measure.count != unrect_measure.count:
        raise ValidationError("discrimination requires matched atom counts")
    rect = _discrimination_side(rect_measure, rect_spec.get("label", "rectifiable"), scales)
    unrect = _discrimination_side(unrect_measure, unrect_spec.get("label", "unrectifiable"), scales)
    violations = []
    floor = 1e-18
    separated = unrect.increment_per_scale >= increment_factor * max(rect.increment_per_scale, floor)
    if not separated and unrect.increment_per_scale > 0:
        violations.append(
            f"unrectifiable increment {unrect.increment_per_scale:.3e} below "
            f"{increment_factor} x rectifiable {rect.increment_per_scale:.3e}"
        )
    if rect.tail_fraction > tail_fraction:
        violations.append(
            f"rectifiable tail fraction {rect.tail_fraction:.3g} exceeds {tail_fraction}"
        )
    return DiscriminationResult(
        rectifiable=rect, unrectifiable=unrect, separated=separated, violations=violations
    )
