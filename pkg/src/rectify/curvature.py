"""Menger curvature of discrete measures: exact triple sums and seeded sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ResourceError, ValidationError
from .geometry import coordinate_degenerate, kappa_from_sides
from .measures import PointMeasure
from .multiscale import ScaleGrid, profile_matrix, total_energy

EXACT_ATOM_CAP = 2000


@dataclass(frozen=True)
class CurvatureResult:
    value: float
    mode: str  # "exact" | "sampled"
    triples_evaluated: int
    stderr: float
    seed: int | None = None

    def __post_init__(self):
        if self.value < 0:
            raise ValidationError("curvature cannot be negative")
        if self.mode == "exact" and self.stderr != 0.0:
            raise ValidationError("exact curvature has zero stderr")


def _pairwise_distances(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def curvature_exact(measure: PointMeasure, cap: int = EXACT_ATOM_CAP) -> CurvatureResult:
    """6 * sum over unordered atom triples of w_i w_j w_k / R(x_i,x_j,x_k)^2.

    Degenerate triples (collinear or with coincident points) contribute 0.
    The sum iterates i < j < k in ascending index order, so the result is
    deterministic for a fixed atom ordering.
    """
    n = measure.count
    if n > cap:
        raise ResourceError(
            f"{n} atoms exceed the exact-mode cap of {cap}; use curvature_sampled"
        )
    if n < 3:
        return CurvatureResult(0.0, "exact", 0, 0.0)
    pos = measure.positions
    w = measure.weights
    dist = _pairwise_distances(pos)
    jj, kk = np.triu_indices(n, k=1)
    order = np.argsort(jj, kind="stable")
    jj, kk = jj[order], kk[order]
    w_jk = w[jj] * w[kk]
    d_jk = dist[jj, kk]
    # pairs are grouped by jj ascending; offsets[i] = first pair with jj >= i
    offsets = np.searchsorted(jj, np.arange(n + 1))
    total = 0.0
    for i in range(n - 2):
        s = offsets[i + 1]
        a = dist[i, jj[s:]]
        b = dist[i, kk[s:]]
        degenerate = coordinate_degenerate(pos[jj[s:]] - pos[i], pos[kk[s:]] - pos[i])
        kappa = kappa_from_sides(a, b, d_jk[s:], degenerate)
        total += w[i] * float(np.dot(w_jk[s:], kappa))
    triples = n * (n - 1) * (n - 2) // 6
    return CurvatureResult(6.0 * total, "exact", triples, 0.0)


def curvature_sampled(measure: PointMeasure, samples: int, seed: int) -> CurvatureResult:
    """Unbiased Monte-Carlo estimate of the triple sum.

    Index triples are drawn i.i.d. with probabilities proportional to weights,
    with replacement; repeated indices hit the degenerate-triple convention and
    contribute 0, so the estimand equals the sum over all index triples.
    """
    if samples < 100:
        raise ValidationError("need at least 100 samples")
    rng = np.random.default_rng(seed)
    w = measure.weights
    p = w / measure.total_mass
    idx = rng.choice(measure.count, size=(samples, 3), p=p)
    pos = measure.positions
    x, y, z = pos[idx[:, 0]], pos[idx[:, 1]], pos[idx[:, 2]]
    a = np.linalg.norm(x - y, axis=1)
    b = np.linalg.norm(y - z, axis=1)
    c = np.linalg.norm(x - z, axis=1)
    degenerate = coordinate_degenerate(y - x, z - x)
    vals = measure.total_mass**3 * kappa_from_sides(a, b, c, degenerate)
    estimate = float(np.mean(vals))
    spread = float(np.std(vals, ddof=1)) if samples > 1 else 0.0
    return CurvatureResult(
        max(estimate, 0.0), "sampled", samples, spread / math.sqrt(samples), seed
    )


@dataclass(frozen=True)
class ComparabilityReport:
    """Two-sided comparison of curvature against the density-weighted flatness energy."""

    lhs: float
    rhs: float
    ratio: float
    c2: float
    mass: float
    energy_p1: float
    growth_max: float
    curvature_mode: str
    grid_r_max: float
    grid_count: int
    grid_ratio: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def comparability_report(
    measure: PointMeasure,
    grid: ScaleGrid,
    exact_cap: int = EXACT_ATOM_CAP,
    samples: int = 200_000,
    seed: int = 0,
) -> ComparabilityReport:
    """Compare c^2 + mass against the p=1 flatness energy + mass (n=1, d=2 only).

    The measure is first normalized so that the largest observed mu(B(x,r))/r
    over atoms and grid scales is 1, mirroring the linear-growth hypothesis.
    """
    if measure.target_dim != 1 or measure.ambient_dim != 2:
        raise ValidationError("comparability requires n=1, d=2")
    beta_sq, theta = profile_matrix(measure, grid)
    growth_max = float(np.max(theta)) if theta.size else 0.0
    if growth_max <= 0:
        raise ValidationError("measure has no mass at the tested scales")
    normalized = measure.scaled(1.0 / growth_max)
    if normalized.count <= exact_cap:
        curv = curvature_exact(normalized, cap=exact_cap)
    else:
        curv = curvature_sampled(normalized, samples, seed)
    scale = 1.0 / growth_max
    # beta^2 and theta are both linear in mass, so the energy rescales by scale^3
    energy = scale**3 * total_energy(measure, grid, p=1.0, profiles=(beta_sq, theta))
    mass = normalized.total_mass
    lhs = curv.value + mass
    rhs = energy + mass
    return ComparabilityReport(
        lhs=lhs,
        rhs=rhs,
        ratio=lhs / rhs,
        c2=curv.value,
        mass=mass,
        energy_p1=energy,
        growth_max=growth_max,
        curvature_mode=curv.mode,
        grid_r_max=grid.r_max,
        grid_count=grid.count,
        grid_ratio=grid.ratio,
    )
