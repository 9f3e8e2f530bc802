"""Multiscale flatness coefficients and square functions on a geometric scale grid.

beta_p(B) is the p-normalized least-squares flatness of the measure inside a
closed ball; profiles collect beta^2 and the density theta per atom over a
geometric grid of scales, and the dr/r integrals become left-endpoint sums
with weight ln(1/ratio) per scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import AffinePlane, dists_to_plane, fit_plane_weighted
from .measures import Ball, PointMeasure, ball_mask
from .spatial import SpatialIndex, build_index

_IRLS_ITERS = 20
_IRLS_TOL = 1e-8


@dataclass(frozen=True)
class ScaleGrid:
    """Scales r_j = r_max * ratio^j for j = 0..count-1, strictly decreasing."""

    r_max: float
    count: int
    ratio: float = 0.5

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValidationError("r_max must be positive")
        if not 0.0 < self.ratio < 1.0:
            raise ValidationError("ratio must lie in (0, 1)")
        if self.count < 1:
            raise ValidationError("count must be >= 1")

    @property
    def scales(self) -> np.ndarray:
        return self.r_max * self.ratio ** np.arange(self.count)

    @property
    def log_weight(self) -> float:
        """Quadrature weight of each scale for the dr/r measure."""
        return math.log(1.0 / self.ratio)

    @property
    def r_min(self) -> float:
        return float(self.r_max * self.ratio ** (self.count - 1))

    @staticmethod
    def spanning(r_max: float, r_min: float, ratio: float = 0.5) -> "ScaleGrid":
        """Smallest grid with top scale r_max reaching down to r_min or below."""
        if not 0 < r_min <= r_max:
            raise ValidationError("need 0 < r_min <= r_max")
        count = 1 + max(0, math.ceil(math.log(r_max / r_min) / math.log(1.0 / ratio) - 1e-12))
        return ScaleGrid(r_max=r_max, count=int(count), ratio=ratio)


@dataclass(frozen=True)
class BetaEstimate:
    """Flatness of a measure inside one ball, with the optimal plane."""

    ball: Ball
    beta: float
    plane: AffinePlane
    mass_in_ball: float
    mode: str = "exact"  # "exact" for p=2, "irls" otherwise


def _canonical_plane(center: np.ndarray, n: int, d: int) -> AffinePlane:
    return AffinePlane(np.asarray(center, dtype=float), np.eye(d)[:n])


def beta_p(measure: PointMeasure, ball: Ball, p: float = 2.0) -> BetaEstimate:
    """Least-squares flatness beta_p of the measure inside a closed ball.

    p = 2 is exact (eigenfit); other p >= 1 run iteratively reweighted fits
    and are flagged approximate.  An empty ball has beta 0 and a degenerate
    canonical plane.
    """
    if p < 1:
        raise ValidationError("p must be >= 1")
    n, d = measure.target_dim, measure.ambient_dim
    mask = ball_mask(measure.positions, ball.center, ball.radius)
    pts = measure.positions[mask]
    w = measure.weights[mask]
    mass = float(np.sum(w))
    r = ball.radius
    if mass == 0.0:
        return BetaEstimate(ball, 0.0, _canonical_plane(ball.center, n, d), 0.0)
    if p == 2.0:
        plane, mse = fit_plane_weighted(pts, w, n)
        beta = math.sqrt(mse / r ** (n + 2))
        return BetaEstimate(ball, beta, plane, mass)
    plane, _ = fit_plane_weighted(pts, w, n)
    floor = 1e-12 * r
    for _ in range(_IRLS_ITERS):
        dists = np.maximum(dists_to_plane(pts, plane), floor)
        new_plane, _ = fit_plane_weighted(pts, w * dists ** (p - 2.0), n)
        shift = float(np.max(np.abs(new_plane.base - plane.base))) + float(
            np.max(np.abs(new_plane.basis - plane.basis))
        )
        plane = new_plane
        if shift < _IRLS_TOL:
            break
    dists = dists_to_plane(pts, plane)
    beta = float(np.sum(w * dists**p) / r ** (n + p)) ** (1.0 / p)
    return BetaEstimate(ball, beta, plane, mass, mode="irls")


def _moment_profiles(
    measure: PointMeasure,
    index: SpatialIndex,
    atom_indices: np.ndarray,
    grid: ScaleGrid,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom per-scale (beta_sq, theta) from one distance pass per atom.

    Neighbors are sorted by (distance, index) once; weighted moment features
    are prefix-summed in that order, and every scale reads its closed-ball
    sums off the prefixes.  Single-atom and batched calls share this kernel.
    """
    pos = measure.positions
    w = measure.weights
    n, d = measure.target_dim, measure.ambient_dim
    n_atoms = measure.count
    m = len(atom_indices)
    scales = grid.scales
    r2 = scales * scales
    # moment features: weight, weighted coordinates, weighted coordinate products
    pairs = [(a, b) for a in range(d) for b in range(a, d)]
    feats = np.empty((1 + d + len(pairs), n_atoms))
    feats[0] = w
    for a in range(d):
        feats[1 + a] = w * pos[:, a]
    for q, (a, b) in enumerate(pairs):
        feats[1 + d + q] = w * pos[:, a] * pos[:, b]
    beta_sq = np.zeros((m, grid.count))
    theta = np.zeros((m, grid.count))
    chunk = max(1, 2**20 // max(n_atoms, 1))
    for start in range(0, m, chunk):
        idx = atom_indices[start : start + chunk]
        c = len(idx)
        diff = pos[idx][:, None, :] - pos[None, :, :]
        d2 = np.einsum("cnk,cnk->cn", diff, diff)
        order = np.argsort(d2, axis=1, kind="stable")
        d2s = np.take_along_axis(d2, order, axis=1)
        prefix = np.cumsum(feats[:, order], axis=2)  # (n_feat, c, N)
        rows = np.arange(c)
        for j in range(grid.count):
            counts = np.einsum("cn->c", (d2s <= r2[j]).astype(np.int64))
            have = counts > 0
            if not np.any(have):
                continue
            sums = prefix[:, rows[have], counts[have] - 1]  # (n_feat, sum(have))
            s0 = sums[0]
            s1 = sums[1 : 1 + d].T
            moment = np.empty((s0.size, d, d))
            for q, (a, b) in enumerate(pairs):
                moment[:, a, b] = sums[1 + d + q]
                moment[:, b, a] = sums[1 + d + q]
            moment -= np.einsum("ma,mb->mab", s1, s1) / s0[:, None, None]
            evals = np.linalg.eigvalsh(moment)
            mse = np.sum(np.clip(evals[:, : d - n], 0.0, None), axis=1)
            out_rows = start + rows[have]
            beta_sq[out_rows, j] = mse / float(scales[j]) ** (n + 2)
            theta[out_rows, j] = s0 / float(scales[j]) ** n
    return beta_sq, theta


def profile_matrix(
    measure: PointMeasure,
    grid: ScaleGrid,
    index: SpatialIndex | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(beta_sq, theta) arrays of shape (N, count) for every atom."""
    if index is None:
        index = build_index(measure)
    return _moment_profiles(measure, index, np.arange(measure.count), grid)


@dataclass(frozen=True)
class ScaleProfile:
    """Square-function data of one atom: beta^2 and theta per scale."""

    atom_index: int
    beta_sq: np.ndarray  # (count,)
    theta: np.ndarray  # (count,)
    p: float
    jones: float = field(init=False)
    energy_p: float = field(init=False)
    log_weight: float

    def __post_init__(self):
        bsq = np.asarray(self.beta_sq, dtype=float)
        th = np.asarray(self.theta, dtype=float)
        bsq.setflags(write=False)
        th.setflags(write=False)
        object.__setattr__(self, "beta_sq", bsq)
        object.__setattr__(self, "theta", th)
        lw = self.log_weight
        object.__setattr__(self, "jones", float(np.sum(bsq) * lw))
        object.__setattr__(self, "energy_p", float(np.sum(bsq * th**self.p) * lw))


def scale_profile(
    measure: PointMeasure,
    atom: int,
    grid: ScaleGrid,
    p: float = 1.0,
    index: SpatialIndex | None = None,
) -> ScaleProfile:
    """Profile of one atom; balls are centered at the atom position."""
    if not 0 <= atom < measure.count:
        raise ValidationError(f"atom index {atom} out of range")
    if index is None:
        index = build_index(measure)
    beta_sq, theta = _moment_profiles(measure, index, np.array([atom]), grid)
    return ScaleProfile(atom, beta_sq[0], theta[0], p, log_weight=grid.log_weight)


def point_profile(
    measure: PointMeasure,
    point: np.ndarray,
    grid: ScaleGrid,
    p: float = 1.0,
) -> ScaleProfile:
    """Profile at an arbitrary center; off-support centers are flagged."""
    point = np.asarray(point, dtype=float)
    on_support = bool(np.any(np.all(measure.positions == point, axis=1)))
    if not on_support:
        warnings.warn("profile center is not an atom of the measure", RuntimeWarning, stacklevel=2)
    beta_sq = np.zeros(grid.count)
    theta = np.zeros(grid.count)
    for j, r in enumerate(grid.scales):
        est = beta_p(measure, Ball(point, float(r)), 2.0)
        beta_sq[j] = est.beta**2
        theta[j] = est.mass_in_ball / float(r) ** measure.target_dim
    return ScaleProfile(-1, beta_sq, theta, p, log_weight=grid.log_weight)


def jones_function(beta_sq_row: np.ndarray, grid: ScaleGrid, upto: int | None = None) -> float:
    """Truncated discretized square function: sum of the largest `upto` scales."""
    upto = grid.count if upto is None else upto
    return float(np.sum(beta_sq_row[:upto]) * grid.log_weight)


def total_energy(
    measure: PointMeasure,
    grid: ScaleGrid,
    p: float,
    f_mask: np.ndarray | None = None,
    profiles: tuple[np.ndarray, np.ndarray] | None = None,
) -> float:
    """Weighted sum over atoms of the per-atom beta^2 theta^p dr/r sums."""
    if profiles is None:
        profiles = profile_matrix(measure, grid)
    beta_sq, theta = profiles
    per_atom = np.sum(beta_sq * theta**p, axis=1) * grid.log_weight
    w = measure.weights
    if f_mask is not None:
        w = np.where(np.asarray(f_mask, dtype=bool), w, 0.0)
    return float(np.sum(w * per_atom))


def window_scale_mask(grid: ScaleGrid, lo: float, hi: float) -> np.ndarray:
    """Boolean mask of grid scales r_j with lo <= r_j <= hi."""
    scales = grid.scales
    return (scales >= lo) & (scales <= hi)


def dump_profiles_csv(
    measure: PointMeasure, grid: ScaleGrid, p: float, path_profiles: str, path_summary: str
) -> None:
    beta_sq, theta = profile_matrix(measure, grid)
    lw = grid.log_weight
    scales = grid.scales
    with open(path_profiles, "w", encoding="utf-8") as fh:
        fh.write("atom_index,scale,beta_sq,theta\n")
        for i in range(measure.count):
            for j, r in enumerate(scales):
                fh.write(f"{i},{r!r},{beta_sq[i, j]!r},{theta[i, j]!r}\n")
    with open(path_summary, "w", encoding="utf-8") as fh:
        fh.write("atom_index,jones,energy_p\n")
        for i in range(measure.count):
            jones = float(np.sum(beta_sq[i]) * lw)
            energy = float(np.sum(beta_sq[i] * theta[i] ** p) * lw)
            fh.write(f"{i},{jones!r},{energy!r}\n")
