"""Affine-plane arithmetic: weighted fits, circumradii, local plane distances.

Everything here is a pure function over immutable inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_ORTHO_TOL = 1e-10
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class AffinePlane:
    """An n-dimensional affine subspace of R^d: a base point plus an orthonormal basis."""

    base: np.ndarray  # (d,)
    basis: np.ndarray  # (n, d), orthonormal rows

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        n, d = basis.shape
        if base.shape != (d,):
            raise ValidationError("plane base and basis dimensions disagree")
        if not 0 < n < d:
            raise ValidationError(f"plane dimension must satisfy 0 < n < d, got n={n}, d={d}")
        gram = basis @ basis.T
        if np.max(np.abs(gram - np.eye(n))) > _ORTHO_TOL:
            raise ValidationError("plane basis is not orthonormal within 1e-10")
        base.setflags(write=False)
        basis.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[1]

    def project(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.base
        return self.base + (rel @ self.basis.T) @ self.basis

    def offsets(self, points: np.ndarray) -> np.ndarray:
        """Component of (points - base) orthogonal to the plane."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.base
        return rel - (rel @ self.basis.T) @ self.basis

    def translated(self, new_base: np.ndarray) -> "AffinePlane":
        return AffinePlane(np.asarray(new_base, dtype=float), self.basis)


def dist_to_plane(y: np.ndarray, plane: AffinePlane) -> float:
    """Euclidean distance from a point to the plane."""
    return float(np.linalg.norm(plane.offsets(np.asarray(y, dtype=float))[0]))


def dists_to_plane(points: np.ndarray, plane: AffinePlane) -> np.ndarray:
    return np.linalg.norm(plane.offsets(points), axis=1)


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: first component of visible size is positive."""
    out = basis.copy()
    for i, row in enumerate(out):
        scale = np.max(np.abs(row))
        nz = np.flatnonzero(np.abs(row) > 1e-12 * scale)
        if nz.size and row[nz[0]] < 0:
            out[i] = -row
    return out


def fit_plane_weighted(
    points: np.ndarray, weights: np.ndarray, n: int
) -> tuple[AffinePlane, float]:
    """Exact minimizer of sum w_i dist(x_i, L)^2 over n-planes L.

    The plane passes through the weighted centroid and is spanned by the top-n
    eigenvectors of the weighted second-moment matrix; the returned mse is the
    sum of the d-n smallest eigenvalues (clipped at zero against roundoff).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    if w.shape != (pts.shape[0],):
        raise ValidationError("weights must match points")
    if np.any(w < 0):
        raise ValidationError("weights must be nonnegative")
    wsum = float(np.sum(w))
    if wsum <= 0:
        raise ValidationError("at least one weight must be positive")
    d = pts.shape[1]
    if not 0 < n < d:
        raise ValidationError(f"plane dimension must satisfy 0 < n < d, got n={n}, d={d}")
    centroid = (w @ pts) / wsum
    rel = pts - centroid
    moment = rel.T @ (rel * w[:, None])
    evals, evecs = np.linalg.eigh(moment)  # ascending
    basis = _fix_signs(evecs[:, d - n :].T)
    mse = float(np.sum(np.clip(evals[: d - n], 0.0, None)))
    return AffinePlane(centroid, basis), mse


def _heron_area(a, b, c):
    """Kahan's stable formula on sorted side lengths; never NaN."""
    hi = np.maximum(np.maximum(a, b), c)
    lo = np.minimum(np.minimum(a, b), c)
    mid = a + b + c - hi - lo
    t = (hi + (mid + lo)) * (lo - (hi - mid)) * (lo + (hi - mid)) * (hi + (mid - lo))
    return 0.25 * np.sqrt(np.clip(t, 0.0, None))


def coordinate_degenerate(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Exact coordinate-level collinearity of two edge vectors (vectorized).

    Catches axis-aligned degenerate triples that rounded side lengths cannot,
    so degenerate configurations yield exactly zero curvature.
    """
    d = u.shape[-1]
    if d == 2:
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0] == 0.0
    if d == 3:
        return np.all(np.cross(u, v) == 0.0, axis=-1)
    uu = np.einsum("...k,...k->...", u, u)
    vv = np.einsum("...k,...k->...", v, v)
    uv = np.einsum("...k,...k->...", u, v)
    return uu * vv - uv * uv <= 0.0


def _canonical_triple(x, y, z):
    pts = sorted(
        (np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)),
        key=lambda p: tuple(p),
    )
    return pts[0], pts[1], pts[2]


def triangle_area(x, y, z) -> float:
    """Stable triangle area; exactly 0 for coordinate-degenerate triples."""
    p0, p1, p2 = _canonical_triple(x, y, z)
    if coordinate_degenerate(p1 - p0, p2 - p0):
        return 0.0
    a = float(np.linalg.norm(p0 - p1))
    b = float(np.linalg.norm(p1 - p2))
    c = float(np.linalg.norm(p0 - p2))
    return float(_heron_area(a, b, c))


def kappa_from_sides(a, b, c, degenerate=None):
    """Vectorized 1/R^2 from side lengths with an optional exact-degeneracy mask."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    c = np.asarray(c, float)
    area = _heron_area(a, b, c)
    if degenerate is not None:
        area = np.where(degenerate, 0.0, area)
    prod = a * b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(prod > 0, 4.0 * area / np.where(prod > 0, prod, 1.0), 0.0)
    return q * q


def circumradius(x, y, z) -> float:
    """Radius of the circle through three points; inf when collinear or coincident."""
    p0, p1, p2 = _canonical_triple(x, y, z)
    a = float(np.linalg.norm(p0 - p1))
    b = float(np.linalg.norm(p1 - p2))
    c = float(np.linalg.norm(p0 - p2))
    area = triangle_area(p0, p1, p2)
    if area == 0.0 or a == 0.0 or b == 0.0 or c == 0.0:
        return math.inf
    return (a * b * c) / (4.0 * area)


def inv_circumradius_sq(x, y, z) -> float:
    """1/R^2 computed directly, avoiding the intermediate infinity."""
    p0, p1, p2 = _canonical_triple(x, y, z)
    a = np.linalg.norm(p0 - p1)
    b = np.linalg.norm(p1 - p2)
    c = np.linalg.norm(p0 - p2)
    degenerate = coordinate_degenerate(p1 - p0, p2 - p0)
    return float(kappa_from_sides(a, b, c, degenerate))


def affine_span(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Base point and orthonormal basis (possibly empty) of the affine span."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    base = pts[0]
    if pts.shape[0] == 1:
        return base, np.zeros((0, pts.shape[1]))
    rel = pts[1:] - base
    u, s, vt = np.linalg.svd(rel, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return base, np.zeros((0, pts.shape[1]))
    rank = int(np.sum(s > _RANK_TOL * s[0]))
    return base, vt[:rank]


def dist_to_affine_span(y: np.ndarray, base: np.ndarray, basis: np.ndarray) -> float:
    rel = np.asarray(y, dtype=float) - base
    if basis.shape[0] == 0:
        return float(np.linalg.norm(rel))
    return float(np.linalg.norm(rel - (rel @ basis.T) @ basis))


@dataclass(frozen=True)
class SpreadWitness:
    """Points x_0..x_m with their spread eta = min leave-one-out distance / diameter."""

    points: np.ndarray  # (m+1, d)
    eta: float
    diam: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if not 0.0 < self.eta <= 1.0:
            raise ValidationError(f"spread eta must lie in (0, 1], got {self.eta}")
        if not self.diam > 0:
            raise ValidationError("witness diameter must be positive")


def spread_eta(points: np.ndarray) -> SpreadWitness:
    """Spread of a point set: min over i of dist(x_i, span of the others) / diam."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = pts.shape[0]
    if m < 2:
        raise ValidationError("spread needs at least two points")
    diff = pts[:, None, :] - pts[None, :, :]
    dists = np.linalg.norm(diff, axis=-1)
    diam = float(np.max(dists))
    np.fill_diagonal(dists, np.inf)
    if np.min(dists) == 0.0:
        raise ValidationError("spread is undefined for coincident points")
    best = math.inf
    for i in range(m):
        others = np.delete(pts, i, axis=0)
        base, basis = affine_span(others)
        best = min(best, dist_to_affine_span(pts[i], base, basis))
    eta = best / diam
    if eta <= 0.0:
        raise ValidationError("points are affinely dependent; spread is zero")
    return SpreadWitness(pts, min(eta, 1.0), diam)


def _plane_ball_samples(plane: AffinePlane, center, radius, grid: int = 33):
    """Deterministic sample of plane cap points inside B(center, radius); None if disjoint."""
    center = np.asarray(center, dtype=float)
    foot = plane.project(center)[0]
    h = float(np.linalg.norm(foot - center))
    if h > radius:
        return None
    cap = math.sqrt(max(radius * radius - h * h, 0.0))
    n = plane.dim
    if cap == 0.0:
        return foot[None, :]
    if n == 1:
        ts = np.array([[-cap], [cap]])  # sup over a chord is attained at its endpoints
    else:
        axis = np.linspace(-cap, cap, grid)
        mesh = np.meshgrid(*([axis] * n), indexing="ij")
        ts = np.stack([m.ravel() for m in mesh], axis=1)
        ts = ts[np.einsum("ij,ij->i", ts, ts) <= cap * cap]
        extremes = np.concatenate([cap * np.eye(n), -cap * np.eye(n)], axis=0)
        ts = np.concatenate([ts, extremes], axis=0)
    return foot + ts @ plane.basis


def plane_local_distance(
    p1: AffinePlane, p2: AffinePlane, x: np.ndarray, r: float
) -> float:
    """Normalized local distance between two planes over the ball B(x, r).

    Exact for 1-planes (the sup over a chord sits at its endpoints); sampled on
    a deterministic grid for higher plane dimensions.  A plane that misses the
    ball contributes an empty sup, i.e. 0, and a warning is emitted.
    """
    if not r > 0:
        raise ValidationError("radius must be positive")
    sides = [_plane_ball_samples(p, x, r) for p in (p1, p2)]
    if any(s is None for s in sides):
        warnings.warn(
            "a plane does not intersect the ball; returning 0 over the empty sup",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    sup = max(
        float(np.max(dists_to_plane(sides[0], p2))),
        float(np.max(dists_to_plane(sides[1], p1))),
    )
    return sup / r


@dataclass(frozen=True)
class PlaneComparisonEntry:
    point: np.ndarray
    dist_p1: float
    bound: float
    ok: bool


@dataclass(frozen=True)
class PlaneComparisonReport:
    entries: tuple
    eps: float
    eta: float
    diam: float
    passed: bool


def plane_comparison_check(
    p1: AffinePlane,
    p2: AffinePlane,
    witness: SpreadWitness,
    eps: float,
    query_points: np.ndarray,
) -> PlaneComparisonReport:
    """Check dist(y, P1) <= 2 eps ((2d/eta) dist(y, X) + diam X) for y on P2.

    Preconditions: every witness point lies within eps*diam of both planes and
    eps < eta / (2d); the factor 2 in the bound is the general-position
    constant of the two-step comparison argument.
    """
    d = p1.ambient_dim
    if p2.ambient_dim != d:
        raise ValidationError("planes live in different ambient dimensions")
    eta, diam = witness.eta, witness.diam
    if not eps < eta / (2.0 * d):
        raise ValidationError(
            f"hypothesis violated: eps={eps} must be < eta/(2d)={eta / (2 * d)}"
        )
    for j, plane in ((1, p1), (2, p2)):
        dists = dists_to_plane(witness.points, plane)
        worst = int(np.argmax(dists))
        if dists[worst] >= eps * diam:
            raise ValidationError(
                f"hypothesis (b) violated: witness point {worst} is at distance "
                f"{dists[worst]:.3e} >= eps*diam={eps * diam:.3e} from plane {j}"
            )
    queries = np.atleast_2d(np.asarray(query_points, dtype=float))
    entries = []
    for y in queries:
        dist1 = dist_to_plane(y, p1)
        dist_x = float(np.min(np.linalg.norm(witness.points - y, axis=1)))
        bound = 2.0 * eps * ((2.0 * d / eta) * dist_x + diam)
        entries.append(PlaneComparisonEntry(y, dist1, bound, dist1 <= bound))
    return PlaneComparisonReport(
        entries=tuple(entries),
        eps=eps,
        eta=eta,
        diam=diam,
        passed=all(e.ok for e in entries),
    )
