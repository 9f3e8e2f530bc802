"""Discrete weighted point measures, benchmark generators, and ball masses.

A measure is a finite list of atoms (position, weight) in R^d together with a
target dimension n (the dimension of the planes fitted elsewhere).  All ball
membership in this package is closed: an atom at distance exactly ``radius``
from the center belongs to the ball.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ResourceError, ValidationError

CANTOR_MAX_GENERATION = 9


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", center)
        if not self.radius > 0:
            raise ValidationError(f"ball radius must be positive, got {self.radius}")


def ball_mask(positions: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Boolean membership of positions in the closed ball, by exact <= on squared distances.

    This is the single membership predicate shared by masses, densities,
    beta fits, and the spatial index.
    """
    diff = positions - np.asarray(center, dtype=float)
    return np.einsum("ij,ij->i", diff, diff) <= radius * radius


@dataclass(frozen=True)
class PointMeasure:
    """A finite discrete measure: atoms in R^d with positive weights."""

    positions: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)
    target_dim: int
    total_mass: float = field(init=False)

    def __post_init__(self):
        positions = np.ascontiguousarray(np.asarray(self.positions, dtype=float))
        weights = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        if positions.ndim != 2:
            raise ValidationError("positions must be a (N, d) array")
        if weights.shape != (positions.shape[0],):
            raise ValidationError("weights must be a (N,) array matching positions")
        if positions.shape[0] < 1:
            raise ValidationError("a measure needs at least one atom")
        if not np.all(weights > 0):
            bad = int(np.flatnonzero(~(weights > 0))[0])
            raise ValidationError(f"atom {bad} has non-positive weight {weights[bad]}")
        d = positions.shape[1]
        n = int(self.target_dim)
        if not 0 < n < d:
            raise ValidationError(f"target_dim must satisfy 0 < n < d, got n={n}, d={d}")
        positions.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "target_dim", n)
        object.__setattr__(self, "total_mass", float(np.sum(weights)))

    @property
    def ambient_dim(self) -> int:
        return self.positions.shape[1]

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def scaled(self, factor: float) -> "PointMeasure":
        """Same atoms with all weights multiplied by ``factor`` (> 0)."""
        if not factor > 0:
            raise ValidationError("scaling factor must be positive")
        return PointMeasure(self.positions, self.weights * factor, self.target_dim)

    def restricted(self, atom_indices) -> "PointMeasure":
        idx = np.asarray(atom_indices, dtype=int)
        if idx.size == 0:
            raise ValidationError("cannot restrict a measure to zero atoms")
        return PointMeasure(self.positions[idx], self.weights[idx], self.target_dim)

    def support_diameter(self) -> float:
        """Exact max pairwise distance, blocked to bound memory."""
        pos = self.positions
        n = pos.shape[0]
        if n == 1:
            return 0.0
        best = 0.0
        step = max(1, 2**22 // max(n, 1))
        for start in range(0, n, step):
            block = pos[start : start + step]
            d2 = np.sum((block[:, None, :] - pos[None, :, :]) ** 2, axis=-1)
            best = max(best, float(np.max(d2)))
        return math.sqrt(best)


def ball_mass(measure: PointMeasure, ball: Ball) -> float:
    """Total weight of atoms inside the closed ball."""
    mask = ball_mask(measure.positions, ball.center, ball.radius)
    return float(np.sum(measure.weights[mask]))


def density(measure: PointMeasure, ball: Ball) -> float:
    """Mass of the ball divided by radius^n (n = measure.target_dim)."""
    return ball_mass(measure, ball) / ball.radius**measure.target_dim


def _embed(xy: np.ndarray, ambient_dim: int) -> np.ndarray:
    """Place planar coordinates in the first 2 axes of R^d, zero-padded."""
    if ambient_dim == 2:
        return xy
    out = np.zeros((xy.shape[0], ambient_dim))
    out[:, :2] = xy
    return out


def gen_segment(
    count: int,
    length: float,
    total_mass: float = 1.0,
    ambient_dim: int = 2,
    target_dim: int = 1,
) -> PointMeasure:
    """Atoms equally spaced on the segment from the origin to (length, 0, ...)."""
    if count < 2:
        raise ValidationError("gen_segment needs count >= 2")
    if not (length > 0 and total_mass > 0):
        raise ValidationError("length and total_mass must be positive")
    xy = np.zeros((count, 2))
    xy[:, 0] = np.linspace(0.0, length, count)
    weights = np.full(count, total_mass / count)
    return PointMeasure(_embed(xy, ambient_dim), weights, target_dim)


def gen_circle(
    count: int,
    radius: float,
    total_mass: float = 1.0,
    ambient_dim: int = 2,
    target_dim: int = 1,
) -> PointMeasure:
    """Atoms equally spaced on the circle of given radius centered at the origin."""
    if count < 2:
        raise ValidationError("gen_circle needs count >= 2")
    if not (radius > 0 and total_mass > 0):
        raise ValidationError("radius and total_mass must be positive")
    angles = 2.0 * np.pi * np.arange(count) / count
    xy = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    weights = np.full(count, total_mass / count)
    return PointMeasure(_embed(xy, ambient_dim), weights, target_dim)


def gen_lipschitz_graph(
    count: int,
    lip_const: float,
    seed: int,
    total_mass: float = 1.0,
    ambient_dim: int = 2,
    target_dim: int = 1,
    pieces: int = 16,
) -> PointMeasure:
    """Atoms on the graph of a seeded random piecewise-linear function.

    Slopes are drawn uniformly in [-lip_const, lip_const] on ``pieces`` equal
    x-intervals of [0, 1]; atoms sit at equally spaced x and are weighted by
    the portion of arclength nearest to them.  Deterministic per seed.
    """
    if count < 2:
        raise ValidationError("gen_lipschitz_graph needs count >= 2")
    if not 0.0 <= lip_const <= 1.0:
        raise ValidationError(f"lip_const must lie in [0, 1], got {lip_const}")
    if not total_mass > 0:
        raise ValidationError("total_mass must be positive")
    rng = np.random.default_rng(seed)
    slopes = rng.uniform(-lip_const, lip_const, size=pieces)
    knots_x = np.linspace(0.0, 1.0, pieces + 1)
    knots_y = np.concatenate([[0.0], np.cumsum(slopes) / pieces])
    # atoms at the centers of `count` equal x-cells, weighted by cell arclength
    edges = np.linspace(0.0, 1.0, count + 1)
    xs = 0.5 * (edges[:-1] + edges[1:])
    ys = np.interp(xs, knots_x, knots_y)
    edge_ys = np.interp(edges, knots_x, knots_y)
    cell = np.hypot(np.diff(edges), np.diff(edge_ys))
    weights = total_mass * cell / np.sum(cell)
    xy = np.stack([xs, ys], axis=1)
    return PointMeasure(_embed(xy, ambient_dim), weights, target_dim)


def cantor4_centers(generation: int) -> np.ndarray:
    """Cell centers of the g-th generation of the planar 4-corner Cantor set.

    Contractions of ratio 1/4 placed at the corners of the unit square; the
    returned points are the centers of the 4^g generation cells.
    """
    if generation < 0:
        raise ValidationError("generation must be >= 0")
    offsets = np.array([[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]])
    centers = np.array([[0.5, 0.5]])
    for _ in range(generation):
        centers = (centers[:, None, :] / 4.0 + offsets[None, :, :]).reshape(-1, 2)
    return centers


def gen_cantor4(
    generation: int,
    total_mass: float = 1.0,
    ambient_dim: int = 2,
    target_dim: int = 1,
) -> PointMeasure:
    """One atom per cell center of the g-th 4-corner Cantor generation."""
    if generation > CANTOR_MAX_GENERATION:
        raise ResourceError(
            f"generation {generation} would create 4^{generation} atoms; cap is {CANTOR_MAX_GENERATION}"
        )
    if not total_mass > 0:
        raise ValidationError("total_mass must be positive")
    centers = cantor4_centers(generation)
    weights = np.full(len(centers), total_mass / len(centers))
    return PointMeasure(_embed(centers, ambient_dim), weights, target_dim)


def _parse_csv(text: str, target_dim: int) -> PointMeasure:
    rows = []
    ncols = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            values = [float(f) for f in fields]
        except ValueError:
            if not rows and ncols is None:
                ncols = len(fields)  # header row
                continue
            raise ParseError(f"non-numeric field in {fields!r}", line=lineno)
        if ncols is None:
            ncols = len(values)
        elif len(values) != ncols:
            raise ParseError(f"expected {ncols} fields, got {len(values)}", line=lineno)
        rows.append((lineno, values))
    if not rows:
        raise ParseError("no data rows found")
    if ncols is not None and ncols < 3:
        raise ParseError(f"need at least 2 coordinates plus a weight, got {ncols} columns")
    data = np.array([v for _, v in rows])
    weights = data[:, -1]
    if not np.all(weights > 0):
        bad = int(np.flatnonzero(~(weights > 0))[0])
        raise ValidationError(
            f"line {rows[bad][0]}: non-positive weight {weights[bad]}"
        )
    return PointMeasure(data[:, :-1], weights, target_dim)


def load_measure(path: str, format: str | None = None, target_dim: int = 1) -> PointMeasure:
    """Load a measure from CSV (d coordinate columns then a weight column) or JSON."""
    if format is None:
        format = "json" if str(path).endswith(".json") else "csv"
    if format not in ("csv", "json"):
        raise ValidationError(f"unknown format {format!r}")
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if format == "csv":
        return _parse_csv(text, target_dim)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), line=exc.lineno) from exc
    try:
        atoms = np.asarray(obj["atoms"], dtype=float)
        d = int(obj["ambient_dim"])
        n = int(obj["target_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed measure object: {exc}") from exc
    if atoms.ndim != 2 or atoms.shape[1] != d + 1:
        raise ParseError(f"atom rows must have {d} coordinates plus a weight")
    if not np.all(atoms[:, -1] > 0):
        bad = int(np.flatnonzero(~(atoms[:, -1] > 0))[0])
        raise ValidationError(f"atom {bad} has non-positive weight {atoms[bad, -1]}")
    return PointMeasure(atoms[:, :d], atoms[:, -1], n)


def save_measure(measure: PointMeasure, path: str, format: str | None = None) -> None:
    """Write a measure to CSV or JSON; JSON round-trips atoms bit-for-bit."""
    if format is None:
        format = "json" if str(path).endswith(".json") else "csv"
    if format == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            for pos, w in zip(measure.positions, measure.weights):
                fh.write(",".join(repr(float(v)) for v in pos) + f",{w!r}\n")
    elif format == "json":
        obj = {
            "ambient_dim": measure.ambient_dim,
            "target_dim": measure.target_dim,
            "atoms": [
                [float(v) for v in pos] + [float(w)]
                for pos, w in zip(measure.positions, measure.weights)
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh)
    else:
        raise ValidationError(f"unknown format {format!r}")
