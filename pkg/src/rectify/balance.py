"""Balanced-ball dichotomy: a spread witness or a high-density ball family.

Given a ball B with positive mass, either n+1 mass-carrying points can be
chosen whose k-th member stays gamma*r away from the span of the previous
ones (a spread witness), or the mass concentrates near a lower-dimensional
plane and a disjoint family of small dense balls is produced.  The test runs
entirely on the restriction of the measure to B, which is also what the
cube-level variant feeds it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .geometry import affine_span, dist_to_affine_span
from .lattice import CubeLattice, density_2BQ, smallest_doubling_ancestor
from .measures import Ball, PointMeasure, ball_mask

THINNING_DILATION = 10.0  # kept balls have disjoint 10 B_i
FAMILY_RADIUS_FACTOR = 4.0  # dense balls have radius 4 gamma r


def covering_constant(d: int) -> float:
    """Greedy covering multiplicity K_d used by the smallness threshold."""
    return 5.0**d


def default_t(gamma: float) -> float:
    """Probe radius fraction t0(gamma); small enough that perturbing the
    witness points inside their probe balls keeps half the gamma r clearance."""
    return gamma / 4.0


def default_eps(t: float, d: int) -> float:
    """Mass gate epsilon(t) = t^d / (4 K_d); depends on t only."""
    return t**d / (4.0 * covering_constant(d))


def guaranteed_mass_fraction(gamma: float, n: int, d: int) -> float:
    """Lower bound c_b(gamma) on mass_sum / mu(B) enforced by the keep rule."""
    return gamma ** (n - 1) / (4.0 * covering_constant(d))


def guaranteed_density_constant(n: int, d: int) -> float:
    """Lower bound c_d on Theta(B_i) / (gamma^-1 Theta(B)) enforced by the keep rule."""
    return 1.0 / (4.0 ** (n + 1) * covering_constant(d))


@dataclass(frozen=True)
class SpreadOutcome:
    """Alternative (a): witness points with per-point masses and clearances."""

    kind: str = field(default="spread", init=False)
    atom_indices: np.ndarray  # (n+1,) indices into the original measure
    points: np.ndarray  # (n+1, d)
    masses: np.ndarray  # (n+1,) mass of B(x_k, t r) within B
    eta_achieved: float  # min_k dist(x_k, span of predecessors) / r
    gamma: float
    t: float
    eps: float
    radius: float


@dataclass(frozen=True)
class DenseFamilyOutcome:
    """Alternative (b): 10-disjoint balls of radius 4 gamma r carrying dense mass."""

    kind: str = field(default="dense", init=False)
    balls: tuple  # of Ball
    center_atoms: np.ndarray
    mass_sum: float
    min_density_ratio: float  # min Theta(B_i) / (gamma^-1 Theta(B))
    gamma: float
    k0: int  # first failed selection step
    threshold: float  # keep threshold mu(B) / (4 N)
    threshold_met: bool


BalanceOutcome = SpreadOutcome | DenseFamilyOutcome


def _restricted_ball_masses(
    positions: np.ndarray, weights: np.ndarray, centers: np.ndarray, radius: float
) -> np.ndarray:
    """Mass within `radius` of each center, counting the restricted atoms only."""
    out = np.empty(len(centers))
    step = max(1, 2**22 // max(len(positions), 1))
    r2 = radius * radius
    for start in range(0, len(centers), step):
        block = centers[start : start + step]
        diff = positions[None, :, :] - block[:, None, :]
        inside = np.einsum("ijk,ijk->ij", diff, diff) <= r2
        out[start : start + len(block)] = inside @ weights
    return out


def balanced_ball_test(
    measure: PointMeasure,
    ball: Ball,
    gamma: float,
    t: float | None = None,
    eps: float | None = None,
) -> BalanceOutcome:
    """Run the dichotomy for mu restricted to the closed ball."""
    if not 0.0 < gamma < 1.0:
        raise ValidationError("gamma must lie in (0, 1)")
    n, d = measure.target_dim, measure.ambient_dim
    if t is None:
        t = default_t(gamma)
    if not 0.0 < t < 1.0:
        raise ValidationError("t must lie in (0, 1)")
    k_d = covering_constant(d)
    if eps is None:
        eps = default_eps(t, d)
    if not 0.0 < eps <= t**d / (4.0 * k_d):
        raise ValidationError(f"eps must lie in (0, t^d/(4 K_d)] = (0, {t**d / (4 * k_d):.3e}]")
    inside = np.flatnonzero(ball_mask(measure.positions, ball.center, ball.radius))
    if inside.size == 0:
        raise ValidationError("the ball carries no mass")
    pos = measure.positions[inside]
    w = measure.weights[inside]
    r = ball.radius
    m_ball = float(np.sum(w))
    probe = t * r
    probe_mass = _restricted_ball_masses(pos, w, pos, probe)
    gate = 2.0 * eps * m_ball

    chosen: list[int] = []  # local indices
    clearances: list[float] = []
    k0 = -1
    for k in range(n + 1):
        if k == 0:
            eligible = np.arange(inside.size)
            dists = None
        else:
            base, basis = affine_span(pos[chosen])
            rel = pos - base
            if basis.shape[0]:
                rel = rel - (rel @ basis.T) @ basis
            dists = np.linalg.norm(rel, axis=1)
            eligible = np.flatnonzero(dists >= gamma * r)
        if eligible.size == 0:
            k0 = k
            break
        sub = eligible[np.lexsort((inside[eligible], -probe_mass[eligible]))]
        best = int(sub[0])
        if probe_mass[best] < gate:
            k0 = k
            break
        chosen.append(best)
        if dists is not None:
            clearances.append(float(dists[best]))
    if k0 < 0:
        return SpreadOutcome(
            atom_indices=inside[chosen],
            points=pos[chosen],
            masses=probe_mass[chosen],
            eta_achieved=min(clearances) / r if clearances else 1.0,
            gamma=gamma,
            t=t,
            eps=eps,
            radius=r,
        )

    # alternative (b): cover the strip near the span of the selected points
    if k0 == 0:
        strip = np.arange(inside.size)
    else:
        base, basis = affine_span(pos[chosen[:k0]])
        rel = pos - base
        if basis.shape[0]:
            rel = rel - (rel @ basis.T) @ basis
        strip = np.flatnonzero(np.linalg.norm(rel, axis=1) <= gamma * r)
    fam_r = FAMILY_RADIUS_FACTOR * gamma * r
    order = strip[np.lexsort((inside[strip], -probe_mass[strip]))]
    net: list[int] = []
    for cand in order:
        if net and np.min(np.sum((pos[net] - pos[cand]) ** 2, axis=1)) < fam_r * fam_r:
            continue
        net.append(int(cand))
    net_masses = _restricted_ball_masses(pos, w, pos[net], fam_r)
    n_cov = k_d * gamma ** (-max(k0 - 1, 0))
    threshold = m_ball / (4.0 * n_cov)
    keep = [i for i, m in zip(net, net_masses) if m >= threshold]
    keep_masses = {i: float(net_masses[j]) for j, i in enumerate(net)}
    threshold_met = bool(keep)
    if not keep:  # defensive; the covering count argument makes this unreachable
        best = net[int(np.argmax(net_masses))]
        keep = [best]
    # thin to a 10-disjoint subfamily, greedy by descending mass
    keep.sort(key=lambda i: (-keep_masses[i], inside[i]))
    kept: list[int] = []
    min_gap = 2.0 * THINNING_DILATION * fam_r
    for cand in keep:
        if kept and np.min(np.sum((pos[kept] - pos[cand]) ** 2, axis=1)) <= min_gap * min_gap:
            continue
        kept.append(cand)
    balls = tuple(Ball(pos[i], fam_r) for i in kept)
    masses = np.array([keep_masses[i] for i in kept])
    theta_ball = m_ball / r**n
    ratios = (masses / fam_r**n) / (theta_ball / gamma)
    return DenseFamilyOutcome(
        balls=balls,
        center_atoms=inside[kept],
        mass_sum=float(np.sum(masses)),
        min_density_ratio=float(np.min(ratios)),
        gamma=gamma,
        k0=k0,
        threshold=threshold,
        threshold_met=threshold_met,
    )


@dataclass(frozen=True)
class DenseCubesOutcome:
    """Cube-level alternative (b): disjoint doubling descendants of the tested cube."""

    kind: str = field(default="dense-cubes", init=False)
    cube_ids: tuple
    gamma: float
    ball_outcome: DenseFamilyOutcome


CubeBalanceOutcome = SpreadOutcome | DenseCubesOutcome


def _level_at_or_below(lattice: CubeLattice, side_target: float, floor_level: int) -> int:
    """Smallest level whose side is <= side_target (clipped to the built depth)."""
    last = len(lattice.levels) - 1
    level = min(floor_level, last)
    while level < last and lattice.level_side(level) > side_target:
        level += 1
    return level


def cube_balance_test(
    lattice: CubeLattice, measure: PointMeasure, cube_id: int, gamma: float
) -> CubeBalanceOutcome:
    """Dichotomy for mu restricted to members(Q) inside B(Q), at t = t0(gamma).

    A dense-ball outcome is mapped to lattice cubes: each ball picks the
    heaviest cube of side about gamma ell(Q) meeting it, then its smallest
    doubling ancestor, and a maximal disjoint subfamily is returned.
    """
    cube = lattice.cubes[cube_id]
    if not cube.doubling:
        raise ValidationError(f"cube {cube_id} is not doubling")
    center = measure.positions[cube.center_atom]
    in_ball = ball_mask(measure.positions[cube.members], center, cube.radius)
    local = cube.members[in_ball]
    if local.size == 0:
        raise ValidationError(f"cube {cube_id} has no members inside its ball")
    sub = PointMeasure(
        measure.positions[local], measure.weights[local], measure.target_dim
    )
    outcome = balanced_ball_test(sub, Ball(center, cube.radius), gamma)
    if isinstance(outcome, SpreadOutcome):
        return SpreadOutcome(
            atom_indices=local[outcome.atom_indices],
            points=outcome.points,
            masses=outcome.masses,
            eta_achieved=outcome.eta_achieved,
            gamma=outcome.gamma,
            t=outcome.t,
            eps=outcome.eps,
            radius=outcome.radius,
        )
    target_level = _level_at_or_below(lattice, gamma * cube.side, cube.level + 1)
    level_ids = [
        cid for cid in lattice.levels[target_level] if lattice.contains(cube_id, cid)
    ]
    picked: list[int] = []
    for b in outcome.balls:
        best_id, best_mass = -1, -1.0
        for cid in level_ids:
            cand = lattice.cubes[cid]
            hit = ball_mask(measure.positions[cand.members], b.center, b.radius)
            if np.any(hit) and (cand.mass > best_mass or (cand.mass == best_mass and cid < best_id)):
                best_id, best_mass = cid, cand.mass
        if best_id >= 0:
            anc = smallest_doubling_ancestor(lattice, best_id)
            # stay inside the tested cube
            while not lattice.contains(cube_id, anc):
                anc = cube_id
            picked.append(anc)
    picked = sorted(set(picked))
    maximal = [
        cid
        for cid in picked
        if not any(other != cid and lattice.contains(other, cid) for other in picked)
    ]
    return DenseCubesOutcome(cube_ids=tuple(maximal), gamma=gamma, ball_outcome=outcome)
