"""Hierarchy of cells over the support of a discrete measure.

Each level partitions the atoms into cubes with a center atom, a ball
B(Q) = B(z_Q, r_Q), nesting into the previous level, and four structural
invariants: per-level partition, nesting, 10 r_k center separation (so the
balls 5 B(Q) are disjoint), and membership within 28 r_Q of the center.
Doubling cubes are those with mu(100 B(Q)) <= C0 mu(B(Q)).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .measures import Ball, PointMeasure, ball_mass, density
from .spatial import SpatialIndex, build_index

SIDE_FACTOR = 56.0  # side = 56 * C0 * A0^-k * base_radius
CONTAIN_FACTOR = 28.0
SEPARATION_FACTOR = 10.0
DOUBLING_DILATION = 100.0


@dataclass
class LatticeParams:
    """Scale ratio A0, radius slack / doubling constant C0, depth, and root scale.

    The theoretical regime wants A0 far above C0; the defaults trade that for
    usable depth on desk-scale clouds, and the structural invariants are
    enforced (and checked) instead of the large-A0 estimates.
    """

    a0: float = 2.0
    c0: float = 1.0
    max_levels: int = 8
    base_radius: float | None = None  # None: use the support diameter

    def __post_init__(self):
        if not self.a0 > 1:
            raise ValidationError("a0 must exceed 1")
        if not self.c0 >= 1:
            raise ValidationError("c0 must be >= 1")
        if self.max_levels < 1:
            raise ValidationError("max_levels must be >= 1")
        if self.base_radius is not None and not self.base_radius > 0:
            raise ValidationError("base_radius must be positive")


@dataclass
class Cube:
    id: int
    level: int
    center_atom: int
    radius: float
    side: float
    members: np.ndarray  # sorted atom indices
    parent: int | None
    children: list[int] = field(default_factory=list)
    doubling: bool = False
    mass: float = 0.0


class CubeLattice:
    """Immutable-after-build hierarchy; levels[k] lists the cube ids of level k."""

    def __init__(self, params: LatticeParams, base_radius: float):
        self.params = params
        self.base_radius = base_radius
        self.levels: list[list[int]] = []
        self.cubes: dict[int, Cube] = {}
        self.forced_centers = 0  # coverage fallbacks; 0 on sane inputs

    @property
    def root_id(self) -> int:
        return self.levels[0][0]

    def level_radius(self, level: int) -> float:
        return self.base_radius * self.params.a0 ** (-level)

    def level_side(self, level: int) -> float:
        return SIDE_FACTOR * self.params.c0 * self.level_radius(level)

    def cube_ball(self, cube_id: int, positions: np.ndarray) -> Ball:
        cube = self.cubes[cube_id]
        return Ball(positions[cube.center_atom], cube.radius)

    def ancestors(self, cube_id: int):
        cube = self.cubes[cube_id]
        while cube.parent is not None:
            cube = self.cubes[cube.parent]
            yield cube

    def descendants(self, cube_id: int):
        stack = list(self.cubes[cube_id].children)
        while stack:
            cid = stack.pop()
            yield cid
            stack.extend(self.cubes[cid].children)

    def contains(self, ancestor_id: int, cube_id: int) -> bool:
        if ancestor_id == cube_id:
            return True
        return any(c.id == ancestor_id for c in self.ancestors(cube_id))


def _doubling_flag(
    measure: PointMeasure, index: SpatialIndex, center_atom: int, radius: float, c0: float
) -> bool:
    center = measure.positions[center_atom]
    inner = float(np.sum(measure.weights[index.query_ball(center, radius)]))
    outer = float(
        np.sum(measure.weights[index.query_ball(center, DOUBLING_DILATION * radius)])
    )
    return outer <= c0 * inner


def build_lattice(measure: PointMeasure, params: LatticeParams) -> CubeLattice:
    """Greedy top-down construction.

    Per level, candidate centers are atoms in descending order of mass within
    the level radius (ties: lower atom index) and are accepted when at least
    10 r_k from every accepted center.  Atoms join the nearest accepted center
    whose cube parent owns them; a parent whose atoms were all claimed by
    foreign centers gets a forced center (counted in ``forced_centers``).
    """
    index = build_index(measure)
    pos = measure.positions
    w = measure.weights
    n_atoms = measure.count
    diam = measure.support_diameter()
    base_radius = params.base_radius if params.base_radius is not None else max(diam, 1e-300)
    if base_radius < diam:
        raise ValidationError(
            f"base_radius {base_radius} is below the support diameter {diam:.6g}"
        )
    lattice = CubeLattice(params, base_radius)
    parent_of_atom = np.full(n_atoms, -1, dtype=int)  # cube id at previous level
    next_id = 0
    for level in range(params.max_levels):
        r_k = lattice.level_radius(level)
        sep = SEPARATION_FACTOR * r_k
        masses = index.mass_in_balls(w, pos, r_k)
        if level == 0:
            parent_ids = [None]
            atom_groups = {None: np.arange(n_atoms)}
        else:
            parent_ids = lattice.levels[level - 1]
            atom_groups = {pid: lattice.cubes[pid].members for pid in parent_ids}
        accepted: list[int] = []
        accepted_buf = np.empty_like(pos)

        def clears_separation(atom: int) -> bool:
            if not accepted:
                return True
            d2 = np.sum((accepted_buf[: len(accepted)] - pos[atom]) ** 2, axis=1)
            return bool(np.min(d2) >= sep * sep)

        def accept(atom: int) -> None:
            accepted_buf[len(accepted)] = pos[atom]
            accepted.append(int(atom))

        # coverage pass: every parent gets one center if the separation rule
        # allows it anywhere among its atoms; heaviest parents pick first
        coverage_order = sorted(
            parent_ids,
            key=lambda pid: (0.0, 0) if pid is None else (-lattice.cubes[pid].mass, pid),
        )
        accepted_by_parent: dict = {pid: [] for pid in parent_ids}
        for pid in coverage_order:
            group = atom_groups[pid]
            for atom in group[np.lexsort((group, -masses[group]))]:
                if clears_separation(int(atom)):
                    accept(int(atom))
                    accepted_by_parent[pid].append(int(atom))
                    break
        # containment repair: atoms farther than 28 r_k from every center of
        # their parent get a nearby same-parent center when separation allows
        unfixable: set[int] = set()
        progress = True
        while progress:
            progress = False
            for pid in coverage_order:
                group = atom_groups[pid]
                centers = accepted_by_parent[pid]
                if len(group) == 0:
                    continue
                if centers:
                    dmin = np.min(
                        np.linalg.norm(
                            pos[group][:, None, :] - pos[centers][None, :, :], axis=-1
                        ),
                        axis=1,
                    )
                else:
                    dmin = np.full(len(group), np.inf)
                far_mask = dmin > CONTAIN_FACTOR * r_k
                far_atoms = [a for a in group[far_mask] if a not in unfixable]
                if not far_atoms:
                    continue
                worst = max(far_atoms, key=lambda a: dmin[np.searchsorted(group, a)])
                near = group[
                    np.linalg.norm(pos[group] - pos[worst], axis=1)
                    <= (CONTAIN_FACTOR - SEPARATION_FACTOR) * r_k
                ]
                fixed = False
                for cand in near[np.lexsort((near, -masses[near]))]:
                    if clears_separation(int(cand)):
                        accept(int(cand))
                        accepted_by_parent[pid].append(int(cand))
                        fixed = True
                        progress = True
                        break
                if not fixed:
                    unfixable.add(int(worst))
        # global pass: remaining candidates in descending ball-mass order
        order = np.lexsort((np.arange(n_atoms), -masses))
        chosen = set(accepted)
        for atom in order:
            if int(atom) in chosen:
                continue
            if clears_separation(int(atom)):
                accept(int(atom))
        accepted_arr = np.asarray(sorted(accepted), dtype=int)
        center_parent = parent_of_atom[accepted_arr] if level > 0 else np.zeros(len(accepted), dtype=int)
        if level == 0:
            centers_by_parent = {None: accepted_arr}
        else:
            centers_by_parent = {pid: accepted_arr[center_parent == pid] for pid in parent_ids}
            for pid in parent_ids:
                if centers_by_parent[pid].size == 0:
                    # truly starved: force a center and let the report flag it
                    group = atom_groups[pid]
                    best = group[np.lexsort((group, -masses[group]))[0]]
                    centers_by_parent[pid] = np.array([best], dtype=int)
                    lattice.forced_centers += 1
        level_ids: list[int] = []
        assignment = np.full(n_atoms, -1, dtype=int)
        for pid in parent_ids:
            centers = centers_by_parent[pid]
            cube_ids = []
            for atom in centers:
                cube = Cube(
                    id=next_id,
                    level=level,
                    center_atom=int(atom),
                    radius=r_k,
                    side=lattice.level_side(level),
                    members=np.empty(0, dtype=int),
                    parent=pid if level > 0 else None,
                )
                lattice.cubes[next_id] = cube
                if pid is not None:
                    lattice.cubes[pid].children.append(next_id)
                cube_ids.append(next_id)
                level_ids.append(next_id)
                next_id += 1
            group = atom_groups[pid]
            cdist = np.linalg.norm(pos[group][:, None, :] - pos[centers][None, :, :], axis=-1)
            # ties go to the first (lowest-id) center
            choice = np.argmin(cdist, axis=1)
            assignment[group] = np.asarray(cube_ids, dtype=int)[choice]
        for cid in level_ids:
            cube = lattice.cubes[cid]
            members = np.flatnonzero(assignment == cid)
            cube.members = members
            cube.mass = float(np.sum(w[members]))
            cube.doubling = _doubling_flag(measure, index, cube.center_atom, cube.radius, params.c0)
        lattice.levels.append(level_ids)
        parent_of_atom = assignment
    return lattice


def doubling_flag(lattice: CubeLattice, measure: PointMeasure, cube_id: int) -> bool:
    """Recompute mu(100 B(Q)) <= C0 mu(B(Q)) for one cube."""
    cube = lattice.cubes[cube_id]
    index = build_index(measure)
    return _doubling_flag(measure, index, cube.center_atom, cube.radius, lattice.params.c0)


def smallest_doubling_ancestor(lattice: CubeLattice, cube_id: int) -> int:
    """The cube itself or its lowest doubling ancestor (the root must be doubling)."""
    cube = lattice.cubes[cube_id]
    if cube.doubling:
        return cube_id
    for anc in lattice.ancestors(cube_id):
        if anc.doubling:
            return anc.id
    raise ValidationError("no doubling ancestor; the root cube is not doubling")


def density_2BQ(lattice: CubeLattice, measure: PointMeasure, cube_id: int) -> float:
    """Density of the doubled cube ball, mu(B(z_Q, 56 r_Q)) / (56 r_Q)^n."""
    cube = lattice.cubes[cube_id]
    center = measure.positions[cube.center_atom]
    return density(measure, Ball(center, 2.0 * CONTAIN_FACTOR * cube.radius))


@dataclass
class LatticeReport:
    partition_violations: int = 0
    nesting_violations: int = 0
    separation_violations: int = 0
    containment_violations: int = 0
    radius_violations: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return (
            self.partition_violations
            + self.nesting_violations
            + self.separation_violations
            + self.containment_violations
            + self.radius_violations
        )


def lattice_invariant_report(lattice: CubeLattice, measure: PointMeasure) -> LatticeReport:
    """Count violations of the four structural invariants plus the radius bounds."""
    report = LatticeReport()
    pos = measure.positions
    n_atoms = measure.count
    a0, c0 = lattice.params.a0, lattice.params.c0
    for level, ids in enumerate(lattice.levels):
        seen = np.zeros(n_atoms, dtype=int)
        centers = []
        r_expect_lo = lattice.base_radius * a0 ** (-level)
        for cid in ids:
            cube = lattice.cubes[cid]
            seen[cube.members] += 1
            centers.append(pos[cube.center_atom])
            if not r_expect_lo * (1 - 1e-12) <= cube.radius <= c0 * r_expect_lo * (1 + 1e-12):
                report.radius_violations += 1
                report.notes.append(f"cube {cid}: radius {cube.radius} outside bounds")
            if cube.members.size:
                far = np.max(np.linalg.norm(pos[cube.members] - pos[cube.center_atom], axis=1))
                if far > CONTAIN_FACTOR * cube.radius * (1 + 1e-12):
                    report.containment_violations += 1
                    report.notes.append(f"cube {cid}: member at {far:.3g} > 28 r_Q")
            if cube.parent is not None:
                parent_members = lattice.cubes[cube.parent].members
                if not np.all(np.isin(cube.members, parent_members)):
                    report.nesting_violations += 1
                    report.notes.append(f"cube {cid}: members escape parent {cube.parent}")
        stray = int(np.sum(seen != 1))
        if stray:
            report.partition_violations += stray
            report.notes.append(f"level {level}: {stray} atoms not covered exactly once")
        centers = np.asarray(centers)
        if len(centers) > 1:
            sep = SEPARATION_FACTOR * lattice.level_radius(level)
            d2 = np.sum((centers[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
            np.fill_diagonal(d2, np.inf)
            bad_pairs = int(np.sum(d2 < sep * sep * (1 - 1e-12))) // 2
            if bad_pairs:
                report.separation_violations += bad_pairs
                report.notes.append(f"level {level}: {bad_pairs} center pairs closer than 10 r_k")
    return report


def lattice_to_json(lattice: CubeLattice) -> str:
    obj = {
        "params": {
            "a0": lattice.params.a0,
            "c0": lattice.params.c0,
            "max_levels": lattice.params.max_levels,
            "base_radius": lattice.base_radius,
        },
        "levels": lattice.levels,
        "cubes": [
            {
                "id": c.id,
                "level": c.level,
                "center_atom": c.center_atom,
                "radius": c.radius,
                "side": c.side,
                "members": c.members.tolist(),
                "parent": c.parent,
                "children": c.children,
                "doubling": c.doubling,
                "mass": c.mass,
            }
            for c in lattice.cubes.values()
        ],
    }
    return json.dumps(obj, sort_keys=True)
