"""Stopping-time trees on a cube lattice and their iterated decomposition.

A tree starts from a doubling root R and descends until a cube trips, in
order: high density (HD), low density (LD), unbalanced (UB), low
concentration of the mask set F (LF), or an accumulated per-branch flatness
budget (J).  Trees are iterated into generations via regularized stop
families; nets of anchor points with fitted planes and their local plane
distances diagnose how close the tree is to a flat parametrization.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .balance import DenseCubesOutcome, cube_balance_test
from .errors import ValidationError
from .geometry import AffinePlane, dist_to_plane, dists_to_plane, plane_local_distance
from .lattice import (
    CONTAIN_FACTOR,
    CubeLattice,
    density_2BQ,
    smallest_doubling_ancestor,
)
from .measures import Ball, PointMeasure, ball_mask
from .multiscale import ScaleGrid, beta_p, profile_matrix, total_energy
from .spatial import SpatialIndex, build_index

RHO_WINDOW = 60.0  # x_Q and rho(Q) are picked inside [r(Q)/60, 60 r(Q)]


class StopReason(str, Enum):
    HD = "HD"
    LD = "LD"
    UB = "UB"
    LF = "LF"
    J = "J"


class RootStopError(ValidationError):
    """The root itself trips a stopping condition; parameters are too tight."""

    def __init__(self, root: int, reason: StopReason):
        super().__init__(f"root cube {root} stops immediately with reason {reason.value}")
        self.root = root
        self.reason = reason


@dataclass
class CoronaParams:
    """Stopping thresholds; gamma_bal defaults to tau^2."""

    a_hi: float = 150.0  # high-density factor A
    tau: float = 0.005  # low-density factor
    alpha: float = 0.1  # flatness budget threshold
    delta: float = 0.25  # scale-window half-width exponent
    gamma_bal: float | None = None
    p: float = 1.0  # density power for packing
    eta_b: float = 0.01  # mask-deficit threshold for terminal roots
    grid: ScaleGrid | None = None
    f_mask: np.ndarray | None = None  # boolean per atom; None means all atoms

    def __post_init__(self):
        if not self.a_hi >= 100.0:
            raise ValidationError("a_hi must be >= 100")
        if not 0.0 < self.tau < 0.01:
            raise ValidationError("tau must lie in (0, 1/100)")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValidationError("delta must lie in (0, 1)")
        if not 0.0 < self.eta_b < 0.5:
            raise ValidationError("eta_b must lie in (0, 1/2)")
        if self.gamma_bal is None:
            self.gamma_bal = self.tau**2
        if self.tau > 1.0 / self.a_hi:
            warnings.warn(
                "tau should be well below 1/A for the stopping regime to make sense",
                RuntimeWarning,
                stacklevel=2,
            )

    def resolved_mask(self, n_atoms: int) -> np.ndarray:
        if self.f_mask is None:
            return np.ones(n_atoms, dtype=bool)
        mask = np.asarray(self.f_mask, dtype=bool)
        if mask.shape != (n_atoms,):
            raise ValidationError("f_mask must be a boolean array over all atoms")
        return mask


def default_corona_grid(lattice: CubeLattice, delta: float, ratio: float = 0.5) -> ScaleGrid:
    """Grid spanning every per-level scale window plus the rho-selection window."""
    top_side = lattice.level_side(0)
    bottom = len(lattice.levels) - 1
    r_max = top_side / delta
    r_min = min(delta * lattice.level_side(bottom), lattice.level_radius(bottom) / RHO_WINDOW)
    return ScaleGrid.spanning(r_max, r_min, ratio)


@dataclass
class CoronaTree:
    """One stopping-time tree: members, stop reasons, and cached diagnostics."""

    root: int
    theta_root: float
    tree: list[int]  # BFS order, root first; includes stopped cubes
    stop: dict[int, StopReason]
    theta2: dict[int, float]  # Theta(2 B_Q)
    beta_sq_cube: dict[int, float]  # normalized window flatness; inf if mu(Q ∩ F) = 0
    window_energy: dict[int, float]  # unnormalized window integral W(Q)
    mass_f: dict[int, float]  # mu(Q ∩ F)
    jsum: dict[int, float]  # running branch sum of beta_sq_cube, root..Q inclusive
    ub_families: dict[int, tuple]
    params: CoronaParams
    grid: ScaleGrid

    def stopped(self, reason: StopReason) -> list[int]:
        return [q for q, r in self.stop.items() if r is reason]

    @property
    def internal(self) -> list[int]:
        return [q for q in self.tree if q not in self.stop]


def _window_indices(grid: ScaleGrid, lo: float, hi: float) -> np.ndarray:
    scales = grid.scales
    return np.flatnonzero((scales >= lo) & (scales <= hi))


def build_tree(
    lattice: CubeLattice,
    measure: PointMeasure,
    root_id: int,
    params: CoronaParams,
    profiles: tuple[np.ndarray, np.ndarray] | None = None,
    index: SpatialIndex | None = None,
) -> CoronaTree:
    """Breadth-first stopping-time descent from a doubling root."""
    root = lattice.cubes[root_id]
    if not root.doubling:
        raise ValidationError(f"root cube {root_id} must be doubling")
    theta_root = density_2BQ(lattice, measure, root_id)
    if not theta_root > 0:
        raise ValidationError("root ball carries no mass")
    if index is None:
        index = build_index(measure)
    grid = params.grid or default_corona_grid(lattice, params.delta)
    if profiles is None:
        profiles = profile_matrix(measure, grid, index)
    beta_sq_profile, _ = profiles
    f_mask = params.resolved_mask(measure.count)
    lw = grid.log_weight
    pos = measure.positions
    w = measure.weights
    # per-atom window flatness sums are shared by all cubes of one level
    window_cache: dict[int, np.ndarray] = {}

    def window_sum_per_atom(level: int) -> np.ndarray:
        if level not in window_cache:
            side = lattice.level_side(level)
            cols = _window_indices(grid, params.delta * side, side / params.delta)
            window_cache[level] = beta_sq_profile[:, cols].sum(axis=1) * lw
        return window_cache[level]

    def cube_window_energy(cube) -> float:
        center = pos[cube.center_atom]
        radius = CONTAIN_FACTOR * cube.radius / params.delta  # delta^-1 B_Q
        hits = index.query_ball(center, radius)
        hits = hits[f_mask[hits]]
        if hits.size == 0:
            return 0.0
        return float(np.dot(w[hits], window_sum_per_atom(cube.level)[hits]))

    gamma = params.gamma_bal
    theta2: dict[int, float] = {}
    beta_sq_cube: dict[int, float] = {}
    window_energy: dict[int, float] = {}
    mass_f: dict[int, float] = {}
    jsum: dict[int, float] = {}
    stop: dict[int, StopReason] = {}
    ub_families: dict[int, tuple] = {}
    tree: list[int] = []

    def evaluate(cube) -> tuple[StopReason | None, float, float]:
        theta = density_2BQ(lattice, measure, cube.id)
        theta2[cube.id] = theta
        mf = float(np.sum(w[cube.members[f_mask[cube.members]]]))
        mass_f[cube.id] = mf
        we = cube_window_energy(cube)
        window_energy[cube.id] = we
        bsq = math.inf if mf == 0.0 else we / (mf * theta_root)
        beta_sq_cube[cube.id] = bsq
        if theta >= params.a_hi * theta_root:
            return StopReason.HD, theta, bsq
        if theta <= params.tau * theta_root:
            return StopReason.LD, theta, bsq
        if cube.doubling:
            outcome = cube_balance_test(lattice, measure, cube.id, gamma)
            if isinstance(outcome, DenseCubesOutcome):
                ub_families[cube.id] = outcome.cube_ids
                return StopReason.UB, theta, bsq
        if mf <= cube.mass / 2.0:
            return StopReason.LF, theta, bsq
        return None, theta, bsq

    reason, _, root_bsq = evaluate(root)
    if reason is not None:
        raise RootStopError(root_id, reason)
    if root_bsq >= params.alpha**2:
        raise RootStopError(root_id, StopReason.J)
    jsum[root_id] = root_bsq
    tree.append(root_id)
    queue = [(child, root_bsq) for child in root.children]
    while queue:
        cid, above = queue.pop(0)
        cube = lattice.cubes[cid]
        reason, _, bsq = evaluate(cube)
        total = above + bsq
        jsum[cid] = total
        tree.append(cid)
        if reason is None and total >= params.alpha**2:
            reason = StopReason.J
        if reason is not None:
            stop[cid] = reason
            continue
        queue.extend((child, total) for child in cube.children)
    return CoronaTree(
        root=root_id,
        theta_root=theta_root,
        tree=tree,
        stop=stop,
        theta2=theta2,
        beta_sq_cube=beta_sq_cube,
        window_energy=window_energy,
        mass_f=mass_f,
        jsum=jsum,
        ub_families=ub_families,
        params=params,
        grid=grid,
    )


def lf_mass_bound(tree: CoronaTree, measure: PointMeasure, lattice: CubeLattice) -> tuple[float, float]:
    """(lhs, rhs) of the LF mass inequality: sum of LF masses vs twice mu(R \\ F)."""
    f_mask = tree.params.resolved_mask(measure.count)
    lhs = sum(lattice.cubes[q].mass for q in tree.stopped(StopReason.LF))
    root_members = lattice.cubes[tree.root].members
    outside = root_members[~f_mask[root_members]]
    rhs = 2.0 * float(np.sum(measure.weights[outside]))
    return lhs, rhs


def j_mass_bound(tree: CoronaTree, lattice: CubeLattice) -> tuple[float, float]:
    """(lhs, rhs) of the flatness-budget inequality over the tree."""
    alpha = tree.params.alpha
    lhs = alpha**2 * tree.theta_root * sum(
        lattice.cubes[q].mass for q in tree.stopped(StopReason.J)
    )
    rhs = 2.0 * sum(tree.window_energy[q] for q in tree.tree)
    return lhs, rhs


def maximal_doubling_descendants(lattice: CubeLattice, cube_id: int) -> list[int]:
    """Topmost doubling cubes at or below the given cube."""
    out: list[int] = []
    stack = [cube_id]
    while stack:
        cid = stack.pop()
        if lattice.cubes[cid].doubling:
            out.append(cid)
        else:
            stack.extend(lattice.cubes[cid].children)
    return sorted(out)


@dataclass
class TopFamily:
    generations: list[list[int]]
    trees: dict[int, CoronaTree]
    next_map: dict[int, list[int]]
    b_class: set[int]
    terminal: dict[int, str]  # roots whose tree could not start, with the reason
    id_h: set[int]
    id_u: set[int]
    stop_tilde: dict[int, list[int]]
    hd_tilde: dict[int, list[int]]
    ub_tilde: dict[int, list[int]]
    params: CoronaParams
    grid: ScaleGrid

    @property
    def all_roots(self) -> list[int]:
        return [r for gen in self.generations for r in gen]


def _nearest_level(lattice: CubeLattice, side_target: float, lo: int) -> int:
    best, best_err = lo, math.inf
    for level in range(lo, len(lattice.levels)):
        err = abs(math.log(lattice.level_side(level)) - math.log(side_target))
        if err < best_err:
            best, best_err = level, err
    return best


def _level_descendants(lattice: CubeLattice, cube_id: int, level: int) -> list[int]:
    out = []
    stack = [cube_id]
    while stack:
        cid = stack.pop()
        cube = lattice.cubes[cid]
        if cube.level == level:
            out.append(cid)
        elif cube.level < level:
            stack.extend(cube.children)
    return sorted(out)


def build_top(
    lattice: CubeLattice,
    measure: PointMeasure,
    r0: int,
    params: CoronaParams,
    profiles: tuple[np.ndarray, np.ndarray] | None = None,
) -> TopFamily:
    """Iterate trees generation by generation until no new roots appear."""
    index = build_index(measure)
    grid = params.grid or default_corona_grid(lattice, params.delta)
    if profiles is None:
        profiles = profile_matrix(measure, grid, index)
    params = _with_grid(params, grid)
    f_mask = params.resolved_mask(measure.count)
    w = measure.weights
    top = TopFamily(
        generations=[[r0]],
        trees={},
        next_map={},
        b_class=set(),
        terminal={},
        id_h=set(),
        id_u=set(),
        stop_tilde={},
        hd_tilde={},
        ub_tilde={},
        params=params,
        grid=grid,
    )
    current = [r0]
    while current:
        next_gen: list[int] = []
        for rid in current:
            root = lattice.cubes[rid]
            deficit = float(np.sum(w[root.members[~f_mask[root.members]]]))
            if deficit > params.eta_b * root.mass:
                top.b_class.add(rid)
                top.next_map[rid] = []
                continue
            try:
                tree = build_tree(lattice, measure, rid, params, profiles, index)
            except RootStopError as exc:
                top.terminal[rid] = exc.reason.value
                top.next_map[rid] = []
                continue
            top.trees[rid] = tree
            hd_star: list[int] = []
            for q in tree.stopped(StopReason.HD):
                anc = smallest_doubling_ancestor(lattice, q)
                hd_star.append(q if anc == rid else anc)
            ub_star: list[int] = []
            for q in tree.stopped(StopReason.UB):
                fam = list(tree.ub_families[q])
                covered = set()
                for cid in fam:
                    covered.add(cid)
                    covered.update(lattice.descendants(cid))
                level = _nearest_level(
                    lattice, params.gamma_bal * lattice.cubes[q].side, lattice.cubes[q].level + 1
                )
                completion = [
                    cid
                    for cid in _level_descendants(lattice, q, level)
                    if cid not in covered
                ]
                ub_star.extend(fam)
                ub_star.extend(completion)
            o_star: list[int] = []
            for reason in (StopReason.LD, StopReason.LF, StopReason.J):
                for q in tree.stopped(reason):
                    o_star.extend(lattice.cubes[q].children)
            star = sorted(set(hd_star) | set(ub_star) | set(o_star))
            star.sort(key=lambda cid: lattice.cubes[cid].level)
            tilde: list[int] = []
            for cid in star:
                if not any(lattice.contains(kept, cid) for kept in tilde):
                    tilde.append(cid)
            hd_set = set(hd_star)
            ub_set = set(ub_star)
            top.stop_tilde[rid] = sorted(tilde)
            top.hd_tilde[rid] = sorted(c for c in tilde if c in hd_set)
            top.ub_tilde[rid] = sorted(c for c in tilde if c in ub_set and c not in hd_set)
            hd_mass = sum(lattice.cubes[c].mass for c in top.hd_tilde[rid])
            ub_mass = sum(lattice.cubes[c].mass for c in top.ub_tilde[rid])
            if hd_mass >= root.mass / 4.0:
                top.id_h.add(rid)
            if ub_mass >= root.mass / 4.0:
                top.id_u.add(rid)
            nxt: list[int] = []
            for cid in tilde:
                nxt.extend(maximal_doubling_descendants(lattice, cid))
            nxt = sorted(set(nxt))
            top.next_map[rid] = nxt
            next_gen.extend(nxt)
        if not next_gen:
            break
        top.generations.append(sorted(set(next_gen)))
        current = top.generations[-1]
    return top


def _with_grid(params: CoronaParams, grid: ScaleGrid) -> CoronaParams:
    if params.grid is not None:
        return params
    return CoronaParams(
        a_hi=params.a_hi,
        tau=params.tau,
        alpha=params.alpha,
        delta=params.delta,
        gamma_bal=params.gamma_bal,
        p=params.p,
        eta_b=params.eta_b,
        grid=grid,
        f_mask=params.f_mask,
    )


@dataclass
class PackingReport:
    lhs: float
    mass_term: float  # c_star^(p+1) mu(R0)
    energy: float
    c_star: float
    p: float
    per_generation: list[float]
    c_pack_needed: float

    def ratio(self, c_pack: float) -> float:
        return self.lhs / (self.mass_term + c_pack * self.energy)

    def to_json(self) -> str:
        return json.dumps(
            {
                "lhs": self.lhs,
                "mass_term": self.mass_term,
                "energy": self.energy,
                "c_star": self.c_star,
                "p": self.p,
                "per_generation": self.per_generation,
                "c_pack_needed": self.c_pack_needed,
            },
            sort_keys=True,
        )


def packing_report(
    top: TopFamily,
    lattice: CubeLattice,
    measure: PointMeasure,
    profiles: tuple[np.ndarray, np.ndarray] | None = None,
) -> PackingReport:
    """Compare the root packing sum against the observed density cap plus energy."""
    grid = top.grid
    p = top.params.p
    if profiles is None:
        profiles = profile_matrix(measure, grid)
    _, theta = profiles
    root_thetas = {
        rid: density_2BQ(lattice, measure, rid) for rid in top.all_roots
    }
    c_star = max(
        float(np.max(theta)) if theta.size else 0.0,
        max(root_thetas.values(), default=0.0),
    )
    per_gen = []
    for gen in top.generations:
        per_gen.append(
            sum(root_thetas[rid] ** (p + 1.0) * lattice.cubes[rid].mass for rid in gen)
        )
    lhs = float(sum(per_gen))
    f_mask = top.params.resolved_mask(measure.count)
    energy = total_energy(measure, grid, p, f_mask=f_mask, profiles=profiles)
    r0 = top.generations[0][0]
    mass_term = c_star ** (p + 1.0) * lattice.cubes[r0].mass
    spare = lhs - mass_term
    c_pack = spare / energy if energy > 0 and spare > 0 else 0.0
    return PackingReport(
        lhs=lhs,
        mass_term=mass_term,
        energy=energy,
        c_star=c_star,
        p=p,
        per_generation=per_gen,
        c_pack_needed=c_pack,
    )


@dataclass
class NetLevel:
    k: int
    r_k: float
    lattice_level: int
    cube_ids: list[int]
    points: np.ndarray  # (m, d)


@dataclass
class NetsReport:
    levels: list[NetLevel]
    t_cubes: list[int]
    hats: dict[int, int]
    anchors: dict[int, np.ndarray]  # y_Q
    planes: dict[int, AffinePlane]  # L^Q
    eps_sq_sums: dict[tuple[int, int], float]  # (k, j) net point -> sum_k eps_k^2
    max_eps_sq_sum: float
    v2_checked: int
    v2_ok: int

    @property
    def v2_fraction(self) -> float:
        return 1.0 if self.v2_checked == 0 else self.v2_ok / self.v2_checked


def _pick_rho_plane(
    measure: PointMeasure, atom: int, r_q: float, grid: ScaleGrid
) -> tuple[float, AffinePlane, float]:
    """rho in [(C-1) r, C r] minimizing beta_2 at the anchor atom, with its plane."""
    lo, hi = (RHO_WINDOW - 1.0) * r_q, RHO_WINDOW * r_q
    scales = grid.scales
    cand = scales[(scales >= lo) & (scales <= hi)]
    if cand.size == 0:
        cand = np.geomspace(lo, hi, 5)
    center = measure.positions[atom]
    best = None
    for rho in cand:
        est = beta_p(measure, Ball(center, float(rho)), 2.0)
        if best is None or est.beta < best[2]:
            best = (float(rho), est.plane, est.beta)
    return best


def dt_nets(
    tree: CoronaTree,
    lattice: CubeLattice,
    measure: PointMeasure,
    profiles: tuple[np.ndarray, np.ndarray] | None = None,
    index: SpatialIndex | None = None,
) -> NetsReport:
    """Nets of anchor points per scale with fitted planes and their pairwise
    local distances; reports the succession check and max sum of eps_k^2."""
    params = tree.params
    grid = tree.grid
    if index is None:
        index = build_index(measure)
    if profiles is None:
        profiles = profile_matrix(measure, grid, index)
    beta_sq_profile, _ = profiles
    f_mask = params.resolved_mask(measure.count)
    pos = measure.positions
    root = lattice.cubes[tree.root]
    stopped = set(tree.stop)
    tree_set = set(tree.tree)
    dnst = [
        q for q in tree.tree if lattice.cubes[q].doubling and q not in stopped
    ]
    t_cubes: set[int] = set()
    for q in dnst:
        for anc in lattice.ancestors(q):
            if anc.id in tree_set:
                t_cubes.add(anc.id)
            if anc.id == tree.root:
                break
    t_sorted = sorted(t_cubes)

    def hat_of(q: int) -> int:
        cube = lattice.cubes[q]
        if cube.doubling and q not in stopped:
            return q
        for anc in lattice.ancestors(q):
            if anc.doubling and anc.id not in stopped and anc.id in tree_set:
                return anc.id
        return tree.root

    hats = {q: hat_of(q) for q in t_sorted}
    lw = grid.log_weight

    def pick_anchor_atom(hat: int) -> int:
        cube = lattice.cubes[hat]
        members = cube.members
        eligible = members[f_mask[members]]
        if eligible.size == 0:
            eligible = members
        cols = _window_indices(grid, cube.radius / RHO_WINDOW, RHO_WINDOW * cube.radius)
        scores = beta_sq_profile[np.ix_(eligible, cols)].sum(axis=1) * lw
        order = np.lexsort((eligible, scores))
        return int(eligible[order[0]])

    hat_planes: dict[int, AffinePlane] = {}
    for hat in sorted(set(hats.values())):
        atom = pick_anchor_atom(hat)
        _, plane, _ = _pick_rho_plane(measure, atom, lattice.cubes[hat].radius, grid)
        hat_planes[hat] = plane

    anchors: dict[int, np.ndarray] = {}
    planes: dict[int, AffinePlane] = {}
    for q in t_sorted:
        cube = lattice.cubes[q]
        hat = hats[q]
        base_plane = hat_planes[hat]
        if q == hat:
            center = pos[cube.center_atom]
            inside = cube.members[ball_mask(pos[cube.members], center, cube.radius)]
            pool = inside if inside.size else cube.members
        else:
            pool = cube.members
        dists = dists_to_plane(pos[pool], base_plane)
        y = pos[pool[int(np.argmin(dists))]]
        anchors[q] = y
        planes[q] = base_plane.translated(y)

    # nets: maximal r_k-separated anchor subsets per matched lattice level
    levels: list[NetLevel] = []
    by_level: dict[int, list[int]] = {}
    for q in t_sorted:
        by_level.setdefault(lattice.cubes[q].level, []).append(q)
    bottom = len(lattice.levels) - 1
    r0_scale = root.side
    k = 0
    while True:
        r_k = r0_scale * 10.0**-k
        s_k = root.level
        while s_k <= bottom and lattice.level_side(s_k) > r_k:
            s_k += 1
        if s_k > bottom:
            break
        cands = by_level.get(s_k, [])
        chosen: list[int] = []
        chosen_pts: list[np.ndarray] = []
        for q in cands:
            y = anchors[q]
            if chosen_pts and np.min(
                np.sum((np.asarray(chosen_pts) - y) ** 2, axis=1)
            ) < r_k * r_k:
                continue
            chosen.append(q)
            chosen_pts.append(y)
        levels.append(
            NetLevel(
                k=k,
                r_k=r_k,
                lattice_level=s_k,
                cube_ids=chosen,
                points=np.asarray(chosen_pts) if chosen_pts else np.zeros((0, pos.shape[1])),
            )
        )
        k += 1

    v2_checked = v2_ok = 0
    for prev, cur in zip(levels, levels[1:]):
        if prev.points.shape[0] == 0 or cur.points.shape[0] == 0:
            continue
        for y in cur.points:
            v2_checked += 1
            gaps = np.linalg.norm(prev.points - y, axis=1)
            if np.min(gaps) <= 2.0 * prev.r_k:
                v2_ok += 1

    eps_sq_sums: dict[tuple[int, int], float] = {}
    max_sum = 0.0
    net_points = [
        (lvl.k, j, lvl.points[j]) for lvl in levels for j in range(lvl.points.shape[0])
    ]
    for k_eval, j_eval, x in net_points:
        total = 0.0
        for lvl in levels:
            near_k = [
                planes[lvl.cube_ids[j]]
                for j in range(lvl.points.shape[0])
                if np.linalg.norm(lvl.points[j] - x) <= 100.0 * lvl.r_k
            ]
            if not near_k:
                continue
            eps_k = 0.0
            for other in levels:
                if abs(other.k - lvl.k) > 2:
                    continue
                near_l = [
                    planes[other.cube_ids[i]]
                    for i in range(other.points.shape[0])
                    if np.linalg.norm(other.points[i] - x) <= 100.0 * other.r_k
                ]
                for pa in near_k:
                    for pb in near_l:
                        eps_k = max(
                            eps_k,
                            plane_local_distance(pa, pb, x, 1.0e4 * other.r_k),
                        )
            total += eps_k * eps_k
        eps_sq_sums[(k_eval, j_eval)] = total
        max_sum = max(max_sum, total)
    return NetsReport(
        levels=levels,
        t_cubes=t_sorted,
        hats=hats,
        anchors=anchors,
        planes=planes,
        eps_sq_sums=eps_sq_sums,
        max_eps_sq_sum=max_sum,
        v2_checked=v2_checked,
        v2_ok=v2_ok,
    )


def far_set(
    tree: CoronaTree,
    lattice: CubeLattice,
    measure: PointMeasure,
    nets: NetsReport,
    alpha: float | None = None,
) -> tuple[np.ndarray, float]:
    """Atoms of the root lying anomalously far from some fitted plane at their scale."""
    if alpha is None:
        alpha = tree.params.alpha
    thresh_root = math.sqrt(alpha)
    pos = measure.positions
    far: set[int] = set()
    for q in nets.t_cubes:
        cube = lattice.cubes[q]
        if not cube.doubling:
            continue
        plane = nets.planes[q]
        dists = dists_to_plane(pos[cube.members], plane)
        hits = cube.members[dists >= thresh_root * cube.side]
        far.update(int(a) for a in hits)
    far_idx = np.array(sorted(far), dtype=int)
    mass = float(np.sum(measure.weights[far_idx])) if far_idx.size else 0.0
    return far_idx, mass


def tree_to_json(tree: CoronaTree, lattice: CubeLattice) -> str:
    obj = {
        "root": tree.root,
        "theta_root": tree.theta_root,
        "cubes": [
            {
                "id": q,
                "level": lattice.cubes[q].level,
                "reason": tree.stop[q].value if q in tree.stop else None,
                "theta_ratio": tree.theta2[q] / tree.theta_root,
                "beta_sq": None
                if math.isinf(tree.beta_sq_cube[q])
                else tree.beta_sq_cube[q],
                "jsum": tree.jsum[q],
            }
            for q in tree.tree
        ],
    }
    return json.dumps(obj, sort_keys=True)
