"""Multiscale flatness and curvature diagnostics for discrete weighted point measures."""

from .balance import (
    BalanceOutcome,
    DenseCubesOutcome,
    DenseFamilyOutcome,
    SpreadOutcome,
    balanced_ball_test,
    cube_balance_test,
)
from .corona import (
    CoronaParams,
    CoronaTree,
    StopReason,
    TopFamily,
    build_top,
    build_tree,
    dt_nets,
    far_set,
    j_mass_bound,
    lf_mass_bound,
    packing_report,
)
from .curvature import (
    CurvatureResult,
    comparability_report,
    curvature_exact,
    curvature_sampled,
)
from .errors import ParseError, RectifyError, ResourceError, ValidationError
from .geometry import (
    AffinePlane,
    SpreadWitness,
    circumradius,
    dist_to_plane,
    fit_plane_weighted,
    inv_circumradius_sq,
    plane_comparison_check,
    plane_local_distance,
    spread_eta,
)
from .lattice import (
    Cube,
    CubeLattice,
    LatticeParams,
    build_lattice,
    density_2BQ,
    doubling_flag,
    lattice_invariant_report,
    smallest_doubling_ancestor,
)
from .measures import (
    Ball,
    PointMeasure,
    ball_mass,
    density,
    gen_cantor4,
    gen_circle,
    gen_lipschitz_graph,
    gen_segment,
    load_measure,
    save_measure,
)
from .multiscale import (
    BetaEstimate,
    ScaleGrid,
    ScaleProfile,
    beta_p,
    profile_matrix,
    scale_profile,
    total_energy,
)
from .spatial import SpatialIndex, build_index, query_ball

__version__ = "0.1.0"
