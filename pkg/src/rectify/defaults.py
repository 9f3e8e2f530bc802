"""Frozen calibration constants for the experiment harness.

These are implementation calibration targets fixed before release, not
theoretical constants; the underlying comparabilities only assert that some
fixed constant exists.  Bump the version when refreezing.
"""

CALIBRATION = {
    "version": 1,
    # ratios (c^2 + mass) / (energy_p1 + mass) across the rectifiable family
    # and the divergence family must fit a band of this width
    "comparability_band": 16.0,
    # per-generator ratio drift across atom counts
    "comparability_drift": 4.0,
    # rectifiable tail increment of the truncated square function, as a
    # fraction of the full truncation
    "discrimination_tail_fraction": 0.05,
    # required unrectifiable-to-rectifiable per-scale increment advantage
    "discrimination_increment_factor": 10.0,
    # golden per-scale median increment of the generation-6 corner measure
    # at 12 scales (recorded from a reference run), with its tolerance
    "cantor6_median_increment": 0.02013,
    "golden_tolerance": 0.20,
}
