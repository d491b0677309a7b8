//! Critical regime: Sobolev constants, bubbles, the local minimizer near 0
//! and the mountain-pass solution above it.

mod bubble;
mod mountain;
mod profile;
mod sobolev;

pub use bubble::{
    asymptotics_experiment, build_bubble_family, log_slope, AsymptoticsRow, AsymptoticsTable,
    BubbleFamily, BubbleMember, SkippedEps, SlopeFit, DEFAULT_EPS, DEVIATION_SLOPE_TOL,
    GAMMA_SLOPE_TOL, MIN_NODES_ACROSS,
};
pub use mountain::{
    check_sphere_floor, compute_thresholds, golden_max, local_minimize_in_ball, mountain_pass,
    one_d_identity, thresholds_from_constants, verify_mpl_gap, CriticalOptions,
    CriticalThresholds, GapRow, GapTable, MountainPass, OneDIdentity, PathPoint, SphereCheck,
};
pub use profile::{Profile, ProfileOptions, ReferenceProfile};
pub use sobolev::{
    box_mode, estimate_sobolev_constants, rayleigh_descent, SobolevEstimate, SobolevOptions,
};
