//! Least-squares alignment of the pooled hidden-state space with the input
//! embedding space.

mod anchors;
mod linear;

pub use anchors::{load_counts, select_anchors, AnchorOptions, AnchorPair, AnchorReport, AnchorSet};
pub use crate::probe::{degradation_report, Degradation};
pub use linear::{apply_map, fit_linear_map, FitOptions, LinearMap, MapInfo, Solver, INPUT_SPACE, QR_CONDITION_THRESHOLD};
