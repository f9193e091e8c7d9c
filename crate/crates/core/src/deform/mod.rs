//! The four deformation engines: properness (two-stage pole/stretch sweep),
//! labyrinth completeness, diameter boost, and the joint step.

mod boost;
mod certificate;
mod completeness;
mod eval;
mod properness;
mod targets;

pub use boost::{diameter_boost, solve_radius_schedule, BoostConfig, BoostOutcome};
pub use certificate::{ConclusionCheck, DeformationCertificate};
pub use completeness::{basis_cycles, completeness_step, phi_candidates, CompletenessConfig};
pub use eval::{domain_cloud, max_deviation, min_metric_ratio, Evaluator};
pub use properness::{properness_step, PropernessConfig};
pub use targets::BoundaryTarget;

mod joint;
pub use joint::{joint_step, JointConfig};
