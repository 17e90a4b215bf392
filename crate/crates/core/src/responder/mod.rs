//! State evaluation, disturbance classification and control recommendations.

mod assess;
mod feedback;
mod recommend;

pub use assess::{evaluate_state, AssessLimits, DisturbanceClass, Evidence, SystemAssessment, SystemStatus};
pub use feedback::{FeedbackRecord, FeedbackStore};
pub use recommend::{
    respond, ActionSource, PolicyHandle, Provenance, RecommendedAction, Recommendation, ResponderConfig, Verdict,
};

use crate::env::VoltVarEnv;

/// Assessment of the environment's present state from its own telemetry
/// and alert monitor.
pub fn assess_env(env: &VoltVarEnv, limits: &AssessLimits) -> SystemAssessment {
    evaluate_state(env.network(), &env.telemetry(), &env.cyber().alarmed_devices(), None, limits)
}
