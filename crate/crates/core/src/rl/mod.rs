//! Policy networks and on-policy learners (PPO, A2C).

mod adam;
mod bandit;
mod checkpoint;
pub mod dist;
mod env;
mod losses;
mod nn;
mod norm;
mod train;

pub use adam::{clip_grad_norm, Adam};
pub use bandit::TwoStateBandit;
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader, CheckpointMeta, TensorEntry,
    FORMAT_VERSION, MAGIC,
};
pub use dist::SampledAction;
pub use env::{ActionSpec, AgentAction, Environment, RewardParts, Transition};
pub use losses::{a2c_gradients, clipped_surrogate, gae, normalize, ppo_loss, ppo_ratio, td_errors, A2cGradients, PpoLoss, PpoSample};
pub use nn::{Architecture, ForwardCache, HeadGrads, HeadOutputs, PolicyNet, TensorInfo, LOG_STD_MAX, LOG_STD_MIN};
pub use norm::{RewardScaler, RunningNorm};
pub use train::{
    apply_a2c_step, train, train_with_progress, write_curve_csv, A2cConfig, Algorithm, CurvePoint, OptimizerKind, Policy,
    PpoConfig, TrainConfig, TrainOutcome,
};
