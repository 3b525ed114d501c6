//! Progress-reward reasoning toolkit.
//!
//! Pipeline stages: synthesize non-expert trajectories from expert
//! demonstrations, label them with normalized progress and templated
//! reasoning, train a toy progress predictor with supervised warm-up plus
//! group-relative policy optimization, serve progress-derived rewards over
//! TCP, run a derivative-free online-RL agent against the service, and
//! evaluate with rank-correlation and quadrant metrics.
//!
//! Core numerics are generic over the scalar type via [`num::Real`]
//! (`f32`/`f64`); the aliases below fix the default `f64` instantiation.

pub mod grpo;
pub mod harness;
pub mod io;
pub mod labeling;
pub mod manifest;
pub mod metrics;
pub mod num;
pub mod response;
pub mod reward;
pub mod service;
pub mod synthesis;
pub mod types;

/// Default scalar for end-to-end pipelines.
pub type Scalar = f64;

pub type EnvState = types::EnvState<Scalar>;
pub type Frame = types::Frame<Scalar>;
pub type Trajectory = types::Trajectory<Scalar>;
pub type ProgressRecord = types::ProgressRecord<Scalar>;
pub type EpisodeLog = types::EpisodeLog<Scalar>;
pub type LabeledTrajectory = io::LabeledTrajectory<Scalar>;
pub type GeometricConfig = labeling::GeometricConfig<Scalar>;
pub type QueryContext = response::QueryContext<Scalar>;
pub type RewardSpec = reward::RewardSpec<Scalar>;
pub type ToyPolicy = grpo::ToyPolicy<Scalar>;
pub type GrpoConfig = grpo::GrpoConfig<Scalar>;
pub type TrainConfig = grpo::TrainConfig<Scalar>;
pub type RewardMap = service::maps::RewardMap<Scalar>;
pub type RewardQuery = service::wire::RewardQuery<Scalar>;
pub type RewardReply = service::wire::RewardReply<Scalar>;
pub type VocResult = metrics::VocResult<Scalar>;
pub type QuadrantReport = metrics::QuadrantReport<Scalar>;
