//! Point-mass manipulation environment plus a derivative-free online-RL
//! agent that learns exclusively from served rewards.
//!
//! The agent's entire input is the `AgentObservation` stream; true rewards
//! and success flags live only in the episode logs, for evaluation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::GeometricConfig;
use crate::num::distance;
use crate::response::build_context;
use crate::service::client::{ClientError, RewardClient};
use crate::service::wire::{DebugChannel, RewardQuery};
use crate::synthesis::Dynamics;
use crate::types::{EnvState, EpisodeLog, Frame, Goal, TaskFamily, Trajectory, TrajectoryKind};

pub const OBJECT_KEY: &str = "object";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HarnessTask {
    Reach,
    Push,
    Pick,
}

impl HarnessTask {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reach" => Some(HarnessTask::Reach),
            "push" => Some(HarnessTask::Push),
            "pick" => Some(HarnessTask::Pick),
            _ => None,
        }
    }

    fn goal(self) -> Goal {
        match self {
            HarnessTask::Reach => Goal::new("reach the object", TaskFamily::PickOnly),
            HarnessTask::Push => Goal::new(
                "push the object to the goal marker",
                TaskFamily::PickAndPlace,
            ),
            HarnessTask::Pick => Goal::new(
                "pick up the object and move it to the goal marker",
                TaskFamily::PickAndPlace,
            ),
        }
    }
}

/// Deterministic point-mass environment. The gripper moves by a scaled
/// action delta; the object moves rigidly with the gripper when within the
/// contact radius (push) and additionally only while the gripper is closed
/// (pick).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMassEnv {
    pub task: HarnessTask,
    pub dim: usize,
    pub horizon: usize,
    pub action_scale: f64,
    pub contact_radius: f64,
    pub success_radius: f64,
}

impl PointMassEnv {
    pub fn new(task: HarnessTask, dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "dim must be 2 or 3");
        PointMassEnv {
            task,
            dim,
            horizon: 20,
            action_scale: 0.15,
            contact_radius: 0.15,
            success_radius: 0.1,
        }
    }

    pub fn goal(&self) -> Goal {
        self.task.goal()
    }

    /// Action dimension: one delta per axis plus the gripper channel.
    pub fn action_dim(&self) -> usize {
        self.dim + 1
    }

    /// Seeded initial state; gripper starts away from the object.
    pub fn reset<R: Rng>(&self, rng: &mut R) -> EnvState<f64> {
        let sample = |rng: &mut R| -> Vec<f64> {
            (0..self.dim).map(|_| rng.gen_range(-0.9..0.9)).collect()
        };
        let object = sample(rng);
        let gripper = loop {
            let g = sample(rng);
            if distance(&g, &object) > 3.0 * self.success_radius {
                break g;
            }
        };
        let goal = match self.task {
            HarnessTask::Reach => object.clone(),
            HarnessTask::Push => sample(rng),
            HarnessTask::Pick => {
                let mut g = sample(rng);
                // Lift target sits above the table plane on the last axis.
                let last = self.dim - 1;
                g[last] = rng.gen_range(0.5..0.9);
                g
            }
        };
        let mut object_pos = BTreeMap::new();
        object_pos.insert(OBJECT_KEY.to_string(), object);
        EnvState {
            gripper_pos: gripper,
            gripper_open: true,
            object_pos,
            goal_pos: goal,
            contact_points: Vec::new(),
        }
    }

    fn in_contact(&self, state: &EnvState<f64>) -> bool {
        distance(&state.gripper_pos, &state.object_pos[OBJECT_KEY]) <= self.contact_radius
    }

    /// One dynamics step. The action is clipped to [-1,1] per axis; the last
    /// channel toggles the gripper (> 0 open, <= 0 closed).
    pub fn step_full(&self, state: &EnvState<f64>, action: &[f64]) -> (EnvState<f64>, f64, bool) {
        let mut next = state.clone();
        let delta: Vec<f64> = (0..self.dim)
            .map(|i| self.action_scale * action.get(i).copied().unwrap_or(0.0).clamp(-1.0, 1.0))
            .collect();
        next.gripper_open = action.get(self.dim).copied().unwrap_or(1.0) > 0.0;

        let attached = match self.task {
            HarnessTask::Reach => false,
            HarnessTask::Push => self.in_contact(state),
            HarnessTask::Pick => self.in_contact(state) && !next.gripper_open,
        };
        for i in 0..self.dim {
            next.gripper_pos[i] = (next.gripper_pos[i] + delta[i]).clamp(-1.0, 1.0);
        }
        if attached {
            let obj = next.object_pos.get_mut(OBJECT_KEY).unwrap();
            for i in 0..self.dim {
                obj[i] = (obj[i] + delta[i]).clamp(-1.0, 1.0);
            }
        }
        next.contact_points = if attached {
            vec![(next.gripper_pos.clone(), next.object_pos[OBJECT_KEY].clone())]
        } else {
            Vec::new()
        };
        let success = self.success(&next);
        (next, if success { 1.0 } else { 0.0 }, success)
    }

    /// Pure geometric success predicate.
    pub fn success(&self, state: &EnvState<f64>) -> bool {
        match self.task {
            HarnessTask::Reach => {
                distance(&state.gripper_pos, &state.object_pos[OBJECT_KEY]) <= self.success_radius
            }
            HarnessTask::Push | HarnessTask::Pick => {
                distance(&state.object_pos[OBJECT_KEY], &state.goal_pos) <= self.success_radius
            }
        }
    }

    /// Policy observation: relative offsets rather than absolute positions,
    /// so one linear controller generalizes across resets.
    pub fn policy_features(&self, state: &EnvState<f64>) -> Vec<f64> {
        let obj = &state.object_pos[OBJECT_KEY];
        let mut f: Vec<f64> = (0..self.dim)
            .map(|i| obj[i] - state.gripper_pos[i])
            .collect();
        f.extend((0..self.dim).map(|i| state.goal_pos[i] - obj[i]));
        f.push(if state.gripper_open { 1.0 } else { 0.0 });
        f
    }

    /// Geometric labeling configuration matching this task's structure.
    pub fn oracle_config(&self) -> GeometricConfig<f64> {
        GeometricConfig {
            beta: match self.task {
                HarnessTask::Reach => 0.0,
                HarnessTask::Push | HarnessTask::Pick => 0.5,
            },
            target_object: OBJECT_KEY.to_string(),
            epsilon_change: None,
        }
    }
}

impl Dynamics<f64> for PointMassEnv {
    fn step(&self, state: &EnvState<f64>, action: &[f64]) -> EnvState<f64> {
        self.step_full(state, action).0
    }

    fn action_bounds(&self) -> Vec<(f64, f64)> {
        vec![(-1.0, 1.0); self.action_dim()]
    }
}

/// The only data the learning agent ever receives: its own observation
/// features and the served reward. No true-reward or success field exists
/// on this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub features: Vec<f64>,
    pub served_reward: f64,
}

/// Cross-entropy-method search over a linear state-to-action policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub noise_init: f64,
    pub noise_decay: f64,
    pub noise_floor: f64,
    /// Deterministic evaluation cadence, in CEM iterations.
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    /// Query the rewarder every `query_stride` steps; intermediate steps get
    /// linearly interpolated rewards.
    pub query_stride: usize,
    /// Episodes scored per candidate; scores are summed over them.
    pub episodes_per_candidate: usize,
    /// Fraction of the elite statistics blended into the mean/std per refit.
    pub refit_rate: f64,
    /// Episodes reserved at the end for the playoff among recent means.
    pub playoff_budget: usize,
    /// How many recent iteration means enter the playoff.
    pub playoff_pool: usize,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 20,
            elite_frac: 0.2,
            noise_init: 1.0,
            noise_decay: 0.8,
            noise_floor: 0.05,
            eval_interval: 2,
            eval_episodes: 20,
            seed: 0,
            query_stride: 1,
            episodes_per_candidate: 1,
            refit_rate: 1.0,
            playoff_budget: 0,
            playoff_pool: 6,
        }
    }
}

impl CemConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        if self.population < 4 {
            return Err(HarnessError::InvalidConfig("population must be >= 4".into()));
        }
        if !(self.elite_frac > 0.0 && self.elite_frac < 1.0) {
            return Err(HarnessError::InvalidConfig(
                "elite fraction must lie in (0,1)".into(),
            ));
        }
        if self.query_stride == 0 {
            return Err(HarnessError::InvalidConfig("query stride must be >= 1".into()));
        }
        Ok(())
    }

    fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_frac).round() as usize).max(1)
    }
}

/// Linear policy: `a = W [features; 1]`, clipped per axis to [-1,1].
pub fn linear_policy(params: &[f64], features: &[f64], action_dim: usize) -> Vec<f64> {
    let cols = features.len() + 1;
    assert_eq!(params.len(), action_dim * cols, "parameter shape");
    (0..action_dim)
        .map(|a| {
            let row = &params[a * cols..(a + 1) * cols];
            let mut acc = row[features.len()];
            for (w, x) in row.iter().zip(features) {
                acc += w * x;
            }
            acc.clamp(-1.0, 1.0)
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid harness config: {0}")]
    InvalidConfig(String),
    #[error("reward service unreachable: {source}")]
    ServiceUnreachable {
        source: ClientError,
        /// Episodes completed before the service was lost.
        partial: Box<RlLog>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RlLog {
    pub episodes: Vec<EpisodeLog<f64>>,
    /// (episodes consumed so far, evaluated success rate) snapshots.
    pub eval_history: Vec<(usize, f64)>,
    pub final_success: f64,
    pub mean_params: Vec<f64>,
    /// Count of degraded (fallback) replies seen during training.
    pub degraded_replies: usize,
}

/// Roll out one training episode against the reward service.
///
/// The returned observations carry only served rewards; the episode log
/// additionally records the hidden true signals for later evaluation.
fn rollout_with_service(
    env: &PointMassEnv,
    client: &mut RewardClient,
    params: &[f64],
    episode_id: &str,
    stride: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<AgentObservation>, EpisodeLog<f64>, usize), ClientError> {
    let goal = env.goal();
    let mut state = env.reset(rng);
    let first_state = state.clone();
    let mut frames = vec![Frame::new(state.features(), None)];
    let mut observations = Vec::with_capacity(env.horizon);
    let mut predicted = Vec::new();
    let mut sparse: Vec<(usize, f64)> = Vec::new();
    let mut true_rewards = Vec::with_capacity(env.horizon);
    let mut success = false;
    let mut prev_progress = None;
    let mut degraded = 0usize;

    for t in 0..env.horizon {
        let action = linear_policy(params, &env.policy_features(&state), env.action_dim());
        let (next, true_r, s) = env.step_full(&state, &action);
        state = next;
        frames.push(Frame::new(state.features(), None));
        true_rewards.push(true_r);
        success |= s;

        let last_step = t + 1 == env.horizon;
        if t % stride == 0 || last_step {
            let context = build_context::<f64, ChaCha8Rng>(
                &goal,
                &frames,
                frames.len() - 1,
                2,
                prev_progress,
                None,
            )
            .expect("window index in range");
            let reply = client.query(&RewardQuery {
                episode_id: episode_id.to_string(),
                step: t,
                context,
                debug: Some(DebugChannel {
                    first_state: first_state.clone(),
                    state: state.clone(),
                }),
            })?;
            prev_progress = Some(reply.progress);
            predicted.push(reply.progress);
            sparse.push((t, reply.reward));
            if reply.degraded {
                degraded += 1;
            }
        }
    }

    let served = crate::service::maps::interpolate_rewards(&sparse, env.horizon)
        .expect("query steps are strictly increasing");
    for (t, &r) in served.iter().enumerate() {
        observations.push(AgentObservation {
            features: frames[t].features.clone(),
            served_reward: r,
        });
    }

    let log = EpisodeLog {
        trajectory: Trajectory {
            goal,
            kind: TrajectoryKind::Expert,
            frames,
            states: None,
            actions: None,
        },
        predicted_progress: predicted,
        served_rewards: served,
        true_rewards,
        success,
    };
    Ok((observations, log, degraded))
}

/// Deterministic evaluation: N rollouts without exploration noise; success
/// counts when the predicate holds at any timestep.
pub fn evaluate(
    env: &PointMassEnv,
    params: &[f64],
    n: usize,
    seed: u64,
) -> (f64, Vec<EpisodeLog<f64>>) {
    assert!(n >= 1, "evaluation needs at least one episode");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(n);
    let mut successes = 0usize;
    for _ in 0..n {
        let mut state = env.reset(&mut rng);
        let mut frames = vec![Frame::new(state.features(), None)];
        let mut true_rewards = Vec::with_capacity(env.horizon);
        let mut success = false;
        for _ in 0..env.horizon {
            let action = linear_policy(params, &env.policy_features(&state), env.action_dim());
            let (next, true_r, s) = env.step_full(&state, &action);
            state = next;
            frames.push(Frame::new(state.features(), None));
            true_rewards.push(true_r);
            success |= s;
        }
        successes += success as usize;
        logs.push(EpisodeLog {
            trajectory: Trajectory {
                goal: env.goal(),
                kind: TrajectoryKind::Expert,
                frames,
                states: None,
                actions: None,
            },
            predicted_progress: Vec::new(),
            served_rewards: Vec::new(),
            true_rewards,
            success,
        });
    }
    (successes as f64 / n as f64, logs)
}

/// Online RL against a running reward service. Candidate episodes are scored
/// purely by summed served rewards; true rewards are logged but never enter
/// the CEM refit.
pub fn run_online_rl(
    env: &PointMassEnv,
    rewarder: &str,
    cfg: &CemConfig,
    budget_episodes: usize,
) -> Result<RlLog, HarnessError> {
    cfg.validate()?;
    let mut client = match RewardClient::connect(rewarder) {
        Ok(c) => c,
        Err(e) => {
            return Err(HarnessError::ServiceUnreachable {
                source: e,
                partial: Box::new(RlLog::default()),
            })
        }
    };

    let feat_dim = env
        .policy_features(&env.reset(&mut ChaCha8Rng::seed_from_u64(cfg.seed)))
        .len();
    let param_dim = env.action_dim() * (feat_dim + 1);
    let mut mean = vec![0.0f64; param_dim];
    let mut std = vec![cfg.noise_init; param_dim];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = RlLog::default();
    let mut episodes_used = 0usize;
    let mut iter = 0usize;
    let mut recent_means: Vec<Vec<f64>> = Vec::new();

    // The tail of the budget is reserved for a playoff among recent
    // iteration means, so one noisy final refit cannot discard a good
    // incumbent. Both phases consume only served rewards.
    let playoff_budget = cfg.playoff_budget.min(budget_episodes / 4);
    let train_budget = budget_episodes - playoff_budget;

    let episode_budget_per_candidate = cfg.episodes_per_candidate.max(1);
    while episodes_used < train_budget {
        let pop = cfg
            .population
            .min((train_budget - episodes_used) / episode_budget_per_candidate)
            .max(1);
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(pop);
        for i in 0..pop {
            // Elitism: the current mean competes as candidate 0, so a good
            // incumbent is never silently lost to refit noise.
            let params: Vec<f64> = if i == 0 && iter > 0 {
                mean.clone()
            } else {
                (0..param_dim)
                    .map(|j| {
                        let eps: f64 = StandardNormal.sample(&mut rng);
                        mean[j] + std[j] * eps
                    })
                    .collect()
            };
            let mut score = 0.0;
            for e in 0..episode_budget_per_candidate {
                if episodes_used >= train_budget {
                    break;
                }
                let episode_id = format!("train-{}-{}-{}-{}", cfg.seed, iter, i, e);
                // Common random resets: every candidate in an iteration faces
                // the same initial states, so served-reward scores compare
                // policies rather than luck of the draw.
                let mut ep_rng = ChaCha8Rng::seed_from_u64(
                    cfg.seed
                        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                        .wrapping_add((iter * episode_budget_per_candidate + e) as u64),
                );
                let (obs, ep_log, degraded) = match rollout_with_service(
                    env,
                    &mut client,
                    &params,
                    &episode_id,
                    cfg.query_stride,
                    &mut ep_rng,
                ) {
                    Ok(r) => r,
                    Err(e) => {
                        log.final_success = log
                            .eval_history
                            .last()
                            .map(|&(_, s)| s)
                            .unwrap_or(0.0);
                        log.mean_params = mean;
                        return Err(HarnessError::ServiceUnreachable {
                            source: e,
                            partial: Box::new(log),
                        });
                    }
                };
                score += obs.iter().map(|o| o.served_reward).sum::<f64>();
                log.degraded_replies += degraded;
                log.episodes.push(ep_log);
                episodes_used += 1;
            }
            scored.push((score, params));
        }

        // Refit on the served-reward elites only.
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let elites = &scored[..cfg.elite_count().min(scored.len())];
        let floor = (cfg.noise_init * cfg.noise_decay.powi(iter as i32)).max(cfg.noise_floor);
        for j in 0..param_dim {
            let m: f64 = elites.iter().map(|(_, p)| p[j]).sum::<f64>() / elites.len() as f64;
            let v: f64 = elites.iter().map(|(_, p)| (p[j] - m) * (p[j] - m)).sum::<f64>()
                / elites.len() as f64;
            // Smoothed refit: single-episode elite sets are noisy, so late
            // iterations must not yank an already-good mean.
            mean[j] = (1.0 - cfg.refit_rate) * mean[j] + cfg.refit_rate * m;
            std[j] = ((1.0 - cfg.refit_rate) * std[j] + cfg.refit_rate * v.sqrt()).max(floor);
        }
        iter += 1;
        recent_means.push(mean.clone());
        if recent_means.len() > cfg.playoff_pool.max(1) {
            recent_means.remove(0);
        }

        if iter % cfg.eval_interval == 0 || episodes_used >= train_budget {
            let (rate, _) = evaluate(env, &mean, cfg.eval_episodes, cfg.seed ^ 0x5eed_cafe);
            log.eval_history.push((episodes_used, rate));
        }
    }

    // Playoff: recent means compete on common resets; winner by summed
    // served reward becomes the returned policy.
    if recent_means.len() >= 2 && playoff_budget >= recent_means.len() {
        let eps_each = playoff_budget / recent_means.len();
        let mut best = (f64::NEG_INFINITY, mean.clone());
        for (ci, cand) in recent_means.iter().enumerate() {
            let mut score = 0.0;
            for e in 0..eps_each {
                let episode_id = format!("playoff-{}-{}-{}", cfg.seed, ci, e);
                let mut ep_rng = ChaCha8Rng::seed_from_u64(
                    cfg.seed
                        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                        .wrapping_add(0x0ff5_1de5)
                        .wrapping_add(e as u64),
                );
                let (obs, ep_log, degraded) = match rollout_with_service(
                    env,
                    &mut client,
                    cand,
                    &episode_id,
                    cfg.query_stride,
                    &mut ep_rng,
                ) {
                    Ok(r) => r,
                    Err(e) => {
                        log.final_success =
                            log.eval_history.last().map(|&(_, s)| s).unwrap_or(0.0);
                        log.mean_params = mean;
                        return Err(HarnessError::ServiceUnreachable {
                            source: e,
                            partial: Box::new(log),
                        });
                    }
                };
                score += obs.iter().map(|o| o.served_reward).sum::<f64>();
                log.degraded_replies += degraded;
                log.episodes.push(ep_log);
                episodes_used += 1;
            }
            if score > best.0 {
                best = (score, cand.clone());
            }
        }
        mean = best.1;
        let (rate, _) = evaluate(env, &mean, cfg.eval_episodes, cfg.seed ^ 0x5eed_cafe);
        log.eval_history.push((episodes_used, rate));
    }

    log.final_success = log.eval_history.last().map(|&(_, s)| s).unwrap_or(0.0);
    log.mean_params = mean;
    Ok(log)
}
