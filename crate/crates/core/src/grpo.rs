//! Hybrid SFT-then-GRPO training of a small analytic progress predictor.
//!
//! The policy is a linear map from query features to 201 logits over the
//! integer progress bins [-100, 100], wrapped in the structured response
//! format. Gradients are exact; finite-difference checks live in the tests.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::response::{render_response, QueryContext};
use crate::reward::{score, RewardSpec};

pub const NUM_BINS: usize = 201;

pub fn bin_of(progress: i32) -> usize {
    (progress.clamp(-100, 100) + 100) as usize
}

pub fn progress_of(bin: usize) -> i32 {
    bin as i32 - 100
}

/// Fixed-length feature encoding of a query context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub frame_dim: usize,
}

impl FeatureExtractor {
    pub fn new(frame_dim: usize) -> Self {
        FeatureExtractor { frame_dim }
    }

    pub fn feature_dim(&self) -> usize {
        9 + 3 * self.frame_dim
    }

    /// Bias, family one-hot, previous-progress channel, anchor frame, last
    /// window frame, and window mean.
    pub fn extract<S: Real>(&self, ctx: &QueryContext<S>) -> Vec<S> {
        let l = self.frame_dim;
        let mut f = Vec::with_capacity(self.feature_dim());
        f.push(S::one());
        let mut one_hot = [S::zero(); 6];
        one_hot[ctx.goal.family.one_hot_index()] = S::one();
        f.extend_from_slice(&one_hot);
        match ctx.prev_progress {
            Some(p) => {
                f.push(S::from_f64_c(p as f64 / 100.0));
                f.push(S::one());
            }
            None => {
                f.push(S::zero());
                f.push(S::zero());
            }
        }
        let pad = |f: &mut Vec<S>, v: &[S]| {
            for i in 0..l {
                f.push(v.get(i).copied().unwrap_or(S::zero()));
            }
        };
        pad(&mut f, &ctx.first_frame.features);
        let last = ctx
            .window
            .last()
            .map(|fr| fr.features.clone())
            .unwrap_or_else(|| ctx.first_frame.features.clone());
        pad(&mut f, &last);
        let mean: Vec<S> = if ctx.window.is_empty() {
            last
        } else {
            let n = S::from_f64_c(ctx.window.len() as f64);
            (0..l)
                .map(|i| {
                    ctx.window
                        .iter()
                        .map(|fr| fr.features.get(i).copied().unwrap_or(S::zero()))
                        .sum::<S>()
                        / n
                })
                .collect()
        };
        pad(&mut f, &mean);
        f
    }
}

/// Linear-softmax categorical policy over the progress bins, with a
/// deterministic reasoning template as its format channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy<S> {
    /// Row-major [NUM_BINS x feature_dim].
    pub weights: Vec<Vec<S>>,
    pub feature_dim: usize,
    pub think_text: String,
}

impl<S: Real> ToyPolicy<S> {
    /// Zero-initialized policy: uniform over all bins.
    pub fn new(feature_dim: usize) -> Self {
        ToyPolicy {
            weights: vec![vec![S::zero(); feature_dim]; NUM_BINS],
            feature_dim,
            think_text: "Comparing the current frame with the anchor frame to estimate progress."
                .to_string(),
        }
    }

    pub fn logits(&self, features: &[S]) -> Vec<S> {
        debug_assert_eq!(features.len(), self.feature_dim);
        self.weights
            .iter()
            .map(|row| row.iter().zip(features).map(|(&w, &x)| w * x).sum())
            .collect()
    }

    /// Normalized log-probabilities over bins.
    pub fn log_probs(&self, features: &[S]) -> Vec<S> {
        log_softmax(&self.logits(features))
    }

    pub fn probs(&self, features: &[S]) -> Vec<S> {
        self.log_probs(features).iter().map(|&l| l.exp()).collect()
    }

    pub fn argmax_bin(&self, features: &[S]) -> usize {
        let logits = self.logits(features);
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        best
    }

    fn update(&mut self, grad: &[Vec<S>], step: S) {
        for (row, grow) in self.weights.iter_mut().zip(grad) {
            for (w, &g) in row.iter_mut().zip(grow) {
                *w += step * g;
            }
        }
    }
}

fn log_softmax<S: Real>(logits: &[S]) -> Vec<S> {
    let max = logits.iter().cloned().fold(S::neg_infinity(), S::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<S>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

/// One sampled candidate group for a query.
#[derive(Debug, Clone)]
pub struct GroupSample<S> {
    pub features: Vec<S>,
    pub p_true: i32,
    pub bins: Vec<usize>,
    pub texts: Vec<String>,
    /// Log-probability of each candidate's bin under the sampling policy.
    pub log_probs_old: Vec<S>,
    pub rewards: Vec<S>,
    pub advantages: Vec<S>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpoConfig<S> {
    pub group_size: usize,
    pub epsilon: S,
    pub kl_beta: S,
    pub temperature: S,
    pub nucleus_p: S,
    pub learning_rate: S,
    pub seed: u64,
}

impl<S: Real> Default for GrpoConfig<S> {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            epsilon: S::from_f64_c(0.2),
            kl_beta: S::from_f64_c(0.01),
            temperature: S::from_f64_c(0.7),
            nucleus_p: S::from_f64_c(0.9),
            learning_rate: S::from_f64_c(0.5),
            seed: 0,
        }
    }
}

/// Exact NLL of the true bin and its gradient with respect to the weights.
pub fn sft_nll<S: Real>(
    policy: &ToyPolicy<S>,
    features: &[S],
    p_true: i32,
) -> (S, Vec<Vec<S>>) {
    let target = bin_of(p_true);
    let log_probs = policy.log_probs(features);
    let loss = -log_probs[target];
    let probs: Vec<S> = log_probs.iter().map(|&l| l.exp()).collect();
    let grad = (0..NUM_BINS)
        .map(|k| {
            let coeff = probs[k] - if k == target { S::one() } else { S::zero() };
            features.iter().map(|&x| coeff * x).collect()
        })
        .collect();
    (loss, grad)
}

/// Within-group standardized advantages using the population standard
/// deviation; a zero-spread group yields zero advantages.
pub fn group_advantages<S: Real>(rewards: &[S]) -> Vec<S> {
    assert!(rewards.len() >= 2, "group size must be >= 2");
    let n = S::from_f64_c(rewards.len() as f64);
    let mean = rewards.iter().cloned().sum::<S>() / n;
    let var = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<S>() / n;
    if var == S::zero() {
        return vec![S::zero(); rewards.len()];
    }
    let std = var.sqrt();
    rewards.iter().map(|&r| (r - mean) / std).collect()
}

/// Temperature-scaled nucleus sampling over bins.
fn nucleus_sample<S: Real, R: Rng>(
    logits: &[S],
    temperature: S,
    nucleus_p: S,
    rng: &mut R,
) -> usize {
    if temperature <= S::from_f64_c(1e-8) {
        let mut best = 0;
        for (i, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = i;
            }
        }
        return best;
    }
    let scaled: Vec<S> = logits.iter().map(|&l| l / temperature).collect();
    let probs: Vec<S> = log_softmax(&scaled).iter().map(|&l| l.exp()).collect();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap());
    let mut kept = Vec::new();
    let mut mass = S::zero();
    for &i in &order {
        kept.push(i);
        mass += probs[i];
        if mass >= nucleus_p {
            break;
        }
    }
    let u = S::from_f64_c(rng.gen::<f64>()) * mass;
    let mut acc = S::zero();
    for &i in &kept {
        acc += probs[i];
        if u < acc {
            return i;
        }
    }
    *kept.last().unwrap()
}

/// Draw a group of candidates, render them through the format channel
/// (optionally corrupting a fraction to exercise the format grader), score
/// them, and standardize advantages.
pub fn sample_group<S: Real, R: Rng>(
    policy: &ToyPolicy<S>,
    features: &[S],
    p_true: i32,
    cfg: &GrpoConfig<S>,
    reward_spec: &RewardSpec<S>,
    corruption_rate: f64,
    rng: &mut R,
) -> GroupSample<S> {
    let logits = policy.logits(features);
    let log_probs = log_softmax(&logits);
    let mut bins = Vec::with_capacity(cfg.group_size);
    let mut texts = Vec::with_capacity(cfg.group_size);
    let mut log_probs_old = Vec::with_capacity(cfg.group_size);
    let mut rewards = Vec::with_capacity(cfg.group_size);
    for _ in 0..cfg.group_size {
        let bin = nucleus_sample(&logits, cfg.temperature, cfg.nucleus_p, rng);
        let text = if rng.gen::<f64>() < corruption_rate {
            // Format-channel failure: the answer tags are dropped.
            format!("<think>{}</think>", policy.think_text)
        } else {
            render_response(&policy.think_text, progress_of(bin))
        };
        rewards.push(score(&text, p_true, reward_spec));
        log_probs_old.push(log_probs[bin]);
        bins.push(bin);
        texts.push(text);
    }
    let advantages = group_advantages(&rewards);
    GroupSample {
        features: features.to_vec(),
        p_true,
        bins,
        texts,
        log_probs_old,
        rewards,
        advantages,
    }
}

/// Clipped-ratio surrogate minus the KL penalty to the reference, computed
/// exactly over the categorical bins.
pub fn grpo_objective<S: Real>(
    policy: &ToyPolicy<S>,
    ref_policy: &ToyPolicy<S>,
    group: &GroupSample<S>,
    cfg: &GrpoConfig<S>,
) -> S {
    let log_probs = policy.log_probs(&group.features);
    let g = S::from_f64_c(group.bins.len() as f64);
    let mut surrogate = S::zero();
    for (i, &bin) in group.bins.iter().enumerate() {
        let ratio = (log_probs[bin] - group.log_probs_old[i]).exp();
        let clipped = ratio
            .max(S::one() - cfg.epsilon)
            .min(S::one() + cfg.epsilon);
        let a = group.advantages[i];
        surrogate += (ratio * a).min(clipped * a);
    }
    surrogate /= g;
    surrogate - cfg.kl_beta * kl_divergence(policy, ref_policy, &group.features)
}

fn kl_divergence<S: Real>(policy: &ToyPolicy<S>, ref_policy: &ToyPolicy<S>, features: &[S]) -> S {
    let lp = policy.log_probs(features);
    let lq = ref_policy.log_probs(features);
    lp.iter()
        .zip(&lq)
        .map(|(&a, &b)| a.exp() * (a - b))
        .sum()
}

/// Objective value and its exact gradient for one group.
pub fn grpo_step<S: Real>(
    policy: &ToyPolicy<S>,
    ref_policy: &ToyPolicy<S>,
    group: &GroupSample<S>,
    cfg: &GrpoConfig<S>,
) -> (S, Vec<Vec<S>>) {
    let log_probs = policy.log_probs(&group.features);
    let probs: Vec<S> = log_probs.iter().map(|&l| l.exp()).collect();
    let g = S::from_f64_c(group.bins.len() as f64);
    let x = &group.features;

    // d(objective)/d(logit_k), accumulated over candidates and the KL term.
    let mut dlogits = vec![S::zero(); NUM_BINS];
    let mut surrogate = S::zero();
    for (i, &bin) in group.bins.iter().enumerate() {
        let ratio = (log_probs[bin] - group.log_probs_old[i]).exp();
        let clipped = ratio
            .max(S::one() - cfg.epsilon)
            .min(S::one() + cfg.epsilon);
        let a = group.advantages[i];
        let unclipped_term = ratio * a;
        let clipped_term = clipped * a;
        surrogate += unclipped_term.min(clipped_term);
        if unclipped_term <= clipped_term {
            // d(ratio * a)/d(logits) = a * ratio * (e_bin - probs).
            let coeff = a * ratio / g;
            for k in 0..NUM_BINS {
                let indicator = if k == bin { S::one() } else { S::zero() };
                dlogits[k] += coeff * (indicator - probs[k]);
            }
        }
    }
    surrogate /= g;

    let lq = ref_policy.log_probs(x);
    let kl: S = log_probs
        .iter()
        .zip(&lq)
        .map(|(&a, &b)| a.exp() * (a - b))
        .sum();
    for k in 0..NUM_BINS {
        dlogits[k] -= cfg.kl_beta * probs[k] * (log_probs[k] - lq[k] - kl);
    }

    let grad = dlogits
        .iter()
        .map(|&d| x.iter().map(|&xi| d * xi).collect())
        .collect();
    (surrogate - cfg.kl_beta * kl, grad)
}

/// One labeled training query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainExample<S> {
    pub features: Vec<S>,
    pub p_true: i32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig<S> {
    pub grpo: GrpoConfig<S>,
    pub sft_epochs: usize,
    pub sft_learning_rate: S,
    pub grpo_iters: usize,
    /// Fraction of sampled candidates emitted with a broken format.
    pub corruption_rate: f64,
    pub eval_interval: usize,
}

impl<S: Real> Default for TrainConfig<S> {
    fn default() -> Self {
        TrainConfig {
            grpo: GrpoConfig::default(),
            sft_epochs: 40,
            sft_learning_rate: S::from_f64_c(2.0),
            grpo_iters: 60,
            corruption_rate: 0.05,
            eval_interval: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog<S> {
    /// (stage, step, mean verifiable reward).
    pub entries: Vec<(String, usize, S)>,
}

impl<S> Default for TrainingLog<S> {
    fn default() -> Self {
        TrainingLog {
            entries: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at {stage} step {step}")]
    NonFiniteLoss { stage: &'static str, step: usize },
}

pub struct HybridOutcome<S> {
    pub sft_policy: ToyPolicy<S>,
    pub grpo_policy: ToyPolicy<S>,
    pub log: TrainingLog<S>,
}

/// Expected verifiable reward of the policy on one example, computed
/// exactly over the bin distribution (format component at full credit).
pub fn expected_reward<S: Real>(
    policy: &ToyPolicy<S>,
    example: &TrainExample<S>,
    spec: &RewardSpec<S>,
) -> S {
    let probs = policy.probs(&example.features);
    let mut total = spec.format_max;
    for (bin, &p) in probs.iter().enumerate() {
        total += p * crate::reward::score_accuracy(progress_of(bin), example.p_true, spec);
    }
    total
}

pub fn mean_expected_reward<S: Real>(
    policy: &ToyPolicy<S>,
    dataset: &[TrainExample<S>],
    spec: &RewardSpec<S>,
) -> S {
    dataset
        .iter()
        .map(|e| expected_reward(policy, e, spec))
        .sum::<S>()
        / S::from_f64_c(dataset.len() as f64)
}

/// Two-stage recipe: SFT by full-batch gradient descent, then GRPO with the
/// SFT policy as both initialization and frozen reference.
pub fn train_hybrid<S: Real>(
    dataset: &[TrainExample<S>],
    cfg: &TrainConfig<S>,
    reward_spec: &RewardSpec<S>,
) -> Result<HybridOutcome<S>, TrainError> {
    assert!(!dataset.is_empty());
    let feature_dim = dataset[0].features.len();
    let mut policy = ToyPolicy::new(feature_dim);
    let mut log = TrainingLog::default();
    let n = S::from_f64_c(dataset.len() as f64);

    for epoch in 0..cfg.sft_epochs {
        let mut grad_acc = vec![vec![S::zero(); feature_dim]; NUM_BINS];
        let mut loss_acc = S::zero();
        for ex in dataset {
            let (loss, grad) = sft_nll(&policy, &ex.features, ex.p_true);
            loss_acc += loss;
            for (acc, g) in grad_acc.iter_mut().zip(&grad) {
                for (a, &v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        if !(loss_acc / n).is_finite() {
            return Err(TrainError::NonFiniteLoss {
                stage: "sft",
                step: epoch,
            });
        }
        // Descent on the loss.
        policy.update(&grad_acc, -cfg.sft_learning_rate / n);
        if epoch % cfg.eval_interval == 0 {
            log.entries.push((
                "sft".into(),
                epoch,
                mean_expected_reward(&policy, dataset, reward_spec),
            ));
        }
    }

    let sft_policy = policy.clone();
    let ref_policy = sft_policy.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.grpo.seed);

    for iter in 0..cfg.grpo_iters {
        // On-policy: each iteration snapshots the sampling policy.
        let old = policy.clone();
        let mut grad_acc = vec![vec![S::zero(); feature_dim]; NUM_BINS];
        let mut objective_acc = S::zero();
        for ex in dataset {
            let group = sample_group(
                &old,
                &ex.features,
                ex.p_true,
                &cfg.grpo,
                reward_spec,
                cfg.corruption_rate,
                &mut rng,
            );
            let (obj, grad) = grpo_step(&policy, &ref_policy, &group, &cfg.grpo);
            objective_acc += obj;
            for (acc, g) in grad_acc.iter_mut().zip(&grad) {
                for (a, &v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        if !(objective_acc / n).is_finite() {
            return Err(TrainError::NonFiniteLoss {
                stage: "grpo",
                step: iter,
            });
        }
        // Ascent on the objective.
        policy.update(&grad_acc, cfg.grpo.learning_rate / n);
        if iter % cfg.eval_interval == 0 {
            log.entries.push((
                "grpo".into(),
                iter,
                mean_expected_reward(&policy, dataset, reward_spec),
            ));
        }
    }

    Ok(HybridOutcome {
        sft_policy,
        grpo_policy: policy,
        log,
    })
}
