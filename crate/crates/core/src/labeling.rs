//! Ground-truth progress labels and templated reasoning.
//!
//! State-based trajectories are labeled from geometric distances; frame-only
//! trajectories use temporal order as a proxy, with labels inherited through
//! perturbations via frame provenance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{distance, Real};
use crate::types::{EnvState, ProgressRecord, Trajectory, TrajectoryKind};

/// Mixing weight and target selection for geometric progress.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometricConfig<S> {
    /// Weight of the object-to-goal distance against the reach distance.
    pub beta: S,
    pub target_object: String,
    /// Tolerance of the "no change" band for reasoning rules. When absent it
    /// resolves to 1% of the reference distance at the comparison site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_change: Option<S>,
}

impl<S: Real> GeometricConfig<S> {
    pub fn new(beta: S, target_object: impl Into<String>) -> Self {
        GeometricConfig {
            beta,
            target_object: target_object.into(),
            epsilon_change: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaSign {
    Decrease,
    Steady,
    Increase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CotRule {
    pub reach: DeltaSign,
    pub transport: DeltaSign,
    pub text: String,
}

#[derive(Deserialize)]
struct CotRuleFile {
    version: u32,
    rules: Vec<CotRule>,
}

/// Optional text transformer for reasoning diversity enrichment. Must be
/// safe for concurrent invocation.
pub type EnrichmentHook = Arc<dyn Fn(&str) -> String + Send + Sync>;

/// Ordered rule table over (reach delta, transport delta) sign pairs.
#[derive(Clone)]
pub struct CotTemplateSet {
    rules: Vec<CotRule>,
    pub enrichment_hook: Option<EnrichmentHook>,
}

impl std::fmt::Debug for CotTemplateSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CotTemplateSet")
            .field("rules", &self.rules.len())
            .field("enrichment_hook", &self.enrichment_hook.is_some())
            .finish()
    }
}

impl CotTemplateSet {
    /// Build a rule set, asserting that every sign combination is covered.
    pub fn new(rules: Vec<CotRule>) -> Result<Self, LabelingError> {
        let signs = [DeltaSign::Decrease, DeltaSign::Steady, DeltaSign::Increase];
        for r in &signs {
            for t in &signs {
                if !rules.iter().any(|rule| rule.reach == *r && rule.transport == *t) {
                    return Err(LabelingError::IncompleteRules);
                }
            }
        }
        Ok(CotTemplateSet {
            rules,
            enrichment_hook: None,
        })
    }

    /// The rule table shipped with the crate (versioned data file).
    pub fn builtin() -> Self {
        let file: CotRuleFile =
            serde_json::from_str(include_str!("../assets/cot_rules.json")).expect("builtin rules");
        assert_eq!(file.version, 1);
        Self::new(file.rules).expect("builtin rules complete")
    }

    pub fn with_hook(mut self, hook: EnrichmentHook) -> Self {
        self.enrichment_hook = Some(hook);
        self
    }

    fn lookup(&self, reach: DeltaSign, transport: DeltaSign) -> &str {
        self.rules
            .iter()
            .find(|r| r.reach == reach && r.transport == transport)
            .map(|r| r.text.as_str())
            .expect("rule coverage asserted at construction")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelingError {
    #[error("trajectory has no states")]
    MissingStates,
    #[error("target object {0:?} missing from a state")]
    MissingTarget(String),
    #[error("degenerate distance range: trajectory carries no progress signal")]
    DegenerateRange,
    #[error("temporal proxy undefined for a single-frame trajectory")]
    DegenerateLength,
    #[error("frame missing provenance index")]
    MissingProvenance,
    #[error("source index {0} outside expert labels")]
    IndexOutOfRange(usize),
    #[error("rule table does not cover every sign combination")]
    IncompleteRules,
}

/// Reach distance: summed distance over contact point pairs, falling back
/// to the gripper-to-target distance when no contact pairs are declared.
fn reach_distance<S: Real>(state: &EnvState<S>, cfg: &GeometricConfig<S>) -> Result<S, LabelingError> {
    if !state.contact_points.is_empty() {
        return Ok(state
            .contact_points
            .iter()
            .map(|(r, o)| distance(r, o))
            .sum());
    }
    let obj = state
        .object_pos
        .get(&cfg.target_object)
        .ok_or_else(|| LabelingError::MissingTarget(cfg.target_object.clone()))?;
    Ok(distance(&state.gripper_pos, obj))
}

fn transport_distance<S: Real>(
    state: &EnvState<S>,
    cfg: &GeometricConfig<S>,
) -> Result<S, LabelingError> {
    let obj = state
        .object_pos
        .get(&cfg.target_object)
        .ok_or_else(|| LabelingError::MissingTarget(cfg.target_object.clone()))?;
    Ok(distance(obj, &state.goal_pos))
}

/// Combined task distance `y = (1 - beta) * y_reach + beta * y_transport`.
pub fn task_distance<S: Real>(
    state: &EnvState<S>,
    cfg: &GeometricConfig<S>,
) -> Result<S, LabelingError> {
    let reach = reach_distance(state, cfg)?;
    let transport = transport_distance(state, cfg)?;
    Ok((S::one() - cfg.beta) * reach + cfg.beta * transport)
}

/// Normalize distances into progress: the minimum-distance timestep maps to
/// 1, the maximum to 0.
pub fn normalize_distances<S: Real>(ys: &[S]) -> Result<Vec<S>, LabelingError> {
    let max = ys.iter().cloned().fold(S::neg_infinity(), S::max);
    let min = ys.iter().cloned().fold(S::infinity(), S::min);
    if max == min {
        return Err(LabelingError::DegenerateRange);
    }
    Ok(ys.iter().map(|&y| (max - y) / (max - min)).collect())
}

/// Geometric progress labels for a state-carrying trajectory (reasoning is
/// filled separately).
pub fn geometric_progress<S: Real>(
    traj: &Trajectory<S>,
    cfg: &GeometricConfig<S>,
) -> Result<Vec<ProgressRecord<S>>, LabelingError> {
    let states = traj.states.as_ref().ok_or(LabelingError::MissingStates)?;
    let ys = states
        .iter()
        .map(|s| task_distance(s, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let vs = normalize_distances(&ys)?;
    Ok(vs
        .into_iter()
        .map(|v| ProgressRecord::from_v(v, String::new()))
        .collect())
}

/// Temporal-order progress proxy: `v_t = t / (T - 1)` with 0-based `t`.
pub fn temporal_proxy<S: Real>(t_len: usize) -> Result<Vec<S>, LabelingError> {
    if t_len < 2 {
        return Err(LabelingError::DegenerateLength);
    }
    let denom = S::from_f64_c((t_len - 1) as f64);
    Ok((0..t_len)
        .map(|t| S::from_f64_c(t as f64) / denom)
        .collect())
}

/// Single-frame variant for terminal-frame-only datasets: `T == 1` maps to
/// `v = [1.0]` instead of erroring.
pub fn temporal_proxy_allow_single<S: Real>(t_len: usize) -> Result<Vec<S>, LabelingError> {
    if t_len == 1 {
        return Ok(vec![S::one()]);
    }
    temporal_proxy(t_len)
}

/// Copy each perturbed frame's label from its originating expert timestep.
pub fn inherit_labels<S: Real>(
    perturbed: &Trajectory<S>,
    expert_labels: &[ProgressRecord<S>],
) -> Result<Vec<ProgressRecord<S>>, LabelingError> {
    perturbed
        .frames
        .iter()
        .map(|f| {
            let src = f.source_index.ok_or(LabelingError::MissingProvenance)?;
            expert_labels
                .get(src)
                .cloned()
                .ok_or(LabelingError::IndexOutOfRange(src))
        })
        .collect()
}

fn delta_sign<S: Real>(delta: S, epsilon: S) -> DeltaSign {
    if delta.abs() < epsilon {
        DeltaSign::Steady
    } else if delta < S::zero() {
        DeltaSign::Decrease
    } else {
        DeltaSign::Increase
    }
}

/// Templated reasoning about the change between two consecutive states.
pub fn template_cot<S: Real>(
    prev: &EnvState<S>,
    curr: &EnvState<S>,
    cfg: &GeometricConfig<S>,
    templates: &CotTemplateSet,
) -> Result<String, LabelingError> {
    let reach_prev = reach_distance(prev, cfg)?;
    let reach_curr = reach_distance(curr, cfg)?;
    let trans_prev = transport_distance(prev, cfg)?;
    let trans_curr = transport_distance(curr, cfg)?;
    let epsilon = cfg.epsilon_change.unwrap_or_else(|| {
        let reference = task_distance(prev, cfg).unwrap_or(S::one());
        S::from_f64_c(0.01) * reference.abs().max(S::from_f64_c(1e-9))
    });
    let text = templates.lookup(
        delta_sign(reach_curr - reach_prev, epsilon),
        delta_sign(trans_curr - trans_prev, epsilon),
    );
    Ok(match &templates.enrichment_hook {
        Some(hook) => hook(text),
        None => text.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Geometric,
    Temporal,
}

/// Deterministic fallback reasoning for frame-only trajectories, standing in
/// for a pluggable enrichment model.
fn frame_only_reasoning<S: Real>(goal: &str, prev_p: Option<i32>, p: i32) -> String {
    let direction = match prev_p {
        Some(q) if p > q => "advancing toward",
        Some(q) if p < q => "regressing away from",
        Some(_) => "holding steady on",
        None => "starting",
    };
    format!("The scene is {direction} the goal: {goal}. Estimated task progress is {p}%.")
}

/// Full labeling of one trajectory: progress values plus per-timestep
/// reasoning.
pub fn label_trajectory<S: Real>(
    traj: &Trajectory<S>,
    mode: LabelMode,
    cfg: &GeometricConfig<S>,
    templates: &CotTemplateSet,
) -> Result<Vec<ProgressRecord<S>>, LabelingError> {
    match mode {
        LabelMode::Geometric => {
            let states = traj.states.as_ref().ok_or(LabelingError::MissingStates)?;
            let mut records = geometric_progress(traj, cfg)?;
            // Resolve the "no change" band once against the initial distance.
            let mut cfg = cfg.clone();
            if cfg.epsilon_change.is_none() {
                let y0 = task_distance(&states[0], &cfg)?;
                cfg.epsilon_change =
                    Some(S::from_f64_c(0.01) * y0.abs().max(S::from_f64_c(1e-9)));
            }
            for (t, rec) in records.iter_mut().enumerate() {
                let prev = &states[t.saturating_sub(1)];
                rec.reasoning = template_cot(prev, &states[t], &cfg, templates)?;
            }
            Ok(records)
        }
        LabelMode::Temporal => {
            let is_expert = traj.kind == TrajectoryKind::Expert;
            let vs: Vec<S> = if is_expert {
                temporal_proxy(traj.len())?
            } else {
                let expert_len = traj
                    .frames
                    .iter()
                    .map(|f| f.source_index.ok_or(LabelingError::MissingProvenance))
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .max()
                    .unwrap_or(0)
                    .max(traj.len() - 1)
                    + 1;
                let expert_labels: Vec<ProgressRecord<S>> = temporal_proxy(expert_len)?
                    .into_iter()
                    .map(|v| ProgressRecord::from_v(v, String::new()))
                    .collect();
                inherit_labels(traj, &expert_labels)?
                    .into_iter()
                    .map(|r| r.v)
                    .collect()
            };
            let mut prev_p = None;
            let mut out = Vec::with_capacity(vs.len());
            for v in vs {
                let mut rec = ProgressRecord::from_v(v, String::new());
                let text = frame_only_reasoning::<S>(&traj.goal.text, prev_p, rec.p);
                rec.reasoning = match &templates.enrichment_hook {
                    Some(hook) => hook(&text),
                    None => text,
                };
                prev_p = Some(rec.p);
                out.push(rec);
            }
            Ok(out)
        }
    }
}
