//! Non-expert trajectory generation.
//!
//! Simulated trajectories get random-action deviations with optional
//! interpolated recovery toward a downstream expert state. Observation-only
//! trajectories get temporal reversal windows. Level sampling follows the
//! per-family level taxonomy.

use rand::Rng;
use thiserror::Error;

use crate::num::Real;
use crate::types::{EnvState, Frame, TaskFamily, Trajectory, TrajectoryKind};

/// Environment step function with declared action bounds, supplied by the
/// RL harness (or any other simulator).
pub trait Dynamics<S: Real> {
    fn step(&self, state: &EnvState<S>, action: &[S]) -> EnvState<S>;
    /// Per-axis box bounds of the action space.
    fn action_bounds(&self) -> Vec<(S, S)>;
}

/// One deviation: start timestep `q` (1-based), `w` random actions, and an
/// optional interpolated recovery to the expert state at `q + h`.
///
/// `w == 0` is permitted only with `q == T` and means "no deviation":
/// the top taxonomy level reproduces the full expert trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviationSpec {
    pub q: usize,
    pub w: usize,
    pub recover: bool,
    pub h: usize,
    pub n_interp: usize,
}

/// Temporal reversal points (1-based) with a shared window length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReversalSpec {
    pub points: Vec<usize>,
    pub w: usize,
}

/// A sampled non-expert level within a task family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelSpec {
    pub family: TaskFamily,
    pub level: usize,
    pub description: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthesisError {
    #[error("trajectory has no state/action channels")]
    MissingStates,
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("state shape mismatch")]
    ShapeMismatch,
    #[error("empty input")]
    EmptyInput,
    #[error("expert lacks subgoal boundary annotations")]
    MissingSubgoalAnnotations,
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// Linear interpolation from a deviated state back to an expert target.
///
/// State `z` (1-based, `z = 1..=n_interp`) is
/// `(1 - z/n_interp) * s_dev + (z/n_interp) * s_target` componentwise on
/// continuous fields; boolean fields switch once `z/n_interp > 0.5`. The
/// final state equals the target.
pub fn recover_interpolate<S: Real>(
    s_dev: &EnvState<S>,
    s_target: &EnvState<S>,
    n_interp: usize,
) -> Result<Vec<EnvState<S>>, SynthesisError> {
    if n_interp == 0 {
        return Err(SynthesisError::InvalidSpec("n_interp must be >= 1".into()));
    }
    let same_shape = s_dev.gripper_pos.len() == s_target.gripper_pos.len()
        && s_dev.goal_pos.len() == s_target.goal_pos.len()
        && s_dev.object_pos.len() == s_target.object_pos.len()
        && s_dev
            .object_pos
            .keys()
            .all(|k| s_target.object_pos.contains_key(k))
        && s_dev.contact_points.len() == s_target.contact_points.len();
    if !same_shape {
        return Err(SynthesisError::ShapeMismatch);
    }
    let lerp = |a: &[S], b: &[S], alpha: S| -> Vec<S> {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (S::one() - alpha) * x + alpha * y)
            .collect()
    };
    let mut out = Vec::with_capacity(n_interp);
    for z in 1..=n_interp {
        let alpha = S::from_f64_c(z as f64 / n_interp as f64);
        let bool_from_target = alpha.to_f64_c() > 0.5;
        let state = EnvState {
            gripper_pos: lerp(&s_dev.gripper_pos, &s_target.gripper_pos, alpha),
            gripper_open: if bool_from_target {
                s_target.gripper_open
            } else {
                s_dev.gripper_open
            },
            object_pos: s_dev
                .object_pos
                .iter()
                .map(|(k, v)| (k.clone(), lerp(v, &s_target.object_pos[k], alpha)))
                .collect(),
            goal_pos: lerp(&s_dev.goal_pos, &s_target.goal_pos, alpha),
            contact_points: s_dev
                .contact_points
                .iter()
                .zip(&s_target.contact_points)
                .map(|((ra, oa), (rb, ob))| (lerp(ra, rb, alpha), lerp(oa, ob, alpha)))
                .collect(),
        };
        out.push(state);
    }
    Ok(out)
}

fn uniform_action<S: Real, R: Rng>(bounds: &[(S, S)], rng: &mut R) -> Vec<S> {
    bounds
        .iter()
        .map(|&(lo, hi)| {
            let u: f64 = rng.gen();
            lo + (hi - lo) * S::from_f64_c(u)
        })
        .collect()
}

/// Inject a random-action deviation (and optional recovery) into an expert
/// trajectory.
///
/// The result follows the expert states through timestep `q`, then `w`
/// states produced by stepping uniformly sampled actions, then, when
/// `spec.recover`, the interpolated recovery toward the expert state at
/// `q + h`. Deviated frames carry `source_index = q`; recovery frames carry
/// the expert index they interpolate toward.
pub fn inject_deviation<S: Real, R: Rng>(
    expert: &Trajectory<S>,
    spec: &DeviationSpec,
    dynamics: &dyn Dynamics<S>,
    rng: &mut R,
) -> Result<Trajectory<S>, SynthesisError> {
    let states = expert.states.as_ref().ok_or(SynthesisError::MissingStates)?;
    if expert.actions.is_none() {
        return Err(SynthesisError::MissingStates);
    }
    let t_len = expert.len();
    if spec.q < 1 || spec.q > t_len {
        return Err(SynthesisError::IndexOutOfRange(format!("q={}", spec.q)));
    }
    if spec.w == 0 {
        if spec.q != t_len {
            return Err(SynthesisError::InvalidSpec("w=0 requires q=T".into()));
        }
        return Ok(expert.clone());
    }
    if spec.recover && spec.q + spec.h > t_len {
        return Err(SynthesisError::IndexOutOfRange(format!(
            "q+h={}",
            spec.q + spec.h
        )));
    }
    if spec.recover && spec.n_interp == 0 {
        return Err(SynthesisError::InvalidSpec("n_interp must be >= 1".into()));
    }

    let bounds = dynamics.action_bounds();
    let mut out_states: Vec<EnvState<S>> = states[..spec.q].to_vec();
    let mut sources: Vec<usize> = (0..spec.q).collect();

    let mut cur = states[spec.q - 1].clone();
    for _ in 0..spec.w {
        let action = uniform_action(&bounds, rng);
        cur = dynamics.step(&cur, &action);
        out_states.push(cur.clone());
        sources.push(spec.q - 1);
    }

    if spec.recover {
        let target = &states[spec.q + spec.h - 1];
        let recovery = recover_interpolate(&cur, target, spec.n_interp)?;
        for (z, s) in recovery.into_iter().enumerate() {
            // Expert index interpolated toward q + h, converted to 0-based.
            let frac = spec.h as f64 * (z + 1) as f64 / spec.n_interp as f64;
            sources.push(spec.q - 1 + frac.round() as usize);
            out_states.push(s);
        }
    }

    let frames = out_states
        .iter()
        .zip(&sources)
        .map(|(s, &src)| Frame::new(s.features(), Some(src)))
        .collect();
    Ok(Trajectory {
        goal: expert.goal.clone(),
        kind: TrajectoryKind::Deviated,
        frames,
        states: Some(out_states),
        actions: None,
    })
}

/// Replace forward windows with reversed copies of the preceding window.
///
/// Reversal points apply in ascending order, each operating on the current
/// sequence, so nested reversals compose. With 1-based `q`, the window
/// `q..q+w-1` becomes `reverse(q-w+1..q)`; near either boundary both
/// windows shrink symmetrically to length `min(w, q, T-q+1)`. Every output
/// frame keeps the source index of the frame copied into its slot.
pub fn reverse_perturb<S: Real>(
    frames: &[Frame<S>],
    spec: &ReversalSpec,
) -> Result<Vec<Frame<S>>, SynthesisError> {
    if frames.is_empty() {
        return Err(SynthesisError::EmptyInput);
    }
    let t_len = frames.len();
    let mut out: Vec<Frame<S>> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| Frame {
            features: f.features.clone(),
            source_index: f.source_index.or(Some(i)),
        })
        .collect();
    let mut points = spec.points.clone();
    points.sort_unstable();
    for &q in &points {
        if q < 1 || q > t_len {
            return Err(SynthesisError::IndexOutOfRange(format!("q={q}")));
        }
        let len = spec.w.min(q).min(t_len - q + 1);
        let src: Vec<Frame<S>> = out[q - len..q].iter().rev().cloned().collect();
        out.splice(q - 1..q - 1 + len, src);
    }
    Ok(out)
}

/// Sample a non-expert level for a family; levels within each family are
/// equally likely, matching the taxonomy table percentages.
pub fn sample_level<R: Rng>(family: TaskFamily, rng: &mut R) -> LevelSpec {
    let count = family.level_count();
    let level = rng.gen_range(1..=count);
    LevelSpec {
        family,
        level,
        description: level_description(family, level).to_string(),
    }
}

fn level_description(family: TaskFamily, level: usize) -> &'static str {
    use TaskFamily::*;
    match (family, level) {
        (PickOnly | PickAndPlace, 1) => "Fail to approach the object",
        (PickOnly | PickAndPlace, 2) => "Approach the object",
        (PickOnly | PickAndPlace, 3) => "Contact the object",
        (PickOnly | PickAndPlace, 4) => "Pick up the object",
        (PickAndPlace, 5) => "Keep grasp of the object",
        (PickAndPlace, 6) => "Approach placing the object in the target location",
        (PickAndPlace, 7) => "Place the object in the target location",
        (OpenCloseDrawer | OpenCloseDoor, 1) => "Fail to approach the door/drawer",
        (OpenCloseDrawer | OpenCloseDoor, 2) => "Approach the door/drawer",
        (OpenCloseDrawer | OpenCloseDoor, 3) => "Contact the door/drawer",
        (OpenCloseDrawer | OpenCloseDoor, 4) => "Start opening/closing the door/drawer",
        (OpenCloseDrawer | OpenCloseDoor, 5) => "Finish opening/closing the door/drawer",
        (Button | LeverKnob, 1) => "Fail to approach the on/off control",
        (Button | LeverKnob, 2) => "Approach the on/off control",
        (Button | LeverKnob, 3) => "Successfully adjust the on/off control",
        _ => "unknown level",
    }
}

/// Map a sampled level to a deviation start inside the matching subgoal
/// segment of an annotated expert trajectory.
///
/// `boundaries` holds the 1-based final timestep of each level segment (one
/// per level). Levels below the top deviate without recovery from within
/// their segment; the top level reproduces the full expert (`q == T`,
/// `w == 0`).
pub fn level_to_deviation<S: Real, R: Rng>(
    level: &LevelSpec,
    expert: &Trajectory<S>,
    boundaries: &[usize],
    rng: &mut R,
) -> Result<DeviationSpec, SynthesisError> {
    let count = level.family.level_count();
    if boundaries.len() != count {
        return Err(SynthesisError::MissingSubgoalAnnotations);
    }
    let t_len = expert.len();
    if level.level < 1 || level.level > count {
        return Err(SynthesisError::InvalidSpec(format!(
            "level {} outside 1..={}",
            level.level, count
        )));
    }
    if level.level == count {
        return Ok(DeviationSpec {
            q: t_len,
            w: 0,
            recover: false,
            h: 0,
            n_interp: 0,
        });
    }
    let seg_start = if level.level == 1 {
        1
    } else {
        boundaries[level.level - 2] + 1
    };
    let seg_end = boundaries[level.level - 1].min(t_len);
    if seg_start > seg_end {
        return Err(SynthesisError::MissingSubgoalAnnotations);
    }
    let q = rng.gen_range(seg_start..=seg_end);
    let w = (t_len - q).max(1);
    Ok(DeviationSpec {
        q,
        w,
        recover: false,
        h: 0,
        n_interp: 0,
    })
}
