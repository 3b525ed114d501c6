//! Shared domain vocabulary: goals, environment states, trajectories,
//! progress records, and episode logs.
//!
//! All timestep indices are 0-based internally. Formulas that are stated
//! 1-based elsewhere are converted at the formula site.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

/// Closed set of manipulation task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskFamily {
    #[serde(rename = "pick-only")]
    PickOnly,
    #[serde(rename = "pick-and-place")]
    PickAndPlace,
    #[serde(rename = "open-close-drawer")]
    OpenCloseDrawer,
    #[serde(rename = "open-close-door")]
    OpenCloseDoor,
    #[serde(rename = "button")]
    Button,
    #[serde(rename = "lever-knob")]
    LeverKnob,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 6] = [
        TaskFamily::PickOnly,
        TaskFamily::PickAndPlace,
        TaskFamily::OpenCloseDrawer,
        TaskFamily::OpenCloseDoor,
        TaskFamily::Button,
        TaskFamily::LeverKnob,
    ];

    /// Number of non-expert levels defined for this family.
    pub fn level_count(self) -> usize {
        match self {
            TaskFamily::PickOnly => 4,
            TaskFamily::PickAndPlace => 7,
            TaskFamily::OpenCloseDrawer | TaskFamily::OpenCloseDoor => 5,
            TaskFamily::Button | TaskFamily::LeverKnob => 3,
        }
    }

    /// Index of this family in a fixed one-hot encoding.
    pub fn one_hot_index(self) -> usize {
        Self::ALL.iter().position(|f| *f == self).unwrap()
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pick-only" => Some(TaskFamily::PickOnly),
            "pick-and-place" => Some(TaskFamily::PickAndPlace),
            "open-close-drawer" => Some(TaskFamily::OpenCloseDrawer),
            "open-close-door" => Some(TaskFamily::OpenCloseDoor),
            "button" => Some(TaskFamily::Button),
            "lever-knob" => Some(TaskFamily::LeverKnob),
            _ => None,
        }
    }
}

/// Natural-language task goal plus its family tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub text: String,
    pub family: TaskFamily,
}

impl Goal {
    pub fn new(text: impl Into<String>, family: TaskFamily) -> Self {
        Goal {
            text: text.into(),
            family,
        }
    }
}

/// Full simulator state at one timestep.
///
/// Positions are meters; `contact_points` pairs a robot point with the
/// object point it is matched against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState<S> {
    pub gripper_pos: Vec<S>,
    pub gripper_open: bool,
    pub object_pos: BTreeMap<String, Vec<S>>,
    pub goal_pos: Vec<S>,
    #[serde(default = "Vec::new")]
    pub contact_points: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Real> EnvState<S> {
    /// Flatten the state into an observation feature vector: gripper
    /// position, gripper flag, object positions in key order, goal position.
    pub fn features(&self) -> Vec<S> {
        let mut f = self.gripper_pos.clone();
        f.push(if self.gripper_open {
            S::one()
        } else {
            S::zero()
        });
        for v in self.object_pos.values() {
            f.extend_from_slice(v);
        }
        f.extend_from_slice(&self.goal_pos);
        f
    }
}

/// One observation: a fixed-length feature vector plus the expert timestep
/// it originated from, when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame<S> {
    pub features: Vec<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_index: Option<usize>,
}

impl<S> Frame<S> {
    pub fn new(features: Vec<S>, source_index: Option<usize>) -> Self {
        Frame {
            features,
            source_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Expert,
    Deviated,
    Reversed,
}

/// Timestamped sequence of frames, optionally with simulator states and
/// actions, carrying provenance back to an originating expert trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "S: serde::Deserialize<'de>"))]
pub struct Trajectory<S> {
    pub goal: Goal,
    pub kind: TrajectoryKind,
    pub frames: Vec<Frame<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<EnvState<S>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Vec<S>>>,
}

impl<S> Trajectory<S> {
    /// Trajectory length T.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Per-timestep progress label.
///
/// `v` is normalized progress in [0,1]; `p` the integer answer-scale label.
/// Synthesized labels satisfy `p == round(100 * v)`; negative `p` is
/// reserved for model outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressRecord<S> {
    pub v: S,
    pub p: i32,
    pub reasoning: String,
}

impl<S: Real> ProgressRecord<S> {
    pub fn from_v(v: S, reasoning: String) -> Self {
        let p = (S::from_f64_c(100.0) * v).round().to_f64_c() as i32;
        ProgressRecord { v, p, reasoning }
    }
}

/// One evaluation or training episode with both the perceived (served) and
/// hidden (true) signals, aligned per timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog<S> {
    pub trajectory: Trajectory<S>,
    pub predicted_progress: Vec<i32>,
    pub served_rewards: Vec<S>,
    pub true_rewards: Vec<S>,
    pub success: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoreError {
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

/// Check every structural invariant of a trajectory; returns it unchanged
/// when all hold, otherwise names the first failing invariant.
pub fn validate_trajectory<S: Real>(t: Trajectory<S>) -> Result<Trajectory<S>, CoreError> {
    let fail = |m: &str| Err(CoreError::InvariantViolation(m.to_string()));
    if t.goal.text.is_empty() {
        return fail("goal text empty");
    }
    let len = t.len();
    if len == 0 {
        return fail("frames length");
    }
    let feat_len = t.frames[0].features.len();
    for f in &t.frames {
        if f.features.len() != feat_len {
            return fail("frame feature length");
        }
        if f.features.iter().any(|x| !x.is_finite()) {
            return fail("non-finite frame features");
        }
    }
    if let Some(states) = &t.states {
        if states.len() != len {
            return fail("states length");
        }
        for s in states {
            let d = s.gripper_pos.len();
            if !(2..=3).contains(&d) {
                return fail("state dimension");
            }
            let vecs = std::iter::once(&s.gripper_pos)
                .chain(std::iter::once(&s.goal_pos))
                .chain(s.object_pos.values());
            for v in vecs {
                if v.len() != d {
                    return fail("state vector dimension");
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return fail("non-finite state vector");
                }
            }
        }
        let contacts = states[0].contact_points.len();
        if states.iter().any(|s| s.contact_points.len() != contacts) {
            return fail("contact point count");
        }
    }
    if let Some(actions) = &t.actions {
        if actions.len() != len {
            return fail("actions length");
        }
    }
    if t.kind == TrajectoryKind::Expert {
        for (i, f) in t.frames.iter().enumerate() {
            if let Some(src) = f.source_index {
                if src != i {
                    return fail("expert provenance");
                }
            }
        }
    }
    Ok(t)
}
