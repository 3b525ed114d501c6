//! Offline evaluation metrics: rank correlation of predicted progress with
//! chronological order, predicted-vs-true correlation, and perceived/true
//! quadrant classification.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::types::EpisodeLog;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("sequence too short or degenerate")]
    DegenerateSequence,
    #[error("length mismatch")]
    LengthMismatch,
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn average_ranks<S: Real>(values: &[S]) -> Vec<S> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![S::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Tied block spans sorted positions i..=j; ranks are 1-based.
        let mean_rank = S::from_f64_c((i + j + 2) as f64 / 2.0);
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson_raw<S: Real>(a: &[S], b: &[S]) -> Option<S> {
    let n = S::from_f64_c(a.len() as f64);
    let mean = |xs: &[S]| xs.iter().cloned().sum::<S>() / n;
    let (ma, mb) = (mean(a), mean(b));
    let mut num = S::zero();
    let mut va = S::zero();
    let mut vb = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == S::zero() || vb == S::zero() {
        None
    } else {
        Some(num / (va * vb).sqrt())
    }
}

/// Pearson correlation; errors when either sequence is constant.
pub fn pearson<S: Real>(a: &[S], b: &[S]) -> Result<S, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch);
    }
    if a.len() < 2 {
        return Err(MetricError::DegenerateSequence);
    }
    pearson_raw(a, b).ok_or(MetricError::DegenerateSequence)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman<S: Real>(a: &[S], b: &[S]) -> Result<S, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch);
    }
    if a.len() < 2 {
        return Err(MetricError::DegenerateSequence);
    }
    pearson_raw(&average_ranks(a), &average_ranks(b)).ok_or(MetricError::DegenerateSequence)
}

/// Kendall tau-b with tie correction.
pub fn kendall<S: Real>(a: &[S], b: &[S]) -> Result<S, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch);
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricError::DegenerateSequence);
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_a = 0i64;
    let mut ties_b = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].partial_cmp(&a[j]).unwrap();
            let db = b[i].partial_cmp(&b[j]).unwrap();
            use std::cmp::Ordering::Equal;
            match (da == Equal, db == Equal) {
                (true, true) => {}
                (true, false) => ties_a += 1,
                (false, true) => ties_b += 1,
                (false, false) => {
                    if da == db {
                        concordant += 1;
                    } else {
                        discordant += 1;
                    }
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as f64;
    let denom = ((n0 - ties_a as f64) * (n0 - ties_b as f64)).sqrt();
    if denom == 0.0 {
        return Err(MetricError::DegenerateSequence);
    }
    Ok(S::from_f64_c((concordant - discordant) as f64 / denom))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    Spearman,
    Kendall,
}

/// Rank correlation of a prediction sequence against chronological order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocResult<S> {
    pub value: S,
    /// True when all predictions were equal; `value` is then reported as 0.
    pub degenerate: bool,
}

/// Value-order correlation of per-frame predictions.
pub fn voc<S: Real>(predicted: &[S], method: RankMethod) -> Result<VocResult<S>, MetricError> {
    if predicted.len() < 2 {
        return Err(MetricError::DegenerateSequence);
    }
    let order: Vec<S> = (0..predicted.len())
        .map(|i| S::from_f64_c(i as f64))
        .collect();
    let result = match method {
        RankMethod::Spearman => spearman(predicted, &order),
        RankMethod::Kendall => kendall(predicted, &order),
    };
    match result {
        Ok(value) => Ok(VocResult {
            value,
            degenerate: false,
        }),
        Err(MetricError::DegenerateSequence) => Ok(VocResult {
            value: S::zero(),
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// Pearson correlation between predicted and ground-truth progress.
pub fn predicted_true_correlation<S: Real>(
    predicted: &[S],
    truth: &[S],
) -> Result<S, MetricError> {
    pearson(predicted, truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quadrant {
    Success,
    RewardHacking,
    SignalLimited,
    UnderConfident,
}

/// Perceived-vs-true classification of a batch of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantReport<S> {
    /// Average over episodes of the maximum predicted progress, in [0,100].
    pub perceived: S,
    /// Average over episodes of the maximum true reward (success rate for
    /// binary rewards), in [0,1].
    pub true_success: S,
    pub quadrant: Quadrant,
    pub thresholds: (S, S),
}

pub fn classify_quadrant<S: Real>(
    episodes: &[EpisodeLog<S>],
    thresholds: (S, S),
) -> QuadrantReport<S> {
    assert!(!episodes.is_empty(), "episode batch must be non-empty");
    let n = S::from_f64_c(episodes.len() as f64);
    let perceived = episodes
        .iter()
        .map(|e| {
            let max_p = e.predicted_progress.iter().copied().max().unwrap_or(0);
            S::from_f64_c(max_p.clamp(0, 100) as f64)
        })
        .sum::<S>()
        / n;
    let true_success = episodes
        .iter()
        .map(|e| {
            if e.true_rewards.is_empty() {
                if e.success {
                    S::one()
                } else {
                    S::zero()
                }
            } else {
                e.true_rewards.iter().cloned().fold(S::zero(), S::max)
            }
        })
        .sum::<S>()
        / n;
    let (p_thr, t_thr) = thresholds;
    let quadrant = match (perceived > p_thr, true_success > t_thr) {
        (true, true) => Quadrant::Success,
        (true, false) => Quadrant::RewardHacking,
        (false, false) => Quadrant::SignalLimited,
        (false, true) => Quadrant::UnderConfident,
    };
    QuadrantReport {
        perceived,
        true_success,
        quadrant,
        thresholds,
    }
}

/// Default quadrant thresholds: perceived 50, true 0.5.
pub fn default_thresholds<S: Real>() -> (S, S) {
    (S::from_f64_c(50.0), S::from_f64_c(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Frame, Goal, TaskFamily, Trajectory, TrajectoryKind};

    #[test]
    fn voc_endpoints() {
        let up: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(voc(&up, RankMethod::Spearman).unwrap().value, 1.0);
        let down: Vec<f64> = (0..10).rev().map(|i| i as f64).collect();
        assert_eq!(voc(&down, RankMethod::Spearman).unwrap().value, -1.0);
        assert_eq!(voc(&up, RankMethod::Kendall).unwrap().value, 1.0);
    }

    #[test]
    fn spearman_hand_case() {
        assert_eq!(
            voc(&[1.0, 3.0, 2.0, 4.0], RankMethod::Spearman).unwrap().value,
            0.8
        );
    }

    #[test]
    fn degenerate_predictions_flagged() {
        let r = voc(&[5.0; 6], RankMethod::Spearman).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn voc_invariant_to_monotone_transform() {
        let xs = [0.1f64, 0.7, 0.3, 0.9, 0.5];
        let ys: Vec<f64> = xs.iter().map(|x| (x * 3.0).exp() + 2.0).collect();
        assert_eq!(
            voc(&xs, RankMethod::Spearman).unwrap().value,
            voc(&ys, RankMethod::Spearman).unwrap().value
        );
    }

    #[test]
    fn pearson_basics() {
        let t = [0.0f64, 1.0, 2.0, 3.0];
        assert!((predicted_true_correlation(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = t.iter().map(|x| -x).collect();
        assert!((predicted_true_correlation(&neg, &t).unwrap() + 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = t.iter().map(|x| x + 7.0).collect();
        assert!((predicted_true_correlation(&shifted, &t).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            predicted_true_correlation(&t, &[1.0; 4]),
            Err(MetricError::DegenerateSequence)
        );
    }

    fn episode(max_p: i32, max_true: f64) -> EpisodeLog<f64> {
        EpisodeLog {
            trajectory: Trajectory {
                goal: Goal::new("g", TaskFamily::PickOnly),
                kind: TrajectoryKind::Expert,
                frames: vec![Frame::new(vec![0.0], Some(0))],
                states: None,
                actions: None,
            },
            predicted_progress: vec![0, max_p],
            served_rewards: vec![0.0],
            true_rewards: vec![0.0, max_true],
            success: max_true > 0.5,
        }
    }

    #[test]
    fn quadrant_classification() {
        let t = default_thresholds();
        let r = classify_quadrant(&[episode(90, 0.1)], t);
        assert_eq!(r.quadrant, Quadrant::RewardHacking);
        let r = classify_quadrant(&[episode(10, 0.05)], t);
        assert_eq!(r.quadrant, Quadrant::SignalLimited);
        let r = classify_quadrant(&[episode(90, 0.9)], t);
        assert_eq!(r.quadrant, Quadrant::Success);
        let r = classify_quadrant(&[episode(10, 0.9)], t);
        assert_eq!(r.quadrant, Quadrant::UnderConfident);
    }
}
