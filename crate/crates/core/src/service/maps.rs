//! Progress-to-reward transforms.

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ShapingMode {
    #[default]
    Absolute,
    Potential,
}

/// Scale, clip bound, and shaping mode of the served reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardMap<S> {
    pub psi: S,
    pub c: S,
    pub shaping: ShapingMode,
    pub gamma: S,
}

impl<S: Real> Default for RewardMap<S> {
    fn default() -> Self {
        // psi = 0.01, c = 100 normalizes the served reward to [-1, 1].
        RewardMap {
            psi: S::from_f64_c(0.01),
            c: S::from_f64_c(100.0),
            shaping: ShapingMode::Absolute,
            gamma: S::one(),
        }
    }
}

impl<S: Real> RewardMap<S> {
    /// Potential function: the scaled, clipped progress.
    pub fn potential(&self, p: i32) -> S {
        self.psi * S::from_f64_c(p as f64).max(-self.c).min(self.c)
    }
}

/// Absolute dense reward `psi * clip(p, -c, c)`.
pub fn progress_to_reward<S: Real>(p: i32, map: &RewardMap<S>) -> S {
    map.potential(p)
}

/// Potential-based shaping over a whole progress sequence:
/// `r_t = gamma * phi(p_{t+1}) - phi(p_t)`, with the terminal potential held
/// constant for the last step.
pub fn potential_shaped<S: Real>(progress_seq: &[i32], map: &RewardMap<S>) -> Vec<S> {
    if progress_seq.is_empty() {
        return Vec::new();
    }
    let phi: Vec<S> = progress_seq.iter().map(|&p| map.potential(p)).collect();
    let mut out = Vec::with_capacity(progress_seq.len() - 1);
    for t in 0..progress_seq.len() - 1 {
        out.push(map.gamma * phi[t + 1] - phi[t]);
    }
    out
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InterpolationError {
    #[error("no reward knots supplied")]
    EmptyKnots,
    #[error("knot steps must be strictly increasing")]
    UnorderedKnots,
}

/// Densify sparse inference-step rewards to every control step by linear
/// interpolation, holding the edge values outside the knot range.
pub fn interpolate_rewards<S: Real>(
    sparse: &[(usize, S)],
    control_steps: usize,
) -> Result<Vec<S>, InterpolationError> {
    if sparse.is_empty() {
        return Err(InterpolationError::EmptyKnots);
    }
    if sparse.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(InterpolationError::UnorderedKnots);
    }
    let mut out = Vec::with_capacity(control_steps);
    for j in 0..control_steps {
        if j <= sparse[0].0 {
            out.push(sparse[0].1);
            continue;
        }
        if j >= sparse[sparse.len() - 1].0 {
            out.push(sparse[sparse.len() - 1].1);
            continue;
        }
        let seg = sparse.windows(2).find(|w| w[0].0 <= j && j <= w[1].0).unwrap();
        let ((t0, r0), (t1, r1)) = (seg[0], seg[1]);
        let alpha = S::from_f64_c((j - t0) as f64 / (t1 - t0) as f64);
        out.push((S::one() - alpha) * r0 + alpha * r1);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(psi: f64, c: f64) -> RewardMap<f64> {
        RewardMap {
            psi,
            c,
            shaping: ShapingMode::Absolute,
            gamma: 1.0,
        }
    }

    #[test]
    fn absolute_reward_hand_cases() {
        assert_eq!(progress_to_reward(50, &map(0.01, 100.0)), 0.5);
        assert_eq!(progress_to_reward(100, &map(0.01, 100.0)), 1.0);
        assert_eq!(progress_to_reward(-95, &map(0.01, 80.0)), -0.8);
    }

    #[test]
    fn potential_shaping_cases() {
        let m = map(0.01, 100.0);
        assert_eq!(potential_shaped(&[40, 40, 40], &m), vec![0.0, 0.0]);
        assert_eq!(potential_shaped(&[0, 50, 100], &m), vec![0.5, 0.5]);
    }

    #[test]
    fn shaping_telescopes() {
        let m = map(0.01, 100.0);
        let seq = [0, 30, 10, 80, 95];
        let sum: f64 = potential_shaped(&seq, &m).iter().sum();
        let expected = m.potential(95) - m.potential(0);
        assert!((sum - expected).abs() < 1e-12);
    }

    #[test]
    fn interpolation_single_segment() {
        let dense = interpolate_rewards(&[(0, 0.0), (4, 1.0)], 5).unwrap();
        assert_eq!(dense, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn interpolation_piecewise() {
        let dense = interpolate_rewards(&[(0, 0.0), (2, 1.0), (4, 0.0)], 5).unwrap();
        assert_eq!(dense, vec![0.0, 0.5, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn interpolation_degenerate_and_errors() {
        assert_eq!(interpolate_rewards(&[(2, 0.7)], 4).unwrap(), vec![0.7; 4]);
        assert_eq!(
            interpolate_rewards::<f64>(&[], 4),
            Err(InterpolationError::EmptyKnots)
        );
    }
}
