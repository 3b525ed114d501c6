//! Rule-based verifiable reward: format score plus exponential accuracy
//! score, totaling [0, 2].

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::response::{parse_response, well_formed_pairs, ParseMode};

/// Scales and temperature of the verifiable reward.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardSpec<S> {
    /// Accuracy temperature, in progress units.
    pub tau: S,
    pub format_max: S,
    pub acc_max: S,
}

impl<S: Real> Default for RewardSpec<S> {
    fn default() -> Self {
        RewardSpec {
            // A one-temperature error scales accuracy by e^-1; 20 progress
            // units keeps usable gradient across the [0,100] scale.
            tau: S::from_f64_c(20.0),
            format_max: S::from_f64_c(0.5),
            acc_max: S::from_f64_c(1.5),
        }
    }
}

impl<S: Real> RewardSpec<S> {
    pub fn with_tau(tau: S) -> Self {
        RewardSpec {
            tau,
            ..Self::default()
        }
    }
}

/// Graded format score: full credit for a parseable response, half credit
/// when exactly one tag pair is well-formed, zero otherwise.
pub fn score_format<S: Real>(text: &str, spec: &RewardSpec<S>) -> S {
    if parse_response(text, ParseMode::Strict).is_ok() {
        return spec.format_max;
    }
    let (think_ok, answer_ok) = well_formed_pairs(text);
    if think_ok || answer_ok {
        spec.format_max / S::from_f64_c(2.0)
    } else {
        S::zero()
    }
}

/// Accuracy score `acc_max * exp(-|p_hat - p_true| / tau)`.
pub fn score_accuracy<S: Real>(p_hat: i32, p_true: i32, spec: &RewardSpec<S>) -> S {
    let delta = S::from_f64_c((p_hat - p_true).abs() as f64);
    spec.acc_max * (-delta / spec.tau).exp()
}

/// Total verifiable reward. The accuracy component is zero when the
/// response does not parse (no predicted progress exists).
pub fn score<S: Real>(text: &str, p_true: i32, spec: &RewardSpec<S>) -> S {
    let format = score_format(text, spec);
    let accuracy = match parse_response(text, ParseMode::Strict) {
        Ok(r) => score_accuracy(r.progress, p_true, spec),
        Err(_) => S::zero(),
    };
    format + accuracy
}
