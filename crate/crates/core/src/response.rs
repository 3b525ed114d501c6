//! Structured `<think>/<answer>` response grammar, prompt rendering, and
//! temporal query-context construction.
//!
//! The canonical response grammar, as published in the docs:
//!
//! ```text
//! response  = think answer trailing ;
//! think     = "<think>" text "</think>" ;
//! answer    = "<answer>" ws sign? digit{1,3} "%"? ws "</answer>" ;
//! sign      = "+" | "-" ;
//! ```
//!
//! with the parsed integer constrained to [-100, 100]. Only the first
//! occurrence of each tag pair is parsed; trailing text is ignored.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;
use crate::types::{Frame, Goal};

pub const PROMPT_NATIVE: &str = include_str!("../assets/prompt_native.txt");
pub const PROMPT_EXTERNAL: &str = include_str!("../assets/prompt_external.txt");

/// Parsed model response: reasoning text and an integer progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub reasoning: String,
    pub progress: i32,
    pub raw: String,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseError {
    #[error("missing or empty <think> block")]
    MissingThink,
    #[error("missing <answer> block")]
    MissingAnswer,
    #[error("<answer> precedes <think>")]
    TagOrderViolation,
    #[error("answer body is not an integer")]
    MalformedProgress,
    #[error("progress outside [-100, 100]")]
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Reasoning must be present and non-empty.
    #[default]
    Strict,
    /// Empty or absent reasoning is accepted (No-CoT ablation).
    NoThink,
}

fn first_block<'a>(text: &'a str, open: &str, close: &str) -> Option<(usize, usize, &'a str)> {
    let start = text.find(open)?;
    let body_start = start + open.len();
    let rel_end = text[body_start..].find(close)?;
    Some((start, body_start + rel_end + close.len(), &text[body_start..body_start + rel_end]))
}

fn parse_answer_body(body: &str) -> Result<i32, ParseError> {
    let mut s = body.trim();
    if let Some(stripped) = s.strip_suffix('%') {
        s = stripped.trim_end();
    }
    let digits = s.strip_prefix(['+', '-']).unwrap_or(s);
    if digits.is_empty() || digits.len() > 3 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseError::MalformedProgress);
    }
    let value: i32 = s.parse().map_err(|_| ParseError::MalformedProgress)?;
    if value.abs() > 100 {
        return Err(ParseError::OutOfRange);
    }
    Ok(value)
}

/// Structural probe used for graded format scoring: whether the first
/// think pair is well-formed (non-empty body) and whether the first answer
/// pair carries a valid in-range integer.
pub fn well_formed_pairs(text: &str) -> (bool, bool) {
    let think_ok = first_block(text, "<think>", "</think>")
        .map(|(_, _, body)| !body.trim().is_empty())
        .unwrap_or(false);
    let answer_ok = first_block(text, "<answer>", "</answer>")
        .map(|(_, _, body)| parse_answer_body(body).is_ok())
        .unwrap_or(false);
    (think_ok, answer_ok)
}

/// Parse a structured response, extracting the first tag pair of each kind.
pub fn parse_response(text: &str, mode: ParseMode) -> Result<StructuredResponse, ParseError> {
    let think = first_block(text, "<think>", "</think>");
    let answer = first_block(text, "<answer>", "</answer>");
    let (reasoning, answer_body) = match (think, answer) {
        (Some((t_start, _, t_body)), Some((a_start, _, a_body))) => {
            if a_start < t_start {
                return Err(ParseError::TagOrderViolation);
            }
            (t_body.trim().to_string(), a_body)
        }
        (None, Some((_, _, a_body))) if mode == ParseMode::NoThink => (String::new(), a_body),
        (None, Some(_)) => return Err(ParseError::MissingThink),
        (_, None) => {
            return Err(if think.is_some() || mode == ParseMode::NoThink {
                ParseError::MissingAnswer
            } else {
                ParseError::MissingThink
            })
        }
    };
    if mode == ParseMode::Strict && reasoning.is_empty() {
        return Err(ParseError::MissingThink);
    }
    let progress = parse_answer_body(answer_body)?;
    Ok(StructuredResponse {
        reasoning,
        progress,
        raw: text.to_string(),
    })
}

/// Canonical renderer: `%` is mandatory on output.
pub fn render_response(reasoning: &str, progress: i32) -> String {
    format!("<think>{reasoning}</think><answer>{progress}%</answer>")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStyle {
    /// Composite external+wrist framing.
    Native,
    /// Two-image external-view framing used for baseline rewarders.
    ExternalBaseline,
}

///// Inputs of one progress query: goal, anchor frame, sliding window, and the
/// optional previous prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryContext<S> {
    pub goal: Goal,
    pub first_frame: Frame<S>,
    pub window: Vec<Frame<S>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_progress: Option<i32>,
    pub k: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("timestep {t} outside 0..{len}")]
    IndexOutOfRange { t: usize, len: usize },
}

/// Build the query context for timestep `t`: the last `K` frames (or all
/// available when `t < K`), the anchor first frame, and `prev_progress`
/// dropped with probability `delta` when a dropout source is supplied.
pub fn build_context<S: Real, R: Rng>(
    goal: &Goal,
    frames: &[Frame<S>],
    t: usize,
    k: usize,
    prev_progress: Option<i32>,
    dropout: Option<(f64, &mut R)>,
) -> Result<QueryContext<S>, ContextError> {
    if t >= frames.len() {
        return Err(ContextError::IndexOutOfRange {
            t,
            len: frames.len(),
        });
    }
    let start = (t + 1).saturating_sub(k);
    let window = frames[start..=t].to_vec();
    let window = if k == 0 { Vec::new() } else { window };
    let prev_progress = match dropout {
        Some((delta, rng)) => {
            if rng.gen::<f64>() < delta {
                None
            } else {
                prev_progress
            }
        }
        None => prev_progress,
    };
    Ok(QueryContext {
        goal: goal.clone(),
        first_frame: frames[0].clone(),
        window,
        prev_progress,
        k,
    })
}

/// Remove the sentence containing `{prev_progress}` (used when no previous
/// prediction exists).
fn drop_prev_sentence(template: &str) -> String {
    match template.find("{prev_progress}") {
        None => template.to_string(),
        Some(pos) => {
            let start = template[..pos].rfind(". ").map(|i| i + 2).unwrap_or(0);
            let end = template[pos..]
                .find(". ")
                .map(|i| pos + i + 2)
                .unwrap_or(template.len());
            format!("{}{}", &template[..start], &template[end..])
        }
    }
}

/// Substitute goal text and previous progress into the style's template.
/// Deterministic; omits the previous-progress sentence when absent.
pub fn render_prompt<S: Real>(ctx: &QueryContext<S>, style: PromptStyle) -> String {
    let template = match style {
        PromptStyle::Native => PROMPT_NATIVE,
        PromptStyle::ExternalBaseline => PROMPT_EXTERNAL,
    };
    let with_prev = match ctx.prev_progress {
        Some(p) => template.replace("{prev_progress}", &p.to_string()),
        None => drop_prev_sentence(template),
    };
    with_prev.replace("{task_description}", &ctx.goal.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::TaskFamily;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_well_formed_response() {
        let r = parse_response(
            "<think>gripper approaches can</think><answer>35%</answer>",
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(r.reasoning, "gripper approaches can");
        assert_eq!(r.progress, 35);
    }

    #[test]
    fn empty_think_strict_vs_no_think() {
        let text = "<think></think><answer>0</answer>";
        assert_eq!(
            parse_response(text, ParseMode::Strict),
            Err(ParseError::MissingThink)
        );
        assert_eq!(parse_response(text, ParseMode::NoThink).unwrap().progress, 0);
    }

    #[test]
    fn missing_think_detected() {
        assert_eq!(
            parse_response("<answer>40%</answer>", ParseMode::Strict),
            Err(ParseError::MissingThink)
        );
    }

    #[test]
    fn out_of_range_detected() {
        assert_eq!(
            parse_response("<think>x</think><answer>150%</answer>", ParseMode::Strict),
            Err(ParseError::OutOfRange)
        );
        assert_eq!(
            parse_response("<think>x</think><answer>-100%</answer>", ParseMode::Strict)
                .unwrap()
                .progress,
            -100
        );
    }

    #[test]
    fn tag_order_violation() {
        assert_eq!(
            parse_response("<answer>10%</answer><think>x</think>", ParseMode::Strict),
            Err(ParseError::TagOrderViolation)
        );
    }

    #[test]
    fn malformed_bodies_rejected() {
        for body in ["35.5%", "abc", "", "--3", "1234"] {
            let text = format!("<think>x</think><answer>{body}</answer>");
            assert_eq!(
                parse_response(&text, ParseMode::Strict),
                Err(ParseError::MalformedProgress),
                "body {body:?}"
            );
        }
    }

    #[test]
    fn only_first_tag_pair_parsed() {
        let r = parse_response(
            "<think>a</think><answer>10</answer> trailing <answer>99</answer>",
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(r.progress, 10);
    }

    fn ctx(prev: Option<i32>) -> QueryContext<f64> {
        QueryContext {
            goal: Goal::new("Pick up the can", TaskFamily::PickOnly),
            first_frame: Frame::new(vec![0.0], Some(0)),
            window: vec![],
            prev_progress: prev,
            k: 2,
        }
    }

    #[test]
    fn prompt_substitution() {
        let text = render_prompt(&ctx(Some(20)), PromptStyle::Native);
        assert!(text.contains("The task description is: Pick up the can"));
        assert!(text.contains("previous timestep is 20%"));
        assert!(text.contains("very first timestep is 0%"));
    }

    #[test]
    fn prompt_omits_prev_sentence_when_absent() {
        let text = render_prompt(&ctx(None), PromptStyle::Native);
        assert!(!text.contains("previous timestep is"));
        assert!(!text.contains("{prev_progress}"));
        assert!(text.contains("The task description is: Pick up the can"));
    }

    #[test]
    fn prompt_rendering_is_deterministic() {
        let a = render_prompt(&ctx(Some(5)), PromptStyle::ExternalBaseline);
        let b = render_prompt(&ctx(Some(5)), PromptStyle::ExternalBaseline);
        assert_eq!(a, b);
        assert!(a.contains("previous timestep was 5%"));
    }

    fn frames(n: usize) -> Vec<Frame<f64>> {
        (0..n).map(|i| Frame::new(vec![i as f64], Some(i))).collect()
    }

    #[test]
    fn window_slicing() {
        let goal = Goal::new("g", TaskFamily::PickOnly);
        let fs = frames(12);
        let c = build_context::<f64, ChaCha8Rng>(&goal, &fs, 1, 4, None, None).unwrap();
        assert_eq!(c.window.len(), 2);
        let c = build_context::<f64, ChaCha8Rng>(&goal, &fs, 9, 4, None, None).unwrap();
        let xs: Vec<f64> = c.window.iter().map(|f| f.features[0]).collect();
        assert_eq!(xs, vec![6.0, 7.0, 8.0, 9.0]);
        let c = build_context::<f64, ChaCha8Rng>(&goal, &fs, 5, 0, None, None).unwrap();
        assert!(c.window.is_empty());
        assert_eq!(c.first_frame.features, vec![0.0]);
    }

    #[test]
    fn dropout_frequency() {
        let goal = Goal::new("g", TaskFamily::PickOnly);
        let fs = frames(3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut dropped = 0;
        for _ in 0..n {
            let c = build_context(&goal, &fs, 2, 2, Some(40), Some((0.3, &mut rng))).unwrap();
            if c.prev_progress.is_none() {
                dropped += 1;
            }
        }
        let freq = dropped as f64 / n as f64;
        assert!((freq - 0.30).abs() < 0.01, "freq {freq}");
    }
}
