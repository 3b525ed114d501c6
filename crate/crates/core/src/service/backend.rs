//! Reward-labeling backends: geometric oracle, scripted transforms, and a
//! remote model endpoint.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::{task_distance, template_cot, CotTemplateSet, GeometricConfig};
use crate::response::{parse_response, render_prompt, ParseMode, PromptStyle};
use crate::service::wire::RewardQuery;
use crate::types::EnvState;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend response unparseable: {0}")]
    Parse(String),
    #[error("malformed query: {0}")]
    MalformedQuery(String),
    #[error("backend failure: {0}")]
    Failed(String),
}

pub trait RewardBackend: Send + Sync {
    fn label(&self, query: &RewardQuery<f64>) -> Result<(String, i32), BackendError>;
}

/// Progress from privileged simulator state, normalized against the
/// episode-start distance: `v = clamp(1 - y_t / y_0, -1, 1)`. On a monotone
/// approach that ends at distance zero this matches the offline geometric
/// labels exactly.
pub struct OracleBackend {
    pub cfg: GeometricConfig<f64>,
    pub templates: CotTemplateSet,
}

impl OracleBackend {
    pub fn new(cfg: GeometricConfig<f64>) -> Self {
        OracleBackend {
            cfg,
            templates: CotTemplateSet::builtin(),
        }
    }

    fn distances(&self, query: &RewardQuery<f64>) -> Result<(f64, f64), BackendError> {
        let debug = query
            .debug
            .as_ref()
            .ok_or_else(|| BackendError::MalformedQuery("oracle requires debug states".into()))?;
        let y0 = task_distance(&debug.first_state, &self.cfg)
            .map_err(|e| BackendError::MalformedQuery(e.to_string()))?;
        let yt = task_distance(&debug.state, &self.cfg)
            .map_err(|e| BackendError::MalformedQuery(e.to_string()))?;
        Ok((y0, yt))
    }

    fn progress_from(&self, y0: f64, yt: f64) -> i32 {
        // Regression past the start maps to negative progress so that a
        // retreating policy is graded worse than a stationary one.
        let v = if y0 <= f64::EPSILON {
            1.0
        } else {
            (1.0 - yt / y0).clamp(-1.0, 1.0)
        };
        (100.0 * v).round() as i32
    }

    fn reasoning(&self, first: &EnvState<f64>, current: &EnvState<f64>) -> String {
        template_cot(first, current, &self.cfg, &self.templates)
            .unwrap_or_else(|e| format!("state comparison unavailable: {e}"))
    }
}

impl RewardBackend for OracleBackend {
    fn label(&self, query: &RewardQuery<f64>) -> Result<(String, i32), BackendError> {
        let (y0, yt) = self.distances(query)?;
        let debug = query.debug.as_ref().unwrap();
        Ok((
            self.reasoning(&debug.first_state, &debug.state),
            self.progress_from(y0, yt),
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub episode_id: String,
    pub step: usize,
    pub progress: i32,
    #[serde(default)]
    pub reasoning: String,
}

/// Scripted rewarder behavior, loadable from a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptKind {
    /// Replay a fixed table keyed by episode and step.
    Replay { entries: Vec<ScriptEntry> },
    /// Oracle label shifted by a constant, clipped to the progress range.
    Bias { bias: i32 },
    /// Oracle label plus uniform noise in [-amplitude, amplitude].
    Noise { amplitude: f64, seed: u64 },
    /// Adversarial rewarder that scores gripper-object proximity only,
    /// ignoring the transport channel entirely.
    ProximityOnly,
    /// Flat zero signal.
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptSpec {
    #[serde(flatten)]
    pub kind: ScriptKind,
    /// Steps at which the backend simulates a timeout (fallback testing).
    #[serde(default)]
    pub timeout_steps: Vec<usize>,
}

pub struct ScriptedBackend {
    spec: ScriptSpec,
    oracle: OracleBackend,
    replay: HashMap<(String, usize), (String, i32)>,
    rng: Mutex<ChaCha8Rng>,
}

impl ScriptedBackend {
    pub fn new(spec: ScriptSpec, oracle_cfg: GeometricConfig<f64>) -> Self {
        let mut replay = HashMap::new();
        let seed = match &spec.kind {
            ScriptKind::Noise { seed, .. } => *seed,
            _ => 0,
        };
        if let ScriptKind::Replay { entries } = &spec.kind {
            for e in entries {
                replay.insert(
                    (e.episode_id.clone(), e.step),
                    (e.reasoning.clone(), e.progress),
                );
            }
        }
        ScriptedBackend {
            spec,
            oracle: OracleBackend::new(oracle_cfg),
            replay,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

impl RewardBackend for ScriptedBackend {
    fn label(&self, query: &RewardQuery<f64>) -> Result<(String, i32), BackendError> {
        if self.spec.timeout_steps.contains(&query.step) {
            return Err(BackendError::Timeout);
        }
        match &self.spec.kind {
            ScriptKind::Replay { .. } => self
                .replay
                .get(&(query.episode_id.clone(), query.step))
                .cloned()
                .ok_or_else(|| {
                    BackendError::Failed(format!(
                        "no script entry for {}:{}",
                        query.episode_id, query.step
                    ))
                }),
            ScriptKind::Bias { bias } => {
                let (reasoning, p) = self.oracle.label(query)?;
                Ok((reasoning, (p + bias).clamp(-100, 100)))
            }
            ScriptKind::Noise { amplitude, .. } => {
                let (reasoning, p) = self.oracle.label(query)?;
                let noise = {
                    let mut rng = self.rng.lock().unwrap();
                    rng.gen_range(-amplitude..=*amplitude)
                };
                Ok((reasoning, (p + noise.round() as i32).clamp(-100, 100)))
            }
            ScriptKind::ProximityOnly => {
                // Reach channel only: beta = 0 regardless of the oracle's
                // configured mix.
                let mut cfg = self.oracle.cfg.clone();
                cfg.beta = 0.0;
                let debug = query.debug.as_ref().ok_or_else(|| {
                    BackendError::MalformedQuery("proximity script requires debug states".into())
                })?;
                let y0 = task_distance(&debug.first_state, &cfg)
                    .map_err(|e| BackendError::MalformedQuery(e.to_string()))?;
                let yt = task_distance(&debug.state, &cfg)
                    .map_err(|e| BackendError::MalformedQuery(e.to_string()))?;
                Ok((
                    "The gripper looks close to the object, so the task appears nearly done."
                        .to_string(),
                    self.oracle.progress_from(y0, yt),
                ))
            }
            ScriptKind::Zero => Ok(("No discernible task progress.".to_string(), 0)),
        }
    }
}

/// Remote model endpoint: renders the prompt, posts it over HTTP, and
/// parses the structured response.
pub struct RemoteBackend {
    pub endpoint: String,
    pub style: PromptStyle,
    pub retries: usize,
    agent: ureq::Agent,
    token: Option<String>,
}

impl RemoteBackend {
    pub fn new(endpoint: impl Into<String>, style: PromptStyle, timeout_ms: u64) -> Self {
        RemoteBackend {
            endpoint: endpoint.into(),
            style,
            retries: 1,
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_millis(timeout_ms))
                .build(),
            token: std::env::var("REWARD_REMOTE_TOKEN").ok(),
        }
    }

    fn post(&self, prompt: &str) -> Result<String, BackendError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        match req.send_string(prompt) {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| BackendError::Failed(e.to_string())),
            Err(ureq::Error::Transport(t)) => {
                log::warn!("remote backend transport error: {t}");
                Err(BackendError::Timeout)
            }
            Err(ureq::Error::Status(code, _)) => {
                Err(BackendError::Failed(format!("endpoint returned {code}")))
            }
        }
    }
}

impl RewardBackend for RemoteBackend {
    fn label(&self, query: &RewardQuery<f64>) -> Result<(String, i32), BackendError> {
        let prompt = render_prompt(&query.context, self.style);
        let mut last_err = BackendError::Timeout;
        for _ in 0..=self.retries {
            match self.post(&prompt) {
                Ok(body) => {
                    return match parse_response(&body, ParseMode::Strict) {
                        Ok(r) => Ok((r.reasoning, r.progress)),
                        Err(e) => Err(BackendError::Parse(e.to_string())),
                    }
                }
                Err(e) => last_err = e,
            }
        }
        Err(last_err)
    }
}
