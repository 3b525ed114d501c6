//! Pipeline stage implementations. Every stage checks its inputs first,
//! writes its artifacts, and records a manifest next to the main output.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use progrl_core::grpo::{train_hybrid, FeatureExtractor};
use progrl_core::harness::{run_online_rl, CemConfig, HarnessTask, PointMassEnv};
use progrl_core::io::{read_jsonl, read_trajectories, write_jsonl, write_trajectories};
use progrl_core::labeling::{label_trajectory, CotTemplateSet, LabelMode};
use progrl_core::manifest::StageManifest;
use progrl_core::metrics::{classify_quadrant, voc, RankMethod};
use progrl_core::response::build_context;
use progrl_core::reward::score;
use progrl_core::service::{
    serve, OracleBackend, RemoteBackend, RewardBackend, ScriptSpec, ScriptedBackend,
    ServiceConfig, ServiceHandle,
};
use progrl_core::synthesis::{
    inject_deviation, level_to_deviation, reverse_perturb, sample_level, ReversalSpec,
};
use progrl_core::types::{TaskFamily, TrajectoryKind};
use progrl_core::response::PromptStyle;
use progrl_core::{
    GeometricConfig, LabeledTrajectory, RewardMap, RewardSpec, ToyPolicy, TrainConfig, Trajectory,
};

use crate::config::PipelineConfig;
use crate::error::{require_input, CliError};
use crate::expert;

fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn write_manifest(
    stage: &str,
    seed: u64,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<(), CliError> {
    let mut m = StageManifest::new(stage, seed);
    for p in inputs {
        m.record_input(p).map_err(|e| CliError::stage(stage, e))?;
    }
    for p in outputs {
        m.record_output(p).map_err(|e| CliError::stage(stage, e))?;
    }
    m.write(manifest_path(outputs[0]))
        .map_err(|e| CliError::stage(stage, e))
}

fn write_json<T: Serialize>(stage: &str, path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    std::fs::write(path, text).map_err(|e| CliError::stage(stage, e))
}

fn dynamics_task(family: TaskFamily) -> HarnessTask {
    match family {
        TaskFamily::PickOnly => HarnessTask::Reach,
        _ => HarnessTask::Pick,
    }
}

/// Evenly spaced 1-based segment boundaries, one per non-expert level.
fn even_boundaries(t_len: usize, levels: usize) -> Vec<usize> {
    (1..=levels)
        .map(|i| ((t_len * i) as f64 / levels as f64).round() as usize)
        .map(|b| b.max(1).min(t_len))
        .collect()
}

pub fn run_synth(
    input: &Path,
    family: TaskFamily,
    per_expert: usize,
    seed: u64,
    output: &Path,
) -> Result<(), CliError> {
    require_input(input)?;
    let stage = "synth";
    let experts: Vec<Trajectory> =
        read_trajectories(input).map_err(|e| CliError::stage(stage, e))?;
    if experts.is_empty() {
        return Err(CliError::stage(stage, "no expert trajectories in input"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(experts.len() * per_expert);
    for ex in &experts {
        for _ in 0..per_expert {
            let level = sample_level(family, &mut rng);
            let traj = if ex.states.is_some() && ex.actions.is_some() {
                let dim = ex.states.as_ref().unwrap()[0].gripper_pos.len();
                let env = PointMassEnv::new(dynamics_task(family), dim);
                let boundaries = even_boundaries(ex.len(), family.level_count());
                let spec = level_to_deviation(&level, ex, &boundaries, &mut rng)
                    .map_err(|e| CliError::stage(stage, e))?;
                inject_deviation(ex, &spec, &env, &mut rng)
                    .map_err(|e| CliError::stage(stage, e))?
            } else {
                // Frame-only input: perturb by temporal reversal instead.
                let t = ex.len();
                let q = rng.gen_range(2..=t);
                let w = rng.gen_range(2..=4.min(t));
                let frames = reverse_perturb(&ex.frames, &ReversalSpec { points: vec![q], w })
                    .map_err(|e| CliError::stage(stage, e))?;
                Trajectory {
                    kind: TrajectoryKind::Reversed,
                    frames,
                    states: None,
                    actions: None,
                    ..ex.clone()
                }
            };
            out.push(traj);
        }
    }
    write_trajectories(output, &out).map_err(|e| CliError::stage(stage, e))?;
    write_manifest(stage, seed, &[input], &[output])
}

pub fn run_label(
    input: &Path,
    mode: LabelMode,
    beta: f64,
    seed: u64,
    output: &Path,
) -> Result<(), CliError> {
    require_input(input)?;
    let stage = "label";
    let trajectories: Vec<Trajectory> =
        read_trajectories(input).map_err(|e| CliError::stage(stage, e))?;
    let cfg = GeometricConfig {
        beta,
        target_object: progrl_core::harness::OBJECT_KEY.to_string(),
        epsilon_change: None,
    };
    let templates = CotTemplateSet::builtin();
    let labeled: Vec<LabeledTrajectory> = trajectories
        .into_iter()
        .map(|traj| {
            let progress = label_trajectory(&traj, mode, &cfg, &templates)?;
            Ok(LabeledTrajectory {
                trajectory: traj,
                progress,
            })
        })
        .collect::<Result<_, progrl_core::labeling::LabelingError>>()
        .map_err(|e| CliError::stage(stage, e))?;
    write_jsonl(output, &labeled).map_err(|e| CliError::stage(stage, e))?;
    write_manifest(stage, seed, &[input], &[output])
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreReport {
    pub v: u32,
    pub count: usize,
    pub mean_score: f64,
    pub perfect: usize,
    pub scores: Vec<f64>,
}

pub fn run_score(
    responses: &Path,
    labels: &Path,
    tau: f64,
    seed: u64,
    report: &Path,
) -> Result<(), CliError> {
    require_input(responses)?;
    require_input(labels)?;
    let stage = "score";
    let resp: Vec<ResponseRecord> =
        read_jsonl(responses).map_err(|e| CliError::stage(stage, e))?;
    let labeled: Vec<LabeledTrajectory> =
        read_jsonl(labels).map_err(|e| CliError::stage(stage, e))?;
    let truth: Vec<i32> = labeled
        .iter()
        .flat_map(|lt| lt.progress.iter().map(|r| r.p))
        .collect();
    if resp.len() != truth.len() {
        return Err(CliError::stage(
            stage,
            format!("{} responses vs {} labels", resp.len(), truth.len()),
        ));
    }
    let spec = RewardSpec::with_tau(tau);
    let scores: Vec<f64> = resp
        .iter()
        .zip(&truth)
        .map(|(r, &p)| score(&r.text, p, &spec))
        .collect();
    let out = ScoreReport {
        v: 1,
        count: scores.len(),
        mean_score: scores.iter().sum::<f64>() / scores.len().max(1) as f64,
        perfect: scores.iter().filter(|&&s| s == 2.0).count(),
        scores,
    };
    write_json(stage, report, &out)?;
    write_manifest(stage, seed, &[responses, labels], &[report])
}

/// Render (context features, true label) pairs from labeled trajectories.
fn examples_from(
    labeled: &[LabeledTrajectory],
    window: usize,
    dropout: f64,
    seed: u64,
) -> Result<Vec<progrl_core::grpo::TrainExample<f64>>, CliError> {
    let stage = "train";
    let frame_dim = labeled
        .first()
        .and_then(|lt| lt.trajectory.frames.first())
        .map(|f| f.features.len())
        .ok_or_else(|| CliError::stage(stage, "empty labeled dataset"))?;
    let fe = FeatureExtractor::new(frame_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for lt in labeled {
        if lt.progress.len() != lt.trajectory.len() {
            return Err(CliError::stage(stage, "label/frame length mismatch"));
        }
        for t in 0..lt.trajectory.len() {
            let prev = if t > 0 { Some(lt.progress[t - 1].p) } else { None };
            let ctx = build_context(
                &lt.trajectory.goal,
                &lt.trajectory.frames,
                t,
                window,
                prev,
                Some((dropout, &mut rng)),
            )
            .map_err(|e| CliError::stage(stage, e))?;
            out.push(progrl_core::grpo::TrainExample {
                features: fe.extract(&ctx),
                p_true: lt.progress[t].p,
            });
        }
    }
    Ok(out)
}

fn stride_down<T>(mut items: Vec<T>, cap: usize) -> Vec<T> {
    if items.len() <= cap || cap == 0 {
        return items;
    }
    let stride = items.len().div_ceil(cap);
    let mut i = 0usize;
    items.retain(|_| {
        let keep = i % stride == 0;
        i += 1;
        keep
    });
    items
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    v: u32,
    policy: ToyPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStage {
    Sft,
    Grpo,
    Hybrid,
}

impl TrainStage {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sft" => Some(TrainStage::Sft),
            "grpo" => Some(TrainStage::Grpo),
            "hybrid" => Some(TrainStage::Hybrid),
            _ => None,
        }
    }
}

pub fn run_train(
    data: &Path,
    stage_sel: TrainStage,
    cfg: &PipelineConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<(), CliError> {
    require_input(data)?;
    let stage = "train";
    let labeled: Vec<LabeledTrajectory> =
        read_jsonl(data).map_err(|e| CliError::stage(stage, e))?;
    let examples = stride_down(
        examples_from(&labeled, cfg.train.window, cfg.train.prev_dropout, seed)?,
        cfg.train.max_examples,
    );
    let mut train_cfg: TrainConfig = cfg.train.to_train_config(seed);
    match stage_sel {
        TrainStage::Sft => train_cfg.grpo_iters = 0,
        TrainStage::Grpo => train_cfg.sft_epochs = 0,
        TrainStage::Hybrid => {}
    }
    let spec = cfg.reward.spec();
    let outcome =
        train_hybrid(&examples, &train_cfg, &spec).map_err(|e| CliError::stage(stage, e))?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::stage(stage, e))?;
    let sft_path = out_dir.join("sft_policy.json");
    let grpo_path = out_dir.join("grpo_policy.json");
    let log_path = out_dir.join("training_log.json");
    write_json(
        stage,
        &sft_path,
        &Checkpoint {
            v: 1,
            policy: outcome.sft_policy,
        },
    )?;
    write_json(
        stage,
        &grpo_path,
        &Checkpoint {
            v: 1,
            policy: outcome.grpo_policy,
        },
    )?;
    write_json(stage, &log_path, &outcome.log)?;
    write_manifest(stage, seed, &[data], &[&sft_path, &grpo_path, &log_path])
}

pub struct ServeArgs {
    pub backend: String,
    pub bind: String,
    pub psi: f64,
    pub clip: f64,
    pub beta: f64,
    pub script: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
}

pub fn build_backend(args: &ServeArgs) -> Result<Arc<dyn RewardBackend>, CliError> {
    let oracle_cfg = GeometricConfig {
        beta: args.beta,
        target_object: progrl_core::harness::OBJECT_KEY.to_string(),
        epsilon_change: None,
    };
    match args.backend.as_str() {
        "oracle" => Ok(Arc::new(OracleBackend::new(oracle_cfg))),
        "scripted" => {
            let path = args
                .script
                .as_ref()
                .ok_or_else(|| CliError::Config("scripted backend needs --script".into()))?;
            require_input(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read script: {e}")))?;
            let spec: ScriptSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid script: {e}")))?;
            Ok(Arc::new(ScriptedBackend::new(spec, oracle_cfg)))
        }
        "remote" => {
            let endpoint = args
                .endpoint
                .as_ref()
                .ok_or_else(|| CliError::Config("remote backend needs --endpoint".into()))?;
            Ok(Arc::new(RemoteBackend::new(
                endpoint.clone(),
                PromptStyle::Native,
                args.timeout_ms,
            )))
        }
        other => Err(CliError::Config(format!("unknown backend: {other}"))),
    }
}

pub fn start_service(args: &ServeArgs) -> Result<ServiceHandle, CliError> {
    let backend = build_backend(args)?;
    let config = ServiceConfig {
        bind: args.bind.clone(),
        backend,
        map: RewardMap {
            psi: args.psi,
            c: args.clip,
            ..RewardMap::default()
        },
    };
    serve(config).map_err(|e| CliError::stage("serve", e))
}

#[derive(Debug, Serialize)]
struct HarnessSummary<'a> {
    v: u32,
    task: String,
    episodes: usize,
    final_success: f64,
    eval_history: &'a [(usize, f64)],
    degraded_replies: usize,
}

pub fn run_harness(
    task: HarnessTask,
    dim: usize,
    rewarder: &str,
    episodes: usize,
    seed: u64,
    log_path: &Path,
) -> Result<f64, CliError> {
    let stage = "harness";
    let env = PointMassEnv::new(task, dim);
    let cfg = CemConfig {
        seed,
        ..CemConfig::default()
    };
    let log = run_online_rl(&env, rewarder, &cfg, episodes)
        .map_err(|e| CliError::stage(stage, e))?;
    write_jsonl(log_path, &log.episodes).map_err(|e| CliError::stage(stage, e))?;
    let summary_path = log_path.with_extension("summary.json");
    write_json(
        stage,
        &summary_path,
        &HarnessSummary {
            v: 1,
            task: format!("{task:?}").to_lowercase(),
            episodes: log.episodes.len(),
            final_success: log.final_success,
            eval_history: &log.eval_history,
            degraded_replies: log.degraded_replies,
        },
    )?;
    write_manifest(stage, seed, &[], &[log_path, &summary_path])?;
    Ok(log.final_success)
}

#[derive(Debug, Serialize)]
struct VocReport {
    v: u32,
    method: String,
    per_video: Vec<VocEntry>,
    mean: f64,
}

#[derive(Debug, Serialize)]
struct VocEntry {
    voc: f64,
    degenerate: bool,
}

pub fn run_eval_voc(
    input: &Path,
    method: RankMethod,
    seed: u64,
    report: &Path,
    plot: Option<&Path>,
) -> Result<f64, CliError> {
    require_input(input)?;
    let stage = "eval";
    let labeled: Vec<LabeledTrajectory> =
        read_jsonl(input).map_err(|e| CliError::stage(stage, e))?;
    let mut entries = Vec::with_capacity(labeled.len());
    for lt in &labeled {
        let vs: Vec<f64> = lt.progress.iter().map(|r| r.v).collect();
        let r = voc(&vs, method).map_err(|e| CliError::stage(stage, e))?;
        entries.push(VocEntry {
            voc: r.value,
            degenerate: r.degenerate,
        });
    }
    if entries.is_empty() {
        return Err(CliError::stage(stage, "no videos in input"));
    }
    let mean = entries.iter().map(|e| e.voc).sum::<f64>() / entries.len() as f64;
    if let Some(svg) = plot {
        let series: Vec<Vec<f64>> = labeled
            .iter()
            .take(8)
            .map(|lt| lt.progress.iter().map(|r| r.v).collect())
            .collect();
        crate::plot::line_chart(&series, "progress", svg).map_err(|e| CliError::stage(stage, e))?;
    }
    let out = VocReport {
        v: 1,
        method: format!("{method:?}").to_lowercase(),
        per_video: entries,
        mean,
    };
    write_json(stage, report, &out)?;
    write_manifest(stage, seed, &[input], &[report])?;
    Ok(mean)
}

pub fn run_eval_quadrant(
    episodes: &Path,
    perceived_thr: f64,
    true_thr: f64,
    seed: u64,
    report: &Path,
    plot: Option<&Path>,
) -> Result<(), CliError> {
    require_input(episodes)?;
    let stage = "eval";
    let logs: Vec<progrl_core::EpisodeLog> =
        read_jsonl(episodes).map_err(|e| CliError::stage(stage, e))?;
    if logs.is_empty() {
        return Err(CliError::stage(stage, "no episodes in input"));
    }
    let q = classify_quadrant(&logs, (perceived_thr, true_thr));
    if let Some(svg) = plot {
        let points: Vec<(f64, f64)> = logs
            .iter()
            .map(|l| {
                let perceived = l
                    .predicted_progress
                    .iter()
                    .copied()
                    .max()
                    .unwrap_or(0) as f64;
                let truth = l.true_rewards.iter().copied().fold(0.0f64, f64::max);
                (perceived, truth)
            })
            .collect();
        crate::plot::scatter(&points, (perceived_thr, true_thr), svg)
            .map_err(|e| CliError::stage(stage, e))?;
    }
    write_json(stage, report, &q)?;
    write_manifest(stage, seed, &[episodes], &[report])
}

fn concat_jsonl(stage: &str, parts: &[&Path], dest: &Path) -> Result<(), CliError> {
    let mut buf = String::new();
    for p in parts {
        buf.push_str(&std::fs::read_to_string(p).map_err(|e| CliError::stage(stage, e))?);
    }
    std::fs::write(dest, buf).map_err(|e| CliError::stage(stage, e))
}

/// End-to-end demonstration: synthesize, label, train, serve, run online
/// RL, and report quadrant + VOC. Deterministic for a fixed seed.
pub fn run_demo(cfg: &PipelineConfig, seed: u64, out_dir: &Path) -> Result<(), CliError> {
    let stage = "demo";
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::stage(stage, e))?;
    let env = PointMassEnv::new(HarnessTask::Reach, 2);

    // 1. Scripted expert demonstrations.
    let expert_path = out_dir.join("expert.jsonl");
    let experts = expert::expert_batch(&env, 50, seed);
    write_trajectories(&expert_path, &experts).map_err(|e| CliError::stage(stage, e))?;
    write_manifest("demo-experts", seed, &[], &[&expert_path])?;

    // 2. Non-expert synthesis: 4 variants per expert.
    let nonexpert_path = out_dir.join("nonexpert.jsonl");
    run_synth(&expert_path, TaskFamily::PickOnly, 4, seed, &nonexpert_path)?;

    // 3. Geometric labels for both datasets.
    let labeled_expert = out_dir.join("labeled_expert.jsonl");
    let labeled_nonexpert = out_dir.join("labeled_nonexpert.jsonl");
    run_label(&expert_path, LabelMode::Geometric, 0.0, seed, &labeled_expert)?;
    run_label(
        &nonexpert_path,
        LabelMode::Geometric,
        0.0,
        seed,
        &labeled_nonexpert,
    )?;
    let labeled_all = out_dir.join("labeled_all.jsonl");
    concat_jsonl(stage, &[&labeled_expert, &labeled_nonexpert], &labeled_all)?;

    // 4. Hybrid training of the progress predictor, with a demo-sized budget.
    let mut demo_cfg = cfg.clone();
    demo_cfg.train.max_examples = demo_cfg.train.max_examples.min(400);
    demo_cfg.train.grpo_iters = demo_cfg.train.grpo_iters.min(15);
    let ckpt_dir = out_dir.join("ckpt");
    run_train(&labeled_all, TrainStage::Hybrid, &demo_cfg, seed, &ckpt_dir)?;

    // 5. Oracle reward service plus the online-RL harness.
    let handle = start_service(&ServeArgs {
        backend: "oracle".into(),
        bind: "127.0.0.1:0".into(),
        psi: cfg.reward.psi,
        clip: cfg.reward.clip,
        beta: 0.0,
        script: None,
        endpoint: None,
        timeout_ms: cfg.service.timeout_ms,
    })?;
    let episodes_path = out_dir.join("episodes.jsonl");
    let final_success = run_harness(
        HarnessTask::Reach,
        2,
        &handle.addr().to_string(),
        cfg.harness.budget,
        seed,
        &episodes_path,
    )?;
    handle.shutdown();

    // 6. Reports: quadrant on training episodes, VOC on labeled experts.
    let quadrant_path = out_dir.join("quadrant.json");
    run_eval_quadrant(&episodes_path, 50.0, 0.5, seed, &quadrant_path, None)?;
    let voc_path = out_dir.join("voc.json");
    let mean_voc = run_eval_voc(&labeled_expert, RankMethod::Spearman, seed, &voc_path, None)?;

    println!(
        "demo complete: final success {final_success:.2}, mean expert VOC {mean_voc:.3} \
         (artifacts in {})",
        out_dir.display()
    );
    Ok(())
}
