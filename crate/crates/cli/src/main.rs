//! Unified command-line entry point for the reward-reasoning pipeline:
//! synth -> label -> train -> serve -> harness -> eval.

mod config;
mod error;
mod expert;
mod plot;
mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use progrl_core::harness::HarnessTask;
use progrl_core::labeling::LabelMode;
use progrl_core::metrics::RankMethod;
use progrl_core::types::TaskFamily;

use error::CliError;
use stages::{ServeArgs, TrainStage};

#[derive(Parser)]
#[command(name = "progrl", version, about = "Progress-reward pipeline tools")]
struct Cli {
    /// Master seed; overrides the config file value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Verbose logging.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize non-expert trajectories from expert demonstrations.
    Synth {
        #[arg(long)]
        input: PathBuf,
        /// Task family: pick-only, pick-and-place, open-close-drawer,
        /// open-close-door, button, lever-knob.
        #[arg(long, default_value = "pick-only")]
        family: String,
        /// Non-expert variants per expert trajectory.
        #[arg(long, default_value_t = 4)]
        per_expert: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Label trajectories with progress values and reasoning.
    Label {
        #[arg(long)]
        input: PathBuf,
        /// geometric or temporal.
        #[arg(long, default_value = "geometric")]
        mode: String,
        /// Transport-channel blend weight for geometric labels.
        #[arg(long, default_value_t = 0.0)]
        beta: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score structured responses against labeled progress.
    Score {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        tau: f64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train the progress-predictor policy.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// sft, grpo, or hybrid.
        #[arg(long, default_value = "hybrid")]
        stage: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the reward-labeling service until interrupted.
    Serve(ServeCommand),
    /// Online RL against a running reward service.
    Harness {
        /// reach, push, or pick.
        #[arg(long)]
        task: String,
        /// Reward service address HOST:PORT.
        #[arg(long)]
        rewarder: String,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long)]
        log: PathBuf,
    },
    /// Offline evaluation reports.
    Eval {
        #[command(subcommand)]
        which: EvalCommand,
    },
    /// End-to-end demonstration pipeline with a fixed budget.
    Demo {
        #[arg(long, default_value = "demo_out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ServeCommand {
    /// oracle, scripted, or remote.
    #[arg(long)]
    backend: String,
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: String,
    #[arg(long, default_value_t = 0.01)]
    psi: f64,
    #[arg(long, default_value_t = 100.0)]
    clip: f64,
    /// Oracle transport-channel blend weight.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Script file for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Remote model endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 2000)]
    timeout_ms: u64,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Value-order correlation over labeled prediction sequences.
    Voc {
        #[arg(long)]
        input: PathBuf,
        /// spearman or kendall.
        #[arg(long, default_value = "spearman")]
        method: String,
        #[arg(long)]
        report: PathBuf,
        /// Write a static SVG line chart next to the report.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Perceived-vs-true quadrant classification of episode logs.
    Quadrant {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        perceived_thr: f64,
        #[arg(long, default_value_t = 0.5)]
        true_thr: f64,
        #[arg(long)]
        report: PathBuf,
        /// Write a static SVG scatter chart next to the report.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(cfg.seed);

    match cli.command {
        Command::Synth {
            input,
            family,
            per_expert,
            output,
        } => {
            let family = TaskFamily::parse(&family)
                .ok_or_else(|| CliError::Config(format!("unknown family: {family}")))?;
            stages::run_synth(&input, family, per_expert, seed, &output)
        }
        Command::Label {
            input,
            mode,
            beta,
            output,
        } => {
            let mode = match mode.as_str() {
                "geometric" => LabelMode::Geometric,
                "temporal" => LabelMode::Temporal,
                other => return Err(CliError::Config(format!("unknown label mode: {other}"))),
            };
            stages::run_label(&input, mode, beta, seed, &output)
        }
        Command::Score {
            responses,
            labels,
            tau,
            report,
        } => stages::run_score(&responses, &labels, tau, seed, &report),
        Command::Train { data, stage, out } => {
            let stage = TrainStage::parse(&stage)
                .ok_or_else(|| CliError::Config(format!("unknown train stage: {stage}")))?;
            stages::run_train(&data, stage, &cfg, seed, &out)
        }
        Command::Serve(args) => {
            let handle = stages::start_service(&ServeArgs {
                backend: args.backend,
                bind: args.bind,
                psi: args.psi,
                clip: args.clip,
                beta: args.beta,
                script: args.script,
                endpoint: args.endpoint,
                timeout_ms: args.timeout_ms,
            })?;
            println!("reward service listening on {}", handle.addr());
            loop {
                std::thread::sleep(std::time::Duration::from_secs(3600));
            }
        }
        Command::Harness {
            task,
            rewarder,
            episodes,
            log,
        } => {
            let task = HarnessTask::parse(&task)
                .ok_or_else(|| CliError::Config(format!("unknown task: {task}")))?;
            let success = stages::run_harness(
                task,
                cfg.harness.dim,
                &rewarder,
                episodes,
                seed,
                &log,
            )?;
            println!("final evaluated success: {success:.2}");
            Ok(())
        }
        Command::Eval { which } => match which {
            EvalCommand::Voc {
                input,
                method,
                report,
                plot,
            } => {
                let method = match method.as_str() {
                    "spearman" => RankMethod::Spearman,
                    "kendall" => RankMethod::Kendall,
                    other => {
                        return Err(CliError::Config(format!("unknown voc method: {other}")))
                    }
                };
                let mean = stages::run_eval_voc(&input, method, seed, &report, plot.as_deref())?;
                println!("mean VOC: {mean:.4}");
                Ok(())
            }
            EvalCommand::Quadrant {
                episodes,
                perceived_thr,
                true_thr,
                report,
                plot,
            } => stages::run_eval_quadrant(
                &episodes,
                perceived_thr,
                true_thr,
                seed,
                &report,
                plot.as_deref(),
            ),
        },
        Command::Demo { out } => stages::run_demo(&cfg, seed, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
