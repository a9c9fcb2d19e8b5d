//! Command-line front end: `train`, `evaluate`, `plot` and `validate-config`.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 runtime abort.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bunching_core::config::RunConfig;
use bunching_core::harness::{
    evaluate_policy, render_plots, run_experiment, validate_file, ConfigKind, EvalMode, ExperimentSpec, Method,
};
use bunching_core::setter::AblationMask;
use bunching_core::Error;
use clap::{Args, Parser, Subcommand};

/// Output root used when neither `--out` nor the environment variable is set.
const DEFAULT_OUT: &str = "runs";
const OUT_ENV: &str = "BUNCHING_OUT";

#[derive(Parser)]
#[command(name = "bunching", version, about = "Bus-bunching control with curriculum-trained PPO agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed and write logs, lesson traces and checkpoints.
    Train(TrainArgs),
    /// Evaluate a policy checkpoint on the no-curriculum environment.
    Evaluate(EvalArgs),
    /// Render reward and lesson-trace plots from run logs.
    Plot(PlotArgs),
    /// Check run configs, curricula or experiment specs without running anything.
    ValidateConfig(ValidateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment spec file, used instead of the method and config flags below.
    #[arg(long, conflicts_with_all = ["method", "config", "curriculum", "ablation", "no_dr", "seeds", "steps"])]
    spec: Option<PathBuf>,
    /// none, budget, stagnancy or setter.
    #[arg(long, default_value = "none")]
    method: Method,
    /// Run config with [env], [dr], [ppo] and [setter] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Curriculum file or built-in name (easy_first, hard_first, combination).
    #[arg(long)]
    curriculum: Option<String>,
    /// Setter components to control: all, or a comma list of s, alpha, beta.
    #[arg(long, default_value = "all")]
    ablation: AblationMask,
    /// Disable domain randomization.
    #[arg(long)]
    no_dr: bool,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    /// Decision steps per run.
    #[arg(long, default_value_t = 100_000)]
    steps: u64,
    /// Save an intermediate checkpoint every N iterations (0: final only).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: u64,
    /// Output root (default: `$BUNCHING_OUT`, else `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Policy checkpoint; not needed for `--mode random`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// greedy, sampled or random.
    #[arg(long, default_value = "greedy")]
    mode: EvalMode,
    #[arg(long, default_value_t = 20)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_dr: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// `log.jsonl` files, or directories searched recursively for them.
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Directory for the plots (default: `<output root>/plots`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

/// Output root: `$BUNCHING_OUT` when set, else [`DEFAULT_OUT`].
fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Plot(a) => plot(a),
        Command::ValidateConfig(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn train(a: TrainArgs) -> Result<(), Error> {
    let spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let spec = ExperimentSpec::from_toml(&text, &path.display().to_string())?;
            // `--out` and the environment variable beat the file's `out_dir`.
            match a.out.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)) {
                Some(out_dir) => ExperimentSpec { out_dir, ..spec },
                None => spec,
            }
        }
        None => ExperimentSpec {
            config: a.config,
            curriculum: a.curriculum,
            ablation: a.ablation,
            dr: !a.no_dr,
            checkpoint_every: a.checkpoint_every,
            ..ExperimentSpec::new(a.method, a.seeds, a.steps, a.out.unwrap_or_else(output_root))
        },
    };
    let resolved = spec.resolve()?;
    eprintln!("training {} for {} steps on seeds {:?} into {}", resolved.arm(), spec.total_steps, spec.seeds, spec.out_dir.display());
    for run in run_experiment(&spec)? {
        println!("seed {}: {} iterations, {} steps, final reward {:.2} -> {}", run.seed, run.iterations, run.steps, run.final_reward, run.dir.display());
    }
    Ok(())
}

fn evaluate(a: EvalArgs) -> Result<(), Error> {
    let mut run = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if a.no_dr {
        run.dr.enabled = false;
    }
    let report = evaluate_policy(&run, a.checkpoint.as_deref(), a.mode, a.episodes, a.seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &a.report {
        std::fs::write(p, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn collect_logs(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), Error> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            if e.is_dir() || e.file_name().is_some_and(|n| n == "log.jsonl") {
                collect_logs(&e, out)?;
            }
        }
    } else if path.exists() {
        out.push(path.to_path_buf());
    } else {
        return Err(Error::Input(format!("{} does not exist", path.display())));
    }
    Ok(())
}

fn plot(a: PlotArgs) -> Result<(), Error> {
    let mut logs = Vec::new();
    for p in &a.logs {
        collect_logs(p, &mut logs)?;
    }
    let out = a.out.unwrap_or_else(|| output_root().join("plots"));
    for f in render_plots(&logs, &out)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<(), Error> {
    for path in &a.paths {
        let what = match validate_file(path)? {
            ConfigKind::Run(_) => "run config".to_string(),
            ConfigKind::Curriculum(c) => format!("curriculum {c}"),
            ConfigKind::Experiment(s) => format!("experiment spec ({} on {} seeds)", s.method, s.seeds.len()),
        };
        println!("{}: ok, {what}", path.display());
    }
    Ok(())
}
