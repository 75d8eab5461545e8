//! `shadow-rl`: train, evaluate and inspect shadow-mode agents.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shadow_rl::config::ExperimentConfig;
use shadow_rl::ddpg::DdpgAgent;
use shadow_rl::env::Scenario;
use shadow_rl::harness::{self, MetricRow, METRICS_HEADER};
use shadow_rl::shadow::DecisionMode;

#[derive(Parser)]
#[command(name = "shadow-rl", version, about = "Shadow-mode reinforcement learning on a 2D reach-avoid task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set env.epsilon=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Frozen test set; built from the configured seed when absent.
    #[arg(long, value_name = "PATH")]
    testset: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write metrics, aggregates and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train seeds 0..N instead of the configured list.
        #[arg(long, value_name = "N")]
        seeds: Option<u64>,
    },
    /// Evaluate a checkpoint on the test set.
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the Q-ratio heatmap of a qcompare checkpoint.
    Heatmap {
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Freeze the configured test set to a file.
    MakeTestset {
        #[command(flatten)]
        common: Common,
    },
    /// Paired evaluation of two policies on one test set. Each policy is
    /// `baseline_only`, a checkpoint path, or `PATH:MODE` to run a
    /// checkpoint under another switching rule.
    Compare {
        first: String,
        second: String,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<shadow_rl::Error> for Failure {
    fn from(e: shadow_rl::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Train { common, seeds } => {
            let mut config = resolve(&common, None)?;
            if let Some(n) = seeds {
                if n == 0 {
                    return Err(Failure::Usage("--seeds must be at least 1".into()));
                }
                config.harness.seeds = (0..n).collect();
            }
            train(&config, &common)
        }
        Command::Eval { checkpoint, common } => {
            let (config, agent) = load(&checkpoint, &common)?;
            let test_set = test_set(&config, &common)?;
            let report = harness::evaluate(config.mode(), Some(&agent), &test_set, &config.env, 0)?;
            prepare_out(&common.out, &config)?;
            let csv = harness::metrics_csv(&[MetricRow { seed: 0, report }]);
            std::fs::write(common.out.join("eval.csv"), &csv)?;
            println!(
                "mode {}  mean_return {:.3}  success_rate {:.3}  agent_action_fraction {:.3}  mean_episode_length {:.2}",
                config.mode(),
                report.mean_return,
                report.success_rate,
                report.agent_action_fraction,
                report.mean_episode_length
            );
            Ok(())
        }
        Command::Heatmap { checkpoint, common } => {
            let (config, agent) = load(&checkpoint, &common)?;
            let map = harness::heatmap(config.mode(), &agent, &config.heatmap.scenario, config.heatmap.resolution)?;
            prepare_out(&common.out, &config)?;
            std::fs::write(common.out.join("heatmap.txt"), map.to_text())?;
            std::fs::write(common.out.join("heatmap.pgm"), map.to_pgm())?;
            let above = map.values.iter().filter(|v| v.is_some_and(|v| v > 1.0)).count();
            println!(
                "wrote {} ({}x{}, {} cells with ratio > 1)",
                common.out.join("heatmap.txt").display(),
                map.resolution,
                map.resolution,
                above
            );
            Ok(())
        }
        Command::MakeTestset { common } => {
            let config = resolve(&common, None)?;
            prepare_out(&common.out, &config)?;
            let scenarios = test_set(&config, &common)?;
            let path = common.out.join("testset.txt");
            harness::write_test_set(&path, &scenarios)?;
            println!("wrote {} scenarios to {}", scenarios.len(), path.display());
            Ok(())
        }
        Command::Compare { first, second, common } => compare(&first, &second, &common),
    }
}

/// Defaults, then the config file (or `base`), then `--set` overrides.
fn resolve(common: &Common, base: Option<ExperimentConfig>) -> CliResult<ExperimentConfig> {
    let usage = |e: shadow_rl::Error| Failure::Usage(e.to_string());
    let mut config = base.unwrap_or_default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        config.apply_text(&text).map_err(usage)?;
    }
    for assignment in &common.overrides {
        config.apply_override(assignment).map_err(usage)?;
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

/// Checkpoint with its recorded configuration, adjusted by `--config` and `--set`.
fn load(path: &Path, common: &Common) -> CliResult<(ExperimentConfig, DdpgAgent)> {
    let (stored, agent) = harness::load_checkpoint(path)
        .map_err(|e| Failure::Runtime(format!("cannot load checkpoint {}: {e}", path.display())))?;
    let config = resolve(common, Some(stored))?;
    config.mode().check_agent(&agent)?;
    Ok((config, agent))
}

fn test_set(config: &ExperimentConfig, common: &Common) -> CliResult<Vec<Scenario>> {
    match &common.testset {
        Some(path) => harness::read_test_set(path)
            .map_err(|e| Failure::Runtime(format!("cannot read test set {}: {e}", path.display()))),
        None => Ok(harness::build_test_set(
            config.harness.testset_seed,
            config.harness.n_eval_scenarios,
            config.env.obstacle_probability,
        )),
    }
}

/// Creates the output directory and freezes the resolved configuration in it.
fn prepare_out(dir: &Path, config: &ExperimentConfig) -> CliResult {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.cfg"), config.to_text())?;
    Ok(())
}

fn train(config: &ExperimentConfig, common: &Common) -> CliResult {
    prepare_out(&common.out, config)?;
    let test_set = test_set(config, common)?;
    harness::write_test_set(&common.out.join("testset.txt"), &test_set)?;

    let mut per_seed = Vec::new();
    let mut all = format!("{METRICS_HEADER}\n");
    for &seed in &config.harness.seeds {
        let outcome = harness::train_one(config, seed, &test_set, |row| {
            let r = &row.report;
            println!(
                "seed {seed} step {:>7}  return {:9.3}  success {:.3}  agent_fraction {:.3}  length {:.2}",
                r.env_steps, r.mean_return, r.success_rate, r.agent_action_fraction, r.mean_episode_length
            );
        })?;
        let csv = harness::metrics_csv(&outcome.rows);
        std::fs::write(common.out.join(format!("metrics_seed{seed}.csv")), &csv)?;
        all.extend(csv.lines().skip(1).map(|l| format!("{l}\n")));
        harness::save_checkpoint(&common.out.join(format!("checkpoint_seed{seed}.ckpt")), config, &outcome.agent)?;
        per_seed.push(outcome.rows);
    }
    std::fs::write(common.out.join("metrics.csv"), all)?;
    std::fs::write(
        common.out.join("aggregate.csv"),
        harness::aggregate_csv(&harness::aggregate(&per_seed)),
    )?;
    println!("wrote results for {} seed(s) to {}", per_seed.len(), common.out.display());
    Ok(())
}

struct Policy {
    label: String,
    mode: DecisionMode,
    agent: Option<DdpgAgent>,
}

fn policy(spec: &str, common: &Common) -> CliResult<(Policy, Option<ExperimentConfig>)> {
    if spec == "baseline_only" {
        let policy = Policy { label: spec.to_string(), mode: DecisionMode::BaselineOnly, agent: None };
        return Ok((policy, None));
    }
    let (path, mode) = match spec.rsplit_once(':') {
        Some((p, m)) if !Path::new(spec).exists() => (p, Some(m)),
        _ => (spec, None),
    };
    let (mut config, agent) = load(Path::new(path), common)?;
    if let Some(m) = mode {
        config
            .apply_override(&format!("shadow.mode={m}"))
            .map_err(|e| Failure::Usage(e.to_string()))?;
        config.mode().check_agent(&agent)?;
    }
    let policy = Policy { label: spec.to_string(), mode: config.mode(), agent: Some(agent) };
    Ok((policy, Some(config)))
}

fn compare(first: &str, second: &str, common: &Common) -> CliResult {
    let (a, config_a) = policy(first, common)?;
    let (b, config_b) = policy(second, common)?;
    let config = match (config_a, config_b) {
        (Some(c), _) | (None, Some(c)) => c,
        (None, None) => resolve(common, None)?,
    };
    let scenarios = test_set(&config, common)?;
    prepare_out(&common.out, &config)?;

    let mut table = String::from("scenario,return_first,return_second,delta\n");
    let mut deltas = Vec::with_capacity(scenarios.len());
    println!("first: {}  second: {}", a.label, b.label);
    println!("{:>8} {:>12} {:>12} {:>12}", "scenario", "first", "second", "delta");
    for (i, s) in scenarios.iter().enumerate() {
        let ra = harness::rollout(a.mode, a.agent.as_ref(), s, &config.env)?.total_return;
        let rb = harness::rollout(b.mode, b.agent.as_ref(), s, &config.env)?.total_return;
        let d = rb - ra;
        deltas.push(d);
        println!("{i:>8} {ra:>12.3} {rb:>12.3} {d:>12.3}");
        table.push_str(&format!("{i},{ra:.6},{rb:.6},{d:.6}\n"));
    }
    std::fs::write(common.out.join("compare.csv"), table)?;
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let better = deltas.iter().filter(|d| **d > 0.0).count();
    let worse = deltas.iter().filter(|d| **d < 0.0).count();
    println!("mean delta (second - first) {mean:.3}; second better on {better}, worse on {worse} of {} scenarios", deltas.len());
    Ok(())
}
