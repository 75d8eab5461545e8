//! Multi-seed training runs, frozen test-set evaluation, metric CSVs,
//! checkpoints and the decision-ratio heatmap.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baseline::baseline_action;
use crate::config::ExperimentConfig;
use crate::ddpg::{DdpgAgent, ReplayBuffer};
use crate::env::{EnvConfig, ReachAvoidEnv, Scenario, ARENA_HI, ARENA_LO};
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::nn::MlpNet;
use crate::shadow::{decide, record_transition, DecisionMode, EpisodeSchedule, StepDecision};

/// Independent random streams derived from one run seed.
const STREAM_INIT: u64 = 0;
const STREAM_SCENARIO: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_REPLAY: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// `n` scenarios from a dedicated generator.
pub fn build_test_set(seed: u64, n: usize, obstacle_probability: f64) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..n)
        .map(|_| Scenario::sample(&mut rng, obstacle_probability))
        .collect()
}

pub fn test_set_to_string(scenarios: &[Scenario]) -> String {
    scenarios.iter().map(|s| format!("{s}\n")).collect()
}

pub fn parse_test_set(text: &str) -> Result<Vec<Scenario>> {
    let scenarios = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Scenario>>>()?;
    if scenarios.is_empty() {
        return Err(Error::Parse("test set is empty".into()));
    }
    Ok(scenarios)
}

pub fn write_test_set(path: &Path, scenarios: &[Scenario]) -> Result<()> {
    std::fs::write(path, test_set_to_string(scenarios))?;
    Ok(())
}

pub fn read_test_set(path: &Path) -> Result<Vec<Scenario>> {
    parse_test_set(&std::fs::read_to_string(path)?)
}

/// Result of one greedy evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    /// Raw environment return, without regularisation shaping.
    pub total_return: f64,
    pub length: usize,
    pub success: bool,
    pub agent_steps: usize,
    /// Who acted at each step (`true` = agent).
    pub choices: Vec<bool>,
}

/// Greedy episode: no exploration noise, no baseline prefix. `agent` may be
/// `None` only for [`DecisionMode::BaselineOnly`].
pub fn rollout(
    mode: DecisionMode,
    agent: Option<&DdpgAgent>,
    scenario: &Scenario,
    env_config: &EnvConfig,
) -> Result<EpisodeOutcome> {
    let mut env = ReachAvoidEnv::new(env_config.clone(), *scenario);
    let mut obs = env.reset(*scenario);
    let mut out = EpisodeOutcome {
        total_return: 0.0,
        length: 0,
        success: false,
        agent_steps: 0,
        choices: Vec::new(),
    };
    loop {
        let executed = match (mode, agent) {
            (DecisionMode::BaselineOnly, _) => {
                out.choices.push(false);
                baseline_action(&obs)
            }
            (_, Some(agent)) => {
                let d = decide::<ChaCha8Rng>(mode, &obs, agent, env.time(), EpisodeSchedule::EVAL, None)?;
                out.choices.push(d.chose_agent);
                d.executed_action
            }
            (_, None) => {
                return Err(Error::Config(format!("mode {mode} needs a trained agent")));
            }
        };
        let step = env.step(executed)?;
        out.total_return += step.reward;
        out.length += 1;
        obs = step.observation;
        if step.done() {
            out.success = step.terminated;
            break;
        }
    }
    out.agent_steps = out.choices.iter().filter(|c| **c).count();
    Ok(out)
}

/// Test-set summary of one policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub mean_return: f64,
    /// Zero for a single run; filled in by [`aggregate`].
    pub return_std_across_seeds: f64,
    pub success_rate: f64,
    pub agent_action_fraction: f64,
    pub mean_episode_length: f64,
    pub env_steps: usize,
}

pub fn evaluate(
    mode: DecisionMode,
    agent: Option<&DdpgAgent>,
    test_set: &[Scenario],
    env_config: &EnvConfig,
    env_steps: usize,
) -> Result<EvalReport> {
    let outcomes = test_set
        .iter()
        .map(|s| rollout(mode, agent, s, env_config))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&outcomes, env_steps))
}

pub fn summarize(outcomes: &[EpisodeOutcome], env_steps: usize) -> EvalReport {
    let n = outcomes.len().max(1) as f64;
    let total_steps: usize = outcomes.iter().map(|o| o.length).sum();
    let agent_steps: usize = outcomes.iter().map(|o| o.agent_steps).sum();
    EvalReport {
        mean_return: outcomes.iter().map(|o| o.total_return).sum::<f64>() / n,
        return_std_across_seeds: 0.0,
        success_rate: outcomes.iter().filter(|o| o.success).count() as f64 / n,
        agent_action_fraction: if total_steps == 0 {
            0.0
        } else {
            agent_steps as f64 / total_steps as f64
        },
        mean_episode_length: total_steps as f64 / n,
        env_steps,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub seed: u64,
    pub report: EvalReport,
}

pub const METRICS_HEADER: &str = "env_steps,seed,mean_return,success_rate,agent_action_fraction,mean_episode_length";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            r.env_steps, row.seed, r.mean_return, r.success_rate, r.agent_action_fraction, r.mean_episode_length
        );
    }
    s
}

/// Per-eval-point statistics over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub env_steps: usize,
    pub seeds: usize,
    pub mean_return_mean: f64,
    pub mean_return_std: f64,
    pub success_rate_mean: f64,
    pub agent_action_fraction_mean: f64,
    pub mean_episode_length_mean: f64,
}

pub const AGGREGATE_HEADER: &str =
    "env_steps,seeds,mean_return_mean,mean_return_std,success_rate_mean,agent_action_fraction_mean,mean_episode_length_mean";

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and (population) standard deviation of the per-seed metrics at each
/// evaluation point shared by all seeds.
pub fn aggregate(per_seed: &[Vec<MetricRow>]) -> Vec<AggregateRow> {
    let Some(first) = per_seed.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .filter(|(i, _)| per_seed.iter().all(|rows| rows.len() > *i))
        .map(|(i, row)| {
            let col = |f: fn(&EvalReport) -> f64| -> Vec<f64> { per_seed.iter().map(|rows| f(&rows[i].report)).collect() };
            let (ret_mean, ret_std) = mean_std(&col(|r| r.mean_return));
            AggregateRow {
                env_steps: row.report.env_steps,
                seeds: per_seed.len(),
                mean_return_mean: ret_mean,
                mean_return_std: ret_std,
                success_rate_mean: mean_std(&col(|r| r.success_rate)).0,
                agent_action_fraction_mean: mean_std(&col(|r| r.agent_action_fraction)).0,
                mean_episode_length_mean: mean_std(&col(|r| r.mean_episode_length)).0,
            }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = format!("{AGGREGATE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.env_steps,
            r.seeds,
            r.mean_return_mean,
            r.mean_return_std,
            r.success_rate_mean,
            r.agent_action_fraction_mean,
            r.mean_episode_length_mean
        );
    }
    s
}

/// Counters from one training run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainStats {
    pub episodes: usize,
    pub updates: usize,
    pub stored_transitions: usize,
    pub agent_steps: usize,
    pub consulted_steps: usize,
}

pub struct TrainOutcome {
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub agent: DdpgAgent,
    pub stats: TrainStats,
}

/// Trains one seed. Evaluation rows are produced at step 0 and every
/// `eval_every` environment steps; `progress` sees each row as it lands.
pub fn train_one(
    config: &ExperimentConfig,
    seed: u64,
    test_set: &[Scenario],
    mut progress: impl FnMut(&MetricRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mode = config.mode();
    let env_cfg = &config.env;
    let h = &config.harness;

    let mut agent = DdpgAgent::new(config.agent.clone(), mode.actor_width(), &mut stream(seed, STREAM_INIT))?;
    let mut buffer = ReplayBuffer::new(config.agent.buffer_capacity);
    let mut scenario_rng = stream(seed, STREAM_SCENARIO);
    let mut noise_rng = stream(seed, STREAM_NOISE);
    let mut replay_rng = stream(seed, STREAM_REPLAY);
    let shadowed = matches!(mode, DecisionMode::AgentDecision { .. } | DecisionMode::QCompare);

    let mut rows = Vec::new();
    let mut stats = TrainStats::default();
    let mut eval = |agent: &DdpgAgent, steps: usize, rows: &mut Vec<MetricRow>| -> Result<()> {
        let report = evaluate(mode, Some(agent), test_set, env_cfg, steps)?;
        let row = MetricRow { seed, report };
        progress(&row);
        rows.push(row);
        Ok(())
    };
    eval(&agent, 0, &mut rows)?;

    let mut steps = 0;
    while steps < h.total_env_steps {
        let scenario = Scenario::sample(&mut scenario_rng, env_cfg.obstacle_probability);
        let schedule = if shadowed {
            EpisodeSchedule::sample(&mut scenario_rng, env_cfg.horizon)
        } else {
            EpisodeSchedule::EVAL
        };
        let mut env = ReachAvoidEnv::new(env_cfg.clone(), scenario);
        let mut obs = env.reset(scenario);
        stats.episodes += 1;

        loop {
            let decision: StepDecision = decide(mode, &obs, &agent, env.time(), schedule, Some(&mut noise_rng))?;
            if !decision.in_prefix() {
                stats.consulted_steps += 1;
                stats.agent_steps += usize::from(decision.chose_agent);
            }
            let step = env.step(decision.executed_action)?;
            if record_transition(
                mode,
                &decision,
                &obs,
                step.reward,
                &step.observation,
                step.terminated,
                &mut buffer,
            ) {
                stats.stored_transitions += 1;
            }
            obs = step.observation;
            steps += 1;

            if steps >= config.agent.warmup_steps && buffer.len() >= config.agent.batch_size {
                let batch = buffer.sample(&mut replay_rng, config.agent.batch_size)?;
                agent.update(&batch)?;
                stats.updates += 1;
            }
            if steps % h.eval_every == 0 {
                eval(&agent, steps, &mut rows)?;
            }
            if step.done() || steps >= h.total_env_steps {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        seed,
        rows,
        agent,
        stats,
    })
}

const CHECKPOINT_MAGIC: &str = "shadow-rl checkpoint v1";
const CONFIG_END: &str = "end config";

/// Resolved configuration followed by actor, critic and both targets.
pub fn checkpoint_to_string(config: &ExperimentConfig, agent: &DdpgAgent) -> Result<String> {
    let mut buf = Vec::new();
    {
        use std::io::Write;
        writeln!(buf, "{CHECKPOINT_MAGIC}")?;
        write!(buf, "{}", config.to_text())?;
        writeln!(buf, "{CONFIG_END}")?;
        agent.actor.write_checkpoint(&mut buf)?;
        agent.critic.write_checkpoint(&mut buf)?;
        agent.actor_target.write_checkpoint(&mut buf)?;
        agent.critic_target.write_checkpoint(&mut buf)?;
    }
    String::from_utf8(buf).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn parse_checkpoint(text: &str) -> Result<(ExperimentConfig, DdpgAgent)> {
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(Error::Checkpoint("missing checkpoint header".into()));
    }
    let mut config_text = String::new();
    loop {
        match lines.next() {
            Some(CONFIG_END) => break,
            Some(l) => {
                config_text.push_str(l);
                config_text.push('\n');
            }
            None => return Err(Error::Checkpoint("unterminated config section".into())),
        }
    }
    let config = ExperimentConfig::from_text(&config_text)?;
    let actor = MlpNet::read_checkpoint(&mut lines)?;
    let critic = MlpNet::read_checkpoint(&mut lines)?;
    let actor_target = MlpNet::read_checkpoint(&mut lines)?;
    let critic_target = MlpNet::read_checkpoint(&mut lines)?;
    let agent = DdpgAgent::from_networks(config.agent.clone(), actor, critic, actor_target, critic_target)?;
    config.mode().check_agent(&agent)?;
    Ok((config, agent))
}

pub fn save_checkpoint(path: &Path, config: &ExperimentConfig, agent: &DdpgAgent) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(config, agent)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ExperimentConfig, DdpgAgent)> {
    parse_checkpoint(&std::fs::read_to_string(path)?)
}

/// Critic ratio `Q(s, mu(s)) / Q(s, a_base)` for agent positions on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub resolution: usize,
    pub scenario: Scenario,
    /// Row-major, `values[row * resolution + col]`. Row 0 is the top of the
    /// arena (largest y), column 0 the left edge. `None` where the baseline
    /// value is too close to zero for a meaningful ratio.
    pub values: Vec<Option<f64>>,
}

pub const HEATMAP_DENOMINATOR_EPS: f64 = 1e-9;

impl Heatmap {
    /// Agent position at the center of a cell.
    pub fn cell_center(resolution: usize, row: usize, col: usize) -> Point2 {
        let h = (ARENA_HI - ARENA_LO) / resolution as f64;
        Point2::new(ARENA_LO + (col as f64 + 0.5) * h, ARENA_HI - (row as f64 + 0.5) * h)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.resolution + col]
    }

    /// First line `resolution scenario_record`, then one line per row;
    /// undefined cells are written as `nan`.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.resolution, self.scenario);
        for row in self.values.chunks(self.resolution) {
            let cells: Vec<String> = row
                .iter()
                .map(|v| match v {
                    Some(v) => format!("{v:.6}"),
                    None => "nan".to_string(),
                })
                .collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Heatmap> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty heatmap".into()))?;
        let (res, record) = header
            .split_once(' ')
            .ok_or_else(|| Error::Parse("heatmap header needs resolution and scenario".into()))?;
        let resolution: usize = res.parse().map_err(|e| Error::Parse(format!("resolution: {e}")))?;
        let scenario: Scenario = record.parse()?;
        let mut values = Vec::with_capacity(resolution * resolution);
        for line in lines.by_ref().take(resolution) {
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(match tok {
                    "nan" => None,
                    t => Some(t.parse::<f64>().map_err(|e| Error::Parse(format!("cell `{t}`: {e}")))?),
                });
            }
            if values.len() - before != resolution {
                return Err(Error::Parse(format!("heatmap row has {} cells", values.len() - before)));
            }
        }
        if values.len() != resolution * resolution {
            return Err(Error::Parse("heatmap has too few rows".into()));
        }
        Ok(Heatmap {
            resolution,
            scenario,
            values,
        })
    }

    /// Portable graymap of the ratio, clipped to `[0, 2]`; undefined cells are black.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.resolution, self.resolution);
        for row in self.values.chunks(self.resolution) {
            let px: Vec<String> = row
                .iter()
                .map(|v| match v {
                    Some(v) => ((v.clamp(0.0, 2.0) / 2.0) * 255.0).round().to_string(),
                    None => "0".to_string(),
                })
                .collect();
            s.push_str(&px.join(" "));
            s.push('\n');
        }
        s
    }
}

pub fn heatmap(mode: DecisionMode, agent: &DdpgAgent, scenario: &Scenario, resolution: usize) -> Result<Heatmap> {
    if mode != DecisionMode::QCompare {
        return Err(Error::Config(format!("heatmap needs a qcompare checkpoint, got {mode}")));
    }
    mode.check_agent(agent)?;
    if resolution == 0 {
        return Err(Error::Config("heatmap resolution must be positive".into()));
    }
    let mut values = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        for col in 0..resolution {
            let obs = scenario.observation_at(Heatmap::cell_center(resolution, row, col));
            let proposal = agent.greedy_action(&obs);
            let base = baseline_action(&obs);
            let q = agent.q_values(&obs, &[&proposal, &base])?;
            values.push(if q[1].abs() < HEATMAP_DENOMINATOR_EPS {
                None
            } else {
                Some(q[0] / q[1])
            });
        }
    }
    Ok(Heatmap {
        resolution,
        scenario: *scenario,
        values,
    })
}
