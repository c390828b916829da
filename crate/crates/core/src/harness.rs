//! Reproducible experiments: a config, independent seeded replicas, CSV
//! traces and JSON sidecars.
//!
//! Replica `run` of an experiment draws from `ChaCha8Rng::seed_from_u64(seed)`
//! on stream `run`, so every agent in the experiment sees the same sample
//! stream for a given run index.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{self, AgentKind, AgentParams, AgentState, StepContext, TrajectorySampler};
use crate::bellman;
use crate::envs::{self, EnvSpec, SamplingMode};
use crate::error::{Error, Result};
use crate::eta::{self, EtaReport};
use crate::exec::Exec;
use crate::linalg;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance and iteration cap used when an experiment computes `theta_e`.
pub const REFERENCE_TOL: f64 = 1e-12;
pub const REFERENCE_MAX_ITER: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Environment name as accepted by [`envs::by_name`].
    pub env: String,
    pub agents: Vec<AgentParams>,
    pub steps: u64,
    pub runs: usize,
    pub seed: u64,
    /// Trace stride; step 0 and the final step are always recorded.
    pub record_every: u64,
    /// Overrides the environment's default sampling mode.
    pub mode: Option<SamplingMode>,
    /// Half-width of uniform reward noise.
    pub reward_noise: f64,
    /// `eta` at which `theta_e` is computed for `dist_to_theta_e`; defaults
    /// to the first regq agent's `eta`.
    pub reference_eta: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(env: &str, agents: Vec<AgentParams>, steps: u64, runs: usize, seed: u64) -> Self {
        Self {
            env: env.to_string(),
            agents,
            steps,
            runs,
            seed,
            record_every: 100,
            mode: None,
            reward_noise: 0.0,
            reference_eta: None,
        }
    }

    /// Key-sorted compact JSON.
    pub fn canonical_json(&self) -> String {
        // serde_json's default map is a BTreeMap, so going through Value sorts keys.
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn reference_eta(&self) -> Option<f64> {
        self.reference_eta
            .or_else(|| self.agents.iter().find(|a| a.kind == AgentKind::Regq).map(|a| a.eta))
    }

    /// File stems, one per agent: the agent name, suffixed with its index
    /// when the same kind appears twice.
    pub fn agent_stems(&self) -> Vec<String> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let dup = self.agents.iter().filter(|b| b.kind == a.kind).count() > 1;
                if dup {
                    format!("{}-{i}", a.kind)
                } else {
                    a.kind.to_string()
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    /// Euclidean norm of theta.
    pub norm_theta: f64,
    /// `|theta - theta_e|_inf`.
    pub dist_to_theta_e: Option<f64>,
    pub diverged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub agent: usize,
    pub run: usize,
    pub rows: Vec<TraceRow>,
    pub final_theta: Vec<f64>,
    /// Largest `|theta|_inf` seen at any step.
    pub max_abs_theta: f64,
    pub diverged_at: Option<u64>,
    pub episodes: u64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config_hash: String,
    pub theta_e: Option<Vec<f64>>,
    pub thresholds: Option<EtaReport>,
    /// Sorted by (agent, run).
    pub results: Vec<RunResult>,
}

impl ExperimentOutput {
    pub fn runs_of(&self, agent: usize) -> impl Iterator<Item = &RunResult> {
        self.results.iter().filter(move |r| r.agent == agent)
    }

    /// Per-step mean of `norm_theta` over the runs of `agent`.
    pub fn mean_norm_trace(&self, agent: usize) -> Vec<(u64, f64)> {
        aggregate(&self.runs_of(agent).collect::<Vec<_>>())
            .into_iter()
            .map(|a| (a.step, a.mean_norm))
            .collect()
    }
}

/// `theta_e` and the threshold report at `eta`, when the instance admits them.
pub fn reference_solution(env: &EnvSpec, eta: f64, exec: Exec) -> (Option<Vec<f64>>, Option<EtaReport>) {
    let Ok(ops) = bellman::build_operators(&env.mdp, &env.features) else {
        return (None, None);
    };
    let theta_e = bellman::solve_fixed_point(&ops, eta, REFERENCE_TOL, REFERENCE_MAX_ITER)
        .ok()
        .map(|s| s.theta_e);
    (theta_e, Some(eta::report(&env.mdp, &ops, Some(eta), exec)))
}

fn record(state: &AgentState, theta_e: Option<&DVector<f64>>) -> TraceRow {
    TraceRow {
        step: state.step_count,
        norm_theta: state.theta.norm(),
        dist_to_theta_e: theta_e.map(|t| linalg::vec_inf_norm(&(&state.theta - t))),
        diverged: state.diverged,
    }
}

/// One replica of one agent.
pub fn run_single(
    env: &EnvSpec,
    config: &ExperimentConfig,
    agent: usize,
    run: usize,
    theta_e: Option<&DVector<f64>>,
) -> RunResult {
    let params = &config.agents[agent];
    let fmap = env.features_for(params.kind);
    let ctx = StepContext::new(&env.mdp, &fmap);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run as u64);
    let mode = config.mode.unwrap_or(env.sampling);
    let mut sampler = (mode == SamplingMode::Trajectory).then(|| TrajectorySampler::new(env, &mut rng));
    let mut state = AgentState::new(params.kind, env.init_theta.clone(), config.seed);
    let stride = config.record_every.max(1);

    let mut rows = vec![record(&state, theta_e)];
    let mut max_abs = linalg::vec_inf_norm(&state.theta);
    let mut diverged_at = None;
    for k in 1..=config.steps {
        let sample = match sampler.as_mut() {
            Some(s) => s.next(env, &mut rng, config.reward_noise),
            None => agents::sample_iid(&env.mdp, &mut rng, config.reward_noise),
        };
        let was_diverged = state.diverged;
        agents::agent_step(&ctx, &mut state, &sample, params);
        state.step_count = k;
        if !was_diverged {
            max_abs = max_abs.max(linalg::vec_inf_norm(&state.theta));
            if state.diverged {
                diverged_at = Some(k);
            }
        }
        if k % stride == 0 || k == config.steps {
            rows.push(record(&state, theta_e));
        }
    }
    RunResult {
        agent,
        run,
        rows,
        final_theta: state.theta.iter().copied().collect(),
        max_abs_theta: max_abs,
        diverged_at,
        episodes: sampler.map_or(0, |s| s.episodes()),
    }
}

/// Runs every (agent, run) pair, in parallel when `exec` allows.
pub fn run_experiment(config: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    let env = envs::by_name(&config.env)?;
    run_experiment_on(&env, config, exec)
}

pub fn run_experiment_on(env: &EnvSpec, config: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    let (theta_e, thresholds) = match config.reference_eta() {
        Some(eta) => reference_solution(env, eta, exec),
        None => (None, None),
    };
    let theta_vec = theta_e.as_ref().map(|t| DVector::from_column_slice(t));
    let jobs = config.agents.len() * config.runs;
    let results = exec.map(jobs, |i| run_single(env, config, i / config.runs, i % config.runs, theta_vec.as_ref()));
    Ok(ExperimentOutput { config_hash: config.hash(), theta_e, thresholds, results })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub step: u64,
    pub mean_norm: f64,
    pub median_norm: f64,
    pub mean_dist: Option<f64>,
    pub median_dist: Option<f64>,
    pub diverged_fraction: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-step mean and median across runs. All runs share the record steps.
pub fn aggregate(runs: &[&RunResult]) -> Vec<AggregateRow> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    (0..first.rows.len())
        .map(|i| {
            let mut norms: Vec<f64> = runs.iter().map(|r| r.rows[i].norm_theta).collect();
            let mut dists: Vec<f64> = runs.iter().filter_map(|r| r.rows[i].dist_to_theta_e).collect();
            let n = runs.len() as f64;
            let mean_norm = norms.iter().sum::<f64>() / n;
            let has_dist = dists.len() == runs.len();
            let mean_dist = has_dist.then(|| dists.iter().sum::<f64>() / n);
            AggregateRow {
                step: first.rows[i].step,
                mean_norm,
                median_norm: median(&mut norms),
                mean_dist,
                median_dist: has_dist.then(|| median(&mut dists)),
                diverged_fraction: runs.iter().filter(|r| r.rows[i].diverged).count() as f64 / n,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct Sidecar<'a> {
    version: &'a str,
    config_hash: &'a str,
    seed: u64,
    agent: &'a AgentParams,
    config: &'a ExperimentConfig,
    theta_e: &'a Option<Vec<f64>>,
    thresholds: &'a Option<EtaReport>,
    files: BTreeMap<&'static str, String>,
}

/// Writes `<stem>.csv`, `<stem>_aggregate.csv` and `<stem>.json` per agent
/// and returns the written paths.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, output: &ExperimentOutput) -> Result<Vec<PathBuf>> {
    write_outputs_as(dir, &config.agent_stems(), config, output)
}

/// [`write_outputs`] with caller-chosen stems, one per agent.
pub fn write_outputs_as(
    dir: &Path,
    stems: &[String],
    config: &ExperimentConfig,
    output: &ExperimentOutput,
) -> Result<Vec<PathBuf>> {
    if stems.len() != config.agents.len() {
        return Err(Error::InvalidInput(format!("{} stems for {} agents", stems.len(), config.agents.len())));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (agent, stem) in stems.iter().enumerate() {
        let runs: Vec<&RunResult> = output.runs_of(agent).collect();

        let trace_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&trace_path)?;
        w.write_record(["run", "step", "norm_theta", "dist_to_theta_e", "diverged"])?;
        for r in &runs {
            for row in &r.rows {
                w.write_record([
                    r.run.to_string(),
                    row.step.to_string(),
                    row.norm_theta.to_string(),
                    opt(row.dist_to_theta_e),
                    u8::from(row.diverged).to_string(),
                ])?;
            }
        }
        w.flush()?;

        let agg_path = dir.join(format!("{stem}_aggregate.csv"));
        let mut w = csv::Writer::from_path(&agg_path)?;
        w.write_record(["step", "mean_norm_theta", "median_norm_theta", "mean_dist", "median_dist", "diverged_fraction"])?;
        for a in aggregate(&runs) {
            w.write_record([
                a.step.to_string(),
                a.mean_norm.to_string(),
                a.median_norm.to_string(),
                opt(a.mean_dist),
                opt(a.median_dist),
                a.diverged_fraction.to_string(),
            ])?;
        }
        w.flush()?;

        let sidecar_path = dir.join(format!("{stem}.json"));
        let mut files = BTreeMap::new();
        files.insert("trace", format!("{stem}.csv"));
        files.insert("aggregate", format!("{stem}_aggregate.csv"));
        let sidecar = Sidecar {
            version: VERSION,
            config_hash: &output.config_hash,
            seed: config.seed,
            agent: &config.agents[agent],
            config,
            theta_e: &output.theta_e,
            thresholds: &output.thresholds,
            files,
        };
        fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
        written.extend([trace_path, agg_path, sidecar_path]);
    }
    Ok(written)
}

/// Re-reads the config embedded in a sidecar.
pub fn config_from_sidecar(path: &Path) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(serde_json::from_value(value["config"].clone())?)
}
