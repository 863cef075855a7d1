use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{EtaSetting, ExperimentConfig};
use crate::engine::{self, IterationRecord, RunSpec, Simulation, StepSchedule};
use crate::problem::{make_problem, sample_agent_data, AgentData, SpectralProblem};
use crate::topology::{build_gossip_matrix, build_topology, chebyshev_accelerate, GossipMatrix};
use crate::tuning::{theorem1_tune, TuningPlan};
use crate::{seed, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Absolute slack used for the per-row decomposition inequality flag.
pub const BOUND_SLACK: f64 = 1e-9;

/// One CSV row: a recorded iteration of one replicate at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub topology: String,
    pub weight_scheme: String,
    pub n: usize,
    pub m: usize,
    pub replicate: usize,
    pub seed: u64,
    pub t: usize,
    pub is_final: bool,
    pub status: String,
    pub diverged_at: Option<usize>,
    pub risk_mean: f64,
    pub risk_max: f64,
    pub bias_sq: f64,
    pub sample_var: f64,
    pub network_err_mean: f64,
    pub network_err_max: f64,
    pub consensus_err: f64,
    pub popcov_err_mean: f64,
    pub residual_err_mean: f64,
    pub bound_ok: bool,
    pub sigma2: f64,
    pub eta: f64,
    pub t_stop: Option<usize>,
    pub regime: Option<String>,
    pub t_star: Option<usize>,
}

/// Outcome of a single replicate.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub n: usize,
    pub m: usize,
    pub replicate: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub eta: f64,
    pub plan: Option<TuningPlan>,
    pub records: Vec<IterationRecord>,
    /// Iteration and iterate norm at which the run blew up.
    pub divergence: Option<(usize, f64)>,
}

impl RunResult {
    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn max(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl ExperimentOutput {
    pub fn rows(&self) -> Vec<RunRecord> {
        let topology = self.config.topology.kind.name();
        let scheme = self.config.topology.weight_scheme.name();
        let mut rows = Vec::new();
        for run in &self.runs {
            let last = run.records.len().saturating_sub(1);
            for (i, rec) in run.records.iter().enumerate() {
                let dec = &rec.decomposition;
                rows.push(RunRecord {
                    topology: topology.to_string(),
                    weight_scheme: scheme.to_string(),
                    n: run.n,
                    m: run.m,
                    replicate: run.replicate,
                    seed: run.seed,
                    t: rec.t,
                    is_final: i == last,
                    status: if run.divergence.is_some() {
                        "diverged"
                    } else {
                        "ok"
                    }
                    .to_string(),
                    diverged_at: run.divergence.map(|(t, _)| t),
                    risk_mean: rec.mean_risk(),
                    risk_max: rec.max_risk(),
                    bias_sq: dec.bias_sq,
                    sample_var: dec.sample_var,
                    network_err_mean: mean(&dec.network_err),
                    network_err_max: max(&dec.network_err),
                    consensus_err: dec.consensus_err,
                    popcov_err_mean: mean(&dec.popcov_err),
                    residual_err_mean: mean(&dec.residual_err),
                    bound_ok: dec.decomposition_bound_holds(&rec.excess_risk, BOUND_SLACK),
                    sigma2: run.sigma2,
                    eta: run.eta,
                    t_stop: run.plan.as_ref().map(|p| p.t_stop),
                    regime: run.plan.as_ref().map(|p| p.regime.name().to_string()),
                    t_star: run.plan.as_ref().map(|p| p.t_star),
                });
            }
        }
        rows
    }

    /// Comment block with the schema version and the config, then one row
    /// per recorded iteration.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema_version = {SCHEMA_VERSION}")?;
        for line in self.config.to_toml_string().lines() {
            if line.is_empty() {
                writeln!(out, "#")?;
            } else {
                writeln!(out, "# {line}")?;
            }
        }
        let mut writer = csv::Writer::from_writer(out);
        for row in self.rows() {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

struct Point {
    n: usize,
    m: usize,
    gossip_index: usize,
    plan: Option<TuningPlan>,
    eta: f64,
    iterations: usize,
}

fn build_gossip(cfg: &ExperimentConfig, n: usize) -> Result<GossipMatrix> {
    let graph = build_topology(&cfg.topology_for(n, cfg.run.seed)?)?;
    let p = build_gossip_matrix(&graph, cfg.topology.weight_scheme)?;
    match cfg.topology.accelerate {
        Some(k) => chebyshev_accelerate(&p, k),
        None => Ok(p),
    }
}

fn plan_point(
    cfg: &ExperimentConfig,
    problem: &SpectralProblem,
    n: usize,
    m: usize,
    sigma2: f64,
) -> Result<(Option<TuningPlan>, f64, usize)> {
    let tuned = theorem1_tune(
        n,
        m,
        problem.r(),
        problem.gamma(),
        sigma2,
        problem.kappa_sq(),
    );
    let s = &cfg.schedule;
    let (plan, eta, base) = match s.eta {
        EtaSetting::Rule(_) => {
            let plan = tuned?;
            let base = s.iterations.unwrap_or(plan.t_stop + 1);
            let eta = plan.eta;
            (Some(plan), eta, base)
        }
        EtaSetting::Fixed(eta) => {
            let base = s.iterations.or(s.t_max).unwrap_or(1);
            (tuned.ok(), eta, base)
        }
    };
    let iterations = s.t_max.map_or(base, |cap| base.min(cap));
    Ok((plan, eta, iterations))
}

fn run_one(
    cfg: &ExperimentConfig,
    problem: &SpectralProblem,
    gossip: &GossipMatrix,
    point: &Point,
    replicate: usize,
) -> Result<RunResult> {
    let run_seed = seed::run_seed(cfg.run.seed, point.n, point.m, replicate);
    let data: Vec<AgentData> = (0..point.n)
        .map(|v| sample_agent_data(problem, point.m, v, run_seed))
        .collect::<Result<_>>()?;
    let schedule = StepSchedule::new(point.eta, cfg.schedule.theta)?;
    let mut sim = Simulation::new(problem, gossip, &data, schedule, cfg.run.protocol)?;
    let spec = RunSpec {
        iterations: point.iterations,
        stride: cfg
            .schedule
            .stride
            .unwrap_or_else(|| RunSpec::with_default_stride(point.iterations).stride),
    };
    let (records, divergence) = match engine::run(&mut sim, spec) {
        Ok(records) => (records, None),
        Err(failure) => match failure.error {
            Error::Diverged { t, norm } => (failure.records, Some((t, norm))),
            other => return Err(other),
        },
    };
    Ok(RunResult {
        n: point.n,
        m: point.m,
        replicate,
        seed: run_seed,
        sigma2: gossip.sigma2(),
        eta: point.eta,
        plan: point.plan.clone(),
        records,
        divergence,
    })
}

/// Runs every sweep point and replicate. Results come back in sweep order
/// (n outer, m inner, then replicate) whatever the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let work = || -> Result<Vec<RunResult>> {
        let problem = make_problem(cfg.problem)?;
        let gossips: Vec<GossipMatrix> = cfg
            .sweep
            .n
            .iter()
            .map(|&n| build_gossip(cfg, n))
            .collect::<Result<_>>()?;
        let mut points = Vec::new();
        for (gossip_index, &n) in cfg.sweep.n.iter().enumerate() {
            for &m in &cfg.sweep.m {
                let (plan, eta, iterations) =
                    plan_point(cfg, &problem, n, m, gossips[gossip_index].sigma2())?;
                points.push(Point {
                    n,
                    m,
                    gossip_index,
                    plan,
                    eta,
                    iterations,
                });
            }
        }
        let jobs: Vec<(&Point, usize)> = points
            .iter()
            .flat_map(|p| (0..cfg.run.replicates).map(move |r| (p, r)))
            .collect();
        jobs.par_iter()
            .map(|&(point, rep)| run_one(cfg, &problem, &gossips[point.gossip_index], point, rep))
            .collect()
    };
    let runs = match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(ExperimentOutput {
        config: cfg.clone(),
        runs,
    })
}

/// Builds the gossip matrix for every `n` in the sweep.
pub fn sweep_spectra(cfg: &ExperimentConfig) -> Result<Vec<(usize, GossipMatrix)>> {
    cfg.sweep
        .n
        .iter()
        .map(|&n| Ok((n, build_gossip(cfg, n)?)))
        .collect()
}
