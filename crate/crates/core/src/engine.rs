//! Distributed Gradient Descent and its reference processes.
//!
//! Three processes advance in lockstep from zero:
//!
//! - the distributed iterates `w_{t,v}`, one per agent, mixed through the
//!   gossip matrix after (or before) each local gradient step;
//! - the population process `mu_t`, gradient descent on the true risk;
//! - the single-machine process `xi_t`, gradient descent on the pooled data,
//!   which coincides with the distributed process on a complete graph with
//!   uniform weights.
//!
//! The population/residual split accumulators from [`crate::diagnostics`]
//! are advanced in the same loop so every snapshot is consistent.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DecompositionRecord, PopCovAccumulators};
use crate::problem::{AgentData, SpectralProblem};
use crate::topology::GossipMatrix;
use crate::{Error, Result};

/// Iterate norm above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Step sizes `eta_s = eta * s^(-theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    eta: f64,
    theta: f64,
}

impl StepSchedule {
    pub fn new(eta: f64, theta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::validation(format!(
                "step size {eta} must be positive"
            )));
        }
        if !(0.0..=0.75).contains(&theta) {
            return Err(Error::validation(format!(
                "theta = {theta} not in [0, 3/4]"
            )));
        }
        Ok(StepSchedule { eta, theta })
    }

    pub fn constant(eta: f64) -> Result<Self> {
        Self::new(eta, 0.0)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Step used at iteration `s >= 1`.
    pub fn at(&self, s: usize) -> f64 {
        if self.theta == 0.0 {
            self.eta
        } else {
            self.eta * (s as f64).powf(-self.theta)
        }
    }

    /// `sum_{j <= t} eta_j`.
    pub fn cumulative(&self, t: usize) -> f64 {
        (1..=t).map(|s| self.at(s)).sum()
    }

    /// `eta * kappa^2 <= 1`; the largest step is the first one.
    pub fn is_contractive(&self, kappa_sq: f64) -> bool {
        self.eta * kappa_sq <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    /// Local gradient step, then neighbour averaging of the results.
    #[default]
    GossipAfterGradient,
    /// Neighbour averaging of the iterates, then a local gradient step at the
    /// agent's own iterate.
    GossipBeforeGradient,
}

impl ProtocolVariant {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolVariant::GossipAfterGradient => "gossip_after_gradient",
            ProtocolVariant::GossipBeforeGradient => "gossip_before_gradient",
        }
    }
}

/// Per-agent sufficient statistics for the empirical risk gradient
/// `T_x w - S_x^* y`.
#[derive(Debug, Clone)]
pub struct LocalStats {
    cov: Covariance,
    /// `(1/m) sum_i y_i x_i`.
    moment: DVector<f64>,
}

#[derive(Debug, Clone)]
enum Covariance {
    /// Every input has at most one nonzero coordinate.
    Diagonal(DVector<f64>),
    /// `(1/m) X^T X`, used when `m > d`.
    Dense(DMatrix<f64>),
    /// Raw inputs, used when `d >= m`: `T_x w = X^T (X w) / m`.
    Streaming(DMatrix<f64>),
}

impl LocalStats {
    pub fn from_data(data: &AgentData) -> Self {
        let (m, d) = (data.m(), data.d());
        let inv_m = 1.0 / m as f64;
        let moment = data.x.tr_mul(&data.y) * inv_m;
        let axis_aligned = data
            .x
            .row_iter()
            .all(|row| row.iter().filter(|&&v| v != 0.0).count() <= 1);
        let cov = if axis_aligned {
            let mut diag = DVector::zeros(d);
            for row in data.x.row_iter() {
                for (j, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        diag[j] += v * v;
                    }
                }
            }
            Covariance::Diagonal(diag * inv_m)
        } else if m > d {
            Covariance::Dense(data.x.tr_mul(&data.x) * inv_m)
        } else {
            Covariance::Streaming(data.x.clone() * inv_m.sqrt())
        };
        LocalStats { cov, moment }
    }

    pub fn d(&self) -> usize {
        self.moment.len()
    }

    /// `T_x w`.
    pub fn apply_covariance(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.cov {
            Covariance::Diagonal(diag) => diag.component_mul(w),
            Covariance::Dense(c) => c * w,
            Covariance::Streaming(x) => x.tr_mul(&(x * w)),
        }
    }

    /// `S_x^* y`.
    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    /// Gradient of the local empirical risk at `w`.
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        self.apply_covariance(w) - &self.moment
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    /// Index of the current iterates; starts at 1.
    pub t: usize,
    pub omega: Vec<DVector<f64>>,
    pub mu: DVector<f64>,
    pub xi: DVector<f64>,
    pub popcov: PopCovAccumulators,
}

impl TrainState {
    pub fn zeros(n: usize, d: usize) -> Self {
        TrainState {
            t: 1,
            omega: vec![DVector::zeros(d); n],
            mu: DVector::zeros(d),
            xi: DVector::zeros(d),
            popcov: PopCovAccumulators::zeros(n, d),
        }
    }

    /// State with prescribed agent iterates and all other processes at zero.
    /// Only meaningful for gossip experiments; the error decomposition
    /// assumes zero initialisation.
    pub fn with_initial_omega(omega: Vec<DVector<f64>>) -> Result<Self> {
        let d = omega
            .first()
            .map(DVector::len)
            .ok_or_else(|| Error::validation("no agents"))?;
        if omega.iter().any(|w| w.len() != d) {
            return Err(Error::validation("agent iterates differ in dimension"));
        }
        let n = omega.len();
        Ok(TrainState {
            omega,
            ..TrainState::zeros(n, d)
        })
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    /// Network average of the agent iterates.
    pub fn mean_omega(&self) -> DVector<f64> {
        let mut sum = DVector::zeros(self.mu.len());
        for w in &self.omega {
            sum += w;
        }
        sum / self.n() as f64
    }

    fn max_norm(&self) -> f64 {
        self.omega
            .iter()
            .chain([&self.mu, &self.xi])
            .map(|v| v.norm())
            .fold(0.0, |acc, x| {
                if x.is_nan() {
                    f64::INFINITY
                } else {
                    acc.max(x)
                }
            })
    }
}

/// Next agent iterates under `variant` at iteration `t`.
pub fn dgd_update(
    omega: &[DVector<f64>],
    t: usize,
    gossip: &GossipMatrix,
    stats: &[LocalStats],
    schedule: &StepSchedule,
    variant: ProtocolVariant,
) -> Vec<DVector<f64>> {
    let eta = schedule.at(t);
    match variant {
        ProtocolVariant::GossipAfterGradient => {
            let half: Vec<DVector<f64>> = omega
                .par_iter()
                .zip(stats.par_iter())
                .map(|(w, s)| w - s.gradient(w) * eta)
                .collect();
            (0..omega.len())
                .into_par_iter()
                .map(|v| mix_row(gossip, v, &half))
                .collect()
        }
        ProtocolVariant::GossipBeforeGradient => (0..omega.len())
            .into_par_iter()
            .map(|v| mix_row(gossip, v, omega) - stats[v].gradient(&omega[v]) * eta)
            .collect(),
    }
}

/// `sum_w P_vw a_w`, accumulated in ascending `w`.
fn mix_row(gossip: &GossipMatrix, v: usize, a: &[DVector<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(a[v].len());
    for &(w, p) in gossip.row_support(v) {
        out.axpy(p, &a[w], 1.0);
    }
    out
}

/// `mu - eta_t (T mu - T w*)`.
pub fn population_update(
    mu: &DVector<f64>,
    t: usize,
    problem: &SpectralProblem,
    schedule: &StepSchedule,
) -> DVector<f64> {
    let eta = schedule.at(t);
    let tau = problem.tau();
    let target = problem.target();
    DVector::from_fn(mu.len(), |i, _| mu[i] - eta * tau[i] * (mu[i] - target[i]))
}

/// Gradient step on the pooled empirical risk of all agents.
pub fn single_machine_update(
    xi: &DVector<f64>,
    t: usize,
    stats: &[LocalStats],
    schedule: &StepSchedule,
) -> DVector<f64> {
    let eta = schedule.at(t);
    let grads: Vec<DVector<f64>> = stats.par_iter().map(|s| s.gradient(xi)).collect();
    let mut pooled = DVector::zeros(xi.len());
    for g in &grads {
        pooled += g;
    }
    xi - pooled * (eta / stats.len() as f64)
}

/// One experiment's fixed inputs plus the evolving [`TrainState`].
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    problem: &'a SpectralProblem,
    gossip: &'a GossipMatrix,
    stats: Vec<LocalStats>,
    schedule: StepSchedule,
    variant: ProtocolVariant,
    state: TrainState,
}

impl<'a> Simulation<'a> {
    pub fn new(
        problem: &'a SpectralProblem,
        gossip: &'a GossipMatrix,
        data: &[AgentData],
        schedule: StepSchedule,
        variant: ProtocolVariant,
    ) -> Result<Self> {
        let state = TrainState::zeros(gossip.n(), problem.d());
        Self::with_state(problem, gossip, data, schedule, variant, state)
    }

    pub fn with_state(
        problem: &'a SpectralProblem,
        gossip: &'a GossipMatrix,
        data: &[AgentData],
        schedule: StepSchedule,
        variant: ProtocolVariant,
        state: TrainState,
    ) -> Result<Self> {
        let n = gossip.n();
        if data.len() != n {
            return Err(Error::validation(format!(
                "{} datasets for {n} agents",
                data.len()
            )));
        }
        if state.n() != n || state.mu.len() != problem.d() {
            return Err(Error::validation(
                "initial state does not match problem size",
            ));
        }
        for (v, agent) in data.iter().enumerate() {
            if agent.d() != problem.d() {
                return Err(Error::validation(format!(
                    "agent {v} has inputs of dimension {}, problem has {}",
                    agent.d(),
                    problem.d()
                )));
            }
        }
        let stats = data.iter().map(LocalStats::from_data).collect();
        Ok(Simulation {
            problem,
            gossip,
            stats,
            schedule,
            variant,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn stats(&self) -> &[LocalStats] {
        &self.stats
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    pub fn problem(&self) -> &SpectralProblem {
        self.problem
    }

    /// True when `eta * kappa^2 > 1`, in which case contraction of the
    /// empirical updates is not guaranteed.
    pub fn step_warning(&self) -> bool {
        !self.schedule.is_contractive(self.problem.kappa_sq())
    }

    /// Advances every process by one iteration.
    pub fn step(&mut self) -> Result<()> {
        let t = self.state.t;
        let eta = self.schedule.at(t);
        let noise: Vec<DVector<f64>> = self
            .stats
            .par_iter()
            .map(|s| diagnostics::local_noise(self.problem, s, &self.state.mu))
            .collect();
        diagnostics::popcov_recursion_step(
            &mut self.state.popcov,
            self.gossip,
            self.problem,
            &noise,
            eta,
        );
        self.state.omega = dgd_update(
            &self.state.omega,
            t,
            self.gossip,
            &self.stats,
            &self.schedule,
            self.variant,
        );
        self.state.mu = population_update(&self.state.mu, t, self.problem, &self.schedule);
        self.state.xi = single_machine_update(&self.state.xi, t, &self.stats, &self.schedule);
        self.state.t += 1;

        let norm = self.state.max_norm();
        if !(norm <= DIVERGENCE_THRESHOLD) {
            return Err(Error::Diverged {
                t: self.state.t,
                norm,
            });
        }
        Ok(())
    }

    pub fn excess_risks(&self) -> Vec<f64> {
        self.state
            .omega
            .iter()
            .map(|w| self.problem.rho_norm_sq_diff(w, self.problem.target()))
            .collect()
    }

    pub fn decompose(&self) -> DecompositionRecord {
        diagnostics::decompose(&self.state, self.problem)
    }

    pub fn record(&self) -> IterationRecord {
        IterationRecord {
            t: self.state.t,
            excess_risk: self.excess_risks(),
            decomposition: self.decompose(),
        }
    }
}

/// Snapshot emitted by [`run`].
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub t: usize,
    pub excess_risk: Vec<f64>,
    pub decomposition: DecompositionRecord,
}

impl IterationRecord {
    pub fn mean_risk(&self) -> f64 {
        self.excess_risk.iter().sum::<f64>() / self.excess_risk.len() as f64
    }

    pub fn max_risk(&self) -> f64 {
        self.excess_risk.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    /// Number of iterates, the initial one included; `iterations - 1`
    /// updates are performed.
    pub iterations: usize,
    pub stride: usize,
}

impl RunSpec {
    /// Stride capped so that about 200 records are produced.
    pub fn with_default_stride(iterations: usize) -> Self {
        RunSpec {
            iterations,
            stride: (iterations / 200).max(1),
        }
    }

    /// Iterates at multiples of the stride are recorded, plus the last one.
    pub fn records_at(&self, t: usize) -> bool {
        t.is_multiple_of(self.stride.max(1)) || t == self.iterations
    }
}

/// Divergence together with the records collected along the way; the last
/// record is the divergent state itself.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub records: Vec<IterationRecord>,
}

/// Runs `spec.iterations - 1` updates, recording snapshots along the way.
pub fn run(
    sim: &mut Simulation<'_>,
    spec: RunSpec,
) -> std::result::Result<Vec<IterationRecord>, RunFailure> {
    let mut records = Vec::new();
    if spec.iterations == 0 {
        return Ok(records);
    }
    if spec.records_at(sim.state().t) {
        records.push(sim.record());
    }
    while sim.state().t < spec.iterations {
        if let Err(error) = sim.step() {
            records.push(sim.record());
            return Err(RunFailure { error, records });
        }
        if spec.records_at(sim.state().t) {
            records.push(sim.record());
        }
    }
    Ok(records)
}
