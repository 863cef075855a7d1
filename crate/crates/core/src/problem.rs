//! Synthetic regression problems in a truncated spectral model.
//!
//! Inputs live in `R^d` with population covariance `T = diag(tau)`,
//! `tau_i = i^(-1/gamma)`. The target `w*` saturates the source condition
//! `sum_i (tau_i^(1/2) w*_i)^2 tau_i^(-2r) <= R^2` with equality, and the
//! excess risk of any `w` is the closed form `sum_i tau_i (w_i - w*_i)^2`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const CAPACITY_GRID_POINTS: usize = 64;

/// How inputs are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// `J` uniform on `1..=d`, `x = sqrt(d tau_J) e_J`. Bounded by `d tau_1`.
    Coordinate,
    /// `J` drawn with probability `tau_J / tr(T)`, `x = sqrt(tr(T)) e_J`.
    /// Every sample has `<x, x> = tr(T)`, the smallest possible bound.
    #[default]
    WeightedCoordinate,
    /// `x ~ N(0, T)`. Unbounded, so no moment certificate is issued.
    Gaussian,
}

impl Sampler {
    pub fn name(self) -> &'static str {
        match self {
            Sampler::Coordinate => "coordinate",
            Sampler::WeightedCoordinate => "weighted_coordinate",
            Sampler::Gaussian => "gaussian",
        }
    }

    /// Whether `<x, x> <= kappa^2` holds for every draw.
    pub fn is_bounded(self) -> bool {
        !matches!(self, Sampler::Gaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub d: usize,
    pub gamma: f64,
    pub r: f64,
    pub source_norm: f64,
    pub noise_sigma: f64,
    #[serde(default)]
    pub sampler: Sampler,
}

#[derive(Debug, Clone)]
pub struct SpectralProblem {
    params: ProblemParams,
    tau: DVector<f64>,
    target: DVector<f64>,
    kappa_sq: f64,
    capacity_constant: f64,
}

/// `(M, nu)` such that `E[y^(2l) | x] <= nu l! M^l` for every `l >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCertificate {
    pub m_scale: f64,
    pub nu: f64,
}

pub fn make_problem(params: ProblemParams) -> Result<SpectralProblem> {
    let ProblemParams {
        d,
        gamma,
        r,
        source_norm,
        noise_sigma,
        sampler,
    } = params;
    if d == 0 {
        return Err(Error::validation("dimension d must be at least 1"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::validation(format!("gamma = {gamma} not in (0, 1]")));
    }
    if !(r >= 0.5) {
        return Err(Error::validation(format!(
            "r = {r} < 1/2: only attainable targets are supported"
        )));
    }
    if !(source_norm > 0.0) {
        return Err(Error::validation("source norm R must be positive"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::validation("noise_sigma must be nonnegative"));
    }

    let tau = DVector::from_fn(d, |i, _| ((i + 1) as f64).powf(-1.0 / gamma));
    let scale = source_norm / (d as f64).sqrt();
    let target = tau.map(|t| scale * t.powf(r - 0.5));
    let kappa_sq = match sampler {
        Sampler::Coordinate => d as f64 * tau[0],
        Sampler::WeightedCoordinate | Sampler::Gaussian => tau.sum(),
    };

    let mut problem = SpectralProblem {
        params,
        tau,
        target,
        kappa_sq,
        capacity_constant: 0.0,
    };
    let source = problem.source_sum();
    let want = source_norm * source_norm;
    if (source - want).abs() > 1e-10 * want {
        return Err(Error::Construction(format!(
            "source certificate failed: sum {source} vs R^2 {want}"
        )));
    }
    problem.capacity_constant = problem.fit_capacity_constant(CAPACITY_GRID_POINTS);
    Ok(problem)
}

impl SpectralProblem {
    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn r(&self) -> f64 {
        self.params.r
    }

    pub fn source_norm(&self) -> f64 {
        self.params.source_norm
    }

    pub fn noise_sigma(&self) -> f64 {
        self.params.noise_sigma
    }

    pub fn sampler(&self) -> Sampler {
        self.params.sampler
    }

    /// Population covariance eigenvalues, non-increasing.
    pub fn tau(&self) -> &DVector<f64> {
        &self.tau
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn kappa_sq(&self) -> f64 {
        self.kappa_sq
    }

    /// Fitted `c_gamma` over the default log-spaced grid.
    pub fn capacity_constant(&self) -> f64 {
        self.capacity_constant
    }

    /// `sum_i (tau_i^(1/2) w*_i)^2 tau_i^(-2r)`.
    pub fn source_sum(&self) -> f64 {
        let r = self.params.r;
        self.tau
            .iter()
            .zip(self.target.iter())
            .map(|(&t, &w)| t * w * w * t.powf(-2.0 * r))
            .sum()
    }

    /// `T w`.
    pub fn apply_covariance(&self, w: &DVector<f64>) -> DVector<f64> {
        self.tau.component_mul(w)
    }

    /// `sum_i tau_i (w_i - w*_i)^2`.
    pub fn excess_risk(&self, omega: &DVector<f64>) -> Result<f64> {
        if omega.len() != self.d() {
            return Err(Error::validation(format!(
                "omega has dimension {}, problem has {}",
                omega.len(),
                self.d()
            )));
        }
        Ok(self.rho_norm_sq_diff(omega, &self.target))
    }

    /// `||T^(1/2) (a - b)||^2`.
    pub fn rho_norm_sq_diff(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.tau
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(&t, (&x, &y))| t * (x - y) * (x - y))
            .sum()
    }

    /// `||T^(1/2) a||^2`.
    pub fn rho_norm_sq(&self, a: &DVector<f64>) -> f64 {
        self.tau
            .iter()
            .zip(a.iter())
            .map(|(&t, &x)| t * x * x)
            .sum()
    }

    /// `tr(T (T + lambda I)^-1) = sum_i tau_i / (tau_i + lambda)`.
    pub fn effective_dimension(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::validation(format!(
                "lambda = {lambda} must be positive"
            )));
        }
        Ok(self.tau.iter().map(|&t| t / (t + lambda)).sum())
    }

    /// Smallest `c` with `N(lambda) <= c lambda^(-gamma)` on `points`
    /// log-spaced values of `lambda` in `[tau_d, tau_1]`.
    pub fn fit_capacity_constant(&self, points: usize) -> f64 {
        let gamma = self.params.gamma;
        capacity_grid(self.tau[self.d() - 1], self.tau[0], points)
            .into_iter()
            .map(|lambda| {
                let n_eff: f64 = self.tau.iter().map(|&t| t / (t + lambda)).sum();
                n_eff * lambda.powf(gamma)
            })
            .fold(0.0, f64::max)
    }

    /// `max_x |<w*, x>|` over the support of the sampler, when bounded.
    pub fn signal_bound(&self) -> Option<f64> {
        let d = self.d() as f64;
        match self.params.sampler {
            Sampler::Coordinate => Some(
                self.tau
                    .iter()
                    .zip(self.target.iter())
                    .map(|(&t, &w)| (d * t).sqrt() * w.abs())
                    .fold(0.0, f64::max),
            ),
            Sampler::WeightedCoordinate => {
                Some(self.kappa_sq.sqrt() * self.target.iter().fold(0.0_f64, |a, w| a.max(w.abs())))
            }
            Sampler::Gaussian => None,
        }
    }

    /// Moment certificate for bounded signal plus Gaussian noise.
    ///
    /// With `|a| <= B` and `e ~ N(0, s^2)`,
    /// `E(a + e)^(2l) <= 2^(2l-1) (B^(2l) + s^(2l) (2l-1)!!)` and
    /// `(2l-1)!! <= 2^l l!`, so `M = max(4 B^2, 8 s^2)` and `nu = 2` suffice.
    pub fn moment_certificate(&self) -> Option<MomentCertificate> {
        let b = self.signal_bound()?;
        let s = self.params.noise_sigma;
        let m_scale = (4.0 * b * b).max(8.0 * s * s).max(f64::MIN_POSITIVE);
        Some(MomentCertificate { m_scale, nu: 2.0 })
    }

    pub fn is_certified(&self) -> bool {
        self.params.sampler.is_bounded()
    }
}

fn capacity_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 || lo >= hi {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// One agent's local dataset: `m` rows of inputs and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentData {
    pub agent_id: usize,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl AgentData {
    pub fn new(agent_id: usize, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::validation("agent data needs at least one sample"));
        }
        if x.nrows() != y.len() {
            return Err(Error::validation(format!(
                "{} input rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        Ok(AgentData { agent_id, x, y })
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

/// Draws `m` samples for `agent_id`.
///
/// Each agent gets its own ChaCha stream keyed by `(seed, agent_id)`, so
/// datasets do not depend on the order in which agents are sampled.
pub fn sample_agent_data(
    problem: &SpectralProblem,
    m: usize,
    agent_id: usize,
    seed: u64,
) -> Result<AgentData> {
    if m == 0 {
        return Err(Error::validation("m must be at least 1"));
    }
    let d = problem.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent_id as u64);

    let mut x = DMatrix::<f64>::zeros(m, d);
    match problem.sampler() {
        Sampler::Coordinate => {
            for i in 0..m {
                let j = rng.random_range(0..d);
                x[(i, j)] = (d as f64 * problem.tau[j]).sqrt();
            }
        }
        Sampler::WeightedCoordinate => {
            let index = WeightedIndex::new(problem.tau.iter().copied())
                .map_err(|e| Error::Construction(e.to_string()))?;
            let norm = problem.kappa_sq.sqrt();
            for i in 0..m {
                x[(i, index.sample(&mut rng))] = norm;
            }
        }
        Sampler::Gaussian => {
            for i in 0..m {
                for j in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    x[(i, j)] = problem.tau[j].sqrt() * z;
                }
            }
        }
    }
    let sigma = problem.noise_sigma();
    let y = DVector::from_fn(m, |i, _| {
        let signal = x.row(i).transpose().dot(&problem.target);
        let noise: f64 = rng.sample(StandardNormal);
        signal + sigma * noise
    });
    AgentData::new(agent_id, x, y)
}

/// Writes `agent_id,sample,x0..x{d-1},y` rows for every dataset.
pub fn write_datasets_csv<W: Write>(data: &[AgentData], mut out: W) -> std::io::Result<()> {
    let d = data.first().map_or(0, AgentData::d);
    let mut header = vec!["agent_id".to_string(), "sample".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    header.push("y".to_string());
    writeln!(out, "{}", header.join(","))?;
    for agent in data {
        for i in 0..agent.m() {
            let mut fields = vec![agent.agent_id.to_string(), i.to_string()];
            fields.extend(agent.x.row(i).iter().map(|v| v.to_string()));
            fields.push(agent.y[i].to_string());
            writeln!(out, "{}", fields.join(","))?;
        }
    }
    Ok(())
}
