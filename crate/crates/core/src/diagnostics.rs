//! Error decomposition of the distributed iterates.
//!
//! For every agent `v` the excess risk is bounded by
//! `2 bias^2 + 4 sample_var + 4 network_err_v`, where the bias compares the
//! population process with the target, the sample variance compares the
//! single-machine process with the population process, and the network error
//! compares agent `v` with the single-machine process.
//!
//! The network deviation `w_{t,v} - xi_t` unrolls into a sum over node paths
//! of local sampling noise `N_{k,w}` weighted by `P_{path} - n^-(len)`. Keeping
//! the population covariance in the path products gives the population
//! covariance part, which obeys a cheap linear recursion; the rest is the
//! residual empirical covariance part. [`bruteforce_network_error`]
//! enumerates the paths explicitly and serves as an oracle on tiny instances.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::engine::{LocalStats, StepSchedule, TrainState};
use crate::problem::{AgentData, SpectralProblem};
use crate::topology::GossipMatrix;
use crate::{Error, Result};

/// Largest instance the path enumeration accepts.
pub const BRUTEFORCE_MAX_NODES: usize = 3;
pub const BRUTEFORCE_MAX_T: usize = 5;

/// Recursion state for the population covariance part of the network error.
///
/// `u_{t+1,v} = sum_w P_vw [(I - eta_t T) u_{t,w} + eta_t N_{t,w}]` and
/// `ubar_{t+1} = (I - eta_t T) ubar_t + eta_t mean_w N_{t,w}`; the population
/// covariance vector of agent `v` is `u_{t,v} - ubar_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopCovAccumulators {
    pub u: Vec<DVector<f64>>,
    pub ubar: DVector<f64>,
}

impl PopCovAccumulators {
    pub fn zeros(n: usize, d: usize) -> Self {
        PopCovAccumulators {
            u: vec![DVector::zeros(d); n],
            ubar: DVector::zeros(d),
        }
    }
}

/// `N_{k,v} = (T mu_k - T w*) - (T_{x_v} mu_k - S_{x_v}^* y_v)`.
pub fn local_noise(
    problem: &SpectralProblem,
    stats: &LocalStats,
    mu: &DVector<f64>,
) -> DVector<f64> {
    let population = problem.apply_covariance(&(mu - problem.target()));
    population - stats.gradient(mu)
}

pub fn popcov_recursion_step(
    acc: &mut PopCovAccumulators,
    gossip: &GossipMatrix,
    problem: &SpectralProblem,
    noise: &[DVector<f64>],
    eta: f64,
) {
    let n = acc.u.len();
    let contract = |x: &DVector<f64>| x - problem.apply_covariance(x) * eta;
    let pre: Vec<DVector<f64>> = acc
        .u
        .iter()
        .zip(noise)
        .map(|(u, noise)| contract(u) + noise * eta)
        .collect();
    let mut mean_noise = DVector::zeros(acc.ubar.len());
    for noise in noise {
        mean_noise += noise;
    }
    mean_noise /= n as f64;
    acc.ubar = contract(&acc.ubar) + mean_noise * eta;
    acc.u = (0..n)
        .map(|v| {
            let mut out = DVector::zeros(acc.ubar.len());
            for &(w, p) in gossip.row_support(v) {
                out.axpy(p, &pre[w], 1.0);
            }
            out
        })
        .collect();
}

/// Per-iteration error decomposition. Squared quantities are in the
/// `||T^(1/2) .||^2` norm; the consensus error is Euclidean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRecord {
    pub t: usize,
    pub bias_sq: f64,
    pub sample_var: f64,
    pub network_err: Vec<f64>,
    pub consensus_err: f64,
    pub popcov_err: Vec<f64>,
    pub residual_err: Vec<f64>,
}

impl DecompositionRecord {
    /// `2 bias^2 + 4 sample_var + 4 network_err_v` for each agent.
    pub fn decomposition_bound(&self) -> Vec<f64> {
        self.network_err
            .iter()
            .map(|ne| 2.0 * self.bias_sq + 4.0 * self.sample_var + 4.0 * ne)
            .collect()
    }

    /// Whether each agent's excess risk is within `slack` of its bound.
    pub fn decomposition_bound_holds(&self, excess_risk: &[f64], slack: f64) -> bool {
        excess_risk
            .iter()
            .zip(self.decomposition_bound())
            .all(|(risk, bound)| *risk <= bound + slack)
    }
}

/// Deviation of each agent from the single-machine iterate and its split.
#[derive(Debug, Clone)]
pub struct SplitVectors {
    pub deviation: Vec<DVector<f64>>,
    pub popcov: Vec<DVector<f64>>,
    pub residual: Vec<DVector<f64>>,
}

pub fn split_vectors(state: &TrainState) -> SplitVectors {
    let deviation: Vec<DVector<f64>> = state.omega.iter().map(|w| w - &state.xi).collect();
    let popcov: Vec<DVector<f64>> = state
        .popcov
        .u
        .iter()
        .map(|u| u - &state.popcov.ubar)
        .collect();
    let residual = deviation
        .iter()
        .zip(&popcov)
        .map(|(dev, pc)| dev - pc)
        .collect();
    SplitVectors {
        deviation,
        popcov,
        residual,
    }
}

pub fn decompose(state: &TrainState, problem: &SpectralProblem) -> DecompositionRecord {
    let split = split_vectors(state);
    let mean = state.mean_omega();
    let consensus_err = state
        .omega
        .iter()
        .map(|w| (w - &mean).norm())
        .fold(0.0, f64::max);
    DecompositionRecord {
        t: state.t,
        bias_sq: problem.rho_norm_sq_diff(&state.mu, problem.target()),
        sample_var: problem.rho_norm_sq_diff(&state.xi, &state.mu),
        network_err: split
            .deviation
            .iter()
            .map(|x| problem.rho_norm_sq(x))
            .collect(),
        consensus_err,
        popcov_err: split
            .popcov
            .iter()
            .map(|x| problem.rho_norm_sq(x))
            .collect(),
        residual_err: split
            .residual
            .iter()
            .map(|x| problem.rho_norm_sq(x))
            .collect(),
    }
}

/// Which operator the path products use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathOperator {
    /// Empirical covariances of the agents along the path: the full deviation.
    Empirical,
    /// Population covariance throughout: the population covariance part.
    Population,
}

/// Path-sum evaluation of `w_{t+1,v} - xi_{t+1}` (or of its population
/// covariance part) by enumerating every node sequence `w_t, ..., w_k`:
///
/// `sum_k eta_k sum_path (P_{v w_t} P_{w_t w_{t-1}} ... P_{w_{k+1} w_k} - n^-(t-k+1))
///  (I - eta_t T_{w_t}) ... (I - eta_{k+1} T_{w_{k+1}}) N_{k, w_k}`.
///
/// Everything is recomputed from the raw samples, independently of the
/// engine's recursions. Only instances with `n <= 3` and `t <= 5` are
/// accepted.
pub fn bruteforce_network_error(
    data: &[AgentData],
    problem: &SpectralProblem,
    gossip: &GossipMatrix,
    schedule: &StepSchedule,
    t: usize,
    v: usize,
    operator: PathOperator,
) -> Result<DVector<f64>> {
    let n = gossip.n();
    if n > BRUTEFORCE_MAX_NODES || t > BRUTEFORCE_MAX_T {
        return Err(Error::validation(format!(
            "path enumeration limited to n <= {BRUTEFORCE_MAX_NODES}, t <= {BRUTEFORCE_MAX_T} (got n = {n}, t = {t})"
        )));
    }
    if t == 0 || v >= n || data.len() != n {
        return Err(Error::validation(
            "need t >= 1, v < n and one dataset per node",
        ));
    }
    let d = problem.d();
    let population = DMatrix::from_diagonal(problem.tau());
    let empirical: Vec<DMatrix<f64>> = data
        .iter()
        .map(|a| a.x.transpose() * &a.x / a.m() as f64)
        .collect();
    let moments: Vec<DVector<f64>> = data
        .iter()
        .map(|a| a.x.tr_mul(&a.y) / a.m() as f64)
        .collect();
    let target_moment = &population * problem.target();

    // Population iterates mu_1 .. mu_t.
    let mut mu = vec![DVector::zeros(d)];
    for k in 1..t {
        let prev = &mu[k - 1];
        mu.push(prev - (&population * prev - &target_moment) * schedule.at(k));
    }

    let eye = DMatrix::<f64>::identity(d, d);
    let mut total = DVector::zeros(d);
    for k in 1..=t {
        let eta_k = schedule.at(k);
        let mu_k = &mu[k - 1];
        let noise: Vec<DVector<f64>> = (0..n)
            .map(|w| (&population * mu_k - &target_moment) - (&empirical[w] * mu_k - &moments[w]))
            .collect();
        let len = t - k + 1;
        let uniform = (n as f64).powi(-(len as i32));
        // path[0] = w_t, ..., path[len - 1] = w_k.
        let mut path = vec![0usize; len];
        loop {
            let mut weight = gossip.get(v, path[0]);
            for pair in path.windows(2) {
                weight *= gossip.get(pair[0], pair[1]);
            }
            let mut vec = noise[path[len - 1]].clone();
            // Innermost factor first: j = k + 1 uses w_{k+1} = path[len - 2].
            for j in (k + 1)..=t {
                let node = path[t - j];
                let op = match operator {
                    PathOperator::Empirical => &empirical[node],
                    PathOperator::Population => &population,
                };
                vec = (&eye - op * schedule.at(j)) * vec;
            }
            total += vec * (eta_k * (weight - uniform));

            // Odometer over V^len.
            let mut pos = 0;
            while pos < len {
                path[pos] += 1;
                if path[pos] < n {
                    break;
                }
                path[pos] = 0;
                pos += 1;
            }
            if pos == len {
                break;
            }
        }
    }
    Ok(total)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::validation("xs and ys differ in length"));
    }
    if xs.len() < 3 {
        return Err(Error::validation("slope fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::validation("slope fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::validation(
            "slope fit needs at least two distinct x values",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}
