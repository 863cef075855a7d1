//! Step-size and stopping-time rules, the mixing cutoff, constant-free rate
//! expressions and the runtime model used to reason about speed-up.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Network factor equals one and `m` clears the higher-order threshold:
    /// distributed and single-machine iteration counts coincide.
    BigDataConcentration,
    /// `m >= n^(2r/gamma)` but the network factor still exceeds one.
    ConcentrationLimited,
    /// `m < n^(2r/gamma)`.
    ConsensusLimited,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::BigDataConcentration => "big_data_concentration",
            Regime::ConcentrationLimited => "concentration_limited",
            Regime::ConsensusLimited => "consensus_limited",
        }
    }
}

pub const CHECK_HIGHER_ORDER_SAMPLES: &str = "m_ge_n_pow_(2r+2+g)/(2r+g-2)";
pub const CHECK_NETWORK_SIZE: &str = "n_ge_2(1+r)log(n/(1-sigma2))";
pub const CHECK_DIFFICULTY: &str = "2r+g_gt_2";
pub const CHECK_MIXING: &str = "t/2_ge_t_star";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningPlan {
    pub t_stop: usize,
    pub eta: f64,
    pub regime: Regime,
    pub t_star: usize,
    /// Multiplier applied to the single-machine iteration count.
    pub network_factor: f64,
    pub single_machine_iterations: f64,
    pub preconditions: BTreeMap<&'static str, bool>,
}

impl TuningPlan {
    pub fn preconditions_hold(&self) -> bool {
        self.preconditions.values().all(|&ok| ok)
    }
}

/// Smallest integer strictly greater than `x`.
///
/// Values within a few ulps of an integer are treated as that integer, so
/// that e.g. `1024^0.4`, which evaluates to `15.999999999999998`, gives 17.
pub fn smallest_integer_above(x: f64) -> usize {
    let nearest = x.round();
    let snapped = if (x - nearest).abs() <= 8.0 * f64::EPSILON * nearest.abs().max(1.0) {
        nearest
    } else {
        x
    };
    snapped.floor() as usize + 1
}

/// Stopping time, constant step size and regime for `n` agents holding `m`
/// samples each.
pub fn theorem1_tune(
    n: usize,
    m: usize,
    r: f64,
    gamma: f64,
    sigma2: f64,
    kappa_sq: f64,
) -> Result<TuningPlan> {
    if n == 0 || m == 0 {
        return Err(Error::validation("n and m must be at least 1"));
    }
    if !(r >= 0.5) {
        return Err(Error::validation(format!("r = {r} < 1/2")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::validation(format!("gamma = {gamma} not in (0, 1]")));
    }
    if !(0.0..1.0).contains(&sigma2) {
        return Err(Error::validation(format!(
            "sigma2 = {sigma2} not in [0, 1): the graph must be connected"
        )));
    }
    if !(kappa_sq > 0.0) {
        return Err(Error::validation("kappa^2 must be positive"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let nm = nf * mf;
    let a = 2.0 * r + gamma;
    let gap = 1.0 - sigma2;
    let single = nm.powf(1.0 / a);
    let concentration = mf >= nf.powf(2.0 * r / gamma);
    let network_factor = if concentration {
        (nm.powf(2.0 * r / a) / (mf * gap.powf(gamma)))
            .powf(1.0 / gamma)
            .max(1.0)
    } else {
        nm.powf(r / a) / (mf.sqrt() * gap)
    };
    let t_stop = smallest_integer_above(single * network_factor);
    let eta = single / (kappa_sq * t_stop as f64);

    // Infinite when 2r + gamma <= 2: the higher-order condition cannot hold.
    let higher_order_threshold = if a > 2.0 {
        nf.powf((a + 2.0) / (a - 2.0))
    } else {
        f64::INFINITY
    };
    let big_data_threshold = (nf.powf(2.0 * r / gamma) / gap.powf(a)).max(higher_order_threshold);
    let regime = if mf >= big_data_threshold {
        Regime::BigDataConcentration
    } else if concentration {
        Regime::ConcentrationLimited
    } else {
        Regime::ConsensusLimited
    };

    let t_star = mixing_cutoff(r, t_stop, sigma2)?;
    let mut preconditions = BTreeMap::new();
    preconditions.insert(CHECK_HIGHER_ORDER_SAMPLES, mf >= higher_order_threshold);
    preconditions.insert(CHECK_NETWORK_SIZE, nf >= 2.0 * (1.0 + r) * (nf / gap).ln());
    preconditions.insert(CHECK_DIFFICULTY, a > 2.0);
    preconditions.insert(CHECK_MIXING, t_stop as f64 / 2.0 >= t_star as f64);

    Ok(TuningPlan {
        t_stop,
        eta,
        regime,
        t_star,
        network_factor,
        single_machine_iterations: single,
        preconditions,
    })
}

/// `t* = ceil((r + 1) ln(t) / (1 - sigma2))`.
pub fn mixing_cutoff(r: f64, t: usize, sigma2: f64) -> Result<usize> {
    if t < 2 {
        return Err(Error::validation("mixing cutoff needs t >= 2"));
    }
    if !(0.0..1.0).contains(&sigma2) {
        return Err(Error::validation(format!(
            "sigma2 = {sigma2} not in [0, 1)"
        )));
    }
    mixing_cutoff_real(r, t as f64, sigma2)
}

/// Same as [`mixing_cutoff`] for a real-valued horizon.
pub fn mixing_cutoff_real(r: f64, t: f64, sigma2: f64) -> Result<usize> {
    if !(t > 1.0) {
        return Err(Error::validation("mixing cutoff needs t > 1"));
    }
    let x = (r + 1.0) * t.ln() / (1.0 - sigma2);
    let nearest = x.round();
    // Guard against 4.000000000000001 for an exact 4.
    let x = if (x - nearest).abs() <= 8.0 * f64::EPSILON * nearest.abs().max(1.0) {
        nearest
    } else {
        x
    };
    Ok(x.ceil() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs {
    pub n: usize,
    pub m: usize,
    pub r: f64,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub alpha: f64,
    pub eta: f64,
    pub theta: f64,
    pub t: f64,
    pub sigma2: f64,
}

/// Constant-free terms of the general excess-risk bound.
///
/// `total = (bias + variance) * log_t_sq + network + higher_order`; the
/// unknown multiplicative constants are all set to one, so the values are
/// for exploring shapes and crossovers, not certified bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateTerms {
    /// `(eta t^(1-theta))^(-2r)`.
    pub bias: f64,
    /// `(nm)^(-2r/(2r+g)) (1 v (nm)^(-2/(2r+g)) (eta t^(1-theta))^2 v t^-2 (eta t^(1-theta))^2)`.
    pub variance: f64,
    /// `log^2 t`.
    pub log_t_sq: f64,
    /// `log^2 n log^2 t* / m (eta^2 t^(-2r) v m^-1 (eta t*)^(1+2a) v (eta t*)^(g'+2a))`.
    pub network: f64,
    /// `log^4 n log^2 t / m^2 (1 v (eta t^(1-theta))^2 v t^-2 (eta t^(1-theta))^4)
    ///  (m^-1 eta t^(1-theta) v (eta t^(1-theta))^g)`.
    pub higher_order: f64,
    pub t_star: usize,
}

impl RateTerms {
    pub fn main_line(&self) -> f64 {
        (self.bias + self.variance) * self.log_t_sq
    }

    pub fn total(&self) -> f64 {
        self.main_line() + self.network + self.higher_order
    }
}

pub fn theorem2_rate_terms(inputs: RateInputs) -> Result<RateTerms> {
    let RateInputs {
        n,
        m,
        r,
        gamma,
        gamma_prime,
        alpha,
        eta,
        theta,
        t,
        sigma2,
    } = inputs;
    if n == 0 || m == 0 {
        return Err(Error::validation("n and m must be at least 1"));
    }
    if !(r >= 0.5) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::validation("need r >= 1/2 and gamma in (0, 1]"));
    }
    let (lo, hi) = (gamma.min(1.0), gamma.max(1.0));
    if !(gamma_prime >= lo && gamma_prime <= hi) {
        return Err(Error::validation(format!(
            "gamma' = {gamma_prime} outside [{lo}, {hi}]"
        )));
    }
    if !(0.0..=0.5).contains(&alpha) {
        return Err(Error::validation(format!(
            "alpha = {alpha} not in [0, 1/2]"
        )));
    }
    if !(0.0..0.75).contains(&theta) {
        return Err(Error::validation(format!(
            "theta = {theta} not in [0, 3/4)"
        )));
    }
    if !(eta > 0.0) || !(t > 1.0) {
        return Err(Error::validation("need eta > 0 and t > 1"));
    }
    if !(0.0..1.0).contains(&sigma2) {
        return Err(Error::validation(format!(
            "sigma2 = {sigma2} not in [0, 1)"
        )));
    }

    let (nf, mf) = (n as f64, m as f64);
    let nm = nf * mf;
    let a = 2.0 * r + gamma;
    let horizon = eta * t.powf(1.0 - theta);
    let t_star = mixing_cutoff_real(r, t, sigma2)?;
    let eta_t_star = eta * t_star as f64;

    let bias = horizon.powf(-2.0 * r);
    let variance = nm.powf(-2.0 * r / a)
        * 1f64
            .max(nm.powf(-2.0 / a) * horizon * horizon)
            .max(t.powi(-2) * horizon * horizon);
    let log_t_sq = t.ln().powi(2);
    let network = nf.ln().powi(2) * (t_star as f64).ln().powi(2) / mf
        * (eta * eta * t.powf(-2.0 * r))
            .max(eta_t_star.powf(1.0 + 2.0 * alpha) / mf)
            .max(eta_t_star.powf(gamma_prime + 2.0 * alpha));
    let higher_order = nf.ln().powi(4) * log_t_sq / (mf * mf)
        * 1f64
            .max(horizon * horizon)
            .max(t.powi(-2) * horizon.powi(4))
        * (horizon / mf).max(horizon.powf(gamma));

    Ok(RateTerms {
        bias,
        variance,
        log_t_sq,
        network,
        higher_order,
        t_star,
    })
}

/// Lockstep communication model: one gradient evaluation costs one time
/// unit, each round adds `tau_delay`, and aggregating neighbours costs
/// `deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RuntimeModel {
    pub tau_delay: f64,
    pub deg: usize,
}

impl RuntimeModel {
    /// Delay proportional to the degree: `tau = t_transmit * deg`.
    pub fn degree_proportional(t_transmit: f64, deg: usize) -> Self {
        RuntimeModel {
            tau_delay: t_transmit * deg as f64,
            deg,
        }
    }

    /// `m + tau + deg` per iteration of the single-step protocol.
    pub fn iteration_cost(&self, m: usize) -> f64 {
        m as f64 + self.tau_delay + self.deg as f64
    }

    /// `m + (tau + deg) / (1 - sigma2)` for protocols that gossip until
    /// mixed before each gradient step.
    pub fn multi_step_iteration_cost(&self, m: usize, sigma2: f64) -> f64 {
        m as f64 + (self.tau_delay + self.deg as f64) / (1.0 - sigma2)
    }

    pub fn speedup(&self, t_single: f64, t_dist: f64, n: usize, m: usize) -> f64 {
        speedup(t_single, t_dist, n, m, self.tau_delay, self.deg as f64)
    }
}

/// `(t_single / t_dist) * nm / (m + tau_delay + deg)`.
pub fn speedup(t_single: f64, t_dist: f64, n: usize, m: usize, tau_delay: f64, deg: f64) -> f64 {
    let nm = n as f64 * m as f64;
    (t_single / t_dist) * nm / (m as f64 + tau_delay + deg)
}
