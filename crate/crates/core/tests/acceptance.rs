//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dgd_core::diagnostics::{
    bruteforce_network_error, fit_loglog_slope, split_vectors, PathOperator,
};
use dgd_core::engine::{
    population_update, IterationRecord, ProtocolVariant, Simulation, StepSchedule, TrainState,
};
use dgd_core::experiment::{
    read_records_from_path, run_experiment, summarize_records, ExperimentConfig, GroupKey, Metric,
    RunResult, SlopeAxis, BOUND_SLACK,
};
use dgd_core::problem::{make_problem, sample_agent_data, AgentData, ProblemParams, Sampler};
use dgd_core::topology::{
    build_gossip_matrix, build_topology, chebyshev_accelerate, spectral_gap, GossipMatrix,
    Topology, WeightScheme,
};
use dgd_core::tuning::{mixing_cutoff, mixing_cutoff_real, theorem1_tune, Regime};

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

#[derive(Default)]
struct BoundTally {
    checks: usize,
    violations: usize,
    worst_margin: f64,
}

impl BoundTally {
    fn add(&mut self, rec: &IterationRecord) {
        let bounds = rec.decomposition.decomposition_bound();
        for (risk, bound) in rec.excess_risk.iter().zip(bounds) {
            self.checks += 1;
            let margin = risk - bound;
            if margin > BOUND_SLACK {
                self.violations += 1;
            }
            if self.checks == 1 || margin > self.worst_margin {
                self.worst_margin = margin;
            }
        }
    }

    fn add_runs(&mut self, runs: &[RunResult]) {
        for run in runs {
            run.records.iter().for_each(|rec| self.add(rec));
        }
    }
}

fn timed(id: &'static str, title: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    Outcome {
        id,
        title,
        pass,
        detail,
        elapsed: start.elapsed(),
    }
}

fn params(d: usize, r: f64, gamma: f64, noise_sigma: f64) -> ProblemParams {
    ProblemParams {
        d,
        gamma,
        r,
        source_norm: 1.0,
        noise_sigma,
        sampler: Sampler::WeightedCoordinate,
    }
}

fn cycle(n: usize) -> GossipMatrix {
    let g = build_topology(&Topology::Cycle { n }).unwrap();
    build_gossip_matrix(&g, WeightScheme::MetropolisLazy).unwrap()
}

fn a1(tally: &mut BoundTally) -> (bool, String) {
    let (n, d, m, iterations) = (8, 16, 32, 200);
    let problem = make_problem(params(d, 1.0, 0.5, 1.0)).unwrap();
    let g = build_topology(&Topology::Complete { n }).unwrap();
    let p = build_gossip_matrix(&g, WeightScheme::UniformComplete).unwrap();
    let data: Vec<AgentData> = (0..n)
        .map(|v| sample_agent_data(&problem, m, v, 11).unwrap())
        .collect();
    let sched = StepSchedule::constant(1.0 / problem.kappa_sq()).unwrap();
    let mut sim = Simulation::new(
        &problem,
        &p,
        &data,
        sched,
        ProtocolVariant::GossipAfterGradient,
    )
    .unwrap();
    let mut worst = 0f64;
    loop {
        let s = sim.state();
        for w in &s.omega {
            worst = worst.max((w - &s.xi).norm() / (1.0 + s.xi.norm()));
        }
        tally.add(&sim.record());
        if s.t == iterations {
            break;
        }
        sim.step().unwrap();
    }
    (
        worst <= 1e-10,
        format!("max_t,v |w - xi| / (1 + |xi|) = {worst:.3e} over t = 1..{iterations}"),
    )
}

fn a2() -> (bool, String) {
    let (n, d) = (16, 5);
    let p = cycle(n);
    let problem = make_problem(params(d, 1.0, 0.5, 0.0)).unwrap();
    // Zero inputs and responses: every local gradient vanishes.
    let data: Vec<AgentData> = (0..n)
        .map(|v| AgentData::new(v, DMatrix::zeros(2, d), DVector::zeros(2)).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let init: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let disagreement = |s: &TrainState| {
        let mean = s.mean_omega();
        s.omega
            .iter()
            .map(|w| (w - &mean).norm_squared())
            .sum::<f64>()
            .sqrt()
    };
    let state = TrainState::with_initial_omega(init).unwrap();
    let initial = disagreement(&state);
    let sched = StepSchedule::constant(0.5).unwrap();
    let mut sim = Simulation::with_state(
        &problem,
        &p,
        &data,
        sched,
        ProtocolVariant::GossipAfterGradient,
        state,
    )
    .unwrap();
    let mut violations = 0;
    let mut worst_ratio = 0f64;
    for t in 1..=100 {
        let bound = p.sigma2().powi(t - 1) * initial;
        let now = disagreement(sim.state());
        if now > bound + 1e-9 {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(now / bound);
        sim.step().unwrap();
    }
    (
        violations == 0,
        format!(
            "sigma2 = {:.6}, {violations} violations in t <= 100, max ratio to bound {worst_ratio:.4}",
            p.sigma2()
        ),
    )
}

fn random_gossip(rng: &mut ChaCha8Rng, n: usize) -> GossipMatrix {
    let mut p = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a + 1..n {
            let w = rng.random_range(0.0..1.0 / n as f64);
            p[(a, b)] = w;
            p[(b, a)] = w;
        }
    }
    for a in 0..n {
        let off: f64 = (0..n).filter(|&b| b != a).map(|b| p[(a, b)]).sum();
        p[(a, a)] = 1.0 - off;
    }
    GossipMatrix::from_dense(p).unwrap()
}

fn a3(tally: &mut BoundTally) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let samplers = [
        Sampler::Coordinate,
        Sampler::WeightedCoordinate,
        Sampler::Gaussian,
    ];
    let (mut worst_path, mut worst_split, mut worst_pop) = (0f64, 0f64, 0f64);
    let mut comparisons = 0;
    for instance in 0..100u64 {
        let n = rng.random_range(1..=3);
        let t = rng.random_range(1..=4);
        let d = rng.random_range(1..=4);
        let m = rng.random_range(1..=5);
        let problem = make_problem(ProblemParams {
            d,
            gamma: rng.random_range(0.3..=1.0),
            r: rng.random_range(0.5..2.0),
            source_norm: rng.random_range(0.5..2.0),
            noise_sigma: rng.random_range(0.0..1.0),
            sampler: samplers[rng.random_range(0..3)],
        })
        .unwrap();
        let p = random_gossip(&mut rng, n);
        let data: Vec<AgentData> = (0..n)
            .map(|v| sample_agent_data(&problem, m, v, 300 + instance).unwrap())
            .collect();
        let eta = rng.random_range(0.1..1.0) / problem.kappa_sq();
        let sched = StepSchedule::new(eta, rng.random_range(0.0..0.75)).unwrap();
        let mut sim = Simulation::new(
            &problem,
            &p,
            &data,
            sched,
            ProtocolVariant::GossipAfterGradient,
        )
        .unwrap();
        tally.add(&sim.record());
        for _ in 0..t {
            sim.step().unwrap();
            tally.add(&sim.record());
        }
        let split = split_vectors(sim.state());
        for v in 0..n {
            let full = bruteforce_network_error(
                &data,
                &problem,
                &p,
                &sched,
                t,
                v,
                PathOperator::Empirical,
            )
            .unwrap();
            let pop = bruteforce_network_error(
                &data,
                &problem,
                &p,
                &sched,
                t,
                v,
                PathOperator::Population,
            )
            .unwrap();
            let rel = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm() / b.norm().max(1e-12);
            worst_path = worst_path.max(rel(&split.deviation[v], &full));
            worst_split = worst_split.max(rel(&(&split.popcov[v] + &split.residual[v]), &full));
            worst_pop = worst_pop.max(rel(&split.popcov[v], &pop));
            comparisons += 1;
        }
    }
    (
        worst_path <= 1e-9 && worst_split <= 1e-9 && worst_pop <= 1e-9,
        format!(
            "{comparisons} agent checks: engine vs paths {worst_path:.2e}, popcov+residual vs paths {worst_split:.2e}, popcov vs population paths {worst_pop:.2e}"
        ),
    )
}

fn run_and_reload(
    toml: &str,
    tally: &mut BoundTally,
) -> (Vec<RunResult>, Vec<dgd_core::experiment::RunRecord>) {
    let cfg = ExperimentConfig::from_toml_str(toml).unwrap();
    let output = run_experiment(&cfg, None).unwrap();
    tally.add_runs(&output.runs);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.csv");
    output
        .write_csv(std::io::BufWriter::new(
            std::fs::File::create(&path).unwrap(),
        ))
        .unwrap();
    let rows = read_records_from_path(&path).unwrap();
    (output.runs, rows)
}

fn a5(tally: &mut BoundTally) -> (bool, String) {
    let toml = r#"
[problem]
d = 512
gamma = 0.5
r = 1.0
source_norm = 1.0
noise_sigma = 1.0
sampler = "weighted_coordinate"

[topology]
kind = "cycle"

[sweep]
n = [4]
m = [128, 256, 512, 1024]

[schedule]
eta = "theorem1"

[run]
replicates = 100
seed = 5
"#;
    let (runs, rows) = run_and_reload(toml, tally);
    let diverged = runs.iter().filter(|r| r.divergence.is_some()).count();
    let summary =
        summarize_records(&rows, &[GroupKey::M], Some(SlopeAxis::Nm), Metric::RiskMean).unwrap();
    let fit = summary.slope.unwrap();
    let means: Vec<String> = summary
        .groups
        .iter()
        .map(|g| format!("m={} {:.4e}", g.key[0], g.mean))
        .collect();
    let t_stops: Vec<String> = runs
        .iter()
        .filter(|r| r.replicate == 0)
        .map(|r| r.plan.as_ref().unwrap().t_stop.to_string())
        .collect();
    (
        diverged == 0 && (-1.0..=-0.6).contains(&fit.slope),
        format!(
            "slope {:.4} (r^2 {:.3}), t_stop [{}], means [{}]",
            fit.slope,
            fit.r_squared,
            t_stops.join(", "),
            means.join(", ")
        ),
    )
}

fn a6(tally: &mut BoundTally) -> (bool, String) {
    let problem = make_problem(params(64, 1.0, 0.5, 1.0)).unwrap();
    let eta = 1.0 / problem.kappa_sq();
    let toml = format!(
        r#"
[problem]
d = 64
gamma = 0.5
r = 1.0
source_norm = 1.0
noise_sigma = 1.0

[topology]
kind = "cycle"

[sweep]
n = [8]
m = [64, 128, 256, 512]

[schedule]
theta = 0.0
eta = {eta:?}
iterations = 200

[run]
replicates = 50
seed = 6
"#
    );
    let (runs, rows) = run_and_reload(&toml, tally);
    let final_t = runs
        .iter()
        .map(|r| r.final_record().unwrap().t)
        .max()
        .unwrap();
    let summary = summarize_records(
        &rows,
        &[GroupKey::M],
        Some(SlopeAxis::M),
        Metric::NetworkErrMean,
    )
    .unwrap();
    let fit = summary.slope.unwrap();
    let means: Vec<String> = summary
        .groups
        .iter()
        .map(|g| format!("m={} {:.4e}", g.key[0], g.mean))
        .collect();
    (
        final_t == 200 && (-1.3..=-0.7).contains(&fit.slope),
        format!(
            "slope {:.4} (r^2 {:.3}) at t = {final_t}, means [{}]",
            fit.slope,
            fit.r_squared,
            means.join(", ")
        ),
    )
}

fn a7() -> (bool, String) {
    let ns = [8usize, 16, 32, 64, 128];
    let inv: Vec<f64> = ns.iter().map(|&n| 1.0 / spectral_gap(&cycle(n))).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let fit = fit_loglog_slope(&xs, &inv).unwrap();
    let complete_ok = [1usize, 2, 3, 8, 32, 128].iter().all(|&n| {
        let g = build_topology(&Topology::Complete { n }).unwrap();
        let p = build_gossip_matrix(&g, WeightScheme::UniformComplete).unwrap();
        1.0 / spectral_gap(&p) == 1.0
    });
    (
        (1.8..=2.2).contains(&fit.slope) && complete_ok,
        format!(
            "cycle slope {:.4} (r^2 {:.5}), complete inverse gap exactly 1: {complete_ok}",
            fit.slope, fit.r_squared
        ),
    )
}

fn a8() -> (bool, String) {
    let mut checks = 0;
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for r in [0.5, 1.0, 2.0] {
        let problem = make_problem(params(64, r, 0.5, 0.0)).unwrap();
        for theta in [0.0, 0.25] {
            let sched = StepSchedule::new(1.0 / problem.kappa_sq(), theta).unwrap();
            let mut mu = DVector::zeros(64);
            let mut cumulative = 0.0;
            for t in 1..=10_000 {
                cumulative += sched.at(t);
                let bias = problem.rho_norm_sq_diff(&mu, problem.target()).sqrt();
                let bound = problem.source_norm() * (r / (2.0 * cumulative)).powf(r);
                checks += 1;
                if bias > bound {
                    violations += 1;
                }
                tightest = tightest.min(bound / bias);
                mu = population_update(&mu, t, &problem, &sched);
            }
        }
    }
    (
        violations == 0,
        format!("{checks} checks, {violations} violations, smallest bound/bias {tightest:.3}"),
    )
}

fn a9() -> (bool, String) {
    let (n, k) = (32, 10);
    let p = cycle(n);
    let acc = chebyshev_accelerate(&p, k).unwrap();
    let inv = 1.0 / spectral_gap(&p);
    let inv_acc = 1.0 / spectral_gap(&acc);
    // One accelerated step costs k gossip rounds; compare rounds-to-mix
    // against the square-root order.
    let per_round = k as f64 * inv_acc;
    let sqrt_order = inv.sqrt();
    let ratio = per_round / sqrt_order;
    (
        inv_acc <= 0.5 * inv && (1.0 / 3.0..=3.0).contains(&ratio),
        format!(
            "inverse gaps: plain {inv:.3}, accelerated {inv_acc:.4}; k * accelerated {per_round:.3} vs sqrt(plain) {sqrt_order:.3} (ratio {ratio:.3})"
        ),
    )
}

fn a10() -> (bool, String) {
    let mut failures = Vec::new();
    for kappa_sq in [1.0, 2.0, 0.37] {
        let plan = theorem1_tune(1, 1024, 1.0, 0.5, 0.0, kappa_sq).unwrap();
        if plan.t_stop != 17 {
            failures.push(format!("t_stop {}", plan.t_stop));
        }
        if (plan.eta - 16.0 / 17.0 / kappa_sq).abs() > 1e-12 {
            failures.push(format!("eta {}", plan.eta));
        }
    }
    // Complete graph with m >= n^(2r/gamma).
    for (n, m) in [(2usize, 16usize), (4, 256), (4, 5000), (3, 81)] {
        let plan = theorem1_tune(n, m, 1.0, 0.5, 0.0, 1.0).unwrap();
        let nm = (n * m) as f64;
        let want = (nm.powf(0.8) / m as f64).powf(2.0).max(1.0);
        if (plan.network_factor - want).abs() > 1e-12 * want {
            failures.push(format!(
                "complete n={n} m={m} factor {}",
                plan.network_factor
            ));
        }
    }
    let plan = theorem1_tune(4, 1_000_000, 1.0, 0.5, 0.5, 1.0).unwrap();
    let single = 4e6f64.powf(0.4);
    let ratio = plan.t_stop as f64 / single;
    if plan.regime != Regime::BigDataConcentration || !(ratio >= 1.0 && ratio <= 1.0 + 1.0 / single)
    {
        failures.push(format!("m = 1e6: {:?}, ratio {ratio}", plan.regime));
    }
    let cutoffs = [
        mixing_cutoff(1.0, 100, 0.5).unwrap(),
        mixing_cutoff_real(1.0, std::f64::consts::E.powi(2), 0.0).unwrap(),
        mixing_cutoff(0.5, 2, 0.0).unwrap(),
    ];
    if cutoffs != [19, 4, 2] {
        failures.push(format!("mixing cutoffs {cutoffs:?}"));
    }
    (
        failures.is_empty(),
        if failures.is_empty() {
            format!("t_stop 17, eta 16/(17 kappa^2), m = 1e6 ratio {ratio:.6}, t* {cutoffs:?}")
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let mut tally = BoundTally::default();
    let mut outcomes = vec![
        timed("A1", "complete-graph equivalence", || a1(&mut tally)),
        timed("A2", "gossip contraction", a2),
        timed("A3", "path-sum oracle", || a3(&mut tally)),
    ];
    let a5 = timed("A5", "statistical rate slope", || a5(&mut tally));
    let a6 = timed("A6", "network error ~ 1/m", || a6(&mut tally));
    outcomes.push(Outcome {
        id: "A4",
        title: "error decomposition inequality",
        pass: tally.violations == 0 && tally.checks > 0,
        detail: format!(
            "{} agent-iterations from A1, A3, A5, A6: {} violations, worst risk - bound {:.3e}",
            tally.checks, tally.violations, tally.worst_margin
        ),
        elapsed: Duration::ZERO,
    });
    outcomes.push(a5);
    outcomes.push(a6);
    outcomes.push(timed("A7", "spectral gap scaling", a7));
    outcomes.push(timed("A8", "bias bound", a8));
    outcomes.push(timed("A9", "accelerated gossip", a9));
    outcomes.push(timed("A10", "tuning formulas", a10));

    let limits = [
        ("A1", Duration::from_secs(1)),
        ("A2", Duration::from_secs(1)),
        ("A3", Duration::from_secs(10)),
        ("A5", Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for o in &mut outcomes {
        if let Some((_, limit)) = limits.iter().find(|(id, _)| *id == o.id) {
            if o.elapsed > *limit {
                o.pass = false;
                o.detail.push_str(&format!("; over the {limit:?} budget"));
            }
        }
        if !o.pass {
            failed += 1;
        }
        println!(
            "{:<4} {} {:<32} [{:>8.3} s] {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.title,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        outcomes.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
