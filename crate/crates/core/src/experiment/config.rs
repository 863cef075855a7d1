use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::ProtocolVariant;
use crate::problem::ProblemParams;
use crate::topology::{Topology, TopologyKind, WeightScheme};
use crate::{Error, Result};

/// Whole experiment, read from a TOML file with one section per concern:
///
/// ```toml
/// [problem]
/// d = 64
/// gamma = 0.5
/// r = 1.0
/// source_norm = 1.0
/// noise_sigma = 1.0
///
/// [topology]
/// kind = "cycle"
///
/// [sweep]
/// n = [4, 8]
/// m = [128, 256]
///
/// [schedule]
/// eta = "theorem1"
///
/// [run]
/// replicates = 3
/// seed = 7
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemParams,
    pub topology: TopologyConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    #[serde(default)]
    pub weight_scheme: WeightScheme,
    /// Grid rows; columns are `n / rows`. Square grids when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    /// Graph seed for random regular graphs; derived from the master seed
    /// and `n` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
    /// Chebyshev order applied on top of the weight scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accelerate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaRule {
    Theorem1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSetting {
    Rule(EtaRule),
    Fixed(f64),
}

impl Default for EtaSetting {
    fn default() -> Self {
        EtaSetting::Rule(EtaRule::Theorem1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub eta: EtaSetting,
    /// Iterates per run, the initial one included. Required with a fixed
    /// step size; with the tuned rule it defaults to `t_stop + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<usize>,
    /// Recording stride, `max(1, T / 200)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            theta: 0.0,
            eta: EtaSetting::default(),
            iterations: None,
            t_max: None,
            stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub protocol: ProtocolVariant,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs.csv")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            replicates: 1,
            seed: 0,
            protocol: ProtocolVariant::default(),
            output: default_output(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if self.sweep.n.is_empty() || self.sweep.m.is_empty() {
            return bad("sweep", "n and m need at least one value each".into());
        }
        if self.sweep.n.contains(&0) || self.sweep.m.contains(&0) {
            return bad("sweep", "n and m must be positive".into());
        }
        if self.run.replicates == 0 {
            return bad("run.replicates", "must be at least 1".into());
        }
        let s = &self.schedule;
        if !(0.0..=0.75).contains(&s.theta) {
            return bad("schedule.theta", format!("{} not in [0, 3/4]", s.theta));
        }
        match s.eta {
            EtaSetting::Rule(EtaRule::Theorem1) if s.theta != 0.0 => {
                return bad(
                    "schedule.eta",
                    "the tuned rule uses a constant step size, set theta = 0".into(),
                );
            }
            EtaSetting::Fixed(eta) if !(eta > 0.0 && eta.is_finite()) => {
                return bad("schedule.eta", format!("{eta} is not a positive step size"));
            }
            EtaSetting::Fixed(_) if s.iterations.is_none() && s.t_max.is_none() => {
                return bad(
                    "schedule.iterations",
                    "required when the step size is fixed".into(),
                );
            }
            _ => {}
        }
        if s.iterations == Some(0) || s.t_max == Some(0) || s.stride == Some(0) {
            return bad(
                "schedule",
                "iterations, t_max and stride must be positive".into(),
            );
        }
        if self.topology.accelerate == Some(0) {
            return bad(
                "topology.accelerate",
                "Chebyshev order must be positive".into(),
            );
        }
        for &n in &self.sweep.n {
            self.topology_for(n, 0)?;
        }
        Ok(())
    }

    /// Graph description for `n` agents.
    pub fn topology_for(&self, n: usize, master_seed: u64) -> Result<Topology> {
        let t = &self.topology;
        let missing = |key: &str| {
            Error::Config(format!(
                "topology.{key}: required for kind {}",
                t.kind.name()
            ))
        };
        Ok(match t.kind {
            TopologyKind::Complete => Topology::Complete { n },
            TopologyKind::Cycle => Topology::Cycle { n },
            TopologyKind::Star => Topology::Star { n },
            TopologyKind::Grid2d => {
                let rows = match t.rows {
                    Some(rows) => rows,
                    None => {
                        let side = (n as f64).sqrt().round() as usize;
                        if side * side != n {
                            return Err(Error::Config(format!(
                                "topology.rows: n = {n} is not a square, give rows explicitly"
                            )));
                        }
                        side
                    }
                };
                if rows == 0 || !n.is_multiple_of(rows) {
                    return Err(Error::Config(format!(
                        "topology.rows: {rows} does not divide n = {n}"
                    )));
                }
                Topology::Grid2d {
                    rows,
                    cols: n / rows,
                }
            }
            TopologyKind::RandomRegular => Topology::RandomRegular {
                n,
                degree: t.degree.ok_or_else(|| missing("degree"))?,
                seed: t
                    .seed
                    .unwrap_or_else(|| crate::seed::derive(master_seed, &[n as u64])),
            },
            TopologyKind::CustomEdgeList => Topology::CustomEdgeList {
                n,
                edges: t
                    .edges
                    .as_ref()
                    .ok_or_else(|| missing("edges"))?
                    .iter()
                    .map(|&[a, b]| (a, b))
                    .collect(),
            },
        })
    }
}
