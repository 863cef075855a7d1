use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::runner::{RunRecord, SCHEMA_VERSION};
use crate::diagnostics::{fit_loglog_slope, LogLogFit};
use crate::{Error, Result};

/// CSV header, in column order.
pub const COLUMNS: [&str; 25] = [
    "topology",
    "weight_scheme",
    "n",
    "m",
    "replicate",
    "seed",
    "t",
    "is_final",
    "status",
    "diverged_at",
    "risk_mean",
    "risk_max",
    "bias_sq",
    "sample_var",
    "network_err_mean",
    "network_err_max",
    "consensus_err",
    "popcov_err_mean",
    "residual_err_mean",
    "bound_ok",
    "sigma2",
    "eta",
    "t_stop",
    "regime",
    "t_star",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Topology,
    WeightScheme,
    N,
    M,
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topology" => Ok(GroupKey::Topology),
            "weight_scheme" => Ok(GroupKey::WeightScheme),
            "n" => Ok(GroupKey::N),
            "m" => Ok(GroupKey::M),
            other => Err(Error::validation(format!(
                "unknown group key {other:?}, expected topology, weight_scheme, n or m"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeAxis {
    Nm,
    M,
    N,
}

impl FromStr for SlopeAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nm" => Ok(SlopeAxis::Nm),
            "m" => Ok(SlopeAxis::M),
            "n" => Ok(SlopeAxis::N),
            other => Err(Error::validation(format!(
                "unknown slope axis {other:?}, expected nm, m or n"
            ))),
        }
    }
}

impl SlopeAxis {
    fn value(self, row: &RunRecord) -> f64 {
        match self {
            SlopeAxis::Nm => (row.n * row.m) as f64,
            SlopeAxis::M => row.m as f64,
            SlopeAxis::N => row.n as f64,
        }
    }
}

/// Quantity summarised from each replicate's final row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    RiskMean,
    RiskMax,
    BiasSq,
    SampleVar,
    NetworkErrMean,
    ConsensusErr,
    PopcovErrMean,
    ResidualErrMean,
    /// `1 / (1 - sigma2)`.
    InverseGap,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "risk_mean" => Metric::RiskMean,
            "risk_max" => Metric::RiskMax,
            "bias_sq" => Metric::BiasSq,
            "sample_var" => Metric::SampleVar,
            "network_err_mean" => Metric::NetworkErrMean,
            "consensus_err" => Metric::ConsensusErr,
            "popcov_err_mean" => Metric::PopcovErrMean,
            "residual_err_mean" => Metric::ResidualErrMean,
            "inverse_gap" => Metric::InverseGap,
            other => return Err(Error::validation(format!("unknown metric {other:?}"))),
        })
    }
}

impl Metric {
    fn value(self, row: &RunRecord) -> f64 {
        match self {
            Metric::RiskMean => row.risk_mean,
            Metric::RiskMax => row.risk_max,
            Metric::BiasSq => row.bias_sq,
            Metric::SampleVar => row.sample_var,
            Metric::NetworkErrMean => row.network_err_mean,
            Metric::ConsensusErr => row.consensus_err,
            Metric::PopcovErrMean => row.popcov_err_mean,
            Metric::ResidualErrMean => row.residual_err_mean,
            Metric::InverseGap => 1.0 / (1.0 - row.sigma2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(untagged)]
pub enum KeyValue {
    Int(usize),
    Text(String),
}

impl fmt::Display for KeyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KeyValue::Int(v) => write!(f, "{v}"),
            KeyValue::Text(v) => f.write_str(v),
        }
    }
}

fn key_value(key: GroupKey, row: &RunRecord) -> KeyValue {
    match key {
        GroupKey::Topology => KeyValue::Text(row.topology.clone()),
        GroupKey::WeightScheme => KeyValue::Text(row.weight_scheme.clone()),
        GroupKey::N => KeyValue::Int(row.n),
        GroupKey::M => KeyValue::Int(row.m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub key: Vec<KeyValue>,
    /// Replicates that finished without diverging.
    pub count: usize,
    pub diverged: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single replicate.
    pub std: f64,
    pub axis_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub group_by: Vec<String>,
    pub groups: Vec<GroupSummary>,
    pub slope: Option<LogLogFit>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for key in &self.group_by {
            write!(f, "{key}\t")?;
        }
        writeln!(f, "count\tdiverged\tmean\tstd")?;
        for g in &self.groups {
            for v in &g.key {
                write!(f, "{v}\t")?;
            }
            writeln!(f, "{}\t{}\t{}\t{}", g.count, g.diverged, g.mean, g.std)?;
        }
        if let Some(fit) = &self.slope {
            writeln!(
                f,
                "slope {} intercept {} r_squared {}",
                fit.slope, fit.intercept, fit.r_squared
            )?;
        }
        Ok(())
    }
}

fn schema_version(comment: &str) -> Option<u32> {
    let (key, value) = comment.trim_start_matches('#').split_once('=')?;
    if key.trim() != "schema_version" {
        return None;
    }
    value.trim().parse().ok()
}

/// Parses a CSV produced by the runner, rejecting other schema versions.
pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut reader = BufReader::new(input);
    let mut version = None;
    let mut body = String::new();
    let mut line = String::new();
    while reader.read_line(&mut line)? > 0 {
        if line.starts_with('#') {
            if version.is_none() {
                version = schema_version(&line);
            }
        } else {
            body.push_str(&line);
        }
        line.clear();
    }
    match version {
        Some(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(Error::Schema(format!(
                "schema version {v}, this build reads {SCHEMA_VERSION}"
            )))
        }
        None => return Err(Error::Schema("missing schema_version comment".into())),
    }
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(Error::Schema(format!("unexpected columns {header:?}")));
    }
    csv.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

pub fn read_records_from_path(path: &Path) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path)?;
    read_records(file).map_err(|e| match e {
        Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn summarize<P: AsRef<Path>>(
    paths: &[P],
    group_by: &[GroupKey],
    slope_axis: Option<SlopeAxis>,
    metric: Metric,
) -> Result<Summary> {
    let mut rows = Vec::new();
    for path in paths {
        rows.extend(read_records_from_path(path.as_ref())?);
    }
    summarize_records(&rows, group_by, slope_axis, metric)
}

/// Groups the final row of every replicate and reports mean and standard
/// deviation of `metric`; with `slope_axis`, also a log-log fit of the group
/// means against the axis value.
pub fn summarize_records(
    rows: &[RunRecord],
    group_by: &[GroupKey],
    slope_axis: Option<SlopeAxis>,
    metric: Metric,
) -> Result<Summary> {
    struct Acc {
        values: Vec<f64>,
        diverged: usize,
        axis: Option<f64>,
    }
    let mut groups: BTreeMap<Vec<KeyValue>, Acc> = BTreeMap::new();
    for row in rows.iter().filter(|r| r.is_final) {
        let key = group_by.iter().map(|&k| key_value(k, row)).collect();
        let acc = groups.entry(key).or_insert(Acc {
            values: Vec::new(),
            diverged: 0,
            axis: None,
        });
        if let Some(axis) = slope_axis {
            let x = axis.value(row);
            match acc.axis {
                Some(prev) if prev != x => {
                    return Err(Error::validation(format!(
                        "group mixes {axis:?} values {prev} and {x}; add it to the grouping"
                    )))
                }
                _ => acc.axis = Some(x),
            }
        }
        if row.status == "ok" {
            acc.values.push(metric.value(row));
        } else {
            acc.diverged += 1;
        }
    }

    let groups: Vec<GroupSummary> = groups
        .into_iter()
        .map(|(key, acc)| {
            let count = acc.values.len();
            let mean = acc.values.iter().sum::<f64>() / count as f64;
            let std = if count > 1 {
                let ss: f64 = acc.values.iter().map(|v| (v - mean).powi(2)).sum();
                (ss / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            GroupSummary {
                key,
                count,
                diverged: acc.diverged,
                mean,
                std,
                axis_value: acc.axis,
            }
        })
        .collect();

    let slope = match slope_axis {
        Some(_) => {
            let fitted: Vec<&GroupSummary> = groups.iter().filter(|g| g.count > 0).collect();
            let xs: Vec<f64> = fitted.iter().filter_map(|g| g.axis_value).collect();
            let ys: Vec<f64> = fitted.iter().map(|g| g.mean).collect();
            Some(fit_loglog_slope(&xs, &ys)?)
        }
        None => None,
    };
    Ok(Summary {
        group_by: group_by
            .iter()
            .map(|k| {
                match k {
                    GroupKey::Topology => "topology",
                    GroupKey::WeightScheme => "weight_scheme",
                    GroupKey::N => "n",
                    GroupKey::M => "m",
                }
                .to_string()
            })
            .collect(),
        groups,
        slope,
    })
}
