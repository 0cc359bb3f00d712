//! Experiment configuration file, report, and the flat CSV view of a report.

use std::io::Write;
use std::time::Instant;

use qstein_core::exec::Executor;
use serde::{Deserialize, Serialize};

use super::logreg::{run_logreg_variance, LogRegConfig, LogRegResult};
use super::radius::{run_radius_curve, RadiusConfig, RadiusTable};
use super::toy::{run_toy_training, TrainingConfig, TrainingResult};
use super::ConfigError;
use crate::io::{real, IoResult};

/// Version of the JSON report layout and the CSV column set.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Which experiments to run. Absent sections are skipped.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logreg: Option<LogRegConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<RadiusConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingConfig>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.logreg.is_none() && self.radius.is_none() && self.training.is_none() {
            return Err(ConfigError::new("experiment config selects no experiment (expected logreg, radius or training)"));
        }
        if let Some(c) = &self.logreg {
            c.validate()?;
        }
        if let Some(c) = &self.training {
            c.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    #[serde(with = "real")]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentReport {
    pub schema_version: u32,
    /// Fully resolved configuration; re-running it reproduces the report.
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logreg: Option<LogRegResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<RadiusTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingResult>,
    /// Wall-clock per phase; only present when timings were requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<PhaseTiming>>,
}

/// Runs every configured experiment. Without `timed` the report is a pure
/// function of the configuration.
pub fn run_experiments<E: Executor>(cfg: &ExperimentConfig, timed: bool, exec: &E) -> Result<ExperimentReport, ConfigError> {
    cfg.validate()?;
    let mut timings = Vec::new();
    let mut clock = |phase: &str, start: Instant| {
        timings.push(PhaseTiming { phase: phase.into(), seconds: start.elapsed().as_secs_f64() });
    };
    let t = Instant::now();
    let logreg = cfg.logreg.as_ref().map(|c| run_logreg_variance(c, exec)).transpose()?;
    clock("logreg", t);
    let t = Instant::now();
    let radius = cfg.radius.as_ref().map(run_radius_curve).transpose()?;
    clock("radius", t);
    let t = Instant::now();
    let training = cfg.training.as_ref().map(|c| run_toy_training(c, timed, exec)).transpose()?;
    clock("training", t);
    Ok(ExperimentReport {
        schema_version: CSV_SCHEMA_VERSION,
        config: cfg.clone(),
        logreg,
        radius,
        training,
        timings: timed.then_some(timings),
    })
}

/// One CSV row: `schema_version, experiment, arm, D, q, index, metric, value`.
struct Row<'a> {
    experiment: &'a str,
    arm: String,
    d: Option<usize>,
    q: Option<f64>,
    index: String,
    metric: &'a str,
    value: f64,
}

fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        real::NAN.into()
    } else if v == f64::INFINITY {
        real::POS_INF.into()
    } else if v == f64::NEG_INFINITY {
        real::NEG_INF.into()
    } else {
        v.to_string()
    }
}

impl ExperimentReport {
    fn rows(&self) -> Vec<Row<'_>> {
        let mut rows = Vec::new();
        if let Some(lr) = &self.logreg {
            for (arms, tag) in [(&lr.arms, "main"), (&lr.reference_arms, "reference")] {
                for a in arms.iter() {
                    for (metric, value) in [("mean_variance", a.mean_variance), ("std_error", a.std_error), ("radius", a.radius)] {
                        rows.push(Row {
                            experiment: "logreg_variance",
                            arm: format!("{tag}:S={}", a.s),
                            d: Some(a.d),
                            q: Some(a.q),
                            index: String::new(),
                            metric,
                            value,
                        });
                    }
                }
            }
            for o in &lr.ordering {
                rows.push(Row {
                    experiment: "logreg_variance",
                    arm: "ordering".into(),
                    d: Some(o.d),
                    q: None,
                    index: String::new(),
                    metric: "nonincreasing",
                    value: if o.nonincreasing { 1.0 } else { 0.0 },
                });
            }
        }
        if let Some(rt) = &self.radius {
            for row in &rt.rows {
                for (k, r) in row.radius.iter().enumerate() {
                    rows.push(Row {
                        experiment: "radius_curve",
                        arm: String::new(),
                        d: Some(k + 1),
                        q: Some(row.q),
                        index: String::new(),
                        metric: "radius",
                        value: *r,
                    });
                }
            }
        }
        if let Some(tr) = &self.training {
            for run in &tr.runs {
                let base = |metric, index: String, value| Row {
                    experiment: "toy_training",
                    arm: run.label.clone(),
                    d: None,
                    q: None,
                    index,
                    metric,
                    value,
                };
                for (e, l) in run.loss_trajectory.iter().enumerate() {
                    rows.push(base("train_loss", format!("{}:{}", run.seed, e + 1), *l));
                }
                rows.push(base("final_loss", run.seed.to_string(), run.final_loss));
                rows.push(base("final_accuracy", run.seed.to_string(), run.final_accuracy));
            }
            for s in &tr.summaries {
                let mut metrics = vec![
                    ("mean_accuracy", s.mean_accuracy),
                    ("se_accuracy", s.se_accuracy),
                    ("mean_loss", s.mean_loss),
                    ("se_loss", s.se_loss),
                    ("grad_evals_per_step", s.grad_evals_per_step),
                ];
                if let Some(t) = s.seconds_per_step {
                    metrics.push(("seconds_per_step", t));
                }
                for (metric, value) in metrics {
                    rows.push(Row {
                        experiment: "toy_training",
                        arm: s.label.clone(),
                        d: None,
                        q: None,
                        index: "summary".into(),
                        metric,
                        value,
                    });
                }
            }
        }
        rows
    }

    /// Flat CSV with header `schema_version,experiment,arm,D,q,index,metric,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> IoResult<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["schema_version", "experiment", "arm", "D", "q", "index", "metric", "value"])?;
        let version = CSV_SCHEMA_VERSION.to_string();
        for r in self.rows() {
            w.write_record([
                version.as_str(),
                r.experiment,
                r.arm.as_str(),
                &r.d.map(|d| d.to_string()).unwrap_or_default(),
                &r.q.map(fmt_real).unwrap_or_default(),
                r.index.as_str(),
                r.metric,
                &fmt_real(r.value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
