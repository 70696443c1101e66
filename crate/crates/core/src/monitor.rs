//! Deployment-time continual audit.
//!
//! A [`Baseline`] records the mean and standard deviation of prediction
//! sensitivity over a reference set. At prediction time each row is scored
//! and flagged when `ps > mean + k·σ`. The monitor never alters or withholds
//! the classifier's prediction; it only reports.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{TabularDataset, IMPUTED_PROTECTED_VALUE};
use crate::digest::params_digest;
use crate::nn::{NetworkParams, DECISION_THRESHOLD};
use crate::sensitivity::{prediction_sensitivity, top_features, FeatureAttribution};
use crate::stats::mean_std;
use crate::{Error, Result};

pub const DEFAULT_K_SIGMA: f64 = 3.0;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mean_ps: f64,
    /// Population standard deviation.
    pub std_ps: f64,
    pub n: usize,
    pub classifier_digest: String,
    pub protected_model_digest: String,
}

impl Baseline {
    /// Fails with a configuration error unless `f` and `a` are exactly the
    /// models the baseline was computed with.
    pub fn verify(&self, f: &NetworkParams, a: &NetworkParams) -> Result<()> {
        let (df, da) = (params_digest(f), params_digest(a));
        if df != self.classifier_digest {
            return Err(Error::Config(format!(
                "classifier digest {df} does not match baseline {}",
                self.classifier_digest
            )));
        }
        if da != self.protected_model_digest {
            return Err(Error::Config(format!(
                "protected-status model digest {da} does not match baseline {}",
                self.protected_model_digest
            )));
        }
        Ok(())
    }

    pub fn threshold(&self, k_sigma: f64) -> f64 {
        self.mean_ps + k_sigma * self.std_ps
    }
}

pub fn compute_baseline(
    f: &NetworkParams,
    a: &NetworkParams,
    reference: &TabularDataset,
) -> Result<Baseline> {
    if reference.is_empty() {
        return Err(Error::Input("baseline reference set is empty".into()));
    }
    let ps: Vec<f64> = crate::audit::sensitivities(a, f, reference)?
        .into_iter()
        .map(|r| r.ps)
        .collect();
    baseline_from_scores(&ps, f, a)
}

/// Baseline over precomputed sensitivity values, in the given order.
pub fn baseline_from_scores(ps: &[f64], f: &NetworkParams, a: &NetworkParams) -> Result<Baseline> {
    let (mean_ps, std_ps) =
        mean_std(ps).ok_or_else(|| Error::Input("baseline reference set is empty".into()))?;
    Ok(Baseline {
        mean_ps,
        std_ps,
        n: ps.len(),
        classifier_digest: params_digest(f),
        protected_model_digest: params_digest(a),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ok,
    Alarm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub verdict: Verdict,
    pub threshold: f64,
}

/// Alarm iff `ps > mean + k_sigma · std`.
pub fn check(ps: f64, baseline: &Baseline, k_sigma: f64) -> Check {
    let threshold = baseline.threshold(k_sigma);
    Check {
        verdict: if ps > threshold {
            Verdict::Alarm
        } else {
            Verdict::Ok
        },
        threshold,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub k_sigma: f64,
    pub top_k: usize,
    /// Encoded slot overwritten with the neutral value before scoring,
    /// when the protected attribute is not available at prediction time.
    pub impute_protected: Option<usize>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            k_sigma: DEFAULT_K_SIGMA,
            top_k: DEFAULT_TOP_K,
            impute_protected: None,
        }
    }
}

/// One output line per input row. On a malformed row only `row_id` and
/// `error` are set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub row_id: usize,
    pub probability: Option<f64>,
    pub prediction: Option<bool>,
    pub ps: Option<f64>,
    pub verdict: Option<Verdict>,
    pub threshold: Option<f64>,
    pub top_features: Vec<FeatureAttribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MonitorEvent {
    fn failed(row_id: usize, error: String) -> Self {
        MonitorEvent {
            row_id,
            probability: None,
            prediction: None,
            ps: None,
            verdict: None,
            threshold: None,
            top_features: Vec::new(),
            error: Some(error),
        }
    }

    pub fn is_alarm(&self) -> bool {
        self.verdict == Some(Verdict::Alarm)
    }
}

/// A row as it arrives: encoded features, or the reason it could not be
/// encoded.
pub type RowInput = std::result::Result<Vec<f64>, String>;

pub struct Monitor<'a> {
    f: &'a NetworkParams,
    a: &'a NetworkParams,
    baseline: &'a Baseline,
    config: MonitorConfig,
    names: Vec<String>,
}

impl<'a> Monitor<'a> {
    /// Verifies model digests and dimensions up front; nothing is scored if
    /// they do not match.
    pub fn new(
        f: &'a NetworkParams,
        a: &'a NetworkParams,
        baseline: &'a Baseline,
        config: MonitorConfig,
        names: Vec<String>,
    ) -> Result<Self> {
        baseline.verify(f, a)?;
        if f.input_dim() != a.input_dim() {
            return Err(Error::Config(format!(
                "classifier takes {} inputs, protected-status model takes {}",
                f.input_dim(),
                a.input_dim()
            )));
        }
        if names.len() != f.input_dim() {
            return Err(Error::Config(format!(
                "{} feature names for {} inputs",
                names.len(),
                f.input_dim()
            )));
        }
        if let Some(i) = config.impute_protected {
            if i >= f.input_dim() {
                return Err(Error::Config(format!("protected slot {i} out of range")));
            }
        }
        if !config.k_sigma.is_finite() {
            return Err(Error::Config("k_sigma must be finite".into()));
        }
        Ok(Monitor {
            f,
            a,
            baseline,
            config,
            names,
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    pub fn score(&self, row_id: usize, row: RowInput) -> MonitorEvent {
        match row.and_then(|x| self.score_vector(row_id, x).map_err(|e| e.to_string())) {
            Ok(event) => event,
            Err(msg) => MonitorEvent::failed(row_id, msg),
        }
    }

    fn score_vector(&self, row_id: usize, mut x: Vec<f64>) -> Result<MonitorEvent> {
        if let Some(i) = self.config.impute_protected {
            if i < x.len() {
                x[i] = IMPUTED_PROTECTED_VALUE;
            }
        }
        let probability = self.f.forward(&x)?;
        let record = prediction_sensitivity(self.a, self.f, &x)?;
        let c = check(record.ps, self.baseline, self.config.k_sigma);
        let top = if c.verdict == Verdict::Alarm {
            top_features(&record, self.config.top_k.min(record.len()), &self.names)?
        } else {
            Vec::new()
        };
        Ok(MonitorEvent {
            row_id,
            probability: Some(probability),
            prediction: Some(probability > DECISION_THRESHOLD),
            ps: Some(record.ps),
            verdict: Some(c.verdict),
            threshold: Some(c.threshold),
            top_features: top,
            error: None,
        })
    }

    /// Scores lazily, one row at a time, in input order.
    pub fn stream<I>(&'a self, rows: I) -> impl Iterator<Item = MonitorEvent> + 'a
    where
        I: IntoIterator<Item = RowInput>,
        I::IntoIter: 'a,
    {
        rows.into_iter()
            .enumerate()
            .map(move |(i, row)| self.score(i, row))
    }

    /// Scores a batch concurrently; events come back in input order.
    pub fn score_batch(&self, rows: Vec<RowInput>, first_row_id: usize) -> Vec<MonitorEvent> {
        rows.into_par_iter()
            .enumerate()
            .map(|(i, row)| self.score(first_row_id + i, row))
            .collect()
    }
}

/// Verifies the models against the baseline, then scores every row.
pub fn monitor_stream<I>(
    f: &NetworkParams,
    a: &NetworkParams,
    baseline: &Baseline,
    rows: I,
    config: MonitorConfig,
    names: Vec<String>,
) -> Result<Vec<MonitorEvent>>
where
    I: IntoIterator<Item = RowInput>,
{
    let monitor = Monitor::new(f, a, baseline, config, names)?;
    Ok(monitor.score_batch(rows.into_iter().collect(), 0))
}
