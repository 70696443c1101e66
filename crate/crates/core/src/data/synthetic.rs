//! Two-feature synthetic data from a known causal model.
//!
//! The fair model draws the label, then two Gaussian features around the
//! label's class mean, then a protected attribute from a fair coin that is
//! independent of everything else. The biased model re-draws the protected
//! attribute conditionally on the label, creating a dependence between
//! protected status and outcome.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FeatureColumn, Provenance, TabularDataset};
use crate::{Error, Result};

pub const SYNTHETIC_COLUMNS: [&str; 3] = ["x1", "x2", "protected"];

/// `Pr(protected = 1 | label)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelBias {
    pub p_protected_given_positive: f64,
    pub p_protected_given_negative: f64,
}

impl Default for LabelBias {
    fn default() -> Self {
        LabelBias {
            p_protected_given_positive: 0.25,
            p_protected_given_negative: 0.75,
        }
    }
}

impl LabelBias {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_protected_given_positive", self.p_protected_given_positive),
            ("p_protected_given_negative", self.p_protected_given_negative),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Input(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CausalModelSpec {
    pub n_samples: usize,
    /// Cluster centre for label 0, then label 1.
    pub class_means: [[f64; 2]; 2],
    pub class_stddev: f64,
    /// Absent: protected status independent of the label. Present: drawn
    /// conditionally on the label.
    pub bias: Option<LabelBias>,
    pub seed: u64,
}

impl Default for CausalModelSpec {
    fn default() -> Self {
        CausalModelSpec {
            n_samples: 5000,
            class_means: [[-1.0, -1.0], [1.0, 1.0]],
            class_stddev: 1.0,
            bias: None,
            seed: 0,
        }
    }
}

impl CausalModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Input("n_samples must be at least 1".into()));
        }
        if !(self.class_stddev > 0.0 && self.class_stddev.is_finite()) {
            return Err(Error::Input("class_stddev must be positive".into()));
        }
        if self.class_means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::Input("class_means must be finite".into()));
        }
        if self.class_means[0] == self.class_means[1] {
            return Err(Error::Input("class_means must be distinct".into()));
        }
        if let Some(bias) = &self.bias {
            bias.validate()?;
        }
        Ok(())
    }
}

fn synthetic_columns() -> Vec<FeatureColumn> {
    SYNTHETIC_COLUMNS.iter().map(|c| FeatureColumn::numeric(*c)).collect()
}

/// Samples the fair causal model. `spec.bias` must be absent.
pub fn generate_fair_synthetic(spec: &CausalModelSpec) -> Result<TabularDataset> {
    spec.validate()?;
    if spec.bias.is_some() {
        return Err(Error::Input(
            "fair generation requires a spec without bias; use generate_biased_synthetic".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.class_stddev)
        .map_err(|e| Error::Input(format!("class_stddev: {e}")))?;
    let mut features = Vec::with_capacity(3 * spec.n_samples);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let y = u8::from(rng.random_bool(0.5));
        let mean = spec.class_means[y as usize];
        features.push(mean[0] + noise.sample(&mut rng));
        features.push(mean[1] + noise.sample(&mut rng));
        features.push(if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        labels.push(y);
    }
    TabularDataset::new(synthetic_columns(), features, labels, 2, Provenance::FairSynthetic)
}

/// Re-draws the protected attribute of every row so that
/// `Pr(protected = 1) = p_pos` for positive rows and `p_neg` otherwise.
/// Every other column is left untouched.
pub fn inject_label_bias(
    data: &TabularDataset,
    p_pos: f64,
    p_neg: f64,
    seed: u64,
) -> Result<TabularDataset> {
    LabelBias {
        p_protected_given_positive: p_pos,
        p_protected_given_negative: p_neg,
    }
    .validate()?;
    if data.provenance() != Provenance::FairSynthetic {
        return Err(Error::Input(format!(
            "bias injection expects fair synthetic data, got {:?}",
            data.provenance()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = data.protected_index();
    let d = data.n_features();
    let mut features = data.features().to_vec();
    for (row, &y) in features.chunks_exact_mut(d).zip(data.labels()) {
        let prob = if y == 1 { p_pos } else { p_neg };
        row[p] = if rng.random_bool(prob) { 1.0 } else { 0.0 };
    }
    Ok(TabularDataset::new(
        data.columns().to_vec(),
        features,
        data.labels().to_vec(),
        p,
        Provenance::BiasedSynthetic,
    )?
    .with_label_name(data.label_name().to_string()))
}

/// Samples the fair model, then injects `spec.bias` (defaulting to
/// 0.25/0.75) with a seed derived from `spec.seed`.
pub fn generate_biased_synthetic(spec: &CausalModelSpec) -> Result<TabularDataset> {
    let bias = spec.bias.unwrap_or_default();
    let fair = generate_fair_synthetic(&CausalModelSpec {
        bias: None,
        ..spec.clone()
    })?;
    inject_label_bias(
        &fair,
        bias.p_protected_given_positive,
        bias.p_protected_given_negative,
        spec.seed ^ 0x9E37_79B9_7F4A_7C15,
    )
}
