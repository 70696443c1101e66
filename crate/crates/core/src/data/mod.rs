//! Tabular datasets: encoding, synthetic generation, bias injection,
//! counterfactual augmentation and splitting.

mod encode;
mod io;
mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Target;
use crate::{Error, Result};

pub use encode::{ColumnKind, ColumnSpec, EncodeReport, Encoder, RawTable, Schema};
pub use io::{
    augment_raw, encoded_schema, load_csv, load_csv_split, read_raw, read_schema, split_raw,
    write_dataset, write_raw,
    LoadedSplit,
};
pub use synthetic::{
    generate_biased_synthetic, generate_fair_synthetic, inject_label_bias, CausalModelSpec,
    LabelBias,
};

/// Value written into the protected slot when the attribute is unavailable.
pub const IMPUTED_PROTECTED_VALUE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Original,
    FairSynthetic,
    BiasedSynthetic,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureKind {
    Numeric,
    /// One indicator column of a categorical variable.
    OneHot { group: String, level: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureColumn {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureColumn {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }
}

/// Encoded feature matrix with binary labels and a binary protected column.
///
/// Rows are stored contiguously (row-major). Immutable once built; every
/// transformation returns a new dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    columns: Vec<FeatureColumn>,
    features: Vec<f64>,
    labels: Vec<u8>,
    protected: usize,
    label_name: String,
    provenance: Provenance,
}

impl TabularDataset {
    pub fn new(
        columns: Vec<FeatureColumn>,
        features: Vec<f64>,
        labels: Vec<u8>,
        protected: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if features.len() != d * labels.len() {
            return Err(Error::Data(format!(
                "{} feature values do not form {} rows of {d} columns",
                features.len(),
                labels.len()
            )));
        }
        if protected >= d {
            return Err(Error::Data(format!(
                "protected index {protected} out of range for {d} columns"
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Data(format!("label at row {i} is not binary")));
        }
        let data = TabularDataset {
            columns,
            features,
            labels,
            protected,
            label_name: "label".to_string(),
            provenance,
        };
        if let Some(i) = data.rows().position(|r| r[protected] != 0.0 && r[protected] != 1.0) {
            return Err(Error::Data(format!(
                "protected value at row {i} is {}, expected 0 or 1",
                data.row(i)[protected]
            )));
        }
        data.check_one_hot_groups()?;
        Ok(data)
    }

    pub fn with_label_name(mut self, name: impl Into<String>) -> Self {
        self.label_name = name.into();
        self
    }

    /// One-hot groups hold at most one active indicator per row; an all-zero
    /// group marks a level not seen when the encoder was fitted.
    fn check_one_hot_groups(&self) -> Result<()> {
        let groups = self.one_hot_groups();
        for (i, row) in self.rows().enumerate() {
            for (group, cols) in &groups {
                let mut sum = 0.0;
                for &c in cols {
                    let v = row[c];
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::Data(format!(
                            "one-hot column {} at row {i} is {v}",
                            self.columns[c].name
                        )));
                    }
                    sum += v;
                }
                if sum > 1.0 {
                    return Err(Error::Data(format!(
                        "one-hot group {group} has {sum} active levels at row {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Column indices of every one-hot group, in column order.
    pub fn one_hot_groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, c) in self.columns.iter().enumerate() {
            if let FeatureKind::OneHot { group, .. } = &c.kind {
                match groups.iter_mut().find(|(g, _)| g == group) {
                    Some((_, cols)) => cols.push(i),
                    None => groups.push((group.clone(), vec![i])),
                }
            }
        }
        groups
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn protected_index(&self) -> usize {
        self.protected
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.features.chunks_exact(self.n_features())
    }

    pub fn protected_values(&self) -> Vec<u8> {
        self.rows().map(|r| r[self.protected] as u8).collect()
    }

    /// Training targets for the chosen column, as 0.0/1.0.
    pub fn targets(&self, target: Target) -> Result<Vec<f64>> {
        match target {
            Target::Label => Ok(self.labels.iter().map(|&y| y as f64).collect()),
            Target::Protected => {
                let values: Vec<f64> = self.rows().map(|r| r[self.protected]).collect();
                if let Some(i) = values.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Data(format!(
                        "protected target at row {i} is {}, expected 0 or 1",
                        values[i]
                    )));
                }
                Ok(values)
            }
        }
    }

    /// Feature matrix with the protected slot overwritten by
    /// [`IMPUTED_PROTECTED_VALUE`], for models that must not see it.
    pub fn features_with_protected_imputed(&self) -> Vec<f64> {
        let mut out = self.features.clone();
        let d = self.n_features();
        for row in out.chunks_exact_mut(d) {
            row[self.protected] = IMPUTED_PROTECTED_VALUE;
        }
        out
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> TabularDataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        TabularDataset {
            columns: self.columns.clone(),
            features,
            labels,
            protected: self.protected,
            label_name: self.label_name.clone(),
            provenance: self.provenance,
        }
    }

    /// Recovers the level name of each row for a one-hot group; `None` for
    /// all-zero rows.
    pub fn decode_one_hot(&self, group: &str) -> Result<Vec<Option<String>>> {
        let cols: Vec<(usize, &str)> = self
            .columns
            .iter()
            .enumerate()
            .filter_map(|(i, c)| match &c.kind {
                FeatureKind::OneHot { group: g, level } if g == group => Some((i, level.as_str())),
                _ => None,
            })
            .collect();
        if cols.is_empty() {
            return Err(Error::Schema(format!("no one-hot group named {group}")));
        }
        Ok(self
            .rows()
            .map(|r| {
                cols.iter()
                    .find(|(i, _)| r[*i] == 1.0)
                    .map(|(_, level)| level.to_string())
            })
            .collect())
    }
}

/// Appends, after the original rows, one copy of every row with the
/// protected value negated and everything else (label included) unchanged.
pub fn counterfactual_augment(data: &TabularDataset) -> Result<TabularDataset> {
    let p = data.protected;
    if let Some(i) = data.rows().position(|r| r[p] != 0.0 && r[p] != 1.0) {
        return Err(Error::Data(format!(
            "protected value at row {i} is not binary"
        )));
    }
    let mut features = Vec::with_capacity(2 * data.features.len());
    features.extend_from_slice(&data.features);
    for row in data.rows() {
        let start = features.len();
        features.extend_from_slice(row);
        features[start + p] = 1.0 - row[p];
    }
    let mut labels = Vec::with_capacity(2 * data.len());
    labels.extend_from_slice(&data.labels);
    labels.extend_from_slice(&data.labels);
    Ok(TabularDataset {
        columns: data.columns.clone(),
        features,
        labels,
        protected: p,
        label_name: data.label_name.clone(),
        provenance: Provenance::Augmented,
    })
}

/// Seeded permutation of `0..n` split into `(train, test)` index lists with
/// `round(n * test_fraction)` test rows.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Input(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n as f64 * test_fraction).round() as usize;
    let train = order.split_off(n_test);
    Ok((train, order))
}

/// Seeded shuffle-then-split. Returns `(train, test)`.
pub fn train_test_split(
    data: &TabularDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(TabularDataset, TabularDataset)> {
    let (train, test) = split_indices(data.len(), test_fraction, seed)?;
    Ok((data.subset(&train), data.subset(&test)))
}
