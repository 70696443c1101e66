//! Seeded multi-trial evaluation.
//!
//! Each trial trains three networks and audits one against another:
//!
//! - `F`, the audited classifier, on the (possibly biased) training split;
//! - `F̂`, a counterfactually fair reference, either on data from the fair
//!   causal model (synthetic only) or on the counterfactually augmented
//!   training split;
//! - `A`, the protected-status model, on `F`'s training split with the
//!   protected column as target.
//!
//! The test split (optionally augmented) feeds [`audit_report`]. Trials are
//! independent and run in parallel; results are collected in seed order, so
//! the report is byte-identical across runs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audit::{audit_report, AuditOptions, AuditReport};
use crate::data::{
    counterfactual_augment, generate_fair_synthetic, inject_label_bias, read_raw, read_schema,
    split_raw, train_test_split, CausalModelSpec, LabelBias, RawTable, Schema, TabularDataset,
};
use crate::digest::json_digest;
use crate::nn::{
    accuracy, init_network, train_on, NetworkParams, NetworkSpec, TrainConfig, TrainReport,
};
use crate::stats::mean_std;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// Two-feature causal-model data; the spec's own seed is ignored in
    /// favour of per-trial seeds.
    Synthetic {
        #[serde(flatten)]
        spec: CausalModelSpec,
    },
    /// A user-supplied CSV with its schema.
    Csv { data: PathBuf, schema: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FairReference {
    /// `F̂` trained on a sample from the fair causal model (synthetic only).
    #[default]
    CausalModel,
    /// `F̂` trained on the counterfactually augmented training split.
    Augmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TestSet {
    Original,
    #[default]
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecipe {
    pub hidden_widths: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for ModelRecipe {
    fn default() -> Self {
        ModelRecipe {
            hidden_widths: vec![32],
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRecipe {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub first_seed: u64,
    pub source: DataSource,
    #[serde(default)]
    pub reference: FairReference,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub test_set: TestSet,
    /// Architecture and training for `F` and `F̂`.
    #[serde(default)]
    pub classifier: ModelRecipe,
    /// Architecture and training for `A`; defaults to the classifier's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_model: Option<ModelRecipe>,
    #[serde(default)]
    pub audit: AuditOptions,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_trials() -> usize {
    30
}
fn default_test_fraction() -> f64 {
    0.2
}

impl ExperimentRecipe {
    /// The synthetic protocol: `F` on biased data (`Pr(protected | y)` =
    /// 0.25/0.75), `F̂` on fair data, biased test set.
    pub fn synthetic(trials: usize) -> Self {
        ExperimentRecipe {
            name: "synthetic".into(),
            trials,
            first_seed: 0,
            source: DataSource::Synthetic {
                spec: CausalModelSpec {
                    bias: Some(LabelBias::default()),
                    ..CausalModelSpec::default()
                },
            },
            reference: FairReference::CausalModel,
            test_fraction: 0.2,
            test_set: TestSet::Original,
            classifier: ModelRecipe::default(),
            protected_model: None,
            audit: AuditOptions::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: ExperimentRecipe = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test_fraction must lie in (0, 1)".into()));
        }
        self.classifier.train.validate()?;
        if let Some(m) = &self.protected_model {
            m.train.validate()?;
        }
        match &self.source {
            DataSource::Synthetic { spec } => {
                spec.validate()?;
            }
            DataSource::Csv { .. } => {
                if self.reference == FairReference::CausalModel {
                    return Err(Error::Config(
                        "a CSV source has no known causal model; use reference \"augmentation\""
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials as u64).map(|t| self.first_seed + t).collect()
    }

    fn protected_recipe(&self) -> &ModelRecipe {
        self.protected_model.as_ref().unwrap_or(&self.classifier)
    }
}

/// SplitMix64 of `seed` mixed with a stream id; gives independent seeds per
/// purpose within one trial.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream ids passed to [`derive_seed`] for each purpose within a trial.
pub mod stream {
    pub const FAIR_DATA: u64 = 0;
    pub const BASE_DATA: u64 = 1;
    pub const BIAS: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const FAIR_SPLIT: u64 = 4;
    pub const CLASSIFIER: u64 = 10;
    pub const REFERENCE: u64 = 20;
    pub const PROTECTED: u64 = 30;
}

/// Accuracies on the original (unaugmented) test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAccuracy {
    pub classifier: f64,
    pub reference: f64,
    /// `A`'s accuracy at predicting the protected attribute on the test set.
    pub protected_model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub train_rows: usize,
    pub reference_train_rows: usize,
    pub test_rows: usize,
    pub audited_rows: usize,
    pub accuracy: TrialAccuracy,
    pub report: AuditReport,
}

impl TrialResult {
    pub fn non_member_ps_exceeds_member(&self) -> Option<bool> {
        let s = &self.report.ps_summary;
        Some(s.non_members.as_ref()?.mean > s.members.as_ref()?.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    fn of(values: &[f64]) -> Option<Self> {
        mean_std(values).map(|(mean, std)| MeanStd {
            mean,
            std,
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub trials: usize,
    /// Over trials where the AUC is defined.
    pub auc: Option<MeanStd>,
    pub trials_with_undefined_auc: usize,
    pub trials_non_member_ps_higher: usize,
    pub accuracy_classifier: Option<MeanStd>,
    pub accuracy_reference: Option<MeanStd>,
    pub accuracy_protected_model: Option<MeanStd>,
    pub abs_spd_classifier: Option<MeanStd>,
    pub abs_spd_reference: Option<MeanStd>,
    pub dir_classifier: Option<MeanStd>,
    pub dir_reference: Option<MeanStd>,
    /// Trials where `|SPD(F̂)| < |SPD(F)|`.
    pub trials_reference_spd_smaller: usize,
    /// Trials where `DIR(F̂)` is closer to 1 than `DIR(F)`.
    pub trials_reference_dir_closer: usize,
}

impl ExperimentSummary {
    pub fn from_trials(trials: &[TrialResult]) -> Self {
        let collect = |f: &dyn Fn(&TrialResult) -> Option<f64>| -> Vec<f64> {
            trials.iter().filter_map(f).collect()
        };
        let aucs = collect(&|t| t.report.auc);
        let spd = |t: &TrialResult, reference: bool| {
            let g = &t.report.group_metrics;
            let m = if reference { &g.reference } else { &g.classifier };
            m.statistical_parity_difference.map(f64::abs)
        };
        let dir = |t: &TrialResult, reference: bool| {
            let g = &t.report.group_metrics;
            let m = if reference { &g.reference } else { &g.classifier };
            m.disparate_impact_ratio
        };
        ExperimentSummary {
            trials: trials.len(),
            auc: MeanStd::of(&aucs),
            trials_with_undefined_auc: trials.len() - aucs.len(),
            trials_non_member_ps_higher: trials
                .iter()
                .filter(|t| t.non_member_ps_exceeds_member() == Some(true))
                .count(),
            accuracy_classifier: MeanStd::of(&collect(&|t| Some(t.accuracy.classifier))),
            accuracy_reference: MeanStd::of(&collect(&|t| Some(t.accuracy.reference))),
            accuracy_protected_model: MeanStd::of(&collect(&|t| Some(t.accuracy.protected_model))),
            abs_spd_classifier: MeanStd::of(&collect(&|t| spd(t, false))),
            abs_spd_reference: MeanStd::of(&collect(&|t| spd(t, true))),
            dir_classifier: MeanStd::of(&collect(&|t| dir(t, false))),
            dir_reference: MeanStd::of(&collect(&|t| dir(t, true))),
            trials_reference_spd_smaller: trials
                .iter()
                .filter(|t| matches!((spd(t, true), spd(t, false)), (Some(r), Some(c)) if r < c))
                .count(),
            trials_reference_dir_closer: trials
                .iter()
                .filter(|t| {
                    matches!((dir(t, true), dir(t, false)), (Some(r), Some(c)) if (1.0 - r) < (1.0 - c))
                })
                .count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub recipe_digest: String,
    pub recipe: ExperimentRecipe,
    pub summary: ExperimentSummary,
    pub trials: Vec<TrialResult>,
}

/// Loaded inputs shared by all trials.
enum Prepared {
    Synthetic(CausalModelSpec),
    Csv { table: RawTable, schema: Schema },
}

pub fn run_experiment(recipe: &ExperimentRecipe) -> Result<ExperimentReport> {
    recipe.validate()?;
    let source = PreparedSource::load(recipe)?;
    let trials = recipe
        .seeds()
        .into_par_iter()
        .map(|seed| run_trial(recipe, &source, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        recipe_digest: json_digest(recipe),
        recipe: recipe.clone(),
        summary: ExperimentSummary::from_trials(&trials),
        trials,
    })
}

/// Builds `(F's training data, F̂'s training data, test data)` for one trial.
fn trial_data(
    recipe: &ExperimentRecipe,
    prepared: &Prepared,
    seed: u64,
) -> Result<(TabularDataset, TabularDataset, TabularDataset)> {
    let (train, test, fair_train) = match prepared {
        Prepared::Synthetic(spec) => {
            let base = generate_fair_synthetic(&CausalModelSpec {
                bias: None,
                seed: derive_seed(seed, stream::BASE_DATA),
                ..spec.clone()
            })?;
            let observed = match spec.bias {
                Some(b) => inject_label_bias(
                    &base,
                    b.p_protected_given_positive,
                    b.p_protected_given_negative,
                    derive_seed(seed, stream::BIAS),
                )?,
                None => base,
            };
            let (train, test) =
                train_test_split(&observed, recipe.test_fraction, derive_seed(seed, stream::SPLIT))?;
            let fair_train = match recipe.reference {
                FairReference::CausalModel => {
                    let fair = generate_fair_synthetic(&CausalModelSpec {
                        bias: None,
                        seed: derive_seed(seed, stream::FAIR_DATA),
                        ..spec.clone()
                    })?;
                    let (fair_train, _) = train_test_split(
                        &fair,
                        recipe.test_fraction,
                        derive_seed(seed, stream::FAIR_SPLIT),
                    )?;
                    Some(fair_train)
                }
                FairReference::Augmentation => None,
            };
            (train, test, fair_train)
        }
        Prepared::Csv { table, schema } => {
            let split = split_raw(
                table,
                schema,
                recipe.test_fraction,
                derive_seed(seed, stream::SPLIT),
            )?;
            (split.train, split.test, None)
        }
    };
    let reference_train = match fair_train {
        Some(d) => d,
        None => counterfactual_augment(&train)?,
    };
    Ok((train, reference_train, test))
}

/// Trains a fresh network whose init and shuffle seeds are derived from
/// `seed` on `stream` and `stream + 1`.
pub fn train_seeded(
    model: &ModelRecipe,
    features: &[f64],
    n_features: usize,
    targets: &[f64],
    seed: u64,
    stream: u64,
) -> Result<TrainReport> {
    let spec = NetworkSpec::new(
        n_features,
        model.hidden_widths.clone(),
        derive_seed(seed, stream),
    );
    let cfg = TrainConfig {
        shuffle_seed: derive_seed(seed, stream + 1),
        ..model.train.clone()
    };
    train_on(init_network(&spec)?, features, n_features, targets, &cfg)
}

fn fit(
    model: &ModelRecipe,
    features: &[f64],
    n_features: usize,
    targets: &[f64],
    seed: u64,
    stream: u64,
) -> Result<NetworkParams> {
    Ok(train_seeded(model, features, n_features, targets, seed, stream)?.params)
}

/// Opaque handle to inputs loaded once for all trials.
pub struct PreparedSource(Prepared);

impl PreparedSource {
    pub fn load(recipe: &ExperimentRecipe) -> Result<Self> {
        Ok(PreparedSource(match &recipe.source {
            DataSource::Synthetic { spec } => Prepared::Synthetic(spec.clone()),
            DataSource::Csv { data, schema } => Prepared::Csv {
                table: read_raw(data)?,
                schema: read_schema(schema)?,
            },
        }))
    }
}

pub fn run_trial(recipe: &ExperimentRecipe, source: &PreparedSource, seed: u64) -> Result<TrialResult> {
    let (train, reference_train, test) = trial_data(recipe, &source.0, seed)?;
    let d = train.n_features();

    let label_targets = |data: &TabularDataset| -> Vec<f64> {
        data.labels().iter().map(|&y| y as f64).collect()
    };
    let classifier_inputs = |data: &TabularDataset| -> Vec<f64> {
        if recipe.audit.exclude_protected {
            data.features_with_protected_imputed()
        } else {
            data.features().to_vec()
        }
    };
    let f = fit(
        &recipe.classifier,
        &classifier_inputs(&train),
        d,
        &label_targets(&train),
        seed,
        stream::CLASSIFIER,
    )?;
    let f_hat = fit(
        &recipe.classifier,
        &classifier_inputs(&reference_train),
        d,
        &label_targets(&reference_train),
        seed,
        stream::REFERENCE,
    )?;
    let a = fit(
        recipe.protected_recipe(),
        train.features(),
        d,
        &train.targets(crate::nn::Target::Protected)?,
        seed,
        stream::PROTECTED,
    )?;

    let audited = match recipe.test_set {
        TestSet::Original => test.clone(),
        TestSet::Augmented => counterfactual_augment(&test)?,
    };
    let report = audit_report(&f, &f_hat, &a, &audited, &recipe.audit)?;
    let test_labels = label_targets(&test);
    Ok(TrialResult {
        seed,
        train_rows: train.len(),
        reference_train_rows: reference_train.len(),
        test_rows: test.len(),
        audited_rows: audited.len(),
        accuracy: TrialAccuracy {
            classifier: accuracy(&f, &classifier_inputs(&test), d, &test_labels),
            reference: accuracy(&f_hat, &classifier_inputs(&test), d, &test_labels),
            protected_model: accuracy(
                &a,
                test.features(),
                d,
                &test.targets(crate::nn::Target::Protected)?,
            ),
        },
        report,
    })
}

/// Writes `report.json`, `summary.csv` and per-trial `report.json` /
/// `roc.csv` files under `dir`.
pub fn write_experiment(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |path: PathBuf, text: String| fs::write(&path, text).map_err(|e| Error::io(path, e));

    write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;

    let mut csv = String::from(
        "seed,auc,members,non_members,mean_ps_members,mean_ps_non_members,\
         accuracy_classifier,accuracy_reference,spd_classifier,spd_reference,\
         dir_classifier,dir_reference\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in &report.trials {
        let r = &t.report;
        let g = &r.group_metrics;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            t.seed,
            opt(r.auc),
            r.match_counts.members,
            r.match_counts.non_members,
            opt(r.ps_summary.members.as_ref().map(|s| s.mean)),
            opt(r.ps_summary.non_members.as_ref().map(|s| s.mean)),
            t.accuracy.classifier,
            t.accuracy.reference,
            opt(g.classifier.statistical_parity_difference),
            opt(g.reference.statistical_parity_difference),
            opt(g.classifier.disparate_impact_ratio),
            opt(g.reference.disparate_impact_ratio),
        ));
    }
    write(dir.join("summary.csv"), csv)?;

    for t in &report.trials {
        let trial_dir = dir.join(format!("trial-{:03}", t.seed));
        fs::create_dir_all(&trial_dir).map_err(|e| Error::io(&trial_dir, e))?;
        write(
            trial_dir.join("report.json"),
            serde_json::to_string_pretty(&t.report)? + "\n",
        )?;
        if let Some(curve) = t.report.roc_curve() {
            write(trial_dir.join("roc.csv"), curve.to_csv())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream_and_seed() {
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..30 {
            for s in [0, 1, 2, 3, 4, 10, 11, 20, 21, 30, 31] {
                assert!(seen.insert(derive_seed(seed, s)));
            }
        }
    }

    #[test]
    fn recipe_defaults_and_validation() {
        let r = ExperimentRecipe::from_json(r#"{"source": {"kind": "synthetic", "n_samples": 100}}"#)
            .unwrap();
        assert_eq!(r.trials, 30);
        assert_eq!(r.classifier.hidden_widths, vec![32]);
        assert_eq!(r.classifier.train.epochs, 40);
        assert_eq!(r.seeds().len(), 30);

        let err = ExperimentRecipe::from_json(
            r#"{"source": {"kind": "csv", "data": "a.csv", "schema": "a.json"}}"#,
        );
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(ExperimentRecipe::from_json(r#"{"source": {"kind": "synthetic"}, "bogus": 1}"#).is_err());
    }

    #[test]
    fn small_synthetic_run_is_deterministic() {
        let mut recipe = ExperimentRecipe::synthetic(2);
        if let DataSource::Synthetic { spec } = &mut recipe.source {
            spec.n_samples = 400;
        }
        recipe.classifier.train.epochs = 3;
        let a = run_experiment(&recipe).unwrap();
        let b = run_experiment(&recipe).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.trials.len(), 2);
        assert_eq!(a.trials[0].test_rows, 80);
        assert_eq!(a.trials[0].train_rows, 320);
    }
}
