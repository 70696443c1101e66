//! Match sets, the prediction-sensitivity distinguisher, ROC/AUC and group
//! fairness metrics.
//!
//! The audited classifier `F` is compared with a counterfactually fair
//! reference `F̂`. Test rows where both give the same hard prediction form
//! the match set; non-members are likely counterfactual-fairness failures.
//! The distinguisher calls a row a member iff `ps ≤ θ`, so in ROC terms the
//! positive class is "non-member" and higher `ps` means more positive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::digest::{dataset_digest, json_digest, params_digest};
use crate::nn::NetworkParams;
use crate::sensitivity::{prediction_sensitivity, SensitivityRecord, SensitivityRow};
use crate::stats::Summary;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSet {
    pub flags: Vec<bool>,
    pub members: usize,
    pub non_members: usize,
}

impl MatchSet {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        let members = flags.iter().filter(|&&f| f).count();
        let non_members = flags.len() - members;
        MatchSet {
            flags,
            members,
            non_members,
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }
}

fn check_dims(model: &NetworkParams, which: &str, data: &TabularDataset) -> Result<()> {
    if model.input_dim() != data.n_features() {
        return Err(Error::Config(format!(
            "{which} takes {} inputs, test data has {} features",
            model.input_dim(),
            data.n_features()
        )));
    }
    Ok(())
}

fn hard_predictions(model: &NetworkParams, data: &TabularDataset) -> Result<Vec<bool>> {
    predictions_on(model, data.features(), data.n_features())
}

fn predictions_on(model: &NetworkParams, inputs: &[f64], d: usize) -> Result<Vec<bool>> {
    inputs.chunks_exact(d).map(|r| model.predict(r)).collect()
}

pub fn build_match_set(
    f: &NetworkParams,
    f_hat: &NetworkParams,
    test: &TabularDataset,
) -> Result<MatchSet> {
    check_dims(f, "classifier", test)?;
    check_dims(f_hat, "reference classifier", test)?;
    let a = hard_predictions(f, test)?;
    let b = hard_predictions(f_hat, test)?;
    Ok(MatchSet::from_flags(
        a.iter().zip(&b).map(|(x, y)| x == y).collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    Member,
    NonMember,
}

/// Member iff `ps ≤ theta`.
pub fn distinguish(ps: f64, theta: f64) -> Membership {
    if ps <= theta {
        Membership::Member
    } else {
        Membership::NonMember
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Rows scoring at least this value are predicted positive. `None` for
    /// the initial point where nothing is predicted positive.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows; the initial point's threshold is `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let t = p.threshold.map_or_else(|| "inf".to_string(), |t| t.to_string());
            out.push_str(&format!("{t},{},{}\n", p.fpr, p.tpr));
        }
        out
    }
}

/// Trapezoidal area under a polyline of `(fpr, tpr)` points.
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum()
}

/// ROC curve of `scores` against `positives`, sweeping the threshold over
/// every distinct score from high to low. Tied scores move together in one
/// step, which makes the area equal to
/// `P(score_pos > score_neg) + ½ P(score_pos = score_neg)`.
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<RocCurve> {
    if scores.len() != positives.len() {
        return Err(Error::Input(format!(
            "{} scores for {} labels",
            scores.len(),
            positives.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Input(format!("score {i} is NaN")));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC needs both classes; got {n_pos} positive and {n_neg} negative"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut points = vec![RocPoint {
        threshold: None,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if positives[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(RocPoint {
            threshold: Some(s),
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

fn positive_rates(preds: &[bool], protected: &[u8]) -> Result<(f64, f64)> {
    if preds.len() != protected.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} protected values",
            preds.len(),
            protected.len()
        )));
    }
    let (mut n1, mut pos1, mut n0, mut pos0) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &z) in preds.iter().zip(protected) {
        match z {
            1 => {
                n1 += 1;
                pos1 += usize::from(p);
            }
            0 => {
                n0 += 1;
                pos0 += usize::from(p);
            }
            other => {
                return Err(Error::Input(format!("protected value {other} is not binary")))
            }
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::UndefinedMetric(format!(
            "a protected group is empty ({n1} protected, {n0} unprotected)"
        )));
    }
    Ok((pos1 as f64 / n1 as f64, pos0 as f64 / n0 as f64))
}

/// `Pr(pred | protected = 1) − Pr(pred | protected = 0)`.
pub fn statistical_parity_difference(preds: &[bool], protected: &[u8]) -> Result<f64> {
    let (r1, r0) = positive_rates(preds, protected)?;
    Ok(r1 - r0)
}

/// `min(r1/r0, r0/r1)` of the groups' positive-prediction rates; 1 is parity.
pub fn disparate_impact_ratio(preds: &[bool], protected: &[u8]) -> Result<f64> {
    let (r1, r0) = positive_rates(preds, protected)?;
    if r1 == 0.0 && r0 == 0.0 {
        return Err(Error::UndefinedMetric(
            "no positive predictions in either group".into(),
        ));
    }
    if r1 == 0.0 || r0 == 0.0 {
        return Ok(0.0);
    }
    Ok((r1 / r0).min(r0 / r1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub positive_rate_protected: Option<f64>,
    pub positive_rate_unprotected: Option<f64>,
    pub statistical_parity_difference: Option<f64>,
    pub disparate_impact_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl GroupMetrics {
    /// Undefined metrics are recorded as `None` with a note instead of
    /// failing the audit.
    pub fn compute(preds: &[bool], protected: &[u8]) -> Result<Self> {
        let mut notes = Vec::new();
        let mut keep = |r: Result<f64>| match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(msg)) => {
                if !notes.contains(&msg) {
                    notes.push(msg);
                }
                Ok(None)
            }
            Err(e) => Err(e),
        };
        let rates = keep(positive_rates(preds, protected).map(|(r1, _)| r1))?;
        let rates0 = keep(positive_rates(preds, protected).map(|(_, r0)| r0))?;
        let spd = keep(statistical_parity_difference(preds, protected))?;
        let dir = keep(disparate_impact_ratio(preds, protected))?;
        Ok(GroupMetrics {
            positive_rate_protected: rates,
            positive_rate_unprotected: rates0,
            statistical_parity_difference: spd,
            disparate_impact_ratio: dir,
            notes,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditOptions {
    pub include_rows: bool,
    pub top_k: usize,
    /// Evaluate every model with the protected slot set to the neutral
    /// value, for classifiers trained without access to it.
    pub exclude_protected: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions {
            include_rows: false,
            top_k: 5,
            exclude_protected: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPair<T> {
    pub classifier: T,
    pub reference: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsSummary {
    pub all: Option<Summary>,
    pub members: Option<Summary>,
    pub non_members: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub row_id: usize,
    pub member: bool,
    pub classifier_probability: f64,
    pub reference_probability: f64,
    #[serde(flatten)]
    pub sensitivity: SensitivityRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub members: usize,
    pub non_members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config_digest: String,
    pub n_rows: usize,
    pub match_counts: MatchCounts,
    /// `None` when the match set has no non-members (or no members) and the
    /// distinguisher's AUC is not applicable; see `auc_note`.
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc_note: Option<String>,
    pub roc: Option<Vec<RocPoint>>,
    pub accuracy: ModelPair<f64>,
    pub group_metrics: ModelPair<GroupMetrics>,
    pub ps_summary: PsSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<AuditRow>>,
}

impl AuditReport {
    pub fn roc_curve(&self) -> Option<RocCurve> {
        Some(RocCurve {
            points: self.roc.clone()?,
            auc: self.auc?,
        })
    }
}

/// Per-row sensitivity of `f` under `a`, computed in parallel; output order
/// matches row order.
pub fn sensitivities(
    a: &NetworkParams,
    f: &NetworkParams,
    data: &TabularDataset,
) -> Result<Vec<SensitivityRecord>> {
    check_dims(a, "protected-status model", data)?;
    check_dims(f, "classifier", data)?;
    (0..data.len())
        .into_par_iter()
        .map(|i| prediction_sensitivity(a, f, data.row(i)))
        .collect()
}

pub fn audit_report(
    f: &NetworkParams,
    f_hat: &NetworkParams,
    a: &NetworkParams,
    test: &TabularDataset,
    options: &AuditOptions,
) -> Result<AuditReport> {
    check_dims(f, "classifier", test)?;
    check_dims(f_hat, "reference classifier", test)?;
    check_dims(a, "protected-status model", test)?;
    let d = test.n_features();
    let imputed;
    let inputs: &[f64] = if options.exclude_protected {
        imputed = test.features_with_protected_imputed();
        &imputed
    } else {
        test.features()
    };

    let preds_f = predictions_on(f, inputs, d)?;
    let preds_ref = predictions_on(f_hat, inputs, d)?;
    let matches = MatchSet::from_flags(preds_f.iter().zip(&preds_ref).map(|(x, y)| x == y).collect());
    let records: Vec<SensitivityRecord> = inputs
        .par_chunks_exact(d)
        .map(|x| prediction_sensitivity(a, f, x))
        .collect::<Result<_>>()?;
    let ps: Vec<f64> = records.iter().map(|r| r.ps).collect();

    let non_member: Vec<bool> = matches.flags.iter().map(|m| !m).collect();
    let (auc, auc_note, roc) = match roc_curve(&ps, &non_member) {
        Ok(curve) => (Some(curve.auc), None, Some(curve.points)),
        Err(Error::UndefinedMetric(msg)) => (None, Some(format!("not applicable: {msg}")), None),
        Err(e) => return Err(e),
    };

    let protected = test.protected_values();
    let accuracy_of = |preds: &[bool]| {
        let correct = preds
            .iter()
            .zip(test.labels())
            .filter(|(p, &y)| **p == (y == 1))
            .count();
        correct as f64 / test.len().max(1) as f64
    };

    let split = |want: bool| -> Vec<f64> {
        ps.iter()
            .zip(&matches.flags)
            .filter(|(_, &m)| m == want)
            .map(|(p, _)| *p)
            .collect()
    };

    let rows = if options.include_rows {
        let names = test.column_names();
        let mut rows = Vec::with_capacity(test.len());
        for (i, rec) in records.iter().enumerate() {
            let x = &inputs[i * d..(i + 1) * d];
            rows.push(AuditRow {
                row_id: i,
                member: matches.flags[i],
                classifier_probability: f.forward(x)?,
                reference_probability: f_hat.forward(x)?,
                sensitivity: SensitivityRow::new(rec, options.top_k, &names)?,
            });
        }
        Some(rows)
    } else {
        None
    };

    let config_digest = json_digest(&[
        params_digest(f),
        params_digest(f_hat),
        params_digest(a),
        dataset_digest(test),
        json_digest(options),
    ]);

    Ok(AuditReport {
        config_digest,
        n_rows: test.len(),
        match_counts: MatchCounts {
            members: matches.members,
            non_members: matches.non_members,
        },
        auc,
        auc_note,
        roc,
        accuracy: ModelPair {
            classifier: accuracy_of(&preds_f),
            reference: accuracy_of(&preds_ref),
        },
        group_metrics: ModelPair {
            classifier: GroupMetrics::compute(&preds_f, &protected)?,
            reference: GroupMetrics::compute(&preds_ref, &protected)?,
        },
        ps_summary: PsSummary {
            all: Summary::of(&ps),
            members: Summary::of(&split(true)),
            non_members: Summary::of(&split(false)),
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureColumn, Provenance};
    use crate::nn::{init_network, Layer, NetworkSpec};
    use proptest::prelude::*;

    fn constant(input_dim: usize, bias: f64) -> NetworkParams {
        NetworkParams {
            spec: NetworkSpec::new(input_dim, vec![], 0),
            layers: vec![Layer {
                rows: 1,
                cols: input_dim,
                weights: vec![0.0; input_dim],
                bias: vec![bias],
            }],
        }
    }

    fn test_data() -> TabularDataset {
        let rows = [[0.2, -1.0, 1.0], [1.5, 0.3, 0.0], [-0.7, 0.9, 1.0], [0.1, 0.1, 0.0]];
        TabularDataset::new(
            vec![
                FeatureColumn::numeric("a"),
                FeatureColumn::numeric("b"),
                FeatureColumn::numeric("p"),
            ],
            rows.iter().flatten().copied().collect(),
            vec![1, 0, 1, 0],
            2,
            Provenance::Original,
        )
        .unwrap()
    }

    /// Pairwise oracle: `P(s+ > s−) + ½ P(s+ = s−)` over all pairs.
    fn pairwise_auc(scores: &[f64], positives: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (i, &pi) in positives.iter().enumerate() {
            if !pi {
                continue;
            }
            for (j, &pj) in positives.iter().enumerate() {
                if pj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    fn protected_only(weight: f64) -> NetworkParams {
        let mut net = constant(3, 0.0);
        net.layers[0].weights[2] = weight;
        net
    }

    #[test]
    fn excluding_protected_imputes_the_slot_for_every_model() {
        let (f, f_hat) = (protected_only(10.0), protected_only(-10.0));
        let a = protected_only(1.0);
        let plain = audit_report(&f, &f_hat, &a, &test_data(), &AuditOptions::default()).unwrap();
        // p = 1 rows disagree; at p = 0 both sit at 0.5 and predict negative
        assert_eq!((plain.match_counts.members, plain.match_counts.non_members), (2, 2));

        let opts = AuditOptions {
            exclude_protected: true,
            ..AuditOptions::default()
        };
        let masked = audit_report(&f, &f_hat, &a, &test_data(), &opts).unwrap();
        assert_eq!((masked.match_counts.members, masked.match_counts.non_members), (0, 4));
        assert_eq!(masked.accuracy.classifier, 0.5);
        // group metrics still use the true protected values
        assert_eq!(masked.group_metrics.classifier.statistical_parity_difference, Some(0.0));
        assert_ne!(plain.config_digest, masked.config_digest);
    }

    #[test]
    fn identical_models_match_everywhere() {
        let f = init_network(&NetworkSpec::new(3, vec![4], 2)).unwrap();
        let m = build_match_set(&f, &f, &test_data()).unwrap();
        assert_eq!((m.members, m.non_members), (4, 0));
        assert!(m.flags.iter().all(|&b| b));
    }

    #[test]
    fn opposite_constant_models_never_match() {
        let m = build_match_set(&constant(3, -5.0), &constant(3, 5.0), &test_data()).unwrap();
        assert_eq!((m.members, m.non_members), (0, 4));
    }

    #[test]
    fn match_set_dimension_mismatch() {
        assert!(matches!(
            build_match_set(&constant(2, 0.0), &constant(3, 0.0), &test_data()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn distinguisher_boundary() {
        assert_eq!(distinguish(0.1, 0.5), Membership::Member);
        assert_eq!(distinguish(0.5, 0.5), Membership::Member);
        assert_eq!(distinguish(0.6, 0.5), Membership::NonMember);
    }

    #[test]
    fn roc_examples() {
        let c = roc_curve(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(c.auc, 1.0);
        let c = roc_curve(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.points.len(), 2);
        assert!(matches!(
            roc_curve(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(roc_curve(&[0.1], &[true, false]), Err(Error::Input(_))));
    }

    #[test]
    fn roc_csv_export() {
        let c = roc_curve(&[0.9, 0.2], &[true, false]).unwrap();
        assert_eq!(c.to_csv(), "threshold,fpr,tpr\ninf,0,0\n0.9,0,1\n0.2,1,1\n");
    }

    #[test]
    fn roc_matches_pairwise_oracle_on_50_random_scores() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        let scores: Vec<f64> = (0..50).map(|_| (rng.random_range(0..20) as f64) / 4.0).collect();
        let mut labels: Vec<bool> = (0..50).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let c = roc_curve(&scores, &labels).unwrap();
        assert!((c.auc - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
    }

    #[test]
    fn parity_examples() {
        let p = [1u8, 1, 0, 0];
        assert_eq!(
            statistical_parity_difference(&[true, false, true, false], &p).unwrap(),
            0.0
        );
        assert_eq!(
            statistical_parity_difference(&[true, true, false, false], &p).unwrap(),
            1.0
        );
        assert_eq!(
            statistical_parity_difference(&[true, false, true, true], &p).unwrap(),
            -0.5
        );
        assert!(matches!(
            statistical_parity_difference(&[true, false], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn disparate_impact_examples() {
        let p = [1u8, 1, 0, 0];
        assert_eq!(disparate_impact_ratio(&[true, false, true, false], &p).unwrap(), 1.0);
        // rates 0.25 vs 0.75
        let protected = [1u8, 1, 1, 1, 0, 0, 0, 0];
        let preds = [true, false, false, false, true, true, true, false];
        let r = disparate_impact_ratio(&preds, &protected).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(disparate_impact_ratio(&[false, false, true, false], &p).unwrap(), 0.0);
        assert!(matches!(
            disparate_impact_ratio(&[false; 4], &p),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn group_metrics_record_undefined_values() {
        let g = GroupMetrics::compute(&[false; 4], &[1, 1, 0, 0]).unwrap();
        assert_eq!(g.statistical_parity_difference, Some(0.0));
        assert_eq!(g.disparate_impact_ratio, None);
        assert_eq!(g.notes.len(), 1);
    }

    #[test]
    fn self_audit_marks_auc_not_applicable() {
        let f = init_network(&NetworkSpec::new(3, vec![4], 2)).unwrap();
        let a = init_network(&NetworkSpec::new(3, vec![4], 3)).unwrap();
        let r = audit_report(&f, &f, &a, &test_data(), &AuditOptions::default()).unwrap();
        assert_eq!(r.auc, None);
        assert!(r.auc_note.as_deref().unwrap().starts_with("not applicable"));
        assert_eq!(r.match_counts.non_members, 0);
        assert!(r.ps_summary.non_members.is_none());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["auc"].is_null());
    }

    #[test]
    fn audit_report_is_deterministic_and_includes_rows() {
        let f = init_network(&NetworkSpec::new(3, vec![4], 2)).unwrap();
        let a = init_network(&NetworkSpec::new(3, vec![4], 3)).unwrap();
        let opts = AuditOptions {
            include_rows: true,
            top_k: 2,
            ..AuditOptions::default()
        };
        let r1 = audit_report(&f, &constant(3, 5.0), &a, &test_data(), &opts).unwrap();
        let r2 = audit_report(&f, &constant(3, 5.0), &a, &test_data(), &opts).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
        let rows = r1.rows.as_ref().unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].sensitivity.top_features.len(), 2);
    }

    proptest! {
        #[test]
        fn roc_invariants(
            data in (2usize..120).prop_flat_map(|n| (
                prop::collection::vec(0u8..12, n),
                prop::collection::vec(any::<bool>(), n),
            ))
        ) {
            let (raw, mut labels) = data;
            labels[0] = true;
            labels[1] = false;
            let scores: Vec<f64> = raw.iter().map(|&s| s as f64 * 0.1).collect();
            let c = roc_curve(&scores, &labels).unwrap();
            let first = &c.points[0];
            let last = c.points.last().unwrap();
            prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in c.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
            prop_assert_eq!(c.auc, trapezoid_auc(&c.points));
            prop_assert!((c.auc - pairwise_auc(&scores, &labels)).abs() <= 1e-12);
        }

        #[test]
        fn distinguisher_is_monotone_in_theta(ps in 0.0f64..10.0, t1 in 0.0f64..10.0, dt in 0.0f64..5.0) {
            if distinguish(ps, t1) == Membership::Member {
                prop_assert_eq!(distinguish(ps, t1 + dt), Membership::Member);
            }
        }

        #[test]
        fn group_metric_symmetries(
            data in (2usize..60).prop_flat_map(|n| (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(0u8..2, n),
            ))
        ) {
            let (preds, mut prot) = data;
            prot[0] = 0;
            prot[1] = 1;
            let swapped: Vec<u8> = prot.iter().map(|z| 1 - z).collect();
            let spd = statistical_parity_difference(&preds, &prot).unwrap();
            let spd_sw = statistical_parity_difference(&preds, &swapped).unwrap();
            prop_assert_eq!(spd, -spd_sw);
            prop_assert!((-1.0..=1.0).contains(&spd));
            match (disparate_impact_ratio(&preds, &prot), disparate_impact_ratio(&preds, &swapped)) {
                (Ok(a), Ok(b)) => { prop_assert_eq!(a, b); prop_assert!((0.0..=1.0).contains(&a)); }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric definedness"),
            }
        }
    }
}
