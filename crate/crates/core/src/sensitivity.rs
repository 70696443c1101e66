//! Protected-status feature weights and prediction sensitivity.
//!
//! For a protected-status model `A` and a classifier `F` over the same
//! inputs:
//!
//! - `psw(x) = |∇A(x)|` weights each feature by how strongly it moves the
//!   protected-status estimate;
//! - `ps(x) = Σ_i psw_i(x) · |∂F/∂x_i(x)|` is the prediction sensitivity.
//!
//! The sum runs in ascending column order so reports are bit-reproducible.
//! Gradients are plain single-point gradients; no smoothing is applied.

use serde::{Deserialize, Serialize};

use crate::nn::NetworkParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub psw: Vec<f64>,
    #[serde(rename = "grad_abs")]
    pub pred_grad_abs: Vec<f64>,
    pub featurewise: Vec<f64>,
    pub ps: f64,
}

impl SensitivityRecord {
    /// Combines raw (signed) input gradients of `A` and `F`.
    pub fn from_gradients(grad_a: &[f64], grad_f: &[f64]) -> Result<Self> {
        if grad_a.len() != grad_f.len() {
            return Err(Error::Config(format!(
                "gradient lengths differ: {} vs {}",
                grad_a.len(),
                grad_f.len()
            )));
        }
        let psw: Vec<f64> = grad_a.iter().map(|g| g.abs()).collect();
        let pred_grad_abs: Vec<f64> = grad_f.iter().map(|g| g.abs()).collect();
        let featurewise: Vec<f64> = psw.iter().zip(&pred_grad_abs).map(|(a, f)| a * f).collect();
        let ps = featurewise.iter().fold(0.0, |acc, v| acc + v);
        Ok(SensitivityRecord {
            psw,
            pred_grad_abs,
            featurewise,
            ps,
        })
    }

    pub fn len(&self) -> usize {
        self.featurewise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.featurewise.is_empty()
    }
}

/// A named feature-wise contribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub name: String,
    pub value: f64,
}

/// `|∇A(x)|`.
pub fn protected_status_weights(a: &NetworkParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(a.input_gradient(x)?.abs())
}

pub fn prediction_sensitivity(
    a: &NetworkParams,
    f: &NetworkParams,
    x: &[f64],
) -> Result<SensitivityRecord> {
    if a.input_dim() != f.input_dim() {
        return Err(Error::Config(format!(
            "protected-status model takes {} inputs, classifier takes {}",
            a.input_dim(),
            f.input_dim()
        )));
    }
    let grad_a = a.input_gradient(x)?;
    let grad_f = f.input_gradient(x)?;
    SensitivityRecord::from_gradients(&grad_a.values, &grad_f.values)
}

/// The `k` largest feature-wise contributions in descending order; equal
/// values keep ascending column order.
pub fn top_features(
    record: &SensitivityRecord,
    k: usize,
    names: &[String],
) -> Result<Vec<FeatureAttribution>> {
    let d = record.len();
    if names.len() != d {
        return Err(Error::Input(format!(
            "{} column names for {d} features",
            names.len()
        )));
    }
    if k > d {
        return Err(Error::Input(format!("k = {k} exceeds {d} features")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        record.featurewise[j]
            .total_cmp(&record.featurewise[i])
            .then(i.cmp(&j))
    });
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| FeatureAttribution {
            name: names[i].clone(),
            value: record.featurewise[i],
        })
        .collect())
}

/// JSON shape of one example: the record plus its top attributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub ps: f64,
    pub psw: Vec<f64>,
    pub grad_abs: Vec<f64>,
    pub featurewise: Vec<f64>,
    pub top_features: Vec<FeatureAttribution>,
}

impl SensitivityRow {
    pub fn new(record: &SensitivityRecord, k: usize, names: &[String]) -> Result<Self> {
        let k = k.min(record.len());
        Ok(SensitivityRow {
            ps: record.ps,
            psw: record.psw.clone(),
            grad_abs: record.pred_grad_abs.clone(),
            featurewise: record.featurewise.clone(),
            top_features: top_features(record, k, names)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, Layer, NetworkSpec};
    use proptest::prelude::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("col{i}")).collect()
    }

    fn linear(weights: Vec<f64>) -> NetworkParams {
        let n = weights.len();
        NetworkParams {
            spec: NetworkSpec::new(n, vec![], 0),
            layers: vec![Layer {
                rows: 1,
                cols: n,
                weights,
                bias: vec![0.0],
            }],
        }
    }

    #[test]
    fn psw_is_absolute_gradient() {
        let r = SensitivityRecord::from_gradients(&[1.0, -2.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(r.psw, vec![1.0, 2.0, 0.0]);
    }

    #[test]
    fn worked_example() {
        let r = SensitivityRecord::from_gradients(&[1.0, -2.0], &[3.0, -1.0]).unwrap();
        assert_eq!(r.ps, 5.0);
        assert_eq!(r.featurewise, vec![3.0, 2.0]);
    }

    #[test]
    fn zero_protected_gradient_gives_zero() {
        let a = linear(vec![0.0, 0.0, 0.0]);
        let f = init_network(&NetworkSpec::new(3, vec![4], 5)).unwrap();
        let x = [0.3, 1.0, -2.0];
        assert_eq!(protected_status_weights(&a, &x).unwrap(), vec![0.0; 3]);
        assert_eq!(prediction_sensitivity(&a, &f, &x).unwrap().ps, 0.0);
    }

    #[test]
    fn copied_protected_column_dominates_weights() {
        // A copies column 1 (the protected column) through one linear unit.
        let a = linear(vec![0.05, 4.0, -0.1, 0.02]);
        let x = [0.7, 1.0, -0.3, 2.0];
        let psw = protected_status_weights(&a, &x).unwrap();
        let argmax = (0..4).max_by(|&i, &j| psw[i].total_cmp(&psw[j])).unwrap();
        assert_eq!(argmax, 1);
    }

    #[test]
    fn mismatched_models_are_config_errors() {
        let a = linear(vec![1.0, 2.0]);
        let f = linear(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            prediction_sensitivity(&a, &f, &[0.0, 0.0]),
            Err(Error::Config(_))
        ));
        let f = linear(vec![1.0, 2.0]);
        assert!(matches!(
            prediction_sensitivity(&a, &f, &[0.0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn top_features_examples() {
        let r = SensitivityRecord {
            psw: vec![1.0; 3],
            pred_grad_abs: vec![0.5, 0.1, 0.9],
            featurewise: vec![0.5, 0.1, 0.9],
            ps: 1.5,
        };
        let top = top_features(&r, 2, &names(3)).unwrap();
        assert_eq!(
            top,
            vec![
                FeatureAttribution { name: "col2".into(), value: 0.9 },
                FeatureAttribution { name: "col0".into(), value: 0.5 },
            ]
        );
        assert!(top_features(&r, 0, &names(3)).unwrap().is_empty());
        assert!(matches!(top_features(&r, 4, &names(3)), Err(Error::Input(_))));

        let ties = SensitivityRecord {
            featurewise: vec![0.3; 4],
            ..r.clone()
        };
        let top: Vec<_> = top_features(&ties, 2, &names(4))
            .unwrap()
            .into_iter()
            .map(|a| a.name)
            .collect();
        assert_eq!(top, vec!["col0", "col1"]);
    }

    #[test]
    fn row_json_shape() {
        let r = SensitivityRecord::from_gradients(&[1.0, -2.0], &[3.0, -1.0]).unwrap();
        let row = SensitivityRow::new(&r, 5, &names(2)).unwrap();
        let v = serde_json::to_value(&row).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 5);
        for k in ["ps", "psw", "grad_abs", "featurewise", "top_features"] {
            assert!(keys.contains(&k));
        }
        assert_eq!(row.top_features.len(), 2);
    }

    fn grads() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|d| {
            (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn record_invariants((ga, gf) in grads()) {
            let r = SensitivityRecord::from_gradients(&ga, &gf).unwrap();
            prop_assert!(r.ps >= 0.0);
            prop_assert!(r.psw.iter().chain(&r.pred_grad_abs).chain(&r.featurewise).all(|v| *v >= 0.0));
            for i in 0..r.len() {
                prop_assert_eq!(r.featurewise[i], r.psw[i] * r.pred_grad_abs[i]);
            }
            let mut sum = 0.0;
            for v in &r.featurewise { sum += v; }
            prop_assert_eq!(sum, r.ps);
            // Hölder: ps ≤ max psw × ‖∇F‖₁
            let max_psw = r.psw.iter().cloned().fold(0.0, f64::max);
            let l1: f64 = r.pred_grad_abs.iter().sum();
            prop_assert!(r.ps <= max_psw * l1 * (1.0 + 1e-12));
        }

        #[test]
        fn zero_law((ga, gf) in grads()) {
            let zeros = vec![0.0; ga.len()];
            prop_assert_eq!(SensitivityRecord::from_gradients(&zeros, &gf).unwrap().ps, 0.0);
            prop_assert_eq!(SensitivityRecord::from_gradients(&ga, &zeros).unwrap().ps, 0.0);
        }

        #[test]
        fn permutation_equivariance(seed in any::<u64>(), perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::{Rng, SeedableRng};
            let d = 5;
            let a = init_network(&NetworkSpec::new(d, vec![6], seed)).unwrap();
            let f = init_network(&NetworkSpec::new(d, vec![4], seed.wrapping_add(1))).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rng);

            // new column j holds old column perm[j]
            let permute_first_layer = |p: &NetworkParams| {
                let mut q = p.clone();
                let l = &mut q.layers[0];
                let old = l.weights.clone();
                for r in 0..l.rows {
                    for j in 0..d {
                        l.weights[r * d + j] = old[r * d + perm[j]];
                    }
                }
                q
            };
            let (ap, fp) = (permute_first_layer(&a), permute_first_layer(&f));
            let xp: Vec<f64> = perm.iter().map(|&k| x[k]).collect();

            let r = prediction_sensitivity(&a, &f, &x).unwrap();
            let rp = prediction_sensitivity(&ap, &fp, &xp).unwrap();
            for (j, &k) in perm.iter().enumerate() {
                prop_assert!((rp.psw[j] - r.psw[k]).abs() <= 1e-15 * (1.0 + r.psw[k]));
                prop_assert!((rp.featurewise[j] - r.featurewise[k]).abs() <= 1e-15 * (1.0 + r.featurewise[k]));
            }
            prop_assert!((rp.ps - r.ps).abs() <= 1e-12 * (1.0 + r.ps));
        }
    }
}
