//! Sparse logistic models: training, prediction, and coefficient introspection.
//!
//! The positive class is "unfamiliar" for the familiarity task (and "needed"
//! for information-need targets): `predict_proba` is the probability of the
//! positive class.

pub mod logistic;
pub mod select;

use serde::{Deserialize, Serialize};

pub use logistic::{
    coordinate_descent, objective_and_gradient, CdOptions, Convergence, Matrix, ObjectiveEval, Solution,
};
pub use select::{fit_model, lambda_grid, CvSummary, LambdaPolicy, SelectionRule};

use crate::dataset::Familiarity;
use crate::error::{Error, Result};
use crate::features::standardize::{fit_standardizer, StandardizerStats};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A standardized design matrix with the statistics used to produce it.
#[derive(Debug, Clone)]
pub struct Design {
    pub feature_names: Vec<String>,
    pub x: Matrix,
    pub standardizer: StandardizerStats,
}

impl Design {
    /// Fits the standardizer on `rows` and standardizes them.
    pub fn fit(feature_names: Vec<String>, rows: &[Vec<f64>], passthrough: &[bool]) -> Result<Self> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature rows"));
        }
        let standardizer = fit_standardizer(rows, passthrough)?;
        if feature_names.len() != standardizer.width() {
            return Err(Error::Shape("feature names do not match row width".into()));
        }
        let z: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.apply(r)).collect::<Result<_>>()?;
        Ok(Self {
            feature_names,
            x: Matrix::from_rows(&z)?,
            standardizer,
        })
    }

    /// Wraps an already standardized matrix with an identity standardizer.
    pub fn standardized(feature_names: Vec<String>, x: Matrix) -> Result<Self> {
        if feature_names.len() != x.cols() {
            return Err(Error::Shape("feature names do not match columns".into()));
        }
        let standardizer = StandardizerStats::identity(x.cols());
        Ok(Self {
            feature_names,
            x,
            standardizer,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub standardizer: StandardizerStats,
    pub seed: u64,
    pub convergence: Convergence,
}

/// Fits an L1-regularized logistic regression on a standardized design.
pub fn train_l1_logistic(design: &Design, y: &[f64], lambda: f64, opts: &CdOptions) -> Result<TrainedModel> {
    train_warm(design, y, lambda, opts, None)
}

pub(crate) fn train_warm(
    design: &Design,
    y: &[f64],
    lambda: f64,
    opts: &CdOptions,
    warm: Option<(&[f64], f64)>,
) -> Result<TrainedModel> {
    let sol = coordinate_descent(&design.x, y, lambda, opts, warm)?;
    if sol.weights.iter().any(|w| !w.is_finite()) || !sol.intercept.is_finite() {
        return Err(Error::NonFinite("fitted coefficients"));
    }
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        feature_names: design.feature_names.clone(),
        weights: sol.weights,
        intercept: sol.intercept,
        lambda,
        standardizer: design.standardizer.clone(),
        seed: opts.seed,
        convergence: sol.convergence,
    })
}

impl TrainedModel {
    /// Logit for a raw (unstandardized) row; names are not checked.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        let z = self.standardizer.apply(x)?;
        Ok(self.intercept + self.weights.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>())
    }

    /// Positive-class probability for a raw row whose columns are `feature_names`.
    pub fn predict_proba(&self, feature_names: &[String], x: &[f64]) -> Result<f64> {
        if feature_names != self.feature_names.as_slice() {
            return Err(Error::FeatureMismatch {
                expected: self.feature_names.clone(),
                actual: feature_names.to_vec(),
            });
        }
        Ok(logistic::sigmoid(self.logit(x)?))
    }

    pub fn predict_positive(&self, feature_names: &[String], x: &[f64], threshold: f64) -> Result<bool> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::Validation(format!(
                "threshold must lie in (0, 1), got {threshold}"
            )));
        }
        Ok(self.predict_proba(feature_names, x)? >= threshold)
    }

    /// Familiarity class at `threshold` (0.5 in the standard protocol).
    pub fn predict_label(&self, feature_names: &[String], x: &[f64], threshold: f64) -> Result<Familiarity> {
        Ok(if self.predict_positive(feature_names, x, threshold)? {
            Familiarity::Unfamiliar
        } else {
            Familiarity::Familiar
        })
    }

    /// Features with `|weight| > eps`, largest magnitude first.
    pub fn nonzero_coefficients(&self, eps: f64) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| w.abs() > eps)
            .map(|(n, &w)| (n.clone(), w))
            .collect();
        v.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        v
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            format_version: u32,
        }
        let probe: Probe = serde_json::from_str(text)?;
        if probe.format_version > MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: probe.format_version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let m: Self = serde_json::from_str(text)?;
        if m.weights.len() != m.feature_names.len() || m.standardizer.width() != m.weights.len() {
            return Err(Error::Shape(
                "model weights, names and standardizer differ in length".into(),
            ));
        }
        Ok(m)
    }
}

/// Default threshold on the positive-class probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Default magnitude below which a coefficient counts as zero.
pub const DEFAULT_EPS: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;

    fn model(weights: Vec<f64>, intercept: f64) -> TrainedModel {
        let d = weights.len();
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            feature_names: (0..d).map(|i| format!("f{i}")).collect(),
            weights,
            intercept,
            lambda: 0.1,
            standardizer: StandardizerStats::identity(d),
            seed: 7,
            convergence: Convergence {
                iterations: 3,
                final_objective: 0.5,
                tolerance_met: true,
            },
        }
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = model(vec![0.0; 3], 0.0);
        let names = m.feature_names.clone();
        assert_eq!(m.predict_proba(&names, &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(
            m.predict_label(&names, &[1.0, 2.0, 3.0], 0.5).unwrap(),
            Familiarity::Unfamiliar
        );
    }

    #[test]
    fn proba_matches_hand_sigmoid() {
        let mut m = model(vec![0.5, -1.25], 0.3);
        m.standardizer.means = vec![1.0, 2.0];
        m.standardizer.stds = vec![2.0, 0.5];
        let names = m.feature_names.clone();
        let p = m.predict_proba(&names, &[3.0, 2.5]).unwrap();
        // z = (1, 1); logit = 0.3 + 0.5 - 1.25 = -0.45
        let oracle = 1.0 / (1.0 + 0.45f64.exp());
        assert!((p - oracle).abs() < 1e-15);
    }

    #[test]
    fn label_threshold_rules() {
        // logit ln(0.49/0.51) gives proba 0.49
        let m = model(vec![], (0.49f64 / 0.51).ln());
        assert_eq!(m.predict_label(&[], &[], 0.5).unwrap(), Familiarity::Familiar);
        assert_eq!(m.predict_label(&[], &[], 0.3).unwrap(), Familiarity::Unfamiliar);
        assert!(m.predict_label(&[], &[], 1.0).is_err());
        let mut prev = true;
        for k in 1..100 {
            let pos = m.predict_positive(&[], &[], k as f64 / 100.0).unwrap();
            assert!(prev || !pos, "raising the threshold flipped negative to positive");
            prev = pos;
        }
    }

    #[test]
    fn proba_monotone_in_intercept() {
        let mut prev = 0.0;
        for b in -20..20 {
            let m = model(vec![1.0], b as f64);
            let p = m.predict_proba(&m.feature_names.clone(), &[0.3]).unwrap();
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn feature_mismatch() {
        let m = model(vec![1.0], 0.0);
        assert!(matches!(
            m.predict_proba(&["other".into()], &[1.0]),
            Err(Error::FeatureMismatch { .. })
        ));
    }

    #[test]
    fn nonzero_sorted() {
        let m = model(vec![0.0, 0.3, -0.7], 0.0);
        let nz = m.nonzero_coefficients(DEFAULT_EPS);
        assert_eq!(nz, vec![("f2".to_string(), -0.7), ("f1".to_string(), 0.3)]);
        assert!(model(vec![0.0; 4], 1.0).nonzero_coefficients(DEFAULT_EPS).is_empty());
    }

    #[test]
    fn json_roundtrip_bitwise_and_version_guard() {
        let m = model(vec![0.1 + 0.2, -1.0 / 3.0, 1e-300], std::f64::consts::PI);
        let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.weights.iter().zip(&m.weights) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let mut future: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        future["format_version"] = 2.into();
        assert!(matches!(
            TrainedModel::from_json(&future.to_string()),
            Err(Error::FormatVersion { found: 2, .. })
        ));
    }
}
