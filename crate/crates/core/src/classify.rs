//! Ridge-regularised LDA with a logistic confidence, and the
//! confidence-threshold late fusion of an EEG and a gaze prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data_model::Condition;
use crate::eeg_features::FeatureVector;
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE_SCALE: f64 = 1e-6;
pub const DEFAULT_TAU: f64 = 0.7;

/// Linear decision function; negative scores mean Real, positive Virtual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Condition,
    /// Logistic of |score|, so always in [0.5, 1].
    pub confidence: f64,
    pub score: f64,
}

impl Prediction {
    pub fn from_score(score: f64) -> Self {
        let label = if score > 0.0 {
            Condition::Virtual
        } else {
            Condition::Real
        };
        Self {
            label,
            confidence: 1.0 / (1.0 + (-score.abs()).exp()),
            score,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Eeg,
    Gaze,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedPrediction {
    pub prediction: Prediction,
    pub decided_by: Modality,
}

fn check_names(expected: &[String], got: &[String]) -> Result<()> {
    if expected != got {
        return Err(Error::NameMismatch(format!(
            "expected [{}], got [{}]",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}

/// Fits LDA with equal priors. `labels[i]` is the class of `features[i]`.
pub fn fit_lda(features: &[FeatureVector], labels: &[Condition], ridge_scale: f64) -> Result<LdaModel> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let Some(first) = features.first() else {
        return Err(Error::SingleClassTraining);
    };
    for f in features {
        check_names(&first.names, &f.names)?;
    }
    let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
    fit_lda_rows(&rows, labels, first.names.clone(), ridge_scale)
}

/// Same as [`fit_lda`] on raw rows that share `names`.
pub fn fit_lda_rows(rows: &[&[f64]], labels: &[Condition], names: Vec<String>, ridge_scale: f64) -> Result<LdaModel> {
    let d = names.len();
    if d == 0 {
        return Err(Error::NameMismatch("empty feature set".into()));
    }
    let mut sums = [DVector::zeros(d), DVector::zeros(d)];
    let mut counts = [0usize; 2];
    for (r, &c) in rows.iter().zip(labels) {
        if r.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        sums[c as usize] += DVector::from_column_slice(r);
        counts[c as usize] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::SingleClassTraining);
    }
    let means = [&sums[0] / counts[0] as f64, &sums[1] / counts[1] as f64];
    let mut scatter = DMatrix::zeros(d, d);
    for (r, &c) in rows.iter().zip(labels) {
        let dev = DVector::from_column_slice(r) - &means[c as usize];
        scatter.syger(1.0, &dev, &dev, 1.0);
    }
    let dof = (rows.len().saturating_sub(2)).max(1) as f64;
    let mut pooled = scatter / dof;
    let ridge = ridge_scale * pooled.trace() / d as f64;
    for i in 0..d {
        pooled[(i, i)] += ridge;
    }
    // syger only fills the lower triangle
    pooled.fill_upper_triangle_with_lower_triangle();

    let diff = &means[1] - &means[0];
    let w = match pooled.clone().cholesky() {
        Some(ch) => ch.solve(&diff),
        None => pooled.lu().solve(&diff).ok_or(Error::DegenerateFeatures)?,
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFeatures);
    }
    let mid = (&means[0] + &means[1]) * 0.5;
    let bias = -w.dot(&mid);
    Ok(LdaModel {
        weights: w.iter().copied().collect(),
        bias,
        feature_names: names,
    })
}

impl LdaModel {
    pub fn score(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Predicts from values already in model order.
    pub fn predict_values(&self, values: &[f64]) -> Result<Prediction> {
        if values.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: values.len(),
            });
        }
        Ok(Prediction::from_score(self.score(values)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: LdaModel = serde_json::from_str(s)?;
        if m.feature_names.is_empty() || m.weights.len() != m.feature_names.len() {
            return Err(Error::InvariantViolation("LDA weights do not match feature names".into()));
        }
        if !m.bias.is_finite() || m.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvariantViolation("LDA weights must be finite".into()));
        }
        Ok(m)
    }
}

/// Applies the model by feature name, so permuted inputs predict the same.
pub fn predict(model: &LdaModel, f: &FeatureVector) -> Result<Prediction> {
    if f.names == model.feature_names {
        return model.predict_values(&f.values);
    }
    let mut ordered = Vec::with_capacity(model.feature_names.len());
    for name in &model.feature_names {
        match f.names.iter().position(|n| n == name) {
            Some(i) => ordered.push(f.values[i]),
            None => return Err(Error::NameMismatch(format!("feature {name} missing from input"))),
        }
    }
    if f.names.len() != ordered.len() {
        return Err(Error::NameMismatch(format!(
            "input has {} features, model expects {}",
            f.names.len(),
            ordered.len()
        )));
    }
    model.predict_values(&ordered)
}

/// EEG decides when strictly more confident than `tau`, gaze otherwise.
pub fn fuse(eeg: Prediction, gaze: Prediction, tau: f64) -> FusedPrediction {
    if eeg.confidence > tau {
        FusedPrediction {
            prediction: eeg,
            decided_by: Modality::Eeg,
        }
    } else {
        FusedPrediction {
            prediction: gaze,
            decided_by: Modality::Gaze,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: Vec<f64>) -> FeatureVector {
        let names = (0..values.len()).map(|i| format!("f{i}")).collect();
        FeatureVector { names, values }
    }

    #[test]
    fn one_dimensional_midpoint() {
        let xs = [-1.0, 1.0, 1.0, 3.0];
        let labels = [Condition::Real, Condition::Real, Condition::Virtual, Condition::Virtual];
        let f: Vec<_> = xs.iter().map(|&x| fv(vec![x])).collect();
        let m = fit_lda(&f, &labels, 1e-6).unwrap();
        let boundary = -m.bias / m.weights[0];
        assert!((boundary - 1.0).abs() < 1e-9);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn tie_and_logistic() {
        let p = Prediction::from_score(0.0);
        assert_eq!(p.label, Condition::Real);
        assert_eq!(p.confidence, 0.5);
        let p = Prediction::from_score(3.0);
        assert_eq!(p.label, Condition::Virtual);
        assert!((p.confidence - 0.952_574_126_822_433_4).abs() < 1e-12);
    }

    #[test]
    fn permuted_names_predict_identically() {
        let m = LdaModel {
            weights: vec![1.0, -2.0, 0.5],
            bias: 0.1,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
        };
        let f = FeatureVector {
            names: vec!["a".into(), "b".into(), "c".into()],
            values: vec![0.3, 0.1, 2.0],
        };
        let g = FeatureVector {
            names: vec!["c".into(), "a".into(), "b".into()],
            values: vec![2.0, 0.3, 0.1],
        };
        assert_eq!(predict(&m, &f).unwrap(), predict(&m, &g).unwrap());
        let bad = FeatureVector {
            names: vec!["a".into(), "b".into(), "z".into()],
            values: vec![0.0; 3],
        };
        assert!(matches!(predict(&m, &bad), Err(Error::NameMismatch(_))));
    }

    #[test]
    fn fusion_rule() {
        let eeg = Prediction { label: Condition::Virtual, confidence: 0.9, score: 2.2 };
        let gaze = Prediction { label: Condition::Real, confidence: 0.6, score: -0.4 };
        assert_eq!(fuse(eeg, gaze, 0.7).decided_by, Modality::Eeg);
        let weak = Prediction { confidence: 0.55, ..eeg };
        assert_eq!(fuse(weak, gaze, 0.7).prediction.label, Condition::Real);
        assert_eq!(fuse(Prediction::from_score(0.0), gaze, 0.5).decided_by, Modality::Gaze);
        assert_eq!(fuse(Prediction::from_score(1e-3), gaze, 0.5).decided_by, Modality::Eeg);
        assert_eq!(fuse(Prediction::from_score(50.0), gaze, 1.0).decided_by, Modality::Gaze);
    }

    #[test]
    fn single_class_is_rejected() {
        let f = vec![fv(vec![1.0]), fv(vec![2.0])];
        assert!(matches!(
            fit_lda(&f, &[Condition::Real, Condition::Real], 1e-6),
            Err(Error::SingleClassTraining)
        ));
    }
}
