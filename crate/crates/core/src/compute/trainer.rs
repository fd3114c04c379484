//! The built-in deterministic trainers. An algorithm submission is a
//! `TrainerSpec` JSON document naming one of them.
//!
//! Floating-point evaluation order is fixed so that models are bitwise
//! reproducible: sums accumulate left to right from `0.0` in row order and
//! feature order, and every division happens after its sum.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::dataset::{Dataset, Row};
use super::ComputeError;
use crate::types::{BlobId, Label};

pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_EPOCHS: u32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerSpec {
    pub name: String,
    #[serde(default)]
    pub hyperparameters: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Trainer {
    Centroid,
    LogReg { learning_rate: f64, epochs: u32 },
}

impl TrainerSpec {
    pub fn named(name: &str) -> Self {
        TrainerSpec {
            name: name.into(),
            hyperparameters: Default::default(),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ComputeError> {
        let spec: TrainerSpec = serde_json::from_slice(bytes).map_err(|e| ComputeError::Parse(e.to_string()))?;
        spec.trainer()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Vec<u8> {
        crate::canonical::to_vec(self)
    }

    pub fn trainer(&self) -> Result<Trainer, ComputeError> {
        let hp = &self.hyperparameters;
        match self.name.as_str() {
            "centroid" => Ok(Trainer::Centroid),
            "logreg" => {
                let learning_rate = match hp.get("learning_rate") {
                    None => DEFAULT_LEARNING_RATE,
                    Some(v) => v
                        .as_f64()
                        .filter(|lr| lr.is_finite() && *lr > 0.0)
                        .ok_or_else(|| ComputeError::InvalidHyperparameter("learning_rate".into()))?,
                };
                let epochs = match hp.get("epochs") {
                    None => DEFAULT_EPOCHS,
                    Some(v) => v
                        .as_u64()
                        .and_then(|e| u32::try_from(e).ok())
                        .ok_or_else(|| ComputeError::InvalidHyperparameter("epochs".into()))?,
                };
                Ok(Trainer::LogReg { learning_rate, epochs })
            }
            other => Err(ComputeError::UnknownTrainer(other.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Parameters {
    Centroids {
        labels: Vec<Label>,
        centroids: Vec<Vec<f64>>,
    },
    Weights {
        labels: Vec<Label>,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
    },
}

impl Parameters {
    pub fn labels(&self) -> &[Label] {
        match self {
            Parameters::Centroids { labels, .. } | Parameters::Weights { labels, .. } => labels,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Parameters::Centroids { centroids: v, .. } | Parameters::Weights { weights: v, .. } => {
                v.first().map_or(0, Vec::len)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub algorithm_id: BlobId,
    pub parameters: Parameters,
    pub trained_on: Vec<BlobId>,
}

impl Model {
    pub fn to_json(&self) -> Vec<u8> {
        crate::canonical::to_vec(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, ComputeError> {
        serde_json::from_slice(bytes).map_err(|e| ComputeError::Parse(e.to_string()))
    }
}

fn check_rows(dataset: &Dataset) -> Result<usize, ComputeError> {
    if dataset.is_empty() {
        return Err(ComputeError::EmptyDataset);
    }
    let d = dataset.dimension();
    for row in &dataset.rows {
        if row.features.len() != d {
            return Err(ComputeError::DimensionMismatch {
                expected: d,
                got: row.features.len(),
            });
        }
    }
    Ok(d)
}

fn sorted_labels(rows: &[Row]) -> Vec<Label> {
    rows.iter().map(|r| r.label.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Trains from scratch, or from `prior`'s parameters when given (logreg
/// only; centroids carry no optimizer state).
pub fn train(dataset: &Dataset, spec: &TrainerSpec, prior: Option<&Model>) -> Result<Parameters, ComputeError> {
    let trainer = spec.trainer()?;
    let d = check_rows(dataset)?;
    match trainer {
        Trainer::Centroid => Ok(train_centroid(dataset, d)),
        Trainer::LogReg { learning_rate, epochs } => {
            let labels = sorted_labels(&dataset.rows);
            let mut weights = vec![vec![0.0; d]; labels.len()];
            let mut biases = vec![0.0; labels.len()];
            if let Some(Model {
                parameters:
                    Parameters::Weights {
                        labels: pl,
                        weights: pw,
                        biases: pb,
                    },
                ..
            }) = prior
            {
                for (c, label) in labels.iter().enumerate() {
                    if let Some(j) = pl.iter().position(|l| l == label) {
                        if pw[j].len() != d {
                            return Err(ComputeError::DimensionMismatch {
                                expected: d,
                                got: pw[j].len(),
                            });
                        }
                        weights[c] = pw[j].clone();
                        biases[c] = pb[j];
                    }
                }
            }
            for (c, label) in labels.iter().enumerate() {
                let targets: Vec<f64> = dataset.rows.iter().map(|r| f64::from(u8::from(&r.label == label))).collect();
                for _ in 0..epochs {
                    let (gw, gb) = logreg_gradient(&weights[c], biases[c], &dataset.rows, &targets);
                    for (w, g) in weights[c].iter_mut().zip(&gw) {
                        *w -= learning_rate * g;
                    }
                    biases[c] -= learning_rate * gb;
                }
            }
            Ok(Parameters::Weights { labels, weights, biases })
        }
    }
}

fn train_centroid(dataset: &Dataset, d: usize) -> Parameters {
    let labels = sorted_labels(&dataset.rows);
    let centroids = labels
        .iter()
        .map(|label| {
            let mut sum = vec![0.0; d];
            let mut count = 0usize;
            for row in dataset.rows.iter().filter(|r| &r.label == label) {
                for (s, x) in sum.iter_mut().zip(&row.features) {
                    *s += x;
                }
                count += 1;
            }
            sum.into_iter().map(|s| s / count as f64).collect()
        })
        .collect();
    Parameters::Centroids { labels, centroids }
}

fn score(w: &[f64], b: f64, x: &[f64]) -> f64 {
    let mut z = 0.0;
    for (wj, xj) in w.iter().zip(x) {
        z += wj * xj;
    }
    z + b
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean binary cross-entropy of one one-vs-rest classifier, in the
/// overflow-free form `softplus(z) - y*z`.
pub fn logreg_loss(w: &[f64], b: f64, rows: &[Row], targets: &[f64]) -> f64 {
    let mut total = 0.0;
    for (row, y) in rows.iter().zip(targets) {
        let z = score(w, b, &row.features);
        let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
        total += softplus - y * z;
    }
    total / rows.len() as f64
}

/// Analytic gradient of [`logreg_loss`] with respect to `(w, b)`.
pub fn logreg_gradient(w: &[f64], b: f64, rows: &[Row], targets: &[f64]) -> (Vec<f64>, f64) {
    let m = rows.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, y) in rows.iter().zip(targets) {
        let r = sigmoid(score(w, b, &row.features)) - y;
        for (g, x) in gw.iter_mut().zip(&row.features) {
            *g += r * x;
        }
        gb += r;
    }
    (gw.into_iter().map(|g| g / m).collect(), gb / m)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += (x - y) * (x - y);
    }
    s.sqrt()
}

/// Labels are stored sorted, so keeping the first of equal candidates is
/// the lexicographic tie-break.
pub fn predict(parameters: &Parameters, features: &[f64]) -> Result<Label, ComputeError> {
    let d = parameters.dimension();
    if features.len() != d {
        return Err(ComputeError::DimensionMismatch {
            expected: d,
            got: features.len(),
        });
    }
    let labels = parameters.labels();
    let mut best = 0;
    match parameters {
        Parameters::Centroids { centroids, .. } => {
            let mut best_d = f64::INFINITY;
            for (i, c) in centroids.iter().enumerate() {
                let dist = euclidean(c, features);
                if dist < best_d {
                    best_d = dist;
                    best = i;
                }
            }
        }
        Parameters::Weights { weights, biases, .. } => {
            let mut best_z = f64::NEG_INFINITY;
            for (i, (w, b)) in weights.iter().zip(biases).enumerate() {
                let z = score(w, *b, features);
                if z > best_z {
                    best_z = z;
                    best = i;
                }
            }
        }
    }
    labels.get(best).cloned().ok_or(ComputeError::EmptyDataset)
}

/// Accuracy on `validation`.
pub fn evaluate(parameters: &Parameters, validation: &Dataset) -> Result<f64, ComputeError> {
    if validation.is_empty() {
        return Err(ComputeError::EmptyDataset);
    }
    let mut correct = 0usize;
    for row in &validation.rows {
        if predict(parameters, &row.features)? == row.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / validation.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn ds(rows: &[(&[f64], &str)]) -> Dataset {
        Dataset {
            feature_names: (0..rows[0].0.len()).map(|i| format!("f{i}")).collect(),
            rows: rows
                .iter()
                .map(|(f, l)| Row {
                    features: f.to_vec(),
                    label: l.to_string(),
                })
                .collect(),
        }
    }

    fn square() -> Dataset {
        ds(&[(&[0.0, 0.0], "A"), (&[0.0, 2.0], "A"), (&[2.0, 0.0], "B"), (&[2.0, 2.0], "B")])
    }

    #[test]
    fn centroid_means() {
        let p = train(&square(), &TrainerSpec::named("centroid"), None).unwrap();
        assert_eq!(
            p,
            Parameters::Centroids {
                labels: vec!["A".into(), "B".into()],
                centroids: vec![vec![0.0, 1.0], vec![2.0, 1.0]],
            }
        );
        assert_eq!(predict(&p, &[1.9, 1.0]).unwrap(), "B");
        assert_eq!(predict(&p, &[1.0, 1.0]).unwrap(), "A");
        assert_eq!(
            predict(&p, &[1.0]),
            Err(ComputeError::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    #[test]
    fn nearest_centroid_matches_brute_force() {
        let (a, b, x) = ([0.0f64, 1.0], [2.0f64, 1.0], [1.9f64, 1.0]);
        let da = ((x[0] - a[0]).powi(2) + (x[1] - a[1]).powi(2)).sqrt();
        let db = ((x[0] - b[0]).powi(2) + (x[1] - b[1]).powi(2)).sqrt();
        assert_eq!(da, 1.9);
        assert!((db - 0.1).abs() < 1e-12 && db < da);
    }

    #[test]
    fn empty_and_unknown() {
        let empty = Dataset {
            feature_names: vec!["x".into()],
            rows: vec![],
        };
        assert_eq!(train(&empty, &TrainerSpec::named("centroid"), None), Err(ComputeError::EmptyDataset));
        assert_eq!(
            train(&square(), &TrainerSpec::named("svm"), None),
            Err(ComputeError::UnknownTrainer("svm".into()))
        );
        let p = train(&square(), &TrainerSpec::named("centroid"), None).unwrap();
        assert_eq!(evaluate(&p, &empty), Err(ComputeError::EmptyDataset));
    }

    #[test]
    fn hyperparameters_parsed() {
        let spec = TrainerSpec::from_json(br#"{"name":"logreg","hyperparameters":{"epochs":7,"learning_rate":0.5}}"#).unwrap();
        assert_eq!(
            spec.trainer().unwrap(),
            Trainer::LogReg {
                learning_rate: 0.5,
                epochs: 7
            }
        );
        assert!(matches!(
            TrainerSpec::from_json(br#"{"name":"logreg","hyperparameters":{"epochs":-1}}"#),
            Err(ComputeError::InvalidHyperparameter(_))
        ));
        assert_eq!(TrainerSpec::named("centroid").to_json(), br#"{"hyperparameters":{},"name":"centroid"}"#);
    }

    #[test]
    fn accuracy_counts() {
        let p = Parameters::Centroids {
            labels: vec!["A".into(), "B".into()],
            centroids: vec![vec![0.0], vec![10.0]],
        };
        let v = ds(&[(&[0.0], "A"), (&[10.0], "B"), (&[1.0], "B")]);
        assert_eq!(evaluate(&p, &v).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn logreg_separates_1d() {
        let mut rows: Vec<(&[f64], &str)> = vec![(&[-1.0], "A"); 10];
        rows.extend(vec![(&[1.0][..], "B"); 10]);
        let p = train(&ds(&rows), &TrainerSpec::named("logreg"), None).unwrap();
        let Parameters::Weights { labels, weights, .. } = &p else {
            panic!("expected weights")
        };
        assert_eq!(labels[1], "B");
        assert!(weights[1][0] > 0.0);
        assert!(weights[0][0] < 0.0);
        let feats: Vec<Vec<f64>> = (0..20).map(|i| vec![if i < 10 { -1.0 } else { 1.0 }]).collect();
        let truth: Vec<String> = (0..20).map(|i| if i < 10 { "A" } else { "B" }.to_string()).collect();
        let expected = oracle::logreg_one_vs_rest(&feats, &truth, 0.1, 100, None);
        assert_eq!(weights, &expected.1);
    }

    fn random_instance(seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = rng.gen_range(1..=5);
        let m = rng.gen_range(1..=20);
        Dataset {
            feature_names: (0..d).map(|i| format!("f{i}")).collect(),
            rows: (0..m)
                .map(|_| Row {
                    features: (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                    label: ["A", "B", "C"][rng.gen_range(0..3)].to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..20 {
            let data = random_instance(seed);
            let mut rng = ChaCha20Rng::seed_from_u64(1000 + seed);
            let d = data.dimension();
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = rng.gen_range(-1.0..1.0);
            let y: Vec<f64> = data.rows.iter().map(|r| f64::from(u8::from(r.label == "A"))).collect();
            let (gw, gb) = logreg_gradient(&w, b, &data.rows, &y);
            let h = 1e-6;
            let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            for j in 0..d {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += h;
                wm[j] -= h;
                let num = (logreg_loss(&wp, b, &data.rows, &y) - logreg_loss(&wm, b, &data.rows, &y)) / (2.0 * h);
                assert!(rel(gw[j], num) <= 1e-5, "seed {seed} w{j}: {} vs {num}", gw[j]);
            }
            let num = (logreg_loss(&w, b + h, &data.rows, &y) - logreg_loss(&w, b - h, &data.rows, &y)) / (2.0 * h);
            assert!(rel(gb, num) <= 1e-5, "seed {seed} b: {gb} vs {num}");
        }
    }

    #[test]
    fn logreg_matches_oracle_bitwise() {
        for seed in 0..20 {
            let data = random_instance(seed);
            let p = train(&data, &TrainerSpec::named("logreg"), None).unwrap();
            let feats: Vec<Vec<f64>> = data.rows.iter().map(|r| r.features.clone()).collect();
            let labels: Vec<String> = data.rows.iter().map(|r| r.label.clone()).collect();
            let (ol, ow, ob) = oracle::logreg_one_vs_rest(&feats, &labels, 0.1, 100, None);
            let Parameters::Weights { labels, weights, biases } = p else { panic!() };
            assert_eq!(labels, ol);
            for (a, b) in weights.iter().flatten().zip(ow.iter().flatten()) {
                assert_eq!(a.to_bits(), b.to_bits(), "seed {seed}");
            }
            for (a, b) in biases.iter().zip(&ob) {
                assert_eq!(a.to_bits(), b.to_bits(), "seed {seed}");
            }
        }
    }

    #[test]
    fn warm_start_equals_gd_from_prior() {
        let data = random_instance(77);
        let spec: TrainerSpec = serde_json::from_str(r#"{"name":"logreg","hyperparameters":{"epochs":13}}"#).unwrap();
        let first = train(&data, &spec, None).unwrap();
        let prior = Model {
            algorithm_id: BlobId([0; 32]),
            parameters: first.clone(),
            trained_on: vec![],
        };
        let warm = train(&data, &spec, Some(&prior)).unwrap();
        let Parameters::Weights { weights, biases, .. } = &first else { panic!() };
        let feats: Vec<Vec<f64>> = data.rows.iter().map(|r| r.features.clone()).collect();
        let labels: Vec<String> = data.rows.iter().map(|r| r.label.clone()).collect();
        let (_, ow, ob) = oracle::logreg_one_vs_rest(&feats, &labels, 0.1, 13, Some((weights, biases)));
        let Parameters::Weights { weights: ww, biases: wb, .. } = warm else { panic!() };
        assert_eq!(ww, ow);
        assert_eq!(wb, ob);
        // equivalently, 26 epochs from zero
        let long: TrainerSpec = serde_json::from_str(r#"{"name":"logreg","hyperparameters":{"epochs":26}}"#).unwrap();
        let Parameters::Weights { weights: lw, .. } = train(&data, &long, None).unwrap() else { panic!() };
        assert_eq!(ww, lw);
    }

    proptest! {
        #[test]
        fn training_is_deterministic(seed in any::<u64>()) {
            let data = random_instance(seed);
            for name in ["centroid", "logreg"] {
                let a = train(&data, &TrainerSpec::named(name), None).unwrap();
                let b = train(&data.clone(), &TrainerSpec::named(name), None).unwrap();
                let model = Model { algorithm_id: BlobId([1; 32]), parameters: a.clone(), trained_on: vec![] };
                prop_assert_eq!(Model::from_json(&model.to_json()).unwrap().parameters, b.clone());
                prop_assert_eq!(a, b);
            }
        }
    }
}
