//! The evaluable classifier zoo.
//!
//! Two families sit behind one prediction interface: feature-pool models
//! (k-nearest-neighbor, a Gini-grown CART tree, a bagged-tree ensemble, and
//! a regularized multinomial logistic classifier) and raw-signal models
//! (the balanced two-conv network in its average- and max-pooling
//! variants). Every model emits a probability vector over classes; fitted
//! models are immutable and safe to share across threads.

mod cart;
mod ensemble;
mod knn;
mod lbnn;
mod linear;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::nncore::NnError;
use crate::signal::SignalWindow;

pub use cart::{fit_cart, CartModel};
pub use ensemble::{fit_ensemble, EnsembleConfig, EnsembleModel};
pub use knn::{fit_knn, KnnModel};
pub use lbnn::{fit_lbnn, lbnn_layer_specs, LbnnConfig, LbnnModel, PoolVariant};
pub use linear::{fit_linear, LinearConfig, LinearModel, Penalty};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("k = {k} exceeds training set size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be >= 1")]
    ZeroK,
    #[error("ensemble size must be >= 1")]
    ZeroEnsemble,
    #[error("feature/label count mismatch: {features} vs {labels}")]
    LabelCount { features: usize, labels: usize },
    #[error("feature vectors have inconsistent dimensions")]
    RaggedFeatures,
    #[error("input family {got} does not match model family {expected}")]
    FamilyMismatch {
        expected: ModelFamily,
        got: ModelFamily,
    },
    #[error("window length {got} does not match the trained input length {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("feature dimension {got} does not match the trained dimension {expected}")]
    FeatureDimension { expected: usize, got: usize },
    #[error("windows have inconsistent lengths")]
    RaggedWindows,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("model checkpoint: {0}")]
    Checkpoint(String),
    #[error("model checkpoint io on {path}: {source}")]
    CheckpointIo {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    FeaturePool,
    RawSignal,
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelFamily::FeaturePool => f.write_str("feature_pool"),
            ModelFamily::RawSignal => f.write_str("raw_signal"),
        }
    }
}

/// Name, family, hyperparameters, and training seed of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub family: ModelFamily,
    pub hyperparams: BTreeMap<String, String>,
    pub seed: u64,
    /// Set when fitting finished in a degraded state (e.g. the linear
    /// model hit its iteration cap before converging).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Input to [`TrainedModel::predict`]; the variant must match the family.
#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a> {
    Features(&'a FeatureVector),
    Window(&'a SignalWindow),
}

impl ModelInput<'_> {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelInput::Features(_) => ModelFamily::FeaturePool,
            ModelInput::Window(_) => ModelFamily::RawSignal,
        }
    }
}

/// A labeled evaluation set of either input kind.
#[derive(Debug, Clone, Copy)]
pub enum EvalSet<'a> {
    Features(&'a [FeatureVector]),
    Windows(&'a [SignalWindow]),
}

impl EvalSet<'_> {
    pub fn len(&self) -> usize {
        match self {
            EvalSet::Features(v) => v.len(),
            EvalSet::Windows(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, i: usize) -> ModelInput<'_> {
        match self {
            EvalSet::Features(v) => ModelInput::Features(&v[i]),
            EvalSet::Windows(v) => ModelInput::Window(&v[i]),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Knn(KnnModel),
    Cart(CartModel),
    Ensemble(EnsembleModel),
    Linear(LinearModel),
    Lbnn(LbnnModel),
}

/// A fitted classifier: descriptor plus the family-specific predictor.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub descriptor: ModelDescriptor,
    pub(crate) kind: ModelKind,
}

impl TrainedModel {
    /// Wrap a hand-built network as an evaluable raw-signal model.
    pub fn from_raw_network(name: &str, network: crate::nncore::Network, variant: PoolVariant) -> Self {
        TrainedModel {
            descriptor: ModelDescriptor {
                name: name.to_string(),
                family: ModelFamily::RawSignal,
                hyperparams: BTreeMap::new(),
                seed: 0,
                warning: None,
            },
            kind: ModelKind::Lbnn(LbnnModel::from_network(network, variant)),
        }
    }

    pub fn family(&self) -> ModelFamily {
        self.descriptor.family
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn num_classes(&self) -> usize {
        match &self.kind {
            ModelKind::Knn(m) => m.num_classes(),
            ModelKind::Cart(m) => m.num_classes(),
            ModelKind::Ensemble(m) => m.num_classes(),
            ModelKind::Linear(m) => m.num_classes(),
            ModelKind::Lbnn(m) => m.num_classes(),
        }
    }

    /// Class-probability prediction; pure and repeatable.
    pub fn predict(&self, input: ModelInput<'_>) -> Result<Vec<f64>, ModelError> {
        if input.family() != self.family() {
            return Err(ModelError::FamilyMismatch {
                expected: self.family(),
                got: input.family(),
            });
        }
        match (&self.kind, input) {
            (ModelKind::Knn(m), ModelInput::Features(x)) => m.predict(x),
            (ModelKind::Cart(m), ModelInput::Features(x)) => m.predict(x),
            (ModelKind::Ensemble(m), ModelInput::Features(x)) => m.predict(x),
            (ModelKind::Linear(m), ModelInput::Features(x)) => m.predict(x),
            (ModelKind::Lbnn(m), ModelInput::Window(w)) => m.predict(w),
            _ => unreachable!("family checked above"),
        }
    }
}

/// Fraction of argmax-correct predictions; argmax ties break to the lowest
/// class index.
pub fn accuracy(
    model: &TrainedModel,
    inputs: EvalSet<'_>,
    labels: &[usize],
) -> Result<f64, ModelError> {
    if inputs.is_empty() {
        return Err(ModelError::EmptyTestSet);
    }
    if inputs.len() != labels.len() {
        return Err(ModelError::LabelCount {
            features: inputs.len(),
            labels: labels.len(),
        });
    }
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let probs = model.predict(inputs.input(i))?;
        if crate::nncore::argmax(&probs) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Frozen per-column standardization (zero mean, unit variance on the
/// training split). Columns with zero spread pass through unscaled.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let n = rows.len() as f64;
        let mut means = vec![0.0; d];
        for row in rows {
            for (m, &v) in means.iter_mut().zip(*row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; d];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                let dlt = v - means[j];
                stds[j] += dlt * dlt;
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Standardizer { means, stds }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn dimension(&self) -> usize {
        self.means.len()
    }
}

pub(crate) fn validate_features(
    features: &[FeatureVector],
    labels: &[usize],
) -> Result<usize, ModelError> {
    if features.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if features.len() != labels.len() {
        return Err(ModelError::LabelCount {
            features: features.len(),
            labels: labels.len(),
        });
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(ModelError::RaggedFeatures);
    }
    Ok(d)
}

pub(crate) fn class_count(labels: &[usize]) -> usize {
    labels.iter().copied().max().map(|m| m + 1).unwrap_or(0)
}

// ---------------------------------------------------------------------------
// checkpointing: family tag + JSON or network payload
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 8] = b"XSEIMD01";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    descriptor: ModelDescriptor,
    kind: String,
}

/// Serialize a trained model: magic, version, JSON header carrying the
/// family tag, a kind-specific payload, and an FNV-1a checksum.
pub fn save_model(model: &TrainedModel, path: &std::path::Path) -> Result<(), ModelError> {
    let (kind, payload): (&str, Vec<u8>) = match &model.kind {
        ModelKind::Knn(m) => ("knn", json_payload(m)?),
        ModelKind::Cart(m) => ("cart", json_payload(m)?),
        ModelKind::Ensemble(m) => ("ensemble", json_payload(m)?),
        ModelKind::Linear(m) => ("linear", json_payload(m)?),
        ModelKind::Lbnn(m) => ("lbnn", m.to_bytes()?),
    };
    let header = ModelHeader {
        descriptor: model.descriptor.clone(),
        kind: kind.to_string(),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;

    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let checksum = crate::seed::fnv1a64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());

    std::fs::write(path, out).map_err(|source| ModelError::CheckpointIo {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &std::path::Path) -> Result<TrainedModel, ModelError> {
    let bytes = std::fs::read(path).map_err(|source| ModelError::CheckpointIo {
        path: path.to_path_buf(),
        source,
    })?;
    let fail = |msg: &str| ModelError::Checkpoint(msg.to_string());
    if bytes.len() < 8 + 4 + 4 + 8 + 8 || &bytes[..8] != MODEL_MAGIC {
        return Err(fail("missing or wrong magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported model checkpoint version {version}"
        )));
    }
    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().expect("8 bytes"));
    if stored != crate::seed::fnv1a64(&bytes[..body_end]) {
        return Err(fail("checksum mismatch; file is corrupt"));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e + 8 <= body_end)
        .ok_or_else(|| fail("truncated header"))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| ModelError::Checkpoint(format!("header parse: {e}")))?;
    let payload_len =
        u64::from_le_bytes(bytes[header_end..header_end + 8].try_into().expect("8 bytes")) as usize;
    let payload_start = header_end + 8;
    if payload_start + payload_len != body_end {
        return Err(fail("payload length mismatch"));
    }
    let payload = &bytes[payload_start..body_end];

    let kind = match header.kind.as_str() {
        "knn" => ModelKind::Knn(json_parse(payload)?),
        "cart" => ModelKind::Cart(json_parse(payload)?),
        "ensemble" => ModelKind::Ensemble(json_parse(payload)?),
        "linear" => ModelKind::Linear(json_parse(payload)?),
        "lbnn" => ModelKind::Lbnn(LbnnModel::from_bytes(payload)?),
        other => return Err(ModelError::Checkpoint(format!("unknown model kind `{other}`"))),
    };
    Ok(TrainedModel {
        descriptor: header.descriptor,
        kind,
    })
}

fn json_payload<T: Serialize>(value: &T) -> Result<Vec<u8>, ModelError> {
    serde_json::to_vec(value).map_err(|e| ModelError::Checkpoint(e.to_string()))
}

fn json_parse<T: for<'de> Deserialize<'de>>(payload: &[u8]) -> Result<T, ModelError> {
    serde_json::from_slice(payload).map_err(|e| ModelError::Checkpoint(e.to_string()))
}


#[cfg(test)]
mod tests {
    use super::test_support::toy_feature_set;
    use super::*;

    #[test]
    fn family_mismatch_is_an_error() {
        let (xs, ys) = toy_feature_set(10);
        let model = fit_knn(&xs, &ys, 3).unwrap();
        let win = SignalWindow {
            samples: vec![0.0; 8],
            sample_period_ms: 1.0,
            label: 0,
            arc_mask: vec![false; 8],
        };
        assert!(matches!(
            model.predict(ModelInput::Window(&win)),
            Err(ModelError::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let (xs, ys) = toy_feature_set(16);
        let model = fit_knn(&xs, &ys, 1).unwrap();
        // 1-NN on its own training set is perfect
        let acc = accuracy(&model, EvalSet::Features(&xs), &ys).unwrap();
        assert_eq!(acc, 1.0);
        // adversarially permuted labels on a balanced set: all wrong
        let flipped: Vec<usize> = ys.iter().map(|&y| 1 - y).collect();
        let acc = accuracy(&model, EvalSet::Features(&xs), &flipped).unwrap();
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn accuracy_three_of_four() {
        let (xs, ys) = toy_feature_set(4);
        let model = fit_knn(&xs, &ys, 1).unwrap();
        let mut labels = ys.clone();
        labels[3] = 1 - labels[3];
        let acc = accuracy(&model, EvalSet::Features(&xs), &labels).unwrap();
        assert_eq!(acc, 0.75);
    }

    #[test]
    fn accuracy_rejects_empty_test_set() {
        let (xs, ys) = toy_feature_set(4);
        let model = fit_knn(&xs, &ys, 1).unwrap();
        assert!(matches!(
            accuracy(&model, EvalSet::Features(&[]), &[]),
            Err(ModelError::EmptyTestSet)
        ));
    }

    #[test]
    fn standardizer_neutralizes_column_rescaling() {
        let rows_a: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 100.0 - i as f64]).collect();
        // same data with column 0 in different units
        let rows_b: Vec<Vec<f64>> = rows_a.iter().map(|r| vec![r[0] * 1000.0, r[1]]).collect();
        let refs_a: Vec<&[f64]> = rows_a.iter().map(|r| r.as_slice()).collect();
        let refs_b: Vec<&[f64]> = rows_b.iter().map(|r| r.as_slice()).collect();
        let sa = Standardizer::fit(&refs_a);
        let sb = Standardizer::fit(&refs_b);
        for (a, b) in rows_a.iter().zip(&rows_b) {
            let za = sa.apply(a);
            let zb = sb.apply(b);
            for (x, y) in za.iter().zip(&zb) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn save_load_round_trip_feature_model() {
        let (xs, ys) = toy_feature_set(12);
        let model = fit_knn(&xs, &ys, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("knn.model");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.descriptor.name, model.descriptor.name);
        for x in &xs {
            assert_eq!(
                model.predict(ModelInput::Features(x)).unwrap(),
                back.predict(ModelInput::Features(x)).unwrap()
            );
        }
    }

    #[test]
    fn corrupt_model_file_is_rejected() {
        let (xs, ys) = toy_feature_set(6);
        let model = fit_cart(&xs, &ys, 4, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cart.model");
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x55;
        std::fs::write(&path, bytes).unwrap();
        assert!(load_model(&path).is_err());
    }

    #[test]
    fn predictions_are_simplex_valid_and_pure() {
        let (xs, ys) = toy_feature_set(20);
        let models = vec![
            fit_knn(&xs, &ys, 5).unwrap(),
            fit_cart(&xs, &ys, 6, 1).unwrap(),
            fit_ensemble(&xs, &ys, &EnsembleConfig::default(), 3).unwrap(),
            fit_linear(&xs, &ys, &LinearConfig::default(), 0).unwrap(),
        ];
        for m in &models {
            for x in xs.iter().take(4) {
                let p1 = m.predict(ModelInput::Features(x)).unwrap();
                let p2 = m.predict(ModelInput::Features(x)).unwrap();
                assert_eq!(p1, p2, "{} must be pure", m.name());
                let sum: f64 = p1.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "{} sums to {sum}", m.name());
                assert!(p1.iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }
}
