//! The lightweight balanced network: conv(5, pad 2, 6ch) -> pool(2,2) ->
//! conv(3, pad 2, 16ch) -> pool(2,2) -> flatten -> dense 256 -> dense C.
//! The `avg` variant uses average pooling in both pool slots; `max` swaps
//! in max pooling with identical kernel and stride, leaving the parameter
//! count untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::nncore::{
    self, Activation, LayerSpec, Network, TrainConfig, Tensor1D,
};
use crate::seed::derive_seed;
use crate::signal::SignalWindow;

use super::{ModelDescriptor, ModelError, ModelFamily, ModelKind, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolVariant {
    Avg,
    Max,
}

impl PoolVariant {
    pub fn name(self) -> &'static str {
        match self {
            PoolVariant::Avg => "avg",
            PoolVariant::Max => "max",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbnnConfig {
    pub class_count: usize,
    pub train: TrainConfig,
}

impl Default for LbnnConfig {
    fn default() -> Self {
        LbnnConfig {
            class_count: 2,
            train: TrainConfig::default(),
        }
    }
}

/// The layer chain for a given pooling variant and output class count.
pub fn lbnn_layer_specs(variant: PoolVariant, class_count: usize) -> Vec<LayerSpec> {
    let pool = |kernel, stride| match variant {
        PoolVariant::Avg => LayerSpec::AvgPool { kernel, stride },
        PoolVariant::Max => LayerSpec::MaxPool { kernel, stride },
    };
    vec![
        LayerSpec::Conv1d {
            out_channels: 6,
            kernel: 5,
            padding: 2,
            activation: Activation::Relu,
        },
        pool(2, 2),
        LayerSpec::Conv1d {
            out_channels: 16,
            kernel: 3,
            padding: 2,
            activation: Activation::Relu,
        },
        pool(2, 2),
        LayerSpec::Flatten,
        LayerSpec::Dense {
            out_units: 256,
            activation: Activation::Relu,
        },
        LayerSpec::Dense {
            out_units: class_count,
            activation: Activation::Softmax,
        },
    ]
}

#[derive(Debug, Clone)]
pub struct LbnnModel {
    network: Network,
    variant: PoolVariant,
}

/// Per-window standardization: each window enters the network at zero
/// mean and unit variance. Raw ampere-scale samples would saturate the
/// softmax head under fan-in initialization, and absolute amplitude is a
/// load property rather than a fault property, so the network sees shape
/// only.
fn standardize_window(samples: &[f64]) -> Tensor1D {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    Tensor1D {
        channels: 1,
        length: samples.len(),
        data: samples.iter().map(|x| (x - mean) / std).collect(),
    }
}

impl LbnnModel {
    /// Wrap an existing network as a raw-signal predictor.
    pub fn from_network(network: Network, variant: PoolVariant) -> Self {
        LbnnModel { network, variant }
    }

    pub fn num_classes(&self) -> usize {
        self.network.output_classes()
    }

    pub fn variant(&self) -> PoolVariant {
        self.variant
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn predict(&self, win: &SignalWindow) -> Result<Vec<f64>, ModelError> {
        let expected = self.network.input_shape().1;
        if win.len() != expected {
            return Err(ModelError::WindowLength {
                expected,
                got: win.len(),
            });
        }
        Ok(self.network.forward(&standardize_window(&win.samples))?)
    }

    pub(crate) fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let mut bytes = vec![match self.variant {
            PoolVariant::Avg => 0u8,
            PoolVariant::Max => 1u8,
        }];
        bytes.extend(nncore::checkpoint::to_bytes(&self.network)?);
        Ok(bytes)
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let (&tag, rest) = bytes
            .split_first()
            .ok_or_else(|| ModelError::Checkpoint("empty network payload".to_string()))?;
        let variant = match tag {
            0 => PoolVariant::Avg,
            1 => PoolVariant::Max,
            other => {
                return Err(ModelError::Checkpoint(format!(
                    "unknown pooling variant tag {other}"
                )))
            }
        };
        Ok(LbnnModel {
            network: nncore::checkpoint::from_bytes(rest)?,
            variant,
        })
    }
}

/// Result of a network fit: the evaluable model plus its loss curve.
pub struct LbnnFit {
    pub model: TrainedModel,
    pub curve: Vec<nncore::EpochStats>,
    pub best_epoch: usize,
}

/// Train the balanced network on signal windows. All windows must share
/// one length; initialization and batch order derive from `seed`.
pub fn fit_lbnn(
    train: (&[SignalWindow], &[usize]),
    val: (&[SignalWindow], &[usize]),
    variant: PoolVariant,
    cfg: &LbnnConfig,
    seed: u64,
) -> Result<LbnnFit, ModelError> {
    let (train_windows, train_labels) = train;
    let (val_windows, val_labels) = val;
    if train_windows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let len = train_windows[0].len();
    if train_windows
        .iter()
        .chain(val_windows.iter())
        .any(|w| w.len() != len)
    {
        return Err(ModelError::RaggedWindows);
    }

    let to_tensors = |wins: &[SignalWindow]| -> Vec<Tensor1D> {
        wins.iter().map(|w| standardize_window(&w.samples)).collect()
    };
    let train_x = to_tensors(train_windows);
    let val_x = to_tensors(val_windows);

    let network = Network::new(
        1,
        len,
        lbnn_layer_specs(variant, cfg.class_count),
        derive_seed(seed, "init"),
    )?;
    let result = nncore::train(
        network,
        &train_x,
        train_labels,
        &val_x,
        val_labels,
        &cfg.train,
        derive_seed(seed, "batches"),
    )?;

    let model = TrainedModel {
        descriptor: ModelDescriptor {
            name: format!("lbnn-{}", variant.name()),
            family: ModelFamily::RawSignal,
            hyperparams: BTreeMap::from([
                ("pooling".to_string(), variant.name().to_string()),
                ("classes".to_string(), cfg.class_count.to_string()),
                ("epochs".to_string(), cfg.train.epochs.to_string()),
                ("batch_size".to_string(), cfg.train.batch_size.to_string()),
                (
                    "learning_rate".to_string(),
                    cfg.train.adam.learning_rate.to_string(),
                ),
            ]),
            seed,
            warning: None,
        },
        kind: ModelKind::Lbnn(LbnnModel {
            network: result.network,
            variant,
        }),
    };
    Ok(LbnnFit {
        model,
        curve: result.curve,
        best_epoch: result.best_epoch,
    })
}
