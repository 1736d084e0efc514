//! The three classifier architectures (dense net, plain residual CNN, and
//! the split-attention CNN), built from the nn toolkit with named layers so
//! freezing and serialization can address them.

pub mod checkpoint;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encode::{ENCODED_DIM, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::nn::{
    softmax_row, Conv2d, Dense, GlobalAvgPool, Layer, ParamMut, ParamRef, PlainBlock, Relu,
    SplitAttention, Tensor,
};
use crate::packet::Label;

pub const NUM_CLASSES: usize = 2;

/// Channel widths of the image models, scaled for 12x12 inputs.
const STEM_CHANNELS: usize = 16;
const HEAD_CHANNELS: usize = 32;
const RADIX: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Dnn,
    Cnn,
    Resnest,
}

impl Arch {
    pub fn token(&self) -> &'static str {
        match self {
            Arch::Dnn => "dnn",
            Arch::Cnn => "cnn",
            Arch::Resnest => "resnest",
        }
    }

    pub fn parse(s: &str) -> Result<Arch> {
        match s {
            "dnn" => Ok(Arch::Dnn),
            "cnn" => Ok(Arch::Cnn),
            "resnest" => Ok(Arch::Resnest),
            other => Err(Error::InvalidConfig(format!("unknown arch `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyper {
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for Hyper {
    fn default() -> Hyper {
        Hyper {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 32,
            epochs: 30,
        }
    }
}

/// Which layers stay fixed during fine-tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreezePolicy {
    /// Freeze nothing: plain sequential training.
    None,
    /// Freeze everything (the fine-tune phase becomes a no-op).
    All,
    /// Freeze the generic low-level feature layers: stem + first block for
    /// the image models, the first dense layer for the DNN.
    Default,
    /// Explicit layer names; every name must exist in the chosen arch.
    Custom(Vec<String>),
}

impl FreezePolicy {
    pub fn resolve(&self, model: &Model) -> Result<Vec<String>> {
        let names: Vec<String> = match self {
            FreezePolicy::None => Vec::new(),
            FreezePolicy::All => model.layers.iter().map(|l| l.name.clone()).collect(),
            FreezePolicy::Default => match model.arch {
                Arch::Dnn => vec!["fc1".into()],
                Arch::Cnn | Arch::Resnest => vec!["stem".into(), "block1".into()],
            },
            FreezePolicy::Custom(names) => names.clone(),
        };
        for name in &names {
            if !model.layers.iter().any(|l| &l.name == name) {
                return Err(Error::InvalidConfig(format!(
                    "freeze layer `{name}` does not exist in arch {}",
                    model.arch.token()
                )));
            }
        }
        Ok(names)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub seed: u64,
    pub hyper: Hyper,
    pub freeze: FreezePolicy,
}

impl ModelSpec {
    pub fn new(arch: Arch, seed: u64) -> ModelSpec {
        ModelSpec {
            arch,
            seed,
            hyper: Hyper::default(),
            freeze: FreezePolicy::Default,
        }
    }
}

pub enum LayerKind {
    Conv(Conv2d<f32>),
    Relu(Relu<f32>),
    Split(SplitAttention<f32>),
    Plain(PlainBlock<f32>),
    Gap(GlobalAvgPool<f32>),
    Dense(Dense<f32>),
}

impl Layer<f32> for LayerKind {
    fn forward(&mut self, x: &Tensor<f32>) -> Tensor<f32> {
        match self {
            LayerKind::Conv(l) => l.forward(x),
            LayerKind::Relu(l) => l.forward(x),
            LayerKind::Split(l) => l.forward(x),
            LayerKind::Plain(l) => l.forward(x),
            LayerKind::Gap(l) => l.forward(x),
            LayerKind::Dense(l) => l.forward(x),
        }
    }

    fn backward(&mut self, dy: &Tensor<f32>) -> Tensor<f32> {
        match self {
            LayerKind::Conv(l) => l.backward(dy),
            LayerKind::Relu(l) => l.backward(dy),
            LayerKind::Split(l) => l.backward(dy),
            LayerKind::Plain(l) => l.backward(dy),
            LayerKind::Gap(l) => l.backward(dy),
            LayerKind::Dense(l) => l.backward(dy),
        }
    }

    fn params(&self) -> Vec<ParamRef<'_, f32>> {
        match self {
            LayerKind::Conv(l) => l.params(),
            LayerKind::Relu(l) => l.params(),
            LayerKind::Split(l) => l.params(),
            LayerKind::Plain(l) => l.params(),
            LayerKind::Gap(l) => l.params(),
            LayerKind::Dense(l) => l.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, f32>> {
        match self {
            LayerKind::Conv(l) => l.params_mut(),
            LayerKind::Relu(l) => l.params_mut(),
            LayerKind::Split(l) => l.params_mut(),
            LayerKind::Plain(l) => l.params_mut(),
            LayerKind::Gap(l) => l.params_mut(),
            LayerKind::Dense(l) => l.params_mut(),
        }
    }

    fn zero_grads(&mut self) {
        match self {
            LayerKind::Conv(l) => l.zero_grads(),
            LayerKind::Relu(l) => l.zero_grads(),
            LayerKind::Split(l) => l.zero_grads(),
            LayerKind::Plain(l) => l.zero_grads(),
            LayerKind::Gap(l) => l.zero_grads(),
            LayerKind::Dense(l) => l.zero_grads(),
        }
    }
}

pub struct NamedLayer {
    pub name: String,
    pub layer: LayerKind,
}

pub struct Model {
    pub arch: Arch,
    pub layers: Vec<NamedLayer>,
    /// Hash of the schema the training data was encoded with.
    pub schema_hash: Option<String>,
    pub train_seed: u64,
    pub epochs_done: u32,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("arch", &self.arch)
            .field("layers", &self.layers.iter().map(|l| l.name.as_str()).collect::<Vec<_>>())
            .field("params", &self.param_count())
            .field("epochs_done", &self.epochs_done)
            .finish()
    }
}

/// Builds a freshly initialized model; two builds from the same seed carry
/// bit-identical parameters.
pub fn build_model(spec: &ModelSpec) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let named = |name: &str, layer: LayerKind| NamedLayer {
        name: name.to_string(),
        layer,
    };
    let layers = match spec.arch {
        Arch::Dnn => vec![
            named("fc1", LayerKind::Dense(Dense::new(ENCODED_DIM, 64, &mut rng))),
            named("relu1", LayerKind::Relu(Relu::new())),
            named("fc2", LayerKind::Dense(Dense::new(64, 32, &mut rng))),
            named("relu2", LayerKind::Relu(Relu::new())),
            named("fc3", LayerKind::Dense(Dense::new(32, NUM_CLASSES, &mut rng))),
        ],
        Arch::Cnn => vec![
            named("stem", LayerKind::Conv(Conv2d::new(1, STEM_CHANNELS, 3, 1, 1, &mut rng))),
            named("stem_relu", LayerKind::Relu(Relu::new())),
            named("block1", LayerKind::Plain(PlainBlock::new(STEM_CHANNELS, STEM_CHANNELS, 1, &mut rng))),
            named("block2", LayerKind::Plain(PlainBlock::new(STEM_CHANNELS, HEAD_CHANNELS, 2, &mut rng))),
            named("gap", LayerKind::Gap(GlobalAvgPool::new())),
            named("fc", LayerKind::Dense(Dense::new(HEAD_CHANNELS, NUM_CLASSES, &mut rng))),
        ],
        Arch::Resnest => vec![
            named("stem", LayerKind::Conv(Conv2d::new(1, STEM_CHANNELS, 3, 1, 1, &mut rng))),
            named("stem_relu", LayerKind::Relu(Relu::new())),
            named("block1", LayerKind::Split(SplitAttention::new(STEM_CHANNELS, STEM_CHANNELS, RADIX, 1, &mut rng))),
            named("block2", LayerKind::Split(SplitAttention::new(STEM_CHANNELS, HEAD_CHANNELS, RADIX, 2, &mut rng))),
            named("gap", LayerKind::Gap(GlobalAvgPool::new())),
            named("fc", LayerKind::Dense(Dense::new(HEAD_CHANNELS, NUM_CLASSES, &mut rng))),
        ],
    };
    Model {
        arch: spec.arch,
        layers,
        schema_hash: None,
        train_seed: spec.seed,
        epochs_done: 0,
    }
}

/// One classification result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: Label,
    pub probability: f32,
}

impl Model {
    /// Expected input dims per sample.
    pub fn input_dim(&self) -> usize {
        ENCODED_DIM
    }

    /// Packs encoded vectors into the arch's input tensor: flat (N, 130)
    /// for the DNN, zero-padded (N, 1, 12, 12) images for the CNNs.
    pub fn batch_input(&self, vectors: &[&[f32]]) -> Tensor<f32> {
        let n = vectors.len();
        match self.arch {
            Arch::Dnn => {
                let mut data = Vec::with_capacity(n * ENCODED_DIM);
                for v in vectors {
                    assert_eq!(v.len(), ENCODED_DIM);
                    data.extend_from_slice(v);
                }
                Tensor::from_vec(&[n, ENCODED_DIM], data)
            }
            Arch::Cnn | Arch::Resnest => {
                let mut data = vec![0.0f32; n * IMAGE_PIXELS];
                for (i, v) in vectors.iter().enumerate() {
                    assert_eq!(v.len(), ENCODED_DIM);
                    data[i * IMAGE_PIXELS..i * IMAGE_PIXELS + ENCODED_DIM].copy_from_slice(v);
                }
                Tensor::from_vec(&[n, 1, IMAGE_SIDE, IMAGE_SIDE], data)
            }
        }
    }

    pub fn forward(&mut self, input: &Tensor<f32>) -> Tensor<f32> {
        let mut x = input.clone();
        for named in &mut self.layers {
            x = named.layer.forward(&x);
        }
        x
    }

    /// Backward pass that stops once every trainable layer has its
    /// gradients; `lowest` is the index of the deepest trainable layer.
    fn backward_from(&mut self, dy: &Tensor<f32>, lowest: usize) {
        let mut g = dy.clone();
        for idx in (lowest..self.layers.len()).rev() {
            g = self.layers[idx].layer.backward(&g);
        }
    }

    pub fn zero_grads(&mut self) {
        for named in &mut self.layers {
            named.layer.zero_grads();
        }
    }

    /// All parameters as (qualified name, value, grad), in architecture
    /// order. This order defines checkpoint payload layout.
    pub fn named_params(&self) -> Vec<(String, &Tensor<f32>, &Tensor<f32>)> {
        let mut out = Vec::new();
        for named in &self.layers {
            for p in named.layer.params() {
                out.push((format!("{}.{}", named.name, p.name), p.value, p.grad));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, v, _)| v.len()).sum()
    }

    /// Classifies one encoded sample. Ties resolve to the lower class
    /// index, i.e. normal.
    pub fn predict(&mut self, vec: &[f32]) -> Result<Prediction> {
        if vec.len() != ENCODED_DIM {
            return Err(Error::Shape(format!(
                "predict expects a {ENCODED_DIM}-dim sample, got {}",
                vec.len()
            )));
        }
        let input = self.batch_input(&[vec]);
        let logits = self.forward(&input);
        let probs = softmax_row(&logits.data()[..NUM_CLASSES]);
        let (class_idx, p) = probs
            .iter()
            .enumerate()
            .fold((0usize, probs[0]), |(bi, bp), (i, &p)| {
                if p > bp {
                    (i, p)
                } else {
                    (bi, bp)
                }
            });
        Ok(Prediction {
            class: if class_idx == 0 {
                Label::Normal
            } else {
                Label::Anomalous
            },
            probability: p,
        })
    }

    /// Errors when the model and a dataset disagree about the feature
    /// schema (both hashes known and different).
    pub fn check_schema(&self, other: &Option<String>) -> Result<()> {
        if let (Some(mine), Some(theirs)) = (&self.schema_hash, other) {
            if mine != theirs {
                return Err(Error::SchemaHashMismatch {
                    left: mine.clone(),
                    right: theirs.clone(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resnest_parameter_count_frozen() {
        // stem 16*1*3*3+16; two split blocks; head dense 32*2+2
        // block1: 2*(16*16*9+16) + fc1 (16*4+4) + fc2 (4*32+32) = 4868
        // block2: 2*(32*16*9+32) + fc1 (32*8+8) + fc2 (8*64+64) + 1x1 shortcut (32*16+32) = 10664
        let model = build_model(&ModelSpec::new(Arch::Resnest, 1));
        assert_eq!(model.param_count(), 160 + 4868 + 10664 + 66);
    }

    #[test]
    fn same_seed_bit_identical_init() {
        let a = build_model(&ModelSpec::new(Arch::Resnest, 9));
        let b = build_model(&ModelSpec::new(Arch::Resnest, 9));
        let pa = a.named_params();
        let pb = b.named_params();
        assert_eq!(pa.len(), pb.len());
        for ((name_a, va, _), (name_b, vb, _)) in pa.iter().zip(&pb) {
            assert_eq!(name_a, name_b);
            assert_eq!(va.data(), vb.data());
        }
        let c = build_model(&ModelSpec::new(Arch::Resnest, 10));
        assert_ne!(
            a.named_params()[0].1.data(),
            c.named_params()[0].1.data()
        );
    }

    #[test]
    fn input_shape_contracts() {
        let mut dnn = build_model(&ModelSpec::new(Arch::Dnn, 1));
        let mut resnest = build_model(&ModelSpec::new(Arch::Resnest, 1));
        let v = vec![0.5f32; ENCODED_DIM];
        assert_eq!(dnn.batch_input(&[&v]).shape(), &[1, ENCODED_DIM]);
        assert_eq!(resnest.batch_input(&[&v]).shape(), &[1, 1, 12, 12]);
        assert!(dnn.predict(&v).is_ok());
        assert!(resnest.predict(&v).is_ok());
        assert!(dnn.predict(&v[..100]).is_err());
    }

    #[test]
    fn predict_tie_breaks_toward_normal() {
        let mut model = build_model(&ModelSpec::new(Arch::Dnn, 1));
        // zero all parameters: logits become exactly [0, 0]
        for named in &mut model.layers {
            for p in named.layer.params_mut() {
                p.value.fill(0.0);
            }
        }
        let pred = model.predict(&vec![0.3f32; ENCODED_DIM]).unwrap();
        assert_eq!(pred.class, Label::Normal);
        assert_eq!(pred.probability, 0.5);
    }

    #[test]
    fn binary_probability_at_least_half() {
        let mut model = build_model(&ModelSpec::new(Arch::Cnn, 3));
        let pred = model.predict(&vec![0.9f32; ENCODED_DIM]).unwrap();
        assert!(pred.probability >= 0.5 && pred.probability <= 1.0);
    }

    #[test]
    fn predict_invariant_to_batch_packing() {
        let mut model = build_model(&ModelSpec::new(Arch::Resnest, 5));
        let a = vec![0.2f32; ENCODED_DIM];
        let mut b = vec![0.7f32; ENCODED_DIM];
        b[40] = 1.0;
        let solo = model.predict(&a).unwrap();

        let input = model.batch_input(&[&a, &b]);
        let logits = model.forward(&input);
        let probs = softmax_row(&logits.data()[..NUM_CLASSES]);
        let batch_prob = probs.iter().cloned().fold(f32::MIN, f32::max);
        assert_eq!(solo.probability, batch_prob);
    }

    #[test]
    fn freeze_policy_validation() {
        let model = build_model(&ModelSpec::new(Arch::Resnest, 1));
        assert_eq!(
            FreezePolicy::Default.resolve(&model).unwrap(),
            vec!["stem".to_string(), "block1".to_string()]
        );
        assert!(FreezePolicy::Custom(vec!["nosuch".into()]).resolve(&model).is_err());
        assert_eq!(FreezePolicy::None.resolve(&model).unwrap().len(), 0);
        assert_eq!(FreezePolicy::All.resolve(&model).unwrap().len(), model.layers.len());
    }

    #[test]
    fn schema_hash_mismatch_refused() {
        let mut model = build_model(&ModelSpec::new(Arch::Dnn, 1));
        model.schema_hash = Some("aa".repeat(32));
        assert!(model.check_schema(&Some("bb".repeat(32))).is_err());
        assert!(model.check_schema(&None).is_ok());
        assert!(model.check_schema(&Some("aa".repeat(32))).is_ok());
    }
}
