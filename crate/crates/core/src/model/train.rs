//! Mini-batch SGD training, evaluation, and the pretrain-then-finetune
//! transfer path with layer freezing.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encode::dataset::EncodedDataset;
use crate::error::{Error, Result};
use crate::model::{build_model, Model, ModelSpec};
use crate::nn::{softmax_cross_entropy, Layer, Sgd, Tensor};
use crate::packet::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

/// History CSV: epoch, loss, train_acc.
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,loss,train_acc\n");
    for h in history {
        out.push_str(&format!("{},{},{}\n", h.epoch, h.loss as f32, h.train_acc as f32));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn argmax_row(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0usize, row[0]), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

struct TrainSetup {
    frozen_mask: Vec<bool>,
    lowest_trainable: usize,
}

fn freeze_setup(model: &Model, frozen_layers: &HashSet<String>) -> Result<TrainSetup> {
    for name in frozen_layers {
        if !model.layers.iter().any(|l| &l.name == name) {
            return Err(Error::InvalidConfig(format!(
                "freeze layer `{name}` does not exist in arch {}",
                model.arch.token()
            )));
        }
    }
    let mut frozen_mask = Vec::new();
    let mut lowest_trainable = model.layers.len();
    for (idx, named) in model.layers.iter().enumerate() {
        let frozen = frozen_layers.contains(&named.name);
        let n_params = named.layer.params().len();
        for _ in 0..n_params {
            frozen_mask.push(frozen);
        }
        if !frozen && n_params > 0 {
            lowest_trainable = lowest_trainable.min(idx);
        }
    }
    Ok(TrainSetup {
        frozen_mask,
        lowest_trainable,
    })
}

/// Trains in place with seeded per-epoch shuffling. Layers named in
/// `frozen_layers` keep their parameters bit-identical. Returns per-epoch
/// loss and training accuracy.
pub fn train(
    model: &mut Model,
    ds: &EncodedDataset,
    hyper: &crate::model::Hyper,
    seed: u64,
    frozen_layers: &HashSet<String>,
) -> Result<Vec<EpochStats>> {
    if ds.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    if hyper.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    if !(hyper.lr >= 0.0) {
        return Err(Error::InvalidConfig(format!("lr must be >= 0, got {}", hyper.lr)));
    }
    model.check_schema(&ds.schema_hash)?;
    if model.schema_hash.is_none() {
        model.schema_hash = ds.schema_hash.clone();
    }

    let setup = freeze_setup(model, frozen_layers)?;
    let mut optimizer = Sgd::new(hyper.lr, hyper.momentum, hyper.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..ds.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        indices.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for chunk in indices.chunks(hyper.batch_size) {
            let vectors: Vec<&[f32]> = chunk.iter().map(|&i| ds.vector(i)).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| ds.label(i) as usize).collect();
            let input = model.batch_input(&vectors);
            let logits = model.forward(&input);
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: model.epochs_done as usize + epoch,
                    loss: loss as f64,
                });
            }
            loss_sum += loss as f64 * chunk.len() as f64;
            for (row, &label) in logits.data().chunks(crate::model::NUM_CLASSES).zip(&labels) {
                if argmax_row(row) == label {
                    correct += 1;
                }
            }

            model.zero_grads();
            model.backward_from(&dlogits, setup.lowest_trainable);
            let mut params: Vec<(&mut Tensor<f32>, &Tensor<f32>)> = Vec::new();
            for named in &mut model.layers {
                for p in named.layer.params_mut() {
                    let grad: &Tensor<f32> = p.grad;
                    params.push((p.value, grad));
                }
            }
            optimizer.step(&mut params, &setup.frozen_mask);
        }
        history.push(EpochStats {
            epoch: model.epochs_done as usize + epoch + 1,
            loss: loss_sum / ds.len() as f64,
            train_acc: correct as f64 / ds.len() as f64,
        });
    }
    model.epochs_done += hyper.epochs as u32;
    Ok(history)
}

/// Accuracy of the model over a dataset (batched inference).
pub fn eval_accuracy(model: &mut Model, ds: &EncodedDataset) -> Result<f64> {
    let (predictions, _) = predict_dataset(model, ds)?;
    let correct = predictions
        .iter()
        .zip(&ds.labels)
        .filter(|(p, &l)| {
            let want = if l == 0 { Label::Normal } else { Label::Anomalous };
            **p == want
        })
        .count();
    Ok(correct as f64 / ds.len() as f64)
}

/// Batched predictions over a dataset; also returns the positive-class
/// probabilities.
pub fn predict_dataset(model: &mut Model, ds: &EncodedDataset) -> Result<(Vec<Label>, Vec<f32>)> {
    if ds.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty dataset".into()));
    }
    model.check_schema(&ds.schema_hash)?;
    let mut labels = Vec::with_capacity(ds.len());
    let mut probs = Vec::with_capacity(ds.len());
    let batch = 64;
    for start in (0..ds.len()).step_by(batch) {
        let end = (start + batch).min(ds.len());
        let vectors: Vec<&[f32]> = (start..end).map(|i| ds.vector(i)).collect();
        let input = model.batch_input(&vectors);
        let logits = model.forward(&input);
        for row in logits.data().chunks(crate::model::NUM_CLASSES) {
            let probs_row = crate::nn::softmax_row(row);
            let cls = argmax_row(row);
            labels.push(if cls == 0 { Label::Normal } else { Label::Anomalous });
            probs.push(probs_row[1]);
        }
    }
    Ok((labels, probs))
}

/// Homogeneous transfer: phase 1 trains on the source domain; phase 2
/// freezes the spec's freeze list and continues on the target domain at
/// one tenth of the learning rate. Both datasets must share a schema.
pub fn pretrain_then_finetune(
    spec: &ModelSpec,
    source: &EncodedDataset,
    target: &EncodedDataset,
    finetune_epochs: usize,
) -> Result<(Model, Vec<EpochStats>)> {
    match (&source.schema_hash, &target.schema_hash) {
        (Some(a), Some(b)) if a == b => {}
        (Some(a), Some(b)) => {
            return Err(Error::SchemaHashMismatch {
                left: a.clone(),
                right: b.clone(),
            })
        }
        _ => {
            return Err(Error::SchemaHashMismatch {
                left: "unknown".into(),
                right: "unknown".into(),
            })
        }
    }

    let mut model = build_model(spec);
    let mut history = train(
        &mut model,
        source,
        &spec.hyper,
        crate::sim::derive_seed(spec.seed, "pretrain"),
        &HashSet::new(),
    )?;

    let frozen: HashSet<String> = spec.freeze.resolve(&model)?.into_iter().collect();
    let finetune_hyper = crate::model::Hyper {
        lr: spec.hyper.lr / 10.0,
        epochs: finetune_epochs,
        ..spec.hyper.clone()
    };
    let phase2 = train(
        &mut model,
        target,
        &finetune_hyper,
        crate::sim::derive_seed(spec.seed, "finetune"),
        &frozen,
    )?;
    history.extend(phase2);
    Ok((model, history))
}
