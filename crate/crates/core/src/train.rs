//! The training epoch loop and evaluation metrics.
//!
//! One "iteration" is a full pass over the training set: every sample is
//! visited exactly once per epoch, in an order shuffled by a PRNG derived
//! from (run seed, epoch number), and each visit performs one online SGD
//! step. Evaluation is pure and sequential, so identical inputs always
//! produce bit-identical metrics.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::PreparedDataset;
use crate::error::{Error, Result};
use crate::nn::{loss_mse, LayerSpec, ModelState};
use crate::optim::{sgd_step, OptimizerState, TrainConfig};

/// Classification quality over one dataset. Percentages are in 0..=100;
/// `confusion[true_class][predicted_class]` counts samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub error_rate: f64,
    pub per_class_accuracy: [f64; 10],
    pub confusion: [[u32; 10]; 10],
    pub sample_count: usize,
}

impl Metrics {
    /// Derives every summary field from a filled confusion matrix.
    /// `error_rate` is exactly `100 - accuracy`; a class with no samples
    /// reports per-class accuracy 0.
    pub fn from_confusion(confusion: [[u32; 10]; 10]) -> Metrics {
        let mut total: u64 = 0;
        let mut correct: u64 = 0;
        let mut per_class_accuracy = [0.0; 10];
        for (class, row) in confusion.iter().enumerate() {
            let row_sum: u64 = row.iter().map(|&c| c as u64).sum();
            total += row_sum;
            correct += confusion[class][class] as u64;
            if row_sum > 0 {
                per_class_accuracy[class] =
                    confusion[class][class] as f64 / row_sum as f64 * 100.0;
            }
        }
        let accuracy = if total > 0 {
            correct as f64 / total as f64 * 100.0
        } else {
            0.0
        };
        Metrics {
            accuracy,
            error_rate: 100.0 - accuracy,
            per_class_accuracy,
            confusion,
            sample_count: total as usize,
        }
    }
}

/// The sample-order PRNG for one epoch: the 256-bit ChaCha8 key carries the
/// run seed in bytes 0..8 and the epoch number in bytes 8..12, so every
/// (seed, epoch) pair has its own reproducible stream.
fn epoch_rng(seed: u64, epoch: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&epoch.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn check_activation(model: &ModelState, config: &TrainConfig) -> Result<()> {
    for layer in &model.arch.layers {
        if let LayerSpec::Act(kind) = layer {
            if *kind != config.activation {
                return Err(Error::InvalidConfig(alloc::format!(
                    "model uses {} activations but the run is configured for {}",
                    kind.name(),
                    config.activation.name()
                )));
            }
        }
    }
    Ok(())
}

/// Runs one epoch of online SGD over every training sample. `epoch_index`
/// is 1-based; it seeds the shuffle and is recorded as the model's
/// completed-epoch count. Errors carry the index of the offending sample.
pub fn train_epoch(
    model: &mut ModelState,
    optstate: &mut OptimizerState,
    train_set: &PreparedDataset,
    config: &TrainConfig,
    epoch_index: u32,
) -> Result<()> {
    check_activation(model, config)?;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut epoch_rng(config.seed, epoch_index));
    for index in order {
        let (input, label) = &train_set.samples()[index];
        let step = (|| -> Result<()> {
            let tape = model.forward(input)?;
            let (_, loss_grad) = loss_mse(&tape.output, *label as usize)?;
            let grads = model.backward(&tape, &loss_grad)?;
            sgd_step(&mut model.params, &grads, optstate, config)
        })();
        step.map_err(|e| e.at_sample(index))?;
    }
    model.epoch = epoch_index;
    Ok(())
}

/// Classifies every sample and fills the confusion matrix. Never mutates
/// the model; identical model and dataset give bit-identical metrics.
pub fn evaluate(model: &ModelState, dataset: &PreparedDataset) -> Result<Metrics> {
    let mut confusion = [[0u32; 10]; 10];
    for (index, (input, label)) in dataset.samples().iter().enumerate() {
        let tape = model.forward(input).map_err(|e| e.at_sample(index))?;
        let predicted = tape.output.argmax();
        confusion[*label as usize][predicted] += 1;
    }
    Ok(Metrics::from_confusion(confusion))
}
