//! Training: Glorot init, softmax cross-entropy, minibatch Adam, and
//! evaluation. The whole run is a pure function of `(spec, data, config)`:
//! shuffling and init draw from seeded streams, and batch reductions use a
//! fixed order, so one seed gives one bitwise-identical history.

pub mod adam;
pub mod grad;
pub mod gradcheck;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Real;
use crate::mnist::{batches, BatchPlan, Dataset};
use crate::model::layers::{Activation, FcLayer};
use crate::model::{argmax, model_forward, ModelParams, ModelSpec, StageParams};
use crate::rng::SplitMix64;

pub use adam::{adam_step, AdamState};
pub use grad::{backward, input_gradient, Gradients, GRAD_CHUNK};
pub use gradcheck::{batch_loss, gradient_check, GradCheckReport};

/// Stream tag for parameter initialization. Epoch shuffles use the epoch
/// number as their tag, so init gets a tag no epoch can collide with.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// The reference protocol: 300 epochs of batch-1000 Adam at 2e-3 with
    /// 1e-5 weight decay.
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 1000,
            lr: 2e-3,
            weight_decay: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Invalid("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Invalid("batch size must be >= 1".into()));
        }
        // written to also reject NaN, which fails every comparison
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Invalid(format!(
                "learning rate {} must be > 0",
                self.lr
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Invalid(format!(
                "weight decay {} must be >= 0",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// One FC layer with weights uniform in `[-L, L]`, `L = sqrt(6/(d_in+d_out))`,
/// and zero biases.
pub fn glorot_fc<T: Real>(
    d_in: usize,
    d_out: usize,
    activation: Activation,
    rng: &mut SplitMix64,
) -> FcLayer<T> {
    let l = (6.0 / (d_in + d_out) as f64).sqrt();
    let mut layer = FcLayer::zeros(d_in, d_out, activation);
    for w in layer.w.as_mut_slice() {
        *w = T::from_f64((rng.next_f64() * 2.0 - 1.0) * l);
    }
    layer
}

/// Glorot-initialize every stage, in stage order (row FC before column FC
/// inside a block). Draws happen in 64-bit and are then narrowed, so the
/// 32- and 64-bit modes start from the same underlying values.
pub fn init_params<T: Real>(spec: &ModelSpec, seed: u64) -> Result<ModelParams<T>> {
    spec.validate()?;
    let mut rng = SplitMix64::for_stream(seed, INIT_STREAM);
    let mut params = ModelParams::<T>::zeros(spec)?;
    for stage in &mut params.stages {
        match stage {
            StageParams::Lst(b) | StageParams::ResLst(b) => {
                b.fc_row = glorot_fc(
                    b.fc_row.d_in(),
                    b.fc_row.d_out(),
                    Activation::Tanh,
                    &mut rng,
                );
                b.fc_col = glorot_fc(
                    b.fc_col.d_in(),
                    b.fc_col.d_out(),
                    Activation::Tanh,
                    &mut rng,
                );
            }
            StageParams::Fc(l) => {
                *l = glorot_fc(l.d_in(), l.d_out(), l.activation, &mut rng);
            }
            StageParams::Flatten => {}
        }
    }
    Ok(params)
}

/// `-log softmax(logits)[label]`, via log-sum-exp.
pub fn cross_entropy<T: Real>(logits: &[T], label: u8) -> Result<T> {
    if label as usize >= logits.len() {
        return Err(Error::BadLabel(label));
    }
    Ok(grad::log_sum_exp(logits) - logits[label as usize])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub test_accuracy: f64,
}

/// Fraction of samples whose top logit matches the label. Ties resolve
/// toward the lowest class index.
pub fn evaluate<T: Real>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    ds: &Dataset<T>,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.congruent_with(spec)?;
    let hits: Result<Vec<bool>> = ds
        .images
        .par_iter()
        .zip(&ds.labels)
        .map(|(x, &label)| Ok(argmax(&model_forward(spec, params, x)?) == label as usize))
        .collect();
    let correct = hits?.iter().filter(|&&h| h).count();
    Ok(correct as f64 / ds.len() as f64)
}

/// Run the full protocol: per epoch, shuffle, step Adam over every
/// minibatch, then record mean train loss and test accuracy. Returns the
/// final-epoch parameters (no early stopping or best-epoch selection).
pub fn train<T: Real>(
    spec: &ModelSpec,
    ds_train: &Dataset<T>,
    ds_test: &Dataset<T>,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<(ModelParams<T>, Vec<EpochStats>)> {
    cfg.validate()?;
    let mut params = init_params::<T>(spec, cfg.seed)?;
    let mut state = AdamState::new(&params, T::from_f64(cfg.lr), T::from_f64(cfg.weight_decay));
    let plan = BatchPlan::new(cfg.seed, cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in batches(ds_train, &plan, epoch as u64)? {
            let (mean_loss, grads) = backward(spec, &params, &batch)?;
            adam_step(&mut state, &mut params, &grads)?;
            loss_sum += mean_loss.to_f64() * batch.images.len() as f64;
            seen += batch.images.len();
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            mean_train_loss: loss_sum / seen as f64,
            test_accuracy: evaluate(spec, &params, ds_test)?,
        };
        progress(&stats);
        history.push(stats);
    }
    Ok((params, history))
}

/// Write the per-epoch history as `epoch,mean_train_loss,test_accuracy`.
pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "epoch,mean_train_loss,test_accuracy")?;
    for row in history {
        writeln!(
            out,
            "{},{:.6},{:.4}",
            row.epoch, row.mean_train_loss, row.test_accuracy
        )?;
    }
    Ok(())
}
