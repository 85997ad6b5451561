//! Mini-batch training with AdamW, per-epoch dev evaluation, early stopping
//! and resumable JSON checkpoints.
//!
//! All randomness is derived from the setup seed: the batch order of epoch
//! `e` is a pure function of `(seed, e)`, and each utterance's crop and noise
//! of `(seed, e, utterance_id)`. Resuming from a checkpoint therefore
//! continues the same stream as an uninterrupted run.

mod adamw;
mod checkpoint;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{augment, crop_samples, read_wav, LoadMode, Manifest, Segment};
use crate::error::{Error, Result};
use crate::metrics::DevMetrics;
use crate::model::{is_trainable, FrontendKind, Labels, Model, ModelParams, SharedEncoder, TrainSetup};
use crate::scoring::score_samples;
use crate::seed;
use crate::taxonomy::{CodecRegistry, TaskKind};

pub use adamw::AdamW;
pub use checkpoint::{Checkpoint, ResumeState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 0-based, counted across epochs.
    pub step: usize,
    /// 1-based.
    pub epoch: usize,
    pub total: f64,
    pub per_head: BTreeMap<TaskKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev: DevMetrics,
    /// Larger is better; see [`DevMetrics::selection_score`].
    pub selection_score: Option<f64>,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Optional knobs for [`fit_with`] and [`resume_with`].
#[derive(Default)]
pub struct FitOptions<'a> {
    /// Frozen pretrained encoder; required when the setup asks for one.
    pub encoder: Option<SharedEncoder>,
    /// Called after every epoch.
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

struct TrainItem {
    utterance_id: String,
    /// Whole clip; `i16 / 32768` values are exact in `f32`.
    samples: Vec<f32>,
    labels: [usize; 4],
}

struct DevItem {
    utterance_id: String,
    segment: Vec<f64>,
    labels: [usize; 4],
}

fn labels_for(
    manifest: &Manifest,
    registry: &CodecRegistry,
    setup: &TrainSetup,
) -> Result<Vec<[usize; 4]>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let labels = registry.labels_of(&e.origin)?;
            // Registry labels cover every task; this guards custom registries.
            for &t in setup.active_heads() {
                if labels[t.index()] >= t.num_classes() {
                    return Err(Error::MissingLabel(t));
                }
            }
            Ok(labels)
        })
        .collect()
}

fn load_train(manifest: &Manifest, registry: &CodecRegistry, setup: &TrainSetup) -> Result<Vec<TrainItem>> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput);
    }
    let labels = labels_for(manifest, registry, setup)?;
    manifest
        .entries
        .iter()
        .zip(labels)
        .map(|(e, labels)| {
            let samples = read_wav(&manifest.audio_path(e))?;
            Ok(TrainItem {
                utterance_id: e.utterance_id.clone(),
                samples: samples.into_iter().map(|v| v as f32).collect(),
                labels,
            })
        })
        .collect()
}

fn load_dev(manifest: &Manifest, registry: &CodecRegistry, setup: &TrainSetup) -> Result<Vec<DevItem>> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput);
    }
    let labels = labels_for(manifest, registry, setup)?;
    manifest
        .entries
        .iter()
        .zip(labels)
        .map(|(e, labels)| {
            let samples = read_wav(&manifest.audio_path(e))?;
            Ok(DevItem {
                utterance_id: e.utterance_id.clone(),
                segment: crop_samples(&samples, LoadMode::Eval, 0),
                labels,
            })
        })
        .collect()
}

/// Fraction of the base learning rate used during `epoch` (1-based): cosine
/// decay across the `budget` epochs of the setup, never below `LR_FLOOR`.
pub fn lr_factor(epoch: usize, budget: usize) -> f64 {
    let budget = budget.max(1);
    let progress = (epoch.saturating_sub(1) as f64 / budget as f64).min(1.0);
    LR_FLOOR + (1.0 - LR_FLOOR) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

pub const LR_FLOOR: f64 = 0.02;

/// Batch order of `epoch` (1-based) over `n` items.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(seed, "shuffle", "", epoch as u64)));
    order
}

fn train_segment(item: &TrainItem, setup: &TrainSetup, epoch: usize) -> Vec<f64> {
    let raw: Vec<f64> = item.samples.iter().map(|&v| v as f64).collect();
    let crop_seed = seed::derive(setup.seed, "crop", &item.utterance_id, epoch as u64);
    let samples = crop_samples(&raw, LoadMode::Train, crop_seed);
    if setup.augment_strength <= 0.0 {
        return samples;
    }
    let noise_seed = seed::derive(setup.seed, "augment", &item.utterance_id, epoch as u64);
    let seg = Segment {
        samples,
        labels: item.labels,
    };
    augment(&seg, setup.augment_strength, &setup.augment, noise_seed).samples
}

fn evaluate(model: &Model, setup: &TrainSetup, dev: &[DevItem]) -> Result<DevMetrics> {
    let rows = dev
        .iter()
        .map(|d| score_samples(model, setup, &d.utterance_id, &d.segment))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<[usize; 4]> = dev.iter().map(|d| d.labels).collect();
    DevMetrics::compute(&rows, &labels, setup)
}

fn build_model(setup: &TrainSetup, encoder: Option<SharedEncoder>) -> Result<Model> {
    match (setup.frontend, encoder) {
        (FrontendKind::Toy, None) => Model::new(setup),
        (FrontendKind::External, Some(enc)) => Model::with_encoder(setup, enc),
        (FrontendKind::Toy, Some(_)) => Err(Error::config("an encoder was supplied but frontend is `toy`")),
        (FrontendKind::External, None) => Err(Error::config("frontend `external` needs an encoder")),
    }
}

/// Trains from freshly initialized parameters for up to `epochs` epochs.
pub fn fit(
    setup: &TrainSetup,
    train: &Manifest,
    dev: &Manifest,
    registry: &CodecRegistry,
    epochs: usize,
) -> Result<(Checkpoint, TrainLog)> {
    fit_with(setup, train, dev, registry, epochs, FitOptions::default())
}

pub fn fit_with(
    setup: &TrainSetup,
    train: &Manifest,
    dev: &Manifest,
    registry: &CodecRegistry,
    epochs: usize,
    opts: FitOptions<'_>,
) -> Result<(Checkpoint, TrainLog)> {
    setup.validate()?;
    let model = build_model(setup, opts.encoder.clone())?;
    let opt = AdamW::new(&model.params, setup.learning_rate, setup.weight_decay);
    let checkpoint = Checkpoint::new(setup, &model.params, &model.params, &opt);
    run(checkpoint, model, opt, train, dev, registry, epochs, opts)
}

/// Continues a run for up to `extra_epochs` more epochs with the restored
/// optimizer state. A run that already stopped early stays stopped.
pub fn resume(
    checkpoint: &Checkpoint,
    train: &Manifest,
    dev: &Manifest,
    registry: &CodecRegistry,
    extra_epochs: usize,
) -> Result<(Checkpoint, TrainLog)> {
    resume_with(checkpoint, train, dev, registry, extra_epochs, FitOptions::default())
}

pub fn resume_with(
    checkpoint: &Checkpoint,
    train: &Manifest,
    dev: &Manifest,
    registry: &CodecRegistry,
    extra_epochs: usize,
    opts: FitOptions<'_>,
) -> Result<(Checkpoint, TrainLog)> {
    if checkpoint.format != CHECKPOINT_FORMAT || checkpoint.version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: format!("{CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}"),
            found: format!("{} v{}", checkpoint.format, checkpoint.version),
        });
    }
    let setup = &checkpoint.setup;
    let mut model = build_model(setup, opts.encoder.clone())?;
    let (params, opt) = checkpoint.restore()?;
    model.params = params;
    let target = checkpoint.state.epochs_done + extra_epochs;
    run(checkpoint.clone(), model, opt, train, dev, registry, target, opts)
}

#[allow(clippy::too_many_arguments)]
fn run(
    mut ck: Checkpoint,
    mut model: Model,
    mut opt: AdamW,
    train: &Manifest,
    dev: &Manifest,
    registry: &CodecRegistry,
    target_epochs: usize,
    mut opts: FitOptions<'_>,
) -> Result<(Checkpoint, TrainLog)> {
    let setup = ck.setup.clone();
    let stopped = |ck: &Checkpoint| setup.patience > 0 && ck.state.stale_epochs >= setup.patience;
    if ck.state.epochs_done >= target_epochs || stopped(&ck) {
        let log = ck.state.log.clone();
        return Ok((ck, log));
    }
    let train_items = load_train(train, registry, &setup)?;
    let dev_items = load_dev(dev, registry, &setup)?;
    let trainable = |name: &str| is_trainable(name, &setup);

    let mut best: Option<ModelParams> = None;
    while ck.state.epochs_done < target_epochs && !stopped(&ck) {
        let epoch = ck.state.epochs_done + 1;
        let order = epoch_order(setup.seed, epoch, train_items.len());
        opt.learning_rate = setup.learning_rate * lr_factor(epoch, setup.epochs);
        let mut loss_sum = 0.0;
        let mut n_steps = 0usize;
        for chunk in order.chunks(setup.batch_size) {
            let step = ck.state.log.steps.len();
            let segments: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&i| train_segment(&train_items[i], &setup, epoch))
                .collect();
            let batch: Vec<(&[f64], Labels)> = chunk
                .iter()
                .zip(&segments)
                .map(|(&i, s)| (s.as_slice(), Labels::from(train_items[i].labels)))
                .collect();
            let (loss, grads) = model.loss_and_gradients(&batch, &setup)?;
            let finite = loss.total.is_finite() && loss.per_head.iter().all(|(_, v)| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteLoss { step });
            }
            opt.step(&mut model.params, &grads, trainable);
            loss_sum += loss.total;
            n_steps += 1;
            ck.state.log.steps.push(StepRecord {
                step,
                epoch,
                total: loss.total,
                per_head: loss.per_head.iter().map(|(t, &v)| (t, v)).collect(),
            });
        }

        let dev_metrics = evaluate(&model, &setup, &dev_items)?;
        let score = dev_metrics.selection_score(&setup);
        let improved = ck.best_epoch.is_none()
            || match (score, ck.best_score) {
                (Some(s), Some(b)) => s > b,
                (Some(_), None) => true,
                (None, _) => false,
            };
        if improved {
            ck.best_epoch = Some(epoch);
            ck.best_score = score;
            best = Some(model.params.clone());
            ck.state.stale_epochs = 0;
        } else {
            ck.state.stale_epochs += 1;
        }
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / n_steps as f64,
            dev: dev_metrics,
            selection_score: score,
            improved,
        };
        if let Some(cb) = opts.on_epoch.as_mut() {
            cb(&record);
        }
        ck.state.log.epochs.push(record);
        ck.state.epochs_done = epoch;
    }

    if let Some(b) = best {
        ck.best_params = b.to_tensors();
    }
    ck.state.params = model.params.to_tensors();
    ck.state.adam_m = opt.m.to_tensors();
    ck.state.adam_v = opt.v.to_tensors();
    ck.state.adam_t = opt.t;
    let log = ck.state.log.clone();
    Ok((ck, log))
}
