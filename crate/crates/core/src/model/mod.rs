//! Shared front-end, per-task heads and the weighted multi-task loss.

mod frontend;
mod heads;
mod loss;
mod setup;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::taxonomy::TaskKind;

pub use frontend::{default_frame_count, ConvLayer, HiddenSequence, SharedEncoder, SpeechEncoder, ToyFrontend};
pub use heads::{Head, HEAD_HIDDEN};
pub use loss::{
    batch_loss, cross_entropy, predict_probs, softmax, total_loss, HeadLogits, HeadProbs, Labels, LossBreakdown,
    PerHead,
};
pub use setup::{ConfigFile, ConfigName, FrontendKind, TrainSetup, PRETRAINED_LEARNING_RATE, TOY_LEARNING_RATE};

/// Seeded uniform fan-in initialization, `U(-1/√fan_in, 1/√fan_in)`.
pub(crate) fn init_uniform(shape: (usize, usize), fan_in: usize, seed: u64) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let mut rng = seed::rng(seed);
    Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
}

/// A named parameter tensor as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// All learnable parameters. All four heads always exist so that parameter
/// paths are stable across configurations; inactive heads are never touched.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub frontend: ToyFrontend,
    /// Indexed by [`TaskKind::index`].
    pub heads: Vec<Head>,
}

impl ModelParams {
    pub fn init(d_model: usize, seed: u64) -> Self {
        ModelParams {
            frontend: ToyFrontend::new(d_model, seed),
            heads: TaskKind::ALL.iter().map(|&t| Head::new(t, d_model, seed)).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            frontend: self.frontend.zeros_like(),
            heads: self.heads.iter().map(Head::zeros_like).collect(),
        }
    }

    pub fn head(&self, task: TaskKind) -> &Head {
        &self.heads[task.index()]
    }

    /// Parameter slices keyed by module path, in a fixed order.
    pub fn slices(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, l) in self.frontend.layers.iter().enumerate() {
            out.push((format!("frontend.conv{}.weight", i + 1), l.weight.as_slice().unwrap()));
            out.push((format!("frontend.conv{}.bias", i + 1), l.bias.as_slice().unwrap()));
        }
        for h in &self.heads {
            let p = format!("heads.{}", h.task.name());
            out.push((format!("{p}.attention"), h.attention.as_slice().unwrap()));
            out.push((format!("{p}.w1"), h.w1.as_slice().unwrap()));
            out.push((format!("{p}.b1"), h.b1.as_slice().unwrap()));
            out.push((format!("{p}.w2"), h.w2.as_slice().unwrap()));
            out.push((format!("{p}.b2"), h.b2.as_slice().unwrap()));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        for (i, l) in self.frontend.layers.iter_mut().enumerate() {
            out.push((format!("frontend.conv{}.weight", i + 1), l.weight.as_slice_mut().unwrap()));
            out.push((format!("frontend.conv{}.bias", i + 1), l.bias.as_slice_mut().unwrap()));
        }
        for h in &mut self.heads {
            let p = format!("heads.{}", h.task.name());
            out.push((format!("{p}.attention"), h.attention.as_slice_mut().unwrap()));
            out.push((format!("{p}.w1"), h.w1.as_slice_mut().unwrap()));
            out.push((format!("{p}.b1"), h.b1.as_slice_mut().unwrap()));
            out.push((format!("{p}.w2"), h.w2.as_slice_mut().unwrap()));
            out.push((format!("{p}.b2"), h.b2.as_slice_mut().unwrap()));
        }
        out
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for l in &self.frontend.layers {
            out.push(l.weight.shape().to_vec());
            out.push(l.bias.shape().to_vec());
        }
        for h in &self.heads {
            out.push(h.attention.shape().to_vec());
            out.push(h.w1.shape().to_vec());
            out.push(h.b1.shape().to_vec());
            out.push(h.w2.shape().to_vec());
            out.push(h.b2.shape().to_vec());
        }
        out
    }

    pub fn to_tensors(&self) -> BTreeMap<String, Tensor> {
        self.slices()
            .into_iter()
            .zip(self.shapes())
            .map(|((name, data), shape)| {
                (
                    name,
                    Tensor {
                        shape,
                        data: data.to_vec(),
                    },
                )
            })
            .collect()
    }

    /// Rebuilds parameters for `d_model` from named tensors; every path must
    /// be present with the expected shape.
    pub fn from_tensors(d_model: usize, tensors: &BTreeMap<String, Tensor>) -> Result<Self> {
        let mut params = ModelParams::init(d_model, 0);
        let shapes = params.shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::config(format!(
                "expected {} parameter tensors, found {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, slot), shape) in params.slices_mut().into_iter().zip(shapes) {
            let t = tensors
                .get(&name)
                .ok_or_else(|| Error::config(format!("missing parameter `{name}`")))?;
            if t.shape != shape || t.data.len() != slot.len() {
                return Err(Error::config(format!("parameter `{name}` has the wrong shape")));
            }
            slot.copy_from_slice(&t.data);
        }
        Ok(params)
    }

    pub fn num_parameters(&self) -> usize {
        self.slices().iter().map(|(_, s)| s.len()).sum()
    }
}

/// Whether the parameter at `path` is updated under `setup`.
pub fn is_trainable(path: &str, setup: &TrainSetup) -> bool {
    if path.starts_with("frontend.") {
        return setup.frontend == FrontendKind::Toy;
    }
    setup
        .active_heads()
        .iter()
        .any(|t| path.strip_prefix("heads.").is_some_and(|rest| rest.starts_with(&format!("{}.", t.name()))))
}

/// Front-end plus heads. The toy front-end is used unless an external
/// encoder is attached.
#[derive(Clone)]
pub struct Model {
    pub params: ModelParams,
    encoder: Option<SharedEncoder>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("params", &self.params.num_parameters())
            .field("external_encoder", &self.encoder.is_some())
            .finish()
    }
}

impl Model {
    pub fn new(setup: &TrainSetup) -> Result<Self> {
        if setup.frontend == FrontendKind::External {
            return Err(Error::config(
                "frontend `external` needs an encoder attached via Model::with_encoder",
            ));
        }
        Ok(Model {
            params: ModelParams::init(setup.d_model, setup.seed),
            encoder: None,
        })
    }

    pub fn with_encoder(setup: &TrainSetup, encoder: SharedEncoder) -> Result<Self> {
        if encoder.d_model() != setup.d_model {
            return Err(Error::config(format!(
                "encoder width {} does not match d_model {}",
                encoder.d_model(),
                setup.d_model
            )));
        }
        Ok(Model {
            params: ModelParams::init(setup.d_model, setup.seed),
            encoder: Some(encoder),
        })
    }

    pub fn from_params(params: ModelParams) -> Self {
        Model { params, encoder: None }
    }

    pub fn frontend_forward(&self, samples: &[f64]) -> HiddenSequence {
        match &self.encoder {
            Some(enc) => enc.encode(samples),
            None => self.params.frontend.forward(samples),
        }
    }

    pub fn heads_forward(&self, hidden: &HiddenSequence, setup: &TrainSetup) -> HeadLogits {
        setup
            .active_heads()
            .iter()
            .map(|&t| (t, self.params.head(t).forward(&hidden.frames)))
            .collect()
    }

    pub fn forward(&self, samples: &[f64], setup: &TrainSetup) -> HeadLogits {
        self.heads_forward(&self.frontend_forward(samples), setup)
    }

    /// Batch loss and gradients of the total loss with respect to every
    /// parameter. Gradients of inactive heads (and of a frozen external
    /// front-end) are exactly zero.
    pub fn loss_and_gradients(
        &self,
        batch: &[(&[f64], Labels)],
        setup: &TrainSetup,
    ) -> Result<(LossBreakdown, ModelParams)> {
        struct Pass {
            hidden: HiddenSequence,
            frontend_cache: Option<frontend::FrontendCache>,
            head_caches: Vec<(TaskKind, heads::HeadCache)>,
        }
        let mut passes = Vec::with_capacity(batch.len());
        let mut all_logits = Vec::with_capacity(batch.len());
        for (samples, _) in batch {
            let (hidden, frontend_cache) = match &self.encoder {
                Some(enc) => (enc.encode(samples), None),
                None => {
                    let (h, c) = self.params.frontend.forward_cached(samples);
                    (h, Some(c))
                }
            };
            let mut logits = HeadLogits::new();
            let mut head_caches = Vec::new();
            for &t in setup.active_heads() {
                let (z, c) = self.params.head(t).forward_cached(&hidden.frames);
                logits.insert(t, z);
                head_caches.push((t, c));
            }
            all_logits.push(logits);
            passes.push(Pass {
                hidden,
                frontend_cache,
                head_caches,
            });
        }
        let labels: Vec<Labels> = batch.iter().map(|(_, l)| l.clone()).collect();
        let (breakdown, d_logits) = batch_loss(&all_logits, &labels, setup)?;

        let mut grads = self.params.zeros_like();
        for (pass, dl) in passes.iter().zip(&d_logits) {
            let mut d_hidden = Array2::zeros(pass.hidden.frames.raw_dim());
            for (t, cache) in &pass.head_caches {
                let head = self.params.head(*t);
                let g = &mut grads.heads[t.index()];
                d_hidden += &head.backward(&pass.hidden.frames, cache, dl.get(*t).unwrap(), g);
            }
            if let Some(fc) = &pass.frontend_cache {
                self.params.frontend.backward(fc, d_hidden, &mut grads.frontend);
            }
        }
        Ok((breakdown, grads))
    }
}
