//! Per-task backends: attentive pooling over frames and a two-layer classifier.

use ndarray::{Array1, Array2, Axis};

use super::init_uniform;
use crate::seed;
use crate::taxonomy::TaskKind;

pub const HEAD_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub task: TaskKind,
    /// Frame-scoring vector for attention pooling.
    pub attention: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

pub(crate) struct HeadCache {
    alpha: Array1<f64>,
    pooled: Array1<f64>,
    hidden: Array1<f64>,
}

impl Head {
    pub fn new(task: TaskKind, d_model: usize, seed: u64) -> Self {
        let key = |part: &str| seed::derive(seed, "init", &format!("heads.{}.{part}", task.name()), 0);
        let n = task.num_classes();
        Head {
            task,
            attention: init_uniform((d_model, 1), d_model, key("attention")).into_shape_with_order(d_model).unwrap(),
            w1: init_uniform((d_model, HEAD_HIDDEN), d_model, key("w1")),
            b1: Array1::zeros(HEAD_HIDDEN),
            w2: init_uniform((HEAD_HIDDEN, n), HEAD_HIDDEN, key("w2")),
            b2: Array1::zeros(n),
        }
    }

    pub fn forward(&self, frames: &Array2<f64>) -> Vec<f64> {
        self.forward_cached(frames).0
    }

    pub(crate) fn forward_cached(&self, frames: &Array2<f64>) -> (Vec<f64>, HeadCache) {
        let scores = frames.dot(&self.attention);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha = scores.mapv(|s| (s - max).exp());
        let total = alpha.sum();
        alpha /= total;
        let pooled = frames.t().dot(&alpha);
        let hidden = (pooled.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        let logits = hidden.dot(&self.w2) + &self.b2;
        (logits.to_vec(), HeadCache { alpha, pooled, hidden })
    }

    /// Accumulates parameter gradients into `grad` and returns d(frames).
    pub(crate) fn backward(
        &self,
        frames: &Array2<f64>,
        cache: &HeadCache,
        d_logits: &[f64],
        grad: &mut Head,
    ) -> Array2<f64> {
        let d_logits = Array1::from(d_logits.to_vec());
        grad.w2 += &outer(&cache.hidden, &d_logits);
        grad.b2 += &d_logits;
        let d_hidden = self.w2.dot(&d_logits);
        let d_z1 = &d_hidden * &cache.hidden.mapv(|h| 1.0 - h * h);
        grad.w1 += &outer(&cache.pooled, &d_z1);
        grad.b1 += &d_z1;
        let d_pooled = self.w1.dot(&d_z1);

        // pooled = Σ_t α_t h_t with α = softmax(H·a)
        let d_alpha = frames.dot(&d_pooled);
        let mean = cache.alpha.dot(&d_alpha);
        let d_scores = &cache.alpha * &(d_alpha - mean);
        grad.attention += &frames.t().dot(&d_scores);

        let mut d_frames = outer(&cache.alpha, &d_pooled);
        d_frames += &outer(&d_scores, &self.attention);
        d_frames
    }

    pub(crate) fn zeros_like(&self) -> Self {
        Head {
            task: self.task,
            attention: Array1::zeros(self.attention.raw_dim()),
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}
