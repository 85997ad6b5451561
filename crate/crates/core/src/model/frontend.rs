//! Shared waveform front-end.

use std::sync::Arc;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};

use super::init_uniform;
use crate::corpus::SEGMENT_LEN;

/// Per-frame features, `n_frames × d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSequence {
    pub frames: Array2<f64>,
}

impl HiddenSequence {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn d_model(&self) -> usize {
        self.frames.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.frames.iter().all(|v| v.is_finite())
    }
}

/// Slot for an externally supplied pretrained speech encoder. It is treated
/// as frozen: no gradients flow into it.
pub trait SpeechEncoder: Send + Sync {
    fn d_model(&self) -> usize;
    fn encode(&self, samples: &[f64]) -> HiddenSequence;
}

pub type SharedEncoder = Arc<dyn SpeechEncoder>;

/// Floor inside the first layer's log-energy activation.
const LOG_ENERGY_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Activation {
    /// `ln(1 + z²/ε)`: a learnable filterbank followed by log compression.
    LogEnergy,
    Silu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LogEnergy => (z * z / LOG_ENERGY_EPS).ln_1p(),
            Activation::Silu => z / (1.0 + (-z).exp()),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LogEnergy => 2.0 * z / (LOG_ENERGY_EPS + z * z),
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

/// Strided 1-D convolution over a time-major `(time × channels)` signal.
///
/// The weight is stored as a `(kernel·in_ch) × out_ch` matrix so that a layer
/// is one matrix product over the unfolded input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: usize,
    pub stride: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub(crate) activation: Activation,
}

pub(crate) struct ConvCache {
    unfolded: Array2<f64>,
    pre: Array2<f64>,
    in_len: usize,
}

impl ConvLayer {
    fn new(kernel: usize, stride: usize, in_ch: usize, out_ch: usize, activation: Activation, seed: u64) -> Self {
        let fan_in = kernel * in_ch;
        ConvLayer {
            kernel,
            stride,
            in_ch,
            out_ch,
            weight: init_uniform((fan_in, out_ch), fan_in, seed),
            bias: Array1::zeros(out_ch),
            activation,
        }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        if in_len < self.kernel {
            0
        } else {
            (in_len - self.kernel) / self.stride + 1
        }
    }

    fn unfold(&self, input: &[f64], in_len: usize) -> Array2<f64> {
        let t_out = self.out_len(in_len);
        let row = self.kernel * self.in_ch;
        let mut data = Vec::with_capacity(t_out * row);
        for t in 0..t_out {
            let start = t * self.stride * self.in_ch;
            data.extend_from_slice(&input[start..start + row]);
        }
        Array2::from_shape_vec((t_out, row), data).expect("unfold shape")
    }

    fn forward(&self, input: &[f64], in_len: usize) -> (Array2<f64>, ConvCache) {
        let unfolded = self.unfold(input, in_len);
        let mut pre = Array2::zeros((unfolded.nrows(), self.out_ch));
        general_mat_mul(1.0, &unfolded, &self.weight, 0.0, &mut pre);
        pre += &self.bias;
        let act = self.activation;
        let out = pre.mapv(|z| act.apply(z));
        (out, ConvCache { unfolded, pre, in_len })
    }

    /// Accumulates parameter gradients into `grad`; returns the input
    /// gradient when `need_input_grad`.
    fn backward(
        &self,
        cache: &ConvCache,
        d_out: &Array2<f64>,
        grad: &mut ConvLayer,
        need_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let act = self.activation;
        let mut d_pre = d_out.clone();
        d_pre.zip_mut_with(&cache.pre, |d, &z| *d *= act.derivative(z));
        general_mat_mul(1.0, &cache.unfolded.t(), &d_pre, 1.0, &mut grad.weight);
        grad.bias += &d_pre.sum_axis(Axis(0));
        if !need_input_grad {
            return None;
        }
        let d_unfolded = d_pre.dot(&self.weight.t());
        let row = self.kernel * self.in_ch;
        let mut d_in = vec![0.0; cache.in_len * self.in_ch];
        for (t, r) in d_unfolded.outer_iter().enumerate() {
            let start = t * self.stride * self.in_ch;
            for (dst, src) in d_in[start..start + row].iter_mut().zip(r.iter()) {
                *dst += src;
            }
        }
        Some(d_in)
    }
}

/// Three strided convolutions: 64000 samples → 3999 → 999 → 249 frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyFrontend {
    pub layers: Vec<ConvLayer>,
}

pub(crate) struct FrontendCache {
    layers: Vec<ConvCache>,
}

impl ToyFrontend {
    /// (out_channels, kernel, stride) per layer, the last width being d_model.
    pub fn schedule(d_model: usize) -> [(usize, usize, usize); 3] {
        [(16, 32, 16), (32, 4, 4), (d_model, 4, 4)]
    }

    pub fn new(d_model: usize, seed: u64) -> Self {
        let mut in_ch = 1;
        let layers = Self::schedule(d_model)
            .into_iter()
            .enumerate()
            .map(|(i, (out_ch, kernel, stride))| {
                let act = if i == 0 { Activation::LogEnergy } else { Activation::Silu };
                let layer_seed = crate::seed::derive(seed, "init", &format!("frontend.conv{}", i + 1), 0);
                let layer = ConvLayer::new(kernel, stride, in_ch, out_ch, act, layer_seed);
                in_ch = out_ch;
                layer
            })
            .collect();
        ToyFrontend { layers }
    }

    pub fn d_model(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_ch)
    }

    /// Output frame count for an input of `samples` samples.
    pub fn n_frames(&self, samples: usize) -> usize {
        self.layers.iter().fold(samples, |len, l| l.out_len(len))
    }

    pub fn forward(&self, samples: &[f64]) -> HiddenSequence {
        self.forward_cached(samples).0
    }

    pub(crate) fn forward_cached(&self, samples: &[f64]) -> (HiddenSequence, FrontendCache) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current: Option<Array2<f64>> = None;
        for layer in &self.layers {
            let (input, len) = match &current {
                None => (samples, samples.len()),
                Some(a) => (a.as_slice().expect("standard layout"), a.nrows()),
            };
            let (out, cache) = layer.forward(input, len);
            caches.push(cache);
            current = Some(out);
        }
        let frames = current.unwrap_or_else(|| Array2::zeros((0, 0)));
        (HiddenSequence { frames }, FrontendCache { layers: caches })
    }

    pub(crate) fn backward(&self, cache: &FrontendCache, d_hidden: Array2<f64>, grad: &mut ToyFrontend) {
        let mut d_out = d_hidden;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let c = &cache.layers[i];
            let d_in = layer.backward(c, &d_out, &mut grad.layers[i], i > 0);
            if let Some(d_in) = d_in {
                let prev = &self.layers[i - 1];
                d_out = Array2::from_shape_vec((c.in_len, prev.out_ch), d_in).expect("grad shape");
            }
        }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for l in &mut z.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        z
    }
}

impl Default for ToyFrontend {
    fn default() -> Self {
        ToyFrontend::new(64, 0)
    }
}

/// Frame count of the default toy front-end on one segment.
pub fn default_frame_count() -> usize {
    ToyFrontend::default().n_frames(SEGMENT_LEN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_regression() {
        // (64000-32)/16+1 = 3999, (3999-4)/4+1 = 999, (999-4)/4+1 = 249
        assert_eq!(default_frame_count(), 249);
        let fe = ToyFrontend::new(64, 1);
        let h = fe.forward(&vec![0.1; SEGMENT_LEN]);
        assert_eq!(h.n_frames(), 249);
        assert_eq!(h.d_model(), 64);
    }

    #[test]
    fn zero_input_is_finite_and_deterministic() {
        let fe = ToyFrontend::new(64, 3);
        let zero = vec![0.0; SEGMENT_LEN];
        let h = fe.forward(&zero);
        assert!(h.is_finite());
        assert_eq!(h, fe.forward(&zero));
        assert_eq!(ToyFrontend::new(64, 3), fe);
        assert_ne!(ToyFrontend::new(64, 4), fe);
    }

    #[test]
    fn activation_derivatives_match_differences() {
        for act in [Activation::LogEnergy, Activation::Silu] {
            for z in [-2.0, -0.3, -0.004, 0.0, 0.002, 0.5, 3.0] {
                let h = 1e-6;
                let fd = (act.apply(z + h) - act.apply(z - h)) / (2.0 * h);
                let an = act.derivative(z);
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "{act:?} at {z}: {fd} vs {an}");
            }
        }
    }
}
