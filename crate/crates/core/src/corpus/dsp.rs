//! Short-time Fourier analysis/synthesis and a few spectral statistics.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Weighted overlap-add STFT with a square-root periodic Hann window at 50%
/// overlap, so `synthesize(analyze(x))` reconstructs `x` to rounding error.
pub struct Stft {
    n: usize,
    hop: usize,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4 && n % 2 == 0);
        let mut planner = FftPlanner::new();
        let window = (0..n)
            .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt())
            .collect();
        Stft {
            n,
            hop: n / 2,
            window,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn frame_len(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    /// Frames of `n/2 + 1` one-sided bins. The signal is padded by one frame
    /// on each side.
    pub fn analyze(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        let padded_len = x.len() + 2 * self.n;
        let n_frames = (padded_len - self.n) / self.hop + 1;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        (0..n_frames)
            .map(|f| {
                let start = f * self.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    let pos = start + i;
                    let v = if pos >= self.n && pos - self.n < x.len() {
                        x[pos - self.n]
                    } else {
                        0.0
                    };
                    *b = Complex64::new(v * self.window[i], 0.0);
                }
                self.fwd.process(&mut buf);
                buf[..self.bins()].to_vec()
            })
            .collect()
    }

    /// Inverse of [`Stft::analyze`] for an output of `len` samples.
    pub fn synthesize(&self, frames: &[Vec<Complex64>], len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len + 2 * self.n + self.n];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        let scale = 1.0 / self.n as f64;
        for (f, frame) in frames.iter().enumerate() {
            for k in 0..self.bins() {
                buf[k] = frame[k];
            }
            for k in self.bins()..self.n {
                buf[k] = frame[self.n - k].conj();
            }
            buf[0].im = 0.0;
            buf[self.n / 2].im = 0.0;
            self.inv.process(&mut buf);
            let start = f * self.hop;
            for i in 0..self.n {
                if start + i < out.len() {
                    out[start + i] += buf[i].re * scale * self.window[i];
                }
            }
        }
        out[self.n..self.n + len].to_vec()
    }
}

/// Moving average across neighbouring bins (width clipped at the edges).
pub fn smooth_across(values: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return values.to_vec();
    }
    let half = width / 2;
    let mut prefix = vec![0.0; values.len() + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Mean per-frame spectral flatness (geometric / arithmetic mean of power)
/// over bins at or above `cutoff_hz`. Frames with negligible band energy are
/// skipped.
pub fn band_flatness(x: &[f64], sample_rate: u32, cutoff_hz: f64) -> f64 {
    let stft = Stft::new(512);
    let bin_hz = sample_rate as f64 / stft.frame_len() as f64;
    let first = (cutoff_hz / bin_hz).ceil() as usize;
    let mut total = 0.0;
    let mut count = 0usize;
    for frame in stft.analyze(x) {
        let band: Vec<f64> = frame[first..].iter().map(|c| c.norm_sqr() + 1e-20).collect();
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        if mean < 1e-10 {
            continue;
        }
        let log_mean = band.iter().map(|p| p.ln()).sum::<f64>() / band.len() as f64;
        total += log_mean.exp() / mean;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_reconstruction() {
        let x: Vec<f64> = (0..5000)
            .map(|i| (i as f64 * 0.031).sin() * 0.3 + ((i * 7919) % 101) as f64 / 500.0)
            .collect();
        for n in [64, 256, 512] {
            let s = Stft::new(n);
            let y = s.synthesize(&s.analyze(&x), x.len());
            let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "n={n} err={err}");
        }
    }

    #[test]
    fn flatness_orders_noise_above_tone() {
        let tone: Vec<f64> = (0..16000)
            .map(|i| (2.0 * PI * 5000.0 * i as f64 / 16000.0).sin())
            .collect();
        let mut state = 1u64;
        let noise: Vec<f64> = (0..16000)
            .map(|_| {
                state = crate::seed::splitmix64(state);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let ft = band_flatness(&tone, 16000, 4000.0);
        let fn_ = band_flatness(&noise, 16000, 4000.0);
        assert!(ft < 0.1 && fn_ > 0.4, "{ft} {fn_}");
    }

    #[test]
    fn smoothing_preserves_constants() {
        let v = vec![2.0; 9];
        assert_eq!(smooth_across(&v, 5), v);
        let s = smooth_across(&[0.0, 0.0, 3.0, 0.0, 0.0], 3);
        assert_eq!(s, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
    }
}
