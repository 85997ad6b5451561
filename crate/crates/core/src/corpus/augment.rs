use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Segment;
use crate::seed;

/// Stationary additive-noise augmentation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub snr_db_min: f64,
    pub snr_db_max: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            snr_db_min: 20.0,
            snr_db_max: 40.0,
        }
    }
}

/// Target SNR (dB) that [`augment`] draws for `seed`, before strength scaling.
pub fn draw_snr_db(cfg: &AugmentConfig, seed: u64) -> f64 {
    let mut rng = seed::rng(seed);
    if cfg.snr_db_max > cfg.snr_db_min {
        rng.random_range(cfg.snr_db_min..cfg.snr_db_max)
    } else {
        cfg.snr_db_min
    }
}

/// Adds seeded white Gaussian noise.
///
/// The noise is rescaled so its realized power sits exactly at the drawn SNR,
/// lowered by `20·log10(strength)` dB. `strength == 0` returns the input
/// untouched. Output is clamped to [-1, 1].
pub fn augment(segment: &Segment, strength: f64, cfg: &AugmentConfig, seed: u64) -> Segment {
    let signal_power = mean_square(&segment.samples);
    if strength <= 0.0 || signal_power == 0.0 {
        return segment.clone();
    }
    let snr_db = draw_snr_db(cfg, seed);
    let mut rng = seed::rng(seed::mix(&[seed, 1]));
    let noise: Vec<f64> = (0..segment.samples.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let noise_power = mean_square(&noise);
    let target = signal_power / 10f64.powf(snr_db / 10.0) * strength * strength;
    let gain = (target / noise_power).sqrt();
    let samples = segment
        .samples
        .iter()
        .zip(&noise)
        .map(|(s, n)| (s + gain * n).clamp(-1.0, 1.0))
        .collect();
    Segment {
        samples,
        labels: segment.labels,
    }
}

fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}
