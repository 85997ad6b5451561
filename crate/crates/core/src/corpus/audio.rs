use std::path::Path;

use rand::Rng;

use super::{Manifest, ManifestEntry, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::seed;
use crate::taxonomy::{CodecRegistry, TaskKind};

/// Fixed model input length: 4 s at 16 kHz.
pub const SEGMENT_LEN: usize = 64_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f64>,
    /// Class index per task, in [`TaskKind::ALL`] order.
    pub labels: [usize; 4],
}

impl Segment {
    pub fn label(&self, task: TaskKind) -> usize {
        self.labels[task.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadMode {
    /// Seeded random crop.
    Train,
    /// Leading crop.
    Eval,
}

/// Tiles `samples` until at least [`SEGMENT_LEN`] long, then crops.
///
/// Train mode picks the offset from `seed`; eval mode always starts at 0.
pub fn crop_samples(samples: &[f64], mode: LoadMode, seed: u64) -> Vec<f64> {
    if samples.is_empty() {
        return vec![0.0; SEGMENT_LEN];
    }
    let reps = SEGMENT_LEN.div_ceil(samples.len()).max(1);
    let tiled_len = samples.len() * reps;
    let offset = match mode {
        LoadMode::Eval => 0,
        LoadMode::Train => seed::rng(seed).random_range(0..=tiled_len - SEGMENT_LEN),
    };
    (offset..offset + SEGMENT_LEN)
        .map(|i| samples[i % samples.len()].clamp(-1.0, 1.0))
        .collect()
}

pub fn load_segment(
    manifest: &Manifest,
    entry: &ManifestEntry,
    registry: &CodecRegistry,
    mode: LoadMode,
    seed: u64,
) -> Result<Segment> {
    let path = manifest.audio_path(entry);
    let samples = read_wav(&path)?;
    let labels = registry.labels_of(&entry.origin)?;
    let crop_seed = seed::derive(seed, "crop", &entry.utterance_id, 0);
    Ok(Segment {
        samples: crop_samples(&samples, mode, crop_seed),
        labels,
    })
}

/// Reads a 16 kHz mono 16-bit WAV into [-1, 1) floats.
pub fn read_wav(path: &Path) -> Result<Vec<f64>> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRateMismatch {
            path: path.to_path_buf(),
            expected: SAMPLE_RATE,
            found: spec.sample_rate,
        });
    }
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::Parse {
            line: 0,
            message: format!("{}: expected mono 16-bit PCM", path.display()),
        });
    }
    reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0).map_err(wav_err))
        .collect()
}

pub fn write_wav(path: &Path, samples: &[f64]) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i % 1000) as f64 / 1000.0).collect()
    }

    #[test]
    fn eval_crop_is_prefix() {
        let x = ramp(80_000);
        assert_eq!(crop_samples(&x, LoadMode::Eval, 1), x[..SEGMENT_LEN]);
    }

    #[test]
    fn short_input_is_tiled() {
        let x = ramp(30_000);
        let y = crop_samples(&x, LoadMode::Eval, 0);
        assert_eq!(y.len(), SEGMENT_LEN);
        assert_eq!(y[30_000], x[0]);
        assert_eq!(y[63_999], x[63_999 % 30_000]);
        let y = crop_samples(&x, LoadMode::Train, 5);
        assert_eq!(y.len(), SEGMENT_LEN);
    }

    #[test]
    fn train_crop_deterministic() {
        let x: Vec<f64> = (0..100_000).map(|i| i as f64 / 100_000.0).collect();
        let a = crop_samples(&x, LoadMode::Train, 42);
        let b = crop_samples(&x, LoadMode::Train, 42);
        assert_eq!(a, b);
        let offsets: std::collections::HashSet<u64> = (0..20)
            .map(|s| (crop_samples(&x, LoadMode::Train, s)[0] * 100_000.0).round() as u64)
            .collect();
        assert!(offsets.len() > 1);
    }

    #[test]
    fn wav_round_trip_and_rate_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.01).sin() * 0.5).collect();
        write_wav(&p, &x).unwrap();
        let y = read_wav(&p).unwrap();
        assert_eq!(y.len(), x.len());
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-4);
        }

        let p8 = dir.path().join("b.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p8, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p8), Err(Error::SampleRateMismatch { found: 8000, .. })));
    }
}
