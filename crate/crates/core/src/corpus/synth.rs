//! Deterministic synthetic corpus with codec-like artifact chains.
//!
//! Bona fide clips come from a small source-filter voice model: a jittered
//! glottal pulse train through a cascade of moving formant resonators, with
//! aspiration and fricative noise. A spoof clip renders the same kind of
//! voice and passes it through one artifact stage per taxonomy axis:
//!
//! | axis | class  | stage                                                        |
//! |------|--------|--------------------------------------------------------------|
//! | AUX  | Sem    | STFT magnitudes smoothed across frequency                    |
//! | AUX  | Disent | envelope smoothed over time, fine structure compressed       |
//! | AUX  | None   | identity                                                     |
//! | VQ   | Mvq    | K-stage residual quantization of STFT coefficients           |
//! | VQ   | Svq    | one coarse quantizer on log magnitudes                       |
//! | VQ   | Scq    | per-sample rounding after mu-law companding                  |
//! | DEC  | Time   | decimation + zero-order-hold upsampling (imaging)            |
//! | DEC  | Freq   | STFT resynthesis with quantized phase                        |

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dsp::{smooth_across, Stft};
use super::{write_wav, Manifest, ManifestEntry, Split, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::seed;
use crate::taxonomy::{AuxClass, CodecRegistry, CodecSpec, DecClass, Origin, TaxonomyLabel, VqClass};

/// Bundled recipe set: 12 codecs covering every taxonomy category, three of
/// them held out of training.
pub const DEFAULT_RECIPES_JSONL: &str = include_str!("default_recipes.jsonl");

const FS: f64 = SAMPLE_RATE as f64;
const CLIP_LEN_RANGE: (usize, usize) = (32_000, 72_000);
const STFT_LEN: usize = 512;

/// Knobs for a recipe's artifact chain. Each field is read only by the stages
/// that need it:
///
/// * `vq_levels`: residual stages for Mvq.
/// * `quant_step`: Mvq first-stage step (relative to the clip's RMS
///   coefficient magnitude), Svq log-magnitude step in dB, Scq step in the
///   companded domain.
/// * `upsample_factor`: Time decoder decimation/hold factor.
/// * `spectral_phase_bits`: Freq decoder phase resolution.
/// * `smoothing_width`: Sem/Disent smoothing width in bins (and frames).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactParams {
    pub vq_levels: u32,
    pub quant_step: f64,
    pub upsample_factor: u32,
    pub spectral_phase_bits: u32,
    pub smoothing_width: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCodecRecipe {
    pub codec_id: String,
    #[serde(default)]
    pub display_name: String,
    #[serde(flatten)]
    pub label: TaxonomyLabel,
    pub artifact_params: ArtifactParams,
    /// Held-out codecs only appear in the unseen-codec evaluation split.
    #[serde(default)]
    pub held_out: bool,
}

impl SyntheticCodecRecipe {
    pub fn codec_spec(&self) -> CodecSpec {
        let name = if self.display_name.is_empty() {
            self.codec_id.clone()
        } else {
            self.display_name.clone()
        };
        CodecSpec::new(self.codec_id.clone(), name, self.label)
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<Self>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect()
    }
}

pub fn default_recipes() -> Vec<SyntheticCodecRecipe> {
    SyntheticCodecRecipe::parse_jsonl(DEFAULT_RECIPES_JSONL).expect("bundled recipes parse")
}

/// Parameters of the voice generator. Evaluation splits that mimic a
/// different generative model use [`VoiceStyle::shifted`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceStyle {
    pub f0_range: (f64, f64),
    pub formant_scale: (f64, f64),
    pub syllable_rate: (f64, f64),
    pub breathiness: (f64, f64),
}

impl Default for VoiceStyle {
    fn default() -> Self {
        VoiceStyle {
            f0_range: (90.0, 240.0),
            formant_scale: (0.92, 1.08),
            syllable_rate: (3.0, 5.5),
            breathiness: (0.02, 0.06),
        }
    }
}

impl VoiceStyle {
    pub fn shifted() -> Self {
        VoiceStyle {
            f0_range: (140.0, 320.0),
            formant_scale: (1.02, 1.2),
            syllable_rate: (4.5, 7.0),
            breathiness: (0.05, 0.12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub manifest: Manifest,
    pub registry: CodecRegistry,
    pub manifest_path: PathBuf,
    pub registry_path: PathBuf,
}

/// Writes `out_dir/{manifest.jsonl, registry.jsonl, audio/*.wav}`.
///
/// Output bytes are a pure function of the arguments. Seen codecs are split
/// 70/10/10/10 over train/dev/eval_cors/eval_cosg_known; held-out codecs go
/// entirely to eval_cosg_all; bona fide clips are split 60/10/10/10/10 over
/// all five splits.
pub fn generate_synthetic_corpus(
    recipes: &[SyntheticCodecRecipe],
    n_bonafide: usize,
    n_per_codec: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<GeneratedCorpus> {
    if n_bonafide == 0 || n_per_codec == 0 {
        return Err(Error::config("n_bonafide and n_per_codec must be positive"));
    }
    let mut registry = CodecRegistry::new();
    for r in recipes {
        validate_recipe(r)?;
        registry.register(r.codec_spec())?;
    }

    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;

    let mut entries = Vec::with_capacity(n_bonafide + recipes.len() * n_per_codec);
    let bona_splits = [
        (Split::Train, 0.6),
        (Split::Dev, 0.1),
        (Split::EvalCors, 0.1),
        (Split::EvalCosgKnown, 0.1),
        (Split::EvalCosgAll, 0.1),
    ];
    let seen_splits = [
        (Split::Train, 0.7),
        (Split::Dev, 0.1),
        (Split::EvalCors, 0.1),
        (Split::EvalCosgKnown, 0.1),
    ];

    let mut emit = |origin: Origin, recipe: Option<&SyntheticCodecRecipe>, i: usize, split: Split| -> Result<()> {
        let utterance_id = format!("{}_{i:05}", origin.as_str());
        let audio_path = PathBuf::from("audio").join(format!("{utterance_id}.wav"));
        let style = if matches!(split, Split::EvalCosgKnown | Split::EvalCosgAll) {
            VoiceStyle::shifted()
        } else {
            VoiceStyle::default()
        };
        let clip = render_clip(recipe, &style, seed::derive(seed, "clip", &utterance_id, 0));
        write_wav(&out_dir.join(&audio_path), &clip)?;
        entries.push(ManifestEntry {
            utterance_id,
            audio_path,
            origin,
            split,
            sample_rate: SAMPLE_RATE,
        });
        Ok(())
    };

    for i in 0..n_bonafide {
        emit(Origin::Bonafide, None, i, pick_split(i, n_bonafide, &bona_splits))?;
    }
    for r in recipes {
        for i in 0..n_per_codec {
            let split = if r.held_out {
                Split::EvalCosgAll
            } else {
                pick_split(i, n_per_codec, &seen_splits)
            };
            emit(Origin::Codec(r.codec_id.clone()), Some(r), i, split)?;
        }
    }

    let manifest = Manifest::new(out_dir, entries);
    let manifest_path = out_dir.join("manifest.jsonl");
    let registry_path = out_dir.join("registry.jsonl");
    std::fs::write(&manifest_path, manifest.to_jsonl()?).map_err(|e| Error::io(&manifest_path, e))?;
    registry.save(&registry_path)?;
    Ok(GeneratedCorpus {
        manifest,
        registry,
        manifest_path,
        registry_path,
    })
}

fn validate_recipe(r: &SyntheticCodecRecipe) -> Result<()> {
    let p = &r.artifact_params;
    let bad = |what: &str| Err(Error::config(format!("recipe `{}`: {what}", r.codec_id)));
    if !(p.quant_step.is_finite() && p.quant_step > 0.0) {
        return bad("quant_step must be positive");
    }
    if r.label.vq == VqClass::Mvq && p.vq_levels == 0 {
        return bad("Mvq needs vq_levels >= 1");
    }
    if r.label.dec == DecClass::Time && p.upsample_factor < 2 {
        return bad("Time decoder needs upsample_factor >= 2");
    }
    if r.label.dec == DecClass::Freq && !(1..=16).contains(&p.spectral_phase_bits) {
        return bad("Freq decoder needs spectral_phase_bits in 1..=16");
    }
    if r.label.aux != AuxClass::NoAux && p.smoothing_width < 2 {
        return bad("Sem/Disent need smoothing_width >= 2");
    }
    Ok(())
}

fn pick_split(i: usize, n: usize, weights: &[(Split, f64)]) -> Split {
    let pos = (i as f64 + 0.5) / n as f64;
    let mut acc = 0.0;
    for &(split, w) in weights {
        acc += w;
        if pos < acc {
            return split;
        }
    }
    weights.last().unwrap().0
}

/// Renders one clip: bona fide when `recipe` is `None`, otherwise the voice
/// passed through the recipe's artifact chain. Peak level is randomized.
pub fn render_clip(recipe: Option<&SyntheticCodecRecipe>, style: &VoiceStyle, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    let len = rng.random_range(CLIP_LEN_RANGE.0..=CLIP_LEN_RANGE.1);
    let voice = render_voice(len, style, &mut rng);
    let mut x = match recipe {
        None => voice,
        Some(r) => apply_codec(&voice, &r.label, &r.artifact_params),
    };
    let peak = rng.random_range(0.35..0.9);
    normalize_peak(&mut x, peak);
    x
}

fn normalize_peak(x: &mut [f64], target: f64) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = target / peak;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

struct Syllable {
    len: usize,
    f0: f64,
    formants: [f64; 4],
    fricative: usize,
    silent: bool,
}

fn render_voice(len: usize, style: &VoiceStyle, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base_f0 = rng.random_range(style.f0_range.0..style.f0_range.1);
    let fscale = rng.random_range(style.formant_scale.0..style.formant_scale.1);
    let rate = rng.random_range(style.syllable_rate.0..style.syllable_rate.1);
    let breath = rng.random_range(style.breathiness.0..style.breathiness.1);

    let mut syllables = Vec::new();
    let mut total = 0;
    while total < len {
        let silent = !syllables.is_empty() && rng.random_bool(0.12);
        let dur = if silent {
            rng.random_range(0.08..0.25)
        } else {
            rng.random_range(0.7..1.3) / rate
        };
        let n = ((dur * FS) as usize).max(200);
        let fricative = if rng.random_bool(0.4) {
            (rng.random_range(0.03..0.08) * FS) as usize
        } else {
            0
        };
        syllables.push(Syllable {
            len: n,
            f0: base_f0 * rng.random_range(0.85..1.2),
            formants: [
                fscale * rng.random_range(300.0..850.0),
                fscale * rng.random_range(900.0..2300.0),
                fscale * rng.random_range(2400.0..3200.0),
                fscale * rng.random_range(3400.0..4600.0),
            ],
            fricative: fricative.min(n / 2),
            silent,
        });
        total += n;
    }

    const BANDWIDTHS: [f64; 4] = [70.0, 100.0, 140.0, 220.0];
    let mut out = Vec::with_capacity(len);
    let mut phase = 0.0;
    let mut f0 = syllables[0].f0;
    let mut formants = syllables[0].formants;
    let mut glottal = 0.0;
    let mut res_state = [[0.0f64; 2]; 4];
    let mut coefs = [[0.0f64; 3]; 4];
    let mut prev_noise = 0.0;
    let vibrato_rate = rng.random_range(4.0..6.5);
    let vibrato_phase = rng.random_range(0.0..2.0 * PI);

    'outer: for syl in &syllables {
        for j in 0..syl.len {
            let t = out.len();
            if t >= len {
                break 'outer;
            }
            let pos = j as f64 / syl.len as f64;
            // one-pole glides toward the syllable targets
            f0 += 0.002 * (syl.f0 - f0);
            for (f, target) in formants.iter_mut().zip(syl.formants) {
                *f += 0.004 * (target - *f);
            }
            if t % 32 == 0 {
                for k in 0..4 {
                    coefs[k] = resonator(formants[k], BANDWIDTHS[k]);
                }
            }

            let voiced_env = if syl.silent {
                0.0
            } else {
                let start = syl.fricative as f64 / syl.len as f64;
                if pos < start {
                    0.0
                } else {
                    let p = (pos - start) / (1.0 - start);
                    (PI * p).sin().powf(0.6)
                }
            };
            let fric_env = if j < syl.fricative {
                (PI * j as f64 / syl.fricative as f64).sin()
            } else {
                0.0
            };

            let vib = 1.0 + 0.015 * (2.0 * PI * vibrato_rate * t as f64 / FS + vibrato_phase).sin();
            phase += f0 * vib / FS;
            let mut pulse = 0.0;
            if phase >= 1.0 {
                phase -= 1.0;
                pulse = rng.random_range(0.85..1.15);
            }
            let noise: f64 = rng.random_range(-1.0..1.0);
            glottal = 0.9 * glottal + pulse;
            let excitation = voiced_env * (glottal + breath * 4.0 * noise);

            let mut y = excitation;
            for k in 0..4 {
                let [g, a1, a2] = coefs[k];
                let v = g * y + a1 * res_state[k][0] - a2 * res_state[k][1];
                res_state[k][1] = res_state[k][0];
                res_state[k][0] = v;
                y = v;
            }
            let hiss = noise - prev_noise;
            prev_noise = noise;
            out.push(0.05 * y + 0.12 * fric_env * hiss + 2e-4 * noise);
        }
    }
    out.resize(len, 0.0);
    normalize_peak(&mut out, 0.9);
    out
}

/// Two-pole resonator with unity gain at DC: returns (gain, a1, a2).
fn resonator(freq: f64, bandwidth: f64) -> [f64; 3] {
    let r = (-PI * bandwidth / FS).exp();
    let theta = 2.0 * PI * freq.min(FS * 0.45) / FS;
    let a1 = 2.0 * r * theta.cos();
    let a2 = r * r;
    [1.0 - a1 + a2, a1, a2]
}

/// Runs the AUX → VQ → DEC artifact chain.
pub(crate) fn apply_codec(x: &[f64], label: &TaxonomyLabel, p: &ArtifactParams) -> Vec<f64> {
    let x = match label.aux {
        AuxClass::Sem => semantic_smoothing(x, p.smoothing_width as usize),
        AuxClass::Disent => disentangle(x, p.smoothing_width as usize),
        AuxClass::NoAux => x.to_vec(),
    };
    let x = match label.vq {
        VqClass::Mvq => residual_quantize(&x, p.vq_levels, p.quant_step),
        VqClass::Svq => coarse_log_quantize(&x, p.quant_step),
        VqClass::Scq => companded_rounding(&x, p.quant_step),
    };
    match label.dec {
        DecClass::Time => zero_order_hold(&x, p.upsample_factor as usize),
        DecClass::Freq => phase_quantized_resynthesis(&x, p.spectral_phase_bits),
    }
}

fn map_spectrum(x: &[f64], mut f: impl FnMut(&mut [Vec<Complex64>])) -> Vec<f64> {
    let stft = Stft::new(STFT_LEN);
    let mut frames = stft.analyze(x);
    f(&mut frames);
    stft.synthesize(&frames, x.len())
}

fn semantic_smoothing(x: &[f64], width: usize) -> Vec<f64> {
    map_spectrum(x, |frames| {
        for frame in frames.iter_mut() {
            let mags: Vec<f64> = frame.iter().map(|c| c.norm()).collect();
            let smooth = smooth_across(&mags, width);
            for (c, (&m, &s)) in frame.iter_mut().zip(mags.iter().zip(&smooth)) {
                *c = if m > 0.0 { *c * (s / m) } else { Complex64::new(s, 0.0) };
            }
        }
    })
}

fn disentangle(x: &[f64], width: usize) -> Vec<f64> {
    map_spectrum(x, |frames| {
        if frames.is_empty() {
            return;
        }
        let bins = frames[0].len();
        let mags: Vec<Vec<f64>> = frames.iter().map(|f| f.iter().map(|c| c.norm()).collect()).collect();
        let env: Vec<Vec<f64>> = mags.iter().map(|m| smooth_across(m, width)).collect();
        // envelope smoothed over time, per bin
        let mut env_t = vec![vec![0.0; bins]; frames.len()];
        for k in 0..bins {
            let track: Vec<f64> = env.iter().map(|e| e[k]).collect();
            for (t, v) in smooth_across(&track, width).into_iter().enumerate() {
                env_t[t][k] = v;
            }
        }
        for (t, frame) in frames.iter_mut().enumerate() {
            for (k, c) in frame.iter_mut().enumerate() {
                let m = mags[t][k];
                if m <= 0.0 || env[t][k] <= 0.0 {
                    continue;
                }
                let residual = (m / env[t][k]).sqrt();
                *c *= env_t[t][k] * residual / m;
            }
        }
    })
}

fn coefficient_rms(frames: &[Vec<Complex64>]) -> f64 {
    let (sum, n) = frames
        .iter()
        .flat_map(|f| f.iter())
        .fold((0.0, 0usize), |(s, n), c| (s + c.norm_sqr(), n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn residual_quantize(x: &[f64], stages: u32, rel_step: f64) -> Vec<f64> {
    map_spectrum(x, |frames| {
        let step0 = rel_step * coefficient_rms(frames);
        if step0 <= 0.0 {
            return;
        }
        for c in frames.iter_mut().flat_map(|f| f.iter_mut()) {
            let mut residual = *c;
            let mut recon = Complex64::new(0.0, 0.0);
            let mut step = step0;
            for _ in 0..stages {
                let q = Complex64::new(
                    step * (residual.re / step).round(),
                    step * (residual.im / step).round(),
                );
                recon += q;
                residual -= q;
                step /= 3.0;
            }
            *c = recon;
        }
    })
}

fn coarse_log_quantize(x: &[f64], step_db: f64) -> Vec<f64> {
    map_spectrum(x, |frames| {
        let reference = coefficient_rms(frames);
        if reference <= 0.0 {
            return;
        }
        for c in frames.iter_mut().flat_map(|f| f.iter_mut()) {
            let m = c.norm();
            let db = 20.0 * (m / reference).log10();
            *c = if m == 0.0 || db < -50.0 {
                Complex64::new(0.0, 0.0)
            } else {
                let qdb = step_db * (db / step_db).round();
                *c * (reference * 10f64.powf(qdb / 20.0) / m)
            };
        }
    })
}

fn companded_rounding(x: &[f64], step: f64) -> Vec<f64> {
    const MU: f64 = 255.0;
    let norm = (1.0 + MU).ln();
    x.iter()
        .map(|&v| {
            let c = v.signum() * (1.0 + MU * v.abs().min(1.0)).ln() / norm;
            let q = step * (c / step).round();
            q.signum() * ((1.0 + MU).powf(q.abs()) - 1.0) / MU
        })
        .collect()
}

fn zero_order_hold(x: &[f64], factor: usize) -> Vec<f64> {
    let cutoff_bin = STFT_LEN / (2 * factor);
    let band_limited = map_spectrum(x, |frames| {
        for frame in frames.iter_mut() {
            for c in frame.iter_mut().skip(cutoff_bin) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    });
    (0..x.len()).map(|i| band_limited[i - i % factor]).collect()
}

fn phase_quantized_resynthesis(x: &[f64], bits: u32) -> Vec<f64> {
    let delta = 2.0 * PI / (1u64 << bits) as f64;
    map_spectrum(x, |frames| {
        for c in frames.iter_mut().flat_map(|f| f.iter_mut()) {
            let (m, phi) = c.to_polar();
            *c = Complex64::from_polar(m, delta * (phi / delta).round());
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dsp::band_flatness;
    use crate::corpus::read_wav;
    use crate::taxonomy::TaskKind;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use std::collections::HashSet;

    fn recipe(id: &str, vq: VqClass, aux: AuxClass, dec: DecClass) -> SyntheticCodecRecipe {
        SyntheticCodecRecipe {
            codec_id: id.into(),
            display_name: String::new(),
            label: TaxonomyLabel::new(vq, aux, dec),
            artifact_params: ArtifactParams {
                vq_levels: 3,
                quant_step: 0.5,
                upsample_factor: 2,
                spectral_phase_bits: 4,
                smoothing_width: 5,
            },
            held_out: false,
        }
    }

    #[test]
    fn bundled_recipes_cover_taxonomy() {
        let recipes = default_recipes();
        assert_eq!(recipes.len(), 12);
        let seen: Vec<_> = recipes.iter().filter(|r| !r.held_out).collect();
        for task in TaskKind::SOURCE_TRACING {
            let cats: HashSet<_> = seen.iter().map(|r| r.label.category(task)).collect();
            assert_eq!(cats.len(), task.num_classes() - 1, "{task}");
        }
        let seen_labels: HashSet<_> = seen.iter().map(|r| r.label).collect();
        for r in recipes.iter().filter(|r| r.held_out) {
            assert!(!seen_labels.contains(&r.label), "{} duplicates a seen label", r.codec_id);
            validate_recipe(r).unwrap();
        }
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let recipes = vec![
            recipe("a", VqClass::Mvq, AuxClass::NoAux, DecClass::Time),
            recipe("b", VqClass::Svq, AuxClass::Sem, DecClass::Freq),
            recipe("c", VqClass::Scq, AuxClass::Disent, DecClass::Time),
            SyntheticCodecRecipe {
                held_out: true,
                ..recipe("d", VqClass::Mvq, AuxClass::Sem, DecClass::Freq)
            },
        ];
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let g1 = generate_synthetic_corpus(&recipes, 50, 25, 7, d1.path()).unwrap();
        let g2 = generate_synthetic_corpus(&recipes, 50, 25, 7, d2.path()).unwrap();
        assert_eq!(g1.manifest.len(), 150);
        assert_eq!(
            std::fs::read(&g1.manifest_path).unwrap(),
            std::fs::read(&g2.manifest_path).unwrap()
        );
        for e in &g1.manifest.entries {
            let a = std::fs::read(d1.path().join(&e.audio_path)).unwrap();
            let b = std::fs::read(d2.path().join(&e.audio_path)).unwrap();
            assert_eq!(a, b, "{}", e.utterance_id);
        }
        assert!(g1
            .manifest
            .entries
            .iter()
            .filter(|e| e.origin.as_str() == "d")
            .all(|e| e.split == Split::EvalCosgAll));
        for split in Split::ALL {
            assert!(g1.manifest.entries.iter().any(|e| e.split == split && e.origin.is_bonafide()));
        }
        let x = read_wav(&d1.path().join(&g1.manifest.entries[60].audio_path)).unwrap();
        assert!((CLIP_LEN_RANGE.0..=CLIP_LEN_RANGE.1).contains(&x.len()));
        assert!(x.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn rejects_bad_counts_before_writing() {
        let d = tempfile::tempdir().unwrap();
        let out = d.path().join("corpus");
        let r = vec![recipe("a", VqClass::Mvq, AuxClass::NoAux, DecClass::Time)];
        assert!(generate_synthetic_corpus(&r, 0, 5, 1, &out).is_err());
        assert!(!out.exists());
        let dup = vec![r[0].clone(), r[0].clone()];
        assert!(matches!(
            generate_synthetic_corpus(&dup, 1, 1, 1, &out),
            Err(Error::DuplicateCodecId(_))
        ));
        assert!(!out.exists());
    }

    /// Welch's two-sample t-test, two-sided p-value.
    fn welch_p(a: &[f64], b: &[f64]) -> f64 {
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let var = |x: &[f64], m: f64| x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
        let (ma, mb) = (mean(a), mean(b));
        let (va, vb) = (var(a, ma) / a.len() as f64, var(b, mb) / b.len() as f64);
        let t = (ma - mb) / (va + vb).sqrt();
        let df = (va + vb).powi(2) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
        2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()))
    }

    #[test]
    fn decoder_axis_is_separable() {
        let time = recipe("t", VqClass::Mvq, AuxClass::NoAux, DecClass::Time);
        let freq = recipe("f", VqClass::Mvq, AuxClass::NoAux, DecClass::Freq);
        let style = VoiceStyle::default();
        let flat = |r: &SyntheticCodecRecipe| -> Vec<f64> {
            (0..25)
                .map(|i| {
                    let clip = render_clip(Some(r), &style, seed::derive(7, "clip", &r.codec_id, i));
                    band_flatness(&clip, SAMPLE_RATE, 4000.0)
                })
                .collect()
        };
        let (a, b) = (flat(&time), flat(&freq));
        let p = welch_p(&a, &b);
        assert!(p < 0.01, "p = {p}");
    }

    #[test]
    fn time_decoder_holds_samples() {
        let mut rng = seed::rng(1);
        let voice = render_voice(8000, &VoiceStyle::default(), &mut rng);
        let y = zero_order_hold(&voice, 2);
        assert!(y.chunks(2).all(|c| c.len() < 2 || c[0] == c[1]));
    }

    #[test]
    fn companding_is_near_identity_for_fine_steps() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 / 50.0) - 1.0).collect();
        let y = companded_rounding(&x, 1e-6);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
