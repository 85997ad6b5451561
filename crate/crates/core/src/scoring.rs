//! Inference: per-head class prediction, bona fide scoring and score files.

use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::{crop_samples, read_wav, LoadMode, Manifest};
use crate::error::{Error, Result};
use crate::model::{predict_probs, HeadProbs, Model, PerHead, TrainSetup};
use crate::taxonomy::{task_classes, TaskKind};
use crate::trainer::Checkpoint;

/// Floor applied to each probability before the fusion product.
pub const FUSION_FLOOR: f64 = 1e-12;

/// Scores of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub utterance_id: String,
    pub probs: HeadProbs,
    pub bonafide_score: f64,
    pub preds: PerHead<usize>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict_classes(probs: &HeadProbs) -> PerHead<usize> {
    probs.map(|_, p| argmax(p))
}

/// k-th root of the product of `k` bona fide probabilities, each floored at
/// [`FUSION_FLOOR`]. Computed in the log domain.
pub fn fuse_bonafide(probs: &[f64]) -> f64 {
    if probs.is_empty() {
        return f64::NAN;
    }
    let mean_log = probs.iter().map(|p| p.max(FUSION_FLOOR).ln()).sum::<f64>() / probs.len() as f64;
    mean_log.exp()
}

/// Bona fide score: the BIN head's bona fide probability when BIN is active,
/// otherwise the root-product fusion of the active multi-class heads.
pub fn score_bonafide(probs: &HeadProbs, setup: &TrainSetup) -> Result<f64> {
    let active = setup.active_heads();
    if active.is_empty() {
        return Err(Error::NoActiveHeads);
    }
    let bona = |t: TaskKind| -> Result<f64> {
        probs
            .get(t)
            .map(|p| p[0])
            .ok_or_else(|| Error::config(format!("no probabilities for active head {t}")))
    };
    if setup.is_active(TaskKind::Bin) {
        return bona(TaskKind::Bin);
    }
    let heads: Vec<f64> = active.iter().map(|&t| bona(t)).collect::<Result<_>>()?;
    Ok(fuse_bonafide(&heads))
}

/// Scores one fixed-length segment.
pub fn score_samples(model: &Model, setup: &TrainSetup, utterance_id: &str, samples: &[f64]) -> Result<ScoreSet> {
    let probs = predict_probs(&model.forward(samples, setup));
    let bonafide_score = score_bonafide(&probs, setup)?;
    Ok(ScoreSet {
        utterance_id: utterance_id.to_string(),
        preds: predict_classes(&probs),
        probs,
        bonafide_score,
    })
}

/// Scores every manifest entry from its leading segment; rows are sorted by
/// utterance id.
pub fn score_with_model(model: &Model, setup: &TrainSetup, manifest: &Manifest) -> Result<ScoreFile> {
    let mut rows = Vec::with_capacity(manifest.len());
    for entry in &manifest.entries {
        let samples = read_wav(&manifest.audio_path(entry))?;
        let segment = crop_samples(&samples, LoadMode::Eval, 0);
        rows.push(score_samples(model, setup, &entry.utterance_id, &segment)?);
    }
    Ok(ScoreFile::new(rows))
}

/// Scores a manifest with the best parameters stored in `checkpoint`.
pub fn score_manifest(checkpoint: &Checkpoint, manifest: &Manifest) -> Result<ScoreFile> {
    let model = checkpoint.best_model()?;
    score_with_model(&model, &checkpoint.setup, manifest)
}

/// Tab-separated score table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreFile {
    pub rows: Vec<ScoreSet>,
}

const FIXED_COLUMNS: [&str; 6] = ["utterance_id", "bonafide_score", "bin_pred", "vq_pred", "aux_pred", "dec_pred"];

fn header() -> Vec<String> {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for task in TaskKind::ALL {
        cols.extend(task_classes(task).into_iter().map(|c| format!("{}:{c}", task.name())));
    }
    cols
}

/// Nine significant digits.
fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

impl ScoreFile {
    pub fn new(mut rows: Vec<ScoreSet>) -> Self {
        rows.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        ScoreFile { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = header().join("\t");
        out.push('\n');
        for row in &self.rows {
            let mut fields = vec![row.utterance_id.clone(), fmt_float(row.bonafide_score)];
            for task in TaskKind::ALL {
                fields.push(row.preds.get(task).map(|p| p.to_string()).unwrap_or_default());
            }
            for task in TaskKind::ALL {
                match row.probs.get(task) {
                    Some(p) => fields.extend(p.iter().map(|&v| fmt_float(v))),
                    None => fields.extend(std::iter::repeat_n(String::new(), task.num_classes())),
                }
            }
            let _ = writeln!(out, "{}", fields.join("\t"));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let expected = header();
        match lines.next() {
            Some((_, h)) if h.split('\t').eq(expected.iter().map(String::as_str)) => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "unexpected score file header".into(),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let line_no = i + 1;
            let err = |message: String| Error::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != expected.len() {
                return Err(err(format!("expected {} fields, found {}", expected.len(), fields.len())));
            }
            let float = |s: &str| s.parse::<f64>().map_err(|e| err(format!("bad number `{s}`: {e}")));
            let bonafide_score = float(fields[1])?;
            let mut preds = PerHead::new();
            let mut probs = HeadProbs::new();
            let mut col = FIXED_COLUMNS.len();
            for (k, task) in TaskKind::ALL.into_iter().enumerate() {
                let n = task.num_classes();
                let pred = fields[2 + k];
                let cells = &fields[col..col + n];
                col += n;
                match (pred.is_empty(), cells.iter().all(|c| c.is_empty())) {
                    (true, true) => {}
                    (false, false) => {
                        let p: usize = pred.parse().map_err(|e| err(format!("bad prediction `{pred}`: {e}")))?;
                        if p >= n {
                            return Err(err(format!("prediction {p} out of range for {task}")));
                        }
                        preds.insert(task, p);
                        probs.insert(task, cells.iter().map(|c| float(c)).collect::<Result<Vec<_>>>()?);
                    }
                    _ => return Err(err(format!("partially filled {task} columns"))),
                }
            }
            rows.push(ScoreSet {
                utterance_id: fields[0].to_string(),
                probs,
                bonafide_score,
                preds,
            });
        }
        Ok(ScoreFile::new(rows))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }

    /// Heads that have probabilities in every row.
    pub fn active_heads(&self) -> Vec<TaskKind> {
        TaskKind::ALL
            .into_iter()
            .filter(|&t| !self.rows.is_empty() && self.rows.iter().all(|r| r.probs.contains(t)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConfigName;
    use proptest::prelude::*;

    fn probs(entries: &[(TaskKind, Vec<f64>)]) -> HeadProbs {
        entries.iter().cloned().collect()
    }

    #[test]
    fn argmax_and_ties() {
        let p = probs(&[(TaskKind::Vq, vec![0.1, 0.7, 0.1, 0.1]), (TaskKind::Bin, vec![0.5, 0.5])]);
        let pred = predict_classes(&p);
        assert_eq!(pred.get(TaskKind::Vq), Some(&1));
        assert_eq!(pred.get(TaskKind::Bin), Some(&0));
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn fusion_examples() {
        let m2 = TrainSetup::new(ConfigName::M2);
        let eq = probs(&[
            (TaskKind::Vq, vec![0.729, 0.1, 0.1, 0.071]),
            (TaskKind::Aux, vec![0.729, 0.2, 0.05, 0.021]),
            (TaskKind::Dec, vec![0.729, 0.2, 0.071]),
        ]);
        assert!((score_bonafide(&eq, &m2).unwrap() - 0.729).abs() < 1e-12);
        let mixed = probs(&[
            (TaskKind::Vq, vec![0.8, 0.1, 0.05, 0.05]),
            (TaskKind::Aux, vec![0.1, 0.3, 0.3, 0.3]),
            (TaskKind::Dec, vec![0.1, 0.45, 0.45]),
        ]);
        assert!((score_bonafide(&mixed, &m2).unwrap() - 0.2).abs() < 1e-12);

        let m1 = TrainSetup::new(ConfigName::M1);
        let mut with_bin = mixed.clone();
        with_bin.insert(TaskKind::Bin, vec![0.93, 0.07]);
        assert_eq!(score_bonafide(&with_bin, &m1).unwrap(), 0.93);

        let s_aux = TrainSetup::new(ConfigName::S_AUX);
        let only = probs(&[(TaskKind::Aux, vec![0.37, 0.33, 0.2, 0.1])]);
        assert!((score_bonafide(&only, &s_aux).unwrap() - 0.37).abs() < 1e-15);
    }

    #[test]
    fn floor_keeps_zero_from_annihilating() {
        let s = fuse_bonafide(&[0.0, 0.9, 0.9]);
        assert!(s > 0.0 && s < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn fusion_monotone_and_symmetric(
            a in 0.001f64..0.999, b in 0.001f64..0.999, c in 0.001f64..0.999, bump in 1e-6f64..0.5
        ) {
            let base = fuse_bonafide(&[a, b, c]);
            prop_assert!(base > 0.0 && base < 1.0);
            let up = (a + bump).min(0.9999);
            if up > a {
                prop_assert!(fuse_bonafide(&[up, b, c]) > base);
            }
            let perm = fuse_bonafide(&[c, a, b]);
            prop_assert!((perm - base).abs() <= 1e-15 * base.max(1.0) * 4.0);
        }

        #[test]
        fn argmax_invariant_under_increasing_map(v in proptest::collection::vec(0.0f64..1.0, 2..6)) {
            let mapped: Vec<f64> = v.iter().map(|x| (3.0 * x).exp() + 1.0).collect();
            prop_assert_eq!(argmax(&v), argmax(&mapped));
        }
    }

    #[test]
    fn score_file_round_trip() {
        let setup = TrainSetup::new(ConfigName::D_DEC);
        let p = probs(&[(TaskKind::Bin, vec![0.25, 0.75]), (TaskKind::Dec, vec![0.125, 0.5, 0.375])]);
        let row = |id: &str| ScoreSet {
            utterance_id: id.into(),
            bonafide_score: score_bonafide(&p, &setup).unwrap(),
            preds: predict_classes(&p),
            probs: p.clone(),
        };
        let file = ScoreFile::new(vec![row("b"), row("a")]);
        assert_eq!(file.rows[0].utterance_id, "a");
        let text = file.to_tsv();
        let first = text.lines().nth(1).unwrap();
        assert!(first.starts_with("a\t2.50000000e-1\t1\t\t\t1\t2.50000000e-1\t"), "{first}");
        let back = ScoreFile::from_tsv(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.active_heads(), [TaskKind::Bin, TaskKind::Dec]);
        assert_eq!(back.to_tsv(), text);
    }

    #[test]
    fn empty_score_file_has_header() {
        let text = ScoreFile::default().to_tsv();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("utterance_id\tbonafide_score\tbin_pred"));
        assert!(text.contains("\tVQ:Mvq\t") && text.trim_end().ends_with("DEC:Freq"));
        assert!(ScoreFile::from_tsv(&text).unwrap().is_empty());
        assert!(ScoreFile::from_tsv("nonsense\n").is_err());
    }
}
