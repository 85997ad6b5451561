use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{class_stats, compute_eer, confusion, random_guess_f1, weighted_from_stats, ClassStats};
use crate::corpus::{Manifest, Split};
use crate::error::{Error, Result};
use crate::model::TrainSetup;
use crate::scoring::{ScoreFile, ScoreSet};
use crate::taxonomy::{task_classes, CodecRegistry, TaskKind};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const RANDOM_BASELINE_ASSUMPTION: &str =
    "random_guess_f1 assumes predictions drawn uniformly over the task's classes, independent of the reference";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EerSource {
    /// The binary head's bona fide probability.
    Bin,
    /// Root-product fusion of the multi-class heads.
    Fusion,
}

impl EerSource {
    /// Which score the EER of `setup` is computed from, if any. Configurations
    /// with a single multi-class head and no binary head get no EER block.
    pub fn for_setup(setup: &TrainSetup) -> Option<EerSource> {
        if setup.is_active(TaskKind::Bin) {
            Some(EerSource::Bin)
        } else if setup.active_heads().iter().filter(|t| t.is_multiclass()).count() >= 2 {
            Some(EerSource::Fusion)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EerBlock {
    pub source: EerSource,
    /// Percent.
    pub eer: f64,
    pub threshold: f64,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBlock {
    pub task: TaskKind,
    pub classes: Vec<String>,
    /// Percent.
    pub weighted_f1: f64,
    /// Percent; see [`RANDOM_BASELINE_ASSUMPTION`].
    pub random_guess_f1: f64,
    /// `confusion[reference][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: Split,
    pub n_utterances: usize,
    /// Absent when the configuration defines no spoof score or the split
    /// lacks either bona fide or spoof utterances.
    pub eer: Option<EerBlock>,
    pub tasks: Vec<TaskBlock>,
}

impl SplitReport {
    pub fn task(&self, task: TaskKind) -> Option<&TaskBlock> {
        self.tasks.iter().find(|b| b.task == task)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub config: TrainSetup,
    pub manifest_digest: String,
    pub registry_digest: String,
    pub scores_digest: String,
    pub random_baseline_assumption: String,
    pub splits: Vec<SplitReport>,
}

impl EvalReport {
    pub fn split(&self, split: Split) -> Option<&SplitReport> {
        self.splits.iter().find(|s| s.split == split)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `(<split>_<task>_confusion.csv, contents)` for every task block.
    pub fn confusion_files(&self) -> Vec<(String, String)> {
        self.splits
            .iter()
            .flat_map(|s| {
                s.tasks.iter().map(move |b| {
                    (
                        format!("{}_{}_confusion.csv", s.split.name(), b.task.name()),
                        render_confusion_csv(b),
                    )
                })
            })
            .collect()
    }
}

pub struct ReportInputs<'a> {
    pub scores: &'a ScoreFile,
    pub manifest: &'a Manifest,
    pub registry: &'a CodecRegistry,
    pub setup: &'a TrainSetup,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn task_block(task: TaskKind, preds: &[usize], labels: &[usize]) -> Result<TaskBlock> {
    let n = task.num_classes();
    let matrix = confusion(preds, labels, n)?;
    let per_class = class_stats(&matrix);
    let support: Vec<u64> = per_class.iter().map(|c| c.support).collect();
    Ok(TaskBlock {
        task,
        classes: task_classes(task).into_iter().map(String::from).collect(),
        weighted_f1: weighted_from_stats(&per_class),
        random_guess_f1: random_guess_f1(&support),
        confusion: matrix,
        per_class,
    })
}

fn eer_block(source: EerSource, rows: &[&ScoreSet], labels: &[[usize; 4]]) -> Result<Option<EerBlock>> {
    let scores: Vec<f64> = rows.iter().map(|r| r.bonafide_score).collect();
    let bona: Vec<bool> = labels.iter().map(|l| l[TaskKind::Bin.index()] == 0).collect();
    let n_bonafide = bona.iter().filter(|&&b| b).count();
    match compute_eer(&scores, &bona) {
        Ok(e) => Ok(Some(EerBlock {
            source,
            eer: e.eer,
            threshold: e.threshold,
            n_bonafide,
            n_spoof: bona.len() - n_bonafide,
        })),
        Err(Error::DegenerateLabels) => Ok(None),
        Err(e) => Err(e),
    }
}

fn split_report(
    split: Split,
    rows: &[&ScoreSet],
    labels: &[[usize; 4]],
    setup: &TrainSetup,
) -> Result<SplitReport> {
    let eer = match EerSource::for_setup(setup) {
        Some(source) => eer_block(source, rows, labels)?,
        None => None,
    };
    let mut tasks = Vec::new();
    for &task in setup.active_heads().iter().filter(|t| t.is_multiclass()) {
        let preds: Vec<usize> = rows
            .iter()
            .map(|r| {
                r.preds
                    .get(task)
                    .copied()
                    .ok_or_else(|| Error::config(format!("score file has no {task} predictions")))
            })
            .collect::<Result<_>>()?;
        let truth: Vec<usize> = labels.iter().map(|l| l[task.index()]).collect();
        tasks.push(task_block(task, &preds, &truth)?);
    }
    Ok(SplitReport {
        split,
        n_utterances: rows.len(),
        eer,
        tasks,
    })
}

/// Metrics per split for every scored utterance.
pub fn build_report(inputs: &ReportInputs<'_>) -> Result<EvalReport> {
    let ReportInputs {
        scores,
        manifest,
        registry,
        setup,
    } = *inputs;
    let by_id: HashMap<&str, _> = manifest
        .entries
        .iter()
        .map(|e| (e.utterance_id.as_str(), e))
        .collect();
    let mut grouped: BTreeMap<Split, (Vec<&ScoreSet>, Vec<[usize; 4]>)> = BTreeMap::new();
    for row in &scores.rows {
        let entry = by_id
            .get(row.utterance_id.as_str())
            .ok_or_else(|| Error::MissingUtterance(row.utterance_id.clone()))?;
        let labels = registry.labels_of(&entry.origin)?;
        let slot = grouped.entry(entry.split).or_default();
        slot.0.push(row);
        slot.1.push(labels);
    }
    let splits = grouped
        .into_iter()
        .map(|(split, (rows, labels))| split_report(split, &rows, &labels, setup))
        .collect::<Result<Vec<_>>>()?;

    let mut registry_bytes = Vec::new();
    registry.write_jsonl(&mut registry_bytes)?;
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: setup.clone(),
        manifest_digest: manifest.digest()?,
        registry_digest: sha256_hex(&registry_bytes),
        scores_digest: sha256_hex(scores.to_tsv().as_bytes()),
        random_baseline_assumption: RANDOM_BASELINE_ASSUMPTION.to_string(),
        splits,
    })
}

/// Headline dev-set numbers used for model selection during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DevMetrics {
    /// Percent; present when the configuration defines a spoof score.
    pub eer: Option<f64>,
    /// Percent, per active multi-class head.
    pub weighted_f1: BTreeMap<TaskKind, f64>,
}

impl DevMetrics {
    pub fn compute(rows: &[ScoreSet], labels: &[[usize; 4]], setup: &TrainSetup) -> Result<Self> {
        let refs: Vec<&ScoreSet> = rows.iter().collect();
        let report = split_report(Split::Dev, &refs, labels, setup)?;
        Ok(DevMetrics {
            eer: report.eer.map(|e| e.eer),
            weighted_f1: report.tasks.iter().map(|b| (b.task, b.weighted_f1)).collect(),
        })
    }

    pub fn mean_f1(&self) -> Option<f64> {
        if self.weighted_f1.is_empty() {
            None
        } else {
            Some(self.weighted_f1.values().sum::<f64>() / self.weighted_f1.len() as f64)
        }
    }

    /// Selection score, larger is better: `-EER` when the binary head is
    /// active, otherwise the mean weighted F1 of the active heads.
    pub fn selection_score(&self, setup: &TrainSetup) -> Option<f64> {
        if setup.is_active(TaskKind::Bin) {
            self.eer.map(|e| -e)
        } else {
            self.mean_f1()
        }
    }
}

pub fn render_confusion_csv(block: &TaskBlock) -> String {
    let mut out = String::from("reference\\predicted");
    for c in &block.classes {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (name, row) in block.classes.iter().zip(&block.confusion) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Plain-text summary with the splits side by side.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let cfg = &report.config;
    let _ = writeln!(out, "configuration {}  seed {}", cfg.config_name, cfg.seed);
    let _ = writeln!(out, "manifest sha256 {}", report.manifest_digest);
    let _ = writeln!(out, "scores   sha256 {}", report.scores_digest);
    let _ = writeln!(out);

    let width = 18;
    let header = |out: &mut String, first: &str| {
        let _ = write!(out, "{first:<14}");
        for s in &report.splits {
            let _ = write!(out, "{:>width$}", s.split.name());
        }
        out.push('\n');
    };

    if report.splits.iter().any(|s| s.eer.is_some()) {
        let source = report
            .splits
            .iter()
            .find_map(|s| s.eer.as_ref().map(|e| e.source))
            .unwrap();
        let label = match source {
            EerSource::Bin => "EER% (BIN)",
            EerSource::Fusion => "EER% (fused)",
        };
        header(&mut out, label);
        let _ = write!(out, "{:<14}", "");
        for s in &report.splits {
            let cell = s.eer.as_ref().map_or("n/a".into(), |e| format!("{:.2}", e.eer));
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
        let _ = write!(out, "{:<14}", "threshold");
        for s in &report.splits {
            let cell = s.eer.as_ref().map_or("n/a".into(), |e| format!("{:.4}", e.threshold));
            let _ = write!(out, "{cell:>width$}");
        }
        out.push_str("\n\n");
    }

    let tasks: Vec<TaskKind> = report
        .splits
        .first()
        .map(|s| s.tasks.iter().map(|b| b.task).collect())
        .unwrap_or_default();
    if !tasks.is_empty() {
        header(&mut out, "F1% (random)");
        for task in tasks {
            let _ = write!(out, "{:<14}", task.name());
            for s in &report.splits {
                let cell = s
                    .task(task)
                    .map_or("n/a".into(), |b| format!("{:.2} ({:.2})", b.weighted_f1, b.random_guess_f1));
                let _ = write!(out, "{cell:>width$}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "\n{}", report.random_baseline_assumption);
    }

    for s in &report.splits {
        for b in &s.tasks {
            let _ = writeln!(out, "\n[{} {}] confusion (rows: reference, columns: predicted)", s.split, b.task);
            let _ = write!(out, "{:<10}", "");
            for c in &b.classes {
                let _ = write!(out, "{c:>10}");
            }
            let _ = write!(out, "{:>10}{:>10}{:>10}", "prec", "recall", "f1");
            out.push('\n');
            for ((name, row), st) in b.classes.iter().zip(&b.confusion).zip(&b.per_class) {
                let _ = write!(out, "{name:<10}");
                for v in row {
                    let _ = write!(out, "{v:>10}");
                }
                let _ = writeln!(
                    out,
                    "{:>10.3}{:>10.3}{:>10.3}",
                    st.precision, st.recall, st.f1
                );
            }
        }
    }
    out
}
