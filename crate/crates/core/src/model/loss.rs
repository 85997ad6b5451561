//! Weighted multi-task cross-entropy and softmax utilities.

use super::TrainSetup;
use crate::error::{Error, Result};
use crate::taxonomy::TaskKind;

/// One optional value per task, indexed by [`TaskKind`].
#[derive(Debug, Clone, PartialEq)]
pub struct PerHead<T>([Option<T>; 4]);

impl<T> Default for PerHead<T> {
    fn default() -> Self {
        PerHead([None, None, None, None])
    }
}

impl<T> PerHead<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, task: TaskKind) -> Option<&T> {
        self.0[task.index()].as_ref()
    }

    pub fn insert(&mut self, task: TaskKind, value: T) {
        self.0[task.index()] = Some(value);
    }

    pub fn contains(&self, task: TaskKind) -> bool {
        self.0[task.index()].is_some()
    }

    /// Present entries in task order.
    pub fn iter(&self) -> impl Iterator<Item = (TaskKind, &T)> {
        TaskKind::ALL.into_iter().filter_map(|t| self.get(t).map(|v| (t, v)))
    }

    pub fn tasks(&self) -> Vec<TaskKind> {
        self.iter().map(|(t, _)| t).collect()
    }

    pub fn map<U>(&self, mut f: impl FnMut(TaskKind, &T) -> U) -> PerHead<U> {
        let mut out = PerHead::new();
        for (t, v) in self.iter() {
            out.insert(t, f(t, v));
        }
        out
    }
}

impl<T> FromIterator<(TaskKind, T)> for PerHead<T> {
    fn from_iter<I: IntoIterator<Item = (TaskKind, T)>>(iter: I) -> Self {
        let mut out = PerHead::new();
        for (t, v) in iter {
            out.insert(t, v);
        }
        out
    }
}

pub type HeadLogits = PerHead<Vec<f64>>;
pub type HeadProbs = PerHead<Vec<f64>>;
pub type Labels = PerHead<usize>;

impl From<[usize; 4]> for Labels {
    fn from(all: [usize; 4]) -> Self {
        TaskKind::ALL.into_iter().map(|t| (t, all[t.index()])).collect()
    }
}

/// Per-head losses (absent for inactive heads) and their λ-weighted sum.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown {
    pub per_head: PerHead<f64>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, task: TaskKind) -> Option<f64> {
        self.per_head.get(task).copied()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// `-log softmax(logits)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

pub fn predict_probs(logits: &HeadLogits) -> HeadProbs {
    logits.map(|_, l| softmax(l))
}

/// Single-utterance loss: `Σ_active λ_t · CE_t`.
pub fn total_loss(logits: &HeadLogits, labels: &Labels, setup: &TrainSetup) -> Result<LossBreakdown> {
    batch_loss(std::slice::from_ref(logits), std::slice::from_ref(labels), setup).map(|(l, _)| l)
}

/// Batch-mean per-head losses, their weighted sum, and d(total)/d(logits)
/// for every utterance.
pub fn batch_loss(
    logits: &[HeadLogits],
    labels: &[Labels],
    setup: &TrainSetup,
) -> Result<(LossBreakdown, Vec<HeadLogits>)> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::EmptyInput);
    }
    let inv_batch = 1.0 / logits.len() as f64;
    let mut breakdown = LossBreakdown::default();
    let mut grads = vec![HeadLogits::new(); logits.len()];
    for &task in setup.active_heads() {
        let lambda = setup.lambda(task);
        let mut head_loss = 0.0;
        for (i, (lg, lb)) in logits.iter().zip(labels).enumerate() {
            let z = lg
                .get(task)
                .ok_or_else(|| Error::config(format!("no logits for active head {task}")))?;
            let y = *lb.get(task).ok_or(Error::MissingLabel(task))?;
            if y >= z.len() {
                return Err(Error::config(format!("label {y} out of range for {task}")));
            }
            head_loss += cross_entropy(z, y);
            let mut g = softmax(z);
            g[y] -= 1.0;
            g.iter_mut().for_each(|v| *v *= lambda * inv_batch);
            grads[i].insert(task, g);
        }
        let mean = head_loss * inv_batch;
        breakdown.per_head.insert(task, mean);
        breakdown.total += lambda * mean;
    }
    Ok((breakdown, grads))
}
