use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamW, TrainLog};
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams, SharedEncoder, Tensor, TrainSetup};
use crate::taxonomy::{task_classes, TaskKind};

pub const CHECKPOINT_FORMAT: &str = "codectrace-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeState {
    pub epochs_done: usize,
    /// Consecutive epochs without a dev improvement.
    pub stale_epochs: usize,
    pub params: BTreeMap<String, Tensor>,
    pub adam_m: BTreeMap<String, Tensor>,
    pub adam_v: BTreeMap<String, Tensor>,
    pub adam_t: u64,
    pub log: TrainLog,
}

/// JSON checkpoint: best parameters for inference plus resume state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub setup: TrainSetup,
    /// Class order of every head's output.
    pub classes: BTreeMap<TaskKind, Vec<String>>,
    /// 1-based epoch of the best dev result.
    pub best_epoch: Option<usize>,
    pub best_score: Option<f64>,
    pub best_params: BTreeMap<String, Tensor>,
    pub state: ResumeState,
}

impl Checkpoint {
    pub(crate) fn new(setup: &TrainSetup, best: &ModelParams, params: &ModelParams, opt: &AdamW) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            setup: setup.clone(),
            classes: TaskKind::ALL
                .into_iter()
                .map(|t| (t, task_classes(t).into_iter().map(String::from).collect()))
                .collect(),
            best_epoch: None,
            best_score: None,
            best_params: best.to_tensors(),
            state: ResumeState {
                epochs_done: 0,
                stale_epochs: 0,
                params: params.to_tensors(),
                adam_m: opt.m.to_tensors(),
                adam_v: opt.v.to_tensors(),
                adam_t: opt.t,
                log: TrainLog::default(),
            },
        }
    }

    pub fn best_params(&self) -> Result<ModelParams> {
        ModelParams::from_tensors(self.setup.d_model, &self.best_params)
    }

    /// Inference model with the toy front-end.
    pub fn best_model(&self) -> Result<Model> {
        if self.setup.frontend != crate::model::FrontendKind::Toy {
            return Err(Error::config("checkpoint uses an external encoder; use best_model_with"));
        }
        Ok(Model::from_params(self.best_params()?))
    }

    pub fn best_model_with(&self, encoder: SharedEncoder) -> Result<Model> {
        let mut model = Model::with_encoder(&self.setup, encoder)?;
        model.params = self.best_params()?;
        Ok(model)
    }

    pub(crate) fn restore(&self) -> Result<(ModelParams, AdamW)> {
        let d = self.setup.d_model;
        let params = ModelParams::from_tensors(d, &self.state.params)?;
        let mut opt = AdamW::new(&params, self.setup.learning_rate, self.setup.weight_decay);
        opt.m = ModelParams::from_tensors(d, &self.state.adam_m)?;
        opt.v = ModelParams::from_tensors(d, &self.state.adam_v)?;
        opt.t = self.state.adam_t;
        Ok((params, opt))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and validates a checkpoint. A wrong format tag or version is a
    /// [`Error::VersionMismatch`]; malformed JSON or inconsistent tensors are
    /// errors too.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("<missing>");
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != CHECKPOINT_FORMAT || version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::VersionMismatch {
                expected: format!("{CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}"),
                found: format!(
                    "{format} v{}",
                    version.map_or_else(|| "<missing>".to_string(), |v| v.to_string())
                ),
            });
        }
        let ck: Checkpoint = serde_json::from_value(value)?;
        ck.setup.validate()?;
        ck.best_params()?;
        ck.restore()?;
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
