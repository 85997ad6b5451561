use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::AugmentConfig;
use crate::error::{Error, Result};
use crate::taxonomy::TaskKind;

/// Learning rate used when fine-tuning a pretrained front-end.
pub const PRETRAINED_LEARNING_RATE: f64 = 1e-6;
/// Learning rate for the from-scratch toy front-end.
pub const TOY_LEARNING_RATE: f64 = 1e-3;

/// The nine training configurations: single-task (S), dual-task with the
/// binary head (D) and multi-task with (M1) or without (M2) the binary head.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConfigName {
    S_BIN,
    S_VQ,
    S_AUX,
    S_DEC,
    D_VQ,
    D_AUX,
    D_DEC,
    M1,
    M2,
}

impl ConfigName {
    pub const ALL: [ConfigName; 9] = [
        ConfigName::S_BIN,
        ConfigName::S_VQ,
        ConfigName::S_AUX,
        ConfigName::S_DEC,
        ConfigName::D_VQ,
        ConfigName::D_AUX,
        ConfigName::D_DEC,
        ConfigName::M1,
        ConfigName::M2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConfigName::S_BIN => "S_BIN",
            ConfigName::S_VQ => "S_VQ",
            ConfigName::S_AUX => "S_AUX",
            ConfigName::S_DEC => "S_DEC",
            ConfigName::D_VQ => "D_VQ",
            ConfigName::D_AUX => "D_AUX",
            ConfigName::D_DEC => "D_DEC",
            ConfigName::M1 => "M1",
            ConfigName::M2 => "M2",
        }
    }

    pub fn active_heads(self) -> &'static [TaskKind] {
        use TaskKind::*;
        match self {
            ConfigName::S_BIN => &[Bin],
            ConfigName::S_VQ => &[Vq],
            ConfigName::S_AUX => &[Aux],
            ConfigName::S_DEC => &[Dec],
            ConfigName::D_VQ => &[Bin, Vq],
            ConfigName::D_AUX => &[Bin, Aux],
            ConfigName::D_DEC => &[Bin, Dec],
            ConfigName::M1 => &[Bin, Vq, Aux, Dec],
            ConfigName::M2 => &[Vq, Aux, Dec],
        }
    }
}

impl fmt::Display for ConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConfigName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConfigName::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown configuration `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontendKind {
    Toy,
    External,
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub config_name: ConfigName,
    /// Loss weights in BIN, VQ, AUX, DEC order; zero exactly for inactive heads.
    pub lambdas: [f64; 4],
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub frontend: FrontendKind,
    pub d_model: usize,
    pub augment_strength: f64,
    pub augment: AugmentConfig,
}

impl TrainSetup {
    /// Defaults for the toy front-end: unit λ on active heads.
    pub fn new(config_name: ConfigName) -> Self {
        let mut lambdas = [0.0; 4];
        for t in config_name.active_heads() {
            lambdas[t.index()] = 1.0;
        }
        TrainSetup {
            config_name,
            lambdas,
            learning_rate: TOY_LEARNING_RATE,
            weight_decay: 1e-4,
            batch_size: 8,
            epochs: 30,
            patience: 5,
            seed: 0,
            frontend: FrontendKind::Toy,
            d_model: 64,
            augment_strength: 0.0,
            augment: AugmentConfig::default(),
        }
    }

    pub fn active_heads(&self) -> &'static [TaskKind] {
        self.config_name.active_heads()
    }

    pub fn is_active(&self, task: TaskKind) -> bool {
        self.active_heads().contains(&task)
    }

    pub fn lambda(&self, task: TaskKind) -> f64 {
        self.lambdas[task.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for task in TaskKind::ALL {
            let l = self.lambda(task);
            if !l.is_finite() || l < 0.0 {
                return Err(Error::config(format!("λ for {task} must be a nonnegative number")));
            }
            if self.is_active(task) != (l > 0.0) {
                return Err(Error::config(format!(
                    "λ for {task} must be positive exactly when the head is active in {}",
                    self.config_name
                )));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.d_model == 0 {
            return Err(Error::config("d_model must be positive"));
        }
        if !(self.augment_strength.is_finite() && self.augment_strength >= 0.0) {
            return Err(Error::config("augment_strength must be nonnegative"));
        }
        if self.augment.snr_db_min > self.augment.snr_db_max {
            return Err(Error::config("augment.snr_db_min exceeds snr_db_max"));
        }
        Ok(())
    }

    /// Builds a setup from a JSON config object. Missing fields take the
    /// defaults of [`TrainSetup::new`]; the learning rate defaults to the
    /// pretrained value when `frontend` is `"external"`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text)?;
        file.resolve()
    }
}

/// On-disk config; every field except `config_name` is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub config_name: Option<ConfigName>,
    pub lambdas: Option<[f64; 4]>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub frontend: Option<FrontendKind>,
    pub d_model: Option<usize>,
    pub augment_strength: Option<f64>,
    pub augment: Option<AugmentConfig>,
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<TrainSetup> {
        let name = self
            .config_name
            .ok_or_else(|| Error::config("config_name is required"))?;
        let mut s = TrainSetup::new(name);
        if let Some(v) = self.frontend {
            s.frontend = v;
            if v == FrontendKind::External {
                s.learning_rate = PRETRAINED_LEARNING_RATE;
            }
        }
        if let Some(v) = self.lambdas {
            s.lambdas = v;
        }
        if let Some(v) = self.learning_rate {
            s.learning_rate = v;
        }
        if let Some(v) = self.weight_decay {
            s.weight_decay = v;
        }
        if let Some(v) = self.batch_size {
            s.batch_size = v;
        }
        if let Some(v) = self.epochs {
            s.epochs = v;
        }
        if let Some(v) = self.patience {
            s.patience = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.d_model {
            s.d_model = v;
        }
        if let Some(v) = self.augment_strength {
            s.augment_strength = v;
        }
        if let Some(v) = self.augment {
            s.augment = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_sets() {
        assert_eq!(ConfigName::M1.active_heads().len(), 4);
        assert!(!TrainSetup::new(ConfigName::M2).is_active(TaskKind::Bin));
        for c in [ConfigName::D_VQ, ConfigName::D_AUX, ConfigName::D_DEC] {
            assert_eq!(c.active_heads()[0], TaskKind::Bin);
            assert_eq!(c.active_heads().len(), 2);
        }
        for c in ConfigName::ALL {
            TrainSetup::new(c).validate().unwrap();
            assert_eq!(c.name().parse::<ConfigName>().unwrap(), c);
        }
    }

    #[test]
    fn config_file_defaults_and_overrides() {
        let s = TrainSetup::from_json(r#"{"config_name":"M2","seed":3,"epochs":2}"#).unwrap();
        assert_eq!(s.lambdas, [0.0, 1.0, 1.0, 1.0]);
        assert_eq!(s.seed, 3);
        assert_eq!(s.batch_size, 8);
        assert_eq!(s.learning_rate, TOY_LEARNING_RATE);
        let s = TrainSetup::from_json(r#"{"config_name":"S_BIN","frontend":"external"}"#).unwrap();
        assert_eq!(s.learning_rate, PRETRAINED_LEARNING_RATE);
    }

    #[test]
    fn lambda_activity_enforced() {
        let err = TrainSetup::from_json(r#"{"config_name":"M2","lambdas":[0.5,1,1,1]}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let err = TrainSetup::from_json(r#"{"config_name":"M1","lambdas":[1,1,0,1]}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert!(TrainSetup::from_json(r#"{"lambdas":[1,1,1,1]}"#).is_err());
        assert!(TrainSetup::from_json(r#"{"config_name":"M1","bogus":1}"#).is_err());
    }
}
