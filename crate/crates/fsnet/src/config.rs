//! Training configuration files and their precedence.
//!
//! Values resolve in three layers: built-in defaults, then a TOML file, then
//! command-line flags. Every layer is a [`ConfigOverrides`]; unset fields fall
//! through to the layer below.

use std::path::Path;

use fsnet_core::{Mode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::FormatError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub k: Option<usize>,
    pub b: Option<usize>,
    pub lambda: Option<f64>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub tau0: Option<f64>,
    pub tau_end: Option<f64>,
    pub dropout: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub encoder: Option<Vec<usize>>,
    pub classifier: Option<Vec<usize>>,
    pub decoder: Option<Vec<usize>>,
    pub rms_decay: Option<f64>,
    pub rms_eps: Option<f64>,
    pub leaky_slope: Option<f64>,
    pub bias: Option<bool>,
    pub standardize: Option<bool>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        ConfigOverrides { $($f: $hi.$f.clone().or_else(|| $lo.$f.clone()),)* }
    };
}

impl ConfigOverrides {
    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        toml::from_str(&text).map_err(|e| FormatError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Fields of `self` win over those of `lower`.
    pub fn over(&self, lower: &ConfigOverrides) -> ConfigOverrides {
        layer!(
            self, lower, k, b, lambda, lr, epochs, tau0, tau_end, dropout, seed, mode, encoder, classifier,
            decoder, rms_decay, rms_eps, leaky_slope, bias, standardize
        )
    }

    /// Fills unset fields from `base` and validates the result.
    pub fn resolve(&self, base: &TrainConfig) -> Result<TrainConfig, FormatError> {
        let mode = match &self.mode {
            Some(m) => m.parse::<Mode>()?,
            None => base.mode,
        };
        let c = TrainConfig {
            k: self.k.unwrap_or(base.k),
            b: self.b.unwrap_or(base.b),
            lambda: self.lambda.unwrap_or(base.lambda),
            lr: self.lr.unwrap_or(base.lr),
            epochs: self.epochs.unwrap_or(base.epochs),
            tau0: self.tau0.unwrap_or(base.tau0),
            tau_end: self.tau_end.unwrap_or(base.tau_end),
            dropout: self.dropout.unwrap_or(base.dropout),
            seed: self.seed.unwrap_or(base.seed),
            mode,
            encoder: self.encoder.clone().unwrap_or_else(|| base.encoder.clone()),
            classifier: self.classifier.clone().unwrap_or_else(|| base.classifier.clone()),
            decoder: self.decoder.clone().unwrap_or_else(|| base.decoder.clone()),
            rms_decay: self.rms_decay.unwrap_or(base.rms_decay),
            rms_eps: self.rms_eps.unwrap_or(base.rms_eps),
            leaky_slope: self.leaky_slope.unwrap_or(base.leaky_slope),
            bias: self.bias.unwrap_or(base.bias),
            standardize: self.standardize.unwrap_or(base.standardize),
        };
        c.validate()?;
        Ok(c)
    }

    /// Every field set, for echoing a resolved configuration.
    pub fn from_config(c: &TrainConfig) -> Self {
        ConfigOverrides {
            k: Some(c.k),
            b: Some(c.b),
            lambda: Some(c.lambda),
            lr: Some(c.lr),
            epochs: Some(c.epochs),
            tau0: Some(c.tau0),
            tau_end: Some(c.tau_end),
            dropout: Some(c.dropout),
            seed: Some(c.seed),
            mode: Some(c.mode.to_string()),
            encoder: Some(c.encoder.clone()),
            classifier: Some(c.classifier.clone()),
            decoder: Some(c.decoder.clone()),
            rms_decay: Some(c.rms_decay),
            rms_eps: Some(c.rms_eps),
            leaky_slope: Some(c.leaky_slope),
            bias: Some(c.bias),
            standardize: Some(c.standardize),
        }
    }
}

/// Defaults, overridden by the file at `path`, overridden by `flags`.
pub fn resolve(path: Option<&Path>, flags: &ConfigOverrides) -> Result<TrainConfig, FormatError> {
    let file = match path {
        Some(p) => ConfigOverrides::load(p)?,
        None => ConfigOverrides::default(),
    };
    flags.over(&file).resolve(&TrainConfig::default())
}
