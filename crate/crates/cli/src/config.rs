//! Flat `key = value` settings: built-in defaults, then the config file,
//! then command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use trajshield::eval::TulConfig;
use trajshield::geomask::{MaskConfig, MaskMethod};
use trajshield::trajgan::TrainingConfig;

use crate::CliError;

pub const DEFAULT_TRAIN_FRACTION: f64 = 2.0 / 3.0;
pub const DEFAULT_SPLIT_SEED: u64 = 1;

const DATA_KEYS: [&str; 3] = ["split", "split_seed", "train_fraction"];
const MASK_KEYS: [&str; 5] = ["method", "radius_km", "sigma_deg", "temporal", "temporal_window_h"];
const TUL_KEYS: [&str; 5] = ["tul_epochs", "tul_lr", "tul_batch_size", "tul_units", "tul_spatial_embed"];
const OTHER_KEYS: [&str; 1] = ["noise_seed"];

fn known(key: &str) -> bool {
    TrainingConfig::KEYS.contains(&key)
        || DATA_KEYS.contains(&key)
        || MASK_KEYS.contains(&key)
        || TUL_KEYS.contains(&key)
        || OTHER_KEYS.contains(&key)
}

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Reads the optional config file and overlays the given flag values.
    pub fn load(config: Option<&Path>, flags: &[(&str, Option<String>)]) -> Result<Self, CliError> {
        let mut s = Settings::default();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::Usage(format!("{}:{}: expected `key = value`", path.display(), n + 1))
                })?;
                s.insert(k.trim(), v.trim())
                    .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), n + 1)))?;
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                s.insert(k, v).map_err(CliError::Usage)?;
            }
        }
        Ok(s)
    }

    fn insert(&mut self, key: &str, value: &str) -> Result<(), String> {
        let key = key.replace('-', "_");
        if key == "loss_weights" {
            let parts: Vec<&str> = value.split(',').map(str::trim).collect();
            let [a, b, g, c] = parts[..] else {
                return Err(format!("loss_weights needs four comma-separated values, got `{value}`"));
            };
            for (k, v) in [("alpha", a), ("beta", b), ("gamma", g), ("c", c)] {
                self.values.insert(k.into(), v.into());
            }
            return Ok(());
        }
        if !known(&key) {
            return Err(format!("unknown setting `{key}`"));
        }
        self.values.insert(key, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Usage(format!("bad value `{v}` for `{key}`"))),
        }
    }

    pub fn training(&self) -> Result<TrainingConfig, CliError> {
        let mut cfg = TrainingConfig::default();
        for key in TrainingConfig::KEYS {
            if let Some(v) = self.get(key) {
                cfg.set(key, v).map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn mask(&self) -> Result<MaskConfig, CliError> {
        let d = MaskConfig::default();
        let method = match self.get("method") {
            None => d.method,
            Some(m) => m.parse::<MaskMethod>().map_err(CliError::Usage)?,
        };
        let cfg = MaskConfig {
            method,
            spatial_radius_km: self.parse_or("radius_km", d.spatial_radius_km)?,
            gaussian_sigma_deg: self.parse_or("sigma_deg", d.gaussian_sigma_deg)?,
            temporal: self.parse_or("temporal", d.temporal)?,
            temporal_window_h: self.parse_or("temporal_window_h", d.temporal_window_h)?,
            seed: self.parse_or("seed", d.seed)?,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn tul(&self) -> Result<TulConfig, CliError> {
        let d = TulConfig::default();
        let cfg = TulConfig {
            epochs: self.parse_or("tul_epochs", d.epochs)?,
            lr: self.parse_or("tul_lr", d.lr)?,
            batch_size: self.parse_or("tul_batch_size", d.batch_size)?,
            units: self.parse_or("tul_units", d.units)?,
            spatial_embed: self.parse_or("tul_spatial_embed", d.spatial_embed)?,
            seed: self.parse_or("seed", d.seed)?,
        };
        if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
            return Err(CliError::Usage(format!("tul_lr {} must be positive", cfg.lr)));
        }
        Ok(cfg)
    }
}

pub fn mask_pairs(cfg: &MaskConfig) -> Vec<(String, String)> {
    [
        ("method", cfg.method.to_string()),
        ("radius_km", cfg.spatial_radius_km.to_string()),
        ("sigma_deg", cfg.gaussian_sigma_deg.to_string()),
        ("temporal", cfg.temporal.to_string()),
        ("temporal_window_h", cfg.temporal_window_h.to_string()),
        ("seed", cfg.seed.to_string()),
    ]
    .map(|(k, v)| (k.to_string(), v))
    .to_vec()
}

pub fn tul_pairs(cfg: &TulConfig) -> Vec<(String, String)> {
    [
        ("tul_epochs", cfg.epochs.to_string()),
        ("tul_lr", cfg.lr.to_string()),
        ("tul_batch_size", cfg.batch_size.to_string()),
        ("tul_units", cfg.units.to_string()),
        ("tul_spatial_embed", cfg.spatial_embed.to_string()),
        ("seed", cfg.seed.to_string()),
    ]
    .map(|(k, v)| (k.to_string(), v))
    .to_vec()
}
