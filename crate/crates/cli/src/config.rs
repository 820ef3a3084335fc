//! Flat `key=value` configuration files and the resolved settings of one run.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use dualmask::model::ModelConfig;
use dualmask::train::TrainConfig;
use serde_json::{json, Value};

use crate::BadInput;

/// Keys understood outside the model config.
const RUN_KEYS: &[&str] = &[
    "seed",
    "snr",
    "max_epochs",
    "epochs",
    "batch_size",
    "learning_rate",
    "patience",
    "target_loss",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> std::result::Result<BTreeMap<String, String>, BadInput> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| BadInput(format!("config line {}: expected key=value", i + 1)))?;
        let key = key.trim().to_string();
        if !ModelConfig::is_key(&key) && !RUN_KEYS.contains(&key.as_str()) {
            return Err(BadInput(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

/// Configuration of one run: file values with command-line flags layered on top.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let values = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| BadInput(format!("cannot read config {}: {e}", p.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Settings { values })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    fn parsed<V: std::str::FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| BadInput(format!("bad value `{v}` for `{key}`")).into())
            })
            .transpose()
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.parsed("seed")?.unwrap_or(0))
    }

    pub fn snr_list(&self) -> Result<Option<Vec<f64>>> {
        self.values.get("snr").map(|v| parse_snr_list(v)).transpose()
    }

    pub fn model(&self) -> Result<ModelConfig> {
        self.model_from(ModelConfig::default())
    }

    /// `base` with every model key of the settings applied.
    pub fn model_from(&self, mut config: ModelConfig) -> Result<ModelConfig> {
        // frame_length resets n_bins, so it goes first
        let mut keys: Vec<&String> = self.values.keys().filter(|k| ModelConfig::is_key(k)).collect();
        keys.sort_by_key(|k| *k != "frame_length");
        for key in keys {
            config
                .set(key, &self.values[key])
                .map_err(|e| BadInput(e.to_string()))?;
        }
        config.validate().map_err(|e| BadInput(e.to_string()))?;
        Ok(config)
    }

    pub fn training(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let max_epochs = match self.parsed("max_epochs")? {
            Some(v) => v,
            None => self.parsed("epochs")?.unwrap_or(d.max_epochs),
        };
        Ok(TrainConfig {
            max_epochs,
            batch_size: self.parsed("batch_size")?.unwrap_or(d.batch_size),
            learning_rate: self.parsed("learning_rate")?.unwrap_or(d.learning_rate),
            patience: self.parsed("patience")?.unwrap_or(d.patience),
            target_loss: self.parsed("target_loss")?,
            seed: self.seed()?,
        })
    }

    pub fn to_json(&self) -> Value {
        json!(self.values)
    }
}

pub fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    let list: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| BadInput(format!("bad SNR `{s}`")))
        })
        .collect::<std::result::Result<_, _>>()?;
    if list.is_empty() {
        return Err(BadInput("SNR list is empty".into()).into());
    }
    Ok(list)
}

/// Writes the snapshot that lets a run be replayed.
pub fn write_snapshot(path: &Path, command: &str, args: Value, settings: &Settings, resolved: Value) -> Result<()> {
    let snapshot = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "arguments": args,
        "settings": settings.to_json(),
        "resolved": resolved,
    });
    fs::write(path, serde_json::to_string_pretty(&snapshot)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let c = parse_config("# model\nd_model = 32\n\nseed=4 # trailing\n").unwrap();
        assert_eq!(c["d_model"], "32");
        assert_eq!(c["seed"], "4");
        let e = parse_config("d_model 32\n").unwrap_err();
        assert!(e.0.contains("line 1"));
        assert!(parse_config("colour=red\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let mut s = Settings {
            values: parse_config("frames=4\nepochs=3\nframe_length=64\nhop=32\n").unwrap(),
        };
        s.set("frames", 6);
        let m = s.model().unwrap();
        assert_eq!((m.context_frames, m.n_bins, m.hop), (6, 33, 32));
        assert_eq!(s.training().unwrap().max_epochs, 3);
    }

    #[test]
    fn snr_lists() {
        assert_eq!(parse_snr_list("-3, 0,3,10").unwrap(), vec![-3.0, 0.0, 3.0, 10.0]);
        assert!(parse_snr_list("loud").is_err());
        assert!(parse_snr_list(" , ").is_err());
    }
}
