//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Every key is optional
//! except `scheme`. Command-line flags are merged over the file before the
//! typed config is built, so a flag always wins.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ragan_core::training::TrainConfig;
use ragan_core::{LinkConfig, Scheme};

use crate::CliError;

pub const KEYS: &[&str] = &[
    "scheme",
    "M",
    "n",
    "batch_size",
    "lambda",
    "pilot",
    "channel",
    "dataset_path",
    "train_ebn0_db",
    "eval_grid",
    "eval_n",
    "epochs",
    "n_train",
    "lr",
    "rl_sigma",
    "valid_n",
    "seed",
    "out",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
    Dataset,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::Dataset => "dataset",
        }
    }
}

impl FromStr for ChannelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            "dataset" => Ok(ChannelKind::Dataset),
            other => Err(format!("unknown channel {other:?} (awgn, rayleigh, dataset)")),
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    /// Link parameters; `link.ebn0_db` is the training Eb/N0.
    pub link: LinkConfig,
    pub channel: ChannelKind,
    pub dataset_path: Option<PathBuf>,
    pub eval_grid: Vec<f64>,
    pub eval_n: usize,
    pub epochs: usize,
    pub n_train: usize,
    pub lr: f64,
    pub rl_sigma: f64,
    pub valid_n: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            link: self.link.clone(),
            scheme: self.scheme,
            epochs: self.epochs,
            n_train: self.n_train,
            lr: self.lr,
            rl_sigma: self.rl_sigma,
            valid_n: self.valid_n,
        }
    }

    /// Builds the typed config from raw entries. Defaults depend on the
    /// channel: fading channels train for 100 epochs with pilots and sweep
    /// 0..20 dB; AWGN trains for 50 epochs and sweeps 0..8 dB.
    pub fn from_entries(entries: &RawConfig) -> Result<Self, CliError> {
        let get = |key: &str| entries.get(key);
        let scheme: Scheme = match get("scheme") {
            Some(v) => v
                .parse()
                .map_err(|_| type_error("scheme", v, "one of optimal, gan, ra-gan, rl"))?,
            None => return Err(CliError::Config("missing required key `scheme`".into())),
        };
        let channel: ChannelKind = parse_or(entries, "channel", ChannelKind::Awgn)?;
        let fading = channel != ChannelKind::Awgn;
        let defaults = LinkConfig::default();
        let link = LinkConfig {
            alphabet: parse_or(entries, "M", defaults.alphabet)?,
            channel_uses: parse_or(entries, "n", defaults.channel_uses)?,
            ebn0_db: parse_or(entries, "train_ebn0_db", if fading { 13.0 } else { 3.0 })?,
            batch_size: parse_or(entries, "batch_size", defaults.batch_size)?,
            lambda: parse_or(entries, "lambda", defaults.lambda)?,
            pilot: parse_or(entries, "pilot", fading)?,
        };
        let eval_grid = match get("eval_grid") {
            Some(v) => parse_grid(v).map_err(|e| type_error("eval_grid", v, &e))?,
            None if fading => (0..=10).map(|i| 2.0 * i as f64).collect(),
            None => (0..=8).map(f64::from).collect(),
        };
        let dataset_path = get("dataset_path").map(PathBuf::from);
        let cfg = Self {
            scheme,
            link,
            channel,
            dataset_path,
            eval_grid,
            eval_n: parse_or(entries, "eval_n", 100_000)?,
            epochs: parse_or(entries, "epochs", if fading { 100 } else { 50 })?,
            n_train: parse_or(entries, "n_train", 10_000)?,
            lr: parse_or(entries, "lr", 1e-3)?,
            rl_sigma: parse_or(entries, "rl_sigma", 0.15)?,
            valid_n: parse_or(entries, "valid_n", 10_000)?,
            seed: parse_or(entries, "seed", 0)?,
            out: get("out").map_or_else(|| PathBuf::from("out"), PathBuf::from),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.eval_n == 0 {
            return Err(CliError::Config("eval_n must be at least 1".into()));
        }
        if self.eval_grid.is_empty() {
            return Err(CliError::Config("eval_grid must not be empty".into()));
        }
        if self.eval_grid.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("eval_grid values must be finite".into()));
        }
        if self.channel == ChannelKind::Dataset && self.dataset_path.is_none() {
            return Err(CliError::Config(
                "channel = dataset requires `dataset_path`".into(),
            ));
        }
        self.train_config().validate().map_err(CliError::from)
    }
}

/// Raw `key -> value` pairs, in key order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig(BTreeMap<String, String>);

impl RawConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Sets `key`, rejecting keys the runner does not know.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.0.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Overlays `other`; its values win.
    pub fn merge(&mut self, other: RawConfig) {
        self.0.extend(other.0);
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = RawConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    i + 1
                )));
            };
            let key = key.trim();
            if raw.get(key).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
            raw.set(key, value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {}", i + 1, e.message())))?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }
}

fn type_error(key: &str, value: &str, expected: &str) -> CliError {
    CliError::Config(format!("key `{key}`: cannot parse {value:?} ({expected})"))
}

fn parse_or<T: FromStr>(entries: &RawConfig, key: &str, default: T) -> Result<T, CliError> {
    match entries.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| type_error(key, v, std::any::type_name::<T>())),
    }
}

/// `a,b,c` or `start:stop:step` (inclusive of `stop`).
pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts
            .iter()
            .map(|p| p.parse::<f64>().map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start {
            return Err("range needs step > 0 and stop >= start".into());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| start + i as f64 * step).collect());
    }
    text.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}
