//! Flat `key=value` run configuration shared by the command-line tools.
//!
//! ```text
//! # comments and blank lines are ignored
//! n_features = 64
//! rho = 0.01
//! train_forces = true
//! ```
//!
//! Unknown keys are rejected so that typos never silently fall back to a
//! default. [`RunConfig::to_text`] writes every key, one per line, in a fixed
//! order; that text is what checkpoints persist.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{SplitMode, SplitSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// How many conformations go to training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainSize {
    /// Everything not used for validation; the test set is then empty.
    All,
    Count(usize),
}

impl FromStr for TrainSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(TrainSize::All);
        }
        s.parse()
            .map(TrainSize::Count)
            .map_err(|_| Error::Config(format!("n_train must be a count or `all`, got `{s}`")))
    }
}

impl Display for TrainSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainSize::All => f.write_str("all"),
            TrainSize::Count(n) => write!(f, "{n}"),
        }
    }
}

/// Everything a training run depends on besides the data itself.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split_mode: SplitMode,
    pub n_train: TrainSize,
    pub n_val: usize,
    pub molecule_fraction: f64,
    /// Labelled extended-XYZ dataset.
    pub data: Option<PathBuf>,
    /// Parent of the timestamped run directories.
    pub out_dir: PathBuf,
    /// Seeds weight initialization, the split and the shuffle.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split_mode: SplitMode::Random,
            n_train: TrainSize::All,
            n_val: 1000,
            molecule_fraction: 0.8,
            data: None,
            out_dir: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "n_features",
    "n_interactions",
    "rbf_min",
    "rbf_spacing",
    "rbf_count",
    "rbf_gamma",
    "max_atomic_number",
    "include_self_pairs",
    "rho",
    "train_forces",
    "lr",
    "decay_ratio",
    "decay_every",
    "staircase",
    "batch_size",
    "ema_decay",
    "eval_interval",
    "patience",
    "max_steps",
    "selection",
    "record_wall_time",
    "split",
    "n_train",
    "n_val",
    "molecule_fraction",
    "data",
    "out_dir",
    "seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl RunConfig {
    /// Defaults overridden by the settings in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = split_pair(line).map_err(|msg| Error::Parse { line: n + 1, msg })?;
            if seen.iter().any(|k| k == key) {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            config.set(key, value).map_err(|e| Error::Parse {
                line: n + 1,
                msg: e.to_string(),
            })?;
            seen.push(key.to_string());
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key=value` override such as `rho=0.01`.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (key, value) = split_pair(pair).map_err(Error::Config)?;
        self.set(key, value)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (m, t) = (&mut self.model, &mut self.train);
        match key {
            "n_features" => m.n_features = parse(key, value)?,
            "n_interactions" => m.n_interactions = parse(key, value)?,
            "rbf_min" => m.rbf_min = parse(key, value)?,
            "rbf_spacing" => m.rbf_spacing = parse(key, value)?,
            "rbf_count" => m.rbf_count = parse(key, value)?,
            "rbf_gamma" => m.rbf_gamma = parse(key, value)?,
            "max_atomic_number" => m.max_atomic_number = parse(key, value)?,
            "include_self_pairs" => m.include_self_pairs = parse(key, value)?,
            "rho" => t.loss.rho = parse(key, value)?,
            "train_forces" => t.loss.train_forces = parse(key, value)?,
            "lr" => t.schedule.base_lr = parse(key, value)?,
            "decay_ratio" => t.schedule.decay_ratio = parse(key, value)?,
            "decay_every" => t.schedule.decay_every = parse(key, value)?,
            "staircase" => t.schedule.staircase = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "ema_decay" => t.ema_decay = parse(key, value)?,
            "eval_interval" => t.eval_interval = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "max_steps" => t.max_steps = parse(key, value)?,
            "selection" => t.selection = value.parse()?,
            "record_wall_time" => t.record_wall_time = parse(key, value)?,
            "split" => self.split_mode = value.parse()?,
            "n_train" => self.n_train = value.parse()?,
            "n_val" => self.n_val = parse(key, value)?,
            "molecule_fraction" => self.molecule_fraction = parse(key, value)?,
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => {
                self.seed = parse(key, value)?;
                self.train.seed = self.seed;
            }
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Current value of `key` in the form [`RunConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let (m, t) = (&self.model, &self.train);
        Some(match key {
            "n_features" => m.n_features.to_string(),
            "n_interactions" => m.n_interactions.to_string(),
            "rbf_min" => m.rbf_min.to_string(),
            "rbf_spacing" => m.rbf_spacing.to_string(),
            "rbf_count" => m.rbf_count.to_string(),
            "rbf_gamma" => m.rbf_gamma.to_string(),
            "max_atomic_number" => m.max_atomic_number.to_string(),
            "include_self_pairs" => m.include_self_pairs.to_string(),
            "rho" => t.loss.rho.to_string(),
            "train_forces" => t.loss.train_forces.to_string(),
            "lr" => t.schedule.base_lr.to_string(),
            "decay_ratio" => t.schedule.decay_ratio.to_string(),
            "decay_every" => t.schedule.decay_every.to_string(),
            "staircase" => t.schedule.staircase.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "ema_decay" => t.ema_decay.to_string(),
            "eval_interval" => t.eval_interval.to_string(),
            "patience" => t.patience.to_string(),
            "max_steps" => t.max_steps.to_string(),
            "selection" => t.selection.to_string(),
            "record_wall_time" => t.record_wall_time.to_string(),
            "split" => self.split_mode.to_string(),
            "n_train" => self.n_train.to_string(),
            "n_val" => self.n_val.to_string(),
            "molecule_fraction" => self.molecule_fraction.to_string(),
            "data" => self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "out_dir" => self.out_dir.display().to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// Canonical text form; parsing it gives back an equal configuration.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.n_val == 0 {
            return Err(Error::Config("n_val must be at least 1".into()));
        }
        if self.n_train == TrainSize::Count(0) {
            return Err(Error::Config("n_train must be at least 1".into()));
        }
        if !(self.molecule_fraction > 0.0 && self.molecule_fraction <= 1.0) {
            return Err(Error::Config("molecule_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Split for a dataset of `n` conformations.
    pub fn split_spec(&self, n: usize) -> SplitSpec {
        let n_train = match self.n_train {
            TrainSize::Count(k) => k,
            TrainSize::All => n.saturating_sub(self.n_val),
        };
        SplitSpec {
            mode: self.split_mode,
            n_train,
            n_val: self.n_val,
            seed: self.seed,
            molecule_fraction: self.molecule_fraction,
        }
    }
}

fn split_pair(line: &str) -> std::result::Result<(&str, &str), String> {
    let (key, value) = line
        .split_once('=')
        .ok_or_else(|| format!("expected `key=value`, got `{line}`"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(format!("missing key in `{line}`"));
    }
    Ok((key, value.trim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_the_published_settings() {
        let c = RunConfig::default();
        assert_eq!(c.model.n_features, 64);
        assert_eq!(c.model.n_interactions, 3);
        assert_eq!(c.train.loss.rho, 0.01);
        assert_eq!(c.train.schedule.base_lr, 1e-3);
        assert_eq!(c.train.schedule.decay_ratio, 0.96);
        assert_eq!(c.train.schedule.decay_every, 100_000);
        assert_eq!(c.train.ema_decay, 0.99);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.n_val, 1000);
        c.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let text = "# comment\n\nrho = 0.5\nn_train=200\nsplit=molecule_wise\nseed=7\ndata=a b.xyz\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.train.loss.rho, 0.5);
        assert_eq!(c.n_train, TrainSize::Count(200));
        assert_eq!(c.split_mode, SplitMode::MoleculeWise);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.data.as_deref(), Some(Path::new("a b.xyz")));
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert!(RunConfig::default().to_text().contains("\nrho=0.01\n"));
    }

    #[test]
    fn bad_input_is_rejected() {
        for text in [
            "learning_rate=1",
            "rho",
            "rho=abc",
            "=3",
            "rho=1\nrho=2",
            "train_forces=yes",
            "n_train=-1",
        ] {
            assert!(RunConfig::parse(text).is_err(), "{text}");
        }
        let e = RunConfig::parse("seed=1\nfoo=2").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let mut c = RunConfig::default();
        assert!(c.apply_override("rho=0.2").is_ok());
        assert!(c.apply_override("nope").is_err());
        c.set("n_val", "0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn split_spec_uses_the_remainder_for_all() {
        let c = RunConfig::parse("n_val=20").unwrap();
        assert_eq!(c.split_spec(100).n_train, 80);
        assert_eq!(c.split_spec(10).n_train, 0);
    }

    #[test]
    fn every_key_is_settable_from_its_own_output() {
        let c = RunConfig::default();
        let mut d = RunConfig::default();
        for k in KEYS {
            d.set(k, &c.get(k).unwrap()).unwrap();
        }
        assert_eq!(c, d);
        assert!(c.get("bogus").is_none());
    }

    proptest! {
        #[test]
        fn numeric_settings_round_trip(rho in 0.0f64..10.0, lr in 1e-8f64..1.0, seed: u64, f in 1usize..512) {
            let mut c = RunConfig::default();
            c.set("rho", &rho.to_string()).unwrap();
            c.set("lr", &lr.to_string()).unwrap();
            c.set("seed", &seed.to_string()).unwrap();
            c.set("n_features", &f.to_string()).unwrap();
            prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        }
    }
}
