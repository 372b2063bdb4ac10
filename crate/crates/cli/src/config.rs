//! Run configuration: TOML files layered over system- and preset-dependent
//! defaults.

use std::path::Path;

use glnn::datagen::GenerateConfig;
use glnn::mlp::Activation;
use glnn::models::{derive_seed, ModelConfig, ModelKind};
use glnn::oracles::{DampedHarmonicParams, DoublePendulumParams, SystemParams};
use glnn::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-scale data and training protocol.
    #[default]
    Paper,
    /// 10% of the trajectories and 30 epochs.
    Smoke,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatagenSection {
    pub n_traj: usize,
    pub n_steps: usize,
    pub h: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub substeps: usize,
    /// Fraction of pairs assigned to training.
    pub split_ratio: f64,
    pub seed: u64,
    pub split_seed: u64,
}

impl DatagenSection {
    pub fn generate_config(&self) -> GenerateConfig {
        GenerateConfig {
            n_traj: self.n_traj,
            n_steps: self.n_steps,
            h: self.h,
            init_low: self.init_low,
            init_high: self.init_high,
            substeps: self.substeps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub hidden_size: usize,
    pub n_hidden_layers: usize,
    pub lagrangian_activation: Activation,
    pub force_activation: Activation,
    pub ridge: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub horizon: f64,
    pub h: f64,
    /// Initial phase-space points `(q…, q̇…)`.
    pub inits: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub hidden_sizes: Vec<usize>,
    /// Depth used while varying the hidden size.
    pub fixed_layers: usize,
    pub layer_counts: Vec<usize>,
    /// Width used while varying the depth.
    pub fixed_hidden: usize,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    pub system: SystemParams,
    pub datagen: DatagenSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub evaluate: EvaluateSection,
    pub sweep: SweepSection,
}

impl RunConfig {
    /// Defaults for `system` (`"dho"` or `"dp"`) under `preset`, with every
    /// section seed derived from `seed`.
    pub fn defaults(system: &str, preset: Preset, seed: u64) -> Result<Self, CliError> {
        let (system, n_traj, n_steps, h, layers, inits, horizon) = match system {
            "dho" => (SystemParams::Dho(DampedHarmonicParams::default()), 40, 200, 0.05, 3, vec![vec![1.0, 0.0]], 50.0),
            "dp" => (
                SystemParams::Dp(DoublePendulumParams::default()),
                20,
                500,
                0.02,
                4,
                vec![vec![1.0, 0.0, 0.0, 0.0]],
                10.0,
            ),
            other => return Err(CliError::Config(format!("unknown system {other:?} (expected \"dho\" or \"dp\")"))),
        };
        let (n_traj, epochs) = match preset {
            Preset::Paper => (n_traj, 300),
            Preset::Smoke => ((n_traj / 10).max(1), 30),
        };
        Ok(RunConfig {
            seed,
            preset,
            system,
            datagen: DatagenSection {
                n_traj,
                n_steps,
                h,
                init_low: -1.0,
                init_high: 1.0,
                substeps: 10,
                split_ratio: 0.5,
                seed: section_seed(seed, 100),
                split_seed: section_seed(seed, 101),
            },
            model: ModelSection {
                kind: ModelKind::Glnn,
                hidden_size: 200,
                n_hidden_layers: layers,
                lagrangian_activation: Activation::Softplus,
                force_activation: Activation::Tanh,
                ridge: 1e-6,
                seed: section_seed(seed, 102),
            },
            train: TrainConfig { epochs, seed: section_seed(seed, 103), ..TrainConfig::default() },
            evaluate: EvaluateSection { horizon, h, inits },
            sweep: SweepSection {
                hidden_sizes: vec![50, 100, 200, 400],
                fixed_layers: layers,
                layer_counts: vec![2, 3, 4, 5],
                fixed_hidden: 200,
                seeds: 3,
            },
        })
    }

    /// Resolves a configuration from optional TOML text.
    ///
    /// Precedence, lowest first: system defaults, preset, file values,
    /// `seed_override`. Section seeds not pinned in the file follow the
    /// top-level seed. The baseline model defaults to 3 hidden layers.
    pub fn resolve(text: Option<&str>, preset: Option<Preset>, seed_override: Option<u64>) -> Result<Self, CliError> {
        let file: toml::Table = match text {
            Some(t) => t.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        let str_at = |section: &str, key: &str| -> Result<Option<String>, CliError> {
            match file.get(section).and_then(|s| s.get(key)) {
                None => Ok(None),
                Some(toml::Value::String(s)) => Ok(Some(s.clone())),
                Some(v) => Err(CliError::Config(format!("{section}.{key} must be a string, found {v}"))),
            }
        };
        let system = str_at("system", "system")?.unwrap_or_else(|| "dho".into());
        let preset = match (preset, file.get("preset")) {
            (Some(p), _) => p,
            (None, Some(v)) => Preset::deserialize(v.clone()).map_err(|e| CliError::Config(format!("preset: {e}")))?,
            (None, None) => Preset::Paper,
        };
        let seed = match (seed_override, file.get("seed")) {
            (Some(s), _) if s <= MAX_SEED => s,
            (Some(s), _) => return Err(CliError::Config(format!("seed {s} exceeds {MAX_SEED}"))),
            (None, Some(toml::Value::Integer(s))) if *s >= 0 => *s as u64,
            (None, Some(v)) => return Err(CliError::Config(format!("seed must be a non-negative integer, found {v}"))),
            (None, None) => 0,
        };
        let mut defaults = Self::defaults(&system, preset, seed)?;
        if str_at("model", "kind")?.as_deref() == Some("baseline") {
            defaults.model.n_hidden_layers = 3;
        }
        let mut merged = toml::Value::try_from(&defaults).map_err(|e| CliError::Config(e.to_string()))?;
        let mut overlay = file;
        overlay.remove("seed");
        overlay.remove("preset");
        merge(&mut merged, toml::Value::Table(overlay));
        let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, preset: Option<Preset>, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?),
            None => None,
        };
        Self::resolve(text.as_deref(), preset, seed_override)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let seeds = [self.seed, self.datagen.seed, self.datagen.split_seed, self.model.seed, self.train.seed];
        if seeds.iter().any(|&s| s > MAX_SEED) {
            return Err(CliError::Config(format!("seeds must not exceed {MAX_SEED}")));
        }
        self.system.validate()?;
        self.datagen.generate_config().validate()?;
        if !(0.0..=1.0).contains(&self.datagen.split_ratio) {
            return Err(CliError::Config("datagen.split_ratio must lie in [0, 1]".into()));
        }
        self.model_config().validate()?;
        self.train.validate()?;
        let n = self.system.dof();
        if self.evaluate.inits.is_empty() || self.evaluate.inits.iter().any(|x| x.len() != 2 * n) {
            return Err(CliError::Config(format!("evaluate.inits must hold points of length {}", 2 * n)));
        }
        if !(self.evaluate.horizon > 0.0 && self.evaluate.h > 0.0) {
            return Err(CliError::Config("evaluate.horizon and evaluate.h must be positive".into()));
        }
        let sw = &self.sweep;
        if sw.seeds == 0 || sw.hidden_sizes.contains(&0) || sw.layer_counts.contains(&0) || sw.fixed_layers == 0 || sw.fixed_hidden == 0 {
            return Err(CliError::Config("sweep sizes, layer counts and seeds must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            kind: m.kind,
            dof: self.system.dof(),
            hidden_size: m.hidden_size,
            n_hidden_layers: m.n_hidden_layers,
            lagrangian_activation: m.lagrangian_activation,
            force_activation: m.force_activation,
            ridge: m.ridge,
            seed: m.seed,
        }
    }

    /// The fully resolved configuration as TOML. Loading it reproduces the
    /// same run.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Seeds are stored in TOML, whose integers are signed 64-bit.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Sub-seed `k` of a configuration seed, kept within [`MAX_SEED`].
pub fn section_seed(seed: u64, k: u64) -> u64 {
    derive_seed(seed, k) >> 1
}

/// Recursively overlays `over` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
