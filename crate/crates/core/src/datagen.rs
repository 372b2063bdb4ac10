//! Trajectory datasets: generation from the ground-truth oracles, train/test
//! splitting, and a lossless CSV + JSON-sidecar file format.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::rollout;
use crate::linalg::Vector;
use crate::models::derive_seed;
use crate::oracles::{State, System, SystemParams};

pub const GENERATOR_VERSION: u32 = 1;
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// One training sample: the state at `t`, the recorded next state and the
/// exact acceleration at `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub t: f64,
    pub x: State<f64>,
    pub x_next: State<f64>,
    pub qddot: Vector<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub n_traj: usize,
    pub n_steps: usize,
    pub substeps: usize,
    pub init_low: f64,
    pub init_high: f64,
    pub integrator: String,
    pub generator_version: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub system: SystemParams,
    pub h: f64,
    pub pairs: Vec<Pair>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub n_traj: usize,
    pub n_steps: usize,
    pub h: f64,
    pub init_low: f64,
    pub init_high: f64,
    pub substeps: usize,
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 || self.n_steps == 0 || self.substeps == 0 {
            return Err(Error::Config("n_traj, n_steps and substeps must be positive".into()));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config("h must be positive".into()));
        }
        if !(self.init_low < self.init_high) || !self.init_low.is_finite() || !self.init_high.is_finite() {
            return Err(Error::Config(format!(
                "initial-condition range [{}, {}] is empty or invalid",
                self.init_low, self.init_high
            )));
        }
        Ok(())
    }
}

/// Samples `n_traj` initial states uniformly from the hypercube
/// `[init_low, init_high]^(2N)`, integrates each with substepped RK4 and
/// records consecutive-state pairs plus the exact acceleration.
///
/// Trajectory `k` draws from its own ChaCha stream seeded by
/// `derive_seed(seed, k)`.
pub fn generate(system: &SystemParams, cfg: &GenerateConfig, seed: u64) -> Result<TrajectoryDataset> {
    system.validate()?;
    cfg.validate()?;
    let n = system.dof();
    let mut pairs = Vec::with_capacity(cfg.n_traj * cfg.n_steps);
    for traj in 0..cfg.n_traj {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, traj as u64));
        let x0: Vec<f64> = (0..2 * n).map(|_| rng.random_range(cfg.init_low..cfg.init_high)).collect();
        let s0 = State::from_phase(&x0);
        let r = rollout(system, &s0, cfg.h, cfg.n_steps, cfg.substeps).map_err(|e| match e {
            Error::Divergence { step, .. } => Error::Divergence { step, trajectory: Some(traj) },
            other => other,
        })?;
        for (i, w) in r.states.windows(2).enumerate() {
            let d = system.deriv(&w[0])?;
            pairs.push(Pair { t: r.times[i], x: w[0].clone(), x_next: w[1].clone(), qddot: d.qdot });
        }
    }
    Ok(TrajectoryDataset {
        system: system.clone(),
        h: cfg.h,
        pairs,
        provenance: Provenance {
            seed,
            n_traj: cfg.n_traj,
            n_steps: cfg.n_steps,
            substeps: cfg.substeps,
            init_low: cfg.init_low,
            init_high: cfg.init_high,
            integrator: "rk4".into(),
            generator_version: GENERATOR_VERSION,
        },
    })
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.system.dof()
    }

    /// Pairs of trajectory `k`.
    pub fn trajectory(&self, k: usize) -> &[Pair] {
        let n = self.provenance.n_steps;
        &self.pairs[k * n..(k + 1) * n]
    }

    /// Whether every recorded step keeps the energy from rising by more than
    /// `slack`.
    pub fn energy_non_increasing(&self, slack: f64) -> bool {
        self.pairs.iter().all(|p| self.system.energy(&p.x_next) <= self.system.energy(&p.x) + slack)
    }

    /// Largest deviation between a stored acceleration and the oracle.
    pub fn max_label_error(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for p in &self.pairs {
            let d = self.system.deriv(&p.x)?;
            for (a, b) in d.qdot.iter().zip(p.qddot.iter()) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }

    /// Writes the CSV at `path` and the metadata sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta_path = meta_path(path);
        let n = self.dof();
        let mut out = String::with_capacity(self.pairs.len() * 16 * (1 + 5 * n));
        let meta_name = meta_path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        writeln!(out, "#meta={meta_name};columns={}", column_names(n).join(",")).unwrap();
        for p in &self.pairs {
            write!(out, "{}", p.t).unwrap();
            for v in p.x.phase().iter().chain(p.x_next.phase().iter()).chain(p.qddot.iter()) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        let meta = Metadata {
            format_version: DATASET_FORMAT_VERSION,
            params: self.system.clone(),
            h: self.h,
            n_pairs: self.pairs.len(),
            provenance: self.provenance.clone(),
        };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::malformed(None, e.to_string()))?;
        std::fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta_path = meta_path(path);
        let meta_text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: Metadata =
            serde_json::from_str(&meta_text).map_err(|e| Error::malformed(Some(e.line()), format!("metadata: {e}")))?;
        if meta.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Version { found: meta.format_version, expected: DATASET_FORMAT_VERSION });
        }
        meta.params.validate()?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let n = meta.params.dof();
        let columns = 1 + 5 * n;
        let mut lines = text.lines().enumerate();
        let expected_header = format!("columns={}", column_names(n).join(","));
        match lines.next() {
            Some((_, h)) if h.starts_with("#meta=") && h.ends_with(&expected_header) => {}
            Some(_) => return Err(Error::malformed(Some(1), "header does not match the metadata's system")),
            None => return Err(Error::malformed(Some(1), "empty dataset file")),
        }
        let mut pairs = Vec::with_capacity(meta.n_pairs);
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::malformed(Some(lineno), format!("bad number: {e}")))?;
            if vals.len() != columns {
                return Err(Error::malformed(
                    Some(lineno),
                    format!("expected {columns} columns, found {}", vals.len()),
                ));
            }
            let x = State::from_phase(&vals[1..1 + 2 * n]);
            let x_next = State::from_phase(&vals[1 + 2 * n..1 + 4 * n]);
            pairs.push(Pair { t: vals[0], x, x_next, qddot: Vector(vals[1 + 4 * n..].to_vec()) });
        }
        let ds = TrajectoryDataset { system: meta.params, h: meta.h, pairs, provenance: meta.provenance };
        ds.check_consistency(meta.n_pairs)?;
        Ok(ds)
    }

    fn check_consistency(&self, n_pairs: usize) -> Result<()> {
        let prov = &self.provenance;
        if self.pairs.len() != n_pairs || n_pairs != prov.n_traj * prov.n_steps {
            return Err(Error::Consistency(format!(
                "{} rows, metadata records {} pairs from {} × {}",
                self.pairs.len(),
                n_pairs,
                prov.n_traj,
                prov.n_steps
            )));
        }
        for k in 0..prov.n_traj {
            for (i, p) in self.trajectory(k).iter().enumerate() {
                let expected = i as f64 * self.h;
                if (p.t - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                    return Err(Error::Consistency(format!(
                        "trajectory {k} row {i}: time {} does not match h = {} from metadata",
                        p.t, self.h
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Sidecar path: `<file>.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn column_names(n: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    for prefix in ["q", "qdot", "q_next", "qdot_next", "qddot"] {
        for i in 0..n {
            c.push(format!("{prefix}{i}"));
        }
    }
    c
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    format_version: u32,
    params: SystemParams,
    h: f64,
    n_pairs: usize,
    provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// Set when the test side came out empty.
    pub empty_test: bool,
}

/// Seeded shuffle of `0..n_pairs`, the first `round(ratio · n)` indices
/// going to training.
pub fn split(n_pairs: usize, ratio: f64, seed: u64) -> Result<SplitDataset> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("split ratio {ratio} outside [0, 1]")));
    }
    let mut idx: Vec<usize> = (0..n_pairs).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * n_pairs as f64).round() as usize;
    let test = idx.split_off(n_train);
    Ok(SplitDataset { empty_test: test.is_empty(), train: idx, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::rk4_step;
    use crate::oracles::{DampedHarmonicParams, DoublePendulumParams};

    fn dho_cfg(n_traj: usize, n_steps: usize) -> GenerateConfig {
        GenerateConfig { n_traj, n_steps, h: 0.05, init_low: -1.0, init_high: 1.0, substeps: 10 }
    }

    #[test]
    fn default_dataset_sizes() {
        let dho = generate(&SystemParams::Dho(DampedHarmonicParams::default()), &dho_cfg(40, 200), 0).unwrap();
        assert_eq!(dho.len(), 8000);
        let dp_cfg = GenerateConfig { n_traj: 20, n_steps: 500, h: 0.02, ..dho_cfg(0, 0) };
        let dp = generate(&SystemParams::Dp(DoublePendulumParams::default()), &dp_cfg, 0).unwrap();
        assert_eq!(dp.len(), 10_000);
        assert!(dp.energy_non_increasing(1e-9));
        assert_eq!(dp.max_label_error().unwrap(), 0.0);
    }

    #[test]
    fn single_pair_is_substepped_step() {
        let sys = SystemParams::Dho(DampedHarmonicParams::default());
        let ds = generate(&sys, &dho_cfg(1, 1), 9).unwrap();
        assert_eq!(ds.len(), 1);
        let p = &ds.pairs[0];
        let mut s = p.x.clone();
        for _ in 0..10 {
            s = rk4_step(&sys, &s, 0.005).unwrap();
        }
        assert_eq!(s, p.x_next);
        assert!(p.x.phase().iter().all(|v| (-1.0..1.0).contains(v)));
    }

    #[test]
    fn invalid_range_rejected() {
        let mut c = dho_cfg(2, 2);
        c.init_low = 1.0;
        c.init_high = -1.0;
        assert!(matches!(
            generate(&SystemParams::Dho(DampedHarmonicParams::default()), &c, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split(8000, 0.5, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (4000, 4000));
        assert_eq!(s, split(8000, 0.5, 3).unwrap());
        assert_ne!(s.train, split(8000, 0.5, 4).unwrap().train);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..8000).collect::<Vec<_>>());
        let odd = split(7, 0.5, 0).unwrap();
        assert!(odd.train.len().abs_diff(odd.test.len()) <= 1);
        let full = split(10, 1.0, 0).unwrap();
        assert!(full.test.is_empty() && full.empty_test);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = generate(&SystemParams::Dp(DoublePendulumParams::default()), &GenerateConfig { h: 0.02, ..dho_cfg(3, 7) }, 5).unwrap();
        ds.save(&path).unwrap();
        let back = TrajectoryDataset::load(&path).unwrap();
        assert_eq!(back, ds);
        let bits = |d: &TrajectoryDataset| {
            d.pairs.iter().flat_map(|p| p.x.phase().into_iter().chain(p.x_next.phase()).chain(p.qddot.0.clone())).map(f64::to_bits).collect::<Vec<_>>()
        };
        assert_eq!(bits(&back), bits(&ds));
    }

    #[test]
    fn malformed_rows_and_inconsistent_times() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = generate(&SystemParams::Dho(DampedHarmonicParams::default()), &dho_cfg(2, 4), 1).unwrap();
        ds.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3].push_str(",1.0");
        std::fs::write(&path, lines.join("\n")).unwrap();
        match TrajectoryDataset::load(&path) {
            Err(Error::Malformed { line: Some(4), .. }) => {}
            other => panic!("expected malformed line 4, got {other:?}"),
        }

        let mut shifted = ds.clone();
        shifted.h = 0.06;
        shifted.save(&path).unwrap();
        assert!(matches!(TrajectoryDataset::load(&path), Err(Error::Consistency(_))));
    }
}
