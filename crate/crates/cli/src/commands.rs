use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use glnn::datagen::{generate, split, TrajectoryDataset};
use glnn::models::{Model, ModelKind};
use glnn::training::{evaluate, train, Evaluation, Metrics};
use serde::Serialize;

use crate::config::{section_seed, RunConfig};
use crate::error::CliError;

/// `<path><suffix>`, e.g. `model.json.metrics.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateReport {
    pub n_pairs: usize,
    pub energy_non_increasing: bool,
}

pub fn generate_dataset(cfg: &RunConfig) -> Result<TrajectoryDataset, CliError> {
    Ok(generate(&cfg.system, &cfg.datagen.generate_config(), cfg.datagen.seed)?)
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<GenerateReport, CliError> {
    let ds = generate_dataset(cfg)?;
    ds.save(out)?;
    Ok(GenerateReport { n_pairs: ds.len(), energy_non_increasing: ds.energy_non_increasing(1e-9) })
}

/// Trains the configured model on the configured split of `ds`.
pub fn train_on(cfg: &RunConfig, ds: &TrajectoryDataset) -> Result<(Model<f64>, Metrics), CliError> {
    if ds.system.tag() != cfg.system.tag() {
        return Err(CliError::Config(format!(
            "dataset holds {} data but the configuration is for {}",
            ds.system.tag(),
            cfg.system.tag()
        )));
    }
    let sp = split(ds.len(), cfg.datagen.split_ratio, cfg.datagen.split_seed)?;
    if sp.empty_test {
        eprintln!("warning: split ratio {} leaves the test set empty", cfg.datagen.split_ratio);
    }
    let mut model = Model::init(&cfg.model_config())?;
    let metrics = train(&mut model, ds, &sp, &cfg.train)?;
    Ok((model, metrics))
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Metrics, CliError> {
    let ds = TrajectoryDataset::load(data)?;
    let (model, metrics) = train_on(cfg, &ds)?;
    model.save(out, &cfg.model_config())?;
    write(&sibling(out, ".metrics.json"), &to_json(&metrics)?)?;
    write(&sibling(out, ".config.toml"), &cfg.to_toml()?)?;
    Ok(metrics)
}

#[derive(Serialize)]
struct EvaluationSummary<'a> {
    model_kind: ModelKind,
    system: &'static str,
    horizon: f64,
    h: f64,
    n_inits: usize,
    position_mse_mean: f64,
    energy_mse_mean: f64,
    position_mse: &'a [f64],
    energy_mse: &'a [f64],
}

pub fn cmd_evaluate(cfg: &RunConfig, model_path: &Path, out: &Path) -> Result<Evaluation, CliError> {
    let (model, _) = Model::<f64>::load(model_path)?;
    let ev = evaluate(&model, &cfg.system, &cfg.evaluate.inits, cfg.evaluate.horizon, cfg.evaluate.h)?;
    write(out, &curves_csv(&ev, cfg.system.dof()))?;
    let summary = EvaluationSummary {
        model_kind: model.kind(),
        system: cfg.system.tag(),
        horizon: ev.horizon,
        h: ev.h,
        n_inits: ev.curves.len(),
        position_mse_mean: ev.position_mse_mean,
        energy_mse_mean: ev.energy_mse_mean,
        position_mse: &ev.position_mse,
        energy_mse: &ev.energy_mse,
    };
    write(&sibling(out, ".summary.json"), &to_json(&summary)?)?;
    Ok(ev)
}

/// One header line, then one row per time point of each curve in turn.
pub fn curves_csv(ev: &Evaluation, dof: usize) -> String {
    let mut s = String::from("t");
    for prefix in ["truth_q", "pred_q"] {
        for i in 0..dof {
            write!(s, ",{prefix}{i}").unwrap();
        }
    }
    s.push_str(",truth_E,pred_E\n");
    for c in &ev.curves {
        for k in 0..c.times.len() {
            write!(s, "{}", c.times[k]).unwrap();
            for v in c.truth_q[k].iter().chain(&c.pred_q[k]) {
                write!(s, ",{v}").unwrap();
            }
            writeln!(s, ",{},{}", c.truth_energy[k], c.pred_energy[k]).unwrap();
        }
    }
    s
}

/// Configuration of one sweep cell for seed index `i`: the model and
/// shuffling seeds are derived from the base ones, the data stay fixed.
pub fn cell_config(base: &RunConfig, kind: ModelKind, hidden: usize, layers: usize, i: usize) -> RunConfig {
    let mut c = base.clone();
    c.model.kind = kind;
    c.model.hidden_size = hidden;
    c.model.n_hidden_layers = layers;
    c.model.seed = section_seed(base.model.seed, i as u64);
    c.train.seed = section_seed(base.train.seed, i as u64);
    c
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub table: &'static str,
    pub hidden_size: usize,
    pub n_hidden_layers: usize,
    pub test_accel_mse: Vec<f64>,
    pub median: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trains every cell of the hidden-size and depth grids on one dataset.
/// Cells shared by both grids are trained once.
pub fn run_sweep(cfg: &RunConfig, ds: &TrajectoryDataset) -> Result<Vec<SweepRow>, CliError> {
    let sw = &cfg.sweep;
    let mut cells: Vec<(&'static str, usize, usize)> = Vec::new();
    cells.extend(sw.hidden_sizes.iter().map(|&h| ("hidden_size", h, sw.fixed_layers)));
    cells.extend(sw.layer_counts.iter().map(|&l| ("layers", sw.fixed_hidden, l)));
    let mut cache: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    let mut rows = Vec::with_capacity(cells.len());
    for (table, hidden, layers) in cells {
        let mut values = Vec::with_capacity(sw.seeds);
        for i in 0..sw.seeds {
            let key = (hidden, layers, i);
            let v = match cache.get(&key) {
                Some(&v) => v,
                None => {
                    let c = cell_config(cfg, cfg.model.kind, hidden, layers, i);
                    let (_, m) = train_on(&c, ds)?;
                    let v = m.final_test_accel_mse.unwrap_or(m.final_train_accel_mse);
                    eprintln!("sweep: hidden {hidden} layers {layers} seed {i}: test accel MSE {v:.3e}");
                    cache.insert(key, v);
                    v
                }
            };
            values.push(v);
        }
        rows.push(SweepRow { table, hidden_size: hidden, n_hidden_layers: layers, median: median(&values), test_accel_mse: values });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("table,hidden_size,n_hidden_layers,median_test_accel_mse,per_seed\n");
    for r in rows {
        let per: Vec<String> = r.test_accel_mse.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{},{},{},{},{}", r.table, r.hidden_size, r.n_hidden_layers, r.median, per.join(";")).unwrap();
    }
    s
}

pub fn cmd_sweep(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<Vec<SweepRow>, CliError> {
    let ds = match data {
        Some(p) => TrajectoryDataset::load(p)?,
        None => generate_dataset(cfg)?,
    };
    let rows = run_sweep(cfg, &ds)?;
    write(out, &sweep_csv(&rows))?;
    Ok(rows)
}
