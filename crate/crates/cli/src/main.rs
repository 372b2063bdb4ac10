use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glnn_cli::commands::{cmd_evaluate, cmd_generate, cmd_sweep, cmd_train};
use glnn_cli::{CliError, Preset, RunConfig};

/// Generalized Lagrangian neural networks: data generation, training,
/// evaluation and architecture sweeps.
#[derive(Parser)]
#[command(name = "glnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    /// Top-level seed, overriding the configuration's.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate ground-truth trajectories and write a dataset.
    Generate(Common),
    /// Train a model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset written by `generate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Roll out a trained model against the ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Train the hidden-size and depth grids and tabulate median test errors.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Reuse an existing dataset instead of generating one.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    RunConfig::load(c.config.as_deref(), c.preset, c.seed)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = load(&c)?;
            let r = cmd_generate(&cfg, &c.out)?;
            println!("wrote {} pairs to {}", r.n_pairs, c.out.display());
            println!("energy non-increasing along every trajectory: {}", r.energy_non_increasing);
        }
        Command::Train { common: c, data } => {
            let cfg = load(&c)?;
            let m = cmd_train(&cfg, &data, &c.out)?;
            println!(
                "trained {} model for {} epochs ({} steps) in {:.1?}",
                m.model_kind, m.epochs, m.optimizer_steps, m.wall_time
            );
            println!("final train acceleration MSE: {:.6e}", m.final_train_accel_mse);
            if let Some(t) = m.final_test_accel_mse {
                println!("final test acceleration MSE: {t:.6e}");
            }
            if m.singular_count > 0 {
                println!("samples skipped for singular mass matrices: {}", m.singular_count);
            }
        }
        Command::Evaluate { common: c, model } => {
            let cfg = load(&c)?;
            let ev = cmd_evaluate(&cfg, &model, &c.out)?;
            println!("position MSE (time average): {:.6e}", ev.position_mse_mean);
            println!("energy MSE (time average): {:.6e}", ev.energy_mse_mean);
        }
        Command::Sweep { common: c, data } => {
            let cfg = load(&c)?;
            let rows = cmd_sweep(&cfg, data.as_deref(), &c.out)?;
            for r in rows {
                println!("{:<12} hidden {:>4} layers {:>2}: median test MSE {:.3e}", r.table, r.hidden_size, r.n_hidden_layers, r.median);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
