use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Multi-resolution mesh surrogates: data, hierarchies, training, evaluation.
#[derive(Debug, Parser)]
#[command(name = "mhsl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic plate-impact dataset.
    GenData(GenData),
    /// Build a coarsening hierarchy from a mesh.
    Coarsen(Coarsen),
    /// Train a surrogate on the coarsest level of a hierarchy.
    Train(Train),
    /// Add the next finer level on top of a trained surrogate.
    Refine(Refine),
    /// Predict a trajectory for one parameter vector.
    Predict(Predict),
    /// Write per-time node errors as CSV.
    Evaluate(Evaluate),
    /// Write the normalized singular values of the training snapshots.
    Spectrum(Spectrum),
    /// Print the header of a dataset or checkpoint.
    Inspect(Inspect),
}

#[derive(Debug, Args)]
struct GenData {
    /// Output dataset (MHSD).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of simulations; the first 80 % are tagged train.
    #[arg(long, default_value_t = 80)]
    sims: usize,
    /// Also write the plate mesh (OBJ) here.
    #[arg(long)]
    mesh: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Coarsen {
    #[arg(long)]
    mesh: PathBuf,
    /// Node counts of levels 1.., strictly decreasing, e.g. `150,40`.
    #[arg(long, value_delimiter = ',', required = true)]
    levels: Vec<usize>,
    /// Output directory for meshes, operators and `manifest.json`.
    #[arg(long)]
    out: PathBuf,
    /// Also pair non-adjacent nodes closer than this.
    #[arg(long, default_value_t = 0.0)]
    pair_distance: f64,
}

#[derive(Debug, Args)]
struct Train {
    /// Full-resolution dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Hierarchy `manifest.json` (or its directory).
    #[arg(long)]
    hierarchy: PathBuf,
    /// Level to train on; defaults to the coarsest.
    #[arg(long)]
    level: Option<usize>,
    /// Training settings (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layer sizes (JSON).
    #[arg(long)]
    arch: Option<PathBuf>,
    /// Overrides the seed of the training config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output checkpoint (MHW1); metadata goes next to it as `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch losses as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Refine {
    /// Trained coarse checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Level to refine to; defaults to one finer than the checkpoint.
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Predict {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Scenario parameters, e.g. `20,0.1,400`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    mu: Vec<f64>,
    /// Number of uniform times on [0, 1].
    #[arg(long, default_value_t = 51)]
    times: usize,
    /// Chain member to predict with; defaults to the finest.
    #[arg(long)]
    level: Option<usize>,
    /// Lift the prediction to the full mesh.
    #[arg(long)]
    lift: bool,
    /// `*.mhsd` for a dataset file, anything else for a directory of OBJ
    /// frames of the deformed mesh.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Evaluate {
    /// Reference dataset (full resolution when scoring a checkpoint).
    #[arg(long)]
    dataset: PathBuf,
    /// Approximate dataset to compare against `--dataset`, simulation by
    /// simulation.
    #[arg(long, conflicts_with = "checkpoint")]
    approx: Option<PathBuf>,
    /// Checkpoint to score on the test simulations of `--dataset`.
    #[arg(long, required_unless_present = "approx")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    level: Option<usize>,
    /// Score at the model's own level instead of on the full mesh.
    #[arg(long, conflicts_with = "approx")]
    native: bool,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Spectrum {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Inspect {
    /// Dataset (MHSD) or checkpoint (MHW1).
    path: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Coarsen(a) => commands::coarsen(a),
        Command::Train(a) => commands::train(a),
        Command::Refine(a) => commands::refine(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
