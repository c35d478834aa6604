use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldfa_core::archive;
use ldfa_core::config::{Mode, PipelineConfig};
use ldfa_core::data::{load_features, read_labels, read_matrix_csv, read_raw, write_matrix_csv};
use ldfa_core::error::{LdfaError, Result};
use ldfa_core::pipeline::{self, MetricRow, Task};
use ldfa_core::plot::scatter;

/// Local deep-feature alignment: fit, embed, score and plot.
#[derive(Parser)]
#[command(name = "ldfa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Worker threads for per-neighborhood training (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write the archive and the training embedding.
    Fit {
        /// Feature file: CSV (one sample per row) or IDX images.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// key=value config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `mode` from the config (ldfa, ltsa, pca).
        #[arg(long)]
        mode: Option<Mode>,
        /// Archive path to write.
        #[arg(long)]
        model: PathBuf,
        /// Embedding CSV to write (one sample per row).
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Embed new samples with a fitted model.
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score an embedding: k-means purity or 1-NN accuracy, one row per seed.
    Evaluate {
        /// Embedding CSV.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// cluster or classify.
        #[arg(long, default_value = "cluster")]
        metrics: Task,
        /// First seed; runs use seed, seed+1, ...
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        runs: u64,
        /// Report path (default: stdout).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw the first two embedding coordinates as an SVG scatter plot.
    Visualize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// SVG path; a sidecar `.csv` with the plotted coordinates is written next to it.
        #[arg(long)]
        output: PathBuf,
    },
}

fn write_embedding(path: &Path, m: &ldfa_core::numerics::Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_csv(&mut w, m)?;
    w.flush()?;
    Ok(())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| LdfaError::InvalidArgument(e.to_string()))?;
    pool.install(f)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { input, labels, config, seed, mode, model, output, common } => {
            let mut cfg = match config {
                Some(p) => PipelineConfig::parse(&std::fs::read_to_string(p)?)?,
                None => PipelineConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let data = load_features(&input, labels.as_deref())?;
            let fitted = with_threads(common.threads, || pipeline::fit(&cfg, &data))?;
            if let Some(w) = &fitted.embedding.warning {
                eprintln!("warning: {w}");
            }
            archive::save(&fitted, &model)?;
            if let Some(out) = output {
                write_embedding(&out, &fitted.embedding.h)?;
            }
        }
        Command::Transform { model, input, output, common } => {
            let fitted = archive::load(&model)?;
            let raw = read_raw(&input)?;
            let emb = with_threads(common.threads, || pipeline::transform(&fitted, &raw.values))?;
            write_embedding(&output, &emb)?;
        }
        Command::Evaluate { input, labels, metrics, seed, runs, output } => {
            let points = read_matrix_csv(&input)?;
            let labels = read_labels(&labels)?;
            let seeds: Vec<u64> = (seed..seed + runs).collect();
            let rows = pipeline::evaluate(&points, &labels, metrics, &seeds)?;
            let mut report = format!("{}\n", MetricRow::HEADER);
            for r in &rows {
                report += &r.to_line();
                report.push('\n');
            }
            match output {
                Some(p) => std::fs::write(p, report)?,
                None => print!("{report}"),
            }
        }
        Command::Visualize { input, labels, output } => {
            let points = read_matrix_csv(&input)?;
            let labels = read_labels(&labels)?;
            let plot = scatter(&points, &labels)?;
            std::fs::write(&output, plot.svg)?;
            std::fs::write(output.with_extension("csv"), plot.csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
