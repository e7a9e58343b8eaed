use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adolf::diagnostics::Metric;
use adolf::harness::{
    compare, default_out_dir, parse_config, run_experiment, run_preset, ExperimentConfig, PresetOptions, PRESET_NAMES,
};
use adolf::Result;
use clap::{Parser, Subcommand};

/// Adaptive decentralized optimization experiments.
#[derive(Parser)]
#[command(name = "adolf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace CSV and manifest.
    Run {
        config: PathBuf,
        /// Output directory (default: output.dir, then $ADOLF_OUT_DIR, then ./adolf-out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several experiments on one problem and tabulate communications to a threshold.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metric for the table (default: the first config's stop metric).
        #[arg(long, requires = "threshold")]
        metric: Option<Metric>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run a figure preset: ADOLF, ADOLF-local and grid-tuned EXTRA.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use a synthetic logistic problem when MNIST files are not given.
        #[arg(long)]
        synthetic_logistic: bool,
        #[arg(long, requires = "mnist_labels")]
        mnist_images: Option<PathBuf>,
        #[arg(long, requires = "mnist_images")]
        mnist_labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Parse a config and print it with every default filled in.
    Validate { config: PathBuf },
}

fn out_dir(flag: Option<PathBuf>, config: Option<&ExperimentConfig>) -> PathBuf {
    flag.or_else(|| config.and_then(|c| c.output.dir.clone())).unwrap_or_else(default_out_dir)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run { config, out } => {
            let config = parse_config(&config)?;
            let dir = out_dir(out, Some(&config));
            let manifest = run_experiment(&config, &dir)?;
            println!(
                "{}: {} after {} iterations ({} vector / {} scalar rounds)",
                manifest.name, manifest.status, manifest.iterations, manifest.comm_vector, manifest.comm_scalar
            );
            if let Some(detail) = &manifest.status_detail {
                println!("  {detail}");
            }
            if let Some(alpha) = manifest.extra_alpha {
                println!("  EXTRA stepsize {alpha:e}");
            }
            for o in &manifest.outputs {
                println!("  {} -> {}", o.kind, o.path.display());
            }
            Ok(manifest.exit_code())
        }
        Command::Compare { configs, out, metric, threshold } => {
            let configs = configs.iter().map(|p| parse_config(p)).collect::<Result<Vec<_>>>()?;
            let target = match (metric, threshold) {
                (m, Some(t)) => Some((m.unwrap_or(configs[0].stop.metric), t)),
                _ => None,
            };
            let dir = out_dir(out, configs.first());
            let cmp = compare(&configs, &dir, target)?;
            print!("{}", std::fs::read_to_string(&cmp.table_path)?);
            report_paths(&[&cmp.long_path, &cmp.dat_path, &cmp.table_path]);
            Ok(worst_exit(cmp.manifests.iter().map(|m| m.exit_code())))
        }
        Command::Preset { name, out, synthetic_logistic, mnist_images, mnist_labels, seed, max_iter } => {
            let opts = PresetOptions { mnist: mnist_images.zip(mnist_labels), synthetic_logistic, seed, max_iter };
            let cmp = run_preset(&name, &opts, &out_dir(out, None))?;
            print!("{}", std::fs::read_to_string(&cmp.table_path)?);
            report_paths(&[&cmp.long_path, &cmp.dat_path, &cmp.table_path]);
            Ok(worst_exit(cmp.manifests.iter().map(|m| m.exit_code())))
        }
        Command::Validate { config } => {
            let config = parse_config(&config)?;
            print!("{}", config.to_toml());
            Ok(0)
        }
    }
}

fn worst_exit(codes: impl Iterator<Item = i32>) -> i32 {
    codes.max().unwrap_or(0)
}

fn report_paths(paths: &[&Path]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}
