use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latentgeo::commands::Command;

/// Latent-space geometry experiments: train generative models, then measure
/// their latent spaces under the decoder-induced Riemannian metric.
///
/// Every command takes trailing KEY=VALUE settings, which override values from
/// --config. Use --keys to list the keys a command accepts.
/// Exit codes: 0 ok, 2 config error, 3 io/format error, 4 numerical failure.
#[derive(Parser)]
#[command(name = "latentgeo", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Settings {
    /// key=value config file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// print accepted keys with their defaults and exit
    #[arg(long)]
    keys: bool,
    /// overrides, e.g. epochs=5 data.n=500
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a VAE and/or a disentangled autoencoder
    Train(Settings),
    /// Metric report (c_hat, margin, curvature, F-scores) per latent space
    Metrics(Settings),
    /// Euclidean vs Riemannian interpolation grid between two samples
    Interpolate(Settings),
    /// Class-conditional synthesis grid from a disentangled model
    Synthesize(Settings),
    /// Decoder Jacobian ranks at sampled latent points
    RankReport(Settings),
    /// Riemannian distance and path between two latent points
    Geodesic(Settings),
    /// Dataset preparation
    #[command(subcommand)]
    Data(DataCmd),
}

#[derive(Subcommand)]
enum DataCmd {
    /// Build balanced MNIST IDX files from per-digit JSON files
    ImportJson(Settings),
    /// Balanced subset of full MNIST IDX files
    Subset(Settings),
    /// Sample a synthetic manifold to CSV
    Generate(Settings),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, s) = match cli.cmd {
        Cmd::Train(s) => (Command::Train, s),
        Cmd::Metrics(s) => (Command::Metrics, s),
        Cmd::Interpolate(s) => (Command::Interpolate, s),
        Cmd::Synthesize(s) => (Command::Synthesize, s),
        Cmd::RankReport(s) => (Command::RankReport, s),
        Cmd::Geodesic(s) => (Command::Geodesic, s),
        Cmd::Data(DataCmd::ImportJson(s)) => (Command::DataImportJson, s),
        Cmd::Data(DataCmd::Subset(s)) => (Command::DataSubset, s),
        Cmd::Data(DataCmd::Generate(s)) => (Command::DataGenerate, s),
    };
    if s.keys {
        let mut out = std::io::stdout().lock();
        for k in cmd.schema() {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(out, "{:<20} {:<18} {}", k.name, format!("[{}]", k.default), k.help);
        }
        return ExitCode::SUCCESS;
    }
    let result = cmd
        .resolve(s.config.as_deref(), &s.set)
        .and_then(|cfg| cmd.run(&cfg));
    match result {
        Ok(o) => {
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            let mut out = std::io::stdout().lock();
            for m in &o.messages {
                let _ = writeln!(out, "{m}");
            }
            for p in &o.written {
                let _ = writeln!(out, "wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
