//! `civd`: generate synthetic banks, evaluate heads, render 2-D partitions
//! and time ensemble phases.
//!
//! Exit status: 0 success, 1 configuration error, 2 data error, 3 numeric or
//! domain error. Failures print one `error kind=<kind> reason=<text>` line to
//! stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use civd::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "civd", version, about = "Influence-based Voronoi few-shot heads over feature banks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic base/novel/validation banks and a manifest.
    Gen(Common),
    /// Evaluate the configured head; writes report.json and report.csv.
    Eval(Common),
    /// Rasterize one episode's partition of a 2-D bank to SVG.
    Render2d {
        #[command(flatten)]
        common: Common,
        /// SVG destination; defaults to `<out>/partition.svg`.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Time member fitting, query classification and ensemble reduction.
    Bench(Common),
}

/// Flags shared by every verb.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration document (optional for `gen`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured episode count.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Output directory; beats `CIVD_OUT_DIR` and the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprint!("{e}");
            eprintln!("error kind=config reason={}", one_line(&e.kind().to_string()));
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Gen(c) => commands::gen(&c),
        Command::Eval(c) => commands::eval(&c),
        Command::Render2d { common, svg } => commands::render2d(&common, svg.as_deref()),
        Command::Bench(c) => commands::bench(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} reason={}", e.kind().as_str(), one_line(&e.to_string()));
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
