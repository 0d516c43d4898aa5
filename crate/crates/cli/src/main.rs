use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod document;
mod error;
mod output;

use commands::{Loaded, Outcome};
use document::Document;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "riskchain",
    version,
    about = "Multi-period coherent risk pricing on scenario trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Market specification document.
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the comparison tolerance of the model.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Destination of the report; `-` is standard output.
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Subcommand)]
enum Command {
    /// Conditional prices of a claim at one stage.
    Price {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        claim: String,
        #[arg(long)]
        stage: String,
    },
    /// Lower, weak and strong consistency report for the set `Q`.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Vertices of the m-stable hull of `Q`.
    Hull {
        #[command(flatten)]
        common: Common,
    },
    /// Premium with financial and intermediate increments.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        claim: String,
    },
    /// Premium with per-period increments.
    Reserve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        claim: String,
    },
    /// Product-space pricing set built from `Pi` and `Phi`, with its checks.
    Psi {
        #[command(flatten)]
        common: Common,
    },
    /// Rebuilds the two-by-two insurance example and diffs the closed forms.
    Example6 {
        #[arg(long)]
        epsilon: Option<f64>,
        /// Largest accepted difference.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

fn load(path: &PathBuf) -> Result<Document, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    Document::parse(&text)
}

fn run(cmd: Command) -> Result<(Outcome, String), CliError> {
    let loaded = |c: &Common| Loaded::new(load(&c.spec)?, c.tolerance);
    Ok(match cmd {
        Command::Price {
            common,
            claim,
            stage,
        } => {
            let l = loaded(&common)?;
            (commands::price(&l, Some(&claim), Some(&stage))?, common.out)
        }
        Command::Check { common } => (commands::check(&loaded(&common)?)?, common.out),
        Command::Hull { common } => (commands::hull(&loaded(&common)?)?, common.out),
        Command::Split { common, claim } => (
            commands::split(&loaded(&common)?, Some(&claim))?,
            common.out,
        ),
        Command::Reserve { common, claim } => (
            commands::reserve(&loaded(&common)?, Some(&claim))?,
            common.out,
        ),
        Command::Psi { common } => {
            let doc = load(&common.spec)?;
            (commands::psi(&doc, common.tolerance)?, common.out)
        }
        Command::Example6 {
            epsilon,
            tolerance,
            out,
        } => (commands::example6(epsilon, tolerance)?, out),
    })
}

fn emit(text: &str, out: &str) -> Result<(), CliError> {
    if out == "-" {
        std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(e.to_string()))
    } else {
        fs::write(out, text).map_err(|e| CliError::io(format!("cannot write {out}: {e}")))
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok((outcome, out)) => {
            if let Err(e) = emit(&output::render(&outcome.report), &out) {
                return fail(&e);
            }
            match outcome.failure {
                Some(e) => fail(&e),
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => fail(&e),
    }
}
