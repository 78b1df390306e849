//! `alss`: batch CLI over the detector-block library.
//!
//! Subcommands: `params` (parameter audit), `shapes` (shape audit),
//! `loss-table` (shape-cost table reproduction), `gradcheck` (analytic vs
//! central-difference gradients), `regress` (loss regression races), and
//! `eval` (detection metrics).
//!
//! Exit status: 0 on success, 1 on validation failure (audit or gradient
//! mismatch), 2 on usage or parse errors.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Default seed when neither `--seed` nor `ALSS_SEED` is given.
fn default_seed() -> u64 {
    std::env::var("ALSS_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

#[derive(Parser)]
#[command(
    name = "alss",
    version,
    about = "ALSS-YOLO building-block audits and loss tooling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit per-layer parameter counts against the declared values.
    Params {
        /// Graph config file.
        #[arg(long)]
        config: std::path::PathBuf,
        /// Write the audit as CSV here.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        /// Parameter-init seed.
        #[arg(long, default_value_t = default_seed())]
        seed: u64,
        /// Input height for shape propagation.
        #[arg(long, default_value_t = 640)]
        height: usize,
        /// Input width for shape propagation.
        #[arg(long, default_value_t = 640)]
        width: usize,
    },
    /// Audit per-layer output shapes against the declared values.
    Shapes {
        #[arg(long)]
        config: std::path::PathBuf,
        #[arg(long, default_value_t = 640)]
        height: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = default_seed())]
        seed: u64,
    },
    /// Reproduce the shape-cost example table and report deviations.
    LossTable {
        /// Shape exponent θ.
        #[arg(long, default_value_t = 3.0)]
        theta: f64,
        /// Write the computed table as CSV here.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        /// Sweep integer θ in 1..=8 and report per-θ max deviation.
        #[arg(long)]
        sweep: bool,
    },
    /// Compare dual-number loss gradients against central differences.
    Gradcheck {
        /// Loss kind: iou, ciou, siou or finesiou.
        #[arg(long)]
        loss: String,
        /// Number of random box pairs.
        #[arg(long)]
        trials: usize,
        #[arg(long, default_value_t = default_seed())]
        seed: u64,
        /// Shape exponent θ.
        #[arg(long, default_value_t = 3.0)]
        theta: f64,
        /// Angle exponent η.
        #[arg(long, default_value_t = 3.0)]
        eta: f64,
    },
    /// Run gradient-descent regression races from a scenario file.
    Regress {
        /// Scenario file.
        #[arg(long)]
        scenarios: std::path::PathBuf,
        /// Write all trajectories as CSV here.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Evaluate detections against ground truth.
    Eval {
        /// Ground-truth boxes (text or .json).
        #[arg(long)]
        gt: std::path::PathBuf,
        /// Detections (text or .json).
        #[arg(long)]
        det: std::path::PathBuf,
        /// IoU threshold for matching.
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Classes to evaluate (comma-separated); default: all ids present
        /// in the ground truth.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<usize>>,
        /// Write the full report as JSON here.
        #[arg(long)]
        out_json: Option<std::path::PathBuf>,
        /// Write per-class APs as CSV here.
        #[arg(long)]
        out_csv: Option<std::path::PathBuf>,
    },
}

fn main() -> ExitCode {
    // behave like a standard unix filter when the output pipe closes early
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Params {
            config,
            out,
            seed,
            height,
            width,
        } => commands::params(&config, out.as_deref(), seed, height, width),
        Command::Shapes {
            config,
            height,
            width,
            seed,
        } => commands::shapes(&config, height, width, seed),
        Command::LossTable { theta, out, sweep } => {
            commands::loss_table(theta, out.as_deref(), sweep)
        }
        Command::Gradcheck {
            loss,
            trials,
            seed,
            theta,
            eta,
        } => commands::gradcheck(&loss, trials, seed, theta, eta),
        Command::Regress { scenarios, out } => commands::regress(&scenarios, out.as_deref()),
        Command::Eval {
            gt,
            det,
            iou,
            classes,
            out_json,
            out_csv,
        } => commands::eval(
            &gt,
            &det,
            iou,
            classes.as_deref(),
            out_json.as_deref(),
            out_csv.as_deref(),
        ),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            // distinguish usage/parse problems from everything else
            let parse = err.chain().any(|c| {
                let s = c.to_string();
                s.contains("parse error") || s.contains("config parse")
            });
            if parse {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
