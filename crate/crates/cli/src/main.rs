//! `pgc`: certify bimodule channels, generate instance families, run the self-test.

use clap::{Parser, Subcommand, ValueEnum};
use pgc_core::harness::instance::GeneratorParams;
use pgc_core::harness::selftest::{run_selftest, SelftestOptions};
use pgc_core::harness::{self, analyze, exit, AnalyzeOptions, HarnessError, InstanceSpec};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pgc", version, about = "Peripheral spectra and phase groups of bimodule quantum channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze an instance and emit its certificate.
    Analyze {
        instance: PathBuf,
        /// Write the certificate here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tol_rank: Option<f64>,
        #[arg(long)]
        tol_phase: Option<f64>,
        #[arg(long)]
        tol_cp: Option<f64>,
        /// Override the instance seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Lift the desk-scale guard on dim L²(M₁).
        #[arg(long)]
        force: bool,
    },
    /// Write an instance of a built-in family.
    Generate {
        family: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inclusion for random_cpb: diagonal_in_full or scalars_in_full.
        #[arg(long)]
        inclusion: Option<String>,
        /// Write the instance here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run only the two-box peripheral decomposition engine on an instance's channel.
    QfaCheck {
        instance: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Run the acceptance suite.
    Selftest {
        /// Multiply every residual bound by this factor.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// Comma-separated criterion ids to run.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<usize>>,
    },
    /// List the built-in generator families.
    Families,
}

fn write_out(out: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| HarnessError::Io { path: p.display().to_string(), message: e.to_string() }),
        // a closed pipe (e.g. `| head`) is not an error
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                Err(HarnessError::Io { path: "<stdout>".into(), message: e.to_string() })
            }
            _ => Ok(()),
        },
    }
}

fn apply_overrides(spec: &mut InstanceSpec, rank: Option<f64>, phase: Option<f64>, cp: Option<f64>, seed: Option<u64>) {
    if let Some(v) = rank {
        spec.tolerances.rank = v;
    }
    if let Some(v) = phase {
        spec.tolerances.phase = v;
    }
    if let Some(v) = cp {
        spec.tolerances.cp = v;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Analyze { instance, out, tol_rank, tol_phase, tol_cp, seed, format, force } => {
            let mut spec = harness::load_instance(&instance)?;
            apply_overrides(&mut spec, tol_rank, tol_phase, tol_cp, seed);
            let cert = analyze::run_analyze(&spec, &AnalyzeOptions { force })?;
            let text = match format {
                Format::Json => cert.to_canonical_json(),
                Format::Text => cert.to_text(),
            };
            write_out(out.as_deref(), &text)?;
            Ok(cert.exit_code())
        }
        Command::Generate { family, n, t, seed, inclusion, out } => {
            let spec = harness::generate(&family, &GeneratorParams { n, t, inclusion }, seed)?;
            let mut text = serde_json::to_string_pretty(&spec).expect("instance serializes");
            text.push('\n');
            write_out(out.as_deref(), &text)?;
            Ok(exit::PASS)
        }
        Command::QfaCheck { instance, force } => {
            let spec = harness::load_instance(&instance)?;
            let report = analyze::run_qfa_check(&spec, &AnalyzeOptions { force })?;
            write_out(None, &report.to_canonical_json())?;
            Ok(if report.passed() { exit::PASS } else { exit::CHECK_FAILED })
        }
        Command::Selftest { tol_scale, only } => {
            let report = run_selftest(&SelftestOptions { tolerance_scale: tol_scale, only });
            write_out(None, &report.render())?;
            Ok(report.exit_code())
        }
        Command::Families => {
            let mut text = String::new();
            for f in harness::FAMILIES {
                let _ = writeln!(text, "{:<18} {:<24} {}", f.name, f.inclusion, f.params);
                let _ = writeln!(text, "{:<18} {}", "", f.ground_truth);
            }
            write_out(None, &text)?;
            Ok(exit::PASS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("pgc: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
