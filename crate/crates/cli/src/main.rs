use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

mod commands;
mod report;

use report::{error_summary, exit_code, summary, EXIT_DOMAIN};

/// Compute and certify regularized frozen-planet orbits of helium.
///
/// Prints a JSON summary on standard output. Exit status 0 means every requested
/// residual is within tolerance, 1 a tolerance violation, 2 a domain or input error.
#[derive(Debug, Parser, Serialize)]
#[command(name = "frozen-planet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Certify the critical point of F_r, continued from free fall.
    Solve(SolveArgs),
    /// Continue a family of critical points and write the path as JSON lines.
    Continue(ContinueArgs),
    /// Spectra of a certificate on the symmetric and the full loop space.
    Spectrum(InputArgs),
    /// Recompute the identities attached to a certificate.
    Identity(InputArgs),
    /// Tabulate elliptic moments and their residuals as CSV.
    Elliptic(EllipticArgs),
    /// Levi-Civita transform of a loop into a collision orbit.
    Lc(LcArgs),
    /// Critical pair of the mean, instantaneous or interpolated helium functional.
    Helium(HeliumArgs),
    /// Signed count of the critical points along a helium path.
    Euler(EulerArgs),
    /// Kernel holonomy of the non-orientable operator loop.
    Detline(DetlineArgs),
}

#[derive(Debug, clap::Args, Serialize)]
pub struct SolveArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub r: f64,
    /// Odd-sine modes.
    #[arg(long, default_value_t = frozen_planet::solve::DEFAULT_MODES)]
    pub modes: usize,
    /// Tolerance for the v/w and energy residuals.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    /// Tolerance for the orbit equation residuals away from collisions.
    #[arg(long, default_value_t = 1e-5)]
    pub orbit_tol: f64,
    /// Write the certificate here as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Critical points of F_r in r.
    Frozen,
    /// Critical pairs of B(s) in s.
    Helium,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct ContinueArgs {
    #[arg(long, value_enum, default_value_t = Family::Frozen)]
    pub family: Family,
    #[arg(long, allow_hyphen_values = true)]
    pub from: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub to: f64,
    /// Path output, one JSON object per accepted step.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step summary table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Modes per component; defaults to 64 (frozen) or 24 (helium).
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub initial_step: Option<f64>,
    #[arg(long)]
    pub max_step: Option<f64>,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub orbit_tol: f64,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct InputArgs {
    /// A certificate, or any JSON document containing one.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct EllipticArgs {
    /// `start:end:step`, e.g. `-5:0.9:0.1`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// Write the table here and print a JSON summary instead of the table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tolerance for the recursion and closed-form residuals.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct LcArgs {
    /// A loop, a certificate, or any JSON document containing an odd-sine loop.
    #[arg(long)]
    pub input: PathBuf,
    /// Write `t, q, qdot, zero_flag` here as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = frozen_planet::levi_civita::ORBIT_SAMPLES)]
    pub samples: usize,
    /// Check the orbit equation at this r; taken from the certificate when present.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub orbit_tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq)]
#[serde(rename_all = "kebab-case")]
pub enum HeliumMode {
    /// Mean interaction, s = 0.
    Av,
    /// Instantaneous interaction, s = 1.
    In,
    /// Linear interpolation at the given s.
    Interp,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct HeliumArgs {
    #[arg(long, value_enum)]
    pub mode: HeliumMode,
    /// Interpolation parameter in [0, 1]; required for `interp`.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long, default_value_t = frozen_planet::helium::HELIUM_MODES)]
    pub modes: usize,
    /// Write the orbit pair `t, q1, q2, gap` here as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct EulerArgs {
    /// JSON lines written by `continue`.
    #[arg(long)]
    pub path: PathBuf,
    /// Fail unless the count equals this value at every step.
    #[arg(long, allow_hyphen_values = true)]
    pub expect: Option<i64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Demo {
    /// The stabilized loop whose determinant line is not orientable.
    Counterexample,
}

#[derive(Debug, clap::Args, Serialize)]
pub struct DetlineArgs {
    #[arg(long, value_enum)]
    pub demo: Demo,
    /// Modes per side of the truncation window.
    #[arg(long, default_value_t = 8)]
    pub modes: usize,
    /// Initial uniform steps on the loop; refined adaptively.
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    /// Write the kernel trace here as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Required alignment with the closed-form section.
    #[arg(long, default_value_t = 0.999)]
    pub alignment: f64,
}

/// Print to standard output, tolerating a closed pipe.
fn emit(text: &impl std::fmt::Display) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let header = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "flags": &cli.command,
    });
    let code = match commands::run(&cli.command, &header) {
        Ok(out) => {
            let text = summary(&header, &out.outcome);
            if out.table_on_stdout {
                eprintln!("{text}");
            } else {
                emit(&text);
            }
            out.outcome.status()
        }
        Err(err) => {
            log::error!("{err}");
            emit(&error_summary(&header, &err));
            exit_code(&err)
        }
    };
    debug_assert!(code <= EXIT_DOMAIN);
    ExitCode::from(code as u8)
}
