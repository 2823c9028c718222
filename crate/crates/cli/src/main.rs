use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "fracgel", version, about = "Numerical checks for the fractional Gel'fand equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Dimension (default: from the input header, else 1).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Fractional order (default: from the input header, else 0.5).
    #[arg(long, global = true)]
    pub s: Option<f64>,
    /// Field CSV.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Point or centre, comma-separated coordinates.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Vec<f64>,
    /// Radius (energy scale, extension window, decomposition radius, test function radius).
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Harnack radii.
    #[arg(long, global = true, value_delimiter = ',')]
    pub rho: Vec<f64>,
    /// Integrability exponent for the detector.
    #[arg(long, global = true)]
    pub p: Option<f64>,
    /// Exponents for the Farina and Jensen checks.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Morrey-Riesz exponents, in (0, 2s).
    #[arg(long, global = true, value_delimiter = ',')]
    pub delta: Vec<f64>,
    /// Decay ratio.
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    /// Number of decay steps.
    #[arg(long, global = true)]
    pub k_max: Option<usize>,
    /// Detector threshold.
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Detector scales.
    #[arg(long, global = true, value_delimiter = ',')]
    pub scales: Vec<f64>,
    /// Test-function shape for stability and Farina.
    #[arg(long, global = true, value_enum)]
    pub kind: Option<Kind>,
    /// Criteria to run (suite only), e.g. `1,2,12`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub only: Vec<usize>,
    /// Directory for report and CSV files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Single-threaded, bitwise reproducible run.
    #[arg(long, global = true)]
    pub serial: bool,
    /// Seed for the Monte-Carlo oracles.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Absolute quadrature tolerance override.
    #[arg(long, global = true)]
    pub tol_abs: Option<f64>,
    /// Relative quadrature tolerance override.
    #[arg(long, global = true)]
    pub tol_rel: Option<f64>,
    /// Pass/fail tolerance of the subcommand's check.
    #[arg(long, global = true)]
    pub tol_check: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Tent,
    Bump,
    Plateau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Normalizing constants and their certificates.
    Constants,
    /// Fractional Laplacian at `--x0`.
    Flap,
    /// Extension on the window `|x| <= r`.
    Extend,
    /// Scaled energy at `(x0, r)`.
    Energy,
    /// Energy along `r, θr, θ²r, ...`.
    Decay,
    /// Stability margins over the default test family.
    Stability,
    /// Farina-type estimate for one test function.
    Farina,
    /// Split of the extension into potential and remainder.
    Decompose,
    /// Harnack ratio sequence at `x0`.
    Harnack,
    /// Jensen-type bound.
    Jensen,
    /// Riesz potential against the Morrey norm.
    Morrey,
    /// `u = u1 + u2` on `B_1/4`.
    Split,
    /// Singular-set detector.
    Detect,
    /// Calibrate and emit the singular solution.
    Golden,
    /// Run the acceptance battery.
    Suite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Flap => "flap",
            Command::Extend => "extend",
            Command::Energy => "energy",
            Command::Decay => "decay",
            Command::Stability => "stability",
            Command::Farina => "farina",
            Command::Decompose => "decompose",
            Command::Harnack => "harnack",
            Command::Jensen => "jensen",
            Command::Morrey => "morrey",
            Command::Split => "split",
            Command::Detect => "detect",
            Command::Golden => "golden",
            Command::Suite => "suite",
        }
    }
}

fn threads(serial: bool) -> Option<usize> {
    if serial {
        return Some(1);
    }
    std::env::var("FRACGEL_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&k: &usize| k > 0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(k) = threads(cli.serial) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("fracgel: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.report.to_json());
            if outcome.report.passed { ExitCode::SUCCESS } else { ExitCode::from(2) }
        }
        Err(e) => {
            eprintln!("fracgel: {e}");
            ExitCode::from(if e.is_tolerance_failure() { 2 } else { 1 })
        }
    }
}
