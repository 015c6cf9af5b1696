mod commands;
mod error;
mod manifest;
mod system_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use delaycert::lmi::Formulation;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "delaycert",
    version,
    about = "Exponential-stability certificates for delayed neural networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    Sound,
    AsPrinted,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::Sound => Formulation::Sound,
            FormulationArg::AsPrinted => Formulation::AsPrinted,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory for artifacts and the run manifest.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FormulationArg::Sound)]
    pub formulation: FormulationArg,
}

#[derive(Args, Debug, Clone)]
pub struct SystemArg {
    /// System file, or `example1` / `example2` for the bundled ones.
    #[arg(long)]
    pub system: String,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solves the certificate LMIs at one point.
    Check {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        k: f64,
        /// Split point; by default the fractions 1/4, 1/2, 3/4 of `h` are tried in turn.
        #[arg(long)]
        xi: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Largest certified decay rate for fixed `h` and `μ`.
    BisectK {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 0.01)]
        k_min: f64,
        /// Defaults to just below the smallest entry of K0.
        #[arg(long)]
        k_max: Option<f64>,
        #[arg(long, default_value_t = delaycert::search::DEFAULT_TOLERANCE)]
        tol: f64,
        /// Fixed split point; by default `h/4`, `h/2`, `3h/4` are searched.
        #[arg(long)]
        xi: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Largest certified delay bound for fixed `μ` and `k`.
    BisectH {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        mu: f64,
        #[arg(long, default_value_t = 1e-3)]
        k: f64,
        #[arg(long, default_value_t = 0.1)]
        h_min: f64,
        #[arg(long, default_value_t = 6.0)]
        h_max: f64,
        #[arg(long, default_value_t = delaycert::search::DEFAULT_TOLERANCE)]
        tol: f64,
        /// Fixed split fraction `ξ/h`; by default 1/4, 1/2, 3/4 are searched.
        #[arg(long)]
        xi_fraction: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Simulates the network and fits its decay rate.
    Simulate {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 30.0)]
        horizon: f64,
        #[arg(long)]
        step: Option<f64>,
        /// Comma-separated `r(0)`; overrides the system file.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        initial: Option<Vec<f64>>,
        /// Constant delay; overrides the system file.
        #[arg(long)]
        h: Option<f64>,
        /// Additional seeded random histories whose decay rates are fitted.
        #[arg(long, default_value_t = 0)]
        random_histories: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Seeded random checks of the integral inequalities.
    VerifyInequalities {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Number of scalar decision variables for `n` neurons.
    CountVars {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Writes the LMI problem as JSON for an external solver.
    ExportLmi {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        k: f64,
        /// Split point, `h/2` by default.
        #[arg(long)]
        xi: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(&cli.command, &args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::BisectK { .. } => "bisect-k",
            Command::BisectH { .. } => "bisect-h",
            Command::Simulate { .. } => "simulate",
            Command::VerifyInequalities { .. } => "verify-inequalities",
            Command::CountVars { .. } => "count-vars",
            Command::ExportLmi { .. } => "export-lmi",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Check { common, .. }
            | Command::BisectK { common, .. }
            | Command::BisectH { common, .. }
            | Command::Simulate { common, .. }
            | Command::VerifyInequalities { common, .. }
            | Command::CountVars { common, .. }
            | Command::ExportLmi { common, .. } => common,
        }
    }

    pub fn system(&self) -> Option<&str> {
        match self {
            Command::Check { system, .. }
            | Command::BisectK { system, .. }
            | Command::BisectH { system, .. }
            | Command::Simulate { system, .. }
            | Command::ExportLmi { system, .. } => Some(&system.system),
            _ => None,
        }
    }
}

impl Common {
    pub fn wants(&self, f: Format, default: bool) -> bool {
        match self.format {
            Some(g) => g == f,
            None => default,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
