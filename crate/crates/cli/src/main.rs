use std::path::PathBuf;

use clap::{Parser, Subcommand};
use oddpert_cli::commands::{self, CertifyArgs, ReportArgs, SelftestArgs};
use oddpert_cli::error::{CliError, ExitCode};
use oddpert_core::certificates::MAX_SUBINTERVALS;

#[derive(Parser)]
#[command(name = "oddpert", version, about = "Odd-parity Schwarzschild perturbations: evolution, diagnostics and certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the angular identities by quadrature.
    HarmonicsSelftest {
        #[arg(long, default_value_t = 4)]
        ell_max: u32,
        #[arg(long, default_value_t = 16)]
        n_theta: usize,
        #[arg(long, default_value_t = 33)]
        n_phi: usize,
        /// Directory of the residual table.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Offset added to every closed-form constant (negative control).
        #[arg(long, default_value_t = 0.0, hide = true)]
        perturb_constant: f64,
    },
    /// Certify the radial positivity claims in exact arithmetic.
    Certify {
        /// Only claims whose id contains this text.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = MAX_SUBINTERVALS)]
        max_subintervals: u64,
    },
    /// Run an evolution described by a configuration file.
    Evolve { config: PathBuf },
    /// Fit log-log decay slopes to an energy table.
    Report {
        energies: PathBuf,
        #[arg(long, num_args = 2, value_names = ["START", "END"], required = true)]
        window: Vec<f64>,
        #[arg(long, default_value_t = 1.0 / 16.0)]
        delta: f64,
        /// Fit the energy with the photon-sphere degeneracy.
        #[arg(long)]
        degenerate: bool,
        /// Also write the fits as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::HarmonicsSelftest { ell_max, n_theta, n_phi, out: out_dir, perturb_constant } => {
            commands::harmonics_selftest(&SelftestArgs { ell_max, n_theta, n_phi, out_dir, perturb_constant }, &mut out)
        }
        Command::Certify { filter, out: out_dir, max_subintervals } => {
            commands::certify(&CertifyArgs { filter, out_dir, max_subintervals }, &mut out)
        }
        Command::Evolve { config } => commands::evolve(&config, &mut out),
        Command::Report { energies, window, delta, degenerate, out: csv } => commands::report(
            &ReportArgs { energy_csv: energies, window: (window[0], window[1]), delta, degenerate, out: csv },
            &mut out,
        ),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Usage.code() } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    std::process::exit(code.code());
}
