//! `qssep`: command-line front end of the QSSEP laboratory.
//!
//! Every run writes headered CSV files, a `config.toml` echo of the resolved
//! parameters and a `manifest.json` into the output directory.

mod commands;
mod output;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use params::{
    EntanglementParams, G2Params, LevelParams, LoopsParams, SimulateParams, SpectrumParams, SsepParams,
};

/// Default output directory when neither `--out` nor the environment variable is set.
const DEFAULT_OUT: &str = "qssep-out";

#[derive(Parser, Debug)]
#[command(name = "qssep", version, about = "Numerical laboratory for the quantum symmetric simple exclusion process")]
#[command(after_help = CSV_HELP)]
pub struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, env = "QSSEP_OUT_DIR")]
    out: Option<PathBuf>,
    /// TOML file with parameters; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

const CSV_HELP: &str = "\
CSV schemas (all files carry a header row):
  simulate      density.csv         t_macro,observable,value,stderr   (observable n_<site>, sites 1-based)
                steady_profile.csv  site,x,density
  loops         loops.csv           t_macro,observable,value,stderr   (N^(n-1) Re of the connected loop; analytic rows have stderr 0)
  g2-dynamics   g2_dynamics.csv     t_macro,observable,value,stderr   (observable pde:g2(x,y) or mc:g2(x,y))
  spectrum      spectrum.csv        lambda,density,reference
                atoms.csv           lambda,mass
  entanglement  mutual_info_analytic.csv  c,q,i_value,i_second_order
                mutual_info.csv     t,c,q,i_value,stderr
                mutual_info_window.csv    c,q,mean,stderr,samples,window_lo,window_hi
  ssep          cumulants.csv       order,value,scaled
                mu.csv              lambda,omega,mu,mu_infinite
  levelstats    eigenvalues.csv     sector,n,kappa,g,index,eigenvalue
                histograms.csv      kind,center,density,reference_poisson,reference_goe
                summary.csv         sector,n,k,weights,g,dim,n_eig,r_tilde_mean,r_tilde_err
  selftest      selftest.csv        check,passed,detail
Exit codes: 0 ok, 2 usage or invalid parameters, 3 numerical non-convergence,
4 invariant violation or failed self-test, 5 I/O.";

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ensemble of open or closed QSSEP trajectories; mean density profile.
    Simulate(SimulateParams),
    /// Steady-state connected loop expectations against the closed form.
    Loops(LoopsParams),
    /// Time evolution of g₂ from a domain wall (PDE, optionally Monte Carlo).
    G2Dynamics(G2Params),
    /// Spectral density from local free cumulants.
    Spectrum(SpectrumParams),
    /// Rényi and von Neumann mutual information, analytic and simulated.
    Entanglement(EntanglementParams),
    /// Classical SSEP current cumulants and generating function.
    Ssep(SsepParams),
    /// Level statistics of the two-replica Lindbladian in a symmetry sector.
    Levelstats(LevelParams),
    /// Fast consistency checks of every module.
    Selftest,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
