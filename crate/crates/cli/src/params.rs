//! Subcommand parameters. Every field is optional on the command line and in
//! the TOML file; flags override the file and defaults fill the rest.

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::output::CliError;

pub trait Params: Serialize + DeserializeOwned + Default + Clone {
    /// Subcommand name, also the TOML section name.
    const NAME: &'static str;
    fn fill_defaults(&mut self);
}

/// Overlay non-null command-line values onto the file section and fill defaults.
pub fn resolve<P: Params>(cli: &P, file: Option<&toml::Table>) -> Result<P, CliError> {
    let mut merged = serde_json::Map::new();
    if let Some(section) = file.and_then(|t| t.get(P::NAME)) {
        let v = serde_json::to_value(section).map_err(|e| CliError::Usage(format!("config section [{}]: {e}", P::NAME)))?;
        match v {
            serde_json::Value::Object(m) => merged.extend(m),
            _ => return Err(CliError::Usage(format!("config entry `{}` must be a table", P::NAME))),
        }
    }
    let cli_value = serde_json::to_value(cli).map_err(|e| CliError::Usage(e.to_string()))?;
    if let serde_json::Value::Object(m) = cli_value {
        merged.extend(m.into_iter().filter(|(_, v)| !v.is_null()));
    }
    let mut p: P = serde_json::from_value(serde_json::Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("config section [{}]: {e}", P::NAME)))?;
    p.fill_defaults();
    Ok(p)
}

fn set<T>(slot: &mut Option<T>, v: T) {
    if slot.is_none() {
        *slot = Some(v);
    }
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Open,
    Closed,
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum InitialArg {
    DomainWall,
    Flat,
    Empty,
    Stationary,
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorArg {
    Exact,
    BondSplit,
}

/// Reservoirs: densities, or all four injection/extraction rates.
#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryArgs {
    /// Left reservoir density.
    #[arg(long)]
    pub na: Option<f64>,
    /// Right reservoir density.
    #[arg(long)]
    pub nb: Option<f64>,
    /// Injection rate at site 1 (with --beta1, --alphan, --betan instead of densities).
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub alphan: Option<f64>,
    #[arg(long)]
    pub betan: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    /// Number of sites.
    #[arg(long)]
    pub n: Option<usize>,
    /// Microscopic time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final macroscopic time t/N².
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Number of equally spaced record times in (0, t_max].
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub boundary: BoundaryArgs,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub initial: Option<InitialArg>,
    /// Density of the flat initial state.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub propagator: Option<PropagatorArg>,
}

impl Params for SimulateParams {
    const NAME: &'static str = "simulate";
    fn fill_defaults(&mut self) {
        set(&mut self.n, 40);
        set(&mut self.dt, 0.1);
        set(&mut self.t_max, 0.5);
        set(&mut self.records, 10);
        set(&mut self.trajectories, 100);
        set(&mut self.mode, ModeArg::Open);
        set(&mut self.initial, InitialArg::DomainWall);
        set(&mut self.rho, 0.5);
        set(&mut self.propagator, PropagatorArg::BondSplit);
        default_densities(&mut self.boundary, 1.0, 0.0);
    }
}

fn default_densities(b: &mut BoundaryArgs, na: f64, nb: f64) {
    if b.alpha1.is_none() && b.beta1.is_none() && b.alphan.is_none() && b.betan.is_none() {
        set(&mut b.na, na);
        set(&mut b.nb, nb);
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LoopsParams {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Macroscopic time of the first sample (the ensemble starts stationary on the diagonal).
    #[arg(long)]
    pub t_burn: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Samples per trajectory in [t_burn, t_max].
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub na: Option<f64>,
    #[arg(long)]
    pub nb: Option<f64>,
    /// Loop positions x₁, …, xₙ in (0, 1), comma separated; the loop order is their number.
    #[arg(long, value_delimiter = ',')]
    pub xs: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub propagator: Option<PropagatorArg>,
}

impl Params for LoopsParams {
    const NAME: &'static str = "loops";
    fn fill_defaults(&mut self) {
        set(&mut self.n, 40);
        set(&mut self.dt, 0.1);
        set(&mut self.trajectories, 20);
        set(&mut self.t_burn, 0.5);
        set(&mut self.t_max, 2.0);
        set(&mut self.samples, 60);
        set(&mut self.na, 1.0);
        set(&mut self.nb, 0.0);
        set(&mut self.xs, vec![0.3, 0.6]);
        set(&mut self.propagator, PropagatorArg::BondSplit);
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct G2Params {
    #[arg(long)]
    pub na: Option<f64>,
    #[arg(long)]
    pub nb: Option<f64>,
    /// PDE grid size (spacing 1/grid).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Macroscopic output times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// First coordinates of the evaluation points.
    #[arg(long, value_delimiter = ',')]
    pub xs: Option<Vec<f64>>,
    /// Second coordinates, paired with --xs.
    #[arg(long, value_delimiter = ',')]
    pub ys: Option<Vec<f64>>,
    /// Sites of the Monte Carlo comparison; 0 skips it.
    #[arg(long)]
    pub mc_n: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum)]
    pub propagator: Option<PropagatorArg>,
}

impl Params for G2Params {
    const NAME: &'static str = "g2-dynamics";
    fn fill_defaults(&mut self) {
        set(&mut self.na, 1.0);
        set(&mut self.nb, 0.0);
        set(&mut self.grid, 200);
        set(&mut self.times, vec![0.02, 0.05, 0.1]);
        set(&mut self.xs, vec![0.3, 0.4, 0.45]);
        set(&mut self.ys, vec![0.6, 0.6, 0.55]);
        set(&mut self.mc_n, 0);
        set(&mut self.trajectories, 200);
        set(&mut self.dt, 0.1);
        set(&mut self.propagator, PropagatorArg::BondSplit);
    }
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SpecArg {
    /// Constant κ₂ = s².
    Wigner,
    /// Haar-rotated with all free cumulants equal to the rate.
    FreePoisson,
    /// Steady QSSEP subblock on [c, 1].
    Qssep,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    #[arg(long, value_enum)]
    pub spec: Option<SpecArg>,
    /// Wigner scale (κ₂ = s²).
    #[arg(long)]
    pub s: Option<f64>,
    /// Free Poisson rate.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Left end of the QSSEP block [c, 1].
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub na: Option<f64>,
    #[arg(long)]
    pub nb: Option<f64>,
    /// Truncate the QSSEP cumulants at this order instead of resumming.
    #[arg(long)]
    pub truncation: Option<usize>,
    /// Number of λ grid points.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
}

impl Params for SpectrumParams {
    const NAME: &'static str = "spectrum";
    fn fill_defaults(&mut self) {
        set(&mut self.spec, SpecArg::Wigner);
        set(&mut self.s, 1.0);
        set(&mut self.rate, 2.0);
        set(&mut self.c, 0.4);
        set(&mut self.na, 0.0);
        set(&mut self.nb, 1.0);
        set(&mut self.grid, 400);
        let (lo, hi) = match self.spec.unwrap() {
            SpecArg::Wigner => {
                let s = self.s.unwrap();
                (-2.2 * s, 2.2 * s)
            }
            SpecArg::FreePoisson => {
                let r = self.rate.unwrap();
                (-0.2, (1.0 + r.sqrt()).powi(2) + 0.5)
            }
            SpecArg::Qssep => {
                let (a, b) = (self.na.unwrap(), self.nb.unwrap());
                let pad = 0.0025 * (b - a).abs();
                (a.min(b) + pad, a.max(b) - pad)
            }
        };
        set(&mut self.lo, lo);
        set(&mut self.hi, hi);
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EntanglementParams {
    /// Cut positions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub cs: Option<Vec<f64>>,
    /// Rényi indices (1 = von Neumann), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub qs: Option<Vec<f64>>,
    #[arg(long)]
    pub na: Option<f64>,
    #[arg(long)]
    pub nb: Option<f64>,
    /// Also run the microscopic simulation.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub simulate: Option<bool>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long)]
    pub window_lo: Option<f64>,
    #[arg(long)]
    pub window_hi: Option<f64>,
    #[arg(long, value_enum)]
    pub initial: Option<InitialArg>,
    #[arg(long, value_enum)]
    pub propagator: Option<PropagatorArg>,
}

impl Params for EntanglementParams {
    const NAME: &'static str = "entanglement";
    fn fill_defaults(&mut self) {
        set(&mut self.cs, vec![0.2, 0.4, 0.6, 0.8]);
        set(&mut self.qs, vec![1.0]);
        set(&mut self.na, 1.0);
        set(&mut self.nb, 0.0);
        set(&mut self.simulate, false);
        set(&mut self.n, 100);
        set(&mut self.dt, 0.1);
        set(&mut self.trajectories, 4);
        set(&mut self.t_max, 0.4);
        set(&mut self.records, 40);
        set(&mut self.window_lo, 0.15);
        set(&mut self.window_hi, 0.4);
        set(&mut self.initial, InitialArg::Stationary);
        set(&mut self.propagator, PropagatorArg::BondSplit);
    }
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SsepParams {
    #[arg(long)]
    pub na: Option<f64>,
    #[arg(long)]
    pub nb: Option<f64>,
    /// Chain length N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Highest cumulant order (≤ 12).
    #[arg(long)]
    pub cumulants: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

impl Params for SsepParams {
    const NAME: &'static str = "ssep";
    fn fill_defaults(&mut self) {
        set(&mut self.na, 1.0);
        set(&mut self.nb, 0.0);
        set(&mut self.n, 10);
        set(&mut self.cumulants, 4);
        set(&mut self.lambda_min, -3.0);
        set(&mut self.lambda_max, 3.0);
        set(&mut self.points, 61);
    }
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SectorArg {
    #[value(name = "c0")]
    #[serde(rename = "c0")]
    Zero,
    #[value(name = "c+1")]
    #[serde(rename = "c+1")]
    PlusOne,
    #[value(name = "c-1")]
    #[serde(rename = "c-1")]
    MinusOne,
}

#[derive(Args, Serialize, Deserialize, Clone, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct LevelParams {
    #[arg(long, value_enum)]
    pub sector: Option<SectorArg>,
    /// Occupation of each local state, comma separated (fixes N).
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    /// Cartan charges J₁ᶻ,J₂ᶻ,(C₁−C₂)/2 (needs --n); alternative to --counts.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub cartan: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Momentum index κ, k = 2πκ/N.
    #[arg(long)]
    pub kappa: Option<usize>,
    /// Deformation P − gQ − 1 of the C = 0 chain.
    #[arg(long)]
    pub g: Option<f64>,
    /// Relative degeneracy tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Unfold before computing spacings.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub unfold: Option<bool>,
    /// Largest block diagonalized densely.
    #[arg(long)]
    pub budget: Option<usize>,
}

impl Params for LevelParams {
    const NAME: &'static str = "levelstats";
    fn fill_defaults(&mut self) {
        set(&mut self.sector, SectorArg::PlusOne);
        if self.cartan.is_none() {
            set(&mut self.counts, vec![1, 2, 3, 5]);
        }
        set(&mut self.kappa, 1);
        set(&mut self.g, 1.0);
        set(&mut self.tol, qssep_core::level_stats::DEFAULT_DEGENERACY_TOL);
        set(&mut self.unfold, true);
        set(&mut self.budget, qssep_core::level_stats::DEFAULT_DENSE_BUDGET);
    }
}
