//! Microscopic simulation of open and closed QSSEP at the level of the N×N
//! coherence matrix G.
//!
//! Time is microscopic; the diffusive macroscopic time is t_macro = t/N².
//! Every trajectory draws its noise from a ChaCha8 stream keyed by
//! (seed, trajectory index), so results do not depend on thread scheduling.

mod estimate;
mod local;
mod matrix;
mod propagate;

pub use estimate::{
    check_factorization, check_u1_selection, estimate_loop, estimate_product, FactorizationReport,
    LoopEstimate, Observable, SampleTable, U1Entry, U1Report, DEFAULT_MAX_LOOP_ORDER,
};
pub use local::{heat_step, simulate_local_process, LocalProcessConfig, LocalSnapshot};
pub use matrix::{CoherenceMatrix, EIGENVALUE_TOL, HERMITICITY_TOL};
pub use propagate::{
    apply_boundary, bond_unitary, sample_noise_increment, step, BoundaryParams, Mode,
    NoiseIncrement, Propagator, Stepper,
};

use crate::error::{invalid, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Initial coherence matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialProfile {
    /// diag(Θ(1/2 − x)) with x = (i+1)/N.
    DomainWall,
    Flat { rho: f64 },
    Empty,
    /// Diagonal matrix holding the exact stationary mean density.
    Stationary,
    Diagonal { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_sites: usize,
    /// Microscopic time step.
    pub dt: f64,
    pub mode: Mode,
    pub initial: InitialProfile,
    pub seed: u64,
    pub n_trajectories: usize,
    pub propagator: Propagator,
    /// Macroscopic times at which observers are called; the run stops at the last.
    pub record_times: Vec<f64>,
}

impl SimConfig {
    pub fn new(n_sites: usize) -> Self {
        Self {
            n_sites,
            dt: 0.05,
            mode: Mode::Open,
            initial: InitialProfile::DomainWall,
            seed: 0,
            n_trajectories: 1,
            propagator: Propagator::Exact,
            record_times: vec![0.1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return invalid(format!("n_sites = {} must be >= 2", self.n_sites));
        }
        if self.mode == Mode::Closed && self.n_sites < 3 {
            return invalid("closed chain needs n_sites >= 3");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return invalid(format!("dt = {} must be positive", self.dt));
        }
        if self.n_trajectories == 0 {
            return invalid("n_trajectories must be positive");
        }
        if self.record_times.is_empty() {
            return invalid("record_times must not be empty");
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.record_times {
            if !(t.is_finite() && t >= 0.0 && t >= prev) {
                return invalid("record_times must be finite, nonnegative and nondecreasing");
            }
            prev = t;
        }
        Ok(())
    }

    /// Number of microscopic steps to reach macroscopic time `t_macro`.
    pub fn steps_for(&self, t_macro: f64) -> u64 {
        let n2 = (self.n_sites * self.n_sites) as f64;
        (t_macro * n2 / self.dt).round() as u64
    }

    pub fn t_macro(&self, steps: u64) -> f64 {
        steps as f64 * self.dt / (self.n_sites * self.n_sites) as f64
    }

    pub fn total_steps(&self) -> u64 {
        self.steps_for(*self.record_times.last().unwrap_or(&0.0))
    }
}

/// Exact stationary mean density of the discrete driven chain.
///
/// n̄_j = (n_a(N − j + b) + n_b(j − 1 + a)) / (N − 1 + a + b), a = 1/(α₁+β₁),
/// b = 1/(α_N+β_N), sites j = 1..N.
pub fn mean_density_profile(boundary: &BoundaryParams, n: usize) -> Result<Vec<f64>> {
    boundary.validate()?;
    if n < 1 {
        return invalid("need at least one site");
    }
    let (ga, gb) = (boundary.gamma_a(), boundary.gamma_b());
    if ga == 0.0 && gb == 0.0 {
        return invalid("undriven chain: no unique steady state");
    }
    if ga == 0.0 || gb == 0.0 {
        // a single reservoir fixes the whole chain
        let rho = if ga > 0.0 { boundary.n_a() } else { boundary.n_b() };
        return Ok(vec![rho; n]);
    }
    let (a, b) = (1.0 / ga, 1.0 / gb);
    let (na, nb) = (boundary.n_a(), boundary.n_b());
    let nf = n as f64;
    Ok((1..=n)
        .map(|j| {
            let j = j as f64;
            (na * (nf - j + b) + nb * (j - 1.0 + a)) / (nf - 1.0 + a + b)
        })
        .collect())
}

/// Continuum limit n̄(x) = n_a + (n_b − n_a)x.
pub fn mean_density_continuum(n_a: f64, n_b: f64, x: f64) -> f64 {
    n_a + (n_b - n_a) * x
}

pub fn initial_matrix(cfg: &SimConfig, boundary: &BoundaryParams) -> Result<CoherenceMatrix> {
    let n = cfg.n_sites;
    let diag: Vec<f64> = match &cfg.initial {
        InitialProfile::DomainWall => (1..=n)
            .map(|i| {
                let x = i as f64 / n as f64;
                if x <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
        InitialProfile::Flat { rho } => {
            if !(0.0..=1.0).contains(rho) {
                return invalid(format!("flat density {rho} outside [0, 1]"));
            }
            vec![*rho; n]
        }
        InitialProfile::Empty => vec![0.0; n],
        InitialProfile::Stationary => mean_density_profile(boundary, n)?,
        InitialProfile::Diagonal { values } => {
            if values.len() != n {
                return invalid(format!("diagonal profile has {} entries, need {n}", values.len()));
            }
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return invalid("diagonal profile entries must lie in [0, 1]");
            }
            values.clone()
        }
    };
    Ok(CoherenceMatrix::from_diagonal(&diag))
}

/// Called at each recorded time of each trajectory.
pub trait Observer: Send {
    fn observe(&mut self, trajectory: usize, time_index: usize, t_macro: f64, g: &CoherenceMatrix);
}

impl<F> Observer for F
where
    F: FnMut(usize, usize, f64, &CoherenceMatrix) + Send,
{
    fn observe(&mut self, trajectory: usize, time_index: usize, t_macro: f64, g: &CoherenceMatrix) {
        self(trajectory, time_index, t_macro, g)
    }
}

pub fn trajectory_rng(seed: u64, trajectory: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory as u64);
    rng
}

/// Runs one trajectory from its initial condition, or from `start` if given.
pub fn run_trajectory(
    cfg: &SimConfig,
    boundary: &BoundaryParams,
    trajectory: usize,
    start: Option<CoherenceMatrix>,
    observer: &mut dyn Observer,
) -> Result<CoherenceMatrix> {
    cfg.validate()?;
    boundary.validate()?;
    let mut g = match start {
        Some(g) => {
            if g.n() != cfg.n_sites {
                return invalid("start matrix size does not match n_sites");
            }
            g
        }
        None => initial_matrix(cfg, boundary)?,
    };
    let mut rng = trajectory_rng(cfg.seed, trajectory);
    let mut stepper = Stepper::new(cfg.n_sites);
    let mut dh = sample_noise_increment(cfg.n_sites, cfg.dt, cfg.mode, &mut rng)?;
    let mut steps_done = 0u64;
    let mut fresh = true;
    for (k, &t) in cfg.record_times.iter().enumerate() {
        let target = cfg.steps_for(t);
        while steps_done < target {
            if !fresh {
                propagate::refill_noise(&mut dh, &mut rng);
            }
            fresh = false;
            step(&mut g, &dh, boundary, cfg.mode, cfg.propagator, &mut stepper)?;
            steps_done += 1;
        }
        observer.observe(trajectory, k, cfg.t_macro(steps_done), &g);
    }
    Ok(g)
}

/// Runs all trajectories (in parallel when a thread pool is available) and
/// returns one observer per trajectory, ordered by trajectory index.
pub fn evolve_with<O, F>(cfg: &SimConfig, boundary: &BoundaryParams, make: F) -> Result<Vec<O>>
where
    O: Observer,
    F: Fn(usize) -> O + Sync,
{
    cfg.validate()?;
    boundary.validate()?;
    (0..cfg.n_trajectories)
        .into_par_iter()
        .map(|k| {
            let mut obs = make(k);
            run_trajectory(cfg, boundary, k, None, &mut obs)?;
            Ok(obs)
        })
        .collect()
}

/// Stored snapshots of one trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub index: usize,
    pub times: Vec<f64>,
    pub snapshots: Vec<CoherenceMatrix>,
}

impl Observer for Trajectory {
    fn observe(&mut self, _trajectory: usize, _time_index: usize, t_macro: f64, g: &CoherenceMatrix) {
        self.times.push(t_macro);
        self.snapshots.push(g.clone());
    }
}

/// Default cap on snapshot memory for [`evolve`].
pub const SNAPSHOT_BUDGET_BYTES: usize = 1 << 30;

/// Runs the ensemble storing every recorded snapshot.
pub fn evolve(cfg: &SimConfig, boundary: &BoundaryParams) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let bytes = cfg.n_trajectories
        .saturating_mul(cfg.record_times.len())
        .saturating_mul(cfg.n_sites * cfg.n_sites * 16);
    if bytes > SNAPSHOT_BUDGET_BYTES {
        return Err(Error::Budget(format!(
            "storing {} snapshots of a {}x{} matrix needs {} MiB (> {} MiB); use evolve_with and an accumulating observer such as SampleTable",
            cfg.n_trajectories * cfg.record_times.len(),
            cfg.n_sites,
            cfg.n_sites,
            bytes >> 20,
            SNAPSHOT_BUDGET_BYTES >> 20
        )));
    }
    evolve_with(cfg, boundary, |k| Trajectory {
        index: k,
        times: Vec::new(),
        snapshots: Vec::new(),
    })
}
