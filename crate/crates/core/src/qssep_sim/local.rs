//! Matrix-valued local process dI = Δₓ I dt + √(2/N) ∂ₓ(I dWₓ) on a cell grid.

use crate::error::{invalid, Result};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct LocalProcessConfig {
    /// Grid x_m = m/M, m = 0..=M; the two end cells hold Dirichlet data.
    pub cells: usize,
    pub n_dim: usize,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
    pub seed: u64,
    pub n_a: f64,
    pub n_b: f64,
    /// Multiplies the noise term; 0 gives the deterministic limit.
    pub noise_scale: f64,
    /// Initial I_x = ρ(x)·1.
    pub initial: fn(f64) -> f64,
}

#[derive(Debug, Clone)]
pub struct LocalSnapshot {
    pub step: usize,
    pub t: f64,
    pub cells: Vec<DMatrix<C64>>,
}

impl LocalSnapshot {
    /// tr(I_x)/N at every cell.
    pub fn normalized_traces(&self) -> Vec<C64> {
        self.cells
            .iter()
            .map(|m| m.trace() / m.nrows() as f64)
            .collect()
    }

    /// tr(I_x I_y)/N.
    pub fn normalized_trace_product(&self, x: usize, y: usize) -> C64 {
        let n = self.cells[x].nrows() as f64;
        (&self.cells[x] * &self.cells[y]).trace() / n
    }
}

/// One explicit Euler step of the heat equation with Dirichlet ends.
pub fn heat_step(profile: &[f64], dt: f64, dx: f64) -> Vec<f64> {
    let r = dt / (dx * dx);
    let mut out = profile.to_vec();
    for m in 1..profile.len() - 1 {
        out[m] = profile[m] + r * (profile[m + 1] - 2.0 * profile[m] + profile[m - 1]);
    }
    out
}

fn hermitian_noise<R: Rng>(n: usize, var: f64, rng: &mut R) -> DMatrix<C64> {
    let mut w = DMatrix::zeros(n, n);
    let s_off = (0.5 * var).sqrt();
    let s_diag = var.sqrt();
    for i in 0..n {
        let d: f64 = rng.sample(StandardNormal);
        w[(i, i)] = C64::new(d * s_diag, 0.0);
        for j in i + 1..n {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            let z = C64::new(a * s_off, b * s_off);
            w[(i, j)] = z;
            w[(j, i)] = z.conj();
        }
    }
    w
}

/// Euler–Maruyama integration; noise covariance E[dW^{ij}_x dW^{kl}_y] =
/// δ_{xy} δ^{il} δ^{jk} dt/Δx, derivative by centered differences.
///
/// The noise is multiplicative and acts through a derivative, so E[tr(I I†)]
/// grows roughly like exp(c·t/Δx³) for any matrix size. Ensemble estimates are
/// usable only on coarse grids (a handful of cells) and short times.
pub fn simulate_local_process(cfg: &LocalProcessConfig) -> Result<Vec<LocalSnapshot>> {
    if cfg.cells < 2 || cfg.n_dim == 0 {
        return invalid("need at least 2 cells and a positive matrix size");
    }
    if cfg.record_every == 0 {
        return invalid("record_every must be positive");
    }
    let dx = 1.0 / cfg.cells as f64;
    if !(cfg.dt > 0.0 && cfg.dt <= dx * dx / 4.0) {
        return invalid(format!(
            "dt = {:.3e} violates the explicit bound dx²/4 = {:.3e}",
            cfg.dt,
            dx * dx / 4.0
        ));
    }
    let n = cfg.n_dim;
    let m = cfg.cells;
    let eye = DMatrix::<C64>::identity(n, n);
    let mut cells: Vec<DMatrix<C64>> = (0..=m)
        .map(|k| {
            let rho = if k == 0 {
                cfg.n_a
            } else if k == m {
                cfg.n_b
            } else {
                (cfg.initial)(k as f64 * dx)
            };
            &eye * C64::new(rho, 0.0)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let amp = cfg.noise_scale * (2.0 / n as f64).sqrt() / (2.0 * dx);
    let r = cfg.dt / (dx * dx);
    let mut out = vec![LocalSnapshot {
        step: 0,
        t: 0.0,
        cells: cells.clone(),
    }];
    for s in 1..=cfg.steps {
        let noisy: Vec<DMatrix<C64>> = if cfg.noise_scale != 0.0 {
            cells
                .iter()
                .map(|c| c * hermitian_noise(n, cfg.dt / dx, &mut rng))
                .collect()
        } else {
            Vec::new()
        };
        let mut next = cells.clone();
        for k in 1..m {
            let lap = &cells[k + 1] - &cells[k] * C64::new(2.0, 0.0) + &cells[k - 1];
            next[k] += lap * C64::new(r, 0.0);
            if !noisy.is_empty() {
                next[k] += (&noisy[k + 1] - &noisy[k - 1]) * C64::new(amp, 0.0);
            }
        }
        cells = next;
        if s % cfg.record_every == 0 {
            out.push(LocalSnapshot {
                step: s,
                t: s as f64 * cfg.dt,
                cells: cells.clone(),
            });
        }
    }
    Ok(out)
}
