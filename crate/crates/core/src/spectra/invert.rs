//! Stieltjes inversion with Richardson extrapolation in ε, atom extraction and
//! the sampled spectral measure.

use super::SpectralProblem;
use crate::error::{invalid, Result};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

pub const DEFAULT_EPS_SCHEDULE: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

#[derive(Debug, Clone, PartialEq)]
pub struct StieltjesOptions {
    /// Three decreasing distances from the real axis.
    pub eps: [f64; 3],
    /// Larger imaginary parts solved first to warm-start the small-ε solves.
    pub warmup: Vec<f64>,
    /// Density above which a grid point counts as inside the support.
    pub support_threshold: f64,
    /// Extrapolated densities below −tol are flagged.
    pub negative_tol: f64,
    /// Smallest mass reported as an atom.
    pub min_atom_mass: f64,
}

impl Default for StieltjesOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS_SCHEDULE,
            warmup: vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.02],
            support_threshold: 1e-4,
            negative_tol: 1e-3,
            min_atom_mass: 1e-3,
        }
    }
}

/// Density sampled on a λ grid plus point masses.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralMeasure {
    pub lambdas: Vec<f64>,
    pub density: Vec<f64>,
    /// Maximal runs of grid points with density above threshold.
    pub support: Vec<(f64, f64)>,
    /// (location, mass).
    pub atoms: Vec<(f64, f64)>,
    /// Mass of the continuous part (trapezoid on the grid unless a better
    /// quadrature was available).
    pub continuum_mass: f64,
    /// Smallest density before clipping at zero.
    pub min_raw_density: f64,
    pub negative_flagged: bool,
}

impl SpectralMeasure {
    pub fn total_mass(&self) -> f64 {
        self.continuum_mass + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }

    /// Trapezoid ∫ f dσ over the sampled density plus atoms.
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        let cont: f64 = self
            .lambdas
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(l, d)| 0.5 * (l[1] - l[0]) * (d[0] * f(l[0]) + d[1] * f(l[1])))
            .sum();
        cont + self.atoms.iter().map(|(x, m)| m * f(*x)).sum::<f64>()
    }

    /// Measure of M_h including the zero eigenvalues: (1 − ℓ)δ₀ + ℓσ_I.
    pub fn with_zero_atom(&self, ell: f64) -> Result<SpectralMeasure> {
        if !(0.0..=1.0).contains(&ell) {
            return invalid("interval length must lie in [0, 1]");
        }
        let mut atoms: Vec<(f64, f64)> = self.atoms.iter().map(|(x, m)| (*x, m * ell)).collect();
        if ell < 1.0 {
            atoms.push((0.0, 1.0 - ell));
        }
        Ok(SpectralMeasure {
            lambdas: self.lambdas.clone(),
            density: self.density.iter().map(|d| d * ell).collect(),
            support: self.support.clone(),
            atoms,
            continuum_mass: self.continuum_mass * ell,
            min_raw_density: self.min_raw_density * ell,
            negative_flagged: self.negative_flagged,
        })
    }

    /// Image under λ ↦ n_a + (n_b − n_a)λ.
    pub fn map_eigenvalues(&self, n_a: f64, n_b: f64) -> SpectralMeasure {
        let d = n_b - n_a;
        let map = |x: f64| n_a + d * x;
        if d == 0.0 {
            return SpectralMeasure {
                lambdas: vec![n_a],
                density: vec![0.0],
                support: vec![],
                atoms: vec![(n_a, self.total_mass())],
                continuum_mass: 0.0,
                min_raw_density: 0.0,
                negative_flagged: false,
            };
        }
        let mut pairs: Vec<(f64, f64)> = self
            .lambdas
            .iter()
            .zip(&self.density)
            .map(|(l, p)| (map(*l), p / d.abs()))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let support = self
            .support
            .iter()
            .map(|(a, b)| {
                let (x, y) = (map(*a), map(*b));
                (x.min(y), x.max(y))
            })
            .collect();
        SpectralMeasure {
            lambdas: pairs.iter().map(|p| p.0).collect(),
            density: pairs.iter().map(|p| p.1).collect(),
            support,
            atoms: self.atoms.iter().map(|(x, m)| (map(*x), *m)).collect(),
            continuum_mass: self.continuum_mass,
            min_raw_density: self.min_raw_density / d.abs(),
            negative_flagged: self.negative_flagged,
        }
    }

    /// L1 distance to a reference density on the same grid (trapezoid).
    pub fn l1_distance(&self, reference: impl Fn(f64) -> f64) -> f64 {
        let diff: Vec<f64> = self
            .lambdas
            .iter()
            .zip(&self.density)
            .map(|(l, d)| (d - reference(*l)).abs())
            .collect();
        self.lambdas
            .windows(2)
            .zip(diff.windows(2))
            .map(|(l, d)| 0.5 * (l[1] - l[0]) * (d[0] + d[1]))
            .sum()
    }
}

pub(crate) fn support_runs(lambdas: &[f64], density: &[f64], thr: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..lambdas.len() {
        let inside = density[i] > thr;
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((lambdas[s], lambdas[i - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((lambdas[s], lambdas[lambdas.len() - 1]));
    }
    out
}

fn richardson_weights(eps: &[f64; 3]) -> [f64; 3] {
    let mut w = [0.0; 3];
    for i in 0..3 {
        let mut p = 1.0;
        for j in 0..3 {
            if j != i {
                p *= eps[j] / (eps[j] - eps[i]);
            }
        }
        w[i] = p;
    }
    w
}

/// Inverts a resolvent given by `eval(λ, eps_list) = [G(λ + iε) for ε in eps_list]`.
///
/// The density is −Im G/π extrapolated to ε → 0 with the quadratic through the
/// three schedule points. Atoms are located by fitting G ≈ w/(z − c) at the two
/// smallest ε, confirmed by the 1/ε scaling at the fitted location, and subtracted
/// before the continuum is extracted.
pub fn stieltjes_invert<F>(eval: F, lambdas: &[f64], opts: &StieltjesOptions) -> Result<SpectralMeasure>
where
    F: Fn(f64, &[f64]) -> Result<Vec<C64>> + Sync,
{
    let e = opts.eps;
    if !(e[0] > e[1] && e[1] > e[2] && e[2] > 0.0) {
        return invalid("ε schedule must be strictly decreasing and positive");
    }
    if lambdas.len() < 2 || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("λ grid must be strictly increasing with at least two points");
    }
    let gs: Vec<Vec<C64>> = lambdas
        .par_iter()
        .map(|l| eval(*l, &e))
        .collect::<Result<_>>()?;
    let spacing = lambdas
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);

    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (i, g) in gs.iter().enumerate() {
        let (z1, z2) = (C64::new(lambdas[i], e[1]), C64::new(lambdas[i], e[2]));
        let (g1, g2) = (g[1], g[2]);
        if g1.norm() == 0.0 || g2.norm() == 0.0 {
            continue;
        }
        let w = (z1 - z2) / (1.0 / g1 - 1.0 / g2);
        let c = z2 - w / g2;
        if w.re < opts.min_atom_mass
            || w.im.abs() > 0.05 * w.re
            || (c.re - lambdas[i]).abs() > spacing
            || atoms.iter().any(|a| (a.0 - c.re).abs() < spacing)
        {
            continue;
        }
        let (ea, eb) = (e[2], e[2] / 4.0);
        let at = eval(c.re, &[ea, eb])?;
        let (ma, mb) = (-at[0].im * ea, -at[1].im * eb);
        if mb >= opts.min_atom_mass && (ma - mb).abs() < 0.1 * mb {
            // remove the continuum part, which scales like ε
            atoms.push((c.re, (4.0 * mb - ma) / 3.0));
        }
    }

    let rw = richardson_weights(&e);
    let raw: Vec<f64> = gs
        .iter()
        .zip(lambdas)
        .map(|(g, l)| {
            (0..3)
                .map(|k| {
                    let z = C64::new(*l, e[k]);
                    let atom_part: C64 = atoms.iter().map(|(c, m)| *m / (z - c)).sum();
                    rw[k] * (-(g[k] - atom_part).im / PI)
                })
                .sum()
        })
        .collect();
    let min_raw = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let peak = raw.iter().copied().fold(0.0, f64::max);
    let negative_flagged = min_raw < -opts.negative_tol * peak.max(1.0);
    let density: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let support = support_runs(lambdas, &density, opts.support_threshold);
    let continuum_mass = lambdas
        .windows(2)
        .zip(density.windows(2))
        .map(|(l, d)| 0.5 * (l[1] - l[0]) * (d[0] + d[1]))
        .sum();
    Ok(SpectralMeasure {
        lambdas: lambdas.to_vec(),
        density,
        support,
        atoms,
        continuum_mass,
        min_raw_density: min_raw,
        negative_flagged,
    })
}

impl SpectralProblem {
    /// Stieltjes inversion of the total resolvent (`subblock = false`) or of the
    /// normalized subblock resolvent of an indicator profile.
    pub fn stieltjes(
        &self,
        lambdas: &[f64],
        opts: &StieltjesOptions,
        subblock: bool,
    ) -> Result<SpectralMeasure> {
        let interval = if subblock {
            Some(self.indicator_interval()?)
        } else {
            None
        };
        let eval = |l: f64, eps: &[f64]| -> Result<Vec<C64>> {
            let mut chain: Vec<f64> = opts
                .warmup
                .iter()
                .copied()
                .filter(|w| *w > eps[0])
                .collect();
            let first_target = chain.len();
            chain.extend_from_slice(eps);
            let mut warm = None;
            let mut out = Vec::with_capacity(eps.len());
            for (k, im) in chain.iter().enumerate() {
                let sol = self.solve(C64::new(l, *im), warm.as_ref())?;
                if k >= first_target {
                    out.push(match interval {
                        Some((lo, hi)) => sol.block_resolvent(lo, hi),
                        None => sol.resolvent(),
                    });
                }
                warm = Some(sol);
            }
            Ok(out)
        };
        stieltjes_invert(eval, lambdas, opts)
    }
}
