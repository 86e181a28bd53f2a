//! Fixed point a = h/(z − h R₀[a]) on a composite Gauss–Legendre grid.
//!
//! For steady QSSEP the cumulants are the free cumulants of the commuting
//! projections p_x(y) = 1[y < x] under Lebesgue measure. By multilinearity
//! R₀[a](x) = Σ_l κ_{l+1}(p_x, A, …, A) with A(y) = ∫_y^1 a, and the one-insertion
//! moment–cumulant relation M_X(w) = M_A(w)·C_X(w M_A(w)) sums the series:
//! b(x) = ∫_0^x dy/(u − A(y)) where u solves ∫_0^1 dy/(u − A(y)) = 1.
//! The truncated variant evaluates the same relation as power series.

use super::{DiagonalProfile, LocalFreeCumulantSpec};
use crate::error::{invalid, Error, Result};
use crate::nc_combinatorics::{series_mul, series_reciprocal, series_reversion};
use crate::quad::PanelGrid;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::collections::VecDeque;
use std::f64::consts::PI;

const ZERO: C64 = C64::new(0.0, 0.0);
const HERGLOTZ_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Mixing weight of the new iterate.
    pub damping: f64,
    /// Max-norm residual target.
    pub tol: f64,
    pub max_iter: usize,
    /// Anderson history length; 0 gives plain damped Picard.
    pub anderson_depth: usize,
    pub panels: usize,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 20_000,
            anderson_depth: 8,
            panels: 32,
            order: 8,
        }
    }
}

/// Converged a_z, b_z on the grid.
#[derive(Debug, Clone)]
pub struct LocalResolvent {
    pub z: C64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub h: Vec<f64>,
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    pub residual: f64,
    pub iterations: usize,
    /// Largest magnitude of the last retained order in R₀ (0 when resummed).
    pub truncation_tail: f64,
    /// max(Im a · sign Im z, 0) over nodes with h > 0.
    pub herglotz_defect: f64,
    /// Auxiliary root u of the resummed QSSEP kernel.
    pub u: Option<C64>,
}

impl LocalResolvent {
    /// G[h](z) = ∫₀¹ dx/(z − h(x) b(x)).
    pub fn resolvent(&self) -> C64 {
        self.weights
            .iter()
            .zip(&self.h)
            .zip(&self.b)
            .map(|((w, h), b)| *w / (self.z - *h * b))
            .sum()
    }

    /// (1/ℓ) ∫_{lo}^{hi} dx/(z − b(x)), the normalized resolvent of a subblock.
    pub fn block_resolvent(&self, lo: f64, hi: f64) -> C64 {
        let mut s = ZERO;
        for ((x, w), b) in self.nodes.iter().zip(&self.weights).zip(&self.b) {
            if *x > lo && *x < hi {
                s += *w / (self.z - b);
            }
        }
        s / (hi - lo)
    }
}

/// A spec, a profile h and the grid they are solved on.
pub struct SpectralProblem {
    spec: LocalFreeCumulantSpec,
    profile: DiagonalProfile,
    grid: PanelGrid,
    h: Vec<f64>,
    variance: Vec<f64>,
    opts: SolverOptions,
}

impl SpectralProblem {
    pub fn new(
        spec: LocalFreeCumulantSpec,
        profile: DiagonalProfile,
        opts: SolverOptions,
    ) -> Result<Self> {
        spec.validate()?;
        if !(opts.damping > 0.0 && opts.damping <= 1.0) {
            return invalid("damping must lie in (0, 1]");
        }
        if opts.order < 2 || opts.panels == 0 {
            return invalid("grid needs at least one panel of two nodes");
        }
        let grid = PanelGrid::unit(profile.breaks(), opts.panels, opts.order);
        let h: Vec<f64> = grid.nodes.iter().map(|x| profile.eval(*x)).collect();
        let variance = match &spec {
            LocalFreeCumulantSpec::DiagonalCovariance { variance, .. } => {
                grid.nodes.iter().map(|x| variance(*x)).collect()
            }
            _ => vec![],
        };
        Ok(Self {
            spec,
            profile,
            grid,
            h,
            variance,
            opts,
        })
    }

    pub fn spec(&self) -> &LocalFreeCumulantSpec {
        &self.spec
    }

    pub fn profile(&self) -> &DiagonalProfile {
        &self.profile
    }

    pub fn grid(&self) -> &PanelGrid {
        &self.grid
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Solves at `z`, starting from `warm` when given, else from a = h/z.
    pub fn solve(&self, z: C64, warm: Option<&LocalResolvent>) -> Result<LocalResolvent> {
        if z.im == 0.0 && z.re == 0.0 {
            return invalid("z must be nonzero");
        }
        if !(z.re.is_finite() && z.im.is_finite()) {
            return invalid("z must be finite");
        }
        let x0: Vec<C64> = match warm {
            Some(w) if w.a.len() == self.grid.len() => w.a.clone(),
            _ => self.h.iter().map(|h| *h / z).collect(),
        };
        let mut u = warm.and_then(|w| w.u);
        let (a, residual, iterations) = anderson(
            x0,
            |a: &[C64]| {
                let (b, _) = self.r0(a, &mut u)?;
                Ok(self
                    .h
                    .iter()
                    .zip(&b)
                    .map(|(h, b)| *h / (z - *h * b))
                    .collect())
            },
            &self.opts,
        )?;
        let (b, tail) = self.r0(&a, &mut u)?;
        let sign = z.im.signum();
        let herglotz_defect = if z.im == 0.0 {
            0.0
        } else {
            a.iter()
                .zip(&self.h)
                .filter(|(_, h)| **h > 0.0)
                .map(|(a, _)| (a.im * sign).max(0.0))
                .fold(0.0, f64::max)
        };
        if herglotz_defect > HERGLOTZ_TOL {
            return Err(Error::InvariantViolation(format!(
                "local resolvent violates the Herglotz sign at z = {z} (defect {herglotz_defect:.3e})"
            )));
        }
        Ok(LocalResolvent {
            z,
            nodes: self.grid.nodes.clone(),
            weights: self.grid.weights.clone(),
            h: self.h.clone(),
            a,
            b,
            residual,
            iterations,
            truncation_tail: tail,
            herglotz_defect,
            u,
        })
    }

    pub fn resolvent(&self, z: C64) -> Result<C64> {
        Ok(self.solve(z, None)?.resolvent())
    }

    /// Interval of an indicator profile with a single piece.
    pub fn indicator_interval(&self) -> Result<(f64, f64)> {
        let pieces: Vec<_> = self
            .profile
            .cells()
            .into_iter()
            .filter(|c| c.2 != 0.0)
            .collect();
        match (self.profile.indicator_length(), pieces.as_slice()) {
            (Some(_), [(lo, hi, _)]) => Ok((*lo, *hi)),
            _ => invalid("subblock resolvent needs h = indicator of one interval"),
        }
    }

    /// Normalized subblock resolvent G_I(z) = (1/ℓ_I) ∫_I dx/(z − b(x)).
    pub fn subblock_resolvent(&self, z: C64) -> Result<C64> {
        let (lo, hi) = self.indicator_interval()?;
        Ok(self.solve(z, None)?.block_resolvent(lo, hi))
    }

    /// Moments m₀…m_{n_max} of the total spectral measure from a trapezoidal
    /// Cauchy integral on the circle |z − center| = radius.
    pub fn moments(&self, n_max: usize, center: f64, radius: f64, points: usize) -> Result<Vec<f64>> {
        if radius <= 0.0 || points < 8 {
            return invalid("contour needs a positive radius and at least 8 points");
        }
        let zs: Vec<C64> = (0..points)
            .map(|k| {
                let phi = 2.0 * PI * (k as f64 + 0.5) / points as f64;
                C64::new(center, 0.0) + C64::from_polar(radius, phi)
            })
            .collect();
        let gs: Vec<C64> = zs
            .par_iter()
            .map(|z| self.resolvent(*z))
            .collect::<Result<_>>()?;
        Ok((0..=n_max)
            .map(|n| {
                let s: C64 = zs
                    .iter()
                    .zip(&gs)
                    .map(|(z, g)| z.powu(n as u32) * g * (z - center))
                    .sum();
                s.re / points as f64
            })
            .collect())
    }

    /// R₀[a] at the nodes and the size of the last retained order.
    fn r0(&self, a: &[C64], u: &mut Option<C64>) -> Result<(Vec<C64>, f64)> {
        let n = a.len();
        match &self.spec {
            LocalFreeCumulantSpec::Constant {
                kappas,
                r_transform,
            } => {
                let big_a = self.grid.integrate(a);
                if let Some(r) = r_transform {
                    return Ok((vec![r(big_a); n], 0.0));
                }
                let mut b = ZERO;
                for k in kappas.iter().rev() {
                    b = b * big_a + *k;
                }
                let l = kappas.len();
                let tail = if l >= 2 {
                    (kappas[l - 1] * big_a.powu(l as u32 - 1)).norm()
                } else {
                    0.0
                };
                Ok((vec![b; n], tail))
            }
            LocalFreeCumulantSpec::DiagonalCovariance { mean, .. } => Ok((
                a.iter()
                    .zip(&self.variance)
                    .map(|(a, s2)| *mean + *s2 * a)
                    .collect(),
                0.0,
            )),
            LocalFreeCumulantSpec::QssepSteady {
                n_a,
                n_b,
                max_order,
            } => {
                let d = n_b - n_a;
                let ad: Vec<C64> = a.iter().map(|v| v * d).collect();
                let big_a = self.grid.tail(&ad);
                let (b0, tail) = match max_order {
                    None => (self.qssep_resummed(&big_a, u)?, 0.0),
                    Some(l) => self.qssep_truncated(&big_a, *l)?,
                };
                Ok((b0.iter().map(|v| *n_a + v * d).collect(), tail * d.abs()))
            }
        }
    }

    fn qssep_resummed(&self, big_a: &[C64], u_state: &mut Option<C64>) -> Result<Vec<C64>> {
        let w = &self.grid.weights;
        let eval = |u: C64| -> (C64, C64) {
            let mut f = ZERO;
            let mut df = ZERO;
            for (wi, ai) in w.iter().zip(big_a) {
                let inv = 1.0 / (u - ai);
                f += inv * *wi;
                df -= inv * inv * *wi;
            }
            (f - 1.0, df)
        };
        let mean: C64 = self.grid.integrate(big_a);
        let mut u = u_state.unwrap_or(C64::new(1.0, 0.0) + mean);
        let (mut f, mut df) = eval(u);
        let mut converged = false;
        for _ in 0..200 {
            if f.norm() < 1e-14 {
                converged = true;
                break;
            }
            let step = f / df;
            let mut t = 1.0;
            loop {
                let cand = u - step * t;
                let (fc, dfc) = eval(cand);
                if fc.norm().is_finite() && fc.norm() < f.norm() {
                    u = cand;
                    f = fc;
                    df = dfc;
                    break;
                }
                t *= 0.5;
                if t < 1e-10 {
                    break;
                }
            }
            if t < 1e-10 {
                break;
            }
        }
        if !converged && f.norm() > 1e-11 {
            return Err(Error::NonConvergence {
                what: "QSSEP kernel root u",
                iterations: 200,
                residual: f.norm(),
            });
        }
        *u_state = Some(u);
        let inv: Vec<C64> = big_a.iter().map(|ai| 1.0 / (u - ai)).collect();
        Ok(self.grid.cumulative(&inv))
    }

    fn qssep_truncated(&self, big_a: &[C64], l: usize) -> Result<(Vec<C64>, f64)> {
        let n = big_a.len();
        // ν_m(x) = ∫_0^x A^m, μ_m = ν_m(1)
        let mut pow = vec![C64::new(1.0, 0.0); n];
        let mut nu = Vec::with_capacity(l);
        let mut mu = Vec::with_capacity(l);
        for _ in 0..l {
            mu.push(self.grid.integrate(&pow));
            nu.push(self.grid.cumulative(&pow));
            for (p, a) in pow.iter_mut().zip(big_a) {
                *p *= a;
            }
        }
        // w = z M_A(z), invert, then C_X(w) = M_X(z(w)) / M_A(z(w)).
        let mut wz = vec![ZERO; l + 1];
        wz[1..=l].copy_from_slice(&mu[..l]);
        let zw = series_reversion(&wz, l)?;
        let mut powers = vec![vec![ZERO; l]; l];
        powers[0][0] = C64::new(1.0, 0.0);
        for m in 1..l {
            powers[m] = series_mul(&powers[m - 1], &zw, l);
        }
        let mut ma = vec![ZERO; l];
        for (m, p) in powers.iter().enumerate() {
            for (o, v) in ma.iter_mut().zip(p) {
                *o += mu[m] * v;
            }
        }
        let inv = series_reciprocal(&ma, l)?;
        let q: Vec<Vec<C64>> = powers.iter().map(|p| series_mul(p, &inv, l)).collect();
        let qsum: Vec<C64> = q.iter().map(|c| c.iter().sum()).collect();
        let mut b = vec![ZERO; n];
        let mut tail: f64 = 0.0;
        for i in 0..n {
            let mut last = ZERO;
            for m in 0..l {
                b[i] += nu[m][i] * qsum[m];
                last += nu[m][i] * q[m][l - 1];
            }
            tail = tail.max(last.norm());
        }
        Ok((b, if l >= 2 { tail } else { 0.0 }))
    }
}

/// Anderson-accelerated damped Picard iteration for x = map(x).
///
/// A failed or blown-up map evaluation restarts from the best iterate with half
/// the damping and an empty history.
fn anderson(
    x0: Vec<C64>,
    mut map: impl FnMut(&[C64]) -> Result<Vec<C64>>,
    opts: &SolverOptions,
) -> Result<(Vec<C64>, f64, usize)> {
    let mut beta = opts.damping;
    let mut x = x0;
    let mut best_x = x.clone();
    let mut best_res = f64::INFINITY;
    let mut hist: VecDeque<(Vec<C64>, Vec<C64>)> = VecDeque::new();
    let mut prev: Option<(Vec<C64>, Vec<C64>)> = None;
    for it in 0..opts.max_iter {
        let gx = match map(&x) {
            Ok(g) if g.iter().all(|v| v.re.is_finite() && v.im.is_finite()) => g,
            _ => {
                if !best_res.is_finite() {
                    return Err(Error::NonConvergence {
                        what: "local resolvent fixed point",
                        iterations: it,
                        residual: f64::INFINITY,
                    });
                }
                x = best_x.clone();
                beta = (beta * 0.5).max(1e-3);
                hist.clear();
                prev = None;
                continue;
            }
        };
        let r: Vec<C64> = gx.iter().zip(&x).map(|(g, x)| g - x).collect();
        let res = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if res < opts.tol {
            return Ok((gx, res, it + 1));
        }
        if res < best_res {
            best_res = res;
            best_x.clone_from(&x);
        } else if res > 1e3 * best_res {
            x = best_x.clone();
            beta = (beta * 0.5).max(1e-3);
            hist.clear();
            prev = None;
            continue;
        }
        if let Some((px, pr)) = prev.take() {
            let dx: Vec<C64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
            let dr: Vec<C64> = r.iter().zip(&pr).map(|(a, b)| a - b).collect();
            hist.push_back((dx, dr));
            if hist.len() > opts.anderson_depth {
                hist.pop_front();
            }
        }
        let mut next: Vec<C64> = x.iter().zip(&r).map(|(x, r)| x + r * beta).collect();
        if !hist.is_empty() {
            if let Some(gamma) = least_squares(&hist, &r) {
                for ((dx, dr), g) in hist.iter().zip(gamma.iter()) {
                    for i in 0..next.len() {
                        next[i] -= (dx[i] + dr[i] * beta) * g;
                    }
                }
            } else {
                hist.clear();
            }
        }
        prev = Some((x, r));
        x = next;
    }
    Err(Error::NonConvergence {
        what: "local resolvent fixed point",
        iterations: opts.max_iter,
        residual: best_res,
    })
}

// argmin ‖r − ΔR γ‖₂ through regularized normal equations.
fn least_squares(hist: &VecDeque<(Vec<C64>, Vec<C64>)>, r: &[C64]) -> Option<DVector<C64>> {
    let k = hist.len();
    let mut gram = DMatrix::<C64>::zeros(k, k);
    let mut rhs = DVector::<C64>::zeros(k);
    for (i, (_, di)) in hist.iter().enumerate() {
        for (j, (_, dj)) in hist.iter().enumerate().skip(i) {
            let s: C64 = di.iter().zip(dj).map(|(a, b)| a.conj() * b).sum();
            gram[(i, j)] = s;
            gram[(j, i)] = s.conj();
        }
        rhs[i] = di.iter().zip(r).map(|(a, b)| a.conj() * b).sum();
    }
    let scale = (0..k).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for i in 0..k {
        gram[(i, i)] += C64::new(1e-12 * scale, 0.0);
    }
    gram.cholesky().map(|c| c.solve(&rhs))
}
