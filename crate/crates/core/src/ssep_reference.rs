//! Classical SSEP oracles: the master-equation generator on 2^N configurations,
//! its stationary measure, and the current cumulant generating functions of the
//! open chain and of the infinite line.
//!
//! Configurations are bit strings, site i (0-based) ↔ bit i. Bulk bonds swap
//! neighbouring occupations at rate 1; site 0 is filled at rate α₁ and emptied at
//! rate β₁, site N−1 likewise with α_N, β_N.

use crate::error::{invalid, Error, Result};
use crate::qssep_sim::BoundaryParams;
use crate::quad::adaptive_gauss_legendre;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use serde::Serialize;

pub const MAX_SSEP_SITES: usize = 12;

/// Largest state space solved by dense LU; larger ones use Gauss–Seidel.
const DENSE_LIMIT: usize = 1 << 10;

/// Sparse generator M with ∂ₜp = Mp; columns sum to zero.
#[derive(Debug, Clone)]
pub struct SsepGenerator {
    n: usize,
    boundary: BoundaryParams,
    /// Per source configuration: (target, rate) for every allowed move.
    outgoing: Vec<Vec<(usize, f64)>>,
    /// Per target configuration: (source, rate).
    incoming: Vec<Vec<(usize, f64)>>,
    /// Total escape rate of each configuration (−M_CC).
    escape: Vec<f64>,
}

pub fn build_ssep_generator(n: usize, boundary: BoundaryParams) -> Result<SsepGenerator> {
    boundary.validate()?;
    if !(2..=MAX_SSEP_SITES).contains(&n) {
        return invalid(format!("SSEP generator needs 2 <= N <= {MAX_SSEP_SITES}, got {n}"));
    }
    let dim = 1usize << n;
    let mut outgoing = vec![Vec::new(); dim];
    let mut incoming = vec![Vec::new(); dim];
    let mut escape = vec![0.0; dim];
    let mut add = |from: usize, to: usize, rate: f64| {
        if rate > 0.0 {
            outgoing[from].push((to, rate));
            incoming[to].push((from, rate));
            escape[from] += rate;
        }
    };
    let last = 1usize << (n - 1);
    for c in 0..dim {
        for i in 0..n - 1 {
            let (a, b) = ((c >> i) & 1, (c >> (i + 1)) & 1);
            if a != b {
                add(c, c ^ (0b11 << i), 1.0);
            }
        }
        if c & 1 == 0 {
            add(c, c | 1, boundary.alpha_1);
        } else {
            add(c, c & !1, boundary.beta_1);
        }
        if c & last == 0 {
            add(c, c | last, boundary.alpha_n);
        } else {
            add(c, c & !last, boundary.beta_n);
        }
    }
    Ok(SsepGenerator {
        n,
        boundary,
        outgoing,
        incoming,
        escape,
    })
}

impl SsepGenerator {
    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.escape.len()
    }

    pub fn boundary(&self) -> &BoundaryParams {
        &self.boundary
    }

    pub fn nonzeros(&self) -> usize {
        self.dim() + self.outgoing.iter().map(Vec::len).sum::<usize>()
    }

    /// M(row, col): rate col → row off the diagonal, minus the escape rate on it.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        if row == col {
            return -self.escape[col];
        }
        self.outgoing[col]
            .iter()
            .filter(|(t, _)| *t == row)
            .map(|(_, r)| r)
            .sum()
    }

    /// Mp.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|c| {
                self.incoming[c].iter().map(|(s, r)| r * p[*s]).sum::<f64>() - self.escape[c] * p[c]
            })
            .collect()
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.dim() > 1 << 12 {
            return Err(Error::Budget(format!("dense {0}x{0} generator", self.dim())));
        }
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for c in 0..self.dim() {
            m[(c, c)] = -self.escape[c];
            for (t, r) in &self.outgoing[c] {
                m[(*t, c)] += r;
            }
        }
        Ok(m)
    }

    /// Stationary probability vector: the normalized null vector of M.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let b = &self.boundary;
        if b.gamma_a() == 0.0 && b.gamma_b() == 0.0 {
            return invalid("undriven chain: the null space splits into particle-number sectors");
        }
        let p = if self.dim() <= DENSE_LIMIT {
            self.stationary_dense()?
        } else {
            self.stationary_gauss_seidel()?
        };
        let scale = self.escape.iter().copied().fold(0.0, f64::max);
        let res = self.apply(&p).iter().map(|v| v.abs()).fold(0.0, f64::max);
        if res > 1e-12 * scale {
            return Err(Error::NonConvergence {
                what: "SSEP stationary state",
                iterations: 0,
                residual: res,
            });
        }
        Ok(p)
    }

    fn stationary_dense(&self) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut a = self.to_dense()?;
        // replace the last balance equation by the normalization
        for j in 0..dim {
            a[(dim - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(dim);
        rhs[dim - 1] = 1.0;
        let p = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("generator null space is not one-dimensional".into()))?;
        Ok(p.iter().copied().collect())
    }

    fn stationary_gauss_seidel(&self) -> Result<Vec<f64>> {
        const MAX_SWEEPS: usize = 200_000;
        const CHECK_EVERY: usize = 50;
        let dim = self.dim();
        let mut p = vec![1.0 / dim as f64; dim];
        let scale = self.escape.iter().copied().fold(0.0, f64::max);
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        for _ in 0..MAX_SWEEPS / CHECK_EVERY {
            for _ in 0..CHECK_EVERY {
                for c in 0..dim {
                    if self.escape[c] > 0.0 {
                        p[c] = self.incoming[c].iter().map(|(s, r)| r * p[*s]).sum::<f64>() / self.escape[c];
                    }
                }
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= total);
            }
            // iterate until the residual stops improving (rounding floor)
            let res = self.apply(&p).iter().map(|v| v.abs()).fold(0.0, f64::max);
            if res < 0.5 * best {
                best = res;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 4 {
                    break;
                }
            }
        }
        if best <= 1e-12 * scale {
            Ok(p)
        } else {
            Err(Error::NonConvergence {
                what: "Gauss-Seidel for the SSEP stationary state",
                iterations: MAX_SWEEPS,
                residual: best,
            })
        }
    }

    /// Stationary measure of an undriven chain restricted to the sector with
    /// `particles` particles, as a full-length vector (zero outside the sector).
    pub fn sector_stationary(&self, particles: usize) -> Result<Vec<f64>> {
        let b = &self.boundary;
        if b.gamma_a() != 0.0 || b.gamma_b() != 0.0 {
            return invalid("particle number is conserved only without reservoirs");
        }
        if particles > self.n {
            return invalid(format!("{particles} particles on {} sites", self.n));
        }
        let states: Vec<usize> = (0..self.dim())
            .filter(|c| c.count_ones() as usize == particles)
            .collect();
        let k = states.len();
        let index = |c: usize| states.binary_search(&c).unwrap();
        let mut a = DMatrix::<f64>::zeros(k, k);
        for (col, &c) in states.iter().enumerate() {
            a[(col, col)] -= self.escape[c];
            for (t, r) in &self.outgoing[c] {
                a[(index(*t), col)] += r;
            }
        }
        for j in 0..k {
            a[(k - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(k);
        rhs[k - 1] = 1.0;
        let q = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("sector is not irreducible".into()))?;
        let mut p = vec![0.0; self.dim()];
        for (i, &c) in states.iter().enumerate() {
            p[c] = q[i];
        }
        Ok(p)
    }

    /// ⟨Π_{i ∈ sites} n_i⟩ under `p`.
    pub fn subset_moment(&self, p: &[f64], sites: &[usize]) -> f64 {
        let mask = sites.iter().fold(0usize, |m, i| m | (1 << i));
        p.iter()
            .enumerate()
            .filter(|(c, _)| c & mask == mask)
            .map(|(_, v)| v)
            .sum()
    }

    pub fn density(&self, p: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.subset_moment(p, &[i])).collect()
    }

    /// ⟨n_i n_j⟩ − ⟨n_i⟩⟨n_j⟩.
    pub fn connected_correlation(&self, p: &[f64], i: usize, j: usize) -> f64 {
        if i == j {
            let m = self.subset_moment(p, &[i]);
            return m - m * m;
        }
        self.subset_moment(p, &[i, j]) - self.subset_moment(p, &[i]) * self.subset_moment(p, &[j])
    }
}

/// Exact stationary ⟨n_i n_j⟩ᶜ of the driven chain for sites 1 ≤ i < j ≤ N:
/// −(n_a − n_b)²(i − 1 + a)(N − j + b)/(L²(L − 1)) with a = 1/(α₁+β₁),
/// b = 1/(α_N+β_N), L = N − 1 + a + b.
pub fn connected_correlation_exact(boundary: &BoundaryParams, n: usize, i: usize, j: usize) -> Result<f64> {
    boundary.validate()?;
    if !(1 <= i && i < j && j <= n) {
        return invalid(format!("need 1 <= i < j <= N, got i = {i}, j = {j}, N = {n}"));
    }
    if boundary.gamma_a() == 0.0 || boundary.gamma_b() == 0.0 {
        return invalid("the closed form needs both reservoirs");
    }
    let (a, b) = (1.0 / boundary.gamma_a(), 1.0 / boundary.gamma_b());
    let l = n as f64 - 1.0 + a + b;
    let d = boundary.n_a() - boundary.n_b();
    Ok(-d * d * (i as f64 - 1.0 + a) * (n as f64 - j as f64 + b) / (l * l * (l - 1.0)))
}

/// Continuum connected correlation −(n_a − n_b)² x(1 − y)/N for x < y.
pub fn connected_density_continuum(n_a: f64, n_b: f64, n: usize, x: f64, y: f64) -> f64 {
    let (x, y) = (x.min(y), x.max(y));
    -(n_a - n_b).powi(2) * x * (1.0 - y) / n as f64
}

/// ω(λ) = (e^λ−1)n_a + (e^{−λ}−1)n_b + (e^λ−1)(e^{−λ}−1)n_a n_b.
pub fn omega(lambda: f64, n_a: f64, n_b: f64) -> f64 {
    let (u, v) = (lambda.exp_m1(), (-lambda).exp_m1());
    u * n_a + v * n_b + u * v * n_a * n_b
}

fn check_densities(n_a: f64, n_b: f64) -> Result<()> {
    if !((0.0..=1.0).contains(&n_a) && (0.0..=1.0).contains(&n_b)) {
        return invalid(format!("reservoir densities ({n_a}, {n_b}) must lie in [0, 1]"));
    }
    Ok(())
}

fn domain_error(lambda: f64, w: f64) -> Error {
    Error::InvalidArgument(format!("ω({lambda}) = {w} must exceed −1"))
}

/// Current CGF of the open chain, μ = [log(√(1+ω) + √ω)]²/N.
///
/// With principal branches this is asinh²(√ω)/N for ω ≥ 0 and −arcsin²(√−ω)/N
/// for −1 < ω < 0.
pub fn mu_ssep(lambda: f64, n_a: f64, n_b: f64, n: usize) -> Result<f64> {
    check_densities(n_a, n_b)?;
    if n == 0 {
        return invalid("N must be positive");
    }
    let w = omega(lambda, n_a, n_b);
    if !(w > -1.0) {
        return Err(domain_error(lambda, w));
    }
    let v = if w >= 0.0 {
        w.sqrt().asinh().powi(2)
    } else {
        -(-w).sqrt().asin().powi(2)
    };
    Ok(v / n as f64)
}

/// Current CGF on the infinite line from a domain wall, (1/π)∫ log(1 + ωe^{−k²}) dk.
pub fn mu_ssep_infinite(lambda: f64, n_a: f64, n_b: f64) -> Result<f64> {
    check_densities(n_a, n_b)?;
    let w = omega(lambda, n_a, n_b);
    if !(w > -1.0) {
        return Err(domain_error(lambda, w));
    }
    if w == 0.0 {
        return Ok(0.0);
    }
    // |log(1 + ωe^{−k²})| ≈ |ω|e^{−k²} < 1e-14 beyond K
    let k_max = (w.abs() / 1e-14).ln().max(1.0).sqrt();
    let (half, _) = adaptive_gauss_legendre(|k| (w * (-k * k).exp()).ln_1p(), 0.0, k_max, 1e-15);
    Ok(2.0 * half / std::f64::consts::PI)
}

/// Counting-field shift of the fluctuation relation: μ(λ) = μ(−λ − A) with
/// A = log(n_a/(1−n_a)) − log(n_b/(1−n_b)).
pub fn gallavotti_cohen_partner(lambda: f64, n_a: f64, n_b: f64) -> Result<f64> {
    if !(n_a > 0.0 && n_a < 1.0 && n_b > 0.0 && n_b < 1.0) {
        return invalid("the fluctuation relation needs reservoir densities in (0, 1)");
    }
    let logit = |n: f64| (n / (1.0 - n)).ln();
    Ok(-lambda - logit(n_a) + logit(n_b))
}

/// Derivatives 1..=`max_order` (≤ 4) at 0 of a generating function, by central
/// differences with step h, h/2, h/4 and two Richardson levels (error O(h⁶)).
pub fn cumulants_from_cgf(f: impl Fn(f64) -> Result<f64>, max_order: usize, h: f64) -> Result<Vec<f64>> {
    if !(1..=4).contains(&max_order) {
        return invalid("finite-difference cumulants are implemented up to order 4");
    }
    if !(h > 0.0 && h.is_finite()) {
        return invalid("step must be positive");
    }
    let stencil = |h: f64| -> Result<[f64; 4]> {
        let (f0, p1, m1, p2, m2) = (f(0.0)?, f(h)?, f(-h)?, f(2.0 * h)?, f(-2.0 * h)?);
        Ok([
            (p1 - m1) / (2.0 * h),
            (p1 - 2.0 * f0 + m1) / (h * h),
            (p2 - 2.0 * p1 + 2.0 * m1 - m2) / (2.0 * h.powi(3)),
            (p2 - 4.0 * p1 + 6.0 * f0 - 4.0 * m1 + m2) / h.powi(4),
        ])
    };
    let (d1, d2, d4) = (stencil(h)?, stencil(h / 2.0)?, stencil(h / 4.0)?);
    Ok((0..max_order)
        .map(|k| {
            let r1 = (4.0 * d2[k] - d1[k]) / 3.0;
            let r2 = (4.0 * d4[k] - d2[k]) / 3.0;
            (16.0 * r2 - r1) / 15.0
        })
        .collect())
}

/// Default finite-difference step for cumulant extraction.
pub const CUMULANT_STEP: f64 = 1e-2;

/// Largest order returned by [`ssep_cumulants`].
pub const MAX_CONTOUR_ORDER: usize = 12;
const CONTOUR_POINTS: usize = 128;

fn omega_complex(lambda: C64, n_a: f64, n_b: f64) -> C64 {
    let (u, v) = (lambda.exp() - 1.0, (-lambda).exp() - 1.0);
    u * n_a + v * n_b + u * v * n_a * n_b
}

/// Scaled current cumulants ⟨Q_t^k⟩ᶜ/t of the open chain, k = 1..=max_order.
///
/// Taylor coefficients of Nμ come from the trapezoid rule on a circle |λ| = r
/// chosen so that |ω| ≤ 0.8 on it; asinh²(√ω) is even in √ω, hence analytic for
/// |ω| < 1 with principal branches.
pub fn ssep_cumulants(n_a: f64, n_b: f64, n: usize, max_order: usize) -> Result<Vec<f64>> {
    check_densities(n_a, n_b)?;
    if n == 0 {
        return invalid("N must be positive");
    }
    if !(1..=MAX_CONTOUR_ORDER).contains(&max_order) {
        return invalid(format!("cumulant order must be in 1..={MAX_CONTOUR_ORDER}"));
    }
    let nodes = |r: f64| {
        (0..CONTOUR_POINTS).map(move |j| C64::from_polar(r, 2.0 * PI * j as f64 / CONTOUR_POINTS as f64))
    };
    let mut r: f64 = 1.0;
    while nodes(r).any(|l| omega_complex(l, n_a, n_b).norm() > 0.8) {
        r *= 0.9;
    }
    let values: Vec<C64> = nodes(r).map(|l| omega_complex(l, n_a, n_b).sqrt().asinh().powi(2)).collect();
    let mut factorial = 1.0;
    Ok((1..=max_order)
        .map(|k| {
            factorial *= k as f64;
            let coeff: C64 = nodes(1.0)
                .zip(&values)
                .map(|(e, v)| v * e.powi(-(k as i32)))
                .sum::<C64>()
                / CONTOUR_POINTS as f64;
            factorial * coeff.re / r.powi(k as i32) / n as f64
        })
        .collect())
}

/// Scaled cumulants ⟨Q_t^k⟩ᶜ/√t on the infinite line.
pub fn ssep_cumulants_infinite(n_a: f64, n_b: f64, max_order: usize) -> Result<Vec<f64>> {
    cumulants_from_cgf(|l| mu_ssep_infinite(l, n_a, n_b), max_order, CUMULANT_STEP)
}

/// One row of a cumulant table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulantRow {
    pub order: usize,
    pub value: f64,
    /// N·value for the open chain, the value itself on the infinite line.
    pub scaled: f64,
}

/// One row of a μ(λ) curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuRow {
    pub lambda: f64,
    pub omega: f64,
    pub mu: f64,
    pub mu_infinite: f64,
}

/// μ and μ_∞ on a λ grid; points outside the domain are skipped.
pub fn mu_curve(lambdas: &[f64], n_a: f64, n_b: f64, n: usize) -> Result<Vec<MuRow>> {
    check_densities(n_a, n_b)?;
    let mut rows = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let w = omega(l, n_a, n_b);
        if !(w > -1.0) {
            continue;
        }
        rows.push(MuRow {
            lambda: l,
            omega: w,
            mu: mu_ssep(l, n_a, n_b, n)?,
            mu_infinite: mu_ssep_infinite(l, n_a, n_b)?,
        });
    }
    Ok(rows)
}
