//! Steady-state loop cumulants of open QSSEP and the dynamics of the second one.
//!
//! Internally everything is normalized to reservoir densities n_a = 0, n_b = 1,
//! where the first cumulant is g₁(x) = x and the cumulants are the Möbius
//! inversion of the minimum function over non-crossing partitions.

use crate::error::{invalid, Error, Result};
use crate::nc_combinatorics::nc_table;
use crate::quad::gauss_legendre_on;
use serde::Serialize;

pub const MAX_STEADY_ORDER: usize = 8;

/// φₙ(x⃗) = min(x⃗).
pub fn phi_min(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::INFINITY, f64::min)
}

/// gₙ(x⃗) = Σ_{π ∈ NC(n)} μ(π, 1ₙ) Π_{p ∈ π} min(x⃗_p), canonical densities.
pub fn g_steady(n: usize, xs: &[f64]) -> Result<f64> {
    if !(1..=MAX_STEADY_ORDER).contains(&n) {
        return invalid(format!("loop cumulant order must be in 1..={MAX_STEADY_ORDER}, got {n}"));
    }
    if xs.len() != n {
        return invalid(format!("g_{n} needs {n} arguments, got {}", xs.len()));
    }
    let table = nc_table(n)?;
    Ok(table
        .entries
        .iter()
        .map(|e| {
            let prod: f64 = e.masks.iter().map(|&m| block_min(xs, m)).product();
            e.mobius as f64 * prod
        })
        .sum())
}

#[inline]
fn block_min(xs: &[f64], mask: u32) -> f64 {
    let mut m = f64::INFINITY;
    let mut bits = mask;
    while bits != 0 {
        let i = bits.trailing_zeros() as usize;
        m = m.min(xs[i]);
        bits &= bits - 1;
    }
    m
}

/// Sum of `f` over the q distinct cyclic rotations of the argument list.
fn cyclic_sum(xs: &[f64], q: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let n = xs.len();
    let mut total = 0.0;
    let mut rot = xs.to_vec();
    for _ in 0..q {
        total += f(&rot);
        rot.rotate_left(1);
    }
    debug_assert!(q == n || n % q == 0);
    total
}

/// Explicit expressions for g₁…g₄ (canonical densities).
pub fn g_closed_form(n: usize, x: &[f64]) -> Result<f64> {
    if x.len() != n {
        return invalid(format!("g_{n} needs {n} arguments"));
    }
    let min = |v: &[f64]| phi_min(v);
    Ok(match n {
        1 => x[0],
        2 => min(x) - x[0] * x[1],
        3 => min(x) - cyclic_sum(x, 3, |r| r[0] * min(&r[1..])) + 2.0 * x[0] * x[1] * x[2],
        4 => {
            min(x) - cyclic_sum(x, 4, |r| r[0] * min(&r[1..]))
                - cyclic_sum(x, 2, |r| min(&r[0..2]) * min(&r[2..4]))
                + cyclic_sum(x, 4, |r| 2.0 * r[0] * r[1] * min(&r[2..4]))
                + cyclic_sum(x, 2, |r| r[0] * r[2] * min(&[r[1], r[3]]))
                - 5.0 * x[0] * x[1] * x[2] * x[3]
        }
        _ => return invalid(format!("closed form available for n <= 4, got {n}")),
    })
}

/// Loop cumulants for arbitrary reservoir densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopCumulantFn {
    pub n_a: f64,
    pub n_b: f64,
}

impl LoopCumulantFn {
    pub fn canonical() -> Self {
        Self { n_a: 0.0, n_b: 1.0 }
    }

    pub fn delta(&self) -> f64 {
        self.n_b - self.n_a
    }

    /// g₁ = n_a + (n_b − n_a)x, gₙ = (n_b − n_a)ⁿ gₙ^canonical for n ≥ 2.
    pub fn eval(&self, n: usize, xs: &[f64]) -> Result<f64> {
        let g = g_steady(n, xs)?;
        Ok(if n == 1 {
            self.n_a + self.delta() * g
        } else {
            self.delta().powi(n as i32) * g
        })
    }

    /// Eigenvalue map from canonical to general reservoir densities.
    pub fn map_eigenvalue(&self, lambda: f64) -> f64 {
        self.n_a + self.delta() * lambda
    }
}

/// Loop cumulants for reservoir densities `n_a`, `n_b` in [0, 1].
pub fn rescale_reservoirs(n_a: f64, n_b: f64) -> Result<LoopCumulantFn> {
    for (name, v) in [("n_a", n_a), ("n_b", n_b)] {
        if !(0.0..=1.0).contains(&v) {
            return invalid(format!("{name} = {v} outside [0, 1]"));
        }
    }
    Ok(LoopCumulantFn { n_a, n_b })
}

/// Snapshot of g₂(x, y; t) on the (M+1)×(M+1) grid x_i = i/M.
#[derive(Debug, Clone, Serialize)]
pub struct G2Field {
    pub t: f64,
    pub m: usize,
    pub dx: f64,
    pub g1: Vec<f64>,
    pub values: Vec<f64>,
}

impl G2Field {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.m + 1) + j]
    }

    /// Bilinear interpolation at (x, y) ∈ [0, 1]².
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let m = self.m as f64;
        let fx = (x * m).clamp(0.0, m);
        let fy = (y * m).clamp(0.0, m);
        let i = (fx.floor() as usize).min(self.m - 1);
        let j = (fy.floor() as usize).min(self.m - 1);
        let (sx, sy) = (fx - i as f64, fy - j as f64);
        (1.0 - sx) * (1.0 - sy) * self.at(i, j)
            + sx * (1.0 - sy) * self.at(i + 1, j)
            + (1.0 - sx) * sy * self.at(i, j + 1)
            + sx * sy * self.at(i + 1, j + 1)
    }

    pub fn max_abs_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..=self.m {
            for j in 0..=self.m {
                worst = worst.max((self.at(i, j) - self.at(j, i)).abs());
            }
        }
        worst
    }
}

/// Parameters of the second-cumulant evolution.
#[derive(Debug, Clone)]
pub struct G2Problem {
    pub n_a: f64,
    pub n_b: f64,
    /// Interior grid size; spacing 1/m.
    pub m: usize,
    /// Initial density profile g₁(x, 0).
    pub g1_init: fn(f64) -> f64,
    /// Initial g₂(x, y, 0); `None` means zero.
    pub g2_init: Option<fn(f64, f64) -> f64>,
    /// Time step; `None` picks dx²/5.
    pub dt: Option<f64>,
}

/// Domain-wall profile Θ(1/2 − x).
pub fn domain_wall(x: f64) -> f64 {
    if x < 0.5 {
        1.0
    } else if x > 0.5 {
        0.0
    } else {
        0.5
    }
}

/// Forward-time centered-space solution of
/// (∂t − Δ)g₂ = 2δ(x − y)∂ₓg₁∂ᵧg₁ with ∂t g₁ = ∂ₓ²g₁,
/// Dirichlet data g₂ = 0, g₁(0) = n_a, g₁(1) = n_b. Returns snapshots at `times`.
pub fn solve_g2_dynamics(problem: &G2Problem, times: &[f64]) -> Result<Vec<G2Field>> {
    let m = problem.m;
    if m < 50 {
        return invalid(format!("grid too coarse: m = {m} < 50"));
    }
    let dx = 1.0 / m as f64;
    let dt = problem.dt.unwrap_or(dx * dx / 5.0);
    if dt > dx * dx / 4.0 {
        return invalid(format!(
            "explicit scheme unstable: dt = {dt:.3e} > dx²/4 = {:.3e}",
            dx * dx / 4.0
        ));
    }
    let mut order: Vec<f64> = times.to_vec();
    if order.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return invalid("snapshot times must be finite and nonnegative");
    }
    order.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let side = m + 1;
    let mut g1: Vec<f64> = (0..side).map(|i| (problem.g1_init)(i as f64 * dx)).collect();
    g1[0] = problem.n_a;
    g1[m] = problem.n_b;
    let mut g2 = vec![0.0; side * side];
    if let Some(f) = problem.g2_init {
        for i in 1..m {
            for j in 1..m {
                g2[i * side + j] = f(i as f64 * dx, j as f64 * dx);
            }
        }
    }
    let mut g1n = g1.clone();
    let mut g2n = g2.clone();
    let r = dt / (dx * dx);
    let mut t = 0.0;
    let mut out = Vec::with_capacity(order.len());
    let mut next = 0;
    while next < order.len() {
        if t >= order[next] - 0.5 * dt {
            out.push(G2Field {
                t,
                m,
                dx,
                g1: g1.clone(),
                values: g2.clone(),
            });
            next += 1;
            continue;
        }
        for i in 1..m {
            g1n[i] = g1[i] + r * (g1[i + 1] - 2.0 * g1[i] + g1[i - 1]);
        }
        for i in 1..m {
            let row = i * side;
            for j in 1..m {
                let k = row + j;
                let lap = g2[k + side] + g2[k - side] + g2[k + 1] + g2[k - 1] - 4.0 * g2[k];
                g2n[k] = g2[k] + r * lap;
            }
            let d = (g1[i + 1] - g1[i - 1]) / (2.0 * dx);
            g2n[row + i] += dt * 2.0 * d * d / dx;
        }
        std::mem::swap(&mut g1, &mut g1n);
        std::mem::swap(&mut g2, &mut g2n);
        t += dt;
        if !g2[side * (m / 2) + m / 2].is_finite() {
            return Err(Error::InvariantViolation("g2 evolution blew up".into()));
        }
    }
    Ok(out)
}

/// Truncated cumulant generating functional
/// w[Q] = Σ_{n ≤ n_max} (1/n) ∫ gₙ(x⃗) q(x₁,xₙ) q(xₙ,x_{n−1}) ⋯ q(x₂,x₁) dx⃗.
#[derive(Debug, Clone, Serialize)]
pub struct WFunctional {
    pub value: f64,
    pub terms: Vec<f64>,
    /// Magnitude of the highest retained order, used as the truncation estimate.
    pub truncation_estimate: f64,
}

/// Tensor-product Gauss–Legendre evaluation of the truncated functional with
/// `points` nodes per dimension.
pub fn w_functional(
    g: &dyn Fn(usize, &[f64]) -> f64,
    q: &dyn Fn(f64, f64) -> f64,
    n_max: usize,
    points: usize,
) -> Result<WFunctional> {
    if !(1..=6).contains(&n_max) {
        return invalid(format!("w functional truncation must be 1..=6, got {n_max}"));
    }
    let budget = 50_000_000usize;
    if points.checked_pow(n_max as u32).is_none_or(|c| c > budget) {
        return Err(Error::Budget(format!(
            "{points}^{n_max} quadrature nodes exceed the budget of {budget}"
        )));
    }
    let (x, w) = gauss_legendre_on(points, 0.0, 1.0);
    let mut terms = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut idx = vec![0usize; n];
        let mut xs = vec![0.0; n];
        let mut total = 0.0;
        loop {
            let mut weight = 1.0;
            for k in 0..n {
                xs[k] = x[idx[k]];
                weight *= w[idx[k]];
            }
            let mut kern = q(xs[0], xs[n - 1]);
            for k in (1..n).rev() {
                kern *= q(xs[k], xs[k - 1]);
            }
            if n == 1 {
                kern = q(xs[0], xs[0]);
            }
            total += weight * kern * g(n, &xs);
            // odometer
            let mut k = 0;
            loop {
                if k == n {
                    break;
                }
                idx[k] += 1;
                if idx[k] < points {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        terms.push(total / n as f64);
    }
    Ok(WFunctional {
        value: terms.iter().sum(),
        truncation_estimate: terms.last().map(|t| t.abs()).unwrap_or(0.0),
        terms,
    })
}
