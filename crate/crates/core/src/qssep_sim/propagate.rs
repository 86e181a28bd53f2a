//! Noise sampling and the one-step update G → e^{i dh} G e^{−i dh} + boundary.

use super::matrix::CoherenceMatrix;
use crate::error::{invalid, Result};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Injection/extraction rates at the two ends of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub alpha_1: f64,
    pub beta_1: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
}

impl BoundaryParams {
    pub fn new(alpha_1: f64, beta_1: f64, alpha_n: f64, beta_n: f64) -> Result<Self> {
        let b = Self {
            alpha_1,
            beta_1,
            alpha_n,
            beta_n,
        };
        b.validate()?;
        Ok(b)
    }

    /// Unit total rate on each side: α = n, β = 1 − n.
    pub fn from_densities(n_a: f64, n_b: f64) -> Result<Self> {
        Self::new(n_a, 1.0 - n_a, n_b, 1.0 - n_b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_1", self.alpha_1),
            ("beta_1", self.beta_1),
            ("alpha_N", self.alpha_n),
            ("beta_N", self.beta_n),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return invalid(format!("boundary rate {name} = {v} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn gamma_a(&self) -> f64 {
        self.alpha_1 + self.beta_1
    }

    pub fn gamma_b(&self) -> f64 {
        self.alpha_n + self.beta_n
    }

    /// n_a = α₁/(α₁+β₁); zero when the left end is undriven.
    pub fn n_a(&self) -> f64 {
        if self.gamma_a() > 0.0 {
            self.alpha_1 / self.gamma_a()
        } else {
            0.0
        }
    }

    pub fn n_b(&self) -> f64 {
        if self.gamma_b() > 0.0 {
            self.alpha_n / self.gamma_b()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Open,
    Closed,
}

/// How e^{i dh} is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Propagator {
    /// Exponential of the full tridiagonal increment, Taylor-summed to roundoff.
    Exact,
    /// Product of 2×2 bond exponentials, even bonds then odd bonds, with the
    /// order reversed on every other step.
    BondSplit,
}

/// Tridiagonal Hermitian increment: `links[j]` sits at (j, j+1), the last one at
/// (N−1, 0) in closed mode.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseIncrement {
    pub n_sites: usize,
    pub dt: f64,
    pub links: Vec<C64>,
    pub periodic: bool,
}

impl NoiseIncrement {
    pub fn bond(&self, k: usize) -> (usize, usize) {
        (k, (k + 1) % self.n_sites)
    }

    /// Dense N×N form of dh.
    pub fn to_dense(&self) -> nalgebra::DMatrix<C64> {
        let n = self.n_sites;
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (k, &w) in self.links.iter().enumerate() {
            let (i, j) = self.bond(k);
            m[(i, j)] += w;
            m[(j, i)] += w.conj();
        }
        m
    }
}

/// dW = (ξ₁ + iξ₂)√(dt/2) on every link.
pub fn sample_noise_increment<R: Rng + ?Sized>(
    n_sites: usize,
    dt: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<NoiseIncrement> {
    if n_sites < 2 {
        return invalid(format!("need at least 2 sites, got {n_sites}"));
    }
    if mode == Mode::Closed && n_sites < 3 {
        return invalid("closed chain needs at least 3 sites");
    }
    if !(dt.is_finite() && dt > 0.0) {
        return invalid(format!("dt = {dt} must be positive"));
    }
    let mut links = Vec::with_capacity(n_sites);
    fill_noise(n_sites, dt, mode, rng, &mut links);
    Ok(NoiseIncrement {
        n_sites,
        dt,
        links,
        periodic: mode == Mode::Closed,
    })
}

fn fill_noise<R: Rng + ?Sized>(n: usize, dt: f64, mode: Mode, rng: &mut R, out: &mut Vec<C64>) {
    out.clear();
    let count = if mode == Mode::Closed { n } else { n - 1 };
    let s = (0.5 * dt).sqrt();
    for _ in 0..count {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        out.push(C64::new(a * s, b * s));
    }
}

/// exp(i·[[0, w], [w̄, 0]]).
pub fn bond_unitary(w: C64) -> [C64; 4] {
    let r = w.norm();
    let c = r.cos();
    let (sr, phase) = if r > 0.0 {
        (r.sin(), w / r)
    } else {
        (0.0, C64::new(1.0, 0.0))
    };
    let i = C64::new(0.0, 1.0);
    [
        C64::new(c, 0.0),
        i * sr * phase,
        i * sr * phase.conj(),
        C64::new(c, 0.0),
    ]
}

/// Reusable work space for a trajectory.
pub struct Stepper {
    n: usize,
    buf: CoherenceMatrix,
    u_rows: Vec<Vec<(usize, C64)>>,
    dense: Vec<C64>,
    term: Vec<C64>,
    next: Vec<C64>,
    reversed: bool,
}

const TAYLOR_CUTOFF: f64 = 1e-18;

impl Stepper {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            buf: CoherenceMatrix::zeros(n),
            u_rows: vec![Vec::new(); n],
            dense: vec![C64::new(0.0, 0.0); n * n],
            term: vec![C64::new(0.0, 0.0); n * n],
            next: vec![C64::new(0.0, 0.0); n * n],
            reversed: false,
        }
    }

    /// G ← e^{i dh} G e^{−i dh}, computed as U (U G)†.
    pub fn conjugate(&mut self, g: &mut CoherenceMatrix, dh: &NoiseIncrement, propagator: Propagator) {
        match propagator {
            Propagator::BondSplit => {
                apply_split_layers(g, dh, self.reversed);
                g.adjoint_into(&mut self.buf);
                apply_split_layers(&mut self.buf, dh, self.reversed);
                self.reversed = !self.reversed;
            }
            Propagator::Exact => {
                self.build_exact(dh);
                apply_rows(&self.u_rows, g, &mut self.buf);
                self.buf.adjoint_into(g);
                apply_rows(&self.u_rows, g, &mut self.buf);
            }
        }
        std::mem::swap(g, &mut self.buf);
        g.hermitize();
    }

    /// Taylor series of e^{i dh} with dh tridiagonal (periodic corner allowed).
    fn build_exact(&mut self, dh: &NoiseIncrement) {
        let n = self.n;
        let zero = C64::new(0.0, 0.0);
        let i_unit = C64::new(0.0, 1.0);
        self.dense.fill(zero);
        self.term.fill(zero);
        self.next.fill(zero);
        for d in 0..n {
            self.dense[d * n + d] = C64::new(1.0, 0.0);
            self.term[d * n + d] = C64::new(1.0, 0.0);
        }
        // (i dh) as adjacency lists
        let mut adj: Vec<Vec<(usize, C64)>> = vec![Vec::new(); n];
        for (k, &w) in dh.links.iter().enumerate() {
            let (a, b) = dh.bond(k);
            adj[a].push((b, i_unit * w));
            adj[b].push((a, i_unit * w.conj()));
        }
        // the order-k term only reaches cyclic distance k from the diagonal
        for order in 1..200usize {
            let reach = order.min(n / 2);
            let full = 2 * reach + 1 >= n;
            let mut big: f64 = 0.0;
            let inv = 1.0 / order as f64;
            for r in 0..n {
                for d in 0..(if full { n } else { 2 * reach + 1 }) {
                    let t = if full { d } else { (r + n + d - reach) % n };
                    let mut acc = zero;
                    for &(c, h) in &adj[r] {
                        acc += h * self.term[c * n + t];
                    }
                    acc *= inv;
                    self.next[r * n + t] = acc;
                    self.dense[r * n + t] += acc;
                    big = big.max(acc.norm_sqr());
                }
            }
            std::mem::swap(&mut self.term, &mut self.next);
            if big.sqrt() < TAYLOR_CUTOFF {
                break;
            }
        }
        for r in 0..n {
            let row = &mut self.u_rows[r];
            row.clear();
            for c in 0..n {
                let u = self.dense[r * n + c];
                if u.norm_sqr() > TAYLOR_CUTOFF * TAYLOR_CUTOFF {
                    row.push((c, u));
                }
            }
        }
    }
}

/// out ← U·g using the sparse rows of U.
fn apply_rows(u_rows: &[Vec<(usize, C64)>], g: &CoherenceMatrix, out: &mut CoherenceMatrix) {
    out.fill_zero();
    for (i, row) in u_rows.iter().enumerate() {
        let (out_re, out_im) = out.row_mut(i);
        for &(j, u) in row {
            g.axpy_row(j, u, out_re, out_im);
        }
    }
}

/// Row layers of the split unitary: even bonds, odd bonds and, for an odd
/// closed ring, the wrap-around bond. `reversed` applies them in the opposite
/// order; alternating the two orders removes the even/odd staggering of the
/// mean profile at first order in dt.
fn apply_split_layers(g: &mut CoherenceMatrix, dh: &NoiseIncrement, reversed: bool) {
    let n = dh.n_sites;
    let m = dh.links.len();
    let wrap_alone = dh.periodic && n % 2 == 1;
    let mut layers: Vec<Vec<usize>> = (0..2)
        .map(|parity| {
            (parity..m)
                .step_by(2)
                .filter(|&k| !(wrap_alone && k == m - 1))
                .collect()
        })
        .collect();
    if wrap_alone {
        layers.push(vec![m - 1]);
    }
    if reversed {
        layers.reverse();
    }
    for layer in &layers {
        for &k in layer {
            let (a, b) = dh.bond(k);
            g.mix_rows(a, b, bond_unitary(dh.links[k]));
        }
    }
}

/// Exact flow of the boundary Lindbladian over `dt`.
pub fn apply_boundary(g: &mut CoherenceMatrix, boundary: &BoundaryParams, dt: f64) {
    let n = g.n();
    for (p, gamma, target) in [
        (0, boundary.gamma_a(), boundary.n_a()),
        (n - 1, boundary.gamma_b(), boundary.n_b()),
    ] {
        if gamma > 0.0 {
            let d = (-0.5 * gamma * dt).exp();
            g.scale_row_and_column(p, d);
            g.add_to_diagonal(p, (1.0 - d * d) * target);
        }
    }
}

/// One full step: conjugation by e^{i dh}, then the boundary flow in open mode.
pub fn step(
    g: &mut CoherenceMatrix,
    dh: &NoiseIncrement,
    boundary: &BoundaryParams,
    mode: Mode,
    propagator: Propagator,
    stepper: &mut Stepper,
) -> Result<()> {
    if g.n() != dh.n_sites {
        return invalid("noise increment size does not match the coherence matrix");
    }
    if dh.periodic != (mode == Mode::Closed) {
        return invalid("noise increment was sampled for the other boundary mode");
    }
    stepper.conjugate(g, dh, propagator);
    if mode == Mode::Open {
        apply_boundary(g, boundary, dh.dt);
    }
    Ok(())
}

pub(crate) fn refill_noise<R: Rng + ?Sized>(dh: &mut NoiseIncrement, rng: &mut R) {
    let mode = if dh.periodic { Mode::Closed } else { Mode::Open };
    let mut links = std::mem::take(&mut dh.links);
    fill_noise(dh.n_sites, dh.dt, mode, rng, &mut links);
    dh.links = links;
}
