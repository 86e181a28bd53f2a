//! Gauss–Legendre rules and composite panel grids on sub-intervals of the real line.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Nodes and weights of an `n`-point rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|v| v * h).collect(),
    )
}

/// Adaptive Gauss–Legendre quadrature: an interval is accepted when its
/// 10-point estimate agrees with the sum over its two halves to `tol` (scaled by
/// the interval's share of [a, b]); otherwise both halves are refined. Returns
/// the integral and the accumulated error estimate.
pub fn adaptive_gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const NODES: usize = 10;
    const MAX_DEPTH: usize = 40;
    let (x, w) = gauss_legendre(NODES);
    let rule = |lo: f64, hi: f64| -> f64 {
        let (h, c) = (0.5 * (hi - lo), 0.5 * (hi + lo));
        x.iter().zip(&w).map(|(t, wt)| wt * f(c + h * t)).sum::<f64>() * h
    };
    let width = (b - a).abs();
    let mut total = 0.0;
    let mut err = 0.0;
    let mut stack = vec![(a, b, rule(a, b), 0usize)];
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (l, r) = (rule(lo, mid), rule(mid, hi));
        let diff = (l + r - whole).abs();
        let share = if width > 0.0 { (hi - lo).abs() / width } else { 1.0 };
        if diff <= tol * share || depth >= MAX_DEPTH {
            total += l + r;
            err += diff;
        } else {
            stack.push((lo, mid, l, depth + 1));
            stack.push((mid, hi, r, depth + 1));
        }
    }
    (total, err)
}

/// Composite Gauss–Legendre grid with a spectral cumulative-integration operator.
///
/// Panel edges always include the caller's breakpoints so that piecewise-smooth
/// integrands are resolved to full order.
#[derive(Debug, Clone)]
pub struct PanelGrid {
    pub lo: f64,
    pub hi: f64,
    pub order: usize,
    pub edges: Vec<f64>,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    // cum[i * order + j] = ∫_{-1}^{t_i} ℓ_j(t) dt on the reference panel
    cum: Vec<f64>,
}

impl PanelGrid {
    /// Grid on [lo, hi] with roughly `panels` panels of `order` nodes each.
    pub fn new(lo: f64, hi: f64, breaks: &[f64], panels: usize, order: usize) -> Self {
        assert!(hi > lo && order >= 2 && panels >= 1);
        let mut cuts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| *b > lo && *b < hi)
            .collect();
        cuts.push(lo);
        cuts.push(hi);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let width = (hi - lo) / panels as f64;
        let mut edges = vec![cuts[0]];
        for win in cuts.windows(2) {
            let len = win[1] - win[0];
            let k = ((len / width).round() as usize).max(1);
            for s in 1..=k {
                edges.push(win[0] + len * s as f64 / k as f64);
            }
        }
        let (t, wt) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity((edges.len() - 1) * order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for e in edges.windows(2) {
            let h = 0.5 * (e[1] - e[0]);
            let c = 0.5 * (e[1] + e[0]);
            for j in 0..order {
                nodes.push(c + h * t[j]);
                weights.push(h * wt[j]);
            }
        }
        let cum = reference_cumulative(&t);
        Self {
            lo,
            hi,
            order,
            edges,
            nodes,
            weights,
            cum,
        }
    }

    /// Unit interval grid with the given breakpoints.
    pub fn unit(breaks: &[f64], panels: usize, order: usize) -> Self {
        Self::new(0.0, 1.0, breaks, panels, order)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: &[C64]) -> C64 {
        f.iter().zip(&self.weights).map(|(v, w)| v * *w).sum()
    }

    pub fn integrate_real(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// F(x_k) = ∫_lo^{x_k} f, exact for f polynomial of degree < order on every panel.
    pub fn cumulative(&self, f: &[C64]) -> Vec<C64> {
        let p = self.order;
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        let mut offset = C64::new(0.0, 0.0);
        for (k, e) in self.edges.windows(2).enumerate() {
            let h = 0.5 * (e[1] - e[0]);
            let fp = &f[k * p..(k + 1) * p];
            for i in 0..p {
                let row = &self.cum[i * p..(i + 1) * p];
                let s: C64 = row.iter().zip(fp).map(|(c, v)| v * *c).sum();
                out[k * p + i] = offset + s * h;
            }
            let total: C64 = fp
                .iter()
                .zip(&self.weights[k * p..(k + 1) * p])
                .map(|(v, w)| v * *w)
                .sum();
            offset += total;
        }
        out
    }

    /// ∫_{x_k}^{hi} f.
    pub fn tail(&self, f: &[C64]) -> Vec<C64> {
        let total = self.integrate(f);
        self.cumulative(f).into_iter().map(|c| total - c).collect()
    }
}

// Integrals of the Lagrange basis over [-1, t_i], computed with a rule of the same
// order on each sub-interval (exact: the basis has degree p-1).
fn reference_cumulative(t: &[f64]) -> Vec<f64> {
    let p = t.len();
    let (g, gw) = gauss_legendre(p);
    let mut cum = vec![0.0; p * p];
    for i in 0..p {
        let h = 0.5 * (t[i] + 1.0);
        let c = 0.5 * (t[i] - 1.0);
        for (gk, wk) in g.iter().zip(&gw) {
            let s = c + h * gk;
            for j in 0..p {
                cum[i * p + j] += wk * h * lagrange(t, j, s);
            }
        }
    }
    cum
}

fn lagrange(t: &[f64], j: usize, s: f64) -> f64 {
    let mut v = 1.0;
    for (m, tm) in t.iter().enumerate() {
        if m != j {
            v *= (s - tm) / (t[j] - tm);
        }
    }
    v
}
