//! Closed-form spectra: steady QSSEP subblocks and the semicircle.
//!
//! For I = [c, 1] (n_a = 0, n_b = 1) the density is
//! θ / (πλ(1−λ)(θ² + log²(r e^{1/c}))) on [z_l(c), 1], where (r, θ) solve
//! 1 + log r = rξ cos θ, θ = rξ sin θ with ξ = e^{1/c}(1−c)/c · λ/(1−λ).
//! Eliminating r = exp(θ cot θ − 1) leaves the scalar equation
//! log ξ = log(θ/sin θ) + 1 − θ cot θ, increasing from 0 to ∞ on (0, π), so
//! the branch θ ∈ (0, π) is unique and exists iff ξ > 1, i.e. λ > z_l(c).
//! Integrals against the measure are done in θ, where the density times the
//! Jacobian is smooth up to both ends.

use super::SpectralMeasure;
use crate::error::{invalid, Error, Result};
use crate::quad::gauss_legendre_on;
use serde::Serialize;
use std::f64::consts::PI;

/// Gauss–Legendre nodes used for integrals against QSSEP block measures.
const THETA_NODES: usize = 200;

/// Subintervals of [0, 1] with a closed-form steady spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum QssepBlock {
    /// [c, 1]
    Right(f64),
    /// [0, c]
    Left(f64),
    /// [0, 1]
    Full,
}

impl QssepBlock {
    pub fn length(&self) -> f64 {
        match self {
            Self::Right(c) => 1.0 - c,
            Self::Left(c) => *c,
            Self::Full => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Right(c) | Self::Left(c) if !(*c > 0.0 && *c < 1.0) => {
                invalid(format!("cut c = {c} must lie in (0, 1)"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaSolution {
    pub theta: f64,
    pub r: f64,
    pub log_xi: f64,
}

/// Left edge z_l(c) = c/(c + (1−c)e^{1/c}) of σ_{[c,1]}.
pub fn z_left(c: f64) -> f64 {
    c / (c + (1.0 - c) * (1.0 / c).exp())
}

/// θ·cot θ, accurate near 0.
fn theta_cot(t: f64) -> f64 {
    if t < 1e-4 {
        1.0 - t * t / 3.0 - t.powi(4) / 45.0
    } else {
        t / t.tan()
    }
}

/// log ξ(θ) and its derivative.
fn log_xi_of_theta(t: f64) -> (f64, f64) {
    if t < 1e-4 {
        let t2 = t * t;
        (0.5 * t2 + t2 * t2 / 36.0, t + t2 * t / 9.0)
    } else {
        let s = t.sin();
        let f = (t / s).ln() + 1.0 - theta_cot(t);
        let df = 1.0 / t - 2.0 / t.tan() + t / (s * s);
        (f, df)
    }
}

/// Solves log ξ(θ) = `log_xi` on (0, π); `None` when log ξ ≤ 0 (outside the support).
pub fn qssep_theta(log_xi: f64) -> Result<Option<ThetaSolution>> {
    if log_xi.is_nan() {
        return invalid("log ξ is NaN");
    }
    if log_xi <= 0.0 {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, PI);
    let mut t = if log_xi < 1.0 {
        (2.0 * log_xi).sqrt().min(2.0)
    } else {
        PI - PI / (log_xi + 1.0)
    };
    for _ in 0..200 {
        let (f, df) = log_xi_of_theta(t);
        let g = f - log_xi;
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        if g.abs() <= 1e-14 * log_xi.max(1.0) || hi - lo < 1e-15 {
            let r = (theta_cot(t) - 1.0).exp();
            return Ok(Some(ThetaSolution {
                theta: t,
                r,
                log_xi,
            }));
        }
        let newton = t - g / df;
        t = if newton > lo && newton < hi && df.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonConvergence {
        what: "θ equation",
        iterations: 200,
        residual: hi - lo,
    })
}

fn log_k(c: f64) -> f64 {
    c.ln() - 1.0 / c - (1.0 - c).ln()
}

/// σ_{[c,1]}(λ) for canonical reservoirs.
pub fn qssep_subblock_density(c: f64, lambda: f64) -> Result<f64> {
    QssepBlock::Right(c).validate()?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Ok(0.0);
    }
    let log_xi = lambda.ln() - (-lambda).ln_1p() - log_k(c);
    match qssep_theta(log_xi)? {
        None => Ok(0.0),
        Some(s) => {
            let l = theta_cot(s.theta) - 1.0 + 1.0 / c;
            Ok(s.theta / (PI * lambda * (1.0 - lambda) * (s.theta * s.theta + l * l)))
        }
    }
}

/// σ_{[0,1]}(λ) = 1/(λ(1−λ)(π² + log²(λ/(1−λ)))), the c → 0 limit of σ_{[c,1]}.
pub fn qssep_full_density(lambda: f64) -> f64 {
    if !(lambda > 0.0 && lambda < 1.0) {
        return 0.0;
    }
    let u = lambda.ln() - (-lambda).ln_1p();
    1.0 / (lambda * (1.0 - lambda) * (PI * PI + u * u))
}

pub fn qssep_block_density(block: QssepBlock, lambda: f64) -> Result<f64> {
    block.validate()?;
    match block {
        QssepBlock::Right(c) => qssep_subblock_density(c, lambda),
        QssepBlock::Left(c) => qssep_subblock_density(1.0 - c, 1.0 - lambda),
        QssepBlock::Full => Ok(qssep_full_density(lambda)),
    }
}

/// (λ, 1 − λ) from the logit s = log(λ/(1−λ)) without cancellation.
fn from_logit(s: f64) -> (f64, f64) {
    if s >= 0.0 {
        let e = (-s).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = s.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

// θ-parametrized quadrature for [c, 1]: nodes (λ, 1−λ) and weights of dσ.
fn right_block_rule(c: f64, theta_max: f64, nodes: usize) -> Vec<(f64, f64, f64)> {
    let (ts, ws) = gauss_legendre_on(nodes, 0.0, theta_max);
    let lk = log_k(c);
    ts.iter()
        .zip(&ws)
        .map(|(t, w)| {
            let (lx, dlx) = log_xi_of_theta(*t);
            let l = theta_cot(*t) - 1.0 + 1.0 / c;
            let dens = t / (t * t + l * l) * dlx / PI;
            let (lam, one_minus) = from_logit(lx + lk);
            (lam, one_minus, w * dens)
        })
        .collect()
}

/// ∫ f(λ, 1−λ) dσ_block(λ), with `nodes` Gauss points in the smooth parametrization.
pub fn qssep_block_expectation(
    block: QssepBlock,
    f: impl Fn(f64, f64) -> f64,
    nodes: Option<usize>,
) -> Result<f64> {
    block.validate()?;
    let n = nodes.unwrap_or(THETA_NODES);
    Ok(match block {
        QssepBlock::Right(c) => right_block_rule(c, PI, n)
            .into_iter()
            .map(|(l, m, w)| w * f(l, m))
            .sum(),
        QssepBlock::Left(c) => right_block_rule(1.0 - c, PI, n)
            .into_iter()
            .map(|(l, m, w)| w * f(m, l))
            .sum(),
        QssepBlock::Full => {
            // u = log(λ/(1−λ)) = π tan φ turns du/(π² + u²) into dφ/π
            let (ps, ws) = gauss_legendre_on(n, -0.5 * PI, 0.5 * PI);
            ps.iter()
                .zip(&ws)
                .map(|(p, w)| {
                    let (l, m) = from_logit(PI * p.tan());
                    w / PI * f(l, m)
                })
                .sum()
        }
    })
}

/// Cumulative distribution function of the block measure.
pub fn qssep_block_cdf(block: QssepBlock, lambda: f64) -> Result<f64> {
    block.validate()?;
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    if lambda >= 1.0 {
        return Ok(1.0);
    }
    match block {
        QssepBlock::Full => {
            let u = lambda.ln() - (-lambda).ln_1p();
            Ok(0.5 + (u / PI).atan() / PI)
        }
        QssepBlock::Left(c) => Ok(1.0 - qssep_block_cdf(QssepBlock::Right(1.0 - c), 1.0 - lambda)?),
        QssepBlock::Right(c) => {
            let log_xi = lambda.ln() - (-lambda).ln_1p() - log_k(c);
            match qssep_theta(log_xi)? {
                None => Ok(0.0),
                Some(s) => Ok(right_block_rule(c, s.theta, 64)
                    .iter()
                    .map(|r| r.2)
                    .sum::<f64>()
                    .min(1.0)),
            }
        }
    }
}

/// σ_{[c,1]} sampled on `lambdas`; the mass is computed in the θ variable.
pub fn qssep_subblock_spectrum(c: f64, lambdas: &[f64]) -> Result<SpectralMeasure> {
    block_spectrum(QssepBlock::Right(c), lambdas)
}

pub(crate) fn block_spectrum(block: QssepBlock, lambdas: &[f64]) -> Result<SpectralMeasure> {
    let density: Vec<f64> = lambdas
        .iter()
        .map(|l| qssep_block_density(block, *l))
        .collect::<Result<_>>()?;
    let support = match block {
        QssepBlock::Right(c) => vec![(z_left(c), 1.0)],
        QssepBlock::Left(c) => vec![(0.0, 1.0 - z_left(1.0 - c))],
        QssepBlock::Full => vec![(0.0, 1.0)],
    };
    Ok(SpectralMeasure {
        lambdas: lambdas.to_vec(),
        density,
        support,
        atoms: vec![],
        continuum_mass: qssep_block_expectation(block, |_, _| 1.0, None)?,
        min_raw_density: 0.0,
        negative_flagged: false,
    })
}

/// Semicircle density √(4s² − λ²)/(2πs²).
pub fn semicircle_density(s: f64, lambda: f64) -> f64 {
    let d = 4.0 * s * s - lambda * lambda;
    if d <= 0.0 {
        0.0
    } else {
        d.sqrt() / (2.0 * PI * s * s)
    }
}
