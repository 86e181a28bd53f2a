//! Spectra of M_h = h^{1/2} M h^{1/2} for structured random matrices described by
//! their local free cumulants gₙ.
//!
//! The resolvent comes from the fixed point a = h/(z − h b), b = R₀[a], solved on a
//! composite Gauss–Legendre grid; densities follow by Stieltjes inversion.
//! Independent checks: a brute-force sum over non-crossing partitions for the
//! moments, closed forms for Wigner and Haar-rotated ensembles, and the
//! transcendental equation for steady QSSEP subblocks.

mod invert;
mod oracle;
mod qssep;
mod solver;

pub use invert::{stieltjes_invert, SpectralMeasure, StieltjesOptions, DEFAULT_EPS_SCHEDULE};
pub use oracle::{moment_oracle_nc, MAX_ORACLE_ORDER};
pub use qssep::{
    qssep_block_cdf, qssep_block_density, qssep_block_expectation, qssep_full_density,
    qssep_subblock_density, qssep_subblock_spectrum, qssep_theta, semicircle_density,
    z_left, QssepBlock, ThetaSolution,
};
pub use solver::{LocalResolvent, SolverOptions, SpectralProblem};

use crate::error::{invalid, Result};
use crate::steady_state::{g_steady, MAX_STEADY_ORDER};
use num_complex::Complex64 as C64;
use std::fmt;
use std::sync::Arc;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type ComplexFn = Arc<dyn Fn(C64) -> C64 + Send + Sync>;

/// Family {gₙ} of local free cumulants.
#[derive(Clone)]
pub enum LocalFreeCumulantSpec {
    /// gₙ = κₙ independent of position: Wigner (κ₂ only) or Haar-rotated.
    ///
    /// `r_transform`, when given, is the resummed R(w) = Σ κₙ w^{n−1} and is used
    /// by the solver in place of the truncated series.
    Constant {
        kappas: Vec<f64>,
        r_transform: Option<ComplexFn>,
    },
    /// g₁ = mean, g₂(x, y) = s²(x) δ(x − y), all higher orders zero.
    DiagonalCovariance { mean: f64, variance: ScalarFn },
    /// Steady-state QSSEP loop cumulants. `max_order: None` resums all orders.
    QssepSteady {
        n_a: f64,
        n_b: f64,
        max_order: Option<usize>,
    },
}

impl fmt::Debug for LocalFreeCumulantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant {
                kappas,
                r_transform,
            } => f
                .debug_struct("Constant")
                .field("kappas", kappas)
                .field("resummed", &r_transform.is_some())
                .finish(),
            Self::DiagonalCovariance { mean, .. } => f
                .debug_struct("DiagonalCovariance")
                .field("mean", mean)
                .finish_non_exhaustive(),
            Self::QssepSteady {
                n_a,
                n_b,
                max_order,
            } => f
                .debug_struct("QssepSteady")
                .field("n_a", n_a)
                .field("n_b", n_b)
                .field("max_order", max_order)
                .finish(),
        }
    }
}

impl LocalFreeCumulantSpec {
    /// Semicircle of variance s²: g₂ = s².
    pub fn wigner(s: f64) -> Self {
        Self::Constant {
            kappas: vec![0.0, s * s],
            r_transform: None,
        }
    }

    /// Deterministic shift: g₁ = c, nothing else.
    pub fn deterministic(c: f64) -> Self {
        Self::Constant {
            kappas: vec![c],
            r_transform: None,
        }
    }

    pub fn haar(kappas: Vec<f64>, r_transform: Option<ComplexFn>) -> Self {
        Self::Constant {
            kappas,
            r_transform,
        }
    }

    pub fn inhomogeneous_wigner(variance: ScalarFn) -> Self {
        Self::DiagonalCovariance {
            mean: 0.0,
            variance,
        }
    }

    pub fn qssep(n_a: f64, n_b: f64, max_order: Option<usize>) -> Result<Self> {
        let spec = Self::QssepSteady {
            n_a,
            n_b,
            max_order,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { kappas, .. } => {
                if kappas.is_empty() || kappas.iter().any(|k| !k.is_finite()) {
                    return invalid("constant spec needs finite cumulants, at least g₁");
                }
            }
            Self::DiagonalCovariance { mean, .. } => {
                if !mean.is_finite() {
                    return invalid("mean must be finite");
                }
            }
            Self::QssepSteady {
                n_a,
                n_b,
                max_order,
            } => {
                for v in [n_a, n_b] {
                    if !(0.0..=1.0).contains(v) {
                        return invalid(format!("reservoir density {v} outside [0, 1]"));
                    }
                }
                if let Some(m) = max_order {
                    if !(1..=MAX_STEADY_ORDER).contains(m) {
                        return invalid(format!(
                            "truncation order must be in 1..={MAX_STEADY_ORDER}, got {m}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::DiagonalCovariance { .. } => "diagonal-covariance",
            Self::QssepSteady { .. } => "qssep-steady",
        }
    }

    /// Highest nonzero order kept by the solver; `None` if all orders enter.
    pub fn max_order(&self) -> Option<usize> {
        match self {
            Self::Constant {
                kappas,
                r_transform,
            } => r_transform.is_none().then_some(kappas.len()),
            Self::DiagonalCovariance { .. } => Some(2),
            Self::QssepSteady { max_order, .. } => *max_order,
        }
    }

    /// Pointwise gₙ(x⃗). Orders beyond a truncation evaluate to zero; the
    /// distributional g₂ of a diagonal covariance has no pointwise value.
    pub fn g(&self, n: usize, xs: &[f64]) -> Result<f64> {
        if n == 0 || xs.len() != n {
            return invalid(format!("g_{n} needs {n} arguments, got {}", xs.len()));
        }
        match self {
            Self::Constant { kappas, .. } => Ok(kappas.get(n - 1).copied().unwrap_or(0.0)),
            Self::DiagonalCovariance { mean, .. } => match n {
                1 => Ok(*mean),
                2 => invalid("diagonal covariance g₂ is a delta function"),
                _ => Ok(0.0),
            },
            Self::QssepSteady {
                n_a,
                n_b,
                max_order,
            } => {
                if max_order.is_some_and(|m| n > m) {
                    return Ok(0.0);
                }
                let d = n_b - n_a;
                let g = g_steady(n, xs)?;
                Ok(if n == 1 { n_a + d * g } else { d.powi(n as i32) * g })
            }
        }
    }
}

/// Piecewise-constant h on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalProfile {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl DiagonalProfile {
    /// `breaks` are interior breakpoints (strictly increasing in (0, 1));
    /// `values.len() == breaks.len() + 1`.
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breaks.len() + 1 {
            return invalid("profile needs one more value than breakpoints");
        }
        if breaks.iter().any(|b| !(*b > 0.0 && *b < 1.0))
            || breaks.windows(2).any(|w| w[1] <= w[0])
        {
            return invalid("breakpoints must increase strictly inside (0, 1)");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("profile values must be finite");
        }
        Ok(Self { breaks, values })
    }

    pub fn constant(v: f64) -> Self {
        Self {
            breaks: vec![],
            values: vec![v],
        }
    }

    /// 1 on [lo, hi], 0 elsewhere.
    pub fn indicator(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return invalid(format!("interval [{lo}, {hi}] not inside [0, 1]"));
        }
        let mut breaks = vec![];
        let mut values = vec![];
        if lo > 0.0 {
            breaks.push(lo);
            values.push(0.0);
        }
        values.push(1.0);
        if hi < 1.0 {
            breaks.push(hi);
            values.push(0.0);
        }
        Self::new(breaks, values)
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.breaks.partition_point(|b| *b <= x);
        self.values[k]
    }

    /// (lo, hi, value) for every piece.
    pub fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut edges = vec![0.0];
        edges.extend(&self.breaks);
        edges.push(1.0);
        edges
            .windows(2)
            .zip(&self.values)
            .map(|(e, v)| (e[0], e[1], *v))
            .collect()
    }

    /// ℓ_I when h is an indicator of a union of intervals.
    pub fn indicator_length(&self) -> Option<f64> {
        if self.values.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return None;
        }
        Some(
            self.cells()
                .iter()
                .filter(|c| c.2 == 1.0)
                .map(|c| c.1 - c.0)
                .sum(),
        )
    }
}
