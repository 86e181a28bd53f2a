//! Rényi and von Neumann entropies and adjacent-interval mutual information,
//! from spectral measures (analytic) and from simulated coherence matrices.
//!
//! Intensive entropies: s_I = ℓ_I/(1−q) ∫ dσ_I log(λ^q + (1−λ)^q), and for q = 1
//! s_I = −ℓ_I ∫ dσ_I [λ log λ + (1−λ) log(1−λ)]. Mutual information between
//! [0, c] and [c, 1] is i = s_{[0,c]} + s_{[c,1]} − s_{[0,1]}.

use crate::error::{invalid, Error, Result};
use crate::qssep_sim::{evolve_with, mean_density_profile, BoundaryParams, CoherenceMatrix, Observer, SimConfig};
use crate::spectra::{
    qssep_block_expectation, DiagonalProfile, LocalFreeCumulantSpec, QssepBlock, SolverOptions,
    SpectralMeasure, SpectralProblem, StieltjesOptions,
};
use rayon::prelude::*;
use serde::Serialize;

/// Tolerance on simulated subblock eigenvalues outside [0, 1] before clipping.
pub const EIGENVALUE_CLIP_TOL: f64 = 1e-9;

/// Default averaging window in macroscopic time.
pub const DEFAULT_WINDOW: (f64, f64) = (0.15, 0.4);

/// Tolerance on support points outside [0, 1] for [`entropy_from_spectrum`].
const SUPPORT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropySource {
    Analytic,
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyResult {
    /// Rényi index; 1 is von Neumann.
    pub q: f64,
    pub interval: (f64, f64),
    /// Intensive entropy S/N.
    pub value: f64,
    pub source: EntropySource,
}

fn check_q(q: f64) -> Result<()> {
    if !(q.is_finite() && q >= 0.0) {
        return invalid(format!("Rényi index q = {q} must be finite and >= 0"));
    }
    Ok(())
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Entropy contribution of one eigenvalue, given as (λ, 1 − λ) so both ends
/// keep full precision. q = 0 counts the eigenvalue as log 2 when 0 < λ < 1.
pub fn entropy_kernel(q: f64, lambda: f64, one_minus: f64) -> f64 {
    if q == 1.0 {
        -(xlogx(lambda) + xlogx(one_minus))
    } else if q == 0.0 {
        if lambda > 0.0 && one_minus > 0.0 {
            std::f64::consts::LN_2
        } else {
            0.0
        }
    } else {
        (lambda.powf(q) + one_minus.powf(q)).ln() / (1.0 - q)
    }
}

// Same kernel for real λ possibly outside [0, 1] (truncated spectra).
fn entropy_kernel_extended(q: f64, lambda: f64) -> f64 {
    let (l, m) = (lambda.abs(), (1.0 - lambda).abs());
    entropy_kernel(q, l, m)
}

/// Intensive entropy of an interval of length `ell` with normalized spectrum `measure`.
pub fn entropy_from_spectrum(
    measure: &SpectralMeasure,
    interval: (f64, f64),
    q: f64,
) -> Result<EntropyResult> {
    check_q(q)?;
    let ell = interval.1 - interval.0;
    if !(ell > 0.0 && ell <= 1.0) {
        return invalid(format!("interval {interval:?} must have length in (0, 1]"));
    }
    let outside = |x: f64| x < -SUPPORT_TOL || x > 1.0 + SUPPORT_TOL;
    let stray = measure
        .lambdas
        .iter()
        .zip(&measure.density)
        .find(|(l, d)| **d > 0.0 && outside(**l))
        .map(|p| *p.0)
        .or_else(|| measure.atoms.iter().find(|a| a.1 > 0.0 && outside(a.0)).map(|a| a.0));
    if let Some(x) = stray {
        return invalid(format!("spectral measure has support at λ = {x} outside [0, 1]"));
    }
    let value = ell
        * measure.expectation(|l| {
            let l = l.clamp(0.0, 1.0);
            entropy_kernel(q, l, 1.0 - l)
        });
    Ok(EntropyResult {
        q,
        interval,
        value,
        source: EntropySource::Analytic,
    })
}

/// Intensive entropy of a QSSEP block in the steady state with reservoir
/// densities n_a, n_b (eigenvalues mapped by λ ↦ n_a + (n_b − n_a)λ).
pub fn qssep_block_entropy(block: QssepBlock, q: f64, n_a: f64, n_b: f64) -> Result<f64> {
    check_q(q)?;
    check_densities(n_a, n_b)?;
    let d = n_b - n_a;
    if q == 0.0 && d != 0.0 {
        // the measure has no atoms, so every eigenvalue lies strictly inside (0, 1)
        let mass = qssep_block_expectation(block, |_, _| 1.0, None)?;
        return Ok(block.length() * std::f64::consts::LN_2 * mass);
    }
    let mean = qssep_block_expectation(
        block,
        |l, m| {
            let (lam, one_minus) = if d >= 0.0 {
                (n_a + d * l, (1.0 - n_b) + d * m)
            } else {
                (n_b - d * m, (1.0 - n_a) - d * l)
            };
            entropy_kernel(q, lam, one_minus)
        },
        None,
    )?;
    Ok(block.length() * mean)
}

fn check_densities(n_a: f64, n_b: f64) -> Result<()> {
    if !((0.0..=1.0).contains(&n_a) && (0.0..=1.0).contains(&n_b)) {
        return invalid(format!("reservoir densities ({n_a}, {n_b}) must lie in [0, 1]"));
    }
    Ok(())
}

fn check_cut(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return invalid(format!("cut c = {c} must lie in (0, 1)"));
    }
    Ok(())
}

/// Steady-state mutual information i^{(q)}([0,c] : [c,1]) for n_a = 0, n_b = 1.
pub fn mutual_information_analytic(c: f64, q: f64) -> Result<f64> {
    mutual_information_analytic_with(c, q, 0.0, 1.0)
}

/// Steady-state mutual information for general reservoir densities.
pub fn mutual_information_analytic_with(c: f64, q: f64, n_a: f64, n_b: f64) -> Result<f64> {
    check_cut(c)?;
    Ok(qssep_block_entropy(QssepBlock::Left(c), q, n_a, n_b)?
        + qssep_block_entropy(QssepBlock::Right(c), q, n_a, n_b)?
        - qssep_block_entropy(QssepBlock::Full, q, n_a, n_b)?)
}

/// Mutual information from spectra of the QSSEP spec truncated at g₂.
///
/// The truncated law for reservoirs (n_a, n_b) is the image of the canonical
/// one under λ ↦ n_a + (n_b − n_a)λ (g₁ is affine and g₂ scales as Δ²), so the
/// spectra are inverted once for n_a = 0, n_b = 1. They may leak outside
/// [0, 1]; the kernel is then evaluated on |λ| and |1 − λ|, which is exact for
/// even integer q.
pub fn second_order_mutual_information(c: f64, q: f64, n_a: f64, n_b: f64) -> Result<f64> {
    check_cut(c)?;
    check_q(q)?;
    check_densities(n_a, n_b)?;
    let d = n_b - n_a;
    if d == 0.0 {
        return Ok(0.0);
    }
    let spec = LocalFreeCumulantSpec::qssep(0.0, 1.0, Some(2))?;
    let (lo, hi) = (-0.6, 1.6);
    let points = 481;
    let lambdas: Vec<f64> = (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect();
    let opts = StieltjesOptions::default();
    let entropy = |a: f64, b: f64| -> Result<f64> {
        let p = SpectralProblem::new(spec.clone(), DiagonalProfile::indicator(a, b)?, SolverOptions::default())?;
        let m = p.stieltjes(&lambdas, &opts, true)?;
        let edge = m.density[0].max(m.density[points - 1]);
        if edge > 1e-3 * m.density.iter().copied().fold(0.0, f64::max) {
            return Err(Error::InvariantViolation(format!(
                "truncated spectrum of [{a}, {b}] not contained in [{lo}, {hi}]"
            )));
        }
        Ok((b - a) * m.expectation(|l| entropy_kernel_extended(q, n_a + d * l)))
    };
    Ok(entropy(0.0, c)? + entropy(c, 1.0)? - entropy(0.0, 1.0)?)
}

/// Σ over eigenvalues of the entropy kernel, after checking they lie in [0, 1]
/// within [`EIGENVALUE_CLIP_TOL`] and clipping.
pub fn eigenvalue_entropy(eigenvalues: &[f64], q: f64) -> Result<f64> {
    check_q(q)?;
    let mut s = 0.0;
    for &l in eigenvalues {
        if !(l >= -EIGENVALUE_CLIP_TOL && l <= 1.0 + EIGENVALUE_CLIP_TOL) {
            return Err(Error::InvariantViolation(format!(
                "subblock eigenvalue {l:.12} outside [0, 1]"
            )));
        }
        let l = l.clamp(0.0, 1.0);
        s += entropy_kernel(q, l, 1.0 - l);
    }
    Ok(s)
}

/// Number of sites in [0, c] for sites at x = i/N, i = 1..N.
pub fn cut_index(n: usize, c: f64) -> usize {
    ((c * n as f64).round() as usize).min(n)
}

/// Intensive mutual information of one coherence matrix for each q.
pub fn mutual_information_snapshot(g: &CoherenceMatrix, c: f64, qs: &[f64]) -> Result<Vec<f64>> {
    check_cut(c)?;
    let n = g.n();
    let k = cut_index(n, c);
    if k == 0 || k == n {
        return invalid(format!("cut c = {c} leaves an empty block at N = {n}"));
    }
    let left = g.block_eigenvalues(0, k);
    let right = g.block_eigenvalues(k, n);
    let full = g.eigenvalues();
    qs.iter()
        .map(|&q| {
            Ok((eigenvalue_entropy(&left, q)? + eigenvalue_entropy(&right, q)?
                - eigenvalue_entropy(&full, q)?)
                / n as f64)
        })
        .collect()
}

/// One point of a mutual-information time series (CSV columns t, c, q, i_value, stderr).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiRow {
    pub t: f64,
    pub c: f64,
    pub q: f64,
    pub i_value: f64,
    pub stderr: f64,
}

/// Mutual information of stored snapshots, parallel over snapshots.
pub fn mutual_information_series(
    snapshots: &[(f64, &CoherenceMatrix)],
    cs: &[f64],
    qs: &[f64],
) -> Result<Vec<MiRow>> {
    let per: Vec<Vec<MiRow>> = snapshots
        .par_iter()
        .map(|(t, g)| {
            let mut rows = Vec::with_capacity(cs.len() * qs.len());
            for &c in cs {
                for (q, v) in qs.iter().zip(mutual_information_snapshot(g, c, qs)?) {
                    rows.push(MiRow {
                        t: *t,
                        c,
                        q: *q,
                        i_value: v,
                        stderr: 0.0,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Observer computing mutual information and the density-profile deviation at
/// each recorded time of one trajectory.
#[derive(Debug, Clone)]
pub struct MutualInfoObserver {
    pub cs: Vec<f64>,
    pub qs: Vec<f64>,
    /// Stationary mean profile used for onset detection.
    pub reference: Vec<f64>,
    pub rows: Vec<MiRow>,
    /// (t, rms deviation of the coarse-grained density profile).
    pub profile_deviation: Vec<(f64, f64)>,
    pub error: Option<String>,
}

/// Bins used to coarse-grain density profiles for onset detection.
const PROFILE_BINS: usize = 10;

fn coarse(profile: &[f64]) -> Vec<f64> {
    let n = profile.len();
    let bins = PROFILE_BINS.min(n);
    (0..bins)
        .map(|b| {
            let (lo, hi) = (b * n / bins, (b + 1) * n / bins);
            profile[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

impl MutualInfoObserver {
    pub fn new(cs: Vec<f64>, qs: Vec<f64>, reference: Vec<f64>) -> Self {
        Self {
            cs,
            qs,
            reference,
            rows: Vec::new(),
            profile_deviation: Vec::new(),
            error: None,
        }
    }
}

impl Observer for MutualInfoObserver {
    fn observe(&mut self, _trajectory: usize, _time_index: usize, t: f64, g: &CoherenceMatrix) {
        if self.error.is_some() {
            return;
        }
        let (a, b) = (coarse(&g.diagonal()), coarse(&self.reference));
        let rms = (a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        self.profile_deviation.push((t, rms));
        for &c in &self.cs {
            match mutual_information_snapshot(g, c, &self.qs) {
                Ok(vals) => {
                    for (q, v) in self.qs.iter().zip(vals) {
                        self.rows.push(MiRow {
                            t,
                            c,
                            q: *q,
                            i_value: v,
                            stderr: 0.0,
                        })
                    }
                }
                Err(e) => {
                    self.error = Some(e.to_string());
                    return;
                }
            }
        }
    }
}

/// Window average of a simulated mutual information.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowAverage {
    pub c: f64,
    pub q: f64,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    /// Window actually used (start moved past the detected onset if needed).
    pub window: (f64, f64),
}

/// Simulated run: per-trajectory series and window averages.
#[derive(Debug, Clone, Serialize)]
pub struct MutualInfoRun {
    /// Rows of all trajectories; `stderr` is the across-trajectory error when
    /// more than one trajectory was run.
    pub series: Vec<MiRow>,
    pub averages: Vec<WindowAverage>,
    /// First recorded time at which every trajectory's coarse density profile is
    /// within [`onset_tolerance`] (rms) of the stationary profile.
    pub onset: Option<f64>,
}

/// RMS tolerance on the coarse-grained density profile for steady-state onset:
/// 0.02 plus the typical single-trajectory noise √B/N of B bin averages.
pub fn onset_tolerance(n_sites: usize) -> f64 {
    0.02 + (PROFILE_BINS.min(n_sites) as f64).sqrt() / n_sites as f64
}

/// Simulates `cfg` and returns mutual-information series and averages over
/// `window` (macroscopic times), starting no earlier than the detected onset.
pub fn simulate_mutual_information(
    cfg: &SimConfig,
    boundary: &BoundaryParams,
    cs: &[f64],
    qs: &[f64],
    window: (f64, f64),
) -> Result<MutualInfoRun> {
    for &c in cs {
        check_cut(c)?;
    }
    for &q in qs {
        check_q(q)?;
    }
    if !(window.0 < window.1) {
        return invalid(format!("window {window:?} is empty"));
    }
    let reference = mean_density_profile(boundary, cfg.n_sites)?;
    let observers = evolve_with(cfg, boundary, |_| {
        MutualInfoObserver::new(cs.to_vec(), qs.to_vec(), reference.clone())
    })?;
    if let Some(e) = observers.iter().find_map(|o| o.error.clone()) {
        return Err(Error::InvariantViolation(e));
    }
    let tol = onset_tolerance(cfg.n_sites);
    let onset = observers
        .iter()
        .map(|o| o.profile_deviation.iter().find(|p| p.1 <= tol).map(|p| p.0))
        .try_fold(0.0f64, |acc, t| t.map(|t| acc.max(t)));
    let start = window.0.max(onset.unwrap_or(window.0));
    let used = (start, window.1);
    let ntraj = observers.len();

    let mut averages = Vec::new();
    for &c in cs {
        for &q in qs {
            let per_traj: Vec<Vec<f64>> = observers
                .iter()
                .map(|o| {
                    o.rows
                        .iter()
                        .filter(|r| r.c == c && r.q == q && r.t >= used.0 && r.t <= used.1)
                        .map(|r| r.i_value)
                        .collect()
                })
                .collect();
            let samples: usize = per_traj.iter().map(Vec::len).sum();
            if samples == 0 {
                return invalid(format!("no recorded times inside the window {used:?}"));
            }
            let mean = per_traj.iter().flatten().sum::<f64>() / samples as f64;
            let stderr = if ntraj > 1 {
                let means: Vec<f64> = per_traj
                    .iter()
                    .filter(|v| !v.is_empty())
                    .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                    .collect();
                standard_error(&means)
            } else {
                batch_means_error(&per_traj[0], 10)
            };
            averages.push(WindowAverage {
                c,
                q,
                mean,
                stderr,
                samples,
                window: used,
            });
        }
    }

    let mut series: Vec<MiRow> = observers.into_iter().flat_map(|o| o.rows).collect();
    if ntraj > 1 {
        series = pool_trajectories(series);
    }
    Ok(MutualInfoRun {
        series,
        averages,
        onset,
    })
}

// Averages rows with equal (t, c, q) across trajectories.
fn pool_trajectories(rows: Vec<MiRow>) -> Vec<MiRow> {
    let mut keyed: Vec<((u64, u64, u64), f64)> = rows
        .iter()
        .map(|r| ((r.t.to_bits(), r.c.to_bits(), r.q.to_bits()), r.i_value))
        .collect();
    keyed.sort_by(|a, b| {
        let ka = (f64::from_bits(a.0 .0), f64::from_bits(a.0 .1), f64::from_bits(a.0 .2));
        let kb = (f64::from_bits(b.0 .0), f64::from_bits(b.0 .1), f64::from_bits(b.0 .2));
        ka.partial_cmp(&kb).unwrap()
    });
    let mut out = Vec::new();
    let mut i = 0;
    while i < keyed.len() {
        let mut j = i;
        while j < keyed.len() && keyed[j].0 == keyed[i].0 {
            j += 1;
        }
        let vals: Vec<f64> = keyed[i..j].iter().map(|k| k.1).collect();
        let (t, c, q) = keyed[i].0;
        out.push(MiRow {
            t: f64::from_bits(t),
            c: f64::from_bits(c),
            q: f64::from_bits(q),
            i_value: vals.iter().sum::<f64>() / vals.len() as f64,
            stderr: standard_error(&vals),
        });
        i = j;
    }
    out
}

fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Standard error of the mean of a correlated series from contiguous batch means.
pub fn batch_means_error(xs: &[f64], batches: usize) -> f64 {
    let b = batches.min(xs.len());
    if b < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..b)
        .map(|k| {
            let (lo, hi) = (k * xs.len() / b, (k + 1) * xs.len() / b);
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    standard_error(&means)
}

/// Least-squares fit i(t) ≈ D √t.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqrtFit {
    pub d: f64,
    pub stderr: f64,
    /// Largest time used in the fit.
    pub t_max: f64,
    pub points: usize,
    /// End of the approach: first time the smoothed series reaches 95% of its maximum.
    pub t_steady: f64,
}

/// Points in the moving average used to locate the end of the approach.
const SMOOTHING: usize = 5;

/// Fits D in i = D√t over the first quarter of the approach to saturation.
///
/// The approach ends at t_s, the first time the moving average of i reaches 95%
/// of its maximum; the fit uses 0 < t ≤ t_s/4. From a domain wall the series
/// overshoots the steady value before relaxing, so the plateau of the series
/// itself is used instead of the steady-state value.
pub fn fit_sqrt_growth(times: &[f64], values: &[f64]) -> Result<SqrtFit> {
    if times.len() != values.len() {
        return invalid("times and values differ in length");
    }
    if times.len() < SMOOTHING + 3 || times.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("need an increasing time series with enough points");
    }
    let smooth: Vec<f64> = values
        .windows(SMOOTHING)
        .map(|w| w.iter().sum::<f64>() / SMOOTHING as f64)
        .collect();
    let peak = smooth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return invalid("series never becomes positive");
    }
    let k = smooth.iter().position(|v| *v >= 0.95 * peak).unwrap();
    let t_s = times[k + SMOOTHING / 2];
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t > 0.0 && **t <= 0.25 * t_s)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 3 {
        return invalid(format!("only {} points before t_s/4 = {}", pts.len(), 0.25 * t_s));
    }
    let stt: f64 = pts.iter().map(|p| p.0).sum();
    let d = pts.iter().map(|p| p.0.sqrt() * p.1).sum::<f64>() / stt;
    let rss: f64 = pts.iter().map(|p| (p.1 - d * p.0.sqrt()).powi(2)).sum();
    Ok(SqrtFit {
        d,
        stderr: (rss / (pts.len() - 1) as f64 / stt).sqrt(),
        t_max: pts.last().unwrap().0,
        points: pts.len(),
        t_steady: t_s,
    })
}

/// Domain-wall diagonal at cut c: sites with x = i/N ≤ c at n_a, the rest at n_b.
pub fn domain_wall_at(n: usize, c: f64, n_a: f64, n_b: f64) -> Vec<f64> {
    (1..=n)
        .map(|i| if (i as f64) / (n as f64) <= c { n_a } else { n_b })
        .collect()
}
