//! Sample tables of products of coherences and the loop estimators built on them.

use super::matrix::CoherenceMatrix;
use super::Observer;
use crate::error::{invalid, Result};
use crate::nc_combinatorics::enumerate_partitions;
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::collections::BTreeSet;

pub const DEFAULT_MAX_LOOP_ORDER: usize = 6;

/// A product Π_k G_{i_k j_k}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Observable {
    pub label: String,
    pub factors: Vec<(usize, usize)>,
}

impl Observable {
    /// G_{i₁i₂} G_{i₂i₃} ⋯ G_{iₙi₁}, 0-based site indices.
    pub fn closed_loop(indices: &[usize]) -> Self {
        let n = indices.len();
        let factors = (0..n).map(|k| (indices[k], indices[(k + 1) % n])).collect();
        let label = format!(
            "loop({})",
            indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
        );
        Self { label, factors }
    }

    pub fn product(factors: &[(usize, usize)]) -> Self {
        let label = factors
            .iter()
            .map(|(i, j)| format!("G{i}_{j}"))
            .collect::<Vec<_>>()
            .join("*");
        Self {
            label,
            factors: factors.to_vec(),
        }
    }

    /// True when the row indices are a permutation of the column indices.
    pub fn is_charge_balanced(&self) -> bool {
        let mut a: Vec<usize> = self.factors.iter().map(|f| f.0).collect();
        let mut b: Vec<usize> = self.factors.iter().map(|f| f.1).collect();
        a.sort_unstable();
        b.sort_unstable();
        a == b
    }
}

#[derive(Debug, Clone)]
pub struct SampleRow {
    pub trajectory: usize,
    pub time_index: usize,
    pub t_macro: f64,
    values: Vec<C64>,
}

/// Factor values of every observable at every (trajectory, time) sample.
#[derive(Debug, Clone)]
pub struct SampleTable {
    pub observables: Vec<Observable>,
    offsets: Vec<usize>,
    pub rows: Vec<SampleRow>,
}

impl SampleTable {
    pub fn new(observables: Vec<Observable>) -> Self {
        let mut offsets = Vec::with_capacity(observables.len() + 1);
        let mut acc = 0;
        for o in &observables {
            offsets.push(acc);
            acc += o.factors.len();
        }
        offsets.push(acc);
        Self {
            observables,
            offsets,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn factors(&self, row: usize, obs: usize) -> &[C64] {
        &self.rows[row].values[self.offsets[obs]..self.offsets[obs + 1]]
    }

    /// Concatenates per-trajectory tables in the given order.
    pub fn concat(tables: Vec<SampleTable>) -> Result<SampleTable> {
        let mut it = tables.into_iter();
        let Some(mut first) = it.next() else {
            return invalid("no sample tables to merge");
        };
        for t in it {
            if t.observables != first.observables {
                return invalid("cannot merge sample tables with different observables");
            }
            first.rows.extend(t.rows);
        }
        Ok(first)
    }

    /// Rows with lo ≤ t_macro ≤ hi.
    pub fn window(&self, lo: f64, hi: f64) -> SampleTable {
        self.filter(|r| r.t_macro >= lo - 1e-12 && r.t_macro <= hi + 1e-12)
    }

    pub fn at_time_index(&self, k: usize) -> SampleTable {
        self.filter(|r| r.time_index == k)
    }

    pub fn filter(&self, keep: impl Fn(&SampleRow) -> bool) -> SampleTable {
        SampleTable {
            observables: self.observables.clone(),
            offsets: self.offsets.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn find(&self, label: &str) -> Option<usize> {
        self.observables.iter().position(|o| o.label == label)
    }

    fn group_ids(&self) -> (Vec<usize>, usize) {
        let trajs: BTreeSet<usize> = self.rows.iter().map(|r| r.trajectory).collect();
        if trajs.len() >= 2 {
            let k = trajs.len().min(32);
            let index: Vec<usize> = trajs.into_iter().collect();
            let ids = self
                .rows
                .iter()
                .map(|r| index.binary_search(&r.trajectory).unwrap() % k)
                .collect();
            (ids, k)
        } else {
            // a single trajectory: contiguous blocks in time
            let n = self.rows.len();
            let k = n.clamp(1, 16);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| self.rows[a].t_macro.partial_cmp(&self.rows[b].t_macro).unwrap());
            let mut ids = vec![0; n];
            for (rank, &r) in order.iter().enumerate() {
                ids[r] = rank * k / n.max(1);
            }
            (ids, k)
        }
    }
}

impl Observer for SampleTable {
    fn observe(&mut self, trajectory: usize, time_index: usize, t_macro: f64, g: &CoherenceMatrix) {
        let values = self
            .observables
            .iter()
            .flat_map(|o| o.factors.iter().map(|&(i, j)| g.get(i, j)))
            .collect();
        self.rows.push(SampleRow {
            trajectory,
            time_index,
            t_macro,
            values,
        });
    }
}

/// Delete-one-group jackknife of a smooth function of feature means.
fn jackknife(
    table: &SampleTable,
    features: impl Fn(usize) -> Vec<C64>,
    estimator: impl Fn(&[C64]) -> C64,
) -> Result<(C64, f64, usize, usize)> {
    let n = table.len();
    if n == 0 {
        return invalid("no samples in the selected window");
    }
    let (ids, k) = table.group_ids();
    let dim = features(0).len();
    let mut sums = vec![vec![C64::new(0.0, 0.0); dim]; k];
    let mut counts = vec![0usize; k];
    for r in 0..n {
        let f = features(r);
        for (s, v) in sums[ids[r]].iter_mut().zip(f) {
            *s += v;
        }
        counts[ids[r]] += 1;
    }
    let total: Vec<C64> = (0..dim).map(|d| sums.iter().map(|s| s[d]).sum()).collect();
    let full_mean: Vec<C64> = total.iter().map(|s| s / n as f64).collect();
    let theta = estimator(&full_mean);
    let used: Vec<usize> = (0..k).filter(|&g| counts[g] > 0 && counts[g] < n).collect();
    if used.len() < 2 {
        return Ok((theta, f64::NAN, n, used.len()));
    }
    let thetas: Vec<C64> = used
        .iter()
        .map(|&g| {
            let m = (n - counts[g]) as f64;
            let mean: Vec<C64> = (0..dim).map(|d| (total[d] - sums[g][d]) / m).collect();
            estimator(&mean)
        })
        .collect();
    let kk = thetas.len() as f64;
    let avg: C64 = thetas.iter().sum::<C64>() / kk;
    let var = (kk - 1.0) / kk * thetas.iter().map(|t| (t - avg).norm_sqr()).sum::<f64>();
    Ok((theta, var.sqrt(), n, thetas.len()))
}

#[derive(Debug, Clone, Serialize)]
pub struct LoopEstimate {
    pub label: String,
    pub factors: Vec<(usize, usize)>,
    pub moment: C64,
    pub connected: C64,
    pub stderr_moment: f64,
    pub stderr_connected: f64,
    pub n_samples: usize,
    pub n_groups: usize,
}

/// Mean of the product of all factors of observable `obs`, with jackknife error.
pub fn estimate_product(table: &SampleTable, obs: usize) -> Result<(C64, f64)> {
    let (m, e, _, _) = jackknife(
        table,
        |r| vec![table.factors(r, obs).iter().product::<C64>()],
        |m| m[0],
    )?;
    Ok((m, e))
}

/// Moment and plug-in joint cumulant κ(X₁, …, Xₙ) of the factors of `obs`.
pub fn estimate_loop(
    table: &SampleTable,
    obs: usize,
    connected: bool,
    max_order: usize,
) -> Result<LoopEstimate> {
    let o = table
        .observables
        .get(obs)
        .ok_or_else(|| crate::Error::InvalidArgument(format!("no observable {obs}")))?;
    let n = o.factors.len();
    if n == 0 {
        return invalid("empty observable");
    }
    if n > max_order {
        return invalid(format!("loop order {n} exceeds the configured maximum {max_order}"));
    }
    let masks = 1usize << n;
    let features = |r: usize| -> Vec<C64> {
        let f = table.factors(r, obs);
        let mut out = vec![C64::new(1.0, 0.0); masks];
        for m in 1..masks {
            let low = m.trailing_zeros() as usize;
            out[m] = out[m & (m - 1)] * f[low];
        }
        out
    };
    let (moment, se_m, n_samples, n_groups) =
        jackknife(table, &features, |mean| mean[masks - 1])?;
    let (conn, se_c) = if connected {
        let parts = enumerate_partitions(n)?;
        let coeffs: Vec<(f64, Vec<u32>)> = parts
            .iter()
            .map(|p| {
                let b = p.num_blocks();
                let sign = if b % 2 == 1 { 1.0 } else { -1.0 };
                let fact: f64 = (1..b).map(|k| k as f64).product();
                (sign * fact, p.block_masks())
            })
            .collect();
        let cumulant = |mean: &[C64]| -> C64 {
            coeffs
                .iter()
                .map(|(c, bm)| *c * bm.iter().map(|&m| mean[m as usize]).product::<C64>())
                .sum()
        };
        let (c, e, _, _) = jackknife(table, &features, cumulant)?;
        (c, e)
    } else {
        (moment, se_m)
    };
    Ok(LoopEstimate {
        label: o.label.clone(),
        factors: o.factors.clone(),
        moment,
        connected: conn,
        stderr_moment: se_m,
        stderr_connected: se_c,
        n_samples,
        n_groups,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct U1Entry {
    pub label: String,
    pub charge_balanced: bool,
    pub mean: C64,
    pub stderr: f64,
    /// |mean| / stderr.
    pub z: f64,
    pub compatible_with_zero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct U1Report {
    pub entries: Vec<U1Entry>,
    /// Every unbalanced product is compatible with zero.
    pub selection_rule_holds: bool,
}

/// Threshold in standard errors below which a mean counts as zero.
const U1_Z: f64 = 4.0;

pub fn check_u1_selection(table: &SampleTable, observables: &[usize]) -> Result<U1Report> {
    let mut entries = Vec::new();
    for &k in observables {
        let (mean, stderr) = estimate_product(table, k)?;
        let z = mean.norm() / stderr;
        let o = &table.observables[k];
        entries.push(U1Entry {
            label: o.label.clone(),
            charge_balanced: o.is_charge_balanced(),
            mean,
            stderr,
            z,
            compatible_with_zero: z < U1_Z,
        });
    }
    let selection_rule_holds = entries
        .iter()
        .filter(|e| !e.charge_balanced)
        .all(|e| e.compatible_with_zero);
    Ok(U1Report {
        entries,
        selection_rule_holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub ratio: f64,
    pub stderr: f64,
    pub e_joint: C64,
    pub e_first: C64,
    pub e_second: C64,
    /// Both loop means vanish within errors, so the ratio carries no information.
    pub degenerate: bool,
    pub note: String,
}

/// E[L₁L₂] / (E[L₁]E[L₂]) for two observables sampled together.
pub fn check_factorization(table: &SampleTable, first: usize, second: usize) -> Result<FactorizationReport> {
    let features = |r: usize| -> Vec<C64> {
        let a: C64 = table.factors(r, first).iter().product();
        let b: C64 = table.factors(r, second).iter().product();
        vec![a, b, a * b]
    };
    let (e1, s1, _, _) = jackknife(table, &features, |m| m[0])?;
    let (e2, s2, _, _) = jackknife(table, &features, |m| m[1])?;
    let (ej, _, _, _) = jackknife(table, &features, |m| m[2])?;
    let negligible = |e: C64, s: f64| e.norm() < 3.0 * s || e.norm() < 1e-12;
    let degenerate = negligible(e1, s1) || negligible(e2, s2);
    if degenerate {
        return Ok(FactorizationReport {
            ratio: f64::NAN,
            stderr: f64::NAN,
            e_joint: ej,
            e_first: e1,
            e_second: e2,
            degenerate,
            note: "loop means compatible with zero (equilibrium?); factorization test skipped".into(),
        });
    }
    let (ratio, se, _, _) = jackknife(table, &features, |m| m[2] / (m[0] * m[1]))?;
    Ok(FactorizationReport {
        ratio: ratio.re,
        stderr: se,
        e_joint: ej,
        e_first: e1,
        e_second: e2,
        degenerate,
        note: String::new(),
    })
}
