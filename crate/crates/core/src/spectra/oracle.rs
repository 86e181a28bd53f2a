//! Moments of M_h by direct summation over non-crossing partitions.
//!
//! φₙ[h] = Σ_{π ∈ NC(n)} ∫ Π_{p ∈ π} g_{|p|}(x⃗_p) δ(ties of π) Π h(x_i): every
//! block p = (p₁ < … < p_m) of matrix positions forms a loop on the indices
//! i_{p₁}, …, i_{p_m}, and closing it ties node p_j + 1 to node p_{j+1}.
//! The integrand is a polynomial on each ordering region of the free variables
//! (pointwise gₙ are multilinear there), so sorted-simplex Gauss rules with
//! Duffy coordinates integrate each region exactly.

use super::{DiagonalProfile, LocalFreeCumulantSpec};
use crate::error::{invalid, Result};
use crate::nc_combinatorics::enumerate_nc;
use crate::quad::gauss_legendre_on;

pub const MAX_ORACLE_ORDER: usize = 6;

pub fn moment_oracle_nc(spec: &LocalFreeCumulantSpec, h: &DiagonalProfile, n: usize) -> Result<f64> {
    if !(1..=MAX_ORACLE_ORDER).contains(&n) {
        return invalid(format!("oracle order must be in 1..={MAX_ORACLE_ORDER}, got {n}"));
    }
    if matches!(spec, LocalFreeCumulantSpec::DiagonalCovariance { .. }) {
        return invalid("the partition oracle needs pointwise cumulants");
    }
    let cells: Vec<(f64, f64, f64)> = h.cells().into_iter().filter(|c| c.2 != 0.0).collect();
    let mut total = 0.0;
    for pi in enumerate_nc(n)? {
        let blocks: Vec<Vec<usize>> = pi
            .blocks()
            .into_iter()
            .map(|b| b.into_iter().map(|i| i - 1).collect())
            .collect();
        let mut parent: Vec<usize> = (0..n).collect();
        for b in &blocks {
            let m = b.len();
            for j in 0..m {
                union(&mut parent, (b[j] + 1) % n, b[(j + 1) % m]);
            }
        }
        let mut var_of = vec![usize::MAX; n];
        let mut sizes: Vec<usize> = Vec::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            if var_of[r] == usize::MAX {
                var_of[r] = sizes.len();
                sizes.push(0);
            }
            var_of[i] = var_of[r];
            sizes[var_of[i]] += 1;
        }
        debug_assert_eq!(sizes.len() + blocks.len(), n + 1);
        let k = sizes.len();
        let degree = *sizes.iter().max().unwrap();
        let args: Vec<Vec<usize>> = blocks
            .iter()
            .map(|b| b.iter().map(|i| var_of[*i]).collect())
            .collect();
        let mut err = None;
        let mut buf = vec![0.0; n];
        let value = integrate_regions(k, degree, &cells, |x, hw| {
            let mut v = 1.0;
            for (j, s) in sizes.iter().enumerate() {
                v *= hw[j].powi(*s as i32);
            }
            for a in &args {
                let xs = &mut buf[..a.len()];
                for (t, vi) in xs.iter_mut().zip(a) {
                    *t = x[*vi];
                }
                match spec.g(a.len(), xs) {
                    Ok(g) => v *= g,
                    Err(e) => {
                        err.get_or_insert(e);
                        return 0.0;
                    }
                }
            }
            v
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += value;
    }
    Ok(total)
}

fn find(p: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while p[r] != r {
        r = p[r];
    }
    p[x] = r;
    r
}

fn union(p: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(p, a), find(p, b));
    if ra != rb {
        p[ra.max(rb)] = ra.min(rb);
    }
}

/// ∫ f over the product of cells, where f is a polynomial of degree ≤ `degree` in
/// each variable on every region with a fixed ordering and fixed cells.
/// `f(x, h_values)` receives the point and the h value of each variable's cell.
fn integrate_regions(
    k: usize,
    degree: usize,
    cells: &[(f64, f64, f64)],
    mut f: impl FnMut(&[f64], &[f64]) -> f64,
) -> f64 {
    let rules: Vec<Vec<(Vec<f64>, f64)>> = (0..=k).map(|m| sorted_simplex_rule(m, degree)).collect();
    let mut assign = vec![0usize; k];
    let mut total = 0.0;
    let mut x = vec![0.0; k];
    let mut hw = vec![0.0; k];
    loop {
        // variables grouped by cell
        let groups: Vec<Vec<usize>> = (0..cells.len())
            .map(|c| (0..k).filter(|v| assign[*v] == c).collect())
            .collect();
        for v in 0..k {
            hw[v] = cells[assign[v]].2;
        }
        let perms: Vec<Vec<Vec<usize>>> = groups.iter().map(|g| permutations(g)).collect();
        total += sum_cells(0, &groups, &perms, &rules, cells, &mut x, 1.0, &mut |x, w| {
            w * f(x, &hw)
        });
        // next assignment
        let mut i = 0;
        loop {
            if i == k {
                return total;
            }
            assign[i] += 1;
            if assign[i] < cells.len() {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn sum_cells(
    c: usize,
    groups: &[Vec<usize>],
    perms: &[Vec<Vec<usize>>],
    rules: &[Vec<(Vec<f64>, f64)>],
    cells: &[(f64, f64, f64)],
    x: &mut [f64],
    weight: f64,
    f: &mut dyn FnMut(&[f64], f64) -> f64,
) -> f64 {
    if c == groups.len() {
        return f(x, weight);
    }
    let m = groups[c].len();
    if m == 0 {
        return sum_cells(c + 1, groups, perms, rules, cells, x, weight, f);
    }
    let (lo, hi, _) = cells[c];
    let len = hi - lo;
    let scale = len.powi(m as i32);
    let mut s = 0.0;
    for perm in &perms[c] {
        for (pt, w) in &rules[m] {
            for (slot, var) in perm.iter().enumerate() {
                x[*var] = lo + len * pt[slot];
            }
            s += sum_cells(c + 1, groups, perms, rules, cells, x, weight * w * scale, f);
        }
    }
    s
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Points 0 < s₁ < … < s_m < 1 and weights integrating polynomials of degree
/// ≤ d in each sᵢ exactly over the sorted simplex.
///
/// Duffy coordinates s_m = u_m, s_j = u_j s_{j+1}; the Jacobian is Π u_j^{j−1},
/// so u_j carries degree ≤ j·d + j − 1 and needs ⌈j(d+1)/2⌉ nodes.
fn sorted_simplex_rule(m: usize, d: usize) -> Vec<(Vec<f64>, f64)> {
    if m == 0 {
        return vec![(vec![], 1.0)];
    }
    let rules: Vec<(Vec<f64>, Vec<f64>)> = (1..=m)
        .map(|j| gauss_legendre_on((j * (d + 1)).div_ceil(2).max(1), 0.0, 1.0))
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        let mut s = vec![0.0; m];
        let mut w = 1.0;
        let mut prod = 1.0;
        for j in (0..m).rev() {
            let u = rules[j].0[idx[j]];
            w *= rules[j].1[idx[j]] * u.powi(j as i32);
            prod *= u;
            s[j] = prod;
        }
        out.push((s, w));
        let mut j = 0;
        loop {
            if j == m {
                return out;
            }
            idx[j] += 1;
            if idx[j] < rules[j].0.len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}
