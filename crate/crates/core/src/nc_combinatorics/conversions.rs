//! Moment ↔ cumulant conversions as sums over partition lattices.
//!
//! Series are passed without the constant term: `m[k-1]` is the k-th moment.

use super::algebra::Ring;
use super::{enumerate_nc, enumerate_partitions, mobius_to_top, SetPartition};
use crate::error::{invalid, Result};
use std::collections::BTreeMap;

pub const MAX_CONVERSION_ORDER: usize = 8;

fn check_order(n: usize) -> Result<()> {
    if n > MAX_CONVERSION_ORDER {
        return invalid(format!(
            "conversion order {n} exceeds the cap {MAX_CONVERSION_ORDER}"
        ));
    }
    Ok(())
}

fn product_over_blocks<T: Ring>(p: &SetPartition, c: &[T]) -> T {
    p.block_sizes()
        .iter()
        .fold(T::one(), |acc, &s| acc * c[s - 1].clone())
}

/// m_n = Σ_{π ∈ P(n)} Π_{b ∈ π} c_{|b|}.
pub fn moments_from_classical_cumulants<T: Ring>(c: &[T]) -> Result<Vec<T>> {
    check_order(c.len())?;
    let mut out = Vec::with_capacity(c.len());
    for n in 1..=c.len() {
        let s = enumerate_partitions(n)?
            .iter()
            .fold(T::zero(), |acc, p| acc + product_over_blocks(p, c));
        out.push(s);
    }
    Ok(out)
}

/// Inverse of [`moments_from_classical_cumulants`], solved order by order.
pub fn classical_cumulants_from_moments<T: Ring>(m: &[T]) -> Result<Vec<T>> {
    check_order(m.len())?;
    let mut c: Vec<T> = Vec::with_capacity(m.len());
    for n in 1..=m.len() {
        // every partition except the single block uses only c_1..c_{n-1}
        c.push(T::zero());
        let lower = enumerate_partitions(n)?
            .iter()
            .filter(|p| p.num_blocks() > 1)
            .fold(T::zero(), |acc, p| acc + product_over_blocks(p, &c));
        c[n - 1] = m[n - 1].clone() - lower;
    }
    Ok(c)
}

/// m_n = Σ_{π ∈ NC(n)} Π_{b ∈ π} κ_{|b|}.
pub fn moments_from_free_cumulants<T: Ring>(k: &[T]) -> Result<Vec<T>> {
    check_order(k.len())?;
    let mut out = Vec::with_capacity(k.len());
    for n in 1..=k.len() {
        let s = enumerate_nc(n)?
            .iter()
            .fold(T::zero(), |acc, p| acc + product_over_blocks(p, k));
        out.push(s);
    }
    Ok(out)
}

/// κ_n = Σ_{π ∈ NC(n)} μ(π, 1ₙ) Π_{b ∈ π} m_{|b|}.
pub fn free_cumulants_from_moments<T: Ring>(m: &[T]) -> Result<Vec<T>> {
    check_order(m.len())?;
    let mut out = Vec::with_capacity(m.len());
    for n in 1..=m.len() {
        let s = enumerate_nc(n)?.iter().fold(T::zero(), |acc, p| {
            acc + T::from_i64(mobius_to_top(p)) * product_over_blocks(p, m)
        });
        out.push(s);
    }
    Ok(out)
}

fn restrict(word: &[usize], mask: u32) -> Vec<usize> {
    word.iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, &w)| w)
        .collect()
}

/// κ(a_{w1}, …, a_{wn}) by Möbius inversion over NC(n), respecting argument order.
pub fn free_cumulant_of_word<T: Ring>(word: &[usize], moment: &dyn Fn(&[usize]) -> T) -> Result<T> {
    let n = word.len();
    if n == 0 {
        return invalid("empty word");
    }
    check_order(n)?;
    Ok(enumerate_nc(n)?.iter().fold(T::zero(), |acc, p| {
        let prod = p
            .block_masks()
            .iter()
            .fold(T::one(), |a, &m| a * moment(&restrict(word, m)));
        acc + T::from_i64(mobius_to_top(p)) * prod
    }))
}

/// φ(a_{w1} ⋯ a_{wn}) = Σ_{π ∈ NC(n)} Π_{b ∈ π} κ(word|_b).
pub fn moment_of_word_from_free_cumulants<T: Ring>(
    word: &[usize],
    cumulant: &dyn Fn(&[usize]) -> T,
) -> Result<T> {
    let n = word.len();
    if n == 0 {
        return invalid("empty word");
    }
    check_order(n)?;
    Ok(enumerate_nc(n)?.iter().fold(T::zero(), |acc, p| {
        acc + p
            .block_masks()
            .iter()
            .fold(T::one(), |a, &m| a * cumulant(&restrict(word, m)))
    }))
}

/// Free cumulants of every word of length 1..=n over `letters` variables.
pub fn multivariate_free_cumulants(
    moment: &dyn Fn(&[usize]) -> f64,
    letters: usize,
    n: usize,
) -> Result<BTreeMap<Vec<usize>, f64>> {
    check_order(n)?;
    if letters == 0 {
        return invalid("need at least one variable");
    }
    let mut out = BTreeMap::new();
    for len in 1..=n {
        let count = letters.pow(len as u32);
        for code in 0..count {
            let mut word = vec![0usize; len];
            let mut c = code;
            for slot in word.iter_mut().rev() {
                *slot = c % letters;
                c /= letters;
            }
            let k = free_cumulant_of_word(&word, moment)?;
            out.insert(word, k);
        }
    }
    Ok(out)
}
