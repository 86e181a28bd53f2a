//! Set partitions, non-crossing partitions and the moment/cumulant machinery
//! built on their lattices.
//!
//! Partitions of {1..n} are stored as restricted-growth strings (0-based block
//! labels in order of first appearance). Public constructors and `blocks()` use
//! 1-based elements to match the usual notation.

mod algebra;
mod conversions;
mod series;

pub use algebra::{Poly, Ring};
pub use conversions::{
    classical_cumulants_from_moments, free_cumulant_of_word, free_cumulants_from_moments,
    moment_of_word_from_free_cumulants, moments_from_classical_cumulants,
    moments_from_free_cumulants, multivariate_free_cumulants, MAX_CONVERSION_ORDER,
};
pub use series::{
    free_cumulants_via_r_transform, g_of_k_minus_w, k_of_g_minus_z, moments_via_r_transform,
    s_transform, series_compose, series_mul, series_reciprocal, series_reversion, Field,
};

use crate::error::{invalid, Result};
use std::fmt;
use std::sync::OnceLock;

pub const MAX_BELL_N: usize = 10;
pub const MAX_NC_N: usize = 12;

/// A partition of {1..n}, canonical restricted-growth encoding.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    rgs: Vec<u8>,
}

impl SetPartition {
    /// From a restricted-growth string; rejects strings that are not canonical.
    pub fn from_rgs(rgs: Vec<u8>) -> Result<Self> {
        let mut next = 0u8;
        for &r in &rgs {
            if r > next {
                return invalid(format!("{rgs:?} is not a restricted-growth string"));
            }
            if r == next {
                next += 1;
            }
        }
        Ok(Self { rgs })
    }

    /// From 1-based blocks covering {1..n} exactly once.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        let mut label = vec![u8::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return invalid("empty block");
            }
            for &e in block {
                if e == 0 || e > n || label[e - 1] != u8::MAX {
                    return invalid(format!("bad element {e} in partition of {{1..{n}}}"));
                }
                label[e - 1] = b as u8;
            }
        }
        if label.contains(&u8::MAX) {
            return invalid("blocks do not cover the ground set");
        }
        Ok(Self::canonical(&label))
    }

    fn canonical(labels: &[u8]) -> Self {
        let mut map = [u8::MAX; 256];
        let mut next = 0u8;
        let rgs = labels
            .iter()
            .map(|&l| {
                if map[l as usize] == u8::MAX {
                    map[l as usize] = next;
                    next += 1;
                }
                map[l as usize]
            })
            .collect();
        Self { rgs }
    }

    pub fn n(&self) -> usize {
        self.rgs.len()
    }

    pub fn rgs(&self) -> &[u8] {
        &self.rgs
    }

    pub fn num_blocks(&self) -> usize {
        self.rgs.iter().map(|&r| r as usize + 1).max().unwrap_or(0)
    }

    /// 1-based blocks ordered by least element.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks()];
        for (i, &r) in self.rgs.iter().enumerate() {
            out[r as usize].push(i + 1);
        }
        out
    }

    /// 0-based blocks as bitmasks.
    pub fn block_masks(&self) -> Vec<u32> {
        let mut out = vec![0u32; self.num_blocks()];
        for (i, &r) in self.rgs.iter().enumerate() {
            out[r as usize] |= 1 << i;
        }
        out
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks().iter().map(Vec::len).collect()
    }

    pub fn is_noncrossing(&self) -> bool {
        let n = self.n();
        // a < b < c < d with a,c in one block and b,d in another
        for a in 0..n {
            for b in a + 1..n {
                if self.rgs[b] == self.rgs[a] {
                    continue;
                }
                for c in b + 1..n {
                    if self.rgs[c] != self.rgs[a] {
                        continue;
                    }
                    for d in c + 1..n {
                        if self.rgs[d] == self.rgs[b] {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// `self ≤ other` in refinement order (every block of self inside a block of other).
    pub fn refines(&self, other: &SetPartition) -> bool {
        if self.n() != other.n() {
            return false;
        }
        let mut img = vec![u8::MAX; self.num_blocks()];
        for (a, b) in self.rgs.iter().zip(&other.rgs) {
            let slot = &mut img[*a as usize];
            if *slot == u8::MAX {
                *slot = *b;
            } else if *slot != *b {
                return false;
            }
        }
        true
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            rgs: (0..n as u8).collect(),
        }
    }

    pub fn one_block(n: usize) -> Self {
        Self { rgs: vec![0; n] }
    }

    /// Rotation i -> i+1 (mod n) of the ground set.
    pub fn rotate(&self) -> Self {
        let n = self.n();
        let mut labels = vec![0u8; n];
        for i in 0..n {
            labels[(i + 1) % n] = self.rgs[i];
        }
        Self::canonical(&labels)
    }
}

impl fmt::Debug for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, b) in self.blocks().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, e) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A set partition certified non-crossing.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NCPartition(SetPartition);

impl NCPartition {
    pub fn new(p: SetPartition) -> Result<Self> {
        if p.is_noncrossing() {
            Ok(Self(p))
        } else {
            invalid(format!("{p} is crossing"))
        }
    }

    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        Self::new(SetPartition::from_blocks(n, blocks)?)
    }

    pub fn partition(&self) -> &SetPartition {
        &self.0
    }

    pub fn into_inner(self) -> SetPartition {
        self.0
    }
}

impl std::ops::Deref for NCPartition {
    type Target = SetPartition;
    fn deref(&self) -> &SetPartition {
        &self.0
    }
}

impl fmt::Debug for NCPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0, f)
    }
}

impl fmt::Display for NCPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0, f)
    }
}

fn for_each_rgs(n: usize, mut visit: impl FnMut(&[u8])) {
    if n == 0 {
        return;
    }
    let mut rgs = vec![0u8; n];
    let mut maxes = vec![0u8; n]; // maxes[i] = max(rgs[0..i])
    loop {
        visit(&rgs);
        // increment from the right
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            if rgs[i] <= maxes[i] {
                rgs[i] += 1;
                let m = maxes[i].max(rgs[i]);
                for j in i + 1..n {
                    rgs[j] = 0;
                    maxes[j] = m;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// All partitions of {1..n} in lexicographic restricted-growth order.
pub fn enumerate_partitions(n: usize) -> Result<Vec<SetPartition>> {
    if !(1..=MAX_BELL_N).contains(&n) {
        return invalid(format!("partition enumeration needs 1 <= n <= {MAX_BELL_N}, got {n}"));
    }
    let mut out = Vec::new();
    for_each_rgs(n, |r| out.push(SetPartition { rgs: r.to_vec() }));
    Ok(out)
}

/// All non-crossing partitions of {1..n}.
pub fn enumerate_nc(n: usize) -> Result<Vec<NCPartition>> {
    if !(1..=MAX_NC_N).contains(&n) {
        return invalid(format!("NC enumeration needs 1 <= n <= {MAX_NC_N}, got {n}"));
    }
    let mut out = Vec::new();
    nc_recurse(n, &mut vec![0u8; n], 0, 0, &mut Vec::new(), &mut out);
    Ok(out)
}

// Depth-first over positions. `open` is the stack of blocks that may still receive
// elements without creating a crossing: assigning position i to block b closes every
// block opened after b.
fn nc_recurse(
    n: usize,
    rgs: &mut Vec<u8>,
    i: usize,
    next: u8,
    open: &mut Vec<u8>,
    out: &mut Vec<NCPartition>,
) {
    if i == n {
        out.push(NCPartition(SetPartition { rgs: rgs.clone() }));
        return;
    }
    for k in 0..open.len() {
        let b = open[k];
        let saved: Vec<u8> = open[k + 1..].to_vec();
        open.truncate(k + 1);
        rgs[i] = b;
        nc_recurse(n, rgs, i + 1, next, open, out);
        open.extend(saved);
    }
    rgs[i] = next;
    open.push(next);
    nc_recurse(n, rgs, i + 1, next + 1, open, out);
    open.pop();
}

/// Kreweras complement: the coarsest partition of the barred points 1̄..n̄ in the
/// interleaving 1 1̄ 2 2̄ … n n̄ that does not cross `pi`.
pub fn kreweras(pi: &NCPartition) -> NCPartition {
    let n = pi.n();
    // ī and j̄ (i < j) can share a block iff no block of pi has an element in
    // {i+1..j} and another outside it; equivalently, the chord (ī, j̄) separates
    // nothing. Union greedily on the coarsest admissible relation.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    let rgs = pi.rgs();
    for i in 0..n {
        for j in i + 1..n {
            // elements strictly after i up to j (0-based i+1..=j) form a union of blocks
            let mut inside = 0u32;
            for e in (i + 1)..=j {
                inside |= 1 << rgs[e];
            }
            let mut outside = 0u32;
            for e in (0..=i).chain(j + 1..n) {
                outside |= 1 << rgs[e];
            }
            if inside & outside == 0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let labels: Vec<u8> = (0..n).map(|i| find(&mut parent, i) as u8).collect();
    NCPartition(SetPartition::canonical(&labels))
}

pub fn catalan(n: usize) -> u64 {
    let mut c = 1u64;
    for k in 0..n as u64 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    c
}

pub fn bell(n: usize) -> u64 {
    // Bell triangle
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![*row.last().unwrap()];
        for v in &row {
            let x = *next.last().unwrap() + v;
            next.push(x);
        }
        row = next;
    }
    row[0]
}

/// μ(π, 1ₙ) on the non-crossing lattice, via the Kreweras complement.
pub fn mobius_to_top(pi: &NCPartition) -> i64 {
    kreweras(pi)
        .block_sizes()
        .iter()
        .map(|&d| {
            let sign = if (d - 1) % 2 == 0 { 1 } else { -1 };
            sign * catalan(d - 1) as i64
        })
        .product()
}

/// Cached NC(n) with Möbius values to the top element and block bitmasks.
pub struct NcTable {
    pub n: usize,
    pub entries: Vec<NcEntry>,
}

pub struct NcEntry {
    pub partition: NCPartition,
    pub mobius: i64,
    pub masks: Vec<u32>,
}

pub fn nc_table(n: usize) -> Result<&'static NcTable> {
    static TABLES: OnceLock<Vec<NcTable>> = OnceLock::new();
    if !(1..=MAX_NC_N).contains(&n) {
        return invalid(format!("NC table needs 1 <= n <= {MAX_NC_N}, got {n}"));
    }
    let tables = TABLES.get_or_init(|| {
        (1..=8)
            .map(|k| NcTable {
                n: k,
                entries: enumerate_nc(k)
                    .expect("in range")
                    .into_iter()
                    .map(|p| NcEntry {
                        mobius: mobius_to_top(&p),
                        masks: p.block_masks(),
                        partition: p,
                    })
                    .collect(),
            })
            .collect()
    });
    tables
        .get(n - 1)
        .ok_or_else(|| crate::Error::InvalidArgument(format!("NC table cached only to n=8, got {n}")))
}
