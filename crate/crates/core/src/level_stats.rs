//! Two-replica QSSEP Lindbladian as a gl(4) chain: local generators, the
//! homogeneous C-sectors, symmetry reduction (weights and momentum), dense
//! diagonalization and level-spacing statistics.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Dimension of the local two-replica fermionic space.
pub const LOCAL_DIM: usize = 16;
/// Default relative tolerance (of the spectral width) for merging degenerate levels.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;
/// Largest momentum block that is diagonalized densely.
pub const DEFAULT_DENSE_BUDGET: usize = 4000;
/// ⟨r̃⟩ for a Poisson spectrum, 2 ln 2 − 1.
pub const R_TILDE_POISSON: f64 = 0.386_294_361_119_890_6;
/// ⟨r̃⟩ for the GOE surmise, 4 − 2√3.
pub const R_TILDE_GOE: f64 = 0.535_898_384_862_245_4;
/// Minimum number of levels accepted by [`unfold`].
pub const MIN_UNFOLD_LEVELS: usize = 100;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

// ---------------------------------------------------------------- gl(4)

/// The sixteen local generators G^{AB}, A, B ∈ 1..=4, as real 16×16 matrices.
#[derive(Debug, Clone)]
pub struct Gl4Basis {
    g: Vec<DMatrix<f64>>,
}

impl Gl4Basis {
    /// G^{AB} with 1-based indices.
    pub fn get(&self, a: usize, b: usize) -> &DMatrix<f64> {
        assert!((1..=4).contains(&a) && (1..=4).contains(&b), "gl(4) index out of range");
        &self.g[(a - 1) * 4 + (b - 1)]
    }

    /// Local charge C = Σ_A G^{AA} − 2.
    pub fn charge(&self) -> DMatrix<f64> {
        let mut c = DMatrix::<f64>::identity(LOCAL_DIM, LOCAL_DIM) * -2.0;
        for a in 1..=4 {
            c += self.get(a, a);
        }
        c
    }

    /// Largest entry of [G^{AB}, G^{CD}] − δ^{BC}G^{AD} + δ^{DA}G^{CB} over all 256 index choices.
    pub fn commutator_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 1..=4 {
            for b in 1..=4 {
                for c in 1..=4 {
                    for d in 1..=4 {
                        let (x, y) = (self.get(a, b), self.get(c, d));
                        let mut r = x * y - y * x;
                        if b == c {
                            r -= self.get(a, d);
                        }
                        if d == a {
                            r += self.get(c, b);
                        }
                        worst = worst.max(r.amax());
                    }
                }
            }
        }
        worst
    }

    /// Largest entry of (G^{AB})ᵀ − G^{BA}.
    pub fn adjoint_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 1..=4 {
            for b in 1..=4 {
                worst = worst.max((self.get(a, b).transpose() - self.get(b, a)).amax());
            }
        }
        worst
    }

    /// Weight (G^{11}, …, G^{44}) of a local basis state; all G^{AA} are diagonal.
    pub fn weight_of(&self, state: usize) -> [i32; 4] {
        let mut w = [0; 4];
        for (a, wa) in w.iter_mut().enumerate() {
            *wa = self.get(a + 1, a + 1)[(state, state)].round() as i32;
        }
        w
    }
}

/// The local generators in the fermionic basis
/// |0⟩..|15⟩ = c₁†c₂, n₁n₂, n₁(1−n₂), (1−n₁)n₂, (1−n₁)(1−n₂), c₁c₂†, n₁c₂, c₁n₂,
/// (1−n₁)c₂, c₁(1−n₂), n₁c₂†, c₁†n₂, (1−n₁)c₂†, c₁†(1−n₂), c₁c₂, c₁†c₂†.
///
/// G³³ contains states 9 and 13 and G⁴⁴ contains 7 and 11; this is the assignment
/// under which every commutator closes.
pub fn gl4_generators() -> Gl4Basis {
    let e = |entries: &[(i8, usize, usize)]| {
        let mut m = DMatrix::<f64>::zeros(LOCAL_DIM, LOCAL_DIM);
        for &(s, r, c) in entries {
            m[(r, c)] = s as f64;
        }
        m
    };
    let diag = |states: &[usize]| e(&states.iter().map(|&s| (1, s, s)).collect::<Vec<_>>());
    let upper: [((usize, usize), DMatrix<f64>); 6] = [
        ((1, 2), e(&[(1, 1, 3), (1, 2, 4), (1, 6, 8), (1, 10, 12)])),
        ((1, 3), e(&[(1, 0, 4), (1, 1, 5), (-1, 6, 9), (-1, 11, 12)])),
        ((1, 4), e(&[(1, 0, 3), (-1, 2, 5), (-1, 6, 7), (1, 13, 12)])),
        ((2, 3), e(&[(-1, 0, 2), (1, 3, 5), (-1, 8, 9), (1, 11, 10)])),
        ((2, 4), e(&[(-1, 0, 1), (-1, 4, 5), (-1, 8, 7), (-1, 13, 10)])),
        ((3, 4), e(&[(1, 2, 1), (1, 4, 3), (1, 9, 7), (1, 13, 11)])),
    ];
    let mut g = vec![DMatrix::<f64>::zeros(LOCAL_DIM, LOCAL_DIM); 16];
    g[0] = diag(&[0, 1, 2, 6, 10, 11, 13, 15]);
    g[5] = diag(&[0, 3, 4, 8, 11, 12, 13, 15]);
    g[10] = diag(&[2, 4, 5, 9, 10, 12, 13, 15]);
    g[15] = diag(&[1, 3, 5, 7, 10, 11, 12, 15]);
    for ((a, b), m) in upper {
        g[(b - 1) * 4 + (a - 1)] = m.transpose();
        g[(a - 1) * 4 + (b - 1)] = m;
    }
    Gl4Basis { g }
}

// ---------------------------------------------------------------- sectors

/// Homogeneous C-sector of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CSector {
    /// C = 0 on every site, local dimension 6 (so(6) vector).
    Zero,
    /// C = +1 on every site, local dimension 4.
    PlusOne,
    /// C = −1 on every site, local dimension 4.
    MinusOne,
}

impl CSector {
    pub fn charge(self) -> i32 {
        match self {
            CSector::Zero => 0,
            CSector::PlusOne => 1,
            CSector::MinusOne => -1,
        }
    }

    /// Local basis states (indices into the 16-dimensional space), in increasing order.
    pub fn local_states(self) -> Vec<usize> {
        let c = gl4_generators().charge();
        (0..LOCAL_DIM).filter(|&s| c[(s, s)].round() as i32 == self.charge()).collect()
    }

    pub fn local_dim(self) -> usize {
        match self {
            CSector::Zero => 6,
            _ => 4,
        }
    }

    /// Largest chain length accepted by [`build_sector_chain`].
    pub fn max_sites(self) -> usize {
        match self {
            CSector::Zero => 10,
            _ => 11,
        }
    }

    fn weight_per_site(self) -> i32 {
        self.charge() + 2
    }
}

/// Swap operator on V ⊗ V with index a·d + b.
pub fn swap_operator(d: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            p[(b * d + a, a * d + b)] = 1.0;
        }
    }
    p
}

/// Oriented wedge e_a ∧ e_b (1-based) represented by each C = 0 local state, in
/// [`CSector::local_states`] order. The orientation of state 0 carries the sign of
/// the fermionic basis vector c₁†c₂.
pub const C0_WEDGES: [(usize, usize); 6] = [(2, 1), (1, 4), (1, 3), (2, 4), (2, 3), (3, 4)];

fn levi_civita(p: [usize; 4]) -> f64 {
    let mut sign = 1.0;
    for i in 0..4 {
        for j in i + 1..4 {
            if p[i] == p[j] {
                return 0.0;
            }
            if p[i] > p[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Invariant pairing on Λ²C⁴: ω_{ij} = ε_{abcd} for i = e_a ∧ e_b, j = e_c ∧ e_d.
pub fn so6_pairing() -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |i, j| {
        let ((a, b), (c, d)) = (C0_WEDGES[i], C0_WEDGES[j]);
        levi_civita([a, b, c, d])
    })
}

/// Trace operator Q = |ω⟩⟨ω| on the C = 0 two-site space.
pub fn trace_operator() -> DMatrix<f64> {
    let w = so6_pairing();
    let v = DMatrix::from_iterator(36, 1, (0..36).map(|k| w[(k / 6, k % 6)]));
    &v * v.transpose()
}

/// Local two-site term Σ_{AB} G^{AB} ⊗ G^{BA} − ½(C ⊗ 1 + 1 ⊗ C) − 2 restricted to a
/// homogeneous sector (the sector is invariant).
pub fn two_site_term_from_generators(basis: &Gl4Basis, sector: CSector) -> DMatrix<f64> {
    let states = sector.local_states();
    let d = states.len();
    let c = basis.charge();
    let mut h = DMatrix::zeros(d * d, d * d);
    for (ro, &(r1, r2)) in pairs(&states).iter().enumerate() {
        for (co, &(c1, c2)) in pairs(&states).iter().enumerate() {
            let mut v = 0.0;
            for a in 1..=4 {
                for b in 1..=4 {
                    v += basis.get(a, b)[(r1, c1)] * basis.get(b, a)[(r2, c2)];
                }
            }
            if ro == co {
                v -= 0.5 * (c[(r1, r1)] + c[(r2, r2)]) + 2.0;
            }
            h[(ro, co)] = v;
        }
    }
    h
}

fn pairs(states: &[usize]) -> Vec<(usize, usize)> {
    states.iter().flat_map(|&a| states.iter().map(move |&b| (a, b))).collect()
}

/// Two-site term of the deformed chain: P − 1 in C = ±1, P − gQ − 1 in C = 0
/// (g = 1 is QSSEP, g = ½ the integrable so(6) chain shifted by −1).
pub fn two_site_term(sector: CSector, g: f64) -> Result<DMatrix<f64>> {
    if !g.is_finite() {
        return invalid("deformation g must be finite");
    }
    let d = sector.local_dim();
    let id = DMatrix::<f64>::identity(d * d, d * d);
    match sector {
        CSector::Zero => Ok(swap_operator(d) - trace_operator() * g - id),
        _ if g != 1.0 => invalid("the deformation g only applies to the C = 0 sector"),
        _ => Ok(swap_operator(d) - id),
    }
}

/// Fixed total weight (G^{11}, …, G^{44} summed over sites) inside a homogeneous sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WeightSector {
    pub sector: CSector,
    pub n: usize,
    pub weight: [i32; 4],
}

impl WeightSector {
    pub fn new(sector: CSector, n: usize, weight: [i32; 4]) -> Result<Self> {
        if n < 2 {
            return invalid("need at least two sites");
        }
        let total: i32 = weight.iter().sum();
        if weight.iter().any(|&w| w < 0 || w as usize > n) || total != sector.weight_per_site() * n as i32 {
            return invalid(format!("weight {weight:?} is not reachable on {n} sites of {sector:?}"));
        }
        Ok(Self { sector, n, weight })
    }

    /// From the number of times each local state (in [`CSector::local_states`] order) appears.
    pub fn from_counts(sector: CSector, counts: &[usize]) -> Result<Self> {
        let basis = gl4_generators();
        let states = sector.local_states();
        if counts.len() != states.len() {
            return invalid(format!("need {} occupation counts", states.len()));
        }
        let mut w = [0; 4];
        for (&s, &k) in states.iter().zip(counts) {
            let ws = basis.weight_of(s);
            for a in 0..4 {
                w[a] += ws[a] * k as i32;
            }
        }
        Self::new(sector, counts.iter().sum(), w)
    }

    /// From the Cartan charges (J₁ᶻ, J₂ᶻ, (C₁ − C₂)/2) with J₁ᶻ = G¹¹ − G²², J₂ᶻ = G⁴⁴ − G³³,
    /// C₁ = G¹¹ + G²² − 1, C₂ = G³³ + G⁴⁴ − 1 summed over sites.
    pub fn from_cartan(sector: CSector, n: usize, cartan: [f64; 3]) -> Result<Self> {
        let s = (sector.weight_per_site() * n as i32) as f64;
        let w12 = (s + 2.0 * cartan[2]) / 2.0;
        let w34 = (s - 2.0 * cartan[2]) / 2.0;
        let w = [(w12 + cartan[0]) / 2.0, (w12 - cartan[0]) / 2.0, (w34 - cartan[1]) / 2.0, (w34 + cartan[1]) / 2.0];
        if w.iter().any(|v| (v - v.round()).abs() > 1e-9) {
            return invalid(format!("Cartan charges {cartan:?} are not integral on {n} sites"));
        }
        Self::new(sector, n, w.map(|v| v.round() as i32))
    }

    pub fn cartan(&self) -> [f64; 3] {
        let w = self.weight.map(|v| v as f64);
        [w[0] - w[1], w[3] - w[2], (w[0] + w[1] - w[2] - w[3]) / 2.0]
    }
}

/// Configurations (base-d codes, site j is digit j) with the given total weight, sorted.
pub fn weight_sector_basis(ws: &WeightSector) -> Result<Vec<u64>> {
    let basis = gl4_generators();
    let weights: Vec<[i32; 4]> = ws.sector.local_states().iter().map(|&s| basis.weight_of(s)).collect();
    let d = weights.len() as u64;
    let mut out = Vec::new();
    let mut digits = vec![0usize; ws.n];
    fn rec(site: usize, rem: [i32; 4], weights: &[[i32; 4]], digits: &mut Vec<usize>, d: u64, out: &mut Vec<u64>) {
        let left = (digits.len() - site) as i32;
        if rem.iter().any(|&r| r < 0 || r > left) {
            return;
        }
        if site == digits.len() {
            out.push(digits.iter().rev().fold(0u64, |acc, &x| acc * d + x as u64));
            return;
        }
        for (s, w) in weights.iter().enumerate() {
            digits[site] = s;
            let r = [rem[0] - w[0], rem[1] - w[1], rem[2] - w[2], rem[3] - w[3]];
            rec(site + 1, r, weights, digits, d, out);
        }
    }
    rec(0, ws.weight, &weights, &mut digits, d, &mut out);
    if out.is_empty() {
        return invalid(format!("weight sector {:?} is empty", ws.weight));
    }
    out.sort_unstable();
    Ok(out)
}

fn digits_of(code: u64, d: u64, n: usize) -> Vec<usize> {
    let mut c = code;
    (0..n)
        .map(|_| {
            let x = (c % d) as usize;
            c /= d;
            x
        })
        .collect()
}

fn code_of(digits: &[usize], d: u64) -> u64 {
    digits.iter().rev().fold(0u64, |acc, &x| acc * d + x as u64)
}

/// Translation by one site: site j moves to j + 1 (periodic).
pub fn translate(code: u64, d: usize, n: usize) -> u64 {
    let d = d as u64;
    let top = d.pow(n as u32 - 1);
    let last = code / top;
    (code % top) * d + last
}

/// Apply the periodic chain Σ_j h_{j,j+1} to one configuration.
fn apply_chain(code: u64, h: &DMatrix<f64>, d: usize, n: usize, mut emit: impl FnMut(u64, f64)) {
    let digits = digits_of(code, d as u64, n);
    let mut work = digits.clone();
    for j in 0..n {
        let k = (j + 1) % n;
        let col = digits[j] * d + digits[k];
        for row in 0..d * d {
            let v = h[(row, col)];
            if v != 0.0 {
                work[j] = row / d;
                work[k] = row % d;
                emit(code_of(&work, d as u64), v);
                work[j] = digits[j];
                work[k] = digits[k];
            }
        }
    }
}

/// Dense chain matrix in the configuration basis of a weight sector (small systems).
pub fn weight_sector_matrix(ws: &WeightSector, h: &DMatrix<f64>, budget: usize) -> Result<(Vec<u64>, DMatrix<f64>)> {
    let basis = weight_sector_basis(ws)?;
    if basis.len() > budget {
        return Err(Error::Budget(format!("weight sector dimension {} exceeds {budget}", basis.len())));
    }
    let d = ws.sector.local_dim();
    let index: HashMap<u64, usize> = basis.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut m = DMatrix::zeros(basis.len(), basis.len());
    for (col, &c) in basis.iter().enumerate() {
        let mut bad = None;
        apply_chain(c, h, d, ws.n, |r, v| match index.get(&r) {
            Some(&row) => m[(row, col)] += v,
            None => bad = Some(r),
        });
        if let Some(r) = bad {
            return Err(Error::InvariantViolation(format!("two-site term leaves the weight sector (code {r})")));
        }
    }
    Ok((basis, m))
}

/// Momentum representatives: smallest code in each translation orbit, with its period.
struct Orbits {
    reps: Vec<(u64, usize)>,
    /// configuration → (orbit index, l) with T^l rep = configuration
    lookup: HashMap<u64, (usize, usize)>,
}

fn orbits(basis: &[u64], d: usize, n: usize) -> Orbits {
    let mut reps = Vec::new();
    let mut lookup = HashMap::with_capacity(basis.len());
    for &c in basis {
        if lookup.contains_key(&c) {
            continue;
        }
        let idx = reps.len();
        let mut x = c;
        let mut period = n;
        for l in 0..n {
            if l > 0 && x == c {
                period = l;
                break;
            }
            lookup.insert(x, (idx, l));
            x = translate(x, d, n);
        }
        reps.push((c, period));
    }
    Orbits { reps, lookup }
}

/// Dimension of each momentum block k = 2πκ/N, κ = 0..N−1; they sum to the weight-sector dimension.
pub fn momentum_sector_dims(ws: &WeightSector) -> Result<Vec<usize>> {
    let basis = weight_sector_basis(ws)?;
    let o = orbits(&basis, ws.sector.local_dim(), ws.n);
    Ok((0..ws.n).map(|kappa| o.reps.iter().filter(|(_, p)| kappa * p % ws.n == 0).count()).collect())
}

/// How the two-site term of a sector chain is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainConstruction {
    /// From P and Q directly.
    Direct,
    /// From Σ G ⊗ G restricted to the sector (g must be 1).
    Generators,
}

/// Chain restricted to a weight sector and momentum k = 2πκ/N.
#[derive(Debug, Clone)]
pub struct SectorOperator {
    pub weight_sector: WeightSector,
    pub kappa: usize,
    pub g: f64,
    /// Hermitian matrix in the normalized momentum basis.
    pub matrix: DMatrix<C64>,
}

impl SectorOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn momentum(&self) -> f64 {
        2.0 * PI * self.kappa as f64 / self.weight_sector.n as f64
    }

    /// Largest entry of H − H†.
    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Sorted real eigenvalues (dense Hermitian solver).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(|a, b| a.total_cmp(b));
        e
    }
}

/// Build the (possibly deformed) chain in a weight sector at momentum 2πκ/N. The momentum
/// projection happens before the matrix is materialized.
pub fn build_sector_chain(
    ws: &WeightSector,
    g: f64,
    kappa: usize,
    construction: ChainConstruction,
    budget: usize,
) -> Result<SectorOperator> {
    let n = ws.n;
    if n > ws.sector.max_sites() {
        return invalid(format!("{:?} chains are limited to {} sites", ws.sector, ws.sector.max_sites()));
    }
    if kappa >= n {
        return invalid(format!("momentum index {kappa} must be below N = {n}"));
    }
    let h = match construction {
        ChainConstruction::Direct => two_site_term(ws.sector, g)?,
        ChainConstruction::Generators if g != 1.0 => {
            return invalid("the generator construction only gives g = 1");
        }
        ChainConstruction::Generators => two_site_term_from_generators(&gl4_generators(), ws.sector),
    };
    let d = ws.sector.local_dim();
    let basis = weight_sector_basis(ws)?;
    let o = orbits(&basis, d, n);
    let mut block_index = vec![usize::MAX; o.reps.len()];
    let mut dim = 0;
    for (i, (_, p)) in o.reps.iter().enumerate() {
        if kappa * p % n == 0 {
            block_index[i] = dim;
            dim += 1;
        }
    }
    if dim == 0 {
        return invalid(format!("momentum sector κ = {kappa} is empty"));
    }
    if dim > budget {
        return Err(Error::Budget(format!("momentum block dimension {dim} exceeds {budget}")));
    }
    let k = 2.0 * PI * kappa as f64 / n as f64;
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for (i, &(rep, p)) in o.reps.iter().enumerate() {
        let col = block_index[i];
        if col == usize::MAX {
            continue;
        }
        let mut bad = None;
        apply_chain(rep, &h, d, n, |s, v| match o.lookup.get(&s) {
            Some(&(j, l)) => {
                let row = block_index[j];
                if row != usize::MAX {
                    let ratio = (p as f64 / o.reps[j].1 as f64).sqrt();
                    m[(row, col)] += C64::from_polar(v * ratio, k * l as f64);
                }
            }
            None => bad = Some(s),
        });
        if let Some(s) = bad {
            return Err(Error::InvariantViolation(format!("two-site term leaves the weight sector (code {s})")));
        }
    }
    Ok(SectorOperator { weight_sector: *ws, kappa, g, matrix: m })
}

// ---------------------------------------------------------------- statistics

/// Keep one representative per cluster of levels whose consecutive gaps are at most
/// `rel_tol` times the spectral width.
pub fn remove_degeneracies(eigenvalues: &[f64], rel_tol: f64) -> Vec<f64> {
    let mut e: Vec<f64> = eigenvalues.to_vec();
    e.sort_by(|a, b| a.total_cmp(b));
    let Some((&lo, &hi)) = e.first().zip(e.last()) else {
        return e;
    };
    let tol = rel_tol * (hi - lo);
    let mut out: Vec<f64> = Vec::with_capacity(e.len());
    let mut prev = f64::NEG_INFINITY;
    for x in e {
        if x - prev > tol {
            out.push(x);
        }
        prev = x;
    }
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] * (1.0 - f) + sorted[j] * f
}

/// Silverman's rule-of-thumb bandwidth 0.9 min(σ, IQR/1.34) n^{−1/5}.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Unfold a spectrum: x ↦ n·F̂(x) with F̂ the Gaussian-kernel smoothed empirical CDF,
/// then an affine rescaling so the levels span [0, n − 1]. Returns them in increasing order.
pub fn unfold(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    if eigenvalues.len() < MIN_UNFOLD_LEVELS {
        return invalid(format!("unfolding needs at least {MIN_UNFOLD_LEVELS} levels, got {}", eigenvalues.len()));
    }
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return invalid("non-finite eigenvalue");
    }
    let mut e = eigenvalues.to_vec();
    e.sort_by(|a, b| a.total_cmp(b));
    let h = silverman_bandwidth(&e);
    if !(h > 0.0) {
        return invalid("spectrum has zero spread");
    }
    let cdf = |x: f64| e.iter().map(|&y| 0.5 * libm::erfc((y - x) / (h * std::f64::consts::SQRT_2))).sum::<f64>();
    let raw: Vec<f64> = e.iter().map(|&x| cdf(x)).collect();
    // the kernel leaks mass past the extreme levels; rescale to unit mean spacing
    let (lo, hi) = (raw[0], raw[raw.len() - 1]);
    let scale = (raw.len() - 1) as f64 / (hi - lo);
    Ok(raw.iter().map(|x| (x - lo) * scale).collect())
}

/// Equal-width histogram normalized as a density.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in values {
            if v >= lo && v <= hi {
                counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        let total = values.len().max(1) as f64;
        Self {
            edges: (0..=bins).map(|i| lo + width * i as f64).collect(),
            density: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
        }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Spacing and ratio statistics of one spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct SpacingStats {
    /// Levels after degeneracy removal, sorted.
    pub eigenvalues: Vec<f64>,
    pub n_eig: usize,
    /// Spacings of the unfolded levels, or of the raw levels rescaled to unit mean.
    pub spacings: Vec<f64>,
    /// r = s_n / s_{n−1} from the raw levels.
    pub ratios: Vec<f64>,
    /// r̃ = min(r, 1/r).
    pub r_tilde: Vec<f64>,
    pub r_tilde_mean: f64,
    /// Bootstrap standard error of ⟨r̃⟩.
    pub r_tilde_err: f64,
    pub spacing_histogram: Histogram,
    pub ratio_histogram: Histogram,
}

const BOOTSTRAP_SAMPLES: usize = 400;
const BOOTSTRAP_SEED: u64 = 0x5eed;

/// Spacings, ratios, histograms and ⟨r̃⟩ of a spectrum that has already had its
/// degeneracies removed.
pub fn spacing_statistics(eigenvalues: &[f64], use_unfolding: bool) -> Result<SpacingStats> {
    if eigenvalues.len() < 3 {
        return invalid("need at least three levels");
    }
    let mut e = eigenvalues.to_vec();
    e.sort_by(|a, b| a.total_cmp(b));
    let raw: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    let spacings = if use_unfolding {
        unfold(&e)?.windows(2).map(|w| w[1] - w[0]).collect()
    } else {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        raw.iter().map(|s| s / mean).collect::<Vec<_>>()
    };
    let mut ratios = Vec::new();
    let mut r_tilde = Vec::new();
    for w in raw.windows(2) {
        if w[0] > 0.0 {
            ratios.push(w[1] / w[0]);
        }
        let (lo, hi) = (w[0].min(w[1]), w[0].max(w[1]));
        if hi > 0.0 {
            r_tilde.push(lo / hi);
        }
    }
    if r_tilde.is_empty() {
        return invalid("all spacings vanish");
    }
    let mean = r_tilde.iter().sum::<f64>() / r_tilde.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let boots: Vec<f64> = (0..BOOTSTRAP_SAMPLES)
        .map(|_| (0..r_tilde.len()).map(|_| r_tilde[rng.random_range(0..r_tilde.len())]).sum::<f64>() / r_tilde.len() as f64)
        .collect();
    let bmean = boots.iter().sum::<f64>() / boots.len() as f64;
    let err = (boots.iter().map(|b| (b - bmean).powi(2)).sum::<f64>() / (boots.len() - 1) as f64).sqrt();
    Ok(SpacingStats {
        n_eig: e.len(),
        spacing_histogram: Histogram::new(&spacings, 0.0, 4.0, 40),
        ratio_histogram: Histogram::new(&r_tilde, 0.0, 1.0, 20),
        eigenvalues: e,
        spacings,
        ratios,
        r_tilde,
        r_tilde_mean: mean,
        r_tilde_err: err,
    })
}

/// Poisson spacing density e^{−s}.
pub fn poisson_spacing_density(s: f64) -> f64 {
    (-s).exp()
}

/// Wigner surmise (πs/2) e^{−πs²/4}.
pub fn wigner_surmise(s: f64) -> f64 {
    PI * s / 2.0 * (-PI * s * s / 4.0).exp()
}

/// Ratio density 1/(1 + r)² of a Poisson spectrum.
pub fn poisson_ratio_density(r: f64) -> f64 {
    1.0 / (1.0 + r).powi(2)
}

/// GOE surmise for the ratio, (27/8)(r + r²)/(1 + r + r²)^{5/2}.
pub fn goe_ratio_density(r: f64) -> f64 {
    27.0 / 8.0 * (r + r * r) / (1.0 + r + r * r).powf(2.5)
}

/// Kolmogorov–Smirnov distance of a sample against a CDF and its asymptotic p-value.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    let lam = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * (k as f64 * lam).powi(2)).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// Eigenvalues of a GOE matrix (H = (A + Aᵀ)/√2, A with i.i.d. standard normal entries).
pub fn goe_eigenvalues(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(rand_distr::StandardNormal));
    let h = (&a + a.transpose()) / std::f64::consts::SQRT_2;
    let mut e: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(|x, y| x.total_cmp(y));
    e
}

/// Levels of a Poisson spectrum: cumulative sums of i.i.d. unit exponentials.
pub fn poisson_levels(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = 0.0;
    (0..count)
        .map(|_| {
            let s: f64 = rng.sample(rand_distr::Exp1);
            x += s;
            x
        })
        .collect()
}

// ---------------------------------------------------------------- CSV rows

/// One eigenvalue of a sector.
#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueRow {
    pub sector: String,
    pub n: usize,
    pub kappa: usize,
    pub g: f64,
    pub index: usize,
    pub eigenvalue: f64,
}

/// One histogram bin.
#[derive(Debug, Clone, Serialize)]
pub struct HistogramRow {
    pub kind: String,
    pub center: f64,
    pub density: f64,
    pub reference_poisson: f64,
    pub reference_goe: f64,
}

/// Per-sector summary.
#[derive(Debug, Clone, Serialize)]
pub struct LevelSummaryRow {
    pub sector: String,
    pub n: usize,
    pub k: f64,
    pub weights: String,
    pub g: f64,
    pub dim: usize,
    pub n_eig: usize,
    pub r_tilde_mean: f64,
    pub r_tilde_err: f64,
}

pub fn sector_label(s: CSector) -> &'static str {
    match s {
        CSector::Zero => "c0",
        CSector::PlusOne => "c+1",
        CSector::MinusOne => "c-1",
    }
}

/// Histogram rows with Poisson and GOE reference curves.
pub fn histogram_rows(stats: &SpacingStats) -> Vec<HistogramRow> {
    let mut rows = Vec::new();
    for (kind, h) in [("spacing", &stats.spacing_histogram), ("ratio", &stats.ratio_histogram)] {
        for (c, &dens) in h.centers().into_iter().zip(&h.density) {
            let (p, g) = if kind == "spacing" {
                (poisson_spacing_density(c), wigner_surmise(c))
            } else {
                // r̃ ∈ [0, 1] folds r and 1/r: density doubles
                (2.0 * poisson_ratio_density(c), 2.0 * goe_ratio_density(c))
            };
            rows.push(HistogramRow { kind: kind.into(), center: c, density: dens, reference_poisson: p, reference_goe: g });
        }
    }
    rows
}
