//! Dense Hermitian coherence matrix with split real/imaginary storage.

use crate::error::{invalid, Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

/// G_ij = Tr(ρ c_i† c_j), stored row-major as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceMatrix {
    n: usize,
    pub(crate) re: Vec<f64>,
    pub(crate) im: Vec<f64>,
}

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const EIGENVALUE_TOL: f64 = 1e-9;

impl CoherenceMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            re: vec![0.0; n * n],
            im: vec![0.0; n * n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut g = Self::zeros(n);
        for (i, &v) in d.iter().enumerate() {
            g.re[i * n + i] = v;
        }
        g
    }

    /// Validates Hermiticity and the eigenvalue bounds.
    pub fn from_dmatrix(m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return invalid("coherence matrix must be square and nonempty");
        }
        let n = m.nrows();
        let mut g = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                g.re[i * n + j] = m[(i, j)].re;
                g.im[i * n + j] = m[(i, j)].im;
            }
        }
        g.validate()?;
        Ok(g)
    }

    pub fn to_dmatrix(&self) -> DMatrix<C64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| C64::new(self.re[i * n + j], self.im[i * n + j]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let k = i * self.n + j;
        C64::new(self.re[k], self.im[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.re[i * self.n + i]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let (a, b) = (i * n + j, j * n + i);
                worst = worst
                    .max((self.re[a] - self.re[b]).abs())
                    .max((self.im[a] + self.im[b]).abs());
            }
        }
        worst
    }

    /// Replaces G by (G + G†)/2.
    pub fn hermitize(&mut self) {
        let n = self.n;
        for i in 0..n {
            self.im[i * n + i] = 0.0;
            for j in i + 1..n {
                let (a, b) = (i * n + j, j * n + i);
                let r = 0.5 * (self.re[a] + self.re[b]);
                let m = 0.5 * (self.im[a] - self.im[b]);
                self.re[a] = r;
                self.re[b] = r;
                self.im[a] = m;
                self.im[b] = -m;
            }
        }
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(self.to_dmatrix())
    }

    /// Ascending eigenvalues of the diagonal block on sites `lo..hi`.
    pub fn block_eigenvalues(&self, lo: usize, hi: usize) -> Vec<f64> {
        let k = hi - lo;
        let m = DMatrix::from_fn(k, k, |i, j| self.get(lo + i, lo + j));
        sorted_eigenvalues(m)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hermiticity_defect();
        if h > HERMITICITY_TOL {
            return Err(Error::InvariantViolation(format!(
                "coherence matrix not Hermitian (defect {h:.3e})"
            )));
        }
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo < -EIGENVALUE_TOL || hi > 1.0 + EIGENVALUE_TOL {
            return Err(Error::InvariantViolation(format!(
                "coherence matrix eigenvalues outside [0, 1]: [{lo:.3e}, {hi:.12}]"
            )));
        }
        Ok(())
    }

    /// Writes the conjugate transpose of `self` into `out`.
    pub(crate) fn adjoint_into(&self, out: &mut CoherenceMatrix) {
        let n = self.n;
        const B: usize = 16;
        for ib in (0..n).step_by(B) {
            for jb in (0..n).step_by(B) {
                for i in ib..(ib + B).min(n) {
                    for j in jb..(jb + B).min(n) {
                        out.re[i * n + j] = self.re[j * n + i];
                        out.im[i * n + j] = -self.im[j * n + i];
                    }
                }
            }
        }
    }

    /// Rows (j, k) ← u·(row j, row k) with u = [[u00, u01], [u10, u11]].
    pub(crate) fn mix_rows(&mut self, j: usize, k: usize, u: [C64; 4]) {
        let (lo, hi, u) = if j < k {
            (j, k, u)
        } else {
            (k, j, [u[3], u[2], u[1], u[0]])
        };
        let n = self.n;
        let (re_a, re_b) = self.re.split_at_mut(hi * n);
        let (im_a, im_b) = self.im.split_at_mut(hi * n);
        let (xr, xi) = (&mut re_a[lo * n..lo * n + n], &mut im_a[lo * n..lo * n + n]);
        let (yr, yi) = (&mut re_b[..n], &mut im_b[..n]);
        let (xi, yr, yi) = (&mut xi[..xr.len()], &mut yr[..xr.len()], &mut yi[..xr.len()]);
        let [a, b, c, d] = u;
        for t in 0..xr.len() {
            let (pr, pi, qr, qi) = (xr[t], xi[t], yr[t], yi[t]);
            xr[t] = a.re * pr - a.im * pi + b.re * qr - b.im * qi;
            xi[t] = a.re * pi + a.im * pr + b.re * qi + b.im * qr;
            yr[t] = c.re * pr - c.im * pi + d.re * qr - d.im * qi;
            yi[t] = c.re * pi + c.im * pr + d.re * qi + d.im * qr;
        }
    }

    /// out_row(i) += u · self_row(j).
    #[inline]
    pub(crate) fn axpy_row(&self, j: usize, u: C64, out_re: &mut [f64], out_im: &mut [f64]) {
        let n = self.n;
        let (sr, si) = (&self.re[j * n..j * n + n], &self.im[j * n..j * n + n]);
        let (out_re, out_im, si) = (&mut out_re[..n], &mut out_im[..n], &si[..n]);
        for t in 0..n {
            out_re[t] += u.re * sr[t] - u.im * si[t];
            out_im[t] += u.re * si[t] + u.im * sr[t];
        }
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        let n = self.n;
        (&mut self.re[i * n..i * n + n], &mut self.im[i * n..i * n + n])
    }

    pub(crate) fn scale_row_and_column(&mut self, p: usize, d: f64) {
        let n = self.n;
        for t in 0..n {
            self.re[p * n + t] *= d;
            self.im[p * n + t] *= d;
            self.re[t * n + p] *= d;
            self.im[t * n + p] *= d;
        }
    }

    pub(crate) fn add_to_diagonal(&mut self, p: usize, v: f64) {
        self.re[p * self.n + p] += v;
    }

    pub(crate) fn fill_zero(&mut self) {
        self.re.fill(0.0);
        self.im.fill(0.0);
    }
}

pub(crate) fn sorted_eigenvalues(m: DMatrix<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}
