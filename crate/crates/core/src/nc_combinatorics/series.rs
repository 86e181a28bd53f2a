//! Truncated formal power series and the R-, S-transform relations.
//!
//! A series is a coefficient vector `s[k]` of z^k, truncated at its length.

use super::algebra::Ring;
use crate::error::{invalid, Result};
use num_rational::BigRational;
use num_traits::Zero;
use std::ops::Div;

pub trait Field: Ring + Div<Output = Self> {
    fn is_zero_value(&self) -> bool;
}

impl Field for f64 {
    fn is_zero_value(&self) -> bool {
        *self == 0.0
    }
}

impl Field for num_complex::Complex64 {
    fn is_zero_value(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
}

impl Field for BigRational {
    fn is_zero_value(&self) -> bool {
        self.is_zero()
    }
}

pub fn series_mul<T: Ring>(a: &[T], b: &[T], len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    for (i, ai) in a.iter().enumerate().take(len) {
        for (j, bj) in b.iter().enumerate().take(len - i) {
            out[i + j] = out[i + j].clone() + ai.clone() * bj.clone();
        }
    }
    out
}

/// 1/a, requires a[0] ≠ 0.
pub fn series_reciprocal<T: Field>(a: &[T], len: usize) -> Result<Vec<T>> {
    if a.is_empty() || a[0].is_zero_value() {
        return invalid("series reciprocal needs a nonzero constant term");
    }
    let mut out = vec![T::zero(); len];
    out[0] = T::one() / a[0].clone();
    for k in 1..len {
        let mut s = T::zero();
        for j in 1..=k.min(a.len() - 1) {
            s = s + a[j].clone() * out[k - j].clone();
        }
        out[k] = -(s / a[0].clone());
    }
    Ok(out)
}

/// f(g(z)) with g[0] = 0.
pub fn series_compose<T: Field>(f: &[T], g: &[T], len: usize) -> Result<Vec<T>> {
    if g.first().is_some_and(|g0| !g0.is_zero_value()) {
        return invalid("inner series must vanish at zero");
    }
    let mut out = vec![T::zero(); len];
    let mut pow = vec![T::zero(); len];
    if len > 0 {
        pow[0] = T::one();
    }
    for fk in f.iter().take(len) {
        for i in 0..len {
            out[i] = out[i].clone() + fk.clone() * pow[i].clone();
        }
        pow = series_mul(&pow, g, len);
    }
    Ok(out)
}

/// Compositional inverse of f = f1 z + f2 z² + … (f1 ≠ 0).
pub fn series_reversion<T: Field>(f: &[T], len: usize) -> Result<Vec<T>> {
    if f.len() < 2 || f[1].is_zero_value() {
        return invalid("series reversion needs a nonzero linear coefficient");
    }
    let mut g = vec![T::zero(); len];
    if len < 2 {
        return Ok(g);
    }
    g[1] = T::one() / f[1].clone();
    for k in 2..len {
        // coefficient of z^k in f(g) with g[k] unknown is f1 g_k + (terms in g_{<k})
        let fg = series_compose(f, &g, k + 1)?;
        g[k] = -(fg[k].clone() / f[1].clone());
    }
    Ok(g)
}

/// Free cumulants from moments through the functional inverse of the resolvent.
///
/// With u = 1/z the resolvent is G = u·M(u), M(u) = Σ m_k u^k. Inverting w = u·M(u)
/// gives u(w) = 1/K(w) and R(w) = K(w) − 1/w.
pub fn free_cumulants_via_r_transform<T: Field>(m: &[T]) -> Result<Vec<T>> {
    let n = m.len();
    let mut um = vec![T::zero(); n + 2];
    um[1] = T::one();
    for (k, mk) in m.iter().enumerate() {
        um[k + 2] = mk.clone();
    }
    let u = series_reversion(&um, n + 2)?; // u(w) = w·V(w)
    let v: Vec<T> = u[1..].to_vec();
    let inv_v = series_reciprocal(&v, n + 1)?; // K(w) = (1/w)·inv_v(w)
    Ok(inv_v[1..=n].to_vec())
}

/// Moments from free cumulants through G(K(w)) = w.
pub fn moments_via_r_transform<T: Field>(kappa: &[T]) -> Result<Vec<T>> {
    let n = kappa.len();
    // 1/K(w) = w / (1 + w R(w)) =: u(w); then u·M(u) = w, i.e. M is read off the
    // reversion of u.
    let mut one_wr = vec![T::zero(); n + 1];
    one_wr[0] = T::one();
    for (k, kk) in kappa.iter().enumerate() {
        one_wr[k + 1] = kk.clone();
    }
    let inv = series_reciprocal(&one_wr, n + 1)?;
    let mut u = vec![T::zero(); n + 2];
    for k in 0..=n {
        u[k + 1] = inv[k].clone();
    }
    let w_of_u = series_reversion(&u, n + 2)?; // w(u) = u M(u)
    Ok(w_of_u[2..].to_vec())
}

/// Coefficients of K(G(z)) − z in powers of u = 1/z, from u^0 to u^{len-1}.
pub fn k_of_g_minus_z<T: Field>(kappa: &[T], m: &[T], len: usize) -> Result<Vec<T>> {
    // G = u·M(u); 1/G = (1/u)·(1/M); K(G) − z = (1/u)(1/M − 1) + Σ κ_n G^{n-1}
    let mut mm = vec![T::zero(); len + 1];
    mm[0] = T::one();
    for (k, v) in m.iter().enumerate().take(len) {
        mm[k + 1] = v.clone();
    }
    let inv_m = series_reciprocal(&mm, len + 1)?;
    let mut out: Vec<T> = inv_m[1..].to_vec();
    let mut g = vec![T::zero(); len];
    for k in 0..len.saturating_sub(1) {
        g[k + 1] = mm[k].clone();
    }
    let mut pow = vec![T::zero(); len];
    pow[0] = T::one();
    for kk in kappa.iter() {
        for i in 0..len {
            out[i] = out[i].clone() + kk.clone() * pow[i].clone();
        }
        pow = series_mul(&pow, &g, len);
    }
    Ok(out)
}

/// Coefficients of G(K(w)) − w in powers of w, from w^0 to w^{len-1}.
pub fn g_of_k_minus_w<T: Field>(kappa: &[T], m: &[T], len: usize) -> Result<Vec<T>> {
    let mut one_wr = vec![T::zero(); len];
    one_wr[0] = T::one();
    for (k, kk) in kappa.iter().enumerate().take(len.saturating_sub(1)) {
        one_wr[k + 1] = kk.clone();
    }
    let inv = series_reciprocal(&one_wr, len)?;
    let mut u = vec![T::zero(); len];
    for k in 0..len - 1 {
        u[k + 1] = inv[k].clone();
    }
    // G(K) = Σ_k m_k u^{k+1}, m_0 = 1
    let mut out = vec![T::zero(); len];
    let mut pow = u.clone();
    let mut coeffs = vec![T::one()];
    coeffs.extend(m.iter().cloned());
    for mk in coeffs.iter().take(len) {
        for i in 0..len {
            out[i] = out[i].clone() + mk.clone() * pow[i].clone();
        }
        pow = series_mul(&pow, &u, len);
    }
    if len > 1 {
        out[1] = out[1].clone() - T::one();
    }
    Ok(out)
}

/// S-transform coefficients s_0.. from free cumulants, defined by C(z S(z)) = z
/// with C(z) = Σ κ_n z^n.
pub fn s_transform<T: Field>(kappa: &[T], len: usize) -> Result<Vec<T>> {
    if kappa.is_empty() || kappa[0].is_zero_value() {
        return invalid("S-transform requires a nonzero first cumulant");
    }
    let mut c = vec![T::zero(); len + 1];
    for (k, kk) in kappa.iter().enumerate().take(len) {
        c[k + 1] = kk.clone();
    }
    let inv = series_reversion(&c, len + 1)?;
    Ok(inv[1..].to_vec())
}
