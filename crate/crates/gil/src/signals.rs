//! Finite Gaussian mixtures and their exact L² algebra.
//!
//! A mixture is `Σ c_i φ(t − s_i)` with the Gaussian window `φ(t) = e^{−πt²}`.
//! Inner products between translates have the closed form
//! `⟨T_sφ, T_rφ⟩ = 2^{−1/2} e^{−π(s−r)²/2}`, so every norm and distance
//! below is exact up to rounding.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Shifts closer than this are treated as the same atom.
pub const SHIFT_MERGE_TOL: f64 = 1e-12;

/// One atom `coeff · φ(t − shift)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: Complex64,
    pub shift: f64,
}

/// Finite linear combination of translated Gaussians.
///
/// Terms are kept sorted by shift with pairwise distinct shifts. Terms whose
/// coefficient cancels to exactly zero are dropped, so the empty mixture is
/// the zero signal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianMixture {
    terms: Vec<Term>,
}

impl GaussianMixture {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    /// The window `φ` itself.
    pub fn gaussian() -> Self {
        Self::translate(0.0)
    }

    /// `u_a = T_a φ`.
    pub fn translate(shift: f64) -> Self {
        Self::from_terms([(Complex64::new(1.0, 0.0), shift)])
    }

    /// Builds a mixture, merging shifts within [`SHIFT_MERGE_TOL`].
    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (Complex64, f64)>,
    {
        let mut raw: Vec<Term> = terms
            .into_iter()
            .map(|(coeff, shift)| Term { coeff, shift })
            .collect();
        raw.sort_by(|a, b| a.shift.total_cmp(&b.shift));
        let mut merged: Vec<Term> = Vec::with_capacity(raw.len());
        for t in raw {
            match merged.last_mut() {
                Some(last) if (t.shift - last.shift).abs() <= SHIFT_MERGE_TOL => {
                    last.coeff += t.coeff;
                }
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != Complex64::new(0.0, 0.0));
        Self { terms: merged }
    }

    /// Real-coefficient convenience constructor.
    pub fn from_real_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        Self::from_terms(terms.into_iter().map(|(c, s)| (Complex64::new(c, 0.0), s)))
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when every coefficient has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.im == 0.0)
    }

    /// Largest `|shift|`, or 0 for the zero signal.
    pub fn max_abs_shift(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.shift.abs()))
    }

    /// Smallest and largest shift; `(0, 0)` for the zero signal.
    pub fn shift_range(&self) -> (f64, f64) {
        match (self.terms.first(), self.terms.last()) {
            (Some(lo), Some(hi)) => (lo.shift, hi.shift),
            _ => (0.0, 0.0),
        }
    }

    pub fn evaluate(&self, t: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|term| term.coeff * (-PI * (t - term.shift).powi(2)).exp())
            .sum()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_terms(self.terms.iter().map(|t| (t.coeff * c, t.shift)))
    }

    /// `t ↦ f(−t)`.
    pub fn reflect(&self) -> Self {
        Self::from_terms(self.terms.iter().map(|t| (t.coeff, -t.shift)))
    }

    pub fn norm(&self) -> f64 {
        inner_product(self, self).re.max(0.0).sqrt()
    }
}

impl Add for &GaussianMixture {
    type Output = GaussianMixture;
    fn add(self, rhs: &GaussianMixture) -> GaussianMixture {
        GaussianMixture::from_terms(
            self.terms
                .iter()
                .chain(&rhs.terms)
                .map(|t| (t.coeff, t.shift)),
        )
    }
}

impl Neg for &GaussianMixture {
    type Output = GaussianMixture;
    fn neg(self) -> GaussianMixture {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Sub for &GaussianMixture {
    type Output = GaussianMixture;
    fn sub(self, rhs: &GaussianMixture) -> GaussianMixture {
        self + &(-rhs)
    }
}

impl Mul<&GaussianMixture> for Complex64 {
    type Output = GaussianMixture;
    fn mul(self, rhs: &GaussianMixture) -> GaussianMixture {
        rhs.scale(self)
    }
}

/// Lobe separation of the adversarial pair; always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SeparationParam(f64);

impl SeparationParam {
    pub fn new(a: f64) -> Result<Self> {
        if a.is_finite() && a > 0.0 {
            Ok(Self(a))
        } else {
            Err(invalid(format!("separation a must be finite and > 0, got {a}")))
        }
    }

    /// The `k`-th point `a_k = k·q` of a discretized family.
    pub fn discretized(k: u32, q: f64) -> Result<Self> {
        Self::new(k as f64 * q)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `(f_a^+, f_a^−) = (u_{−a} + u_a, u_{−a} − u_a)`.
pub fn make_pair(a: SeparationParam) -> (GaussianMixture, GaussianMixture) {
    let a = a.value();
    (
        GaussianMixture::from_real_terms([(1.0, -a), (1.0, a)]),
        GaussianMixture::from_real_terms([(1.0, -a), (-1.0, a)]),
    )
}

/// Exact `⟨f, g⟩ = ∫ f conj(g)`.
pub fn inner_product(f: &GaussianMixture, g: &GaussianMixture) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for ti in f.terms() {
        for tj in g.terms() {
            let d = ti.shift - tj.shift;
            acc += ti.coeff * tj.coeff.conj() * (FRAC_1_SQRT_2 * (-PI * d * d / 2.0).exp());
        }
    }
    acc
}

/// `inf_{|τ|=1} ‖f − τg‖`, attained where `τ⟨g, f⟩` is real and positive.
pub fn quotient_distance(f: &GaussianMixture, g: &GaussianMixture) -> f64 {
    let ff = inner_product(f, f).re;
    let gg = inner_product(g, g).re;
    let fg = inner_product(f, g).norm();
    (ff + gg - 2.0 * fg).max(0.0).sqrt()
}

/// Dimension of `H_k = span{T_s φ : s = jq, |j| ≤ k}`.
pub fn subspace_dim(k: u32, q: f64) -> Result<usize> {
    if k < 1 {
        return Err(invalid("subspace index k must be at least 1"));
    }
    if !(q.is_finite() && q > 0.0) {
        return Err(invalid(format!("subspace step q must be > 0, got {q}")));
    }
    Ok(2 * k as usize + 1)
}

/// The spanning translates of `H_k`, ordered by shift.
pub fn subspace_basis(k: u32, q: f64) -> Result<Vec<GaussianMixture>> {
    subspace_dim(k, q)?;
    let k = k as i64;
    Ok((-k..=k)
        .map(|j| GaussianMixture::translate(j as f64 * q))
        .collect())
}
