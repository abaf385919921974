use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{abs_sum_minus_abs_diff, pow_diff, PenaltyReport, PenaltyValue, CALIBRATION_A, CALIBRATION_FACTOR, TAIL_ERROR_RATIO};
use crate::analytic::{gabor_of_shifted, TfPoint};
use crate::error::{invalid, Error, Result};
use crate::signals::{GaussianMixture, SeparationParam};
use crate::stats::pairwise_sum;

/// Quadrature step for windows without a closed form.
const SAMPLED_STEP: f64 = 1.0 / 64.0;
/// Support radius added around the signal shifts.
const SUPPORT_MARGIN: f64 = 8.0;

/// Window given by samples on a uniform grid, linear in between and zero
/// outside.
#[derive(Clone, PartialEq)]
pub struct SampledWindow {
    pub t0: f64,
    pub step: f64,
    pub values: Arc<Vec<Complex64>>,
}

impl fmt::Debug for SampledWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledWindow")
            .field("t0", &self.t0)
            .field("step", &self.step)
            .field("len", &self.values.len())
            .finish()
    }
}

impl SampledWindow {
    pub fn new(t0: f64, step: f64, values: Vec<Complex64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && t0.is_finite()) || values.len() < 2 {
            return Err(invalid("sampled window needs a positive step and at least two samples"));
        }
        Ok(Self { t0, step, values: Arc::new(values) })
    }

    /// Samples `f` on `[t0, t0 + (n−1)·step]`.
    pub fn from_fn(t0: f64, step: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(t0, step, (0..n).map(|i| f(t0 + i as f64 * step)).collect())
    }

    pub fn support(&self) -> (f64, f64) {
        (self.t0, self.t0 + (self.values.len() - 1) as f64 * self.step)
    }

    pub fn evaluate(&self, t: f64) -> Complex64 {
        let u = (t - self.t0) / self.step;
        if !(u >= 0.0) || u > (self.values.len() - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let i = (u.floor() as usize).min(self.values.len() - 2);
        let frac = u - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

/// The lattice window `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum Window {
    Mixture(GaussianMixture),
    Sampled(SampledWindow),
}

/// Gabor lattice and weight parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StftFrameSpec {
    pub x0: f64,
    pub y0: f64,
    pub s: f64,
    pub p: f64,
    pub window: Window,
    pub n_range: i64,
    pub k_range: i64,
}

impl StftFrameSpec {
    pub fn new(x0: f64, y0: f64, s: f64, p: f64, window: Window, n_range: i64, k_range: i64) -> Result<Self> {
        if !(x0 > 0.0 && y0 > 0.0 && x0.is_finite() && y0.is_finite()) {
            return Err(invalid(format!("lattice steps must be > 0, got x0={x0}, y0={y0}")));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(invalid(format!("weight exponent s must be >= 0, got {s}")));
        }
        if !(1.0..=2.0).contains(&p) {
            return Err(invalid(format!("p must lie in [1, 2], got {p}")));
        }
        if n_range < 1 || k_range < 1 {
            return Err(invalid("truncation bounds must be at least 1"));
        }
        Ok(Self { x0, y0, s, p, window, n_range, k_range })
    }

    /// Gaussian window `φ` with the given lattice and truncation.
    pub fn gaussian(x0: f64, y0: f64, s: f64, p: f64, range: i64) -> Result<Self> {
        Self::new(x0, y0, s, p, Window::Mixture(GaussianMixture::gaussian()), range, range)
    }

    pub fn with_range(&self, n_range: i64, k_range: i64) -> Result<Self> {
        Self::new(self.x0, self.y0, self.s, self.p, self.window.clone(), n_range, k_range)
    }

    /// `w(nx₀, ky₀)^p`.
    fn weight_p(&self, n: i64, k: i64) -> f64 {
        ((1.0 + (n as f64 * self.x0).abs()) * (1.0 + (k as f64 * self.y0).abs())).powf(self.s * self.p)
    }
}

/// `⟨f, g_{n,k}⟩`, exact for mixture windows.
///
/// With `g = Σ_j d_j T_{e_j}φ` the atom `g_{n,k}` is a sum of modulated
/// Gaussians, and `⟨u_b, e^{2πiηt}φ(t − c)⟩ = V_φu_b(c, η)`.
pub fn stft_coeff(f: &GaussianMixture, n: i64, k: i64, spec: &StftFrameSpec) -> Complex64 {
    let c = n as f64 * spec.x0;
    let eta = k as f64 * spec.y0;
    match &spec.window {
        Window::Mixture(g) => {
            let mut acc = Complex64::new(0.0, 0.0);
            for tf in f.terms() {
                for tg in g.terms() {
                    acc += tf.coeff * tg.coeff.conj() * gabor_of_shifted(tf.shift, TfPoint::new(c + tg.shift, eta));
                }
            }
            acc
        }
        Window::Sampled(g) => {
            let (f_lo, f_hi) = f.shift_range();
            let (g_lo, g_hi) = g.support();
            let lo = (f_lo - SUPPORT_MARGIN).max(g_lo + c);
            let hi = (f_hi + SUPPORT_MARGIN).min(g_hi + c);
            if f.is_zero() || hi <= lo {
                return Complex64::new(0.0, 0.0);
            }
            let n_steps = ((hi - lo) / SAMPLED_STEP).ceil() as usize;
            let h = (hi - lo) / n_steps as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..=n_steps {
                let t = lo + i as f64 * h;
                let w = if i == 0 || i == n_steps { 0.5 } else { 1.0 };
                let atom = g.evaluate(t - c) * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * eta * t);
                acc += f.evaluate(t) * atom.conj() * w;
            }
            acc * h
        }
    }
}

/// Deterministic double sum over the lattice box: rows in parallel, each row
/// and then the row totals reduced pairwise.
fn lattice_sum(spec: &StftFrameSpec, term: impl Fn(i64, i64) -> f64 + Sync) -> f64 {
    let rows: Vec<f64> = (-spec.n_range..=spec.n_range)
        .into_par_iter()
        .map(|n| {
            let row: Vec<f64> = (-spec.k_range..=spec.k_range).map(|k| term(n, k)).collect();
            pairwise_sum(&row)
        })
        .collect();
    pairwise_sum(&rows)
}

/// `Σ_{m ∈ ℤ, |m| ≤ r}` and `Σ_{|m| > r}` of `e^{−pπ(m·step − center)²/2}(1 + |m·step|)^{sp}`.
fn gaussian_lattice_sums(center: f64, step: f64, r: i64, p: f64, sp: f64) -> (f64, f64) {
    let term = |m: i64| {
        let u = m as f64 * step;
        (-p * std::f64::consts::PI * (u - center).powi(2) / 2.0).exp() * (1.0 + u.abs()).powf(sp)
    };
    let inside: f64 = (-r..=r).map(term).sum();
    let mut outside = 0.0;
    for dir in [1i64, -1] {
        let mut m = dir * (r + 1);
        loop {
            let t = term(m);
            outside += t;
            let past_peak = (m as f64 * step - center) * dir as f64 > 0.0;
            if past_peak && t <= 1e-30 * (inside + outside) || m.abs() > r + 10_000_000 {
                break;
            }
            m += dir;
        }
    }
    (inside, outside)
}

/// Upper bound on the neglected terms for mixture windows.
///
/// `|⟨f, g_{n,k}⟩| ≤ Σ_{i,j} |c_i||d_j| 2^{−1/2} e^{−π(b_i−nx₀−e_j)²/2} e^{−π(ky₀)²/2}`,
/// and `(Σ_{m≤M} x_m)^p ≤ M^{p−1} Σ x_m^p` separates the pairs; each pair then
/// factors into one-dimensional Gaussian lattice sums.
fn mixture_tail_bound(f: &GaussianMixture, g: &GaussianMixture, spec: &StftFrameSpec) -> f64 {
    let (p, sp) = (spec.p, spec.s * spec.p);
    let pairs = (f.terms().len() * g.terms().len()) as f64;
    let (h_in, h_out) = gaussian_lattice_sums(0.0, spec.y0, spec.k_range, p, sp);
    let mut total = 0.0;
    for tf in f.terms() {
        for tg in g.terms() {
            let amp = (tf.coeff.norm() * tg.coeff.norm() * std::f64::consts::FRAC_1_SQRT_2).powf(p);
            let (g_in, g_out) = gaussian_lattice_sums(tf.shift - tg.shift, spec.x0, spec.n_range, p, sp);
            total += amp * (g_out * (h_in + h_out) + g_in * h_out);
        }
    }
    pairs.powf(p - 1.0) * total
}

/// Terms on the outer ring of the box, used as the tail proxy for sampled
/// windows.
fn boundary_ring(spec: &StftFrameSpec, term: impl Fn(i64, i64) -> f64) -> f64 {
    let (nr, kr) = (spec.n_range, spec.k_range);
    let mut acc = 0.0;
    for n in -nr..=nr {
        for k in -kr..=kr {
            if n.abs() == nr || k.abs() == kr {
                acc += term(n, k);
            }
        }
    }
    acc
}

/// `Σ_{|n|≤N, |k|≤K} |⟨f, g_{n,k}⟩|^p w(nx₀, ky₀)^p` with a tail estimate.
///
/// Mixture windows get a rigorous tail bound; sampled windows use the outer
/// ring of the box as a proxy. Fails when the tail exceeds `1e−6` of the head.
pub fn stft_penalty(f: &GaussianMixture, spec: &StftFrameSpec) -> Result<PenaltyValue> {
    let term = |n: i64, k: i64| stft_coeff(f, n, k, spec).norm().powf(spec.p) * spec.weight_p(n, k);
    let value = lattice_sum(spec, term);
    let tail = match &spec.window {
        Window::Mixture(g) => mixture_tail_bound(f, g, spec),
        Window::Sampled(_) => boundary_ring(spec, term),
    };
    if tail > TAIL_ERROR_RATIO * value || (value == 0.0 && tail > 0.0) {
        return Err(Error::TruncationTooSmall { tail, head: value });
    }
    Ok(PenaltyValue { value, tail_estimate: tail, level_tail_estimate: 0.0 })
}

/// `Σ |⟨f, g_{n,k}⟩|²` over the box, the unweighted frame energy.
pub fn stft_frame_energy(f: &GaussianMixture, spec: &StftFrameSpec) -> f64 {
    lattice_sum(spec, |n, k| stft_coeff(f, n, k, spec).norm_sqr())
}

/// Signed `penalty(f_a^+) − penalty(f_a^−)`, summed termwise.
fn signed_difference(a: f64, spec: &StftFrameSpec) -> f64 {
    let left = GaussianMixture::translate(-a);
    let right = GaussianMixture::translate(a);
    lattice_sum(spec, |n, k| {
        let u = stft_coeff(&left, n, k, spec);
        let v = stft_coeff(&right, n, k, spec);
        let d = abs_sum_minus_abs_diff(u, v);
        spec.weight_p(n, k) * pow_diff((u - v).norm(), d, spec.p)
    })
}

fn check_stft_hypothesis(spec: &StftFrameSpec, m: u32) -> Result<()> {
    if (m as f64) <= spec.s * spec.p + 1.0 {
        return Err(Error::HypothesisViolation(format!(
            "need m > sp + 1, got m={m}, s={}, p={}",
            spec.s, spec.p
        )));
    }
    Ok(())
}

/// `C_fit = 1.1 · difference(2) / 3^{sp−m+1}`.
pub fn calibrate_stft_constant(spec: &StftFrameSpec, m: u32) -> Result<f64> {
    check_stft_hypothesis(spec, m)?;
    let exponent = spec.s * spec.p - m as f64 + 1.0;
    let d = signed_difference(CALIBRATION_A, spec).abs();
    Ok(CALIBRATION_FACTOR * d / (1.0 + CALIBRATION_A).powf(exponent))
}

/// Penalty report with envelope `C_fit (1 + a)^{sp−m+1}`, `C_fit` calibrated at `a = 2`.
pub fn stft_penalty_difference(a: SeparationParam, spec: &StftFrameSpec, m: u32) -> Result<PenaltyReport> {
    let c_fit = calibrate_stft_constant(spec, m)?;
    stft_penalty_difference_with(a, spec, m, c_fit)
}

/// As [`stft_penalty_difference`] with a given constant.
pub fn stft_penalty_difference_with(a: SeparationParam, spec: &StftFrameSpec, m: u32, c_fit: f64) -> Result<PenaltyReport> {
    check_stft_hypothesis(spec, m)?;
    let av = a.value();
    let plus = GaussianMixture::from_real_terms([(1.0, -av), (1.0, av)]);
    let minus = GaussianMixture::from_real_terms([(1.0, -av), (-1.0, av)]);
    let pp = stft_penalty(&plus, spec)?;
    let pm = stft_penalty(&minus, spec)?;
    let difference = signed_difference(av, spec).abs();
    let bound = c_fit * (1.0 + av).powf(spec.s * spec.p - m as f64 + 1.0);
    Ok(PenaltyReport::new(av, pp.value, pm.value, difference, bound))
}
