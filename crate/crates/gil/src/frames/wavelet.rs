use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{abs_sum_minus_abs_diff_real, pow_diff, PenaltyReport, PenaltyValue, CALIBRATION_A, CALIBRATION_FACTOR, TAIL_ERROR_RATIO};
use crate::error::{invalid, Error, Result};
use crate::signals::{inner_product, GaussianMixture, SeparationParam};
use crate::stats::{fit_line, pairwise_sum};

/// Radius beyond which a signal lobe is treated as zero.
const LOBE_RADIUS: f64 = 8.0;
/// Reach of scaling atoms `χ_{0,k} = T_{βk}φ` taken into the tail estimate.
const SCALING_REACH: f64 = 16.0;
/// Smallest coefficient magnitude accepted by the slope fits.
const COEFF_FLOOR: f64 = 1e-300;

/// Wavelet system `ψ_{j,k}(t) = α^{j/2} ψ(α^j t − βk)` with `ψ` the normalized
/// `m`-th Gaussian derivative and scaling function `χ = φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub alpha: f64,
    pub beta: f64,
    pub m: u32,
    pub s: f64,
    pub p: f64,
    pub j_max: u32,
    /// Level `j` keeps `|k| ≤ ⌈k_max α^j⌉`, a fixed spatial window.
    pub k_max: i64,
}

impl WaveletSpec {
    pub fn new(alpha: f64, beta: f64, m: u32, s: f64, p: f64, j_max: u32, k_max: i64) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha must be > 1, got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid(format!("beta must be > 0, got {beta}")));
        }
        if m == 0 || m > 10 {
            return Err(invalid(format!("m must lie in 1..=10, got {m}")));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(invalid(format!("s must be >= 0, got {s}")));
        }
        if !(1.0..=2.0).contains(&p) {
            return Err(invalid(format!("p must lie in [1, 2], got {p}")));
        }
        if k_max < 1 {
            return Err(invalid("k_max must be at least 1"));
        }
        Ok(Self { alpha, beta, m, s, p, j_max, k_max })
    }

    /// `σ = s + 1/2 − 1/p`.
    pub fn sigma(&self) -> f64 {
        self.s + 0.5 - 1.0 / self.p
    }

    fn psi_radius(&self) -> f64 {
        LOBE_RADIUS + self.m as f64
    }

    fn level_truncation(&self, j: u32) -> i64 {
        (self.k_max as f64 * self.alpha.powi(j as i32)).ceil() as i64
    }

    /// Indices `k` whose atom at level `j` meets `[lo − 8, hi + 8]`.
    fn overlapping(&self, j: u32, (lo, hi): (f64, f64)) -> (i64, i64) {
        let scale = self.alpha.powi(j as i32);
        let r = self.psi_radius();
        let k_lo = ((scale * (lo - LOBE_RADIUS) - r) / self.beta).ceil() as i64;
        let k_hi = ((scale * (hi + LOBE_RADIUS) + r) / self.beta).floor() as i64;
        (k_lo, k_hi)
    }
}

/// `d^m/dt^m e^{−πt²} = (−√(2π))^m He_m(√(2π)t) e^{−πt²}`, with the
/// probabilists' Hermite polynomials from their three-term recurrence.
pub fn gaussian_derivative(m: u32, t: f64) -> f64 {
    let c = (2.0 * std::f64::consts::PI).sqrt();
    let x = c * t;
    let (mut prev, mut cur) = (1.0, x);
    if m == 0 {
        cur = 1.0;
    }
    for n in 1..m {
        let next = x * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    (-c).powi(m as i32) * cur * (-std::f64::consts::PI * t * t).exp()
}

/// `‖φ^{(m)}‖² = π^m (2m−1)!! / √2`.
fn derivative_norm(m: u32) -> f64 {
    let double_fact: f64 = (1..=m).map(|i| (2 * i - 1) as f64).product();
    (std::f64::consts::PI.powi(m as i32) * double_fact / std::f64::consts::SQRT_2).sqrt()
}

/// `φ^{(m)} / ‖φ^{(m)}‖`: `m` vanishing moments and Gaussian decay.
pub fn hermite_wavelet(m: u32, t: f64) -> f64 {
    gaussian_derivative(m, t) / derivative_norm(m)
}

/// `⟨f, ψ_{j,k}⟩` by the trapezoid rule, lobe by lobe, at step
/// `min(1/64, α^{−j}/16)` over the overlap of the lobe and the atom.
pub fn wavelet_coeff(f: &GaussianMixture, j: u32, k: i64, spec: &WaveletSpec) -> Complex64 {
    let scale = spec.alpha.powi(j as i32);
    let amp = scale.sqrt();
    let norm = derivative_norm(spec.m);
    let center = spec.beta * k as f64;
    let r = spec.psi_radius();
    let h_max = (1.0 / 64.0f64).min(1.0 / (16.0 * scale));
    let mut acc = Complex64::new(0.0, 0.0);
    for term in f.terms() {
        let b = term.shift;
        let lo = (b - LOBE_RADIUS).max((center - r) / scale);
        let hi = (b + LOBE_RADIUS).min((center + r) / scale);
        if hi <= lo {
            continue;
        }
        let n = ((hi - lo) / h_max).ceil().max(1.0) as usize;
        let h = (hi - lo) / n as f64;
        let mut sum = 0.0;
        for i in 0..=n {
            let t = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let u = t - b;
            sum += w * (-std::f64::consts::PI * u * u).exp() * gaussian_derivative(spec.m, scale * t - center);
        }
        acc += term.coeff * (sum * h * amp / norm);
    }
    acc
}

/// `⟨f, χ_{0,k}⟩`, exact.
fn scaling_coeff(f: &GaussianMixture, k: i64, spec: &WaveletSpec) -> Complex64 {
    inner_product(f, &GaussianMixture::translate(spec.beta * k as f64))
}

fn check_besov_hypothesis(spec: &WaveletSpec) -> Result<()> {
    if spec.s > spec.m as f64 + 1.0 {
        return Err(Error::HypothesisViolation(format!("need s <= m + 1, got s={}, m={}", spec.s, spec.m)));
    }
    Ok(())
}

/// Sums of `term(k)` over kept and over overlapping-but-dropped indices.
struct LevelSums {
    kept: f64,
    dropped: f64,
}

fn level_sums(k_range: (i64, i64), limit: i64, term: impl Fn(i64) -> f64 + Sync) -> LevelSums {
    let (k_lo, k_hi) = k_range;
    if k_hi < k_lo {
        return LevelSums { kept: 0.0, dropped: 0.0 };
    }
    let values: Vec<(bool, f64)> = (k_lo..=k_hi)
        .into_par_iter()
        .map(|k| (k.abs() <= limit, term(k)))
        .collect();
    let kept: Vec<f64> = values.iter().filter(|v| v.0).map(|v| v.1).collect();
    let dropped: Vec<f64> = values.iter().filter(|v| !v.0).map(|v| v.1).collect();
    LevelSums { kept: pairwise_sum(&kept), dropped: pairwise_sum(&dropped) }
}

fn scaling_range(shifts: (f64, f64), spec: &WaveletSpec) -> (i64, i64) {
    (
        ((shifts.0 - SCALING_REACH) / spec.beta).ceil() as i64,
        ((shifts.1 + SCALING_REACH) / spec.beta).floor() as i64,
    )
}

/// Shared traversal of the penalty index set: scaling atoms, then levels
/// `0..=j_max`, each weighted by `α^{jσp}`.
fn traverse(shifts: (f64, f64), spec: &WaveletSpec, scaling: impl Fn(i64) -> f64 + Sync, detail: impl Fn(u32, i64) -> f64 + Sync) -> (f64, f64, Vec<f64>) {
    let sc = level_sums(scaling_range(shifts, spec), spec.k_max, scaling);
    let mut levels = Vec::with_capacity(spec.j_max as usize + 1);
    let mut dropped = sc.dropped;
    for j in 0..=spec.j_max {
        let weight = spec.alpha.powf(j as f64 * spec.sigma() * spec.p);
        let ls = level_sums(spec.overlapping(j, shifts), spec.level_truncation(j), |k| detail(j, k));
        levels.push(weight * ls.kept);
        dropped += weight * ls.dropped;
    }
    let mut parts = vec![sc.kept];
    parts.extend_from_slice(&levels);
    (pairwise_sum(&parts), dropped, levels)
}

/// `Σ_k |⟨f, χ_{0,k}⟩|^p + Σ_j α^{jσp} Σ_k |⟨f, ψ_{j,k}⟩|^p` over the truncated
/// index set.
///
/// `tail_estimate` is the exact contribution of atoms that meet the signal but
/// lie outside the spatial truncation; it must stay below `1e−6` of the value.
/// `level_tail_estimate` extrapolates the last two levels geometrically.
pub fn besov_penalty(f: &GaussianMixture, spec: &WaveletSpec) -> Result<PenaltyValue> {
    check_besov_hypothesis(spec)?;
    if f.is_zero() {
        return Ok(PenaltyValue { value: 0.0, tail_estimate: 0.0, level_tail_estimate: 0.0 });
    }
    let p = spec.p;
    let (value, tail, levels) = traverse(
        f.shift_range(),
        spec,
        |k| scaling_coeff(f, k, spec).norm().powf(p),
        |j, k| wavelet_coeff(f, j, k, spec).norm().powf(p),
    );
    if tail > TAIL_ERROR_RATIO * value {
        return Err(Error::TruncationTooSmall { tail, head: value });
    }
    Ok(PenaltyValue { value, tail_estimate: tail, level_tail_estimate: geometric_tail(&levels) })
}

fn geometric_tail(levels: &[f64]) -> f64 {
    match levels {
        [.., prev, last] if *prev > 0.0 => {
            let r = last / prev;
            if r < 1.0 {
                last * r / (1.0 - r)
            } else {
                f64::INFINITY
            }
        }
        _ => 0.0,
    }
}

fn check_difference_hypothesis(spec: &WaveletSpec) -> Result<()> {
    let lhs = 2.0 * spec.m as f64 - spec.sigma() * spec.p + 1.5;
    if lhs <= 0.0 {
        return Err(Error::HypothesisViolation(format!("need 2m − σp + 3/2 > 0, got {lhs}")));
    }
    Ok(())
}

/// Signed `penalty(f_a^+) − penalty(f_a^−)` over the common index set.
/// Both coefficient families are real, so each term is
/// `|u + v|^p − |u − v|^p` with `u = ⟨u_{−a}, ·⟩`, `v = ⟨u_a, ·⟩`.
fn signed_difference(a: f64, spec: &WaveletSpec) -> f64 {
    let left = GaussianMixture::translate(-a);
    let right = GaussianMixture::translate(a);
    let p = spec.p;
    let term = |u: f64, v: f64| pow_diff((u - v).abs(), abs_sum_minus_abs_diff_real(u, v), p);
    let (value, _, _) = traverse(
        (-a, a),
        spec,
        |k| term(scaling_coeff(&left, k, spec).re, scaling_coeff(&right, k, spec).re),
        |j, k| term(wavelet_coeff(&left, j, k, spec).re, wavelet_coeff(&right, j, k, spec).re),
    );
    value
}

/// `C_fit = 1.1 · difference(2) · 2^m`.
pub fn calibrate_wavelet_constant(spec: &WaveletSpec) -> Result<f64> {
    check_besov_hypothesis(spec)?;
    check_difference_hypothesis(spec)?;
    Ok(CALIBRATION_FACTOR * signed_difference(CALIBRATION_A, spec).abs() * CALIBRATION_A.powi(spec.m as i32))
}

/// Penalty report with envelope `C_fit a^{−m}`, `C_fit` calibrated at `a = 2`.
pub fn wavelet_penalty_difference(a: SeparationParam, spec: &WaveletSpec) -> Result<PenaltyReport> {
    let c_fit = calibrate_wavelet_constant(spec)?;
    wavelet_penalty_difference_with(a, spec, c_fit)
}

/// As [`wavelet_penalty_difference`] with a given constant.
pub fn wavelet_penalty_difference_with(a: SeparationParam, spec: &WaveletSpec, c_fit: f64) -> Result<PenaltyReport> {
    check_besov_hypothesis(spec)?;
    check_difference_hypothesis(spec)?;
    let av = a.value();
    let plus = GaussianMixture::from_real_terms([(1.0, -av), (1.0, av)]);
    let minus = GaussianMixture::from_real_terms([(1.0, -av), (-1.0, av)]);
    let pp = besov_penalty(&plus, spec)?;
    let pm = besov_penalty(&minus, spec)?;
    let difference = signed_difference(av, spec).abs();
    Ok(PenaltyReport::new(av, pp.value, pm.value, difference, c_fit * av.powi(-(spec.m as i32))))
}

fn log_slope(xs: &[f64], indices: &[i64], coeffs: &[f64]) -> Result<f64> {
    if xs.len() < 4 {
        return Err(invalid(format!("need at least 4 points, got {}", xs.len())));
    }
    for (&index, &c) in indices.iter().zip(coeffs) {
        if !(c.abs() >= COEFF_FLOOR) {
            return Err(Error::CoefficientBelowFloor { index, value: c.abs(), floor: COEFF_FLOOR });
        }
    }
    let ys: Vec<f64> = coeffs.iter().map(|c| c.abs().ln()).collect();
    Ok(fit_line(xs, &ys)?.slope)
}

/// Least-squares slope of `log|⟨φ, ψ_{j,k}⟩|` against `log(β|k|)`.
pub fn decay_slope(j_fixed: u32, k_values: &[i64], spec: &WaveletSpec) -> Result<f64> {
    if k_values.contains(&0) {
        return Err(invalid("k = 0 has no logarithm"));
    }
    let phi = GaussianMixture::gaussian();
    let xs: Vec<f64> = k_values.iter().map(|&k| (spec.beta * k.unsigned_abs() as f64).ln()).collect();
    let cs: Vec<f64> = k_values.iter().map(|&k| wavelet_coeff(&phi, j_fixed, k, spec).norm()).collect();
    log_slope(&xs, k_values, &cs)
}

/// Least-squares slope of `log|⟨φ, ψ_{j,k}⟩|` against `j log α` at fixed `k`.
pub fn scale_decay_slope(k_fixed: i64, j_values: &[u32], spec: &WaveletSpec) -> Result<f64> {
    let phi = GaussianMixture::gaussian();
    let xs: Vec<f64> = j_values.iter().map(|&j| j as f64 * spec.alpha.ln()).collect();
    let cs: Vec<f64> = j_values.iter().map(|&j| wavelet_coeff(&phi, j, k_fixed, spec).norm()).collect();
    let idx: Vec<i64> = j_values.iter().map(|&j| j as i64).collect();
    log_slope(&xs, &idx, &cs)
}

/// Least-squares slope of `log|⟨φ, χ_{0,k}⟩|` against `log(β|k|)`.
pub fn scaling_decay_slope(k_values: &[i64], spec: &WaveletSpec) -> Result<f64> {
    if k_values.contains(&0) {
        return Err(invalid("k = 0 has no logarithm"));
    }
    let phi = GaussianMixture::gaussian();
    let xs: Vec<f64> = k_values.iter().map(|&k| (spec.beta * k.unsigned_abs() as f64).ln()).collect();
    let cs: Vec<f64> = k_values.iter().map(|&k| scaling_coeff(&phi, k, spec).norm()).collect();
    log_slope(&xs, k_values, &cs)
}

/// `max |φ(t) − p_{w,m}(t)| / |t − w|^m` over 100 midpoint samples of
/// `[w/2, 3w/2]`, where `p_{w,m}` is the Taylor polynomial of `φ` of degree
/// `m − 1` at `w`.
pub fn taylor_remainder_ratio(w: f64, m: u32) -> Result<f64> {
    if !(w > 0.0 && w.is_finite()) || m == 0 {
        return Err(invalid(format!("need w > 0 and m >= 1, got w={w}, m={m}")));
    }
    let derivs: Vec<f64> = (0..m).map(|l| gaussian_derivative(l, w)).collect();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let t = 0.5 * w + (i as f64 + 0.5) * w / 100.0;
        let d = t - w;
        let mut poly = 0.0;
        let mut power = 1.0;
        let mut fact = 1.0;
        for (l, c) in derivs.iter().enumerate() {
            if l > 0 {
                power *= d;
                fact *= l as f64;
            }
            poly += c * power / fact;
        }
        let phi = (-std::f64::consts::PI * t * t).exp();
        worst = worst.max((phi - poly).abs() / d.abs().powi(m as i32));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(alpha: f64, beta: f64, m: u32) -> WaveletSpec {
        WaveletSpec::new(alpha, beta, m, 1.0, 1.0, 6, 64).unwrap()
    }

    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, h: f64) -> f64 {
        let n = ((hi - lo) / h).round() as usize;
        let h = (hi - lo) / n as f64;
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * f(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
    }

    /// Closed form of `⟨u_b, ψ_{j,k}⟩` from Gaussian convolution:
    /// `α^{j/2} (−1)^m v^{−(m+1)/2} φ^{(m)}((βk − α^j b)/√v) / ‖φ^{(m)}‖`, `v = 1 + α^{2j}`.
    fn oracle(b: f64, j: u32, k: i64, s: &WaveletSpec) -> f64 {
        let scale = s.alpha.powi(j as i32);
        let v = 1.0 + scale * scale;
        let sign = if s.m % 2 == 0 { 1.0 } else { -1.0 };
        scale.sqrt() * sign * v.powf(-(s.m as f64 + 1.0) / 2.0)
            * gaussian_derivative(s.m, (s.beta * k as f64 - scale * b) / v.sqrt())
            / derivative_norm(s.m)
    }

    #[test]
    fn spec_validation_and_sigma() {
        assert!(WaveletSpec::new(1.0, 1.0, 1, 0.0, 1.0, 4, 8).is_err());
        assert!(WaveletSpec::new(2.0, 0.0, 1, 0.0, 1.0, 4, 8).is_err());
        assert!(WaveletSpec::new(2.0, 1.0, 0, 0.0, 1.0, 4, 8).is_err());
        assert!(WaveletSpec::new(2.0, 1.0, 1, 0.0, 0.5, 4, 8).is_err());
        assert_eq!(WaveletSpec::new(2.0, 1.0, 1, 1.0, 2.0, 4, 8).unwrap().sigma(), 1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for m in 1..=5u32 {
            for &t in &[-1.3, -0.2, 0.0, 0.4, 1.7] {
                let h = 1e-5;
                let fd = (gaussian_derivative(m - 1, t + h) - gaussian_derivative(m - 1, t - h)) / (2.0 * h);
                let exact = gaussian_derivative(m, t);
                assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()) * (m as f64).powi(2), "m={m}, t={t}");
            }
        }
    }

    #[test]
    fn wavelet_moments_and_norm() {
        assert_eq!(hermite_wavelet(1, 0.0), 0.0);
        for m in 1..=3u32 {
            let norm = integrate(|t| hermite_wavelet(m, t).powi(2), -12.0, 12.0, 1.0 / 256.0);
            assert!((norm - 1.0).abs() < 1e-12, "m={m}: {norm}");
            for l in 0..m {
                let mom = integrate(|t| t.powi(l as i32) * hermite_wavelet(m, t), -12.0, 12.0, 1.0 / 256.0);
                assert!(mom.abs() < 1e-10, "m={m}, l={l}: {mom}");
            }
            let top = integrate(|t| t.powi(m as i32) * hermite_wavelet(m, t), -12.0, 12.0, 1.0 / 256.0);
            assert!(top.abs() > 1e-3, "m={m}: {top}");
        }
    }

    #[test]
    fn coefficients_match_closed_form() {
        for m in 1..=3u32 {
            let s = spec(2.0, 1.0, m);
            for &(b, j, k) in &[(0.0, 0u32, 0i64), (0.0, 0, 2), (0.7, 1, 3), (-1.5, 3, -10), (2.0, 5, 70), (0.0, 4, 2)] {
                let f = GaussianMixture::translate(b);
                let got = wavelet_coeff(&f, j, k, &s);
                let want = oracle(b, j, k, &s);
                assert!(got.im == 0.0);
                assert!((got.re - want).abs() < 1e-13 * (1.0 + want.abs()), "m={m} ({b},{j},{k}): {} vs {want}", got.re);
            }
        }
        let s = spec(2.0, 0.25, 2);
        let got = wavelet_coeff(&GaussianMixture::gaussian(), 0, 32, &s).re;
        let want = oracle(0.0, 0, 32, &s);
        assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn parity_zero_for_odd_wavelet() {
        let s = spec(2.0, 0.7, 1);
        assert!(wavelet_coeff(&GaussianMixture::gaussian(), 0, 0, &s).norm() < 1e-17);
    }

    #[test]
    fn slope_fit_self_test() {
        let ks = [4i64, 8, 16, 32];
        let beta = 0.5f64;
        let xs: Vec<f64> = ks.iter().map(|&k| (beta * k as f64).ln()).collect();
        let cs: Vec<f64> = ks.iter().map(|&k| (beta * k as f64).powi(-3)).collect();
        assert!((log_slope(&xs, &ks, &cs).unwrap() + 3.0).abs() < 1e-12);
        assert!(matches!(log_slope(&xs, &ks, &[1.0, 1.0, 0.0, 1.0]), Err(Error::CoefficientBelowFloor { index: 16, .. })));
        assert!(log_slope(&xs[..3], &ks[..3], &cs[..3]).is_err());
    }

    #[test]
    fn k_slopes_are_steep() {
        for m in 1..=3u32 {
            let s = spec(2.0, 0.25, m);
            let slope = decay_slope(0, &[4, 8, 16, 32], &s).unwrap();
            assert!(slope <= -(m as f64 + 1.0) + 0.3, "m={m}: {slope}");
            let scaling = scaling_decay_slope(&[4, 8, 16, 32], &s).unwrap();
            assert!(scaling <= -(m as f64 + 1.0) + 0.3, "m={m}: {scaling}");
        }
        assert!(decay_slope(0, &[0, 1, 2, 3], &spec(2.0, 1.0, 1)).is_err());
        assert!(matches!(
            decay_slope(0, &[4, 8, 16, 32], &spec(2.0, 1.0, 2)),
            Err(Error::CoefficientBelowFloor { .. })
        ));
    }

    #[test]
    fn j_slope_tracks_half_integer_order() {
        // At k fixed the closed form decays like α^{−j(m+1/2)} for even m;
        // for odd m, φ^{(m)}(0) = 0 costs one more power of α^{−j}.
        for m in 1..=3u32 {
            let s = spec(2.0, 1.0, m);
            let slope = scale_decay_slope(2, &[0, 1, 2, 3, 4], &s).unwrap();
            let js: Vec<f64> = (0..=4).map(|j| j as f64 * 2f64.ln()).collect();
            let ys: Vec<f64> = (0..=4u32).map(|j| oracle(0.0, j, 2, &s).abs().ln()).collect();
            let want = fit_line(&js, &ys).unwrap().slope;
            assert!((slope - want).abs() < 1e-9, "m={m}: {slope} vs {want}");
            let big: Vec<f64> = [10u32, 11, 12, 13].iter().map(|&j| oracle(0.0, j, 2, &s).abs().ln()).collect();
            let xs: Vec<f64> = [10.0, 11.0, 12.0, 13.0].iter().map(|j: &f64| j * 2f64.ln()).collect();
            let asym = fit_line(&xs, &big).unwrap().slope;
            let order = m as f64 + 0.5 + (m % 2) as f64;
            assert!((asym + order).abs() < 1e-3, "m={m}: {asym}");
            eprintln!("m={m}: slope over j in 0..=4 is {slope}");
        }
    }

    #[test]
    fn taylor_ratio_respects_lagrange_bound() {
        for m in 1..=3u32 {
            for &w in &[0.5, 1.0, 2.0, 4.0] {
                let got = taylor_remainder_ratio(w, m).unwrap();
                let fact: f64 = (1..=m).map(|i| i as f64).product();
                let sup = (0..=2000)
                    .map(|i| gaussian_derivative(m, 0.5 * w + i as f64 * w / 2000.0).abs())
                    .fold(0.0, f64::max);
                assert!(got <= sup / fact * (1.0 + 1e-6), "m={m}, w={w}");
                assert!(got >= gaussian_derivative(m, w).abs() / fact * 0.9, "m={m}, w={w}");
            }
        }
        assert!(taylor_remainder_ratio(0.0, 1).is_err());
        let _ = PI;
    }

    #[test]
    fn besov_penalty_basics() {
        let s = WaveletSpec::new(2.0, 1.0, 3, 1.0, 1.0, 8, 64).unwrap();
        assert_eq!(besov_penalty(&GaussianMixture::zero(), &s).unwrap().value, 0.0);
        let phi = GaussianMixture::gaussian();
        let base = besov_penalty(&phi, &s).unwrap();
        assert!(base.value.is_finite() && base.value > 0.0);
        let wider = besov_penalty(&phi, &WaveletSpec { k_max: 128, ..s }).unwrap();
        assert!(((base.value - wider.value) / base.value).abs() < 1e-8);
        assert!(base.level_tail_estimate < 1e-4 * base.value);
        let ua = besov_penalty(&GaussianMixture::translate(1.3), &s).unwrap().value;
        let um = besov_penalty(&GaussianMixture::translate(-1.3), &s).unwrap().value;
        assert!(((ua - um) / ua).abs() < 1e-10);
        assert!(matches!(
            besov_penalty(&phi, &WaveletSpec { s: 4.5, ..s }),
            Err(Error::HypothesisViolation(_))
        ));
    }

    #[test]
    fn besov_tail_flags_narrow_truncation() {
        let s = WaveletSpec::new(2.0, 1.0, 2, 0.0, 1.0, 3, 1).unwrap();
        assert!(matches!(
            besov_penalty(&GaussianMixture::translate(4.0), &s),
            Err(Error::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn difference_hypothesis_and_stability() {
        let bad = WaveletSpec::new(2.0, 1.0, 1, 2.0, 2.0, 4, 32).unwrap();
        assert!(matches!(
            wavelet_penalty_difference(SeparationParam::new(3.0).unwrap(), &bad),
            Err(Error::HypothesisViolation(_))
        ));
        let s = WaveletSpec::new(2.0, 1.0, 2, 0.0, 1.0, 4, 32).unwrap();
        let r = wavelet_penalty_difference(SeparationParam::new(1.0).unwrap(), &s).unwrap();
        let direct = (r.penalty_plus - r.penalty_minus).abs();
        assert!(((r.difference - direct) / direct).abs() < 1e-8, "{} vs {direct}", r.difference);
    }
}
