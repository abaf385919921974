//! Bound certificates, decay-rate fits and operator diagnostics.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::TfPoint;
use crate::error::{invalid, Error, Result};
use crate::numeric::{pair_distance, GridSpec, PairDistance, DEFAULT_SPACING, DEFAULT_X_MARGIN, DEFAULT_Y_HALF};
use crate::signals::{make_pair, quotient_distance, GaussianMixture, SeparationParam};
use crate::stats::fit_line;

/// Relative slack in every `measured ≤ bound` comparison.
pub const PASS_SLACK: f64 = 1e-6;

/// Separations at which certificates are asserted.
pub const CERTIFICATION_SET: [f64; 6] = [0.75, 1.0, 1.5, 2.0, 2.5, 3.0];

/// Safety factor applied to the empirical `∂_y` envelope.
pub const DY_CALIBRATION_FACTOR: f64 = 1.05;

/// Frozen `C₂` of the `∂_y` envelope `C₂ a² e^{−a²π/2}`.
///
/// Obtained from [`calibrate_dy_constant`] on the default grid policy over
/// `a = 0.75, 1.0, …, 3.0`; the maximum ratio occurs at `a = 0.75`.
pub const DY_ENVELOPE_C2: f64 = 5.178_451_537_143_107;

/// `a = 0.75, 1.0, …, 3.0`.
pub fn calibration_set() -> Vec<f64> {
    (0..10).map(|i| 0.75 + 0.25 * i as f64).collect()
}

/// `ln(2√(1+2a²π) e^{−a²π/2})`.
pub fn ln_bound_l2(a: f64) -> f64 {
    LN_2 + 0.5 * (1.0 + 2.0 * a * a * PI).ln() - a * a * PI / 2.0
}

pub fn bound_l2(a: f64) -> f64 {
    ln_bound_l2(a).exp()
}

/// Log of the assembled `∂_x` constant
/// `sqrt(200a⁴π³e^{−a²π} + (25/4)π((2+1.5√π) + a²π(14+√π))e^{−a²π})`.
pub fn ln_bound_dx(a: f64) -> f64 {
    let sp = PI.sqrt();
    let poly = 200.0 * a.powi(4) * PI.powi(3)
        + 25.0 / 4.0 * PI * ((2.0 + 1.5 * sp) + a * a * PI * (14.0 + sp));
    0.5 * poly.ln() - a * a * PI / 2.0
}

pub fn bound_dx(a: f64) -> f64 {
    ln_bound_dx(a).exp()
}

pub fn ln_bound_dy(a: f64, c2: f64) -> f64 {
    c2.ln() + 2.0 * a.ln() - a * a * PI / 2.0
}

pub fn bound_dy(a: f64, c2: f64) -> f64 {
    ln_bound_dy(a, c2).exp()
}

/// Log of the W^{1,2} envelope `bound_l2 + hypot(bound_dx, bound_dy)`.
pub fn ln_bound_w12(a: f64, c2: f64) -> f64 {
    // Factor out e^{−a²π/2}; the remaining terms are polynomial in a.
    let g = a * a * PI / 2.0;
    let l2 = (ln_bound_l2(a) + g).exp();
    let dx = (ln_bound_dx(a) + g).exp();
    let dy = (ln_bound_dy(a, c2) + g).exp();
    (l2 + dx.hypot(dy)).ln() - g
}

pub fn bound_w12(a: f64, c2: f64) -> f64 {
    ln_bound_w12(a, c2).exp()
}

/// `measured ≤ bound·(1 + slack)` compared through logarithms.
fn within(ln_measured: f64, ln_bound: f64) -> bool {
    ln_measured <= ln_bound + PASS_SLACK.ln_1p()
}

/// Measured norms against the explicit bounds at one separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub a: f64,
    pub measured_l2: f64,
    pub measured_dx_l2: f64,
    pub measured_dy_l2: f64,
    pub measured_w12: f64,
    pub bound_l2: f64,
    pub bound_dx: f64,
    pub bound_dy: f64,
    pub pass_l2: bool,
    pub pass_dx: bool,
    pub pass_dy: bool,
    pub singular_node_count: usize,
}

impl BoundCertificate {
    pub fn all_pass(&self) -> bool {
        self.pass_l2 && self.pass_dx && self.pass_dy
    }

    /// Builds the certificate from precomputed norms.
    pub fn from_distance(d: &PairDistance, c2: f64) -> Self {
        let a = d.a;
        let ln = |v: f64| v.ln() + d.log_scale;
        BoundCertificate {
            a,
            measured_l2: d.l2(),
            measured_dx_l2: d.dx_l2(),
            measured_dy_l2: d.dy_l2(),
            measured_w12: d.w12(),
            bound_l2: bound_l2(a),
            bound_dx: bound_dx(a),
            bound_dy: bound_dy(a, c2),
            pass_l2: within(ln(d.l2_scaled), ln_bound_l2(a)),
            pass_dx: within(ln(d.dx_scaled), ln_bound_dx(a)),
            pass_dy: within(ln(d.dy_scaled), ln_bound_dy(a, c2)),
            singular_node_count: d.singular_node_count,
        }
    }
}

/// Certificate JSON: the certificate fields plus grid and tool version.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateExport {
    #[serde(flatten)]
    pub certificate: BoundCertificate,
    pub grid: GridSpec,
    pub tool_version: String,
}

/// Certifies the pair at separation `a` with the frozen `C₂`.
pub fn certify(a: SeparationParam, grid: &GridSpec) -> Result<BoundCertificate> {
    certify_with(a, grid, DY_ENVELOPE_C2)
}

pub fn certify_with(a: SeparationParam, grid: &GridSpec, c2: f64) -> Result<BoundCertificate> {
    let d = pair_distance(a, grid)?;
    Ok(BoundCertificate::from_distance(&d, c2))
}

/// How a sweep chooses the grid for each separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    pub spacing: f64,
    pub x_margin: f64,
    pub y_half: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { spacing: DEFAULT_SPACING, x_margin: DEFAULT_X_MARGIN, y_half: DEFAULT_Y_HALF }
    }
}

impl GridPolicy {
    pub fn grid_for(&self, a: SeparationParam) -> Result<GridSpec> {
        GridSpec::covering(a, self.spacing, self.x_margin, self.y_half)
    }
}

/// `C₂ = 1.05 · max_a measured_dy / (a² e^{−a²π/2})` over `a_values`.
pub fn calibrate_dy_constant(a_values: &[f64], policy: &GridPolicy) -> Result<f64> {
    let ratios: Vec<f64> = a_values
        .par_iter()
        .map(|&a| {
            let sa = SeparationParam::new(a)?;
            let d = pair_distance(sa, &policy.grid_for(sa)?)?;
            Ok((d.dy_scaled.ln() + d.log_scale - (2.0 * a.ln() - a * a * PI / 2.0)).exp())
        })
        .collect::<Result<_>>()?;
    Ok(DY_CALIBRATION_FACTOR * ratios.into_iter().fold(0.0, f64::max))
}

/// Least-squares fit of `ln d(a) ≈ log_c_hat − k_hat·a²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub k_hat: f64,
    pub log_c_hat: f64,
    pub r_squared: f64,
    pub a_values: Vec<f64>,
}

fn check_a_values(a_values: &[f64]) -> Result<()> {
    if a_values.windows(2).all(|w| (w[1] - w[0]).abs() <= 1e-12) && !a_values.is_empty() {
        return Err(Error::DegenerateFit("all separations are equal".into()));
    }
    if a_values.len() < 3 {
        return Err(invalid(format!("rate fit needs at least 3 separations, got {}", a_values.len())));
    }
    if a_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("separations must be strictly increasing"));
    }
    Ok(())
}

/// Fits the rate from natural logs of the measured distances.
pub fn fit_rate_ln(a_values: &[f64], ln_values: &[f64]) -> Result<RateFit> {
    check_a_values(a_values)?;
    let xs: Vec<f64> = a_values.iter().map(|a| a * a).collect();
    let fit = fit_line(&xs, ln_values)?;
    Ok(RateFit { k_hat: -fit.slope, log_c_hat: fit.intercept, r_squared: fit.r_squared, a_values: a_values.to_vec() })
}

pub fn fit_rate(a_values: &[f64], values: &[f64]) -> Result<RateFit> {
    let ln: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    fit_rate_ln(a_values, &ln)
}

/// One line of the sweep CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub measured_l2: f64,
    pub measured_w12: f64,
    pub bound_l2: f64,
    pub bound_w12: f64,
    /// `dist(f_a^+, f_a^−) / ‖|V_φf_a^+| − |V_φf_a^−|‖_{W^{1,2}}`.
    pub ratio: f64,
}

/// Everything a sweep produces, in increasing `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub certificates: Vec<BoundCertificate>,
    pub distances: Vec<PairDistance>,
    pub fit: RateFit,
    pub l2_fit: RateFit,
}

impl Sweep {
    /// CSV `a,measured_l2,measured_w12,bound_l2,bound_w12,ratio` in shortest
    /// round-trip formatting.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, metadata: &[String]) -> Result<()> {
        for line in metadata {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "a,measured_l2,measured_w12,bound_l2,bound_w12,ratio")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:?},{:?},{:?},{:?},{:?},{:?}",
                r.a, r.measured_l2, r.measured_w12, r.bound_l2, r.bound_w12, r.ratio
            )?;
        }
        Ok(())
    }
}

/// Certifies every separation and fits the W^{1,2} and L² decay rates.
///
/// Separations are processed in parallel and collected in input order.
pub fn sweep_rate(a_values: &[f64], policy: &GridPolicy) -> Result<Sweep> {
    check_a_values(a_values)?;
    if let Some(a) = a_values.iter().find(|&&a| a <= 0.5) {
        return Err(invalid(format!("sweep separations must exceed 0.5, got {a}")));
    }
    let distances: Vec<PairDistance> = a_values
        .par_iter()
        .map(|&a| {
            let sa = SeparationParam::new(a)?;
            pair_distance(sa, &policy.grid_for(sa)?)
        })
        .collect::<Result<_>>()?;
    let ln_w12: Vec<f64> = distances.iter().map(|d| d.ln_w12()).collect();
    let ln_l2: Vec<f64> = distances.iter().map(|d| d.ln_l2()).collect();
    let fit = fit_rate_ln(a_values, &ln_w12)?;
    let l2_fit = fit_rate_ln(a_values, &ln_l2)?;
    let certificates: Vec<BoundCertificate> =
        distances.iter().map(|d| BoundCertificate::from_distance(d, DY_ENVELOPE_C2)).collect();
    let rows = distances
        .iter()
        .map(|d| SweepRow {
            a: d.a,
            measured_l2: d.l2(),
            measured_w12: d.w12(),
            bound_l2: bound_l2(d.a),
            bound_w12: bound_w12(d.a, DY_ENVELOPE_C2),
            ratio: (pair_distance_ln_ratio(d)).exp(),
        })
        .collect();
    Ok(Sweep { rows, certificates, distances, fit, l2_fit })
}

fn pair_distance_ln_ratio(d: &PairDistance) -> f64 {
    0.75 * LN_2 - d.ln_w12()
}

/// `dist(f_a^+, f_a^−)` divided by the measured W^{1,2} distance.
///
/// Fails with the log-domain estimate once either side leaves double range.
pub fn stability_constant_lower_bound(a: SeparationParam, grid: &GridSpec) -> Result<f64> {
    let d = pair_distance(a, grid)?;
    let (fp, fm) = make_pair(a);
    let ln_ratio = quotient_distance(&fp, &fm).ln() - d.ln_w12();
    let w12 = d.w12();
    let ratio = ln_ratio.exp();
    if w12 == 0.0 || !ratio.is_finite() {
        return Err(Error::OutOfRange { log_estimate: ln_ratio });
    }
    Ok(ratio)
}

/// A unit-norm-scaled translate whose transform lives outside a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeWitness {
    pub signal: GaussianMixture,
    pub shift: f64,
    /// Share of `‖V_φf‖²` inside `B_radius(0)`.
    pub inside_fraction: f64,
    /// Share outside, computed independently.
    pub outside_fraction: f64,
}

/// 20-point Gauss–Legendre nodes and weights on `[−1, 1]`.
fn gauss_legendre_20() -> ([f64; 20], [f64; 20]) {
    const N: usize = 20;
    let mut nodes = [0.0; N];
    let mut weights = [0.0; N];
    for i in 0..N {
        let mut x = (PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=N {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `∫_{r0}^{r1} ∫_0^{2π} e^{−π|z − (s,0)|²} r dθ dr` for the unit-mass
/// density `e^{−π|z−m|²}`, by Gauss–Legendre in `r` and the periodic
/// trapezoid rule in `θ`.
fn annulus_mass(s: f64, r0: f64, r1: f64) -> f64 {
    let (nodes, weights) = gauss_legendre_20();
    let panels = (((r1 - r0) / 0.25).ceil() as usize).max(1);
    let width = (r1 - r0) / panels as f64;
    let n_theta = 64 + (12.0 * (2.0 * PI * r1 * s).sqrt()).ceil() as usize;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = r0 + (p as f64 + 0.5) * width;
        for (x, w) in nodes.iter().zip(&weights) {
            let r = mid + 0.5 * width * x;
            let mut ring = 0.0;
            for m in 0..n_theta {
                let th = 2.0 * PI * m as f64 / n_theta as f64;
                ring += (-PI * (r * r + s * s - 2.0 * r * s * th.cos())).exp();
            }
            total += 0.5 * width * w * r * ring * 2.0 * PI / n_theta as f64;
        }
    }
    total
}

/// Translate by `radius + 4`, scaled to norm `L`, and its energy split
/// across the ball `B_radius(0)`.
///
/// `|V_φu_s|² = ½e^{−π((x−s)²+y²)}` has total mass `½ = ‖φ‖²‖u_s‖²`, so the
/// fractions are masses of the normalized density `e^{−π|z−(s,0)|²}`.
pub fn escape_witness(radius: f64, norm: f64) -> Result<EscapeWitness> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(invalid(format!("radius must be > 0, got {radius}")));
    }
    if !(norm.is_finite() && norm > 0.0) {
        return Err(invalid(format!("norm bound L must be > 0, got {norm}")));
    }
    let shift = radius + 4.0;
    let coeff = norm / GaussianMixture::gaussian().norm();
    let signal = GaussianMixture::from_real_terms([(coeff, shift)]);
    Ok(EscapeWitness {
        signal,
        shift,
        inside_fraction: annulus_mass(shift, 0.0, radius),
        outside_fraction: annulus_mass(shift, radius, shift + 12.0),
    })
}

/// `L·‖φ_{x,y} − φ_{x′,y′}‖_{L²(ℝ)}` for the atoms
/// `φ_{x,y}(t) = e^{2πity} φ(t − x)`, whose inner product is
/// `2^{−1/2} e^{−π(Δx² + Δy²)/2} e^{πi(x+x′)(y−y′)}`.
pub fn equicontinuity_modulus(p: TfPoint, q: TfPoint, lipschitz: f64) -> Result<f64> {
    if !(lipschitz.is_finite() && lipschitz > 0.0) {
        return Err(invalid(format!("L must be > 0, got {lipschitz}")));
    }
    let (dx, dy) = (p.x - q.x, p.y - q.y);
    let re = FRAC_1_SQRT_2 * (-PI * (dx * dx + dy * dy) / 2.0).exp() * (PI * (p.x + q.x) * dy).cos();
    Ok(lipschitz * (2.0 * FRAC_1_SQRT_2 - 2.0 * re).max(0.0).sqrt())
}
