//! Closed-form Gabor transforms with the Gaussian window.
//!
//! With `A = e^{−π/2(x+a)²}`, `B = e^{−π/2(x−a)²}` and `θ = 2πay` the pair
//! magnitudes are `|V_φf_a^±| = 2^{−1/2} e^{−πy²/2} R_±` where
//! `R_±² = (A−B)² + 2AB(1 ± cos θ)`. Every quantity here is evaluated from
//! that factorization: `A` and `B` are normalized by the larger of the two,
//! and the remaining exponent is carried separately as a logarithm. This keeps
//! the values meaningful long after `e^{−πa²/2}` underflows, and the
//! difference `|V_φf_a^+| − |V_φf_a^−|` is formed as `4ABcos θ/(R_+ + R_−)`
//! instead of by cancellation.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{GaussianMixture, SeparationParam};

/// Denominators `|1 ± e^{−2πiay+2πax}|` below this mark a singular point.
pub const SINGULAR_TOL: f64 = 1e-14;

/// A point `(x, y)` of the time-frequency plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfPoint {
    pub x: f64,
    pub y: f64,
}

impl TfPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Selects `f_a^+` or `f_a^−`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSign {
    Plus,
    Minus,
}

impl PairSign {
    pub fn factor(self) -> f64 {
        match self {
            PairSign::Plus => 1.0,
            PairSign::Minus => -1.0,
        }
    }
}

/// Right-hand sides of the six pointwise estimates at one point.
///
/// `dx_left` and `dx_right` are evaluated exactly as stated, so `dx_left` is
/// negative for `x > 3a` and `dx_right` is negative for `x < −3a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseBoundSet {
    pub mag_left: f64,
    pub mag_right: f64,
    pub dx_left: f64,
    pub dx_right: f64,
    pub dy_left: f64,
    pub dy_right: f64,
}

/// The bounded ratios that appear inside the derivative estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRatios {
    /// `|cos θ + e^{2πax}|/|1+z| + |e^{2πax} − cos θ|/|1−z|`, at most 2.
    pub second_term: f64,
    /// `|sin θ|/|1+z|`, at most 1.
    pub sin_plus: f64,
    /// `|sin θ|/|1−z|`, at most 1.
    pub sin_minus: f64,
}

/// `V_φφ(x,y) = 2^{−1/2} e^{−πixy} e^{−π/2(x²+y²)}`.
pub fn gabor_of_gaussian(p: TfPoint) -> Complex64 {
    let TfPoint { x, y } = p;
    Complex64::from_polar(
        FRAC_1_SQRT_2 * (-PI / 2.0 * (x * x + y * y)).exp(),
        -PI * x * y,
    )
}

/// `V_φ(T_aφ)(x,y) = 2^{−1/2} e^{−πiay} e^{−πixy} e^{−π/2((x−a)²+y²)}`.
pub fn gabor_of_shifted(a: f64, p: TfPoint) -> Complex64 {
    let TfPoint { x, y } = p;
    Complex64::from_polar(
        FRAC_1_SQRT_2 * (-PI / 2.0 * ((x - a) * (x - a) + y * y)).exp(),
        -PI * (a + x) * y,
    )
}

/// Transform of an arbitrary mixture by linearity.
pub fn gabor_of_mixture(sig: &GaussianMixture, p: TfPoint) -> Complex64 {
    sig.terms()
        .iter()
        .map(|t| t.coeff * gabor_of_shifted(t.shift, p))
        .sum()
}

/// `V_φf_a^± = V_φu_{−a} ± V_φu_a`.
pub fn gabor_of_pair(sign: PairSign, a: SeparationParam, p: TfPoint) -> Complex64 {
    let a = a.value();
    gabor_of_shifted(-a, p) + gabor_of_shifted(a, p) * sign.factor()
}

/// Normalized local state of the pair at one point.
///
/// Values are recovered as `mantissa · e^{ln_lobe}` for single-lobe
/// quantities (degree one in `(A, B)`) and as `mantissa · e^{ln_cross}` for
/// differences, which carry an extra factor `AB / max(A, B)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairKernel {
    pub x: f64,
    pub y: f64,
    pub a: f64,
    pub ln_lobe: f64,
    pub ln_cross: f64,
    an: f64,
    bn: f64,
    cos_t: f64,
    sin_t: f64,
    half_cos2: f64,
    half_sin2: f64,
    rp: f64,
    rm: f64,
}

impl PairKernel {
    pub fn new(a: f64, p: TfPoint) -> Self {
        let TfPoint { x, y } = p;
        let la = -PI / 2.0 * (x + a) * (x + a);
        let lb = -PI / 2.0 * (x - a) * (x - a);
        let lmax = la.max(lb);
        let an = (la - lmax).exp();
        let bn = (lb - lmax).exp();
        let theta = 2.0 * PI * a * y;
        let (sin_t, cos_t) = theta.sin_cos();
        let (sh, ch) = (theta / 2.0).sin_cos();
        let (half_cos2, half_sin2) = (ch * ch, sh * sh);
        let d = an - bn;
        let rp = (d * d + 4.0 * an * bn * half_cos2).sqrt();
        let rm = (d * d + 4.0 * an * bn * half_sin2).sqrt();
        let ln_pref = -PI * y * y / 2.0 - LN_2 / 2.0;
        Self {
            x,
            y,
            a,
            ln_lobe: ln_pref + lmax,
            ln_cross: ln_pref + la.min(lb),
            an,
            bn,
            cos_t,
            sin_t,
            half_cos2,
            half_sin2,
            rp,
            rm,
        }
    }

    fn r(&self, sign: PairSign) -> f64 {
        match sign {
            PairSign::Plus => self.rp,
            PairSign::Minus => self.rm,
        }
    }

    /// `|1 ± e^{−2πiay+2πax}| = R_±/A`.
    pub fn denominator(&self, sign: PairSign) -> f64 {
        if self.an == 0.0 {
            f64::INFINITY
        } else {
            self.r(sign) / self.an
        }
    }

    pub fn is_singular(&self, sign: PairSign) -> bool {
        self.denominator(sign) < SINGULAR_TOL
    }

    fn check(&self, sign: PairSign) -> Result<()> {
        if self.is_singular(sign) {
            Err(Error::SingularPoint {
                x: self.x,
                y: self.y,
                denominator: self.denominator(sign),
            })
        } else {
            Ok(())
        }
    }

    /// Lobe mantissa of `|V_φf_a^±|`.
    pub fn magnitude(&self, sign: PairSign) -> f64 {
        self.r(sign)
    }

    /// Cross mantissa of `|V_φf_a^+| − |V_φf_a^−|`.
    pub fn diff(&self) -> f64 {
        4.0 * self.cos_t / (self.rp + self.rm)
    }

    /// Lobe mantissa of `∂_x |V_φf_a^±|`.
    pub fn dx(&self, sign: PairSign) -> Result<f64> {
        self.check(sign)?;
        let (r, h) = match sign {
            PairSign::Plus => (self.rp, self.half_cos2),
            PairSign::Minus => (self.rm, self.half_sin2),
        };
        // ±A cos θ + B = (B − A) + 2A·{cos², sin²}(θ/2)
        let inner = (self.bn - self.an) + 2.0 * self.an * h;
        Ok(-PI * (self.x + self.a) * r + 2.0 * PI * self.a * self.bn * inner / r)
    }

    /// Lobe mantissa of `∂_y |V_φf_a^±|`.
    pub fn dy(&self, sign: PairSign) -> Result<f64> {
        self.check(sign)?;
        let r = self.r(sign);
        Ok(-PI * self.y * r
            - sign.factor() * 2.0 * PI * self.a * self.an * self.bn * self.sin_t / r)
    }

    fn check_both(&self) -> Result<()> {
        self.check(PairSign::Plus)?;
        self.check(PairSign::Minus)
    }

    /// Cross mantissa of `∂_x(|V_φf_a^+| − |V_φf_a^−|)`.
    pub fn ddx(&self) -> Result<f64> {
        self.check_both()?;
        let (an, bn, rp, rm) = (self.an, self.bn, self.rp, self.rm);
        let sum = rp + rm;
        // Q = (R_+ + R_−)² − 4B², rewritten without cancellation.
        let q = if an >= bn {
            2.0 * (an * an - bn * bn) + 2.0 * rp * rm
        } else {
            8.0 * an * an * bn * bn * self.sin_t * self.sin_t / (rp * rm + bn * bn - an * an)
        };
        Ok(-4.0 * PI * (self.x + self.a) * self.cos_t / sum
            + 2.0 * PI * self.a * self.cos_t * q / (sum * rp * rm))
    }

    /// Cross mantissa of `∂_y(|V_φf_a^+| − |V_φf_a^−|)`.
    pub fn ddy(&self) -> Result<f64> {
        self.check_both()?;
        let sum = self.rp + self.rm;
        Ok(-4.0 * PI * self.y * self.cos_t / sum
            - 2.0 * PI * self.a * self.sin_t * sum / (self.rp * self.rm))
    }

    /// Mantissa of `|V_φf_a^+||V_φf_a^−|`; scale is `e^{2 ln_lobe}`.
    pub fn product(&self) -> f64 {
        self.rp * self.rm
    }

    pub fn ratios(&self) -> Result<BoundRatios> {
        self.check_both()?;
        let (an, bn, c) = (self.an, self.bn, self.cos_t);
        Ok(BoundRatios {
            second_term: (an * c + bn).abs() / self.rp + (bn - an * c).abs() / self.rm,
            sin_plus: an * self.sin_t.abs() / self.rp,
            sin_minus: an * self.sin_t.abs() / self.rm,
        })
    }
}

/// `m · e^{ln}`, exact zero for a zero mantissa.
pub(crate) fn rescale(mantissa: f64, ln: f64) -> f64 {
    if mantissa == 0.0 {
        0.0
    } else {
        mantissa * ln.exp()
    }
}

/// `|V_φf_a^±(x,y)|`.
pub fn pair_magnitude(sign: PairSign, a: SeparationParam, p: TfPoint) -> f64 {
    let k = PairKernel::new(a.value(), p);
    rescale(k.magnitude(sign), k.ln_lobe)
}

/// `|V_φf_a^+| − |V_φf_a^−|` with its sign.
pub fn signed_magnitude_diff(a: SeparationParam, p: TfPoint) -> f64 {
    let k = PairKernel::new(a.value(), p);
    rescale(k.diff(), k.ln_cross)
}

/// `| |V_φf_a^+| − |V_φf_a^−| |`.
pub fn magnitude_diff(a: SeparationParam, p: TfPoint) -> f64 {
    signed_magnitude_diff(a, p).abs()
}

/// `∂_x |V_φf_a^±|`; fails on the zero set of the magnitude.
pub fn d_dx_magnitude(sign: PairSign, a: SeparationParam, p: TfPoint) -> Result<f64> {
    let k = PairKernel::new(a.value(), p);
    Ok(rescale(k.dx(sign)?, k.ln_lobe))
}

/// `∂_y |V_φf_a^±|`; fails on the zero set of the magnitude.
pub fn d_dy_magnitude(sign: PairSign, a: SeparationParam, p: TfPoint) -> Result<f64> {
    let k = PairKernel::new(a.value(), p);
    Ok(rescale(k.dy(sign)?, k.ln_lobe))
}

/// `∂_x(|V_φf_a^+| − |V_φf_a^−|)` without cancellation.
pub fn d_dx_magnitude_diff(a: SeparationParam, p: TfPoint) -> Result<f64> {
    let k = PairKernel::new(a.value(), p);
    Ok(rescale(k.ddx()?, k.ln_cross))
}

/// `∂_y(|V_φf_a^+| − |V_φf_a^−|)` without cancellation.
pub fn d_dy_magnitude_diff(a: SeparationParam, p: TfPoint) -> Result<f64> {
    let k = PairKernel::new(a.value(), p);
    Ok(rescale(k.ddy()?, k.ln_cross))
}

/// The ratios bounded by 2 and by 1 in the derivative estimates.
pub fn bound_ratios(a: SeparationParam, p: TfPoint) -> Result<BoundRatios> {
    PairKernel::new(a.value(), p).ratios()
}

/// The six pointwise right-hand sides, evaluated literally.
pub fn pointwise_bounds(a: SeparationParam, p: TfPoint) -> PointwiseBoundSet {
    let a = a.value();
    let TfPoint { x, y } = p;
    let left = (-PI / 2.0 * ((x - a) * (x - a) + y * y)).exp();
    let right = (-PI / 2.0 * ((x + a) * (x + a) + y * y)).exp();
    let dy_factor = SQRT_2 * ((PI * y).abs() + 2.0 * PI * a);
    PointwiseBoundSet {
        mag_left: SQRT_2 * left,
        mag_right: SQRT_2 * right,
        dx_left: SQRT_2 * (3.0 * a - x) * PI * left,
        dx_right: SQRT_2 * (3.0 * a + x) * PI * right,
        dy_left: dy_factor * left,
        dy_right: dy_factor * right,
    }
}

/// Whole-plane form of the x-derivative estimates, `√2π(|x ∓ a| + 2a)e^{…}`.
///
/// The derivative argument bounds `|x + a| + 2a` and `|x − a| + 2a`; the
/// literal right-hand sides replace these by `3a ∓ x`, which agrees only on
/// the half-plane containing the respective lobe. Returns `(left, right)`.
pub fn dx_bounds_whole_plane(a: SeparationParam, p: TfPoint) -> (f64, f64) {
    let a = a.value();
    let TfPoint { x, y } = p;
    let left = (-PI / 2.0 * ((x - a) * (x - a) + y * y)).exp();
    let right = (-PI / 2.0 * ((x + a) * (x + a) + y * y)).exp();
    (
        SQRT_2 * PI * ((x + a).abs() + 2.0 * a) * left,
        SQRT_2 * PI * ((x - a).abs() + 2.0 * a) * right,
    )
}
