//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion, nonzero exit if
//! any criterion fails. Every tolerance is pinned here, next to its check.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::Command;

use gil::analytic::{
    d_dx_magnitude, d_dx_magnitude_diff, d_dy_magnitude, d_dy_magnitude_diff, dx_bounds_whole_plane, gabor_of_mixture,
    magnitude_diff, pair_magnitude, pointwise_bounds, PairSign, TfPoint,
};
use gil::frames::{
    calibrate_stft_constant, calibrate_wavelet_constant, decay_slope, scale_decay_slope, scaling_decay_slope,
    stft_penalty, stft_penalty_difference_with, taylor_remainder_ratio, wavelet_penalty_difference_with, StftFrameSpec,
    WaveletSpec,
};
use gil::lab::{self, certify, escape_witness, GridPolicy, CERTIFICATION_SET};
use gil::numeric::{gabor_quadrature, pair_distance};
use gil::signals::{make_pair, quotient_distance, GaussianMixture, SeparationParam};
use gil::stats::fit_line;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn sep(a: f64) -> SeparationParam {
    SeparationParam::new(a).expect("valid separation")
}

/// Radical inverse in base `b`, the building block of the Halton sequence.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / b as f64);
    while i > 0 {
        inv += (i % b) as f64 * f;
        i /= b;
        f /= b as f64;
    }
    inv
}

/// `n` Halton points (bases 2 and 3) in `[x0, x1] × [y0, y1]`.
fn halton(n: usize, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) -> Vec<TfPoint> {
    (1..=n as u64)
        .map(|i| TfPoint::new(x0 + (x1 - x0) * radical_inverse(i, 2), y0 + (y1 - y0) * radical_inverse(i, 3)))
        .collect()
}

fn criterion_1() -> Outcome {
    let target = 2f64.powf(0.75);
    let mut worst: f64 = 0.0;
    for a in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let (fp, fm) = make_pair(sep(a));
        worst = worst.max((quotient_distance(&fp, &fm) - target).abs() / target);
    }
    outcome(worst <= 1e-12, format!("max relative error {worst:.3e} (tol 1e-12)"))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for a in [0.5, 1.0, 2.0] {
        let (fp, fm) = make_pair(sep(a));
        let signals = [GaussianMixture::gaussian(), GaussianMixture::translate(a), fp, fm];
        let xh = 2.0 * a + 2.0;
        for i in 0..21 {
            for j in 0..21 {
                let p = TfPoint::new(-xh + 2.0 * xh * i as f64 / 20.0, -4.0 + 8.0 * j as f64 / 20.0);
                for f in &signals {
                    let exact = gabor_of_mixture(f, p);
                    let quad = gabor_quadrature(f, p, -a - 8.0, a + 8.0, 1.0 / 256.0).expect("quadrature");
                    worst = worst.max((exact - quad).norm());
                }
            }
        }
    }
    outcome(worst <= 1e-9, format!("max abs error {worst:.3e} (tol 1e-9)"))
}

fn criteria_3_4() -> (Outcome, Outcome) {
    let policy = GridPolicy::default();
    let mut l2_ok = true;
    let mut grad_ok = true;
    let mut worst_refine: f64 = 0.0;
    let mut lines = Vec::new();
    for a in CERTIFICATION_SET {
        let grid = policy.grid_for(sep(a)).expect("grid");
        let c = certify(sep(a), &grid).expect("certificate");
        let coarse = pair_distance(sep(a), &grid).expect("distance");
        let fine = pair_distance(sep(a), &grid.refined()).expect("distance");
        let refine = (coarse.l2_scaled - fine.l2_scaled).abs() / fine.l2_scaled;
        worst_refine = worst_refine.max(refine);
        l2_ok &= c.pass_l2;
        grad_ok &= c.pass_dx && c.pass_dy;
        lines.push(format!(
            "a={a}: l2 {:.4e}/{:.4e} dx {:.4e}/{:.4e} dy {:.4e}/{:.4e}",
            c.measured_l2, c.bound_l2, c.measured_dx_l2, c.bound_dx, c.measured_dy_l2, c.bound_dy
        ));
    }
    for line in &lines {
        println!("    {line}");
    }
    let c3 = outcome(
        l2_ok && worst_refine <= 1e-6,
        format!("all L² bounds hold: {l2_ok}; refinement change {worst_refine:.3e} (tol 1e-6)"),
    );
    let c4 = outcome(grad_ok, format!("all dx and dy bounds hold: {grad_ok} (C₂ = {})", lab::DY_ENVELOPE_C2));
    (c3, c4)
}

fn criteria_5_6() -> (Outcome, Outcome) {
    let a_values: Vec<f64> = (0..=8).map(|i| 1.0 + 0.25 * i as f64).collect();
    let sweep = lab::sweep_rate(&a_values, &GridPolicy::default()).expect("sweep");
    let fit = &sweep.fit;
    let c5 = outcome(
        (1.45..=1.65).contains(&fit.k_hat) && fit.r_squared >= 0.999,
        format!("k_hat {:.4} in [1.45, 1.65], R² {:.6} (min 0.999)", fit.k_hat, fit.r_squared),
    );
    let ratios: Vec<f64> = sweep.rows.iter().map(|r| r.ratio).collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let mut growth_ok = true;
    let mut factors = Vec::new();
    for pair in [(1.0, 1.5), (1.5, 2.0), (2.0, 2.5), (2.5, 3.0)] {
        let at = |a: f64| sweep.rows.iter().find(|r| (r.a - a).abs() < 1e-12).expect("row").ratio;
        let got = at(pair.1) / at(pair.0);
        let need = (1.45 * (pair.1 * pair.1 - pair.0 * pair.0)).exp() / 2.0;
        growth_ok &= got >= need;
        factors.push(format!("{got:.2}>={need:.2}"));
    }
    let c6 = outcome(increasing && growth_ok, format!("strictly increasing: {increasing}; growth {}", factors.join(", ")));
    (c5, c6)
}

fn criterion_7() -> Outcome {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for a in [1.0, 2.0] {
        let sa = sep(a);
        for p in halton(1000, (-a - 2.0, a + 2.0), (-3.0, 3.0)) {
            // Keep away from the magnitude zeros at (0, n/(2a)), where the
            // magnitude is not differentiable.
            let near_zero = p.x.abs() < 1e-3 && ((2.0 * a * p.y).round() - 2.0 * a * p.y).abs() < 2e-3 * a;
            if near_zero {
                continue;
            }
            for sign in [PairSign::Plus, PairSign::Minus] {
                let (Ok(dx), Ok(dy)) = (d_dx_magnitude(sign, sa, p), d_dy_magnitude(sign, sa, p)) else {
                    continue;
                };
                let m = |x: f64, y: f64| pair_magnitude(sign, sa, TfPoint::new(x, y));
                let fdx = (m(p.x + h, p.y) - m(p.x - h, p.y)) / (2.0 * h);
                let fdy = (m(p.x, p.y + h) - m(p.x, p.y - h)) / (2.0 * h);
                let scale = dx.hypot(dy);
                if scale == 0.0 {
                    continue;
                }
                worst = worst.max((fdx - dx).abs().max((fdy - dy).abs()) / scale);
            }
            checked += 1;
        }
    }
    outcome(worst <= 1e-5, format!("{checked} points, max relative error {worst:.3e} (tol 1e-5)"))
}

fn criterion_8() -> Outcome {
    let tol = 1e-12;
    let mut violations = [0usize; 6];
    let mut whole_plane_violations = 0usize;
    let mut dx_violations_with_nonnegative_bound = 0usize;
    let mut skipped = 0usize;
    let mut total = 0usize;
    for a in [0.5, 1.0, 2.0, 3.0] {
        let sa = sep(a);
        for p in halton(10_000, (-2.0 * a - 2.0, 2.0 * a + 2.0), (-4.0, 4.0)) {
            total += 1;
            let b = pointwise_bounds(sa, p);
            let (Ok(ddx), Ok(ddy)) = (d_dx_magnitude_diff(sa, p), d_dy_magnitude_diff(sa, p)) else {
                skipped += 1;
                continue;
            };
            let md = magnitude_diff(sa, p);
            let checks = [
                md <= b.mag_left * (1.0 + tol),
                md <= b.mag_right * (1.0 + tol),
                ddx.abs() <= b.dx_left * (1.0 + tol),
                ddx.abs() <= b.dx_right * (1.0 + tol),
                ddy.abs() <= b.dy_left * (1.0 + tol),
                ddy.abs() <= b.dy_right * (1.0 + tol),
            ];
            for (v, ok) in violations.iter_mut().zip(checks) {
                *v += usize::from(!ok);
            }
            if (!checks[2] && b.dx_left >= 0.0) || (!checks[3] && b.dx_right >= 0.0) {
                dx_violations_with_nonnegative_bound += 1;
            }
            let (wl, wr) = dx_bounds_whole_plane(sa, p);
            if ddx.abs() > wl.min(wr) * (1.0 + tol) {
                whole_plane_violations += 1;
            }
        }
    }
    let skip_rate = skipped as f64 / total as f64;
    let count: usize = violations.iter().sum();
    println!(
        "    violations [mag_l, mag_r, dx_l, dx_r, dy_l, dy_r] = {violations:?}; \
         dx violations where the stated bound is >= 0: {dx_violations_with_nonnegative_bound}; \
         whole-plane dx form violations = {whole_plane_violations}"
    );
    outcome(
        count == 0 && skip_rate < 1e-3,
        format!("{count} violations in {total} points, skip rate {skip_rate:.2e} (max 1e-3)"),
    )
}

fn criterion_9() -> Outcome {
    let mut worst_trunc: f64 = 0.0;
    for (s, p) in [(0.0, 1.0), (1.0, 1.0), (0.5, 2.0)] {
        let vals: Vec<f64> = [12, 16, 20]
            .iter()
            .map(|&r| stft_penalty(&GaussianMixture::gaussian(), &StftFrameSpec::gaussian(1.0, 1.0, s, p, r).expect("spec")).expect("penalty").value)
            .collect();
        worst_trunc = worst_trunc.max(((vals[1] - vals[0]) / vals[2]).abs()).max(((vals[2] - vals[1]) / vals[2]).abs());
    }
    let (s, p, m) = (0.0, 1.0, 3u32);
    let spec = StftFrameSpec::gaussian(1.0, 1.0, s, p, 16).expect("spec");
    let c_fit = calibrate_stft_constant(&spec, m).expect("calibration");
    let a_values = [2.0, 3.0, 4.0, 6.0, 8.0];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut all_pass = true;
    for a in a_values {
        let r = stft_penalty_difference_with(sep(a), &spec, m, c_fit).expect("difference");
        all_pass &= r.pass;
        xs.push((1.0 + a).ln());
        ys.push(r.difference.ln());
    }
    let slope = fit_line(&xs, &ys).expect("fit").slope;
    let limit = s * p - m as f64 + 1.0 + 0.5;
    outcome(
        worst_trunc < 1e-8 && slope <= limit && all_pass,
        format!("truncation change {worst_trunc:.2e} (tol 1e-8); slope {slope:.2} <= {limit}; envelope holds: {all_pass}"),
    )
}

fn criterion_10() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for m in 1..=3u32 {
        let need_k = -(m as f64 + 1.0) + 0.3;
        let need_j = -(m as f64 + 1.5) + 0.3;
        // β = 1/4 keeps |⟨φ, ψ_{0,32}⟩| above the double-precision floor.
        let k_spec = WaveletSpec::new(2.0, 0.25, m, 1.0, 1.0, 4, 64).expect("spec");
        let j_spec = WaveletSpec::new(2.0, 1.0, m, 1.0, 1.0, 4, 64).expect("spec");
        let ks = [4, 8, 16, 32];
        let k_slope = decay_slope(0, &ks, &k_spec).expect("k slope");
        let s_slope = scaling_decay_slope(&ks, &k_spec).expect("scaling slope");
        let j_slope = scale_decay_slope(2, &[0, 1, 2, 3, 4], &j_spec).expect("j slope");
        ok &= k_slope <= need_k && s_slope <= need_k && j_slope <= need_j;
        parts.push(format!("m={m}: k {k_slope:.1}, scaling {s_slope:.1} (<= {need_k}), j {j_slope:.2} (<= {need_j})"));
        for w in [1.0, 2.0, 4.0] {
            let ratio = taylor_remainder_ratio(w, m).expect("taylor");
            let bound = (-PI * w * w / 8.0).exp();
            if ratio > bound {
                ok = false;
                parts.push(format!("taylor m={m} w={w}: {ratio:.3e} > {bound:.3e}"));
            }
        }
    }
    for part in &parts {
        println!("    {part}");
    }
    outcome(ok, "k, j and scaling slopes and the Taylor estimate for m in 1..=3")
}

fn criterion_11() -> Outcome {
    let a_values = [2.0, 3.0, 4.0, 6.0];
    let mut ok = true;
    let mut parts = Vec::new();
    for m in 1..=3u32 {
        let spec = WaveletSpec::new(2.0, 1.0, m, 0.0, 1.0, 6, 64).expect("spec");
        let c_fit = calibrate_wavelet_constant(&spec).expect("calibration");
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for a in a_values {
            let r = wavelet_penalty_difference_with(sep(a), &spec, c_fit).expect("difference");
            ok &= r.pass;
            xs.push(a.ln());
            ys.push(r.difference.ln());
        }
        let slope = fit_line(&xs, &ys).expect("fit").slope;
        let limit = -(m as f64) + 0.5;
        ok &= slope <= limit;
        parts.push(format!("m={m}: {slope:.1} <= {limit}"));
    }
    outcome(ok, format!("slopes {}", parts.join(", ")))
}

fn criterion_12() -> Outcome {
    let mut worst: f64 = 0.0;
    for r in [1.0, 2.0, 5.0, 10.0] {
        worst = worst.max(escape_witness(r, 1.0).expect("witness").inside_fraction);
    }
    outcome(worst < 1e-6, format!("max inside fraction {worst:.3e} (max 1e-6)"))
}

fn criterion_13() -> Outcome {
    let out: PathBuf = [env!("CARGO_TARGET_TMPDIR"), "acceptance_determinism"].iter().collect();
    let run = |threads: &str| -> Option<Vec<u8>> {
        let status = Command::new(env!("CARGO_BIN_EXE_gil"))
            .args(["sweep", "--a-range", "1:3:0.25", "--out"])
            .arg(&out)
            .env("GIL_THREADS", threads)
            .status()
            .ok()?;
        if !status.success() {
            return None;
        }
        std::fs::read(out.join("sweep.csv")).ok()
    };
    match (run("1"), run("3")) {
        (Some(a), Some(b)) => outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b)),
        _ => outcome(false, "sweep run failed"),
    }
}

fn main() {
    let (c3, c4) = criteria_3_4();
    let (c5, c6) = criteria_5_6();
    let results = [
        ("quotient distance equals 2^{3/4}", criterion_1()),
        ("closed forms match quadrature", criterion_2()),
        ("L² bound", c3),
        ("gradient bounds", c4),
        ("exponential rate k_hat", c5),
        ("stability-constant growth", c6),
        ("derivative formulas vs finite differences", criterion_7()),
        ("pointwise bound suite", criterion_8()),
        ("STFT penalty finiteness and decay", criterion_9()),
        ("wavelet coefficient decay", criterion_10()),
        ("wavelet penalty-difference order", criterion_11()),
        ("non-compactness witness", criterion_12()),
        ("sweep output is thread-count independent", criterion_13()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {}: {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
