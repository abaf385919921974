//! `gil`: certificates, sweeps, frame penalties and field dumps for the
//! Gaussian pair `f_a^± = u_{−a} ± u_a`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use gil::frames::{
    self, stft_coeff, wavelet_coeff, PenaltyReport, StftFrameSpec, WaveletSpec,
};
use gil::lab::{self, BoundCertificate, CertificateExport, GridPolicy};
use gil::numeric::{sample_difference_field, sample_pair_fields, GridSpec};
use gil::signals::{make_pair, SeparationParam};
use gil::TOOL_VERSION;

#[derive(Parser, Debug)]
#[command(name = "gil", version, about = "Instability lab for Gabor phase retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Dump |V f_a^+|, |V f_a^−| and their difference on a grid.
    PairDemo(PairDemoArgs),
    /// Check the L² and gradient bounds at each separation.
    Certify(CommonArgs),
    /// Certify a range of separations and fit the exponential rate.
    Sweep(CommonArgs),
    /// Gabor-frame penalty differences.
    FramesStft(StftArgs),
    /// Wavelet penalty differences.
    FramesWavelet(WaveletArgs),
    /// Energy of the escaping translate inside balls.
    Escape(EscapeArgs),
    /// Certificates over the standard separation set plus the rate fit.
    Report(CommonArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct CommonArgs {
    /// Separation; may be repeated.
    #[arg(long = "a")]
    a: Vec<f64>,
    /// Inclusive range `start:stop:step`.
    #[arg(long = "a-range")]
    a_range: Option<String>,
    /// Grid spacing in both directions.
    #[arg(long, default_value_t = gil::numeric::DEFAULT_SPACING)]
    spacing: f64,
    /// Margin beyond the lobes in x.
    #[arg(long, default_value_t = gil::numeric::DEFAULT_X_MARGIN)]
    x_margin: f64,
    /// Half-height of the grid in y.
    #[arg(long, default_value_t = gil::numeric::DEFAULT_Y_HALF)]
    y_half: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug, Clone, Serialize)]
struct PairDemoArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `default`, or `coarse` for a quick look at spacing 1/8.
    #[arg(long, default_value = "default")]
    grid: String,
    /// Include partial derivatives in the magnitude dumps.
    #[arg(long)]
    derivatives: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
struct StftArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    #[arg(long, default_value_t = 1.0)]
    y0: f64,
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Order in the envelope `(1 + a)^{sp−m+1}`.
    #[arg(long, default_value_t = 3)]
    m: u32,
    /// Lattice truncation `|n|, |k| ≤ range`.
    #[arg(long, default_value_t = 16)]
    range: i64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct WaveletArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 2)]
    m: u32,
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 6)]
    j_max: u32,
    #[arg(long, default_value_t = 64)]
    k_max: i64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct EscapeArgs {
    /// Ball radius; may be repeated.
    #[arg(long, default_values_t = vec![1.0, 2.0, 5.0, 10.0])]
    radius: Vec<f64>,
    /// Norm bound `L` of the witness.
    #[arg(long, default_value_t = 1.0)]
    norm: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

/// Failures of the run, reported as JSON.
enum Failure {
    Usage(String),
    Runtime(String),
    Assertions(Vec<Value>),
}

impl From<gil::Error> for Failure {
    fn from(e: gil::Error) -> Self {
        match e {
            gil::Error::InvalidParameter(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type RunResult = std::result::Result<(), Failure>;

/// Parses `start:stop:step`; the stop value is kept when within 1e−12.
fn parse_range(text: &str) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("a-range must be start:stop:step, got {text:?}"));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad number {p:?} in a-range: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0 && step.is_finite()) {
        return Err(format!("a-range step must be positive, got {step}"));
    }
    if !(start.is_finite() && stop.is_finite()) || stop < start - 1e-12 {
        return Err(format!("a-range needs start <= stop, got {start}:{stop}"));
    }
    let mut values = Vec::new();
    let mut i = 0u64;
    loop {
        let v = start + i as f64 * step;
        if v > stop + 1e-12 {
            break;
        }
        values.push(if (v - stop).abs() <= 1e-12 { stop } else { v });
        i += 1;
    }
    Ok(values)
}

impl CommonArgs {
    fn separations(&self, fallback: &[f64]) -> std::result::Result<Vec<f64>, Failure> {
        let mut values = self.a.clone();
        if let Some(r) = &self.a_range {
            values.extend(parse_range(r).map_err(Failure::Usage)?);
        }
        if values.is_empty() {
            values = fallback.to_vec();
        }
        for &a in &values {
            SeparationParam::new(a)?;
        }
        Ok(values)
    }

    fn policy(&self) -> GridPolicy {
        GridPolicy { spacing: self.spacing, x_margin: self.x_margin, y_half: self.y_half }
    }
}

fn metadata(command: &Command) -> Vec<String> {
    vec![
        format!("tool_version: {TOOL_VERSION}"),
        format!("config: {}", serde_json::to_string(command).expect("config serializes")),
    ]
}

fn create(dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, command: &Command, body: Value) -> RunResult {
    let doc = json!({
        "metadata": { "tool_version": TOOL_VERSION, "config": command },
        "result": body,
    });
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn certificate_failures(certs: &[BoundCertificate]) -> Vec<Value> {
    let mut out = Vec::new();
    for c in certs {
        for (name, ok) in [("l2", c.pass_l2), ("dx", c.pass_dx), ("dy", c.pass_dy)] {
            if !ok {
                out.push(json!({ "check": format!("bound_{name}"), "a": c.a }));
            }
        }
    }
    out
}

fn finish(failures: Vec<Value>) -> RunResult {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertions(failures))
    }
}

fn run_pair_demo(args: &PairDemoArgs, command: &Command) -> RunResult {
    let spacing = match args.grid.as_str() {
        "default" => args.common.spacing,
        "coarse" => 0.125,
        other => return Err(Failure::Usage(format!("unknown grid {other:?}; expected default or coarse"))),
    };
    let policy = GridPolicy { spacing, ..args.common.policy() };
    let meta = metadata(command);
    for a in args.common.separations(&[2.0])? {
        let sa = SeparationParam::new(a)?;
        let grid = policy.grid_for(sa)?;
        let (plus, minus) = sample_pair_fields(sa, &grid, args.derivatives);
        let diff = sample_difference_field(sa, &grid);
        for (label, field) in [("plus", &plus), ("minus", &minus), ("difference", &diff)] {
            let mut w = create(&args.common.out, &format!("pair_{label}_a{a}.csv"))?;
            field.write_csv(&mut w, &meta)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn certificates(args: &CommonArgs, fallback: &[f64]) -> std::result::Result<Vec<(BoundCertificate, GridSpec)>, Failure> {
    let policy = args.policy();
    let mut out = Vec::new();
    for a in args.separations(fallback)? {
        let sa = SeparationParam::new(a)?;
        let grid = policy.grid_for(sa)?;
        out.push((lab::certify(sa, &grid)?, grid));
    }
    Ok(out)
}

fn write_certificates(args: &CommonArgs, name: &str, certs: &[(BoundCertificate, GridSpec)], command: &Command) -> RunResult {
    match args.format {
        Format::Json => {
            let exports: Vec<CertificateExport> = certs
                .iter()
                .map(|(c, g)| CertificateExport { certificate: *c, grid: *g, tool_version: TOOL_VERSION.to_string() })
                .collect();
            write_json(&args.out, &format!("{name}.json"), command, serde_json::to_value(exports)?)
        }
        Format::Csv => {
            let mut w = create(&args.out, &format!("{name}.csv"))?;
            for line in metadata(command) {
                writeln!(w, "# {line}")?;
            }
            writeln!(w, "a,measured_l2,measured_dx_l2,measured_dy_l2,bound_l2,bound_dx,bound_dy,pass_l2,pass_dx,pass_dy")?;
            for (c, _) in certs {
                writeln!(
                    w,
                    "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{},{}",
                    c.a, c.measured_l2, c.measured_dx_l2, c.measured_dy_l2, c.bound_l2, c.bound_dx, c.bound_dy,
                    c.pass_l2, c.pass_dx, c.pass_dy
                )?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn run_certify(args: &CommonArgs, command: &Command) -> RunResult {
    let certs = certificates(args, &[2.0])?;
    write_certificates(args, "certificate", &certs, command)?;
    let plain: Vec<BoundCertificate> = certs.iter().map(|c| c.0).collect();
    finish(certificate_failures(&plain))
}

fn run_sweep(args: &CommonArgs, command: &Command) -> RunResult {
    let a_values = args.separations(&lab::calibration_set())?;
    let sweep = lab::sweep_rate(&a_values, &args.policy())?;
    let mut w = create(&args.out, "sweep.csv")?;
    sweep.write_csv(&mut w, &metadata(command))?;
    w.flush()?;
    write_json(&args.out, "rate_fit.json", command, json!({ "w12": sweep.fit, "l2": sweep.l2_fit }))?;
    let mut failures = certificate_failures(&sweep.certificates);
    if sweep.fit.k_hat < 1.45 {
        failures.push(json!({ "check": "k_hat", "value": sweep.fit.k_hat, "minimum": 1.45 }));
    }
    if sweep.fit.r_squared < 0.999 {
        failures.push(json!({ "check": "r_squared", "value": sweep.fit.r_squared, "minimum": 0.999 }));
    }
    finish(failures)
}

fn report_failures(reports: &[PenaltyReport]) -> Vec<Value> {
    reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| json!({ "check": "penalty_difference", "a": r.a, "difference": r.difference, "bound": r.paper_bound }))
        .collect()
}

fn run_frames_stft(args: &StftArgs, command: &Command) -> RunResult {
    let spec = StftFrameSpec::gaussian(args.x0, args.y0, args.s, args.p, args.range)?;
    let a_values = args.common.separations(&[2.0, 3.0, 4.0, 6.0, 8.0])?;
    let c_fit = frames::calibrate_stft_constant(&spec, args.m)?;
    let reports = a_values
        .iter()
        .map(|&a| frames::stft_penalty_difference_with(SeparationParam::new(a)?, &spec, args.m, c_fit))
        .collect::<gil::Result<Vec<_>>>()?;
    write_json(&args.common.out, "stft_reports.json", command, json!({ "c_fit": c_fit, "reports": reports }))?;
    let (fp, _) = make_pair(SeparationParam::new(a_values[0])?);
    let mut rows = Vec::new();
    for n in -spec.n_range..=spec.n_range {
        for k in -spec.k_range..=spec.k_range {
            rows.push((n, k, stft_coeff(&fp, n, k, &spec)));
        }
    }
    frames::write_stft_coefficients(create(&args.common.out, "stft_coefficients.csv")?, &rows, &metadata(command))?;
    finish(report_failures(&reports))
}

fn run_frames_wavelet(args: &WaveletArgs, command: &Command) -> RunResult {
    let spec = WaveletSpec::new(args.alpha, args.beta, args.m, args.s, args.p, args.j_max, args.k_max)?;
    let a_values = args.common.separations(&[2.0, 3.0, 4.0, 6.0])?;
    let c_fit = frames::calibrate_wavelet_constant(&spec)?;
    let reports = a_values
        .iter()
        .map(|&a| frames::wavelet_penalty_difference_with(SeparationParam::new(a)?, &spec, c_fit))
        .collect::<gil::Result<Vec<_>>>()?;
    write_json(&args.common.out, "wavelet_reports.json", command, json!({ "c_fit": c_fit, "reports": reports }))?;
    let (fp, _) = make_pair(SeparationParam::new(a_values[0])?);
    let mut rows = Vec::new();
    for j in 0..=spec.j_max.min(3) {
        let reach = (spec.alpha.powi(j as i32) * (a_values[0] + 4.0) / spec.beta).ceil() as i64;
        for k in -reach..=reach {
            rows.push((j, k, wavelet_coeff(&fp, j, k, &spec).re));
        }
    }
    frames::write_wavelet_coefficients(create(&args.common.out, "wavelet_coefficients.csv")?, &rows, &metadata(command))?;
    finish(report_failures(&reports))
}

fn run_escape(args: &EscapeArgs, command: &Command) -> RunResult {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for &r in &args.radius {
        let w = lab::escape_witness(r, args.norm)?;
        if !(w.inside_fraction < 1e-6) {
            failures.push(json!({ "check": "inside_fraction", "radius": r, "value": w.inside_fraction }));
        }
        results.push(json!({
            "radius": r,
            "shift": w.shift,
            "inside_fraction": w.inside_fraction,
            "outside_fraction": w.outside_fraction,
        }));
    }
    write_json(&args.out, "escape.json", command, Value::Array(results))?;
    finish(failures)
}

fn run_report(args: &CommonArgs, command: &Command) -> RunResult {
    let certs = certificates(args, &lab::CERTIFICATION_SET)?;
    write_certificates(args, "report", &certs, command)?;
    let plain: Vec<BoundCertificate> = certs.iter().map(|c| c.0).collect();
    finish(certificate_failures(&plain))
}

fn run(command: &Command) -> RunResult {
    match command {
        Command::PairDemo(a) => run_pair_demo(a, command),
        Command::Certify(a) => run_certify(a, command),
        Command::Sweep(a) => run_sweep(a, command),
        Command::FramesStft(a) => run_frames_stft(a, command),
        Command::FramesWavelet(a) => run_frames_wavelet(a, command),
        Command::Escape(a) => run_escape(a, command),
        Command::Report(a) => run_report(a, command),
    }
}

/// Reads `GIL_THREADS` (unset or 0 means one worker per core).
fn configure_threads() -> std::result::Result<(), String> {
    let threads = match std::env::var("GIL_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|e| format!("GIL_THREADS={v:?}: {e}"))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("{}", json!({ "status": "usage_error", "message": msg }));
        return ExitCode::from(2);
    }
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("{}", json!({ "status": "usage_error", "message": msg }));
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("{}", json!({ "status": "error", "failures": [{ "check": "runtime", "message": msg }] }));
            ExitCode::from(1)
        }
        Err(Failure::Assertions(list)) => {
            eprintln!("{}", json!({ "status": "failed", "failures": list }));
            ExitCode::from(1)
        }
    }
}
