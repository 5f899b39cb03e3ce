//! Acceptance checks over the sweep. Each check returns one pass/fail record.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{angle_from_center, fit_linear, PixelCalibration};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::harness::{derive_seed, render as render_files, run_sweep_with, with_threads, Mode, Setup, SweepReport};
use crate::propagation::{correct_slope, map_width, OpticalTrain};

/// Characteristic signal width quoted for the model, metres.
pub const SIGNAL_WIDTH_ANCHOR: f64 = 1432e-6;
pub const SLOPE_BAND: (f64, f64) = (1.9, 2.1);
pub const INTERCEPT_TARGET_DEG: f64 = 3.0;
pub const INTERCEPT_TOLERANCE_DEG: f64 = 0.01;
pub const WIDTH_TOLERANCE: f64 = 0.15;
pub const DETECTOR_WIDTH_BAND: (f64, f64) = (17.0, 22.0);
pub const SCALING_TOLERANCE: f64 = 0.05;
/// Width scaling used when the configured train sits in the focal plane.
pub const FALLBACK_MISALIGNMENT: f64 = 1.3;
pub const ORACLE_MIN_CORRELATION: f64 = 0.99;
pub const ORACLE_MAX_CENTER_DIFFERENCE: f64 = 0.3;
pub const FLATNESS_LIMIT: f64 = 0.05;
pub const MONTE_CARLO_SEEDS: usize = 100;
pub const CENTROID_BIAS_LIMIT: f64 = 0.05;
pub const PULL_MEAN_LIMIT: f64 = 0.15;
pub const PULL_SD_BAND: (f64, f64) = (0.7, 1.3);
pub const SLOPE_RUNTIME_LIMIT_S: f64 = 60.0;
pub const ORACLE_RUNTIME_LIMIT_S: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotEvaluated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u8, name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            id,
            name,
            status: if passed { Status::Pass } else { Status::Fail },
            detail,
        }
    }

    fn skipped(id: u8, name: &'static str, detail: &str) -> Self {
        Self {
            id,
            name,
            status: Status::NotEvaluated,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotEvaluated => "N/A ",
        };
        format!("[{tag}] {}. {}: {}", self.id, self.name, self.detail)
    }
}

pub fn render(results: &[CriterionResult]) -> String {
    let mut out = String::new();
    for r in results {
        let _ = writeln!(out, "{}", r.line());
    }
    out
}

/// Shared state: the resolved setup and the default analytic sweep.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub setup: Setup,
    pub analytic: SweepReport,
    /// Seconds spent on calibration plus the analytic sweep.
    pub analytic_seconds: f64,
}

impl Context {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let start = Instant::now();
        let setup = Setup::new(cfg)?;
        let analytic = run_sweep_with(&setup, cfg, Mode::Analytic)?;
        Ok(Self {
            cfg: cfg.clone(),
            setup,
            analytic,
            analytic_seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn reference_index(report: &SweepReport) -> usize {
        report
            .angles
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.alpha_p_deg.abs().total_cmp(&b.1.alpha_p_deg.abs()))
            .map(|(i, _)| i)
            .expect("sweep is nonempty")
    }
}

const NAMES: [&str; 8] = [
    "theoretical slope",
    "intercept",
    "signal width",
    "scaling reconciliation",
    "oracle equivalence",
    "peak flatness",
    "statistical recovery",
    "determinism",
];

fn in_band(x: f64, band: (f64, f64)) -> bool {
    x >= band.0 && x <= band.1
}

/// 1. Analytic slope in band, with the waist sensitivity reported.
pub fn slope(ctx: &Context) -> Result<CriterionResult> {
    let start = Instant::now();
    let mut sensitivity = Vec::new();
    for waist in [50e-6, 100e-6, 200e-6] {
        let mut cfg = ctx.cfg.clone();
        cfg.beam.waist_m = waist;
        let setup = Setup::with_crystal(&cfg, ctx.setup.crystal.clone(), ctx.setup.train)?;
        let report = run_sweep_with(&setup, &cfg, Mode::Analytic)?;
        sensitivity.push(format!("w_p={:.0}um:{:.4}", waist * 1e6, report.line.slope));
    }
    let seconds = ctx.analytic_seconds + start.elapsed().as_secs_f64();
    let line = &ctx.analytic.line;
    let ok = in_band(line.slope, SLOPE_BAND) && seconds < SLOPE_RUNTIME_LIMIT_S;
    Ok(CriterionResult::new(
        1,
        NAMES[0],
        ok,
        format!(
            "slope = {:.4} ± {:.4} (band [{}, {}]); waist sensitivity {}; runtime {:.1} s (< {} s)",
            line.slope,
            line.sigma_slope,
            SLOPE_BAND.0,
            SLOPE_BAND.1,
            sensitivity.join(", "),
            seconds,
            SLOPE_RUNTIME_LIMIT_S
        ),
    ))
}

/// 2. Analytic intercept near the calibration target.
pub fn intercept(ctx: &Context) -> CriterionResult {
    let line = &ctx.analytic.line;
    let dev = (line.intercept - INTERCEPT_TARGET_DEG).abs();
    CriterionResult::new(
        2,
        NAMES[1],
        dev <= INTERCEPT_TOLERANCE_DEG,
        format!(
            "intercept = {:.6} ± {:.6} deg (target {} ± {}); cut angle {:.4} deg",
            line.intercept,
            line.sigma_intercept,
            INTERCEPT_TARGET_DEG,
            INTERCEPT_TOLERANCE_DEG,
            ctx.analytic.calibrated_cut_angle_deg
        ),
    )
}

/// 3. Focal-plane signal diameter against the anchor, detector 2w in pixels.
pub fn signal_width(ctx: &Context) -> Result<CriterionResult> {
    let focal = ctx.cfg.focal_plane_train();
    let reference = &ctx.analytic.angles[Context::reference_index(&ctx.analytic)];
    let w_s = reference.marginal_width;
    let focal_diameter = 2.0 * map_width(w_s, &focal)?;
    let rel = (focal_diameter - SIGNAL_WIDTH_ANCHOR).abs() / SIGNAL_WIDTH_ANCHOR;
    let pixels = reference.fit.diameter();
    let ok = rel <= WIDTH_TOLERANCE && in_band(pixels, DETECTOR_WIDTH_BAND);
    Ok(CriterionResult::new(
        3,
        NAMES[2],
        ok,
        format!(
            "focal-plane 2w = {:.0} um ({:+.1}% vs {:.0} um, limit ±{:.0}%); detector 2w = {:.2} px (band [{}, {}]); crystal-side w_s = {:.1} um",
            focal_diameter * 1e6,
            100.0 * (focal_diameter / SIGNAL_WIDTH_ANCHOR - 1.0),
            SIGNAL_WIDTH_ANCHOR * 1e6,
            100.0 * WIDTH_TOLERANCE,
            pixels,
            DETECTOR_WIDTH_BAND.0,
            DETECTOR_WIDTH_BAND.1,
            w_s * 1e6
        ),
    ))
}

/// 4. Slope measured through a misaligned train, corrected by the width ratio.
pub fn scaling(ctx: &Context) -> Result<CriterionResult> {
    let focal_train = ctx.cfg.focal_plane_train();
    let configured = ctx.setup.train;
    let ratio = (configured.factor()? / focal_train.factor()?).abs();
    let (lab, lab_report) = if (ratio - 1.0).abs() > 0.01 {
        (ctx.setup.clone(), ctx.analytic.clone())
    } else {
        let train = OpticalTrain::scaled(
            focal_train.f,
            focal_train.wavelength,
            0.2 * focal_train.f / 0.3,
            FALLBACK_MISALIGNMENT,
        )?;
        let setup = ctx.setup.with_train(train)?;
        let report = run_sweep_with(&setup, &ctx.cfg, Mode::Analytic)?;
        (setup, report)
    };
    let focal = ctx.setup.with_train(focal_train)?;
    let focal_report = run_sweep_with(&focal, &ctx.cfg, Mode::Analytic)?;

    // Read the misaligned centroids with a focal-plane calibration.
    let c = lab.calibration;
    let naive = PixelCalibration::new(
        c.pixel_ref,
        c.k_ref,
        lab.array.pitch,
        focal_train.factor()?.abs(),
        c.wavelength(),
    );
    let points: Vec<(f64, f64, f64)> = lab_report
        .angles
        .iter()
        .map(|r| {
            (
                r.alpha_p_deg,
                angle_from_center(r.fit.center, &naive),
                r.fit.sigma_center * naive.degrees_per_pixel(r.fit.center),
            )
        })
        .collect();
    let s_m = fit_linear(&points)?.slope;
    let i_lab = Context::reference_index(&lab_report);
    let i_focal = Context::reference_index(&focal_report);
    let r = lab_report.angles[i_lab].fit.diameter() / focal_report.angles[i_focal].fit.diameter();
    let corrected = correct_slope(s_m, r);
    let target = ctx.analytic.line.slope;
    let rel = (corrected - target).abs() / target;
    Ok(CriterionResult::new(
        4,
        NAMES[3],
        rel <= SCALING_TOLERANCE,
        format!(
            "s_m = {s_m:.4}, r = {r:.4}, s_m/r = {corrected:.4} vs analytic {target:.4} ({:.2}%, limit {:.0}%); literal r*s_m = {:.4}; reference arithmetic 1.3*1.56 = {:.3}",
            100.0 * rel,
            100.0 * SCALING_TOLERANCE,
            r * s_m,
            1.3 * 1.56
        ),
    ))
}

/// 5. Exact-amplitude quadrature against the closed form at every angle.
pub fn oracle(ctx: &Context) -> Result<CriterionResult> {
    let start = Instant::now();
    let report = run_sweep_with(&ctx.setup, &ctx.cfg, Mode::Oracle)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(oracle_result(&report, Some(seconds)))
}

fn oracle_result(report: &SweepReport, seconds: Option<f64>) -> CriterionResult {
    let corr = report.oracle_min_correlation.unwrap_or(f64::NAN);
    let diff = report.oracle_max_center_difference.unwrap_or(f64::NAN);
    let time_ok = seconds.is_none_or(|s| s < ORACLE_RUNTIME_LIMIT_S);
    let ok = corr > ORACLE_MIN_CORRELATION && diff < ORACLE_MAX_CENTER_DIFFERENCE && time_ok;
    let timing = seconds.map_or(String::new(), |s| {
        format!("; runtime {s:.1} s (< {ORACLE_RUNTIME_LIMIT_S} s)")
    });
    CriterionResult::new(
        5,
        NAMES[4],
        ok,
        format!(
            "min correlation = {corr:.6} (> {ORACLE_MIN_CORRELATION}); max centroid difference = {diff:.4} px (< {ORACLE_MAX_CENTER_DIFFERENCE}){timing}"
        ),
    )
}

fn flatness_result(report: &SweepReport) -> CriterionResult {
    CriterionResult::new(
        6,
        NAMES[5],
        report.flatness < FLATNESS_LIMIT,
        format!(
            "max relative deviation of peak probability = {:.3}% (< {:.0}%)",
            100.0 * report.flatness,
            100.0 * FLATNESS_LIMIT
        ),
    )
}

/// 6. Peak coincidence probability across the sweep.
pub fn flatness(ctx: &Context) -> CriterionResult {
    flatness_result(&ctx.analytic)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloSummary {
    pub max_centroid_bias: f64,
    pub pull_mean: f64,
    pub pull_sd: f64,
}

/// Synthetic sweeps over `seeds` seeds: centroid bias and slope pulls
/// relative to the noise-free fits.
pub fn monte_carlo(ctx: &Context, seeds: usize) -> Result<MonteCarloSummary> {
    let runs: Vec<SweepReport> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let mut cfg = ctx.cfg.clone();
            cfg.acquisition.seed = derive_seed(ctx.cfg.acquisition.seed, 1_000_000 + s);
            run_sweep_with(&ctx.setup, &cfg, Mode::Synthetic)
        })
        .collect::<Result<_>>()?;
    let n = runs.len() as f64;
    let max_centroid_bias = ctx
        .analytic
        .angles
        .iter()
        .enumerate()
        .map(|(i, truth)| {
            let mean = runs.iter().map(|r| r.angles[i].fit.center).sum::<f64>() / n;
            (mean - truth.fit.center).abs()
        })
        .fold(0.0, f64::max);
    let truth = ctx.analytic.line.slope;
    let pulls: Vec<f64> = runs
        .iter()
        .map(|r| (r.line.slope - truth) / r.line.sigma_slope)
        .collect();
    let pull_mean = pulls.iter().sum::<f64>() / n;
    let pull_sd = (pulls.iter().map(|p| (p - pull_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(MonteCarloSummary {
        max_centroid_bias,
        pull_mean,
        pull_sd,
    })
}

/// 7. Centroid bias and slope pull distribution over 100 seeds.
pub fn statistics(ctx: &Context) -> Result<CriterionResult> {
    let mc = monte_carlo(ctx, MONTE_CARLO_SEEDS)?;
    let ok = mc.max_centroid_bias < CENTROID_BIAS_LIMIT
        && mc.pull_mean.abs() < PULL_MEAN_LIMIT
        && in_band(mc.pull_sd, PULL_SD_BAND);
    Ok(CriterionResult::new(
        7,
        NAMES[6],
        ok,
        format!(
            "{MONTE_CARLO_SEEDS} seeds: max centroid bias = {:.4} px (< {CENTROID_BIAS_LIMIT}); slope pull mean = {:+.3} (|.| < {PULL_MEAN_LIMIT}), sd = {:.3} (in [{}, {}])",
            mc.max_centroid_bias, mc.pull_mean, mc.pull_sd, PULL_SD_BAND.0, PULL_SD_BAND.1
        ),
    ))
}

/// 8. Synthetic outputs byte-identical across repeated runs and thread counts.
pub fn determinism(ctx: &Context) -> Result<CriterionResult> {
    let mut renders = Vec::new();
    for threads in [1usize, 2, 4] {
        let files = with_threads(threads, || -> Result<Vec<(String, String)>> {
            let setup = Setup::new(&ctx.cfg)?;
            let report = run_sweep_with(&setup, &ctx.cfg, Mode::Synthetic)?;
            Ok(render_files(&report, &ctx.cfg))
        })??;
        renders.push(files);
    }
    let identical = renders.windows(2).all(|w| w[0] == w[1]);
    let n_files = renders[0].len();
    let bytes: usize = renders[0].iter().map(|(_, t)| t.len()).sum();
    Ok(CriterionResult::new(
        8,
        NAMES[7],
        identical,
        format!(
            "3 synthetic runs at 1, 2 and 4 threads, seed {}: {n_files} files, {bytes} bytes, identical = {identical}",
            ctx.cfg.acquisition.seed
        ),
    ))
}

/// Evaluate every criterion in order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<CriterionResult>> {
    let ctx = Context::new(cfg)?;
    Ok(vec![
        slope(&ctx)?,
        intercept(&ctx),
        signal_width(&ctx)?,
        scaling(&ctx)?,
        oracle(&ctx)?,
        flatness(&ctx),
        statistics(&ctx)?,
        determinism(&ctx)?,
    ])
}

/// Criteria that can be judged from a single sweep report; the rest are marked
/// as not evaluated.
pub fn from_report(report: &SweepReport) -> Vec<CriterionResult> {
    let needs_check = "needs the full acceptance run (`check`)";
    let mut out = Vec::new();
    if report.mode == Mode::Analytic {
        let line = &report.line;
        out.push(CriterionResult::new(
            1,
            NAMES[0],
            in_band(line.slope, SLOPE_BAND),
            format!(
                "slope = {:.4} ± {:.4} (band [{}, {}])",
                line.slope, line.sigma_slope, SLOPE_BAND.0, SLOPE_BAND.1
            ),
        ));
        let dev = (line.intercept - INTERCEPT_TARGET_DEG).abs();
        out.push(CriterionResult::new(
            2,
            NAMES[1],
            dev <= INTERCEPT_TOLERANCE_DEG,
            format!("intercept = {:.6} ± {:.6} deg", line.intercept, line.sigma_intercept),
        ));
    } else {
        out.push(CriterionResult::skipped(1, NAMES[0], "evaluated in analytic mode"));
        out.push(CriterionResult::skipped(2, NAMES[1], "evaluated in analytic mode"));
    }
    out.push(CriterionResult::skipped(3, NAMES[2], needs_check));
    out.push(CriterionResult::skipped(4, NAMES[3], needs_check));
    if report.mode == Mode::Oracle {
        out.push(oracle_result(report, None));
    } else {
        out.push(CriterionResult::skipped(5, NAMES[4], "evaluated in oracle mode"));
    }
    out.push(flatness_result(report));
    out.push(CriterionResult::skipped(7, NAMES[6], needs_check));
    out.push(CriterionResult::skipped(8, NAMES[7], needs_check));
    out
}
