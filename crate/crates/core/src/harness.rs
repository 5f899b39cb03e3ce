//! Pump-angle sweep orchestration, report assembly and output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    angle_from_center, correlation, fit_gaussian, fit_gaussian_values, fit_linear, GaussianFit, LinearFit,
    PixelCalibration, PixelHistogram,
};
use crate::biphoton::{BeamGeometry, FilterSpec};
use crate::config::ExperimentConfig;
use crate::crystal::{CrystalSpec, TransverseWavevector};
use crate::detection::{
    expected_counts, normalize_live, sample_histogram, CoincidenceModel, CoincidenceSettings, IdlerAcceptance,
    IdlerChannelSpec, Method, SignalMarginal, SpadArraySpec,
};
use crate::error::{Error, Result};
use crate::propagation::{map_width, OpticalTrain};
use crate::quadrature::Tolerance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Closed-form profiles, fitted without noise.
    Analytic,
    /// Closed-form profiles, Poisson-sampled before fitting.
    Synthetic,
    /// Exact-amplitude quadrature profiles, compared against the closed form.
    Oracle,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "synthetic" => Ok(Self::Synthetic),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::InvalidInput(format!(
                "unknown mode '{other}' (analytic, synthetic, oracle)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Analytic => "analytic",
            Self::Synthetic => "synthetic",
            Self::Oracle => "oracle",
        })
    }
}

/// Trim the configured crystal so the α_p = 0 signal leaves at the target angle.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<CrystalSpec> {
    cfg.crystal_spec()?.calibrate_cut_angle(
        cfg.omega_p(),
        cfg.crystal.target_signal_angle_deg,
        cfg.crystal.calibration_window_deg.to_radians(),
    )
}

/// Resolved physics and array placement shared by every angle of a sweep.
#[derive(Debug, Clone)]
pub struct Setup {
    pub crystal: CrystalSpec,
    pub omega_p: f64,
    pub waist: f64,
    pub filter: FilterSpec,
    pub array: SpadArraySpec,
    pub idler_spec: IdlerChannelSpec,
    pub idler: IdlerAcceptance,
    pub settings: CoincidenceSettings,
    pub train: OpticalTrain,
    pub calibration: PixelCalibration,
    /// Pixel acceptance in k_sx, rad/m.
    pub delta_k: f64,
    pub tolerance: Tolerance,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let crystal = if cfg.crystal.calibrate {
            calibrate(cfg)?
        } else {
            cfg.crystal_spec()?
        };
        Self::with_crystal(cfg, crystal, cfg.optical_train())
    }

    /// Build around a given crystal and train. The α_p = 0 analytic centroid is
    /// placed at the reference pixel.
    pub fn with_crystal(cfg: &ExperimentConfig, crystal: CrystalSpec, train: OpticalTrain) -> Result<Self> {
        let omega_p = cfg.omega_p();
        let waist = cfg.beam.waist_m;
        let fiber: TransverseWavevector = BeamGeometry::for_pump_angle(&crystal, 0.0, waist, omega_p)?.idler0;
        let idler_spec = cfg.idler_spec();
        let idler = IdlerAcceptance::new(&idler_spec, fiber, 0.5 * omega_p);
        let scale = train.factor()?.abs();
        let array = cfg.array_spec();
        let mut setup = Self {
            crystal,
            omega_p,
            waist,
            filter: cfg.filter_spec(),
            array,
            idler_spec,
            idler,
            settings: cfg.coincidence_settings(),
            train,
            calibration: PixelCalibration::new(0.0, 0.0, 1.0, 1.0, train.wavelength),
            delta_k: cfg.array.diameter_m / scale,
            tolerance: cfg.tolerance(),
        };
        let k_ref = setup.model(0.0)?.signal_marginal()?.centroid;
        setup.calibration = PixelCalibration::new(
            cfg.array.reference_pixel,
            k_ref,
            setup.array.pitch,
            scale,
            train.wavelength,
        );
        Ok(setup)
    }

    /// Same crystal and placement reference, different lens train.
    pub fn with_train(&self, train: OpticalTrain) -> Result<Self> {
        let scale = train.factor()?.abs();
        let c = self.calibration;
        Ok(Self {
            train,
            delta_k: self.array.diameter / scale,
            calibration: PixelCalibration::new(c.pixel_ref, c.k_ref, self.array.pitch, scale, train.wavelength),
            ..self.clone()
        })
    }

    pub fn model(&self, alpha_p_deg: f64) -> Result<CoincidenceModel> {
        let geom = BeamGeometry::for_pump_angle(&self.crystal, alpha_p_deg, self.waist, self.omega_p)?;
        CoincidenceModel::new(&self.crystal, geom, self.filter, self.idler, self.tolerance)
    }

    /// Unnormalized coincidence probability for every pixel, in index order.
    pub fn profile(&self, model: &CoincidenceModel, method: Method) -> Result<Vec<f64>> {
        (0..self.array.n_pixels)
            .into_par_iter()
            .map(|i| model.probability(self.calibration.k_from_pixel(i as f64), self.delta_k, method))
            .collect()
    }

    /// Probability for a pixel window centred on the analytic centroid.
    pub fn peak_probability(&self, model: &CoincidenceModel) -> Result<f64> {
        model.probability_analytic(model.signal_marginal()?.centroid, self.delta_k)
    }

    pub fn expected(&self, profile: &[f64], cfg: &ExperimentConfig) -> Result<Vec<f64>> {
        expected_counts(
            &normalize_live(profile, &self.array),
            cfg.acquisition.pair_rate_hz,
            cfg.acquisition.duration_s,
            self.idler_spec.coupling_efficiency,
            &self.settings,
            &self.array,
        )
    }

    /// Detector-plane 1/e width (pixels) for a signal marginal through this train.
    pub fn detector_width_pixels(&self, marginal: &SignalMarginal) -> Result<f64> {
        Ok(map_width(marginal.width, &self.train)? / self.array.pitch)
    }
}

/// Seed for the `index`-th acquisition of a run seeded with `base`.
pub fn derive_seed(base: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index as u64);
    rng.random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub analytic_probability: Vec<f64>,
    pub correlation: f64,
    pub analytic_center: f64,
    /// |numeric − analytic| fitted centre, pixels.
    pub center_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleResult {
    pub alpha_p_deg: f64,
    pub seed: u64,
    /// Unnormalized pixel probabilities from the mode's method.
    pub probability: Vec<f64>,
    pub expected: Vec<f64>,
    pub histogram: Option<PixelHistogram>,
    pub fit: GaussianFit,
    pub alpha_s0_deg: f64,
    pub sigma_alpha_s0_deg: f64,
    pub peak_probability: f64,
    /// Centroid of the analytic signal marginal, rad/m.
    pub marginal_centroid: f64,
    /// Characteristic width w_s of the analytic signal marginal, metres.
    pub marginal_width: f64,
    pub oracle: Option<OracleComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub mode: Mode,
    pub config_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch at the end of the run; not written to files.
    #[serde(skip)]
    pub timestamp: u64,
    pub calibrated_cut_angle_deg: f64,
    pub pixel_delta_k: f64,
    pub reference_pixel: f64,
    pub reference_k: f64,
    pub angles: Vec<AngleResult>,
    pub line: LinearFit,
    /// max |P_peak(α_p) − P_peak(0)| / P_peak(0).
    pub flatness: f64,
    pub oracle_min_correlation: Option<f64>,
    pub oracle_max_center_difference: Option<f64>,
}

fn fit_values(values: &[f64], mask: &[bool], hist: Option<&PixelHistogram>) -> Result<GaussianFit> {
    match hist {
        Some(h) => fit_gaussian(h),
        None => fit_gaussian_values(values, mask),
    }
}

fn run_angle(setup: &Setup, cfg: &ExperimentConfig, mode: Mode, index: usize, alpha_p: f64) -> Result<AngleResult> {
    let model = setup.model(alpha_p)?;
    let marginal = model.signal_marginal()?;
    let mask = setup.array.live_mask();
    let seed = derive_seed(cfg.acquisition.seed, index);
    let analytic = setup.profile(&model, Method::Analytic)?;
    let probability = match mode {
        Mode::Oracle => setup.profile(&model, Method::Numeric)?,
        _ => analytic.clone(),
    };
    let expected = setup.expected(&probability, cfg)?;
    let histogram = match mode {
        Mode::Synthetic => Some(sample_histogram(
            &expected,
            seed,
            &setup.array,
            alpha_p,
            cfg.acquisition.duration_s,
        )?),
        _ => None,
    };
    let fit = fit_values(&expected, &mask, histogram.as_ref())?;
    let oracle = if mode == Mode::Oracle {
        let analytic_expected = setup.expected(&analytic, cfg)?;
        let analytic_fit = fit_gaussian_values(&analytic_expected, &mask)?;
        Some(OracleComparison {
            correlation: correlation(&probability, &analytic, &mask),
            analytic_center: analytic_fit.center,
            center_difference: (fit.center - analytic_fit.center).abs(),
            analytic_probability: analytic,
        })
    } else {
        None
    };
    Ok(AngleResult {
        alpha_p_deg: alpha_p,
        seed,
        probability,
        expected,
        histogram,
        alpha_s0_deg: angle_from_center(fit.center, &setup.calibration),
        sigma_alpha_s0_deg: fit.sigma_center * setup.calibration.degrees_per_pixel(fit.center),
        fit,
        peak_probability: setup.peak_probability(&model)?,
        marginal_centroid: marginal.centroid,
        marginal_width: marginal.width,
        oracle,
    })
}

/// Run every sweep angle with an already resolved setup.
pub fn run_sweep_with(setup: &Setup, cfg: &ExperimentConfig, mode: Mode) -> Result<SweepReport> {
    let angles: Vec<AngleResult> = cfg
        .sweep
        .alpha_p_deg
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            run_angle(setup, cfg, mode, i, a).map_err(|e| Error::SweepAngle {
                alpha_p_deg: a,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let points: Vec<(f64, f64, f64)> = angles
        .iter()
        .map(|r| (r.alpha_p_deg, r.alpha_s0_deg, r.sigma_alpha_s0_deg))
        .collect();
    let line = if points.len() >= 3 {
        fit_linear(&points)?
    } else {
        return Err(Error::Config("a sweep needs at least 3 angles for the line fit".into()));
    };
    let reference = angles
        .iter()
        .min_by(|a, b| a.alpha_p_deg.abs().total_cmp(&b.alpha_p_deg.abs()))
        .expect("sweep is nonempty")
        .peak_probability;
    let flatness = angles
        .iter()
        .map(|r| (r.peak_probability - reference).abs() / reference)
        .fold(0.0, f64::max);
    let oracle: Vec<&OracleComparison> = angles.iter().filter_map(|r| r.oracle.as_ref()).collect();
    let (oracle_min_correlation, oracle_max_center_difference) = if oracle.is_empty() {
        (None, None)
    } else {
        (
            Some(oracle.iter().map(|o| o.correlation).fold(f64::INFINITY, f64::min)),
            Some(oracle.iter().map(|o| o.center_difference).fold(0.0, f64::max)),
        )
    };
    Ok(SweepReport {
        mode,
        config_hash: cfg.hash(),
        seed: cfg.acquisition.seed,
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        calibrated_cut_angle_deg: setup.crystal.cut_angle.to_degrees(),
        pixel_delta_k: setup.delta_k,
        reference_pixel: setup.calibration.pixel_ref,
        reference_k: setup.calibration.k_ref,
        angles,
        line,
        flatness,
        oracle_min_correlation,
        oracle_max_center_difference,
    })
}

pub fn run_sweep(cfg: &ExperimentConfig, mode: Mode) -> Result<SweepReport> {
    run_sweep_with(&Setup::new(cfg)?, cfg, mode)
}

/// Run `f` on a dedicated pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub const SUMMARY_FILE: &str = "sweep_summary.csv";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const ACCEPTANCE_FILE: &str = "acceptance.txt";

pub fn profile_file_name(alpha_p_deg: f64) -> String {
    format!("profile_{alpha_p_deg:+.3}.csv")
}

fn summary_csv(report: &SweepReport) -> String {
    let mut out = String::from(
        "alpha_p,center_pix,alpha_s0,width_2w,sigma_center_pix,sigma_alpha_s0,sigma_width_2w,peak_probability\n",
    );
    for r in &report.angles {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.alpha_p_deg,
            r.fit.center,
            r.alpha_s0_deg,
            r.fit.diameter(),
            r.fit.sigma_center,
            r.sigma_alpha_s0_deg,
            r.fit.sigma_diameter(),
            r.peak_probability
        );
    }
    out
}

fn profile_csv(report: &SweepReport, r: &AngleResult, duration: f64, mask: &[bool]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# alpha_p_deg = {}", r.alpha_p_deg);
    let _ = writeln!(out, "# seed = {}", r.seed);
    let _ = writeln!(out, "# duration_s = {duration}");
    let _ = writeln!(out, "# mode = {}", report.mode);
    let mut header = String::from("pixel_index,live,probability,expected_counts");
    if r.histogram.is_some() {
        header.push_str(",counts");
    }
    if r.oracle.is_some() {
        header.push_str(",analytic_probability");
    }
    out.push_str(&header);
    out.push('\n');
    for (i, &live) in mask.iter().enumerate().take(r.probability.len()) {
        let _ = write!(out, "{i},{},{},{}", u8::from(live), r.probability[i], r.expected[i]);
        if let Some(h) = &r.histogram {
            let _ = write!(out, ",{}", h.counts[i]);
        }
        if let Some(o) = &r.oracle {
            let _ = write!(out, ",{}", o.analytic_probability[i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct FitReportAngle<'a> {
    alpha_p_deg: f64,
    seed: u64,
    fit: &'a GaussianFit,
    alpha_s0_deg: f64,
    sigma_alpha_s0_deg: f64,
    peak_probability: f64,
    marginal_centroid_rad_per_m: f64,
    marginal_width_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_center_difference_pix: Option<f64>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    mode: Mode,
    config_hash: &'a str,
    seed: u64,
    calibrated_cut_angle_deg: f64,
    pixel_delta_k_rad_per_m: f64,
    reference_pixel: f64,
    reference_k_rad_per_m: f64,
    line: &'a LinearFit,
    flatness: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_min_correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_max_center_difference_pix: Option<f64>,
    angles: Vec<FitReportAngle<'a>>,
}

fn fit_report_json(report: &SweepReport) -> String {
    let doc = FitReport {
        mode: report.mode,
        config_hash: &report.config_hash,
        seed: report.seed,
        calibrated_cut_angle_deg: report.calibrated_cut_angle_deg,
        pixel_delta_k_rad_per_m: report.pixel_delta_k,
        reference_pixel: report.reference_pixel,
        reference_k_rad_per_m: report.reference_k,
        line: &report.line,
        flatness: report.flatness,
        oracle_min_correlation: report.oracle_min_correlation,
        oracle_max_center_difference_pix: report.oracle_max_center_difference,
        angles: report
            .angles
            .iter()
            .map(|r| FitReportAngle {
                alpha_p_deg: r.alpha_p_deg,
                seed: r.seed,
                fit: &r.fit,
                alpha_s0_deg: r.alpha_s0_deg,
                sigma_alpha_s0_deg: r.sigma_alpha_s0_deg,
                peak_probability: r.peak_probability,
                marginal_centroid_rad_per_m: r.marginal_centroid,
                marginal_width_m: r.marginal_width,
                oracle_correlation: r.oracle.as_ref().map(|o| o.correlation),
                oracle_center_difference_pix: r.oracle.as_ref().map(|o| o.center_difference),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
    text.push('\n');
    text
}

/// File name and contents of every output of a sweep, in a fixed order.
pub fn render(report: &SweepReport, cfg: &ExperimentConfig) -> Vec<(String, String)> {
    let mask = cfg.array_spec().live_mask();
    let mut files: Vec<(String, String)> = report
        .angles
        .iter()
        .map(|r| {
            (
                profile_file_name(r.alpha_p_deg),
                profile_csv(report, r, cfg.acquisition.duration_s, &mask),
            )
        })
        .collect();
    files.push((SUMMARY_FILE.into(), summary_csv(report)));
    files.push((FIT_REPORT_FILE.into(), fit_report_json(report)));
    files.push((
        ACCEPTANCE_FILE.into(),
        crate::acceptance::render(&crate::acceptance::from_report(report)),
    ));
    files
}

/// Write rendered files into `dir`, creating it if needed.
pub fn write_files(files: &[(String, String)], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    files
        .iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

pub fn emit(report: &SweepReport, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    write_files(&render(report, cfg), dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing() {
        assert_eq!("oracle".parse::<Mode>().unwrap(), Mode::Oracle);
        assert!("fast".parse::<Mode>().is_err());
        assert_eq!(Mode::Synthetic.to_string(), "synthetic");
    }

    #[test]
    fn derived_seeds_differ_per_index_and_repeat() {
        assert_eq!(derive_seed(42, 3), derive_seed(42, 3));
        assert_ne!(derive_seed(42, 3), derive_seed(42, 4));
        assert_ne!(derive_seed(42, 3), derive_seed(43, 3));
    }

    #[test]
    fn profile_names_are_signed_and_fixed_width() {
        assert_eq!(profile_file_name(-0.092), "profile_-0.092.csv");
        assert_eq!(profile_file_name(0.0), "profile_+0.000.csv");
        assert_eq!(profile_file_name(0.023), "profile_+0.023.csv");
    }
}
