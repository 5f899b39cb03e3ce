//! End-to-end sweeps through the library API.

use spdc_spatial::analysis::{fit_gaussian, PixelHistogram};
use spdc_spatial::config::ExperimentConfig;
use spdc_spatial::detection::sample_histogram;
use spdc_spatial::harness::{self, Mode, Setup};
use spdc_spatial::Error;

#[test]
fn analytic_sweep_recovers_the_angle_law() {
    let cfg = ExperimentConfig::default();
    let report = harness::run_sweep(&cfg, Mode::Analytic).unwrap();
    assert_eq!(report.angles.len(), 9);
    assert!(
        report.line.slope > 1.9 && report.line.slope < 2.1,
        "{}",
        report.line.slope
    );
    assert!((report.line.intercept - 3.0).abs() < 0.01, "{}", report.line.intercept);
    assert!(report.flatness < 0.05);
    for pair in report.angles.windows(2) {
        assert!(pair[1].alpha_s0_deg > pair[0].alpha_s0_deg);
    }
    // Placement reference: the α_p = 0 profile peaks at the reference pixel.
    let centre = report.angles.iter().find(|a| a.alpha_p_deg == 0.0).unwrap().fit.center;
    assert!((centre - cfg.array.reference_pixel).abs() < 0.05, "{centre}");
}

#[test]
fn synthetic_sweep_repeats_exactly() {
    let cfg = ExperimentConfig::default();
    let a = harness::run_sweep(&cfg, Mode::Synthetic).unwrap();
    let b = harness::run_sweep(&cfg, Mode::Synthetic).unwrap();
    assert_eq!(harness::render(&a, &cfg), harness::render(&b, &cfg));
    let mut other = cfg.clone();
    other.acquisition.seed = 43;
    let c = harness::run_sweep(&other, Mode::Synthetic).unwrap();
    assert_ne!(a.angles[0].histogram, c.angles[0].histogram);
}

#[test]
fn waist_change_changes_provenance_hash() {
    let cfg = ExperimentConfig::default();
    let mut other = cfg.clone();
    other.beam.waist_m = 150e-6;
    assert_ne!(cfg.hash(), other.hash());
    assert_eq!(cfg.hash(), ExperimentConfig::default().hash());
}

#[test]
fn empty_sweep_is_rejected_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "[sweep]\nalpha_p_deg = []\n").unwrap();
    let err = ExperimentConfig::load(&path).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn default_run_writes_nine_profiles_and_three_summaries() {
    let cfg = ExperimentConfig::default();
    let report = harness::run_sweep(&cfg, Mode::Synthetic).unwrap();
    let dir = tempfile::tempdir().unwrap();
    harness::emit(&report, &cfg, dir.path()).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 12);
    assert_eq!(names.iter().filter(|n| n.starts_with("profile_")).count(), 9);
    for f in [
        harness::SUMMARY_FILE,
        harness::FIT_REPORT_FILE,
        harness::ACCEPTANCE_FILE,
    ] {
        assert!(names.iter().any(|n| n == f), "{f}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(harness::FIT_REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(json["config_hash"], cfg.hash());
}

#[test]
fn calibration_is_a_fixed_point() {
    let cfg = ExperimentConfig::default();
    let once = harness::calibrate(&cfg).unwrap();
    let mut again = cfg.clone();
    again.crystal.cut_angle_deg = once.cut_angle.to_degrees();
    let twice = harness::calibrate(&again).unwrap();
    let wp = cfg.omega_p();
    let a = once.signal_angle_deg(0.0, wp).unwrap();
    let b = twice.signal_angle_deg(0.0, wp).unwrap();
    assert!((a - b).abs() < 1e-5);
}

#[test]
fn calibration_restores_a_perturbed_cut() {
    let cfg = ExperimentConfig::default();
    let calibrated = harness::calibrate(&cfg).unwrap();
    let mut perturbed = cfg.clone();
    perturbed.crystal.cut_angle_deg = calibrated.cut_angle.to_degrees() + 0.5;
    let wp = cfg.omega_p();
    let before = perturbed.crystal_spec().unwrap().signal_angle_deg(0.0, wp).unwrap();
    assert!((before - 3.0).abs() > 0.1, "{before}");
    let after = harness::calibrate(&perturbed)
        .unwrap()
        .signal_angle_deg(0.0, wp)
        .unwrap();
    assert!((after - 3.0).abs() < 1e-5, "{after}");
}

#[test]
fn calibration_follows_the_target_override() {
    let mut cfg = ExperimentConfig::default();
    cfg.crystal.target_signal_angle_deg = 2.5;
    let spec = harness::calibrate(&cfg).unwrap();
    let got = spec.signal_angle_deg(0.0, cfg.omega_p()).unwrap();
    assert!((got - 2.5).abs() < 1e-5, "{got}");
}

fn default_histogram(cfg: &ExperimentConfig) -> (Setup, PixelHistogram) {
    let setup = Setup::new(cfg).unwrap();
    let model = setup.model(0.0).unwrap();
    let profile = setup
        .profile(&model, spdc_spatial::detection::Method::Analytic)
        .unwrap();
    let expected = setup.expected(&profile, cfg).unwrap();
    let seed = harness::derive_seed(cfg.acquisition.seed, 4);
    let h = sample_histogram(&expected, seed, &setup.array, 0.0, cfg.acquisition.duration_s).unwrap();
    (setup, h)
}

#[test]
fn seeded_default_histogram_has_table_width() {
    let cfg = ExperimentConfig::default();
    let (_, h) = default_histogram(&cfg);
    let fit = fit_gaussian(&h).unwrap();
    assert!((fit.diameter() - 19.0).abs() < 2.0, "{}", fit.diameter());
    assert!(h.counts.iter().max().unwrap() > &100);
}

#[test]
fn masking_pixel_nineteen_barely_moves_the_centre() {
    let mut cfg = ExperimentConfig::default();
    cfg.array.dead_pixels = vec![];
    let (_, h) = default_histogram(&cfg);
    let open = fit_gaussian(&h).unwrap();
    let mut masked = h.clone();
    masked.mask[19] = false;
    let fit = fit_gaussian(&masked).unwrap();
    assert!(
        (fit.center - open.center).abs() < 0.1,
        "{} vs {}",
        fit.center,
        open.center
    );
}

#[test]
fn histogram_csv_round_trip() {
    let cfg = ExperimentConfig::default();
    let (_, h) = default_histogram(&cfg);
    let back = PixelHistogram::from_csv(&h.to_csv()).unwrap();
    assert_eq!(back, h);
}

#[test]
fn sweep_is_identical_across_thread_counts() {
    let cfg = ExperimentConfig::default();
    let runs: Vec<_> = [1, 2, 4]
        .into_iter()
        .map(|n| {
            let report = harness::with_threads(n, || harness::run_sweep(&cfg, Mode::Synthetic))
                .unwrap()
                .unwrap();
            harness::render(&report, &cfg)
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}
