//! Experiment configuration: a TOML file of `[section]` tables with SI-suffixed keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biphoton::{FilterShape, FilterSpec};
use crate::crystal::dispersion::DispersionSet;
use crate::crystal::{omega_from_wavelength, CrystalSpec, PhaseMatchingType, Polarization, PolarizationAssignment};
use crate::detection::{AccidentalModel, CoincidenceSettings, IdlerChannelSpec, SpadArraySpec};
use crate::error::{Error, Result};
use crate::propagation::OpticalTrain;
use crate::quadrature::Tolerance;

/// Pump angles of the nine-point sweep, degrees.
pub const DEFAULT_SWEEP_DEG: [f64; 9] = [-0.092, -0.069, -0.046, -0.023, 0.0, 0.023, 0.046, 0.069, 0.092];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrystalSection {
    pub length_m: f64,
    pub cut_angle_deg: f64,
    pub axis_azimuth_deg: f64,
    /// Built-in set name or path to a coefficient file.
    pub dispersion: String,
    pub signal_polarization: Polarization,
    pub idler_polarization: Polarization,
    /// Trim the cut angle so the α_p = 0 signal leaves at `target_signal_angle_deg`.
    pub calibrate: bool,
    pub target_signal_angle_deg: f64,
    pub calibration_window_deg: f64,
}

impl Default for CrystalSection {
    fn default() -> Self {
        Self {
            length_m: 1e-3,
            cut_angle_deg: 42.0,
            axis_azimuth_deg: 90.0,
            dispersion: "bbo-eimerl-1987".into(),
            signal_polarization: Polarization::Ordinary,
            idler_polarization: Polarization::Extraordinary,
            calibrate: true,
            target_signal_angle_deg: 3.0,
            calibration_window_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamSection {
    pub pump_wavelength_m: f64,
    pub waist_m: f64,
}

impl Default for BeamSection {
    fn default() -> Self {
        Self {
            pump_wavelength_m: 404e-9,
            waist_m: 100e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub center_wavelength_m: f64,
    pub fwhm_wavelength_m: f64,
    pub shape: FilterShape,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            center_wavelength_m: 808e-9,
            fwhm_wavelength_m: 10e-9,
            shape: FilterShape::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub n_pixels: usize,
    pub pitch_m: f64,
    pub diameter_m: f64,
    pub dead_pixels: Vec<usize>,
    pub dark_rate_hz: f64,
    /// Pixel coordinate where the α_p = 0 analytic centroid is placed.
    pub reference_pixel: f64,
}

impl Default for ArraySection {
    fn default() -> Self {
        let a = SpadArraySpec::default();
        Self {
            n_pixels: a.n_pixels,
            pitch_m: a.pitch,
            diameter_m: a.diameter,
            dead_pixels: a.dead_pixels,
            dark_rate_hz: a.dark_rate,
            reference_pixel: 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdlerSection {
    pub angular_acceptance_sigma_rad: f64,
    pub coupling_efficiency: f64,
}

impl Default for IdlerSection {
    fn default() -> Self {
        let i = IdlerChannelSpec::default();
        Self {
            angular_acceptance_sigma_rad: i.angular_acceptance_sigma,
            coupling_efficiency: i.coupling_efficiency,
        }
    }
}

/// Lens train in front of the array. The defaults put the array where the
/// mapping factor is 1.3 times the focal-plane one, as in the laboratory setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub focal_m: f64,
    pub p_m: f64,
    pub q_m: f64,
    pub wavelength_m: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            focal_m: 0.3,
            p_m: 0.2,
            q_m: 0.57,
            wavelength_m: 808e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alpha_p_deg: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alpha_p_deg: DEFAULT_SWEEP_DEG.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSection {
    pub duration_s: f64,
    pub pair_rate_hz: f64,
    pub seed: u64,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            pair_rate_hz: 2000.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoincidenceSection {
    pub window_s: f64,
    pub accidental_model: AccidentalModel,
    pub spad_singles_hz: f64,
    pub spcm_singles_hz: f64,
}

impl Default for CoincidenceSection {
    fn default() -> Self {
        let c = CoincidenceSettings::default();
        Self {
            window_s: c.window,
            accidental_model: c.accidental_model,
            spad_singles_hz: c.spad_singles_rate,
            spcm_singles_hz: c.spcm_singles_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsSection {
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
    pub max_subdivisions: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        let t = Tolerance::default();
        Self {
            relative_tolerance: t.relative,
            absolute_tolerance: t.absolute,
            max_subdivisions: t.max_subdivisions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub crystal: CrystalSection,
    pub beam: BeamSection,
    pub filter: FilterSection,
    pub array: ArraySection,
    pub idler: IdlerSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub acquisition: AcquisitionSection,
    pub coincidence: CoincidenceSection,
    pub numerics: NumericsSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let sweep = &self.sweep.alpha_p_deg;
        if sweep.is_empty() {
            return Err(Error::Config("sweep.alpha_p_deg must not be empty".into()));
        }
        if sweep.iter().any(|a| !a.is_finite()) || sweep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "sweep.alpha_p_deg must be finite and strictly increasing".into(),
            ));
        }
        if self.crystal.signal_polarization == self.crystal.idler_polarization {
            return Err(Error::Config(
                "type-II needs orthogonal signal and idler polarizations".into(),
            ));
        }
        if !(self.beam.waist_m > 0.0 && self.beam.pump_wavelength_m > 0.0) {
            return Err(Error::Config("beam waist and pump wavelength must be > 0".into()));
        }
        if !(self.filter.center_wavelength_m > 0.0 && self.filter.fwhm_wavelength_m > 0.0) {
            return Err(Error::Config("filter centre and width must be > 0".into()));
        }
        if !(self.acquisition.duration_s > 0.0 && self.acquisition.pair_rate_hz >= 0.0) {
            return Err(Error::Config(
                "acquisition duration must be > 0 and pair rate >= 0".into(),
            ));
        }
        if !(self.crystal.calibration_window_deg > 0.0) {
            return Err(Error::Config("calibration window must be > 0".into()));
        }
        if !(self.numerics.relative_tolerance > 0.0 && self.numerics.absolute_tolerance >= 0.0) {
            return Err(Error::Config("quadrature tolerances must be positive".into()));
        }
        self.crystal_spec()?.validate()?;
        self.array_spec().validate()?;
        self.idler_spec().validate()?;
        self.coincidence_settings().validate()?;
        self.optical_train().validate()?;
        Ok(())
    }

    /// Crystal as configured, before any calibration.
    pub fn crystal_spec(&self) -> Result<CrystalSpec> {
        let c = &self.crystal;
        Ok(CrystalSpec {
            length: c.length_m,
            cut_angle: c.cut_angle_deg.to_radians(),
            axis_azimuth: c.axis_azimuth_deg.to_radians(),
            dispersion: DispersionSet::resolve(&c.dispersion)?,
            phase_matching: PhaseMatchingType::TypeII,
            assignment: PolarizationAssignment {
                signal: c.signal_polarization,
                idler: c.idler_polarization,
            },
        })
    }

    pub fn omega_p(&self) -> f64 {
        omega_from_wavelength(self.beam.pump_wavelength_m)
    }

    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec::from_wavelengths(
            self.filter.center_wavelength_m,
            self.filter.fwhm_wavelength_m,
            self.filter.shape,
        )
    }

    pub fn array_spec(&self) -> SpadArraySpec {
        let a = &self.array;
        SpadArraySpec {
            n_pixels: a.n_pixels,
            pitch: a.pitch_m,
            diameter: a.diameter_m,
            dead_pixels: a.dead_pixels.clone(),
            dark_rate: a.dark_rate_hz,
        }
    }

    pub fn idler_spec(&self) -> IdlerChannelSpec {
        IdlerChannelSpec {
            angular_acceptance_sigma: self.idler.angular_acceptance_sigma_rad,
            coupling_efficiency: self.idler.coupling_efficiency,
        }
    }

    pub fn coincidence_settings(&self) -> CoincidenceSettings {
        let c = &self.coincidence;
        CoincidenceSettings {
            window: c.window_s,
            accidental_model: c.accidental_model,
            spad_singles_rate: c.spad_singles_hz,
            spcm_singles_rate: c.spcm_singles_hz,
        }
    }

    pub fn optical_train(&self) -> OpticalTrain {
        let t = &self.train;
        OpticalTrain {
            f: t.focal_m,
            p: t.p_m,
            q: t.q_m,
            wavelength: t.wavelength_m,
        }
    }

    /// Same lens with the crystal and array in the focal planes.
    pub fn focal_plane_train(&self) -> OpticalTrain {
        OpticalTrain::focal_plane(self.train.focal_m, self.train.wavelength_m)
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            relative: self.numerics.relative_tolerance,
            absolute: self.numerics.absolute_tolerance,
            max_subdivisions: self.numerics.max_subdivisions,
        }
    }
}
