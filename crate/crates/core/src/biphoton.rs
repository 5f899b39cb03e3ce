//! Biphoton probability amplitude: exact phase-matching form and its Gaussian approximation.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::crystal::{
    CrystalSpec, ExpansionCoefficients, Frequencies, PhaseMatchedPair, TransverseWavevector, SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};

/// sinc x ≈ exp(−x²/5).
pub const SINC_GAUSSIAN_RATE: f64 = 0.2;

/// Width of the ω_i window (in filter FWHM) inside which amplitudes may be evaluated.
pub const FILTER_SUPPORT_FWHM: f64 = 5.0;

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Pump direction, waist and the phase-matched expansion point for that direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamGeometry {
    pub pump: TransverseWavevector,
    /// Amplitude 1/e half-width entering as exp(−(w_p²/2)·Δκ²), metres.
    pub waist: f64,
    pub omega_p: f64,
    pub signal0: TransverseWavevector,
    pub idler0: TransverseWavevector,
}

impl BeamGeometry {
    /// Solve phase matching for a pump tilted by `alpha_p_deg` (external, degrees).
    pub fn for_pump_angle(crystal: &CrystalSpec, alpha_p_deg: f64, waist: f64, omega_p: f64) -> Result<Self> {
        if !(waist > 0.0) {
            return Err(Error::InvalidInput(format!("pump waist must be > 0, got {waist}")));
        }
        let pump = TransverseWavevector::from_external_angle(alpha_p_deg.to_radians(), omega_p);
        let PhaseMatchedPair { signal, idler } = crystal.solve_phase_matching(pump, omega_p)?;
        Ok(Self {
            pump,
            waist,
            omega_p,
            signal0: signal,
            idler0: idler,
        })
    }

    pub fn pair(&self) -> PhaseMatchedPair {
        PhaseMatchedPair {
            signal: self.signal0,
            idler: self.idler0,
        }
    }

    /// exp(−(w_p²/2)·|κ_s + κ_i − κ_p|²).
    pub fn pump_envelope(&self, ks: TransverseWavevector, ki: TransverseWavevector) -> f64 {
        let d = ks + ki - self.pump;
        (-0.5 * self.waist * self.waist * d.norm_squared()).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterShape {
    #[default]
    Gaussian,
    Tophat,
}

/// Bandpass filter on the idler arm, in angular frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub center: f64,
    /// FWHM of the intensity transmission |Λ|², rad/s.
    pub fwhm: f64,
    pub shape: FilterShape,
}

impl FilterSpec {
    /// Filter specified by vacuum centre wavelength and wavelength FWHM (metres).
    pub fn from_wavelengths(center: f64, fwhm: f64, shape: FilterShape) -> Self {
        Self {
            center: 2.0 * PI * SPEED_OF_LIGHT / center,
            fwhm: 2.0 * PI * SPEED_OF_LIGHT * fwhm / (center * center),
            shape,
        }
    }

    pub fn amplitude(&self, omega: f64) -> f64 {
        let d = omega - self.center;
        match self.shape {
            FilterShape::Gaussian => (-2.0 * LN_2 * d * d / (self.fwhm * self.fwhm)).exp(),
            FilterShape::Tophat => {
                if d.abs() <= 0.5 * self.fwhm {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn check_support(&self, omega: f64) -> Result<()> {
        if (omega - self.center).abs() > FILTER_SUPPORT_FWHM * self.fwhm {
            return Err(Error::InvalidInput(format!(
                "idler frequency {omega:.6e} rad/s outside ±{FILTER_SUPPORT_FWHM} FWHM of the filter"
            )));
        }
        Ok(())
    }
}

pub fn filter_amplitude(omega: f64, filter: &FilterSpec) -> f64 {
    filter.amplitude(omega)
}

/// Λ(ω_i)·exp(−(w_p²/2)|κ_s+κ_i−κ_p|²)·sinc(L·Δk_z/2), with ω_s = ω_p − ω_i.
///
/// The normalization constant is left out; only ratios of |Ψ|² are used.
pub fn amplitude_exact(
    ks: TransverseWavevector,
    ki: TransverseWavevector,
    omega_i: f64,
    geom: &BeamGeometry,
    filter: &FilterSpec,
    crystal: &CrystalSpec,
) -> Result<f64> {
    filter.check_support(omega_i)?;
    let dk = crystal.delta_kz(ks, ki, Frequencies::with_idler(geom.omega_p, omega_i))?;
    Ok(filter.amplitude(omega_i) * geom.pump_envelope(ks, ki) * sinc(0.5 * crystal.length * dk))
}

/// Argument of the linearized mismatch:
/// `d_s·(κ_s−κ_s0) + d_i·(κ_i−κ_i0) + β_s(ω_i−ω_p/2) + β_i(ω_p/2−ω_i)`.
///
/// The β pairing follows the first-order expansion as it is usually written
/// (β_s against the idler detuning); only β_s − β_i reaches any observable.
pub fn linear_mismatch(
    ks: TransverseWavevector,
    ki: TransverseWavevector,
    omega_i: f64,
    geom: &BeamGeometry,
    coeffs: &ExpansionCoefficients,
) -> f64 {
    let a = ks - geom.signal0;
    let b = ki - geom.idler0;
    let nu = omega_i - 0.5 * geom.omega_p;
    coeffs.d_signal[0] * a.kx
        + coeffs.d_signal[1] * a.ky
        + coeffs.d_idler[0] * b.kx
        + coeffs.d_idler[1] * b.ky
        + coeffs.beta_signal * nu
        - coeffs.beta_idler * nu
}

/// Gaussian-approximated amplitude: sinc(L·X/2) replaced by exp(−(L·X/2)²/5).
pub fn amplitude_gaussian(
    ks: TransverseWavevector,
    ki: TransverseWavevector,
    omega_i: f64,
    geom: &BeamGeometry,
    filter: &FilterSpec,
    crystal: &CrystalSpec,
    coeffs: &ExpansionCoefficients,
) -> Result<f64> {
    filter.check_support(omega_i)?;
    let x = 0.5 * crystal.length * linear_mismatch(ks, ki, omega_i, geom, coeffs);
    Ok(filter.amplitude(omega_i) * geom.pump_envelope(ks, ki) * (-SINC_GAUSSIAN_RATE * x * x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::omega_from_wavelength;
    use approx::assert_relative_eq;

    fn setup() -> (CrystalSpec, BeamGeometry, FilterSpec, ExpansionCoefficients) {
        let crystal = CrystalSpec::default();
        let wp = omega_from_wavelength(404e-9);
        let geom = BeamGeometry::for_pump_angle(&crystal, 0.0, 100e-6, wp).unwrap();
        let filter = FilterSpec::from_wavelengths(808e-9, 10e-9, FilterShape::Gaussian);
        let coeffs = crystal.expansion_coefficients(&geom.pair(), wp).unwrap();
        (crystal, geom, filter, coeffs)
    }

    #[test]
    fn filter_peak_and_half_power_points() {
        let f = FilterSpec::from_wavelengths(808e-9, 10e-9, FilterShape::Gaussian);
        assert_eq!(f.amplitude(f.center), 1.0);
        for sign in [-1.0, 1.0] {
            let a = f.amplitude(f.center + sign * 0.5 * f.fwhm);
            assert_relative_eq!(a * a, 0.5, max_relative = 1e-14);
        }
    }

    #[test]
    fn filter_width_in_frequency() {
        // 2πc·Δλ/λ² for 10 nm at 808 nm, worked by hand: 2π·4.5914 THz.
        let f = FilterSpec::from_wavelengths(808e-9, 10e-9, FilterShape::Gaussian);
        let thz = f.fwhm / (2.0 * PI) / 1e12;
        assert!((thz - 4.59).abs() / 4.59 < 0.01, "{thz}");
    }

    #[test]
    fn tophat_filter_edges() {
        let f = FilterSpec::from_wavelengths(808e-9, 10e-9, FilterShape::Tophat);
        assert_eq!(f.amplitude(f.center + 0.49 * f.fwhm), 1.0);
        assert_eq!(f.amplitude(f.center - 0.51 * f.fwhm), 0.0);
    }

    #[test]
    fn amplitudes_are_one_at_the_expansion_point() {
        let (crystal, geom, filter, coeffs) = setup();
        let wi = 0.5 * geom.omega_p;
        let lam = filter.amplitude(wi);
        let exact = amplitude_exact(geom.signal0, geom.idler0, wi, &geom, &filter, &crystal).unwrap();
        let gauss = amplitude_gaussian(geom.signal0, geom.idler0, wi, &geom, &filter, &crystal, &coeffs).unwrap();
        assert_relative_eq!(exact, lam, max_relative = 1e-12);
        assert_relative_eq!(gauss, lam, max_relative = 1e-12);
        assert_relative_eq!(lam, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn anti_correlated_offset_keeps_envelope_but_loses_phase_matching() {
        let (crystal, geom, filter, _) = setup();
        let delta = TransverseWavevector::along_x(2e4);
        let ks = geom.signal0 + delta;
        let ki = geom.idler0 - delta;
        assert_relative_eq!(geom.pump_envelope(ks, ki), 1.0, max_relative = 1e-12);
        let a = amplitude_exact(ks, ki, 0.5 * geom.omega_p, &geom, &filter, &crystal).unwrap();
        assert!(a < 1.0 && a > 0.0);
    }

    #[test]
    fn sinc_gaussian_ratio_within_ten_percent_on_unit_interval() {
        // Independent scan of sinc x against exp(−x²/5) over |x| ≤ 1.
        for n in 0..=200 {
            let x = -1.0 + n as f64 / 100.0;
            let r = (-SINC_GAUSSIAN_RATE * x * x).exp() / sinc(x);
            assert!((0.9..=1.1).contains(&r), "x={x} r={r}");
        }
    }

    #[test]
    fn gaussian_form_tracks_exact_where_sinc_argument_is_small() {
        let (crystal, geom, filter, coeffs) = setup();
        let wi = 0.5 * geom.omega_p;
        for n in 1..=20 {
            let ks = geom.signal0 + TransverseWavevector::along_x(n as f64 * 1.5e3);
            let exact = amplitude_exact(ks, geom.idler0, wi, &geom, &filter, &crystal).unwrap();
            let gauss = amplitude_gaussian(ks, geom.idler0, wi, &geom, &filter, &crystal, &coeffs).unwrap();
            let dk = crystal
                .delta_kz(ks, geom.idler0, Frequencies::degenerate(geom.omega_p))
                .unwrap();
            if (0.5 * crystal.length * dk).abs() <= 1.0 {
                let r = gauss / exact;
                assert!((0.9..=1.1).contains(&r), "n={n} r={r}");
            }
        }
    }

    #[test]
    fn gaussian_tail_stays_positive_at_the_first_sinc_zero() {
        assert!(sinc(PI).abs() < 1e-15);
        assert!((-SINC_GAUSSIAN_RATE * PI * PI).exp() > 0.0);
    }

    #[test]
    fn detuning_response_symmetric_under_beta_swap() {
        let (_, geom, _, coeffs) = setup();
        let swapped = ExpansionCoefficients {
            beta_signal: coeffs.beta_idler,
            beta_idler: coeffs.beta_signal,
            ..coeffs
        };
        let nu = 2.0 * PI * 1.3e12;
        let a = linear_mismatch(geom.signal0, geom.idler0, 0.5 * geom.omega_p + nu, &geom, &coeffs);
        let b = linear_mismatch(geom.signal0, geom.idler0, 0.5 * geom.omega_p - nu, &geom, &swapped);
        assert_relative_eq!(a, b, max_relative = 1e-14);
    }

    #[test]
    fn envelope_depends_only_on_the_transverse_sum() {
        let (_, geom, _, _) = setup();
        let shift = TransverseWavevector::along_x(7.5e3);
        let e1 = geom.pump_envelope(geom.signal0 + shift, geom.idler0);
        let e2 = geom.pump_envelope(geom.signal0, geom.idler0 + shift);
        assert_eq!(e1, e2);
    }

    #[test]
    fn out_of_support_frequency_is_rejected() {
        let (crystal, geom, filter, _) = setup();
        let far = filter.center + 6.0 * filter.fwhm;
        assert!(amplitude_exact(geom.signal0, geom.idler0, far, &geom, &filter, &crystal).is_err());
    }
}
