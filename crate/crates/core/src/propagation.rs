//! Thin-lens mapping from emission direction and angular width to detector-plane
//! position and width.
//!
//! Both maps share the factor λpq/(2πD) with 1/D = 1/f − 1/p − 1/q.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest |D| accepted before the configuration is treated as degenerate, metres.
pub const MAX_ABS_D: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalTrain {
    /// Focal length of the Fourier lens, metres.
    pub f: f64,
    /// Crystal to lens distance, metres.
    pub p: f64,
    /// Lens to detector distance, metres.
    pub q: f64,
    /// Wavelength used for the mapping, metres.
    pub wavelength: f64,
}

impl Default for OpticalTrain {
    fn default() -> Self {
        Self::focal_plane(0.3, 808e-9)
    }
}

impl OpticalTrain {
    /// Reference train with the crystal in the front focal plane. For p = f the
    /// factor pq/D equals −f for every q; q = f is used.
    pub fn focal_plane(f: f64, wavelength: f64) -> Self {
        Self {
            f,
            p: f,
            q: f,
            wavelength,
        }
    }

    /// Train at crystal distance `p` whose mapping factor is `scale` times the
    /// focal-plane one, solving pq/D = −scale·f for q.
    pub fn scaled(f: f64, wavelength: f64, p: f64, scale: f64) -> Result<Self> {
        let denom = p / f - 1.0;
        if denom.abs() < 1e-12 {
            return Err(Error::DegenerateTrain(
                "p = f fixes the mapping factor; choose p != f to rescale".into(),
            ));
        }
        let q = (p - scale * f) / denom;
        if !(q > 0.0) {
            return Err(Error::DegenerateTrain(format!(
                "scale {scale} at p = {p} m needs a non-positive q = {q} m"
            )));
        }
        let train = Self { f, p, q, wavelength };
        train.validate()?;
        Ok(train)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("f", self.f),
            ("p", self.p),
            ("q", self.q),
            ("wavelength", self.wavelength),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::DegenerateTrain(format!("{name} must be positive, got {v}")));
            }
        }
        self.d().map(|_| ())
    }

    /// D from 1/D = 1/f − 1/p − 1/q.
    pub fn d(&self) -> Result<f64> {
        let inv = 1.0 / self.f - 1.0 / self.p - 1.0 / self.q;
        let d = 1.0 / inv;
        if !d.is_finite() || d.abs() > MAX_ABS_D {
            return Err(Error::DegenerateTrain(format!(
                "|D| = {:.3e} m exceeds {MAX_ABS_D} m (f = {}, p = {}, q = {})",
                d.abs(),
                self.f,
                self.p,
                self.q
            )));
        }
        Ok(d)
    }

    /// λpq/(2πD), metres² per radian.
    pub fn factor(&self) -> Result<f64> {
        Ok(self.wavelength * self.p * self.q / (2.0 * PI * self.d()?))
    }
}

/// Detector position of the intensity maximum for a centroid wavevector `k_sx0`.
pub fn map_centroid(k_sx0: f64, train: &OpticalTrain) -> Result<f64> {
    Ok(k_sx0 * train.factor()?)
}

/// Detector-plane beam radius for a characteristic width `w_s`.
pub fn map_width(w_s: f64, train: &OpticalTrain) -> Result<f64> {
    if !(w_s > 0.0) {
        return Err(Error::InvalidInput(format!("width must be > 0, got {w_s}")));
    }
    Ok(train.factor()?.abs() / w_s)
}

/// Ratio of a measured detector width to the focal-plane one.
pub fn scaling_factor(measured_width: f64, focal_plane_width: f64) -> Result<f64> {
    if !(measured_width > 0.0 && focal_plane_width > 0.0) {
        return Err(Error::InvalidInput("widths must be > 0".into()));
    }
    Ok(measured_width / focal_plane_width)
}

/// Focal-plane equivalent of a slope measured through a train with the given
/// width scaling factor. Centroid offsets and widths scale together, so the
/// measured slope is divided by the factor.
pub fn correct_slope(slope_measured: f64, factor: f64) -> f64 {
    slope_measured / factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn focal_plane_factor_is_independent_of_q() {
        let a = OpticalTrain::focal_plane(0.3, 808e-9);
        let b = OpticalTrain { q: 0.45, ..a };
        assert_relative_eq!(a.factor().unwrap(), b.factor().unwrap(), max_relative = 1e-14);
        assert_relative_eq!(a.d().unwrap(), -0.3, max_relative = 1e-14);
    }

    #[test]
    fn on_axis_maps_to_origin() {
        assert_eq!(map_centroid(0.0, &OpticalTrain::default()).unwrap(), 0.0);
    }

    #[test]
    fn centroid_regression_value() {
        // 4.07e5 · 808e-9 · 0.09 / (2π · −0.3) = −0.0157 m
        let x0 = map_centroid(4.07e5, &OpticalTrain::default()).unwrap();
        assert_relative_eq!(x0, -0.015_701_717_389_628_5, max_relative = 1e-6);
    }

    #[test]
    fn doubling_width_halves_output() {
        let t = OpticalTrain::default();
        assert_relative_eq!(
            map_width(2.0e-3, &t).unwrap(),
            0.5 * map_width(1.0e-3, &t).unwrap(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn scaled_train_hits_requested_factor() {
        let t = OpticalTrain::scaled(0.3, 808e-9, 0.2, 1.3).unwrap();
        assert_relative_eq!(t.q, 0.57, max_relative = 1e-12);
        let f0 = OpticalTrain::focal_plane(0.3, 808e-9).factor().unwrap();
        assert_relative_eq!(t.factor().unwrap() / f0, 1.3, max_relative = 1e-12);
    }

    #[test]
    fn perturbed_q_factor_matches_width_ratio() {
        let base = OpticalTrain {
            f: 0.3,
            p: 0.25,
            q: 0.4,
            wavelength: 808e-9,
        };
        let pert = OpticalTrain {
            q: base.q * 1.1,
            ..base
        };
        let ws = 3.0e-5;
        let measured = map_width(ws, &pert).unwrap();
        let focal = map_width(ws, &base).unwrap();
        let predicted = (pert.factor().unwrap() / base.factor().unwrap()).abs();
        assert_relative_eq!(
            scaling_factor(measured, focal).unwrap(),
            predicted,
            max_relative = 1e-14
        );
    }

    #[test]
    fn measured_scaling_arithmetic() {
        assert_relative_eq!(1.3 * 1.56, 2.028, max_relative = 1e-12);
        assert_eq!(scaling_factor(2.0, 2.0).unwrap(), 1.0);
        assert_relative_eq!(correct_slope(1.3 * 1.9, 1.3), 1.9, max_relative = 1e-15);
    }

    #[test]
    fn degenerate_configuration_is_rejected() {
        // 1/f = 1/p + 1/q: imaging condition, D infinite.
        let t = OpticalTrain {
            f: 0.2,
            p: 0.4,
            q: 0.4,
            wavelength: 808e-9,
        };
        assert!(matches!(t.d(), Err(Error::DegenerateTrain(_))));
        assert!(map_centroid(1.0, &t).is_err());
        assert!(OpticalTrain::scaled(0.3, 808e-9, 0.3, 1.3).is_err());
    }
}
