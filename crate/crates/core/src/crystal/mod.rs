//! Uniaxial crystal dispersion, longitudinal wavevectors, and type-II phase matching.
//!
//! Lab frame: z is the crystal normal, x is the detector axis. The optic axis
//! makes `cut_angle` with z and lies in the plane at `axis_azimuth` from x.
//! Transverse wavevector components are continuous across the planar faces,
//! so an external (in-air) angle α and the transverse component are related
//! by `k_perp = (ω/c)·sin α` on both sides of the crystal.

pub mod dispersion;

use std::f64::consts::PI;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

pub use dispersion::{DispersionSet, SellmeierTerms, BUILTIN_SETS};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Angular frequency (rad/s) of a vacuum wavelength (m).
pub fn omega_from_wavelength(wavelength: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / wavelength
}

pub fn wavelength_from_omega(omega: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT / omega
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarization {
    Ordinary,
    Extraordinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PhaseMatchingType {
    /// e → o + e; the pump is always extraordinary.
    #[default]
    TypeII,
}

/// Which daughter photon carries which polarization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarizationAssignment {
    pub signal: Polarization,
    pub idler: Polarization,
}

impl Default for PolarizationAssignment {
    fn default() -> Self {
        Self {
            signal: Polarization::Ordinary,
            idler: Polarization::Extraordinary,
        }
    }
}

impl PolarizationAssignment {
    pub fn swapped(self) -> Self {
        Self {
            signal: self.idler,
            idler: self.signal,
        }
    }
}

/// Transverse wavevector (rad/m). `ky` stays 0 in the one-dimensional model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TransverseWavevector {
    pub kx: f64,
    pub ky: f64,
}

impl TransverseWavevector {
    pub const ZERO: Self = Self { kx: 0.0, ky: 0.0 };

    pub const fn new(kx: f64, ky: f64) -> Self {
        Self { kx, ky }
    }

    pub const fn along_x(kx: f64) -> Self {
        Self { kx, ky: 0.0 }
    }

    pub fn norm_squared(self) -> f64 {
        self.kx * self.kx + self.ky * self.ky
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Transverse component of a photon leaving at external angle `alpha` (rad) in the x–z plane.
    pub fn from_external_angle(alpha: f64, omega: f64) -> Self {
        Self::along_x(omega / SPEED_OF_LIGHT * alpha.sin())
    }

    /// External (in-air) angle in the x–z plane, radians.
    pub fn external_angle_x(self, omega: f64) -> f64 {
        (self.kx * SPEED_OF_LIGHT / omega).asin()
    }
}

impl Add for TransverseWavevector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.kx + rhs.kx, self.ky + rhs.ky)
    }
}

impl Sub for TransverseWavevector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.kx - rhs.kx, self.ky - rhs.ky)
    }
}

impl Neg for TransverseWavevector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.kx, -self.ky)
    }
}

/// Signal, idler and pump angular frequencies (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frequencies {
    pub signal: f64,
    pub idler: f64,
    pub pump: f64,
}

impl Frequencies {
    pub fn degenerate(pump: f64) -> Self {
        Self {
            signal: 0.5 * pump,
            idler: 0.5 * pump,
            pump,
        }
    }

    /// Energy-conserving split with the idler at `idler`.
    pub fn with_idler(pump: f64, idler: f64) -> Self {
        Self {
            signal: pump - idler,
            idler,
            pump,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalSpec {
    /// Length along z, metres.
    pub length: f64,
    /// Angle between the optic axis and the crystal normal, radians.
    pub cut_angle: f64,
    /// Azimuth of the plane containing the optic axis, measured from x, radians.
    pub axis_azimuth: f64,
    pub dispersion: DispersionSet,
    pub phase_matching: PhaseMatchingType,
    pub assignment: PolarizationAssignment,
}

impl Default for CrystalSpec {
    fn default() -> Self {
        Self {
            length: 1e-3,
            cut_angle: 42f64.to_radians(),
            axis_azimuth: 90f64.to_radians(),
            dispersion: DispersionSet::default(),
            phase_matching: PhaseMatchingType::TypeII,
            assignment: PolarizationAssignment::default(),
        }
    }
}

/// Degenerate perfectly phase-matched directions for a given pump direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatchedPair {
    pub signal: TransverseWavevector,
    pub idler: TransverseWavevector,
}

/// Partial derivatives of Δk_z at a phase-matched point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    /// ∂Δk_z/∂κ_s (dimensionless; metres per metre).
    pub d_signal: [f64; 2],
    /// ∂Δk_z/∂κ_i.
    pub d_idler: [f64; 2],
    /// ∂Δk_z/∂ω_s, s/m.
    pub beta_signal: f64,
    /// ∂Δk_z/∂ω_i, s/m.
    pub beta_idler: f64,
}

/// Central-difference steps for [`CrystalSpec::expansion_coefficients_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDifference {
    pub k_step: f64,
    pub omega_step: f64,
}

impl Default for FiniteDifference {
    fn default() -> Self {
        Self {
            k_step: 1.0,
            omega_step: 2.0 * PI * 1e9,
        }
    }
}

impl FiniteDifference {
    pub fn halved(self) -> Self {
        Self {
            k_step: 0.5 * self.k_step,
            omega_step: 0.5 * self.omega_step,
        }
    }
}

impl CrystalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "crystal length must be > 0, got {}",
                self.length
            )));
        }
        if !(0.0..=PI / 2.0).contains(&self.cut_angle) {
            return Err(Error::InvalidInput(format!(
                "cut angle must lie in [0, 90] deg, got {} deg",
                self.cut_angle.to_degrees()
            )));
        }
        self.dispersion.validate()
    }

    pub fn with_cut_angle(&self, cut_angle: f64) -> Self {
        Self {
            cut_angle,
            ..self.clone()
        }
    }

    /// Unit vector along the optic axis in lab coordinates.
    pub fn optic_axis(&self) -> [f64; 3] {
        let (st, ct) = self.cut_angle.sin_cos();
        let (sp, cp) = self.axis_azimuth.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Phase index for a polarization at `angle_to_axis` (radians between the
    /// wave normal and the optic axis). The angle is ignored for ordinary waves.
    pub fn refractive_index(&self, pol: Polarization, wavelength: f64, angle_to_axis: f64) -> Result<f64> {
        let (no, ne) = self.dispersion.principal_indices(wavelength)?;
        Ok(match pol {
            Polarization::Ordinary => no,
            Polarization::Extraordinary => {
                let (s, c) = angle_to_axis.sin_cos();
                1.0 / (c * c / (no * no) + s * s / (ne * ne)).sqrt()
            }
        })
    }

    /// Longitudinal wavevector component of a plane wave with transverse part `k`.
    ///
    /// The extraordinary branch solves the index-surface quadratic
    /// `k∥²/n_o² + k⊥²/n_e² = (ω/c)²` (parallel/perpendicular to the optic axis)
    /// for the forward-propagating root.
    pub fn kz(&self, pol: Polarization, k: TransverseWavevector, omega: f64) -> Result<f64> {
        let (no, ne) = self.dispersion.principal_indices(wavelength_from_omega(omega))?;
        kz_with_indices(pol, k, omega / SPEED_OF_LIGHT, no, ne, self.optic_axis())
    }

    fn signal_pol(&self) -> Polarization {
        self.assignment.signal
    }

    fn idler_pol(&self) -> Polarization {
        self.assignment.idler
    }

    /// Longitudinal phase mismatch `k_pz(κ_s+κ_i) − k_sz(κ_s) − k_iz(κ_i)`.
    ///
    /// The pump component that drives a pair with transverse wavevectors
    /// (κ_s, κ_i) is the plane wave at κ_s + κ_i, so the pump's central
    /// direction enters the amplitude through the envelope only. Energy
    /// conservation between the three frequencies is the caller's business.
    pub fn delta_kz(&self, ks: TransverseWavevector, ki: TransverseWavevector, w: Frequencies) -> Result<f64> {
        let kp = self.kz(Polarization::Extraordinary, ks + ki, w.pump)?;
        let s = self.kz(self.signal_pol(), ks, w.signal)?;
        let i = self.kz(self.idler_pol(), ki, w.idler)?;
        Ok(kp - s - i)
    }

    /// Δk_z evaluator with the refractive indices for fixed frequencies cached.
    pub fn mismatch_at(&self, w: Frequencies) -> Result<MismatchEvaluator> {
        let axis = self.optic_axis();
        let idx = |omega: f64| self.dispersion.principal_indices(wavelength_from_omega(omega));
        Ok(MismatchEvaluator {
            axis,
            pump: (w.pump / SPEED_OF_LIGHT, idx(w.pump)?),
            signal: (w.signal / SPEED_OF_LIGHT, idx(w.signal)?),
            idler: (w.idler / SPEED_OF_LIGHT, idx(w.idler)?),
            signal_pol: self.signal_pol(),
            idler_pol: self.idler_pol(),
        })
    }

    /// Degenerate perfect phase matching with `κ_s0 + κ_i0 = κ_p`, signal on the +x side.
    ///
    /// The signal is searched along κ_s0 = κ_p/2 + u·x̂ for the smallest u > 0
    /// where Δk_z changes sign, then refined by bisection to the last
    /// representable u. The idler is `κ_p − κ_s0`, adjusted at the ulp level so
    /// that the sum reproduces `κ_p` bit for bit.
    pub fn solve_phase_matching(&self, kp: TransverseWavevector, omega_p: f64) -> Result<PhaseMatchedPair> {
        let w = Frequencies::degenerate(omega_p);
        let eval = self.mismatch_at(w)?;
        let half = TransverseWavevector::new(0.5 * kp.kx, 0.5 * kp.ky);
        let mismatch = |u: f64| -> Result<f64> {
            let ks = TransverseWavevector::new(half.kx + u, half.ky);
            eval.delta_kz(ks, kp - ks)
        };

        let k_signal = w.signal / SPEED_OF_LIGHT;
        let u_max = 0.2 * k_signal;
        let steps = 4000;
        let mut lo = 0.0;
        let mut f_lo = mismatch(lo)?;
        let mut bracket = None;
        if f_lo == 0.0 {
            bracket = Some((lo, lo));
        }
        for n in 1..=steps {
            if bracket.is_some() {
                break;
            }
            let hi = u_max * n as f64 / steps as f64;
            let f_hi = match mismatch(hi) {
                Ok(v) => v,
                Err(Error::Evanescent { .. }) => break,
                Err(e) => return Err(e),
            };
            if f_hi == 0.0 || f_lo.signum() != f_hi.signum() {
                bracket = Some((lo, hi));
            }
            lo = hi;
            f_lo = f_hi;
        }
        let (mut a, mut b) = bracket.ok_or_else(|| {
            Error::NoPhaseMatching(format!(
                "no sign change of Δk_z for signal offsets up to {:.2} deg (cut angle {:.4} deg)",
                (u_max / k_signal).asin().to_degrees(),
                self.cut_angle.to_degrees()
            ))
        })?;
        let mut fa = mismatch(a)?;
        while a < b {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let fm = mismatch(mid)?;
            if fm == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        let fb = mismatch(b)?;
        let u = if fa.abs() <= fb.abs() { a } else { b };

        let signal_guess = TransverseWavevector::new(half.kx + u, half.ky);
        let (sx, ix) = split_exact(kp.kx, signal_guess.kx);
        let (sy, iy) = split_exact(kp.ky, signal_guess.ky);
        Ok(PhaseMatchedPair {
            signal: TransverseWavevector::new(sx, sy),
            idler: TransverseWavevector::new(ix, iy),
        })
    }

    pub fn expansion_coefficients(&self, pair: &PhaseMatchedPair, omega_p: f64) -> Result<ExpansionCoefficients> {
        self.expansion_coefficients_with(pair, omega_p, FiniteDifference::default())
    }

    /// Central finite differences of Δk_z around a degenerate phase-matched point.
    pub fn expansion_coefficients_with(
        &self,
        pair: &PhaseMatchedPair,
        omega_p: f64,
        steps: FiniteDifference,
    ) -> Result<ExpansionCoefficients> {
        let w0 = Frequencies::degenerate(omega_p);
        let eval = self.mismatch_at(w0)?;
        let h = steps.k_step;
        let dx = TransverseWavevector::along_x(h);
        let dy = TransverseWavevector::new(0.0, h);
        let (s, i) = (pair.signal, pair.idler);
        let diff = |a: f64, b: f64| (a - b) / (2.0 * h);
        let d_signal = [
            diff(eval.delta_kz(s + dx, i)?, eval.delta_kz(s - dx, i)?),
            diff(eval.delta_kz(s + dy, i)?, eval.delta_kz(s - dy, i)?),
        ];
        let d_idler = [
            diff(eval.delta_kz(s, i + dx)?, eval.delta_kz(s, i - dx)?),
            diff(eval.delta_kz(s, i + dy)?, eval.delta_kz(s, i - dy)?),
        ];
        let hw = steps.omega_step;
        let shifted = |ds: f64, di: f64| -> Result<f64> {
            self.delta_kz(
                s,
                i,
                Frequencies {
                    signal: w0.signal + ds,
                    idler: w0.idler + di,
                    pump: omega_p,
                },
            )
        };
        let beta_signal = (shifted(hw, 0.0)? - shifted(-hw, 0.0)?) / (2.0 * hw);
        let beta_idler = (shifted(0.0, hw)? - shifted(0.0, -hw)?) / (2.0 * hw);
        Ok(ExpansionCoefficients {
            d_signal,
            d_idler,
            beta_signal,
            beta_idler,
        })
    }

    /// External signal angle (deg) of the degenerate phase-matched pair for a pump at `alpha_p` (deg).
    pub fn signal_angle_deg(&self, alpha_p_deg: f64, omega_p: f64) -> Result<f64> {
        let kp = TransverseWavevector::from_external_angle(alpha_p_deg.to_radians(), omega_p);
        let pair = self.solve_phase_matching(kp, omega_p)?;
        Ok(pair.signal.external_angle_x(0.5 * omega_p).to_degrees())
    }

    /// Trim the cut angle within ±`window` (rad) so that the normal-incidence
    /// signal leaves at `target_deg`.
    pub fn calibrate_cut_angle(&self, omega_p: f64, target_deg: f64, window: f64) -> Result<CrystalSpec> {
        let center = self.cut_angle;
        let angle_at = |theta: f64| self.with_cut_angle(theta).signal_angle_deg(0.0, omega_p);
        let samples = 80;
        let mut achieved: Vec<(f64, f64)> = Vec::with_capacity(samples + 1);
        for n in 0..=samples {
            let theta = center - window + 2.0 * window * n as f64 / samples as f64;
            if !(0.0..=PI / 2.0).contains(&theta) {
                continue;
            }
            match angle_at(theta) {
                Ok(a) => achieved.push((theta, a - target_deg)),
                Err(Error::NoPhaseMatching(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let (mut lo, mut hi) = achieved
            .windows(2)
            .find(|w| w[0].1 == 0.0 || w[0].1.signum() != w[1].1.signum())
            .map(|w| (w[0], w[1]))
            .ok_or_else(|| {
                let range = achieved.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, g)| {
                    (a.min(g + target_deg), b.max(g + target_deg))
                });
                Error::Calibration(format!(
                    "target {target_deg} deg not reached for cut angles within {:.3} ± {:.3} deg; achieved [{:.4}, {:.4}] deg",
                    center.to_degrees(),
                    window.to_degrees(),
                    range.0,
                    range.1
                ))
            })?;
        if lo.1 == 0.0 {
            return Ok(self.with_cut_angle(lo.0));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo.0 + hi.0);
            if mid <= lo.0.min(hi.0) || mid >= lo.0.max(hi.0) {
                break;
            }
            let g = angle_at(mid)? - target_deg;
            if g == 0.0 {
                return Ok(self.with_cut_angle(mid));
            }
            if g.signum() == lo.1.signum() {
                lo = (mid, g);
            } else {
                hi = (mid, g);
            }
        }
        let best = if lo.1.abs() <= hi.1.abs() { lo.0 } else { hi.0 };
        Ok(self.with_cut_angle(best))
    }
}

/// Δk_z with the refractive indices cached for one set of frequencies.
#[derive(Debug, Clone, Copy)]
pub struct MismatchEvaluator {
    axis: [f64; 3],
    pump: (f64, (f64, f64)),
    signal: (f64, (f64, f64)),
    idler: (f64, (f64, f64)),
    signal_pol: Polarization,
    idler_pol: Polarization,
}

impl MismatchEvaluator {
    #[inline]
    pub fn delta_kz(&self, ks: TransverseWavevector, ki: TransverseWavevector) -> Result<f64> {
        let (k0p, (nop, nep)) = self.pump;
        let (k0s, (nos, nes)) = self.signal;
        let (k0i, (noi, nei)) = self.idler;
        let p = kz_with_indices(Polarization::Extraordinary, ks + ki, k0p, nop, nep, self.axis)?;
        let s = kz_with_indices(self.signal_pol, ks, k0s, nos, nes, self.axis)?;
        let i = kz_with_indices(self.idler_pol, ki, k0i, noi, nei, self.axis)?;
        Ok(p - s - i)
    }
}

#[inline]
fn kz_with_indices(
    pol: Polarization,
    k: TransverseWavevector,
    k0: f64,
    no: f64,
    ne: f64,
    axis: [f64; 3],
) -> Result<f64> {
    let t = k.norm_squared();
    match pol {
        Polarization::Ordinary => {
            let arg = no * no * k0 * k0 - t;
            if arg <= 0.0 {
                return Err(Error::Evanescent { k_perp: t.sqrt() });
            }
            Ok(arg.sqrt())
        }
        Polarization::Extraordinary => {
            let u = 1.0 / (no * no) - 1.0 / (ne * ne);
            let inv_ne2 = 1.0 / (ne * ne);
            let s = k.kx * axis[0] + k.ky * axis[1];
            let az = axis[2];
            let a = az * az * u + inv_ne2;
            let b = 2.0 * az * s * u;
            let c = s * s * u + t * inv_ne2 - k0 * k0;
            let disc = b * b - 4.0 * a * c;
            if disc <= 0.0 {
                return Err(Error::Evanescent { k_perp: t.sqrt() });
            }
            let kz = (-b + disc.sqrt()) / (2.0 * a);
            if kz <= 0.0 {
                return Err(Error::Evanescent { k_perp: t.sqrt() });
            }
            Ok(kz)
        }
    }
}

/// Split `total` into `(first, total - first)` with `first` moved by at most a
/// few ulps from `guess`, such that the two parts add back to `total` exactly.
fn split_exact(total: f64, guess: f64) -> (f64, f64) {
    let mut up = guess;
    let mut down = guess;
    for _ in 0..4096 {
        for cand in [up, down] {
            let rest = total - cand;
            if cand + rest == total {
                return (cand, rest);
            }
        }
        up = up.next_up();
        down = down.next_down();
    }
    // Both parts are multiples of ulp(guess), and so is their sum: when `total`
    // carries finer bits than that, no exact split exists and the residual is
    // below one ulp of the parts.
    (guess, total - guess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pump_omega() -> f64 {
        omega_from_wavelength(404e-9)
    }

    #[test]
    fn extraordinary_index_at_zero_angle_is_the_ordinary_axis_value() {
        // Along the optic axis both polarizations see n_o; perpendicular to it the
        // extraordinary wave sees the principal n_e.
        let spec = CrystalSpec::default();
        let (no, ne) = spec.dispersion.principal_indices(808e-9).unwrap();
        let e0 = spec.refractive_index(Polarization::Extraordinary, 808e-9, 0.0).unwrap();
        let e90 = spec
            .refractive_index(Polarization::Extraordinary, 808e-9, PI / 2.0)
            .unwrap();
        assert_relative_eq!(e0, no, epsilon = 1e-15);
        assert_relative_eq!(e90, ne, epsilon = 1e-15);
    }

    #[test]
    fn ordinary_index_is_higher_at_the_pump_wavelength() {
        let spec = CrystalSpec::default();
        let n404 = spec.refractive_index(Polarization::Ordinary, 404e-9, 0.0).unwrap();
        let n808 = spec.refractive_index(Polarization::Ordinary, 808e-9, 0.0).unwrap();
        assert!(n808 > 1.5 && n808 < 1.8);
        assert!(n404 > n808);
    }

    #[test]
    fn kz_extraordinary_agrees_with_angular_index_formula() {
        // Build a wave normal at a known direction, get its index from the
        // angular formula, and check the quadratic solver returns the same k_z.
        let spec = CrystalSpec::default();
        let omega = omega_from_wavelength(808e-9);
        let k0 = omega / SPEED_OF_LIGHT;
        let axis = spec.optic_axis();
        for &(phi_x, phi_y) in &[(0.0, 0.0), (0.03, 0.0), (-0.05, 0.01), (0.0, -0.04)] {
            let dir = {
                let (x, y) = (f64::sin(phi_x), f64::sin(phi_y));
                let z = (1.0 - x * x - y * y).sqrt();
                [x, y, z]
            };
            let cos_to_axis = dir[0] * axis[0] + dir[1] * axis[1] + dir[2] * axis[2];
            let n = spec
                .refractive_index(Polarization::Extraordinary, 808e-9, cos_to_axis.acos())
                .unwrap();
            let k = n * k0;
            let kt = TransverseWavevector::new(k * dir[0], k * dir[1]);
            let kz = spec.kz(Polarization::Extraordinary, kt, omega).unwrap();
            assert_relative_eq!(kz, k * dir[2], max_relative = 1e-12);
        }
    }

    #[test]
    fn evanescent_components_are_rejected() {
        let spec = CrystalSpec::default();
        let omega = omega_from_wavelength(808e-9);
        let huge = TransverseWavevector::along_x(3.0 * omega / SPEED_OF_LIGHT);
        assert!(matches!(
            spec.kz(Polarization::Ordinary, huge, omega),
            Err(Error::Evanescent { .. })
        ));
        assert!(matches!(
            spec.kz(Polarization::Extraordinary, huge, omega),
            Err(Error::Evanescent { .. })
        ));
    }

    #[test]
    fn phase_matched_pair_sums_to_the_pump_and_zeroes_the_mismatch() {
        let spec = CrystalSpec::default();
        let wp = pump_omega();
        let pair = spec.solve_phase_matching(TransverseWavevector::ZERO, wp).unwrap();
        assert_eq!(pair.signal.kx, -pair.idler.kx);
        assert!(pair.signal.kx > 0.0);
        let dk = spec
            .delta_kz(pair.signal, pair.idler, Frequencies::degenerate(wp))
            .unwrap();
        assert!(dk.abs() < 1e-6, "{dk}");
    }

    #[test]
    fn swapping_roles_with_polarizations_leaves_mismatch_unchanged() {
        let spec = CrystalSpec::default();
        let swapped = CrystalSpec {
            assignment: spec.assignment.swapped(),
            ..spec.clone()
        };
        let wp = pump_omega();
        let ks = TransverseWavevector::along_x(4.1e5);
        let ki = TransverseWavevector::along_x(-3.9e5);
        let w = Frequencies::with_idler(wp, 0.5 * wp + 2.0 * PI * 1e12);
        let swapped_w = Frequencies {
            signal: w.idler,
            idler: w.signal,
            pump: w.pump,
        };
        let a = spec.delta_kz(ks, ki, w).unwrap();
        let b = swapped.delta_kz(ki, ks, swapped_w).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-7);
    }

    #[test]
    fn cached_evaluator_matches_direct_evaluation() {
        let spec = CrystalSpec::default();
        let w = Frequencies::with_idler(pump_omega(), 0.5 * pump_omega() * 1.001);
        let eval = spec.mismatch_at(w).unwrap();
        let ks = TransverseWavevector::along_x(4.0e5);
        let ki = TransverseWavevector::along_x(-4.05e5);
        assert_eq!(eval.delta_kz(ks, ki).unwrap(), spec.delta_kz(ks, ki, w).unwrap());
    }

    #[test]
    fn split_exact_reproduces_total() {
        for &(t, g) in &[(0.0, 4.07e5), (1.3e4, 4.1e5), (-2.2e4, 3.9e5), (1.0, 1.0 / 3.0)] {
            let (a, b) = split_exact(t, g);
            assert_eq!(a + b, t);
            assert!((a - g).abs() <= 1e-9 * g.abs().max(1.0));
        }
    }

    #[test]
    fn cut_outside_window_is_rejected() {
        let spec = CrystalSpec {
            cut_angle: 2.0,
            ..CrystalSpec::default()
        };
        assert!(spec.validate().is_err());
        let spec = CrystalSpec {
            length: 0.0,
            ..CrystalSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn calibration_reports_range_when_target_unreachable() {
        let spec = CrystalSpec::default();
        let err = spec
            .calibrate_cut_angle(pump_omega(), 30.0, 1f64.to_radians())
            .unwrap_err();
        assert!(matches!(err, Error::Calibration(_)), "{err}");
    }
}
