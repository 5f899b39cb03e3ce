//! Pixel-integrated coincidence probability and count synthesis for a linear SPAD array.
//!
//! The coincidence probability for a signal pixel is
//!
//! ```text
//! P(k_sx) = ∫_{k_sx−δk/2}^{k_sx+δk/2} dκ_s ∫ dκ_i ∫ dω_i  |Ψ(κ_s, κ_i, ω_i)|² · W(κ_i)
//! ```
//!
//! with `W` a Gaussian weight for the fiber-coupled idler arm. The analytic
//! route uses the Gaussian-approximated amplitude, for which every factor is a
//! Gaussian in the linear variables; the idler and frequency integrals are done
//! in closed form and the pixel window leaves an error-function factor. The
//! numeric route integrates the exact amplitude with nested adaptive
//! quadrature and serves as the oracle for the analytic one.

use std::f64::consts::{LN_2, PI};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::analysis::PixelHistogram;
use crate::biphoton::{BeamGeometry, FilterShape, FilterSpec, SINC_GAUSSIAN_RATE};
use crate::crystal::{CrystalSpec, ExpansionCoefficients, Frequencies, TransverseWavevector, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpadArraySpec {
    pub n_pixels: usize,
    /// Centre-to-centre spacing, metres.
    pub pitch: f64,
    /// Active diameter, metres.
    pub diameter: f64,
    pub dead_pixels: Vec<usize>,
    /// Dark counts per second per pixel.
    pub dark_rate: f64,
}

impl Default for SpadArraySpec {
    fn default() -> Self {
        Self {
            n_pixels: 32,
            pitch: 100e-6,
            diameter: 20e-6,
            dead_pixels: vec![19],
            dark_rate: 100.0,
        }
    }
}

impl SpadArraySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_pixels == 0 {
            return Err(Error::InvalidInput("array needs at least one pixel".into()));
        }
        if !(self.diameter > 0.0 && self.diameter <= self.pitch) {
            return Err(Error::InvalidInput(format!(
                "pixel diameter {} must be in (0, pitch = {}]",
                self.diameter, self.pitch
            )));
        }
        if let Some(&bad) = self.dead_pixels.iter().find(|&&p| p >= self.n_pixels) {
            return Err(Error::InvalidInput(format!(
                "dead pixel {bad} outside [0, {})",
                self.n_pixels
            )));
        }
        if self.dark_rate < 0.0 {
            return Err(Error::InvalidInput("dark rate must be >= 0".into()));
        }
        Ok(())
    }

    pub fn is_live(&self, pixel: usize) -> bool {
        !self.dead_pixels.contains(&pixel)
    }

    pub fn live_mask(&self) -> Vec<bool> {
        (0..self.n_pixels).map(|i| self.is_live(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdlerChannelSpec {
    /// Standard deviation of the Gaussian acceptance weight on the idler's
    /// external angle, radians.
    pub angular_acceptance_sigma: f64,
    pub coupling_efficiency: f64,
}

impl Default for IdlerChannelSpec {
    fn default() -> Self {
        Self {
            angular_acceptance_sigma: 1.5e-3,
            coupling_efficiency: 0.05,
        }
    }
}

impl IdlerChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.angular_acceptance_sigma > 0.0) {
            return Err(Error::InvalidInput("idler acceptance sigma must be > 0".into()));
        }
        if !(self.coupling_efficiency > 0.0 && self.coupling_efficiency <= 1.0) {
            return Err(Error::InvalidInput("coupling efficiency must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Idler acceptance resolved into transverse-wavevector units around the fiber axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdlerAcceptance {
    pub center: TransverseWavevector,
    /// Standard deviation of the weight in κ_i, rad/m.
    pub sigma_k: f64,
}

impl IdlerAcceptance {
    pub fn new(spec: &IdlerChannelSpec, center: TransverseWavevector, omega_i: f64) -> Self {
        Self {
            center,
            sigma_k: spec.angular_acceptance_sigma * omega_i / SPEED_OF_LIGHT,
        }
    }

    pub fn weight(&self, ki: TransverseWavevector) -> f64 {
        let d = ki - self.center;
        (-0.5 * d.norm_squared() / (self.sigma_k * self.sigma_k)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccidentalModel {
    None,
    #[default]
    RateProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceSettings {
    /// Coincidence window, seconds.
    pub window: f64,
    pub accidental_model: AccidentalModel,
    /// Singles per second on each SPAD pixel, excluding dark counts.
    pub spad_singles_rate: f64,
    /// Singles per second on the fiber-coupled idler detector.
    pub spcm_singles_rate: f64,
}

impl Default for CoincidenceSettings {
    fn default() -> Self {
        Self {
            window: 2e-9,
            accidental_model: AccidentalModel::RateProduct,
            spad_singles_rate: 1e4,
            spcm_singles_rate: 1e5,
        }
    }
}

impl CoincidenceSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) {
            return Err(Error::InvalidInput("coincidence window must be > 0".into()));
        }
        if self.spad_singles_rate < 0.0 || self.spcm_singles_rate < 0.0 {
            return Err(Error::InvalidInput("singles rates must be >= 0".into()));
        }
        Ok(())
    }
}

/// Angular range 2π·d/(λ₀·f) monitored by one pixel of diameter d.
pub fn pixel_delta_k(spec: &SpadArraySpec, focal: f64, lambda0: f64) -> f64 {
    2.0 * PI * spec.diameter / (lambda0 * focal)
}

/// Transverse wavevector 2π·sin(α)/λ₀ for an external angle α (radians).
pub fn k_sx_from_angle(alpha: f64, lambda0: f64) -> f64 {
    2.0 * PI * alpha.sin() / lambda0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Closed-form integral of the Gaussian-approximated amplitude.
    Analytic,
    /// Nested adaptive quadrature of the exact amplitude.
    Numeric,
}

/// Everything needed to evaluate coincidence probabilities at one pump direction.
#[derive(Debug, Clone)]
pub struct CoincidenceModel {
    pub crystal: CrystalSpec,
    pub geom: BeamGeometry,
    pub filter: FilterSpec,
    pub coeffs: ExpansionCoefficients,
    pub idler: IdlerAcceptance,
    pub tolerance: Tolerance,
}

/// 1D Gaussian in κ_s left after integrating out the idler and frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalMarginal {
    /// Centroid of |ψ(κ_s)|², rad/m.
    pub centroid: f64,
    /// Characteristic width w_s with |ψ|² ∝ exp(−w_s²(κ_s − centroid)²), metres.
    pub width: f64,
    /// Probability density at the centroid, per rad/m.
    pub peak_density: f64,
}

// Scales that make the integration variables O(1).
const K_SCALE: f64 = 1e4;

/// exp(−(xᵀMx + 2gᵀx + h)) over scaled variables x = (a, b, ν).
#[derive(Debug, Clone, Copy)]
struct GaussianForm {
    m: Matrix3<f64>,
    g: Vector3<f64>,
    h: f64,
}

impl GaussianForm {
    fn zero() -> Self {
        Self {
            m: Matrix3::zeros(),
            g: Vector3::zeros(),
            h: 0.0,
        }
    }

    /// Add weight·(vᵀx + offset)².
    fn add(&mut self, weight: f64, v: Vector3<f64>, offset: f64) {
        self.m += weight * v * v.transpose();
        self.g += weight * offset * v;
        self.h += weight * offset * offset;
    }
}

/// ∫_lo^hi exp(−(α a² + 2γ a + h)) da, evaluated with erfc on the far side of the peak.
fn gaussian_window(alpha: f64, gamma: f64, h: f64, lo: f64, hi: f64) -> f64 {
    let mu = -gamma / alpha;
    let floor = h - gamma * gamma / alpha;
    let s = alpha.sqrt();
    let (u, v) = (s * (lo - mu), s * (hi - mu));
    let mass = if u >= 0.0 {
        libm::erfc(u) - libm::erfc(v)
    } else if v <= 0.0 {
        libm::erfc(-v) - libm::erfc(-u)
    } else {
        libm::erf(v) - libm::erf(u)
    };
    (-floor).exp() * 0.5 * (PI / alpha).sqrt() * mass
}

impl CoincidenceModel {
    pub fn new(
        crystal: &CrystalSpec,
        geom: BeamGeometry,
        filter: FilterSpec,
        idler: IdlerAcceptance,
        tolerance: Tolerance,
    ) -> Result<Self> {
        let coeffs = crystal.expansion_coefficients(&geom.pair(), geom.omega_p)?;
        Ok(Self {
            crystal: crystal.clone(),
            geom,
            filter,
            coeffs,
            idler,
            tolerance,
        })
    }

    fn nu_scale(&self) -> f64 {
        self.filter.fwhm
    }

    /// Quadratic form of −ln(|Ψ_gauss|²·W) in the scaled variables
    /// a = (κ_s − κ_s0)/K, b = (κ_i − κ_i0)/K, ν = (ω_i − ω_p/2)/FWHM.
    fn form(&self, include_filter: bool) -> GaussianForm {
        let k = K_SCALE;
        let sn = self.nu_scale();
        let g = &self.geom;
        let c = &self.coeffs;
        let mut q = GaussianForm::zero();
        let wp2 = g.waist * g.waist;
        q.add(wp2, Vector3::new(k, k, 0.0), (g.signal0 + g.idler0 - g.pump).kx);
        let l = self.crystal.length;
        let sinc_weight = 2.0 * SINC_GAUSSIAN_RATE * 0.25 * l * l;
        q.add(
            sinc_weight,
            Vector3::new(c.d_signal[0] * k, c.d_idler[0] * k, (c.beta_signal - c.beta_idler) * sn),
            0.0,
        );
        if include_filter {
            q.add(
                4.0 * LN_2 / (self.filter.fwhm * self.filter.fwhm),
                Vector3::new(0.0, 0.0, sn),
                0.5 * g.omega_p - self.filter.center,
            );
        }
        let s2 = self.idler.sigma_k * self.idler.sigma_k;
        q.add(0.5 / s2, Vector3::new(0.0, k, 0.0), (g.idler0 - self.idler.center).kx);
        q
    }

    fn jacobian(&self) -> f64 {
        K_SCALE * K_SCALE * self.nu_scale()
    }

    /// Reduce the form to a 1D Gaussian in `a` by integrating b and ν over ℝ.
    /// Returns (α, γ, h, log-prefactor) in scaled units.
    fn reduce_to_signal(&self) -> Result<(f64, f64, f64, f64)> {
        if self.filter.shape != FilterShape::Gaussian {
            return Err(Error::InvalidInput(
                "closed-form frequency integral needs a gaussian filter; use a finite frequency window".into(),
            ));
        }
        let q = self.form(true);
        let mbb = Matrix2::new(q.m[(1, 1)], q.m[(1, 2)], q.m[(2, 1)], q.m[(2, 2)]);
        let mab = Vector2::new(q.m[(0, 1)], q.m[(0, 2)]);
        let gb = Vector2::new(q.g[1], q.g[2]);
        let det = mbb.determinant();
        let inv = mbb
            .try_inverse()
            .filter(|_| det > 0.0)
            .ok_or_else(|| Error::InvalidInput("idler/frequency quadratic form is not positive definite".into()))?;
        let alpha = q.m[(0, 0)] - (mab.transpose() * inv * mab)[0];
        let gamma = q.g[0] - (mab.transpose() * inv * gb)[0];
        let h = q.h - (gb.transpose() * inv * gb)[0];
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput("signal marginal is not normalizable".into()));
        }
        Ok((alpha, gamma, h, (PI / det.sqrt()).ln()))
    }

    /// Centroid, width and peak density of the signal marginal.
    pub fn signal_marginal(&self) -> Result<SignalMarginal> {
        let (alpha, gamma, h, log_pref) = self.reduce_to_signal()?;
        let mu = -gamma / alpha;
        let floor = h - gamma * gamma / alpha;
        let k = K_SCALE;
        Ok(SignalMarginal {
            centroid: self.geom.signal0.kx + mu * k,
            width: alpha.sqrt() / k,
            peak_density: (log_pref - floor).exp() * self.jacobian() / k,
        })
    }

    /// Analytic pixel probability: closed form in κ_i and ω_i, error functions across the pixel.
    pub fn probability_analytic(&self, k_sx: f64, delta_k: f64) -> Result<f64> {
        check_window(delta_k)?;
        let (alpha, gamma, h, log_pref) = self.reduce_to_signal()?;
        let s0 = self.geom.signal0.kx;
        let lo = (k_sx - 0.5 * delta_k - s0) / K_SCALE;
        let hi = (k_sx + 0.5 * delta_k - s0) / K_SCALE;
        Ok(log_pref.exp() * gaussian_window(alpha, gamma, h, lo, hi) * self.jacobian())
    }

    /// Analytic pixel probability with ω_i restricted to a finite band.
    ///
    /// `half_range_fwhm` is the half width of the band around the filter centre
    /// in units of the filter FWHM; for a tophat filter the band is the
    /// passband itself and the argument is ignored. κ_i is still integrated in
    /// closed form; the band is integrated by adaptive quadrature.
    pub fn probability_analytic_band(&self, k_sx: f64, delta_k: f64, half_range_fwhm: f64) -> Result<f64> {
        check_window(delta_k)?;
        let gaussian = self.filter.shape == FilterShape::Gaussian;
        let q = self.form(gaussian);
        let mbb = q.m[(1, 1)];
        // Integrate b: remaining form in (a, ν).
        let m_aa = q.m[(0, 0)] - q.m[(0, 1)] * q.m[(1, 0)] / mbb;
        let m_an = q.m[(0, 2)] - q.m[(0, 1)] * q.m[(1, 2)] / mbb;
        let m_nn = q.m[(2, 2)] - q.m[(2, 1)] * q.m[(1, 2)] / mbb;
        let g_a = q.g[0] - q.m[(0, 1)] * q.g[1] / mbb;
        let g_n = q.g[2] - q.m[(2, 1)] * q.g[1] / mbb;
        let h0 = q.h - q.g[1] * q.g[1] / mbb;
        let pref = (PI / mbb).sqrt();

        let s0 = self.geom.signal0.kx;
        let lo = (k_sx - 0.5 * delta_k - s0) / K_SCALE;
        let hi = (k_sx + 0.5 * delta_k - s0) / K_SCALE;
        let center = (self.filter.center - 0.5 * self.geom.omega_p) / self.nu_scale();
        let half = if gaussian { half_range_fwhm } else { 0.5 };
        let tol = Tolerance {
            relative: self.tolerance.relative * 0.1,
            ..self.tolerance
        };
        let r = integrate(
            |nu| {
                let gamma = g_a + m_an * nu;
                let h = m_nn * nu * nu + 2.0 * g_n * nu + h0;
                Ok(gaussian_window(m_aa, gamma, h, lo, hi))
            },
            center - half,
            center + half,
            tol,
        )?;
        Ok(pref * r.value * self.jacobian())
    }

    /// Numeric pixel probability: exact amplitude, nested adaptive quadrature.
    pub fn probability_numeric(&self, k_sx: f64, delta_k: f64) -> Result<f64> {
        check_window(delta_k)?;
        let sn = self.nu_scale();
        let k = K_SCALE;
        let g = self.geom;
        let wp = g.omega_p;
        let nu_center = (self.filter.center - 0.5 * wp) / sn;
        let nu_half = match self.filter.shape {
            FilterShape::Gaussian => 4.0,
            FilterShape::Tophat => 0.5,
        };
        let b_center = (self.idler.center - g.idler0).kx / k;
        let b_half = 7.0 * self.idler.sigma_k / k;
        let a_lo = (k_sx - 0.5 * delta_k - g.signal0.kx) / k;
        let a_hi = (k_sx + 0.5 * delta_k - g.signal0.kx) / k;
        let l_half = 0.5 * self.crystal.length;

        let outer = self.tolerance;
        let middle = Tolerance {
            relative: outer.relative * 0.1,
            ..outer
        };
        let inner = Tolerance {
            relative: outer.relative * 0.01,
            ..outer
        };

        let r = integrate(
            |nu| {
                let omega_i = 0.5 * wp + nu * sn;
                let lambda = self.filter.amplitude(omega_i);
                if lambda == 0.0 {
                    return Ok(0.0);
                }
                let eval = self.crystal.mismatch_at(Frequencies::with_idler(wp, omega_i))?;
                let mid = integrate(
                    |b| {
                        let ki = TransverseWavevector::along_x(g.idler0.kx + b * k);
                        let w = self.idler.weight(ki);
                        if w < 1e-300 {
                            return Ok(0.0);
                        }
                        let inn = integrate(
                            |a| {
                                let ks = TransverseWavevector::along_x(g.signal0.kx + a * k);
                                let dk = eval.delta_kz(ks, ki)?;
                                let amp = lambda * g.pump_envelope(ks, ki) * crate::biphoton::sinc(l_half * dk);
                                Ok(amp * amp)
                            },
                            a_lo,
                            a_hi,
                            inner,
                        )?;
                        Ok(w * inn.value)
                    },
                    b_center - b_half,
                    b_center + b_half,
                    middle,
                )?;
                Ok(mid.value)
            },
            nu_center - nu_half,
            nu_center + nu_half,
            outer,
        )?;
        Ok(r.value * self.jacobian())
    }

    pub fn probability(&self, k_sx: f64, delta_k: f64, method: Method) -> Result<f64> {
        match method {
            Method::Analytic => self.probability_analytic(k_sx, delta_k),
            Method::Numeric => self.probability_numeric(k_sx, delta_k),
        }
    }
}

fn check_window(delta_k: f64) -> Result<()> {
    if !(delta_k > 0.0) {
        return Err(Error::InvalidInput(format!(
            "pixel acceptance δk must be > 0, got {delta_k}"
        )));
    }
    Ok(())
}

/// Unnormalized probability of a signal detection on a pixel centred at `k_sx`.
pub fn coincidence_probability(k_sx: f64, model: &CoincidenceModel, delta_k: f64, method: Method) -> Result<f64> {
    model.probability(k_sx, delta_k, method)
}

/// Scale a profile to unit sum over live pixels; dead pixels are set to 0.
pub fn normalize_live(profile: &[f64], array: &SpadArraySpec) -> Vec<f64> {
    let total: f64 = profile
        .iter()
        .enumerate()
        .filter(|(i, _)| array.is_live(*i))
        .map(|(_, p)| p)
        .sum();
    profile
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if array.is_live(i) && total > 0.0 {
                p / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Accidental coincidences per pixel over `duration`.
pub fn accidentals(settings: &CoincidenceSettings, array: &SpadArraySpec, duration: f64) -> f64 {
    match settings.accidental_model {
        AccidentalModel::None => 0.0,
        AccidentalModel::RateProduct => {
            (settings.spad_singles_rate + array.dark_rate) * settings.spcm_singles_rate * settings.window * duration
        }
    }
}

/// Expected coincidence counts per pixel.
pub fn expected_counts(
    profile: &[f64],
    pair_rate: f64,
    duration: f64,
    coupling_efficiency: f64,
    settings: &CoincidenceSettings,
    array: &SpadArraySpec,
) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::InvalidInput("acquisition duration must be > 0".into()));
    }
    if profile.len() != array.n_pixels {
        return Err(Error::InvalidInput(format!(
            "profile has {} entries for {} pixels",
            profile.len(),
            array.n_pixels
        )));
    }
    let live_sum: f64 = profile
        .iter()
        .enumerate()
        .filter(|(i, _)| array.is_live(*i))
        .map(|(_, p)| p)
        .sum();
    if profile.iter().any(|&p| p < 0.0) || live_sum > 1.0 + 1e-9 {
        return Err(Error::InvalidInput(
            "profile must be nonnegative with live sum <= 1".into(),
        ));
    }
    let acc = accidentals(settings, array, duration);
    Ok(profile
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if array.is_live(i) {
                pair_rate * duration * p * coupling_efficiency + acc
            } else {
                0.0
            }
        })
        .collect())
}

/// Independent Poisson draw per pixel from a ChaCha8 stream seeded with `seed`.
pub fn sample_counts(expected: &[f64], seed: u64) -> Result<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    expected
        .iter()
        .map(|&lambda| {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidInput(format!("expected count {lambda} is not >= 0")));
            }
            if lambda == 0.0 {
                return Ok(0);
            }
            let d = Poisson::new(lambda).map_err(|e| Error::InvalidInput(e.to_string()))?;
            Ok(d.sample(&mut rng) as u64)
        })
        .collect()
}

/// Seeded synthetic histogram for one acquisition.
pub fn sample_histogram(
    expected: &[f64],
    seed: u64,
    array: &SpadArraySpec,
    alpha_p_deg: f64,
    duration: f64,
) -> Result<PixelHistogram> {
    let counts = sample_counts(expected, seed)?;
    PixelHistogram::new(counts, array.live_mask(), alpha_p_deg, duration, seed)
}
