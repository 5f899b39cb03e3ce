//! Histograms, Gaussian peak fits, pixel calibration and the weighted line fit.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelHistogram {
    pub counts: Vec<u64>,
    /// `true` for live pixels.
    pub mask: Vec<bool>,
    pub alpha_p_deg: f64,
    pub duration: f64,
    pub seed: u64,
}

impl PixelHistogram {
    pub fn new(counts: Vec<u64>, mask: Vec<bool>, alpha_p_deg: f64, duration: f64, seed: u64) -> Result<Self> {
        if counts.len() != mask.len() {
            return Err(Error::InvalidInput(format!(
                "{} counts for a mask of {} pixels",
                counts.len(),
                mask.len()
            )));
        }
        Ok(Self {
            counts,
            mask,
            alpha_p_deg,
            duration,
            seed,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.counts.len()
    }

    /// `pixel_index,counts` rows after a `#` header with the acquisition metadata.
    /// Dead pixels are listed in the header and written with zero counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let dead: Vec<String> = self
            .mask
            .iter()
            .enumerate()
            .filter(|(_, live)| !**live)
            .map(|(i, _)| i.to_string())
            .collect();
        let _ = writeln!(out, "# alpha_p_deg = {}", self.alpha_p_deg);
        let _ = writeln!(out, "# seed = {}", self.seed);
        let _ = writeln!(out, "# duration_s = {}", self.duration);
        let _ = writeln!(out, "# dead_pixels = {}", dead.join(" "));
        out.push_str("pixel_index,counts\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{i},{}", if self.mask[i] { *c } else { 0 });
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidInput(format!("histogram csv: {msg}"));
        let (mut alpha, mut seed, mut duration) = (None, None, None);
        let mut dead: Vec<usize> = Vec::new();
        let mut counts = Vec::new();
        let mut header_seen = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.split_once('=') else {
                    continue;
                };
                let value = value.trim();
                match key.trim() {
                    "alpha_p_deg" => alpha = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                    "seed" => seed = Some(value.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                    "duration_s" => duration = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                    "dead_pixels" => {
                        dead = value
                            .split_whitespace()
                            .map(|s| s.parse::<usize>().map_err(|e| bad(e.to_string())))
                            .collect::<Result<_>>()?
                    }
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line != "pixel_index,counts" {
                    return Err(bad(format!("unexpected header '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let (i, c) = line.split_once(',').ok_or_else(|| bad(format!("bad row '{line}'")))?;
            let i: usize = i.trim().parse().map_err(|_| bad(format!("bad index in '{line}'")))?;
            if i != counts.len() {
                return Err(bad(format!("row {i} out of order")));
            }
            counts.push(
                c.trim()
                    .parse::<u64>()
                    .map_err(|_| bad(format!("bad count in '{line}'")))?,
            );
        }
        let mut mask = vec![true; counts.len()];
        for d in dead {
            *mask
                .get_mut(d)
                .ok_or_else(|| bad(format!("dead pixel {d} out of range")))? = false;
        }
        Self::new(
            counts,
            mask,
            alpha.ok_or_else(|| bad("missing alpha_p_deg".into()))?,
            duration.ok_or_else(|| bad("missing duration_s".into()))?,
            seed.ok_or_else(|| bad("missing seed".into()))?,
        )
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    /// Fractional pixel index.
    pub center: f64,
    /// Half-width at 1/e of the fitted profile, pixels.
    pub width: f64,
    pub offset: f64,
    pub sigma_amplitude: f64,
    pub sigma_center: f64,
    pub sigma_width: f64,
    pub sigma_offset: f64,
    /// χ² per degree of freedom.
    pub reduced_chi2: f64,
    pub iterations: usize,
}

impl GaussianFit {
    /// Full width 2w of the fitted profile, pixels.
    pub fn diameter(&self) -> f64 {
        2.0 * self.width
    }

    pub fn sigma_diameter(&self) -> f64 {
        2.0 * self.sigma_width
    }
}

pub const MAX_FIT_ITERATIONS: usize = 200;
pub const FIT_STEP_TOLERANCE: f64 = 1e-8;

fn model(p: &[f64; 4], x: f64) -> (f64, [f64; 4]) {
    let [a, c, w, _] = *p;
    let u = (x - c) / w;
    let e = (-u * u).exp();
    let value = a * e + p[3];
    (value, [e, a * e * 2.0 * u / w, a * e * 2.0 * u * u / w, 1.0])
}

/// Least-squares fit of A·exp(−(x−c)²/w²) + b to a histogram's live pixels.
pub fn fit_gaussian(h: &PixelHistogram) -> Result<GaussianFit> {
    fit_gaussian_values(&h.values(), &h.mask)
}

/// As [`fit_gaussian`] on real-valued data (e.g. expected counts) with weights
/// 1/max(value, 1).
pub fn fit_gaussian_values(values: &[f64], mask: &[bool]) -> Result<GaussianFit> {
    if values.len() != mask.len() {
        return Err(Error::InvalidInput("values and mask differ in length".into()));
    }
    let points: Vec<(f64, f64, f64)> = values
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (_, live))| **live)
        .map(|(i, (&y, _))| (i as f64, y, 1.0 / y.max(1.0)))
        .collect();
    if points.iter().any(|p| !(p.1 >= 0.0 && p.1.is_finite())) {
        return Err(Error::InvalidInput("counts must be finite and nonnegative".into()));
    }
    let nonzero = points.iter().filter(|p| p.1 > 0.0).count();
    if nonzero < 5 {
        return Err(Error::InvalidInput(format!(
            "gaussian fit needs at least 5 live pixels with counts, got {nonzero}"
        )));
    }

    // Moment seeding.
    let total: f64 = points.iter().map(|p| p.1).sum();
    let mean = points.iter().map(|p| p.0 * p.1).sum::<f64>() / total;
    let var = points.iter().map(|p| (p.0 - mean).powi(2) * p.1).sum::<f64>() / total;
    let max = points.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min = points.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let mut params = [max, mean, (2.0 * var).sqrt().max(0.5), min];

    let chi2 = |p: &[f64; 4]| -> f64 { points.iter().map(|&(x, y, wt)| wt * (y - model(p, x).0).powi(2)).sum() };
    let normal = |p: &[f64; 4]| -> (Matrix4<f64>, Vector4<f64>) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for &(x, y, wt) in &points {
            let (f, g) = model(p, x);
            let g = Vector4::from(g);
            jtj += wt * g * g.transpose();
            jtr += wt * (y - f) * g;
        }
        (jtj, jtr)
    };

    let mut lambda = 1e-3;
    let mut current = chi2(&params);
    let mut trace: Vec<[f64; 4]> = vec![params];
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_FIT_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal(&params);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj;
            for i in 0..4 {
                damped[(i, i)] *= 1.0 + lambda;
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [
                params[0] + step[0],
                params[1] + step[1],
                params[2] + step[2],
                params[3] + step[3],
            ];
            let value = chi2(&trial);
            if trial[2] > 0.0 && value.is_finite() && value <= current {
                let scales = [
                    params[0].abs(),
                    params[1].abs().max(1.0),
                    params[2].abs(),
                    params[3].abs().max(1e-3 * params[0].abs()),
                ];
                last_step = (0..4).map(|i| (step[i] / scales[i]).abs()).fold(0.0, f64::max);
                params = trial;
                current = value;
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        trace.push(params);
        if !accepted {
            // No descent direction left at working precision.
            converged = true;
            break;
        }
        if last_step < FIT_STEP_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::FitNotConverged {
            iterations,
            last_step,
            trace,
        });
    }

    let (jtj, _) = normal(&params);
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("fit covariance is singular".into()))?;
    let n = values.len() as f64;
    let fit = GaussianFit {
        amplitude: params[0],
        center: params[1],
        width: params[2].abs(),
        offset: params[3],
        sigma_amplitude: cov[(0, 0)].sqrt(),
        sigma_center: cov[(1, 1)].sqrt(),
        sigma_width: cov[(2, 2)].sqrt(),
        sigma_offset: cov[(3, 3)].sqrt(),
        reduced_chi2: current / (points.len() as f64 - 4.0).max(1.0),
        iterations,
    };
    if !(fit.center >= -2.0 && fit.center <= n + 2.0) {
        return Err(Error::InvalidInput(format!(
            "fitted centre {} outside [-2, {}]",
            fit.center,
            n + 2.0
        )));
    }
    Ok(fit)
}

/// Affine pixel ↔ transverse-wavevector map, with α = asin(k/k₀) on the angle side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCalibration {
    /// Pixel index where `k_ref` lands.
    pub pixel_ref: f64,
    /// Transverse wavevector at `pixel_ref`, rad/m.
    pub k_ref: f64,
    /// Change in k_sx per pixel step, rad/m.
    pub k_per_pixel: f64,
    /// Vacuum wavenumber 2π/λ₀, rad/m.
    pub k0: f64,
}

impl PixelCalibration {
    /// `scale` is |λpq/(2πD)|, so one pitch on the detector spans pitch/scale in k.
    pub fn new(pixel_ref: f64, k_ref: f64, pitch: f64, scale: f64, wavelength: f64) -> Self {
        Self {
            pixel_ref,
            k_ref,
            k_per_pixel: pitch / scale,
            k0: 2.0 * PI / wavelength,
        }
    }

    /// Vacuum wavelength the angle conversion uses, metres.
    pub fn wavelength(&self) -> f64 {
        2.0 * PI / self.k0
    }

    pub fn k_from_pixel(&self, pixel: f64) -> f64 {
        self.k_ref + (pixel - self.pixel_ref) * self.k_per_pixel
    }

    pub fn pixel_from_k(&self, k: f64) -> f64 {
        self.pixel_ref + (k - self.k_ref) / self.k_per_pixel
    }

    pub fn pixel_from_angle(&self, alpha_deg: f64) -> f64 {
        self.pixel_from_k(self.k0 * alpha_deg.to_radians().sin())
    }

    pub fn angle_from_pixel(&self, pixel: f64) -> f64 {
        (self.k_from_pixel(pixel) / self.k0).asin().to_degrees()
    }

    /// dα/dpixel at a pixel position, degrees per pixel.
    pub fn degrees_per_pixel(&self, pixel: f64) -> f64 {
        let s = self.k_from_pixel(pixel) / self.k0;
        (self.k_per_pixel / self.k0 / (1.0 - s * s).sqrt()).to_degrees()
    }
}

/// Emission angle (degrees) of a fitted centre.
pub fn angle_from_center(center: f64, calib: &PixelCalibration) -> f64 {
    calib.angle_from_pixel(center)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub sigma_intercept: f64,
    pub sigma_slope: f64,
    /// [[var(a), cov(a,b)], [cov(a,b), var(b)]] for y = a + b·x.
    pub covariance: [[f64; 2]; 2],
    pub chi2: f64,
}

/// Weighted least-squares line through (x, y, σ_y) points.
pub fn fit_linear(points: &[(f64, f64, f64)]) -> Result<LinearFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "line fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|p| !(p.2 > 0.0) || !p.0.is_finite() || !p.1.is_finite())
    {
        return Err(Error::InvalidInput(
            "line fit needs finite points with sigma > 0".into(),
        ));
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, sigma) in points {
        let w = 1.0 / (sigma * sigma);
        s += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    // Centre the abscissa to avoid cancellation in the determinant.
    let xm = sx / s;
    let sxx_c = sxx - sx * xm;
    if !(sxx_c > 1e-14 * sxx.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::InvalidInput("line fit abscissas are degenerate".into()));
    }
    let slope = (sxy - xm * sy) / sxx_c;
    let intercept = sy / s - slope * xm;
    let var_b = 1.0 / sxx_c;
    let var_a = 1.0 / s + xm * xm * var_b;
    let cov_ab = -xm * var_b;
    let chi2 = points
        .iter()
        .map(|&(x, y, sigma)| ((y - intercept - slope * x) / sigma).powi(2))
        .sum();
    Ok(LinearFit {
        intercept,
        slope,
        sigma_intercept: var_a.sqrt(),
        sigma_slope: var_b.sqrt(),
        covariance: [[var_a, cov_ab], [cov_ab, var_b]],
        chi2,
    })
}

/// Pearson correlation coefficient of two equally long series over `mask`.
pub fn correlation(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, live)| **live)
        .map(|(p, _)| (*p.0, *p.1))
        .collect();
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gaussian_data(a: f64, c: f64, w: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a * (-((i as f64 - c) / w).powi(2)).exp() + b).collect()
    }

    #[test]
    fn noiseless_gaussian_is_recovered() {
        let y = gaussian_data(500.0, 16.0, 9.5, 0.0, 32);
        let fit = fit_gaussian_values(&y, &[true; 32]).unwrap();
        assert_relative_eq!(fit.amplitude, 500.0, max_relative = 1e-6);
        assert_relative_eq!(fit.center, 16.0, max_relative = 1e-6);
        assert_relative_eq!(fit.width, 9.5, max_relative = 1e-6);
        assert!(fit.offset.abs() < 1e-6 * 500.0);
    }

    #[test]
    fn offset_and_fractional_centre() {
        let y = gaussian_data(300.0, 13.37, 7.0, 120.0, 32);
        let fit = fit_gaussian_values(&y, &[true; 32]).unwrap();
        assert_relative_eq!(fit.center, 13.37, max_relative = 1e-8);
        assert_relative_eq!(fit.offset, 120.0, max_relative = 1e-6);
        assert_relative_eq!(fit.diameter(), 14.0, max_relative = 1e-8);
    }

    #[test]
    fn masked_pixel_is_excluded() {
        let mut y = gaussian_data(500.0, 16.0, 9.5, 100.0, 32);
        y[19] = 1e6;
        let mut mask = [true; 32];
        mask[19] = false;
        let fit = fit_gaussian_values(&y, &mask).unwrap();
        assert_relative_eq!(fit.center, 16.0, max_relative = 1e-8);
    }

    #[test]
    fn too_few_points_is_an_input_error() {
        let mut y = vec![0.0; 32];
        y[3] = 5.0;
        y[4] = 8.0;
        assert!(matches!(
            fit_gaussian_values(&y, &[true; 32]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn histogram_csv_round_trip() {
        let mut mask = vec![true; 6];
        mask[4] = false;
        let h = PixelHistogram::new(vec![1, 2, 3, 4, 0, 6], mask, -0.046, 60.0, 42).unwrap();
        let text = h.to_csv();
        assert!(text.starts_with("# alpha_p_deg = -0.046\n# seed = 42\n# duration_s = 60\n"));
        assert_eq!(PixelHistogram::from_csv(&text).unwrap(), h);
    }

    #[test]
    fn calibration_steps_and_inverse() {
        let cal = PixelCalibration::new(16.0, 4.07e5, 100e-6, 0.3 * 808e-9 / (2.0 * PI), 808e-9);
        let a = cal.angle_from_pixel(16.0);
        assert_relative_eq!(cal.pixel_from_angle(a), 16.0, epsilon = 1e-12);
        let step = cal.angle_from_pixel(17.0) - a;
        // pitch/f = 1/3000 rad per pixel, divided by cos α
        assert_relative_eq!(
            step,
            (1.0 / 3000.0 / a.to_radians().cos()).to_degrees(),
            max_relative = 1e-3
        );
        assert_relative_eq!(cal.degrees_per_pixel(16.5), step, max_relative = 1e-6);
    }

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (0..9)
            .map(|i| {
                let x = -0.092 + 0.023 * i as f64;
                (x, 3.0 + 2.0 * x, 0.01)
            })
            .collect();
        let fit = fit_linear(&pts).unwrap();
        assert_relative_eq!(fit.intercept, 3.0, max_relative = 1e-13);
        assert_relative_eq!(fit.slope, 2.0, max_relative = 1e-12);
        assert!(fit.chi2 < 1e-20);
    }

    #[test]
    fn line_fit_input_errors() {
        assert!(fit_linear(&[(0.0, 1.0, 1.0), (1.0, 2.0, 1.0)]).is_err());
        assert!(fit_linear(&[(1.0, 1.0, 1.0), (1.0, 2.0, 1.0), (1.0, 3.0, 1.0)]).is_err());
        assert!(fit_linear(&[(0.0, 1.0, 1.0), (1.0, 2.0, 0.0), (2.0, 3.0, 1.0)]).is_err());
    }

    #[test]
    fn correlation_of_affine_copy_is_one() {
        let a = [1.0, 4.0, 9.0, 3.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_relative_eq!(correlation(&a, &b, &[true; 4]), 1.0, max_relative = 1e-14);
    }
}
