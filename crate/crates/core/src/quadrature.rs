//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! The integrand is fallible so that domain errors from the physics layer
//! propagate instead of being folded into the estimate. Nested integrals are
//! built by calling [`integrate`] from inside another integrand.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1] (symmetric); odd indices are the Gauss-7 nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub relative: f64,
    pub absolute: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            relative: 1e-4,
            absolute: 1e-12,
            max_subdivisions: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F>(f: &mut F, a: f64, b: f64) -> Result<Panel>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx)? + f(center + dx)?;
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok(Panel { a, b, value, error })
}

/// Integrate `f` over `[a, b]` until the summed panel error is below
/// `max(absolute, relative·|value|)`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }
    let first = kronrod15(&mut f, a, b)?;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 0;
    while error > tol.absolute.max(tol.relative * value.abs()) {
        if subdivisions >= tol.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: value,
                residual: error,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        let left = kronrod15(&mut f, worst.a, mid)?;
        let right = kronrod15(&mut f, mid, worst.b)?;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
    }
    // Re-sum to shed the drift from incremental updates.
    let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Ok(Integral {
        value,
        error,
        subdivisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact_on_one_panel() {
        let r = integrate(|x| Ok(x.powi(6) - 2.0 * x * x + 1.0), -1.0, 2.0, Tolerance::default()).unwrap();
        let exact = (2f64.powi(7) + 1.0) / 7.0 - 2.0 * (8.0 + 1.0) / 3.0 + 3.0;
        assert!((r.value - exact).abs() < 1e-12);
        assert_eq!(r.subdivisions, 0);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate(|x: f64| Ok((-x * x).exp()), -8.0, 8.0, Tolerance::default()).unwrap();
        assert!((r.value - PI.sqrt()).abs() / PI.sqrt() < 1e-8);
    }

    #[test]
    fn oscillatory_sinc_squared() {
        // ∫ sinc²(x) over the real line is π; truncation at ±200 leaves ≈ 1/200.
        let tol = Tolerance {
            relative: 1e-8,
            absolute: 1e-14,
            max_subdivisions: 2000,
        };
        let r = integrate(
            |x: f64| Ok(if x == 0.0 { 1.0 } else { (x.sin() / x).powi(2) }),
            -200.0,
            200.0,
            tol,
        )
        .unwrap();
        assert!((r.value - (PI - 1.0 / 200.0)).abs() < 2e-4, "{}", r.value);
    }

    #[test]
    fn refinement_failure_is_an_error_with_residual() {
        let tol = Tolerance {
            relative: 1e-14,
            absolute: 0.0,
            max_subdivisions: 3,
        };
        let err = integrate(|x: f64| Ok(x.abs().sqrt()), -1.0, 1.0, tol).unwrap_err();
        match err {
            Error::Quadrature {
                residual, subdivisions, ..
            } => {
                assert!(residual > 0.0);
                assert_eq!(subdivisions, 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn integrand_errors_propagate() {
        let r = integrate(
            |x| {
                if x > 0.5 {
                    Err(Error::InvalidInput("boom".into()))
                } else {
                    Ok(1.0)
                }
            },
            0.0,
            1.0,
            Tolerance::default(),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }
}
