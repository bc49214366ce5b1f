//! Time-series tools for sharpness trajectories: standardization, the power
//! spectrum `P(ω) = |F(ω)|²` with `F(ω) = (1/T) Σ_t x(t) e^{−2πiωt/T}`,
//! period detection and band counting.

use std::collections::HashSet;
use std::io::{self, Write};

use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Subtracts the mean and divides by the population standard deviation.
pub fn standardize_series<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.len() < 2 {
        return Err(Error::invalid("series", format!("need at least 2 samples, got {}", x.len())));
    }
    let n = T::lit(x.len() as f64);
    let mean = x.iter().fold(T::zero(), |a, &b| a + b) / n;
    let var = x.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean)) / n;
    if !(var > T::zero()) {
        return Err(Error::ZeroVariance);
    }
    let sd = var.sqrt();
    Ok(x.iter().map(|&v| (v - mean) / sd).collect())
}

/// Power at `ω = 0..T−1` of the raw input. `Σ_ω P(ω) = (1/T) Σ_t x(t)²`.
pub fn power_spectrum<T: Scalar + FftNum>(x: &[T]) -> Vec<T> {
    if x.is_empty() {
        return Vec::new();
    }
    let len = x.len();
    let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let inv = T::one() / T::lit(len as f64);
    buf.iter()
        .map(|c| {
            let f = *c * inv;
            f.re * f.re + f.im * f.im
        })
        .collect()
}

/// [`power_spectrum`] of the standardized series; sums to 1 and has `P(0) = 0`.
pub fn power_spectrum_standardized<T: Scalar + FftNum>(x: &[T]) -> Result<Vec<T>> {
    Ok(power_spectrum(&standardize_series(x)?))
}

pub fn write_spectrum_csv<T: Scalar, W: Write>(power: &[T], mut out: W) -> io::Result<()> {
    writeln!(out, "omega,power")?;
    for (w, p) in power.iter().enumerate() {
        writeln!(out, "{w},{p}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Periodic(usize),
    Aperiodic,
}

impl Period {
    pub fn value(self) -> Option<usize> {
        match self {
            Period::Periodic(p) => Some(p),
            Period::Aperiodic => None,
        }
    }
}

/// Smallest `p ≤ max_period` with `|x(t+p) − x(t)| ≤ tol·(1 + |x(t)|)` over the
/// final half of the series.
pub fn detect_period<T: Scalar>(x: &[T], max_period: usize, tol: T) -> Period {
    detect_period_in_tail(x, max_period, tol, x.len() / 2)
}

/// As [`detect_period`] over the last `tail` samples (clamped to the series).
/// A candidate `p` must leave at least `p` comparisons in the tail.
pub fn detect_period_in_tail<T: Scalar>(x: &[T], max_period: usize, tol: T, tail: usize) -> Period {
    let tail = tail.min(x.len());
    let window = &x[x.len() - tail..];
    for p in 1..=max_period {
        if 2 * p > window.len() {
            break;
        }
        let ok = window
            .iter()
            .zip(&window[p..])
            .all(|(&a, &b)| (b - a).abs() <= tol * (T::one() + a.abs()));
        if ok {
            return Period::Periodic(p);
        }
    }
    Period::Aperiodic
}

/// Number of occupied bins of width `bin_width` (bins aligned at 0).
pub fn band_count<T: Scalar>(values: &[T], bin_width: T) -> usize {
    assert!(bin_width > T::zero(), "bin_width must be positive");
    values
        .iter()
        .filter(|v| v.is_finite())
        .map(|&v| (v / bin_width).floor().as_f64() as i64)
        .collect::<HashSet<_>>()
        .len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize_series(&[-1.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(standardize_series(&[0.0, 2.0]).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(standardize_series(&[3.0, 3.0, 3.0]), Err(Error::ZeroVariance));
        assert!(standardize_series(&[1.0]).is_err());
    }

    #[test]
    fn pure_tone_concentrates_in_two_bins() {
        let t = 64;
        let x: Vec<f64> = (0..t).map(|i| (2.0 * PI * i as f64 / t as f64).cos()).collect();
        let p = power_spectrum_standardized(&x).unwrap();
        // standardized cosine has unit variance split evenly between ±1
        assert!((p[1] - 0.5).abs() < 1e-12);
        assert!((p[63] - 0.5).abs() < 1e-12);
        for (w, v) in p.iter().enumerate() {
            if w != 1 && w != 63 {
                assert!(*v <= 1e-12, "bin {w} = {v}");
            }
        }
    }

    #[test]
    fn nyquist_tone() {
        let x: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let p = power_spectrum(&x);
        assert!((p[16] - 1.0).abs() < 1e-12);
        assert!(p.iter().enumerate().all(|(w, v)| w == 16 || *v < 1e-12));
    }

    #[test]
    fn standardized_spectrum_sums_to_one() {
        let x: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 113) as f64 * 0.37 + (i as f64).sin()).collect();
        let p = power_spectrum_standardized(&x).unwrap();
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(p[0] <= 1e-12);
    }

    #[test]
    fn period_examples() {
        let ab: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { 2.0 }).collect();
        assert_eq!(detect_period(&ab, 8, 1e-6), Period::Periodic(2));
        assert_eq!(detect_period(&[5.0; 40], 8, 1e-6), Period::Periodic(1));
        let p3: Vec<f64> = (0..60).map(|i| [1.0, 4.0, 9.0][i % 3]).collect();
        assert_eq!(detect_period(&p3, 8, 1e-6), Period::Periodic(3));
        assert_eq!(detect_period(&p3, 2, 1e-6), Period::Aperiodic);
    }

    #[test]
    fn period_looks_only_at_tail() {
        let mut x: Vec<f64> = (0..50).map(|i| i as f64).collect();
        x.extend(std::iter::repeat(7.0).take(50));
        assert_eq!(detect_period(&x, 4, 1e-9), Period::Periodic(1));
        assert_eq!(detect_period_in_tail(&x, 4, 1e-9, 100), Period::Aperiodic);
    }

    #[test]
    fn band_count_examples() {
        assert_eq!(band_count(&[1.0, 3.0, 1.0, 3.0], 0.1), 2);
        assert_eq!(band_count(&[1.01, 1.02, 1.03], 0.1), 1);
        assert_eq!(band_count::<f64>(&[], 0.1), 0);
    }
}
