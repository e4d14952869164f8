//! Evaluation metrics over per-round accuracy series.
//!
//! * Windowed evaluation smooths the raw series with a trailing window.
//! * Intransigence compares a dynamic-participation run against its
//!   static-participation twin (positive means participation dynamics
//!   cost accuracy).
//! * Instability measures oscillation as the mean absolute deviation from
//!   an ordinary-least-squares line fit over a window, so that steady
//!   progress does not count as instability.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A per-round scalar series (typically test accuracy in percent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSeries {
    pub label: String,
    pub values: Vec<f64>,
}

impl EvalSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        EvalSeries {
            label: label.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Statistic applied to the trailing window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStat {
    Mean,
    /// Population variance (normalized by the window length).
    Variance,
}

fn check_series(values: &[f64], context: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Degenerate(format!("{context}: empty series")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("{context}: non-finite value")));
    }
    Ok(())
}

/// Statistic of the trailing window `values[t + 1 - omega ..= t]`. The
/// window must fit entirely inside the series: `omega >= 1` and
/// `t >= omega - 1`.
pub fn windowed_eval(values: &[f64], omega: usize, stat: WindowStat, t: usize) -> Result<f64> {
    check_series(values, "windowed_eval")?;
    if omega == 0 {
        return Err(Error::InvalidArgument("window size must be positive".into()));
    }
    if t >= values.len() {
        return Err(Error::InvalidArgument(format!(
            "round {t} out of bounds for series of length {}",
            values.len()
        )));
    }
    if t + 1 < omega {
        return Err(Error::InvalidArgument(format!(
            "window of size {omega} does not fit at round {t}"
        )));
    }
    let window = &values[t + 1 - omega..=t];
    let mean = window.iter().sum::<f64>() / omega as f64;
    match stat {
        WindowStat::Mean => Ok(mean),
        WindowStat::Variance => {
            Ok(window.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / omega as f64)
        }
    }
}

/// Mean of `static_ref - dynamic` over rounds: how much accuracy the
/// dynamic run gave up against its static twin. Antisymmetric in its
/// arguments.
pub fn intransigence(dynamic: &[f64], static_ref: &[f64]) -> Result<f64> {
    check_series(dynamic, "intransigence")?;
    check_series(static_ref, "intransigence")?;
    if dynamic.len() != static_ref.len() {
        return Err(Error::shape(
            "intransigence series",
            format!("{}", static_ref.len()),
            format!("{}", dynamic.len()),
        ));
    }
    let sum: f64 = static_ref
        .iter()
        .zip(dynamic)
        .map(|(s, d)| s - d)
        .sum();
    Ok(sum / dynamic.len() as f64)
}

/// OLS slope and intercept for `y` against `x = 0..n`.
fn ols_line(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean_x = (y.len() - 1) as f64 / 2.0;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxx += dx * dx;
        sxy += dx * (v - mean_y);
    }
    let slope = sxy / sxx;
    (slope, mean_y - slope * mean_x)
}

/// Mean absolute deviation from the OLS line fit over `[t_s1, t_s2)`.
/// Requires at least two rounds in the window.
pub fn instability(values: &[f64], t_s1: usize, t_s2: usize) -> Result<f64> {
    check_series(values, "instability")?;
    if t_s2 > values.len() || t_s1 >= t_s2 {
        return Err(Error::InvalidArgument(format!(
            "window [{t_s1}, {t_s2}) invalid for series of length {}",
            values.len()
        )));
    }
    let window = &values[t_s1..t_s2];
    if window.len() < 2 {
        return Err(Error::Degenerate(
            "instability needs a window of at least 2 rounds".into(),
        ));
    }
    let (slope, intercept) = ols_line(window);
    let sum: f64 = window
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - (slope * i as f64 + intercept)).abs())
        .sum();
    Ok(sum / window.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_of_one_returns_the_point() {
        let v = [5.0, 7.0, 9.0];
        for t in 0..3 {
            assert_eq!(windowed_eval(&v, 1, WindowStat::Mean, t).unwrap(), v[t]);
            assert_eq!(windowed_eval(&v, 1, WindowStat::Variance, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_series_statistics() {
        let v = [3.0; 10];
        assert_eq!(windowed_eval(&v, 5, WindowStat::Mean, 9).unwrap(), 3.0);
        assert_eq!(windowed_eval(&v, 5, WindowStat::Variance, 9).unwrap(), 0.0);
    }

    #[test]
    fn window_mean_matches_hand_computation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(windowed_eval(&v, 5, WindowStat::Mean, 4).unwrap(), 3.0);
        assert_eq!(windowed_eval(&v, 2, WindowStat::Mean, 1).unwrap(), 1.5);
        // Population variance of {4, 5} is 0.25.
        assert_eq!(windowed_eval(&v, 2, WindowStat::Variance, 4).unwrap(), 0.25);
    }

    #[test]
    fn window_bounds_are_enforced() {
        let v = [1.0, 2.0, 3.0];
        assert!(windowed_eval(&v, 0, WindowStat::Mean, 2).is_err());
        assert!(windowed_eval(&v, 4, WindowStat::Mean, 2).is_err());
        assert!(windowed_eval(&v, 2, WindowStat::Mean, 0).is_err());
        assert!(windowed_eval(&v, 1, WindowStat::Mean, 3).is_err());
        assert!(windowed_eval(&[], 1, WindowStat::Mean, 0).is_err());
        assert!(windowed_eval(&[f64::NAN], 1, WindowStat::Mean, 0).is_err());
    }

    #[test]
    fn intransigence_basics() {
        let a = [10.0, 20.0];
        let b = [8.0, 16.0];
        assert_eq!(intransigence(&a, &a).unwrap(), 0.0);
        assert_eq!(intransigence(&b, &a).unwrap(), 3.0);
        assert_eq!(intransigence(&a, &b).unwrap(), -3.0);
        assert!(intransigence(&a, &b[..1]).is_err());
        assert!(intransigence(&[], &[]).is_err());
    }

    #[test]
    fn intransigence_is_antisymmetric() {
        let a = [1.0, 5.0, 2.0, 8.0, 3.5];
        let b = [0.5, 4.0, 7.0, 1.0, 2.0];
        let ab = intransigence(&a, &b).unwrap();
        let ba = intransigence(&b, &a).unwrap();
        assert_eq!(ab, -ba);
    }

    #[test]
    fn instability_of_lines_and_constants_is_zero() {
        let line: Vec<f64> = (0..20).map(|i| 2.5 * i as f64 - 7.0).collect();
        assert!(instability(&line, 0, 20).unwrap() < 1e-9);
        let flat = [4.0; 12];
        assert!(instability(&flat, 0, 12).unwrap() < 1e-15);
    }

    #[test]
    fn instability_matches_hand_ols() {
        // y = [0,2,0,2] on x = 0..4: slope 0.4, intercept 0.4, residuals
        // |y - (0.4x + 0.4)| = [0.4, 1.2, 1.2, 0.4], mean 0.8.
        let v = [0.0, 2.0, 0.0, 2.0];
        let id = instability(&v, 0, 4).unwrap();
        assert!((id - 0.8).abs() < 1e-12, "{id}");
    }

    #[test]
    fn instability_is_translation_invariant_and_homogeneous() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let base = instability(&v, 0, 8).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + 123.0).collect();
        assert!((instability(&shifted, 0, 8).unwrap() - base).abs() < 1e-9);
        let scaled: Vec<f64> = v.iter().map(|x| x * -2.0).collect();
        assert!((instability(&scaled, 0, 8).unwrap() - 2.0 * base).abs() < 1e-9);
    }

    #[test]
    fn instability_windows() {
        let v = [1.0, 2.0, 100.0, 3.0, 4.0];
        // A sub-window that is an exact line scores zero.
        assert!(instability(&v, 3, 5).unwrap() < 1e-12);
        assert!(instability(&v, 0, 6).is_err());
        assert!(instability(&v, 2, 2).is_err());
        assert!(instability(&v, 2, 3).is_err());
        assert!(instability(&v, 4, 3).is_err());
    }
}
