//! Small shared statistics helpers: least squares, moments, survival fits.

use serde::{Deserialize, Serialize};

/// Ordinary least squares y = a x + b; returns (slope, intercept, r2).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    assert!(n >= 2.0);
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub stderr: f64,
}

pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in xs {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let sd = m2.sqrt();
    Moments {
        mean,
        variance: m2,
        skewness: if sd > 0.0 { m3 / (sd * sd * sd) } else { 0.0 },
        excess_kurtosis: if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 },
        stderr: sd / n.sqrt(),
    }
}

/// Empirical log-survival fit over the given thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailFit {
    pub thresholds: Vec<f64>,
    pub log_survival: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fit ln P{X > T} against T on thresholds where the survival is positive.
pub fn tail_fit(samples: &[f64], thresholds: &[f64]) -> Option<TailFit> {
    let n = samples.len() as f64;
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for &t in thresholds {
        let count = samples.iter().filter(|&&x| x > t).count();
        if count > 0 {
            ts.push(t);
            ls.push((count as f64 / n).ln());
        }
    }
    if ts.len() < 3 {
        return None;
    }
    let (slope, intercept, r2) = linear_fit(&ts, &ls);
    Some(TailFit {
        thresholds: ts,
        log_survival: ls,
        slope,
        intercept,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn fit_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (a, b, r2) = linear_fit(&xs, &ys);
        assert!((a - 2.0).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments_of_normal() {
        let mut rng = CounterRng::from_words(&[77]);
        let xs: Vec<f64> = (0..100_000).map(|_| 2.0 + 3.0 * rng.normal()).collect();
        let m = moments(&xs);
        assert!((m.mean - 2.0).abs() < 0.05);
        assert!((m.variance - 9.0).abs() < 0.3);
        assert!(m.skewness.abs() < 0.05);
        assert!(m.excess_kurtosis.abs() < 0.1);
    }

    #[test]
    fn exponential_tail_slope() {
        let mut rng = CounterRng::from_words(&[78]);
        let xs: Vec<f64> = (0..200_000).map(|_| -rng.uniform().ln() / 0.5).collect();
        let ths: Vec<f64> = (0..15).map(|i| i as f64).collect();
        let fit = tail_fit(&xs, &ths).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.02, "{}", fit.slope);
        assert!(fit.r2 > 0.99);
    }
}
