//! Empirical harness for the large-deviation lemmas: supermartingale-style
//! exponential-moment and conditional-mean gates with the induced tail decay,
//! density of bad pairs in a series, and return/excursion tails of a biased
//! reflected walk.
//!
//! All gates are existence-style: they check signs, monotonicity, and fit
//! quality (R²), never absolute constants. Conditional expectations are
//! estimated by binning on a coarse history feature (the current value);
//! bins with fewer than 100 samples are excluded.

use crate::stats::{linear_fit, tail_fit, TailFit};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LdError {
    #[error("no history bin reached {need} effective draws (max {got})")]
    InsufficientSamples { need: usize, got: usize },
    #[error("walk drift beyond the return set is not negative (bias {0})")]
    ZeroDrift(f64),
    #[error("tail fit impossible: fewer than 3 positive-survival thresholds")]
    DegenerateTail,
}

/// Per-bin conditional moment estimates for the supermartingale gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinReport {
    pub center: f64,
    pub count: usize,
    pub cond_mean: f64,
    pub cond_mean_stderr: f64,
    /// Conditional exponential moments E[exp(s (xi - c2))] per grid s.
    pub exp_moments: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartReport {
    pub bins: Vec<BinReport>,
    /// Largest |s| in the grid with all-bin conditional exponential moment
    /// below the bound (condition (a)); 0 when none passes.
    pub max_passing_s: f64,
    pub cond_exp_moment_ok: bool,
    /// Condition (b): every used bin's conditional mean is at most
    /// c2_hat + 3 standard errors.
    pub cond_mean_ok: bool,
    /// Decay of P{sum_{j<=N} xi_j >= (c2_hat + eps) N} across the N grid.
    pub tail: TailFit,
    pub tail_ok: bool,
}

/// Gate the two conditions of the martingale lemma on replica sequences and
/// measure the induced exponential tail decay.
///
/// `sequences` holds independent replica series of equal length. Conditional
/// moments of xi_{j+1} are estimated in bins of the history feature xi_j;
/// the exponential-moment bound `c1_bound` plays the lemma's C1, `c2_hat`
/// its C2, and `eps` the excess rate for the tail measurement over `n_grid`.
pub fn supermartingale_gate(
    sequences: &[Vec<f64>],
    s_grid: &[f64],
    c1_bound: f64,
    c2_hat: f64,
    eps: f64,
    n_grid: &[usize],
) -> Result<MartReport, LdError> {
    assert!(!sequences.is_empty() && !s_grid.is_empty());
    let len = sequences[0].len();
    assert!(sequences.iter().all(|s| s.len() == len));
    assert!(n_grid.iter().all(|&n| n <= len));

    // Bin consecutive pairs (xi_j -> xi_{j+1}) on the current value.
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for s in sequences {
        for &x in s {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    let n_bins = 16usize;
    let width = ((hi - lo) / n_bins as f64).max(1e-300);
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for s in sequences {
        for w in s.windows(2) {
            let b = (((w[0] - lo) / width) as usize).min(n_bins - 1);
            members[b].push(w[1]);
        }
    }
    let max_count = members.iter().map(|m| m.len()).max().unwrap_or(0);
    if max_count < 1000 {
        return Err(LdError::InsufficientSamples {
            need: 1000,
            got: max_count,
        });
    }

    let mut bins = Vec::new();
    let mut cond_mean_ok = true;
    let mut passing = vec![true; s_grid.len()];
    for (b, xs) in members.iter().enumerate() {
        if xs.len() < 100 {
            continue;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let stderr = (var / n).sqrt();
        let exp_moments: Vec<f64> = s_grid
            .iter()
            .map(|&s| xs.iter().map(|&x| (s * (x - c2_hat)).exp()).sum::<f64>() / n)
            .collect();
        if mean > c2_hat + 3.0 * stderr {
            cond_mean_ok = false;
        }
        for (k, &m) in exp_moments.iter().enumerate() {
            if !(m.is_finite() && m <= c1_bound) {
                passing[k] = false;
            }
        }
        bins.push(BinReport {
            center: lo + (b as f64 + 0.5) * width,
            count: xs.len(),
            cond_mean: mean,
            cond_mean_stderr: stderr,
            exp_moments,
        });
    }
    let max_passing_s = s_grid
        .iter()
        .enumerate()
        .filter(|&(k, _)| passing[k])
        .map(|(_, &s)| s.abs())
        .fold(0.0, f64::max);
    let cond_exp_moment_ok = max_passing_s > 0.0;

    // Tail of the partial sums above the (c2 + eps) N line.
    let mut ns = Vec::new();
    let mut ls = Vec::new();
    for &n in n_grid {
        let hits = sequences
            .iter()
            .filter(|s| s[..n].iter().sum::<f64>() >= (c2_hat + eps) * n as f64)
            .count();
        if hits > 0 {
            ns.push(n as f64);
            ls.push((hits as f64 / sequences.len() as f64).ln());
        }
    }
    if ns.len() < 3 {
        return Err(LdError::DegenerateTail);
    }
    let (slope, intercept, r2) = linear_fit(&ns, &ls);
    let tail = TailFit {
        thresholds: ns,
        log_survival: ls,
        slope,
        intercept,
        r2,
    };
    let tail_ok = tail.slope < 0.0 && tail.r2 >= 0.9;
    Ok(MartReport {
        bins,
        max_passing_s,
        cond_exp_moment_ok,
        cond_mean_ok,
        tail,
        tail_ok,
    })
}

/// Fraction of horizons n <= N spoiled by a bad pair: some j < n with
/// xi_j > R e^{eps_rate (n - j)}, equivalently xi_j e^{eps j} > R e^{eps n}.
/// A running maximum of xi_j e^{eps j} makes this one pass over the series.
pub fn bad_pair_fraction(xi: &[f64], r_thresh: f64, eps_rate: f64, n_horizon: usize) -> f64 {
    assert!(xi.len() >= n_horizon && n_horizon > 0);
    let mut running = f64::MIN;
    let mut bad = 0usize;
    for n in 1..=n_horizon {
        // running = max_{j < n} xi_j e^{eps j}  (j is 1-based series index)
        let j = n - 1;
        if j >= 1 {
            running = running.max(xi[j - 1] * (eps_rate * j as f64).exp());
        }
        if j >= 1 && running > r_thresh * (eps_rate * n as f64).exp() {
            bad += 1;
        }
    }
    bad as f64 / n_horizon as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BadPairReport {
    pub fractions: Vec<f64>,
    /// ln P{fraction > tol} against the horizon grid.
    pub decay: Option<TailFit>,
}

/// Bad-pair fractions per replica at the full horizon, plus the decay of
/// P{fraction > tol} across the horizon grid.
pub fn bad_pair_density(
    replicas: &[Vec<f64>],
    r_thresh: f64,
    eps_rate: f64,
    horizons: &[usize],
    tol: f64,
) -> BadPairReport {
    let full = *horizons.iter().max().unwrap();
    let fractions: Vec<f64> = replicas
        .iter()
        .map(|xi| bad_pair_fraction(xi, r_thresh, eps_rate, full))
        .collect();
    let mut ns = Vec::new();
    let mut ls = Vec::new();
    for &n in horizons {
        let hits = replicas
            .iter()
            .filter(|xi| bad_pair_fraction(xi, r_thresh, eps_rate, n) > tol)
            .count();
        if hits > 0 {
            ns.push(n as f64);
            ls.push((hits as f64 / replicas.len() as f64).ln());
        }
    }
    let decay = if ns.len() >= 3 {
        let (slope, intercept, r2) = linear_fit(&ns, &ls);
        Some(TailFit {
            thresholds: ns,
            log_survival: ls,
            slope,
            intercept,
            r2,
        })
    } else {
        None
    };
    BadPairReport { fractions, decay }
}

/// Synthetic walk for the return-time lemma: +/-1 steps with downward bias
/// `bias` (P{-1} - P{+1}) outside the return set {x <= m}, reflected at 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WalkSpec {
    pub bias: f64,
    pub m: i64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReturnWalkReport {
    pub return_time_tail: TailFit,
    pub excursion_max_tail: TailFit,
    pub both_ok: bool,
    /// Fraction of time spent at or below M, per entry of `m_grid`
    /// (density of good times; nondecreasing in M).
    pub m_grid: Vec<f64>,
    pub good_time_fraction: Vec<f64>,
}

/// Simulate the reflected biased walk over independent replicas, extract
/// inter-return times and excursion maxima, and fit their log-survival
/// tails. Errors when the drift precondition fails.
pub fn return_walk_tails(
    spec: &WalkSpec,
    replicas: usize,
    rng_seed: u64,
    m_grid: &[f64],
) -> Result<ReturnWalkReport, LdError> {
    if spec.bias <= 0.0 {
        return Err(LdError::ZeroDrift(spec.bias));
    }
    let mut times = Vec::new();
    let mut maxes = Vec::new();
    let mut below: Vec<usize> = vec![0; m_grid.len()];
    let mut total = 0usize;
    for r in 0..replicas as u64 {
        let mut rng = crate::rng::CounterRng::from_words(&[0x6c64_2d77_616c_6b, rng_seed, r]);
        let mut x: i64 = spec.m.max(0);
        let mut t_since = 0u64;
        let mut exc_max = x;
        for _ in 0..spec.steps {
            let p_down = 0.5 + 0.5 * spec.bias;
            let step = if rng.uniform() < p_down { -1 } else { 1 };
            x = (x + step).max(0);
            t_since += 1;
            exc_max = exc_max.max(x);
            total += 1;
            for (k, &mg) in m_grid.iter().enumerate() {
                if (x as f64) <= mg {
                    below[k] += 1;
                }
            }
            if x <= spec.m {
                times.push(t_since as f64);
                maxes.push(exc_max as f64);
                t_since = 0;
                exc_max = x;
            }
        }
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let x_max = maxes.iter().cloned().fold(0.0, f64::max);
    let t_thresholds: Vec<f64> = (1..=12).map(|k| t_max * k as f64 / 13.0).collect();
    let x_thresholds: Vec<f64> = (1..=12).map(|k| x_max * k as f64 / 13.0).collect();
    let return_time_tail = tail_fit(&times, &t_thresholds).ok_or(LdError::DegenerateTail)?;
    let excursion_max_tail = tail_fit(&maxes, &x_thresholds).ok_or(LdError::DegenerateTail)?;
    let both_ok = return_time_tail.slope < 0.0
        && return_time_tail.r2 >= 0.9
        && excursion_max_tail.slope < 0.0
        && excursion_max_tail.r2 >= 0.9;
    let good_time_fraction: Vec<f64> =
        below.iter().map(|&c| c as f64 / total.max(1) as f64).collect();
    Ok(ReturnWalkReport {
        return_time_tail,
        excursion_max_tail,
        both_ok,
        m_grid: m_grid.to_vec(),
        good_time_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn normal_replicas(count: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..count as u64)
            .map(|r| {
                let mut rng = CounterRng::from_words(&[0x6c64_2d74_6573_74, seed, r]);
                (0..len).map(|_| rng.normal()).collect()
            })
            .collect()
    }

    #[test]
    fn normal_increments_pass_with_cramer_rate() {
        let eps = 0.15;
        let seqs = normal_replicas(20_000, 400, 1);
        let rep = supermartingale_gate(
            &seqs,
            &[0.1, 0.25, 0.5, 1.0],
            20.0,
            0.0,
            eps,
            &[100, 150, 200, 250, 300, 350, 400],
        )
        .unwrap();
        assert!(rep.cond_mean_ok);
        assert!(rep.cond_exp_moment_ok && rep.max_passing_s >= 0.5);
        assert!(rep.tail_ok, "slope {} r2 {}", rep.tail.slope, rep.tail.r2);
        // Cramér rate for standard normal increments: -eps^2 / 2.
        let want = -eps * eps / 2.0;
        assert!(
            (rep.tail.slope - want).abs() <= 0.2 * want.abs(),
            "slope {} want {}",
            rep.tail.slope,
            want
        );
    }

    #[test]
    fn constant_ones_fail_mean_condition() {
        let seqs: Vec<Vec<f64>> = (0..64).map(|_| vec![1.0; 64]).collect();
        let rep = supermartingale_gate(&seqs, &[0.1], 100.0, 0.5, 0.1, &[16, 32, 48, 64]).unwrap();
        assert!(!rep.cond_mean_ok);
    }

    #[test]
    fn insufficient_samples_detected() {
        let seqs = normal_replicas(4, 8, 2);
        assert!(matches!(
            supermartingale_gate(&seqs, &[0.1], 10.0, 0.0, 0.1, &[4, 6, 8]),
            Err(LdError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn bounded_series_has_no_bad_pairs() {
        let xi = vec![0.5; 500];
        assert_eq!(bad_pair_fraction(&xi, 1.0, 0.05, 500), 0.0);
    }

    #[test]
    fn exponential_series_rarely_bad_and_monotone_in_r() {
        let mut worse = 1.0;
        let replicas: Vec<Vec<f64>> = (0..100u64)
            .map(|r| {
                let mut rng = CounterRng::from_words(&[0x6261_6470, r]);
                (0..400).map(|_| -rng.uniform().max(1e-300).ln()).collect()
            })
            .collect();
        for &r_thresh in &[30.0, 60.0, 120.0] {
            let rep = bad_pair_density(&replicas, r_thresh, 0.05, &[100, 200, 300, 400], 0.05);
            let mean: f64 = rep.fractions.iter().sum::<f64>() / rep.fractions.len() as f64;
            assert!(mean <= worse + 1e-12, "fraction not monotone in R");
            worse = mean;
            if r_thresh >= 60.0 {
                assert!(mean < 0.05, "R {} mean fraction {}", r_thresh, mean);
            }
        }
    }

    #[test]
    fn biased_walk_tails_exponential() {
        let spec = WalkSpec {
            bias: 0.25,
            m: 0,
            steps: 40_000,
        };
        let rep = return_walk_tails(&spec, 8, 7, &[1.0, 3.0, 10.0, 30.0]).unwrap();
        assert!(rep.both_ok, "t: {:?} x: {:?}", rep.return_time_tail.slope, rep.excursion_max_tail.slope);
        // Density of good times grows with M.
        for w in rep.good_time_fraction.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(*rep.good_time_fraction.last().unwrap() > 0.95);
    }

    #[test]
    fn zero_drift_walk_rejected() {
        let spec = WalkSpec {
            bias: 0.0,
            m: 0,
            steps: 100,
        };
        assert!(matches!(
            return_walk_tails(&spec, 2, 1, &[1.0]),
            Err(LdError::ZeroDrift(_))
        ));
    }
}
