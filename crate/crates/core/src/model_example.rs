//! The doubling-map random dynamical system with binary-indexed shifts, and
//! the cut-off interval construction built on it. Everything here is exactly
//! representable (dyadic points, rational endpoints), which makes this module
//! the quantitative trust anchor for the torus pipeline.
//!
//! Two cut conventions coexist deliberately:
//! * `build_In` performs the self-similar preimage surgery: each surviving
//!   interval loses the bottom eps/2 fraction of each of its halves. This is
//!   exactly self-similar, so total length (1-eps)^n and the dimension
//!   ln 2 / ln(2/(1-eps)) hold exactly.
//! * `mu_sample` draws from the dynamically aligned cut, in which the bottom
//!   eps of the *image* segment is removed at every stage. That version is
//!   the one whose coding bias produces the eps/(2(1-eps)) displacement
//!   drift; uniform samples from the self-similar set have unbiased codes
//!   and drift zero. The two constructions coincide only as eps -> 0.

use crate::rng::{self, CounterRng};
use crate::stats::{linear_fit, moments};
use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

pub type Rational = Ratio<num_bigint::BigInt>;

/// Exact dyadic point num / 2^bits in [0, 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dyadic {
    pub num: BigUint,
    pub bits: usize,
}

impl Dyadic {
    pub fn zero() -> Self {
        Dyadic {
            num: BigUint::zero(),
            bits: 1,
        }
    }

    /// Exact conversion; every finite f64 in [0,1) is dyadic.
    pub fn from_f64(x: f64) -> Self {
        assert!((0.0..1.0).contains(&x), "need x in [0,1), got {x}");
        if x == 0.0 {
            return Dyadic::zero();
        }
        let raw = x.to_bits();
        let exp = ((raw >> 52) & 0x7ff) as i64;
        let mantissa = raw & ((1u64 << 52) - 1);
        let (m, e) = if exp == 0 {
            (mantissa, -1074i64)
        } else {
            (mantissa | (1u64 << 52), exp - 1075)
        };
        // x = m * 2^e with e < 0 here.
        let bits = (-e) as usize;
        Dyadic {
            num: BigUint::from(m),
            bits,
        }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut num = BigUint::zero();
        for &b in bits {
            num = (num << 1) + BigUint::from(b);
        }
        Dyadic {
            num,
            bits: bits.len().max(1),
        }
    }

    /// Binary digit s_k (the digit worth 2^-(k+1)); zero beyond stored bits.
    pub fn digit(&self, k: usize) -> u8 {
        if k >= self.bits {
            return 0;
        }
        if self.num.bit((self.bits - 1 - k) as u64) {
            1
        } else {
            0
        }
    }

    pub fn to_f64(&self) -> f64 {
        // Take the top 64 bits; enough for statistics.
        let shift = self.bits.saturating_sub(64);
        let top: BigUint = &self.num >> shift;
        top.to_f64().unwrap_or(0.0) / ((self.bits - shift) as f64).exp2()
    }
}

/// Base-2 coding s_0 ... s_n of x under the doubling map.
pub fn binary_code(x: &Dyadic, n: usize) -> Vec<u8> {
    (0..=n).map(|k| x.digit(k)).collect()
}

/// Fraction of ones eta_n(x) / n among s_0 ... s_n.
pub fn eta_frequency(x: &Dyadic, n: usize) -> f64 {
    assert!(n >= 1);
    let ones: u32 = binary_code(x, n).iter().map(|&b| b as u32).sum();
    ones as f64 / n as f64
}

const SALT_THETA: u64 = 0x7264_732d_7468_6574;
const SALT_MU: u64 = 0x7264_732d_6d75_3030;

/// Per-step displacement trajectory of the closed form
///   disp_n = sum_{k<=n} theta_{s_0..s_k} + (eta(n+1) - (n+1)/2) / 2,
/// where the theta draws are N(0, tau) indexed by binary prefixes: two
/// points sharing a k-prefix share every draw through index k.
pub fn simulate_rds(rng_seed: u64, tau: f64, n: usize, x: &Dyadic) -> Vec<f64> {
    let sd = tau.sqrt();
    let mut prefix_key = rng::key_words(&[rng_seed, SALT_THETA]);
    let mut theta_sum = 0.0;
    let mut ones = 0u64;
    let mut out = Vec::with_capacity(n + 1);
    // eta(m+1) needs digit s_{m+1}; track it one digit ahead.
    let mut ones_ahead = x.digit(0) as u64;
    for m in 0..=n {
        let s = x.digit(m);
        prefix_key = rng::mix64(prefix_key.rotate_left(17) ^ (s as u64 + 0x9e37));
        theta_sum += sd * prefix_normal(prefix_key);
        ones += s as u64;
        ones_ahead += x.digit(m + 1) as u64;
        let eta_next = ones_ahead as f64; // ones among s_0..s_{m+1}
        out.push(theta_sum + (eta_next - (m + 1) as f64 / 2.0) / 2.0);
    }
    debug_assert_eq!(ones + x.digit(n + 1) as u64, ones_ahead);
    out
}

#[inline]
fn prefix_normal(key: u64) -> f64 {
    let u1 = rng::u64_to_open01(rng::at(key, 0));
    let u2 = rng::u64_to_open01(rng::at(key, 1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[derive(Debug, Clone)]
pub struct CutSet {
    pub level: usize,
    pub epsilon: Rational,
    /// Disjoint, sorted, exact.
    pub intervals: Vec<(Rational, Rational)>,
}

impl CutSet {
    pub fn total_length(&self) -> Rational {
        let mut s = Rational::zero();
        for (lo, hi) in &self.intervals {
            s += hi - lo;
        }
        s
    }
}

/// Self-similar cut construction: each interval [a, a+L] is replaced by
/// [a + eps L/2, a + L/2] and [a + L/2 + eps L/2, a + L]. Exact rationals.
pub fn build_in(epsilon: f64, n: usize) -> CutSet {
    assert!((0.0..1.0).contains(&epsilon));
    let eps = Rational::from_float(epsilon).unwrap();
    let half = Rational::new(1.into(), 2.into());
    let mut intervals = vec![(Rational::zero(), Rational::one())];
    for _ in 0..n {
        let mut next = Vec::with_capacity(intervals.len() * 2);
        for (a, b) in &intervals {
            let len = b - a;
            let cut = &eps * &len * &half;
            let mid = a + &len * &half;
            next.push((a + &cut, mid.clone()));
            next.push((mid + &cut, b.clone()));
        }
        intervals = next;
    }
    CutSet {
        level: n,
        epsilon: eps,
        intervals,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InDimension {
    pub closed_form: f64,
    pub box_count: f64,
    pub fit_r2: f64,
    pub agree: bool,
}

/// Candidate closed form ln 2 / ln(2/(1-eps)) cross-checked by box counting
/// the depth-14 construction on its own self-similar scale ladder.
pub fn in_dimension(epsilon: f64) -> InDimension {
    let closed_form = if epsilon == 0.0 {
        1.0
    } else {
        (2.0f64).ln() / (2.0 / (1.0 - epsilon)).ln()
    };
    let set = build_in(epsilon, 14);
    let ratio = (1.0 - epsilon) / 2.0;
    let endpoints: Vec<(f64, f64)> = set
        .intervals
        .iter()
        .map(|(a, b)| (rat_f64(a), rat_f64(b)))
        .collect();
    let mut lns = Vec::new();
    let mut lnn = Vec::new();
    for k in 2..=9 {
        let s = ratio.powi(k);
        lns.push((1.0 / s).ln());
        lnn.push((count_boxes_1d(&endpoints, s) as f64).ln());
    }
    let (slope, _, r2) = linear_fit(&lns, &lnn);
    InDimension {
        closed_form,
        box_count: slope,
        fit_r2: r2,
        agree: (slope - closed_form).abs() <= 0.05,
    }
}

fn rat_f64(r: &Rational) -> f64 {
    r.numer().to_f64().unwrap() / r.denom().to_f64().unwrap()
}

/// Number of grid boxes of size s meeting the sorted disjoint intervals.
fn count_boxes_1d(intervals: &[(f64, f64)], s: f64) -> usize {
    let mut count = 0usize;
    let mut last: i64 = i64::MIN;
    for &(lo, hi) in intervals {
        let mut a = (lo / s).floor() as i64;
        let b = (hi / s).floor() as i64;
        if a <= last {
            a = last + 1;
        }
        if b >= a {
            count += (b - a + 1) as usize;
            last = b;
        }
    }
    count
}

/// One draw from the level-n measure of the dynamically aligned cut.
///
/// The surviving region inside the current dyadic cell is always a
/// top-aligned fraction t of the cell: descending into the upper half keeps
/// min(2t, 1) of it, the lower half keeps 2t - 1 (possible only when
/// t > 1/2, with probability (2t-1)/(2t) vs 1/(2t) for the upper half), and
/// each stage's bottom-eps cut multiplies the fraction by 1-eps. Digits are
/// the half choices, upper = 1.
pub fn mu_sample(epsilon: f64, n_digits: usize, rng: &mut CounterRng) -> Dyadic {
    let mut t = 1.0f64;
    let mut bits = Vec::with_capacity(n_digits);
    for _ in 0..n_digits {
        let upper = if t <= 0.5 {
            true
        } else {
            rng.uniform() < 1.0 / (2.0 * t)
        };
        let pre = if upper {
            (2.0 * t).min(1.0)
        } else {
            2.0 * t - 1.0
        };
        t = (1.0 - epsilon) * pre;
        bits.push(upper as u8);
    }
    Dyadic::from_bits(&bits)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    pub epsilon: f64,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub expected: f64,
    pub per_sample: Vec<f64>,
}

/// Mean per-step displacement of mu_n samples under the closed form; the
/// derived candidate value eps/(2(1-eps)) is reported alongside.
pub fn mu_drift(epsilon: f64, tau: f64, n: usize, count: usize, rng_seed: u64) -> DriftReport {
    let mut per_sample = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = CounterRng::from_words(&[rng_seed, SALT_MU, i as u64]);
        let x = mu_sample(epsilon, n + 2, &mut rng);
        let traj = simulate_rds(rng_seed, tau, n, &x);
        per_sample.push(traj[n] / n as f64);
    }
    let m = moments(&per_sample);
    DriftReport {
        epsilon,
        n,
        mean: m.mean,
        stderr: m.stderr,
        expected: epsilon / (2.0 * (1.0 - epsilon)),
        per_sample,
    }
}

/// Rational endpoint dump: one "num/den num/den" line per interval.
pub fn cutset_dump(set: &CutSet) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "# cutset level {} total {}", set.level, set.total_length());
    for (a, b) in &set.intervals {
        let _ = writeln!(s, "{}/{} {}/{}", a.numer(), a.denom(), b.numer(), b.denom());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_code_zero_and_third() {
        let z = Dyadic::zero();
        assert_eq!(binary_code(&z, 5), vec![0, 0, 0, 0, 0, 0]);
        let third = Dyadic::from_f64(1.0 / 3.0);
        let code = binary_code(&third, 9);
        assert_eq!(code, vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn binary_code_hand_case() {
        // 0.8125 = 13/16 = 0.1101_2
        let x = Dyadic::from_f64(0.8125);
        assert_eq!(binary_code(&x, 3), vec![1, 1, 0, 1]);
    }

    #[test]
    fn eta_frequency_cases() {
        assert_eq!(eta_frequency(&Dyadic::zero(), 10), 0.0);
        let third = Dyadic::from_f64(1.0 / 3.0);
        assert_eq!(eta_frequency(&third, 10), 0.5);
        // Random point with 10^4 genuinely random digits.
        let mut rng = CounterRng::from_words(&[5]);
        let bits: Vec<u8> = (0..10_001).map(|_| (rng.next_u64() & 1) as u8).collect();
        let x = Dyadic::from_bits(&bits);
        let eta = eta_frequency(&x, 10_000);
        assert!((eta - 0.5).abs() < 0.02, "eta {eta}");
    }

    #[test]
    fn rds_zero_noise_all_zero_code() {
        let traj = simulate_rds(3, 0.0, 9, &Dyadic::zero());
        // Pure eta term: disp_n = -(n+1)/4.
        for (m, &d) in traj.iter().enumerate() {
            assert!((d + (m + 1) as f64 / 4.0).abs() < 1e-12, "m={m} d={d}");
        }
    }

    #[test]
    fn rds_balanced_code_bounded() {
        let third = Dyadic::from_f64(1.0 / 3.0);
        let traj = simulate_rds(3, 0.0, 30, &third);
        for &d in &traj {
            assert!(d.abs() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn rds_prefix_sharing() {
        // Points agreeing to k digits share theta draws through index k, so
        // the zero-noise-difference property holds exactly: differences in
        // the noisy trajectories before index k vanish.
        let a = Dyadic::from_bits(&[1, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0]);
        let b = Dyadic::from_bits(&[1, 0, 1, 1, 0, 1, 1, 0, 1, 0, 1, 1]);
        let ta = simulate_rds(9, 1.0, 10, &a);
        let tb = simulate_rds(9, 1.0, 10, &b);
        for m in 0..4 {
            // Same digits and same draws through s_4; eta lookahead means
            // trajectories agree until the first differing digit affects it.
            assert!((ta[m] - tb[m]).abs() < 1e-12, "m={m}");
        }
        assert!((ta[8] - tb[8]).abs() > 1e-6);
    }

    #[test]
    fn theta_term_statistics() {
        // disp minus the deterministic eta part, over fresh seeds, has mean 0
        // and variance tau (n+1).
        let n = 50;
        let tau = 0.7;
        let x = Dyadic::zero();
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let reps = 4000;
        for seed in 0..reps {
            let d = simulate_rds(seed, tau, n, &x)[n] + (n + 1) as f64 / 4.0;
            sum += d;
            sum2 += d * d;
        }
        let mean = sum / reps as f64;
        let var = sum2 / reps as f64 - mean * mean;
        let want = tau * (n + 1) as f64;
        assert!(mean.abs() < 3.0 * (want / reps as f64).sqrt() * 1.5, "mean {mean}");
        assert!((var - want).abs() < 0.1 * want, "var {var} want {want}");
    }

    #[test]
    fn build_in_structure() {
        let s = build_in(0.0, 3);
        assert_eq!(s.intervals.len(), 8);
        assert!(s.total_length().is_one());

        let s = build_in(0.2, 1);
        assert_eq!(s.intervals.len(), 2);
        let total = s.total_length();
        assert_eq!(total, Rational::one() - Rational::from_float(0.2f64).unwrap());
        // Hand construction: [1/10, 1/2] and [6/10, 1] (up to the exact
        // rational value of the f64 0.2).
        assert!((rat_f64(&s.intervals[0].0) - 0.1).abs() < 1e-15);
        assert_eq!(rat_f64(&s.intervals[0].1), 0.5);
        assert!((rat_f64(&s.intervals[1].0) - 0.6).abs() < 1e-15);
        assert_eq!(rat_f64(&s.intervals[1].1), 1.0);
    }

    #[test]
    fn build_in_exact_total_length() {
        // (1-eps)^n as exact rationals, eps taken exactly as the f64 value.
        for &(eps, n) in &[(0.25f64, 6usize), (0.5, 8), (0.1, 5)] {
            let s = build_in(eps, n);
            let e = Rational::from_float(eps).unwrap();
            let mut want = Rational::one();
            let one = Rational::one();
            for _ in 0..n {
                want *= &one - &e;
            }
            assert_eq!(s.total_length(), want);
            assert_eq!(s.intervals.len(), 1 << n);
        }
    }

    #[test]
    fn in_dimension_closed_form_confirmed() {
        for &eps in &[0.0, 0.1, 0.3, 0.5] {
            let d = in_dimension(eps);
            assert!(
                (d.box_count - d.closed_form).abs() <= 0.05,
                "eps {eps}: box {} closed {}",
                d.box_count,
                d.closed_form
            );
            assert!(d.agree);
        }
        assert_eq!(in_dimension(0.0).closed_form, 1.0);
        assert!((in_dimension(0.5).closed_form - 0.5).abs() < 1e-12);
        // Monotone decreasing in eps.
        let d1 = in_dimension(0.1).closed_form;
        let d3 = in_dimension(0.3).closed_form;
        let d5 = in_dimension(0.5).closed_form;
        assert!(d1 > d3 && d3 > d5);
    }

    #[test]
    fn mu_sample_eps_zero_uniform_digits() {
        let mut rng = CounterRng::from_words(&[21]);
        let mut ones = 0u64;
        let n = 2000;
        for _ in 0..50 {
            let x = mu_sample(0.0, n, &mut rng);
            ones += (0..n).map(|k| x.digit(k) as u64).sum::<u64>();
        }
        let f = ones as f64 / (50 * n) as f64;
        assert!((f - 0.5).abs() < 0.01, "ones fraction {f}");
    }

    #[test]
    fn mu_drift_zero_eps() {
        let r = mu_drift(0.0, 1.0, 500, 200, 31);
        assert!(r.mean.abs() < 3.0 * r.stderr, "{} vs {}", r.mean, r.stderr);
    }

    #[test]
    fn mu_drift_biased() {
        let r = mu_drift(0.2, 1.0, 800, 200, 32);
        assert!(
            (r.mean - r.expected).abs() < 0.1 * r.expected,
            "mean {} expected {}",
            r.mean,
            r.expected
        );
    }

    #[test]
    fn mu_drift_monotone_in_eps() {
        let d1 = mu_drift(0.1, 0.5, 400, 150, 33).mean;
        let d2 = mu_drift(0.2, 0.5, 400, 150, 33).mean;
        let d3 = mu_drift(0.3, 0.5, 400, 150, 33).mean;
        assert!(d1 < d2 && d2 < d3, "{d1} {d2} {d3}");
    }

    #[test]
    fn eta_exceeds_half_under_mu() {
        let mut rng = CounterRng::from_words(&[41]);
        let mut etas = Vec::new();
        for _ in 0..100 {
            let x = mu_sample(0.2, 120, &mut rng);
            etas.push(eta_frequency(&x, 100));
        }
        let mean = etas.iter().sum::<f64>() / etas.len() as f64;
        assert!(mean > 0.55, "mean eta {mean}");
    }

    #[test]
    fn cutset_dump_round_figures() {
        let s = build_in(0.5, 1);
        let dump = cutset_dump(&s);
        assert!(dump.contains("1/4 1/2"));
        assert!(dump.contains("3/4 1"));
    }
}
