//! Exact trigonometric-polynomial calculus on products of circles.
//!
//! Scalars are finite sums c_w e^{i <w, s.x>} over integer frequency vectors
//! w, where s_j is the angular scale of coordinate j (2*pi for unit-torus
//! coordinates, 1 for genuine angle coordinates such as the tangent direction
//! phi). Real-valued scalars keep conjugate-symmetric spectra, so products
//! (convolution) and partial derivatives (multiplication by i w_j s_j) stay
//! exact. Iterated Lie brackets therefore never accumulate differencing
//! error; only the final point evaluation rounds.

use num_complex::Complex64;
use std::collections::HashMap;

pub const MAX_DIM: usize = 4;
pub type Wave = [i32; MAX_DIM];

#[derive(Debug, Clone)]
pub struct HarmonicScalar {
    pub dim: usize,
    pub scales: [f64; MAX_DIM],
    pub terms: HashMap<Wave, Complex64>,
}

impl HarmonicScalar {
    pub fn zero(dim: usize, scales: [f64; MAX_DIM]) -> Self {
        HarmonicScalar {
            dim,
            scales,
            terms: HashMap::new(),
        }
    }

    /// amp * sin(<w, s.x> + phase), entered as the conjugate-symmetric pair.
    pub fn sin_mode(dim: usize, scales: [f64; MAX_DIM], w: Wave, amp: f64, phase: f64) -> Self {
        let mut f = Self::zero(dim, scales);
        // sin t = -i/2 e^{it} + i/2 e^{-it}; phase folds into the coefficient.
        let c = Complex64::from_polar(amp / 2.0, phase) * Complex64::new(0.0, -1.0);
        f.add_term(w, c);
        f.add_term(neg(w), c.conj());
        f
    }

    /// cos(<w, s.x>) scaled by amp.
    pub fn cos_mode(dim: usize, scales: [f64; MAX_DIM], w: Wave, amp: f64) -> Self {
        Self::sin_mode(dim, scales, w, amp, std::f64::consts::FRAC_PI_2)
    }

    pub fn add_term(&mut self, w: Wave, c: Complex64) {
        let e = self.terms.entry(w).or_insert(Complex64::new(0.0, 0.0));
        *e += c;
        if e.norm_sqr() < 1e-60 {
            self.terms.remove(&w);
        }
    }

    pub fn add(&mut self, other: &HarmonicScalar) {
        debug_assert_eq!(self.dim, other.dim);
        for (&w, &c) in &other.terms {
            self.add_term(w, c);
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.terms.values_mut() {
            *c *= a;
        }
    }

    pub fn derivative(&self, j: usize) -> HarmonicScalar {
        let mut out = Self::zero(self.dim, self.scales);
        for (&w, &c) in &self.terms {
            let factor = Complex64::new(0.0, w[j] as f64 * self.scales[j]);
            if factor.im != 0.0 {
                out.add_term(w, c * factor);
            }
        }
        out
    }

    pub fn product(&self, other: &HarmonicScalar) -> HarmonicScalar {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = Self::zero(self.dim, self.scales);
        for (&wa, &ca) in &self.terms {
            for (&wb, &cb) in &other.terms {
                let mut w = [0i32; MAX_DIM];
                for j in 0..MAX_DIM {
                    w[j] = wa[j] + wb[j];
                }
                out.add_term(w, ca * cb);
            }
        }
        out.prune();
        out
    }

    /// Drop terms far below the largest coefficient; keeps bracket spectra
    /// from accumulating numerically-zero dust.
    pub fn prune(&mut self) {
        let max = self
            .terms
            .values()
            .map(|c| c.norm_sqr())
            .fold(0.0f64, f64::max);
        if max == 0.0 {
            return;
        }
        let cut = max * 1e-28;
        self.terms.retain(|_, c| c.norm_sqr() >= cut);
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (&w, &c) in &self.terms {
            let mut arg = 0.0;
            for j in 0..self.dim {
                arg += w[j] as f64 * self.scales[j] * x[j];
            }
            sum += c * Complex64::from_polar(1.0, arg);
        }
        sum.re
    }

    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

fn neg(w: Wave) -> Wave {
    let mut out = [0i32; MAX_DIM];
    for j in 0..MAX_DIM {
        out[j] = -w[j];
    }
    out
}

/// Vector field with harmonic-scalar components.
#[derive(Debug, Clone)]
pub struct HarmonicVector {
    pub comps: Vec<HarmonicScalar>,
}

impl HarmonicVector {
    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval(x)).collect()
    }

    pub fn max_coeff(&self) -> f64 {
        self.comps.iter().map(|c| c.max_coeff()).fold(0.0, f64::max)
    }
}

/// Lie bracket [f, g] = Dg f - Df g, component-wise exact.
pub fn lie_bracket(f: &HarmonicVector, g: &HarmonicVector) -> HarmonicVector {
    let n = f.dim();
    debug_assert_eq!(n, g.dim());
    let dim = f.comps[0].dim;
    let scales = f.comps[0].scales;
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = HarmonicScalar::zero(dim, scales);
        for j in 0..n {
            acc.add(&g.comps[i].derivative(j).product(&f.comps[j]));
            let mut sub = f.comps[i].derivative(j).product(&g.comps[j]);
            sub.scale(-1.0);
            acc.add(&sub);
        }
        acc.prune();
        comps.push(acc);
    }
    HarmonicVector { comps }
}
