//! Seeded, dyadically refinable Brownian paths.
//!
//! Increments are never stored: level-0 increments are counter-hashed from
//! (seed, coordinate, time index), and finer levels come from Brownian-bridge
//! midpoint splits keyed the same way. Any increment is a pure function of
//! the path identity, so re-integration of late-inserted material points and
//! parallel ensembles reproduce serial results bit for bit.

use crate::rng::normal_at;
use serde::{Deserialize, Serialize};

const SALT_INC: u64 = 0x6e6f_6973_652d_3030;
const SALT_BRIDGE: u64 = 0x6e6f_6973_652d_6272;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub seed: u64,
    pub dim: usize,
    pub horizon: f64,
    pub base_step: f64,
    pub levels: u32,
    /// Power-of-two grid all increments are snapped to. Sums and differences
    /// of grid values in range are exact in floats, which is what makes
    /// child-sums-to-parent hold bitwise at every refinement level.
    quantum: f64,
    /// Offset of local time 0 from the realization's origin, in base steps.
    /// A nonzero offset makes this a window into the same realization, so a
    /// later stage of a construction can run on its own clock while reading
    /// exactly the increments the full path would supply.
    base_offset: u64,
}

impl NoisePath {
    pub fn sample(seed: u64, dim: usize, horizon: f64, base_step: f64) -> Self {
        assert!(horizon > 0.0 && base_step > 0.0);
        // ~2^40 resolution steps per unit standard deviation; the 1e-12
        // relative quantization is far below integration error.
        let quantum = (base_step.sqrt().log2().floor() as i32 - 40).max(-1000);
        NoisePath {
            seed,
            dim,
            horizon,
            base_step,
            levels: 0,
            quantum: (quantum as f64).exp2(),
            base_offset: 0,
        }
    }

    /// View of the same realization whose local time 0 sits at absolute time
    /// t0 (rounded to the base-step grid). Increments match the parent path
    /// bit for bit at the shifted indices.
    pub fn offset(&self, t0: f64) -> Self {
        assert!(t0 >= 0.0 && t0 < self.horizon);
        let shift = (t0 / self.base_step).round() as u64;
        let mut p = *self;
        p.base_offset += shift;
        p.horizon -= shift as f64 * self.base_step;
        p
    }

    #[inline]
    fn quantize(&self, x: f64) -> f64 {
        (x / self.quantum).round() * self.quantum
    }

    pub fn refine(&self, extra_levels: u32) -> Self {
        let mut p = *self;
        p.levels += extra_levels;
        p
    }

    /// Step at the finest current level.
    pub fn step(&self) -> f64 {
        self.base_step / (1u64 << self.levels) as f64
    }

    pub fn n_base_steps(&self) -> u64 {
        (self.horizon / self.base_step).round() as u64
    }

    pub fn n_steps(&self) -> u64 {
        self.n_base_steps() << self.levels
    }

    /// Increment of coordinate i over window idx at the given level.
    pub fn increment_at_level(&self, i: usize, level: u32, idx: u64) -> f64 {
        self.inc_raw(i, level, idx + (self.base_offset << level))
    }

    /// Increment indexed from the realization's origin rather than the view.
    fn inc_raw(&self, i: usize, level: u32, idx: u64) -> f64 {
        if level == 0 {
            return self
                .quantize(normal_at(&[self.seed, SALT_INC, i as u64, idx]) * self.base_step.sqrt());
        }
        let parent = self.inc_raw(i, level - 1, idx >> 1);
        let span = self.base_step / (1u64 << (level - 1)) as f64;
        let xi = normal_at(&[self.seed, SALT_BRIDGE, i as u64, level as u64, idx >> 1])
            * span.sqrt()
            / 2.0;
        // Left child on the grid; right child is then exactly the remainder.
        let l = self.quantize(0.5 * parent + xi);
        let r = parent - l;
        if idx & 1 == 0 {
            l
        } else {
            r
        }
    }

    /// Increment at the finest level.
    #[inline]
    pub fn increment(&self, i: usize, idx: u64) -> f64 {
        self.increment_at_level(i, self.levels, idx)
    }

    /// All coordinates for one finest-level window, into a caller buffer.
    #[inline]
    pub fn increments_into(&self, idx: u64, out: &mut [f64]) {
        for i in 0..self.dim {
            out[i] = self.increment(i, idx);
        }
    }

    /// Convert a time to a finest-level step index; times are expected to sit
    /// on the step grid (they are rounded to it).
    pub fn index_of(&self, t: f64) -> u64 {
        (t / self.step()).round().max(0.0) as u64
    }
}
