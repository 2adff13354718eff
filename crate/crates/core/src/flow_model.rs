//! Periodic divergence-free vector fields on the unit torus and their
//! nondegeneracy diagnostics.
//!
//! Every field is the perpendicular gradient of a truncated Fourier stream
//! function, so divergence-freeness and zero spatial mean are structural.
//! Hypoellipticity (conditions A, B, C) is certified numerically: iterated
//! Lie brackets are computed exactly in the harmonic calculus and their span
//! is rank-checked at sampled points.

use crate::harmonic::{self, HarmonicScalar, HarmonicVector, MAX_DIM};
use crate::rng::CounterRng;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowModelError {
    #[error("wave vector (0,0) is not allowed (zero-mean constraint)")]
    ZeroWave,
    #[error("need at least 2 noise fields, got {0}")]
    TooFewNoiseFields(usize),
    #[error("model parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("quadrature did not converge: residuals {0:.3e} vs {1:.3e}")]
    QuadratureUnconverged(f64, f64),
    #[error("condition B sample pair within margin {margin} of the diagonal")]
    DiagonalPair { margin: f64 },
    #[error("rank deficient at depth {depth} but still increasing; retry with more depth")]
    InsufficientDepth { depth: usize },
    #[error("rank stalled at {rank}/{required} for two consecutive depths")]
    RankDeficient { rank: usize, required: usize },
}

/// One stream-function mode: H contribution amp * sin(2 pi <k, x> + phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: [i32; 2],
    pub amp: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierStreamField {
    modes: Vec<Mode>,
}

impl FourierStreamField {
    pub fn new(modes: Vec<Mode>) -> Result<Self, FlowModelError> {
        if modes.iter().any(|m| m.k == [0, 0]) {
            return Err(FlowModelError::ZeroWave);
        }
        Ok(FourierStreamField { modes })
    }

    pub fn zero() -> Self {
        FourierStreamField { modes: Vec::new() }
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.is_empty()
    }

    /// Stream function H(x).
    pub fn stream(&self, x: [f64; 2]) -> f64 {
        let x = wrap(x);
        self.modes
            .iter()
            .map(|m| m.amp * (TAU * (m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1]) + m.phase).sin())
            .sum()
    }

    /// Velocity (dH/dx2, -dH/dx1); divergence-free by construction.
    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let x = wrap(x);
        let mut v = [0.0, 0.0];
        for m in &self.modes {
            let arg = TAU * (m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1]) + m.phase;
            let c = m.amp * TAU * arg.cos();
            v[0] += c * m.k[1] as f64;
            v[1] -= c * m.k[0] as f64;
        }
        v
    }

    /// Analytic Jacobian dv_i/dx_j.
    #[inline]
    pub fn jacobian(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let x = wrap(x);
        let mut j = [[0.0; 2]; 2];
        for m in &self.modes {
            let arg = TAU * (m.k[0] as f64 * x[0] + m.k[1] as f64 * x[1]) + m.phase;
            let c = -m.amp * TAU * TAU * arg.sin();
            let p = [m.k[1] as f64, -(m.k[0] as f64)];
            for i in 0..2 {
                for l in 0..2 {
                    j[i][l] += c * p[i] * m.k[l] as f64;
                }
            }
        }
        j
    }

    pub fn divergence(&self, x: [f64; 2]) -> f64 {
        let j = self.jacobian(x);
        j[0][0] + j[1][1]
    }

    /// Velocity field in the exact harmonic calculus, embedded with its two
    /// components placed at coordinate offset `block` (0 or 2) of a
    /// `space_dim`-dimensional harmonic space.
    pub fn to_harmonic(&self, space_dim: usize, scales: [f64; MAX_DIM], block: usize) -> HarmonicVector {
        let mut h = HarmonicScalar::zero(space_dim, scales);
        for m in &self.modes {
            let mut w = [0i32; MAX_DIM];
            w[block] = m.k[0];
            w[block + 1] = m.k[1];
            let term = HarmonicScalar::sin_mode(space_dim, scales, w, m.amp, m.phase);
            h.add(&term);
        }
        let v1 = h.derivative(block + 1);
        let mut v2 = h.derivative(block);
        v2.scale(-1.0);
        HarmonicVector { comps: vec![v1, v2] }
    }
}

#[inline]
pub fn wrap(x: [f64; 2]) -> [f64; 2] {
    [x[0] - x[0].floor(), x[1] - x[1].floor()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    drift_field: FourierStreamField,
    noise_fields: Vec<FourierStreamField>,
}

impl FlowModel {
    pub fn new(
        drift_field: FourierStreamField,
        noise_fields: Vec<FourierStreamField>,
    ) -> Result<Self, FlowModelError> {
        if noise_fields.len() < 2 {
            return Err(FlowModelError::TooFewNoiseFields(noise_fields.len()));
        }
        Ok(FlowModel {
            drift_field,
            noise_fields,
        })
    }

    pub fn drift_field(&self) -> &FourierStreamField {
        &self.drift_field
    }

    pub fn noise_fields(&self) -> &[FourierStreamField] {
        &self.noise_fields
    }

    pub fn d(&self) -> usize {
        self.noise_fields.len()
    }

    /// The recorded default model: X_0 = 0, two transverse shear fields and
    /// two seeded 4-mode fields. Amplitudes carry a global scale chosen so
    /// the top Lyapunov exponent is of order one, which keeps hyperbolic
    /// times at small multiples of the unit block.
    pub fn default_model() -> Self {
        let a = 0.1;
        let shear1 = FourierStreamField::new(vec![Mode {
            k: [0, 1],
            amp: a / TAU,
            phase: 0.0,
        }])
        .unwrap();
        let shear2 = FourierStreamField::new(vec![Mode {
            k: [1, 0],
            amp: a / TAU,
            phase: std::f64::consts::FRAC_PI_2,
        }])
        .unwrap();
        let mut noise = vec![shear1, shear2];
        for idx in 0..2u64 {
            // Fixed recorded seed for the two generic fields.
            let mut rng = CounterRng::from_words(&[0x7466_6d2d_6466_6c74, idx]);
            let mut modes = Vec::new();
            while modes.len() < 4 {
                let k = [
                    rng.below(5) as i32 - 2,
                    rng.below(5) as i32 - 2,
                ];
                if k == [0, 0] {
                    continue;
                }
                let norm = ((k[0] * k[0] + k[1] * k[1]) as f64).sqrt();
                let amp = a * rng.uniform_in(0.5, 1.0) / (TAU * norm);
                let phase = rng.uniform_in(0.0, TAU);
                modes.push(Mode { k, amp, phase });
            }
            noise.push(FourierStreamField::new(modes).unwrap());
        }
        FlowModel::new(FourierStreamField::zero(), noise).unwrap()
    }

    /// Velocity used by an Euler/Heun stage: X_0(x) dt + sum_k X_k(x) dw_k.
    #[inline]
    pub fn stage_velocity(&self, x: [f64; 2], dt: f64, dw: &[f64]) -> [f64; 2] {
        let mut v = [0.0, 0.0];
        if !self.drift_field.is_zero() {
            let u = self.drift_field.eval(x);
            v[0] += u[0] * dt;
            v[1] += u[1] * dt;
        }
        for (field, &w) in self.noise_fields.iter().zip(dw) {
            let u = field.eval(x);
            v[0] += u[0] * w;
            v[1] += u[1] * w;
        }
        v
    }

    /// Same combination for the Jacobian, for the variational equation.
    #[inline]
    pub fn stage_jacobian(&self, x: [f64; 2], dt: f64, dw: &[f64]) -> [[f64; 2]; 2] {
        let mut j = [[0.0; 2]; 2];
        if !self.drift_field.is_zero() {
            let u = self.drift_field.jacobian(x);
            for i in 0..2 {
                for l in 0..2 {
                    j[i][l] += u[i][l] * dt;
                }
            }
        }
        for (field, &w) in self.noise_fields.iter().zip(dw) {
            let u = field.jacobian(x);
            for i in 0..2 {
                for l in 0..2 {
                    j[i][l] += u[i][l] * w;
                }
            }
        }
        j
    }
}

pub fn eval_field(field: &FourierStreamField, x: [f64; 2]) -> [f64; 2] {
    field.eval(x)
}

/// Spatial mean of the velocity by midpoint quadrature; structurally zero for
/// stream fields without a constant mode.
pub fn check_zero_mean(field: &FourierStreamField) -> (bool, f64) {
    let n = 32;
    let mut mean = [0.0, 0.0];
    for i in 0..n {
        for j in 0..n {
            let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
            let v = field.eval(x);
            mean[0] += v[0];
            mean[1] += v[1];
        }
    }
    let m = (n * n) as f64;
    let residual = (mean[0] / m).hypot(mean[1] / m);
    (residual < 1e-10, residual)
}

/// Integral over the torus of the Ito-corrected drift
/// sum_k (DX_k) X_k + X_0, at two grid refinements.
pub fn check_zero_drift(model: &FlowModel) -> Result<[f64; 2], FlowModelError> {
    let r1 = drift_integral(model, 32);
    let r2 = drift_integral(model, 48);
    let diff = (r1[0] - r2[0]).hypot(r1[1] - r2[1]);
    if diff > 1e-6 {
        let n1 = r1[0].hypot(r1[1]);
        let n2 = r2[0].hypot(r2[1]);
        return Err(FlowModelError::QuadratureUnconverged(n1, n2));
    }
    Ok(r2)
}

fn drift_integral(model: &FlowModel, n: usize) -> [f64; 2] {
    let mut acc = [0.0, 0.0];
    for i in 0..n {
        for j in 0..n {
            let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
            let mut g = model.drift_field.eval(x);
            for field in &model.noise_fields {
                let v = field.eval(x);
                let dj = field.jacobian(x);
                for a in 0..2 {
                    g[a] += dj[a][0] * v[0] + dj[a][1] * v[1];
                }
            }
            acc[0] += g[0];
            acc[1] += g[1];
        }
    }
    let m = (n * n) as f64;
    [acc[0] / m, acc[1] / m]
}

/// Numeric Lie bracket Dg f - Df g from analytic Jacobians.
pub fn lie_bracket(f: &FourierStreamField, g: &FourierStreamField, x: [f64; 2]) -> [f64; 2] {
    let fv = f.eval(x);
    let gv = g.eval(x);
    let fj = f.jacobian(x);
    let gj = g.jacobian(x);
    let mut out = [0.0, 0.0];
    for i in 0..2 {
        out[i] = gj[i][0] * fv[0] + gj[i][1] * fv[1] - (fj[i][0] * gv[0] + fj[i][1] * gv[1]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    A,
    B,
    C,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Condition::A => write!(f, "A"),
            Condition::B => write!(f, "B"),
            Condition::C => write!(f, "C"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankReport {
    pub condition: Condition,
    pub sample_points: Vec<Vec<f64>>,
    pub achieved_rank: Vec<usize>,
    pub required_rank: usize,
    pub bracket_depth: usize,
    pub pass: bool,
}

/// Margin below which a condition-B sample pair counts as diagonal.
pub const DIAGONAL_MARGIN: f64 = 0.05;

pub fn torus_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        let d = (a[i] - b[i]).rem_euclid(1.0);
        let d = d.min(1.0 - d);
        s += d * d;
    }
    s.sqrt()
}

/// Rank-check Lie brackets of the noise fields (condition A), their two-point
/// lift (B), or their unit-tangent-bundle lift (C) at the given samples.
///
/// Sample layout: A expects 2 coordinates per point, B expects 4 (the pair),
/// C expects 3 (point plus tangent angle phi).
pub fn check_hypoellipticity(
    model: &FlowModel,
    condition: Condition,
    sample_points: &[Vec<f64>],
    bracket_depth: usize,
) -> Result<RankReport, FlowModelError> {
    let (base, required_rank): (Vec<HarmonicVector>, usize) = match condition {
        Condition::A => {
            let scales = [TAU, TAU, 0.0, 0.0];
            (
                model
                    .noise_fields
                    .iter()
                    .map(|f| f.to_harmonic(2, scales, 0))
                    .collect(),
                2,
            )
        }
        Condition::B => {
            for p in sample_points {
                let a = [p[0], p[1]];
                let b = [p[2], p[3]];
                if torus_dist(a, b) < DIAGONAL_MARGIN {
                    return Err(FlowModelError::DiagonalPair {
                        margin: DIAGONAL_MARGIN,
                    });
                }
            }
            let scales = [TAU, TAU, TAU, TAU];
            let fields = model
                .noise_fields
                .iter()
                .map(|f| {
                    let lo = f.to_harmonic(4, scales, 0);
                    let hi = f.to_harmonic(4, scales, 2);
                    HarmonicVector {
                        comps: vec![
                            lo.comps[0].clone(),
                            lo.comps[1].clone(),
                            hi.comps[0].clone(),
                            hi.comps[1].clone(),
                        ],
                    }
                })
                .collect();
            (fields, 4)
        }
        Condition::C => {
            let scales = [TAU, TAU, 1.0, 0.0];
            let fields = model
                .noise_fields
                .iter()
                .map(|f| tangent_bundle_lift(f, scales))
                .collect();
            (fields, 3)
        }
    };

    let npts = sample_points.len();
    let mut columns: Vec<Vec<Vec<f64>>> = vec![Vec::new(); npts];
    let mut ranks = vec![0usize; npts];
    let mut stalled = false;
    let mut level = base.clone();
    let mut depth_used = 0;

    for depth in 0..=bracket_depth {
        for field in &level {
            for (pi, p) in sample_points.iter().enumerate() {
                columns[pi].push(field.eval(p));
            }
        }
        let new_ranks: Vec<usize> = columns
            .iter()
            .map(|cols| numeric_rank(cols, required_rank))
            .collect();
        depth_used = depth;
        let all_full = new_ranks.iter().all(|&r| r == required_rank);
        if depth > 0 && new_ranks == ranks && !all_full {
            stalled = true;
        }
        ranks = new_ranks;
        if all_full || depth == bracket_depth {
            break;
        }
        // Next bracket level: brackets of current level with the base fields.
        let mut next = Vec::new();
        for f in &level {
            for g in &base {
                let br = harmonic::lie_bracket(f, g);
                if br.max_coeff() > 1e-12 {
                    next.push(br);
                }
            }
        }
        if next.is_empty() {
            // No new directions can ever appear.
            stalled = true;
            break;
        }
        level = next;
    }

    let pass = ranks.iter().all(|&r| r == required_rank);
    if !pass {
        if stalled {
            return Err(FlowModelError::RankDeficient {
                rank: *ranks.iter().min().unwrap(),
                required: required_rank,
            });
        }
        return Err(FlowModelError::InsufficientDepth { depth: depth_used });
    }
    Ok(RankReport {
        condition,
        sample_points: sample_points.to_vec(),
        achieved_rank: ranks,
        required_rank,
        bracket_depth: depth_used,
        pass,
    })
}

/// Lift to the unit tangent bundle T^2 x S^1: the angular component is
/// omega(x, phi) = <v_perp, DX v> with v = (cos phi, sin phi), assembled
/// exactly in the harmonic calculus.
fn tangent_bundle_lift(field: &FourierStreamField, scales: [f64; MAX_DIM]) -> HarmonicVector {
    let hv = field.to_harmonic(3, scales, 0);
    let cos_phi = HarmonicScalar::cos_mode(3, scales, [0, 0, 1, 0], 1.0);
    let sin_phi = HarmonicScalar::sin_mode(3, scales, [0, 0, 1, 0], 1.0, 0.0);
    let v = [cos_phi.clone(), sin_phi.clone()];
    let mut neg_sin = sin_phi;
    neg_sin.scale(-1.0);
    let vperp = [neg_sin, cos_phi];
    let mut omega = HarmonicScalar::zero(3, scales);
    for i in 0..2 {
        for j in 0..2 {
            let dij = hv.comps[i].derivative(j);
            omega.add(&vperp[i].product(&dij).product(&v[j]));
        }
    }
    omega.prune();
    HarmonicVector {
        comps: vec![hv.comps[0].clone(), hv.comps[1].clone(), omega],
    }
}

fn numeric_rank(columns: &[Vec<f64>], nrows_hint: usize) -> usize {
    if columns.is_empty() {
        return 0;
    }
    let nrows = columns[0].len().max(nrows_hint);
    let mat = DMatrix::from_fn(columns[0].len(), columns.len(), |i, j| columns[j][i]);
    let svd = mat.singular_values();
    let max = svd.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return 0;
    }
    svd.iter().filter(|&&s| s > 1e-8 * max).count().min(nrows)
}

/// Canonical text form; parse(serialize(m)) is byte-identical for canonical
/// input because floats print in shortest round-trip form.
pub fn to_text(model: &FlowModel) -> String {
    let mut s = String::new();
    s.push_str("torusflow-model v1\n");
    write_field(&mut s, "drift", &model.drift_field);
    let _ = writeln!(s, "noise_fields {}", model.noise_fields.len());
    for (i, f) in model.noise_fields.iter().enumerate() {
        write_field(&mut s, &format!("noise{i}"), f);
    }
    s
}

fn write_field(s: &mut String, name: &str, field: &FourierStreamField) {
    let _ = writeln!(s, "field {name} modes {}", field.modes.len());
    for m in &field.modes {
        let _ = writeln!(s, "{} {} {} {}", m.k[0], m.k[1], m.amp, m.phase);
    }
}

pub fn from_text(text: &str) -> Result<FlowModel, FlowModelError> {
    let mut lines = text.lines().enumerate();
    let perr = |line: usize, msg: &str| FlowModelError::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    let (ln, header) = lines
        .next()
        .ok_or_else(|| perr(0, "empty model file"))?;
    if header.trim() != "torusflow-model v1" {
        return Err(perr(ln, "expected header 'torusflow-model v1'"));
    }

    let mut drift = None;
    let mut noise = Vec::new();
    let mut declared_noise = None;
    while let Some((ln, raw)) = lines.next() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "noise_fields" => {
                let n: usize = toks
                    .get(1)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| perr(ln, "bad noise_fields count"))?;
                declared_noise = Some(n);
            }
            "field" => {
                if toks.len() != 4 || toks[2] != "modes" {
                    return Err(perr(ln, "expected 'field <name> modes <n>'"));
                }
                let name = toks[1];
                let n: usize = toks[3]
                    .parse()
                    .map_err(|_| perr(ln, "bad mode count"))?;
                let mut modes = Vec::with_capacity(n);
                for _ in 0..n {
                    let (mln, mraw) = lines
                        .next()
                        .ok_or_else(|| perr(ln, "unexpected end of file in mode table"))?;
                    let mt: Vec<&str> = mraw.split_whitespace().collect();
                    if mt.len() != 4 {
                        return Err(perr(mln, "mode line needs 'k1 k2 amp phase'"));
                    }
                    let k1: i32 = mt[0].parse().map_err(|_| perr(mln, "bad k1"))?;
                    let k2: i32 = mt[1].parse().map_err(|_| perr(mln, "bad k2"))?;
                    let amp: f64 = mt[2].parse().map_err(|_| perr(mln, "bad amp"))?;
                    let phase: f64 = mt[3].parse().map_err(|_| perr(mln, "bad phase"))?;
                    modes.push(Mode {
                        k: [k1, k2],
                        amp,
                        phase,
                    });
                }
                let field = FourierStreamField::new(modes)
                    .map_err(|e| perr(ln, &e.to_string()))?;
                if name == "drift" {
                    drift = Some(field);
                } else {
                    noise.push(field);
                }
            }
            other => return Err(perr(ln, &format!("unknown directive '{other}'"))),
        }
    }
    if let Some(n) = declared_noise {
        if n != noise.len() {
            return Err(perr(0, "noise_fields count does not match field tables"));
        }
    }
    FlowModel::new(drift.unwrap_or_else(FourierStreamField::zero), noise)
}

/// sha256 of the canonical text form, hex-encoded.
pub fn model_hash(model: &FlowModel) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(to_text(model).as_bytes());
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_mode(k: [i32; 2], amp: f64, phase: f64) -> FourierStreamField {
        FourierStreamField::new(vec![Mode { k, amp, phase }]).unwrap()
    }

    #[test]
    fn eval_single_sine_mode() {
        // H = sin 2 pi x1 gives velocity (0, -2 pi cos 2 pi x1).
        let f = single_mode([1, 0], 1.0, 0.0);
        let v = eval_field(&f, [0.0, 0.0]);
        assert!(v[0].abs() < 1e-15);
        assert!((v[1] + TAU).abs() < 1e-12);
    }

    #[test]
    fn eval_periodic() {
        let f = FlowModel::default_model().noise_fields()[2].clone();
        let mut rng = CounterRng::from_words(&[11]);
        for _ in 0..100 {
            // Dyadic points so that adding integers is exact in floats.
            let x = [
                (rng.below(1 << 26) as f64) / (1u64 << 26) as f64,
                (rng.below(1 << 26) as f64) / (1u64 << 26) as f64,
            ];
            let shift = [rng.below(7) as f64 - 3.0, rng.below(7) as f64 - 3.0];
            let a = f.eval(x);
            let b = f.eval([x[0] + shift[0], x[1] + shift[1]]);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn eval_matches_stream_gradient() {
        let mut rng = CounterRng::from_words(&[12]);
        let mut modes = Vec::new();
        for _ in 0..6 {
            modes.push(Mode {
                k: [rng.below(5) as i32 - 2, rng.below(3) as i32 + 1],
                amp: rng.uniform_in(-1.0, 1.0),
                phase: rng.uniform_in(0.0, TAU),
            });
        }
        let f = FourierStreamField::new(modes).unwrap();
        let h = 1e-6;
        for _ in 0..100 {
            let x = [rng.uniform(), rng.uniform()];
            let v = f.eval(x);
            let dh2 = (f.stream([x[0], x[1] + h]) - f.stream([x[0], x[1] - h])) / (2.0 * h);
            let dh1 = (f.stream([x[0] + h, x[1]]) - f.stream([x[0] - h, x[1]])) / (2.0 * h);
            assert!((v[0] - dh2).abs() < 1e-6);
            assert!((v[1] + dh1).abs() < 1e-6);
        }
    }

    #[test]
    fn divergence_free() {
        let model = FlowModel::default_model();
        let mut rng = CounterRng::from_words(&[13]);
        for _ in 0..1000 {
            let x = [rng.uniform(), rng.uniform()];
            for f in model.noise_fields() {
                assert!(f.divergence(x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_mean_all_fields() {
        let model = FlowModel::default_model();
        for f in model.noise_fields() {
            let (pass, res) = check_zero_mean(f);
            assert!(pass, "residual {res}");
        }
    }

    #[test]
    fn zero_drift_default_model() {
        let model = FlowModel::default_model();
        let r = check_zero_drift(&model).unwrap();
        assert!(r[0].hypot(r[1]) < 1e-8, "residual {r:?}");
    }

    #[test]
    fn zero_drift_single_modes() {
        // For a single stream mode (DX)X vanishes identically.
        let model = FlowModel::new(
            FourierStreamField::zero(),
            vec![single_mode([0, 1], 0.3, 0.1), single_mode([1, 0], 0.5, 1.2)],
        )
        .unwrap();
        let r = check_zero_drift(&model).unwrap();
        assert!(r[0].hypot(r[1]) < 1e-12);
    }

    #[test]
    fn bracket_antisymmetry() {
        let f = single_mode([0, 1], 0.7, 0.3);
        let g = single_mode([1, 1], 0.4, 1.9);
        let mut rng = CounterRng::from_words(&[14]);
        for _ in 0..50 {
            let x = [rng.uniform(), rng.uniform()];
            let a = lie_bracket(&f, &g, x);
            let b = lie_bracket(&g, &f, x);
            assert!((a[0] + b[0]).abs() < 1e-12);
            assert!((a[1] + b[1]).abs() < 1e-12);
            let z = lie_bracket(&f, &f, x);
            assert!(z[0].abs() < 1e-12 && z[1].abs() < 1e-12);
        }
    }

    #[test]
    fn bracket_hand_computed() {
        // f from H = sin 2 pi x2 -> f = (2 pi cos 2 pi x2, 0)
        // g from H = sin 2 pi x1 -> g = (0, -2 pi cos 2 pi x1)
        // [f,g] = Dg f - Df g
        //   Dg = [[0,0],[4 pi^2 sin 2 pi x1, 0]], Df = [[0, -4 pi^2 sin 2 pi x2],[0,0]]
        // At x = (1/4, 1/4): f = (0,0)... use x=(1/4,1/4):
        //   f1 = 2 pi cos(pi/2) = 0, g2 = -2 pi cos(pi/2) = 0
        //   [f,g] = (Df g applied) = -( [[0,-4 pi^2 sin(pi/2)],[0,0]] (0,0) ) = 0.
        // Pick x=(1/4,1/8) instead for a nonzero value:
        //   f = (2 pi cos(pi/4), 0), g = (0, -2 pi cos(pi/2)) = (0,0)
        //   Dg f = (0, 4 pi^2 sin(pi/2) * f1) = (0, 4 pi^2 * 2 pi cos(pi/4))
        //   Df g = 0
        let f = single_mode([0, 1], 1.0, 0.0);
        let g = single_mode([1, 0], 1.0, 0.0);
        let x = [0.25, 0.125];
        let got = lie_bracket(&f, &g, x);
        let want1 = 4.0 * std::f64::consts::PI * std::f64::consts::PI
            * TAU
            * (std::f64::consts::FRAC_PI_4).cos();
        assert!(got[0].abs() < 1e-12);
        assert!((got[1] - want1).abs() < 1e-9, "got {} want {}", got[1], want1);
    }

    #[test]
    fn hypoellipticity_a_two_shears() {
        let model = FlowModel::new(
            FourierStreamField::zero(),
            vec![single_mode([0, 1], 1.0, 0.0), single_mode([1, 0], 1.0, 0.0)],
        )
        .unwrap();
        let mut rng = CounterRng::from_words(&[15]);
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.uniform(), rng.uniform()])
            .collect();
        let report = check_hypoellipticity(&model, Condition::A, &pts, 2).unwrap();
        assert!(report.pass);
        assert_eq!(report.required_rank, 2);
    }

    #[test]
    fn hypoellipticity_single_field_fails() {
        // Constructor forbids d=1, so drive the rank check directly through
        // a model whose two "fields" are identical: brackets all vanish.
        let f = single_mode([0, 1], 1.0, 0.0);
        let model = FlowModel::new(FourierStreamField::zero(), vec![f.clone(), f]).unwrap();
        let pts = vec![vec![0.3, 0.7]];
        let err = check_hypoellipticity(&model, Condition::A, &pts, 3).unwrap_err();
        match err {
            FlowModelError::RankDeficient { rank, required } => {
                assert_eq!(rank, 1);
                assert_eq!(required, 2);
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn hypoellipticity_b_rejects_diagonal() {
        let model = FlowModel::default_model();
        let pts = vec![vec![0.3, 0.7, 0.3, 0.7]];
        let err = check_hypoellipticity(&model, Condition::B, &pts, 2).unwrap_err();
        assert!(matches!(err, FlowModelError::DiagonalPair { .. }));
    }

    #[test]
    fn hypoellipticity_default_model_all_conditions() {
        let model = FlowModel::default_model();
        let mut rng = CounterRng::from_words(&[16]);
        let pts_a: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.uniform(), rng.uniform()])
            .collect();
        assert!(check_hypoellipticity(&model, Condition::A, &pts_a, 3)
            .unwrap()
            .pass);
        let pts_b: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                loop {
                    let p = vec![rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()];
                    if torus_dist([p[0], p[1]], [p[2], p[3]]) >= DIAGONAL_MARGIN {
                        break p;
                    }
                }
            })
            .collect();
        assert!(check_hypoellipticity(&model, Condition::B, &pts_b, 3)
            .unwrap()
            .pass);
        let pts_c: Vec<Vec<f64>> = (0..10)
            .map(|_| vec![rng.uniform(), rng.uniform(), rng.uniform_in(0.0, TAU)])
            .collect();
        assert!(check_hypoellipticity(&model, Condition::C, &pts_c, 3)
            .unwrap()
            .pass);
    }

    #[test]
    fn text_round_trip() {
        let model = FlowModel::default_model();
        let text = to_text(&model);
        let back = from_text(&text).unwrap();
        assert_eq!(model, back);
        assert_eq!(text, to_text(&back));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(from_text("not a model").is_err());
        assert!(from_text("torusflow-model v1\nfield drift modes 1\n0 0 1 0\n").is_err());
    }

    #[test]
    fn drift_residual_linear_in_drift_field() {
        let base = FlowModel::new(
            single_mode([1, 1], 0.2, 0.4),
            vec![single_mode([0, 1], 0.3, 0.0), single_mode([1, 0], 0.3, 0.0)],
        )
        .unwrap();
        let scaled = FlowModel::new(
            single_mode([1, 1], 0.4, 0.4),
            base.noise_fields().to_vec(),
        )
        .unwrap();
        let r1 = check_zero_drift(&base).unwrap();
        let r2 = check_zero_drift(&scaled).unwrap();
        // Stream drift fields also have zero mean, so both residuals vanish;
        // exercise linearity through the quadrature itself.
        assert!((2.0 * r1[0] - r2[0]).abs() < 1e-10);
        assert!((2.0 * r1[1] - r2[1]).abs() < 1e-10);
    }
}
