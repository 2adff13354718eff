//! Stratonovich integration of point, tangent, and multi-point motion under
//! one shared noise realization, plus Lyapunov exponent estimators.
//!
//! The scheme is Heun predictor-corrector, which converges to the
//! Stratonovich solution for smooth fields without simulating Levy areas.
//! Positions are kept as a torus point plus integer winding counts, so the
//! R^2 lift needed for escape statistics never loses precision at large t.

use crate::flow_model::FlowModel;
use crate::noise::NoisePath;
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdeError {
    #[error("step moved a point {0:.3} torus widths; reduce the step size")]
    StepUnstable(f64),
    #[error("time {t} outside the path horizon {horizon}")]
    OutOfHorizon { t: f64, horizon: f64 },
}

/// Torus point with winding counts; position() is the R^2 lift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedPoint {
    pub frac: [f64; 2],
    pub wind: [i64; 2],
}

impl LiftedPoint {
    pub fn new(x: [f64; 2]) -> Self {
        let mut p = LiftedPoint {
            frac: x,
            wind: [0, 0],
        };
        p.rewrap();
        p
    }

    pub fn position(&self) -> [f64; 2] {
        [
            self.frac[0] + self.wind[0] as f64,
            self.frac[1] + self.wind[1] as f64,
        ]
    }

    #[inline]
    pub fn rewrap(&mut self) {
        for i in 0..2 {
            let f = self.frac[i].floor();
            if f != 0.0 {
                self.frac[i] -= f;
                self.wind[i] += f as i64;
            }
        }
    }

    /// Displacement of the lift from another lifted point.
    pub fn delta(&self, other: &LiftedPoint) -> [f64; 2] {
        let a = self.position();
        let b = other.position();
        [a[0] - b[0], a[1] - b[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentState {
    pub position: LiftedPoint,
    pub frame: [[f64; 2]; 2],
}

impl TangentState {
    pub fn identity_at(x: [f64; 2]) -> Self {
        TangentState {
            position: LiftedPoint::new(x),
            frame: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn det(&self) -> f64 {
        self.frame[0][0] * self.frame[1][1] - self.frame[0][1] * self.frame[1][0]
    }
}

fn check_span(path: &NoisePath, t: f64) -> Result<(), SdeError> {
    if t < -1e-9 || t > path.horizon + 1e-9 {
        return Err(SdeError::OutOfHorizon {
            t,
            horizon: path.horizon,
        });
    }
    Ok(())
}

/// One forward Heun step of a single point; dw spans the step.
#[inline]
pub fn heun_point(
    model: &FlowModel,
    p: &mut LiftedPoint,
    dt: f64,
    dw: &[f64],
) -> Result<(), SdeError> {
    let x = p.frac;
    let u0 = model.stage_velocity(x, dt, dw);
    let xp = [x[0] + u0[0], x[1] + u0[1]];
    let u1 = model.stage_velocity(xp, dt, dw);
    let dx = [0.5 * (u0[0] + u1[0]), 0.5 * (u0[1] + u1[1])];
    let norm = dx[0].hypot(dx[1]);
    if norm > 0.25 {
        return Err(SdeError::StepUnstable(norm));
    }
    p.frac = [x[0] + dx[0], x[1] + dx[1]];
    p.rewrap();
    Ok(())
}

/// Advance points from t1 to t2 under one shared realization.
pub fn flow_map(
    model: &FlowModel,
    points: &mut [LiftedPoint],
    path: &NoisePath,
    t1: f64,
    t2: f64,
) -> Result<(), SdeError> {
    assert!(t1 <= t2, "use inverse_flow_map for backward transport");
    check_span(path, t1)?;
    check_span(path, t2)?;
    let i1 = path.index_of(t1);
    let i2 = path.index_of(t2);
    let h = path.step();
    let mut dw = vec![0.0; path.dim];
    for idx in i1..i2 {
        path.increments_into(idx, &mut dw);
        for p in points.iter_mut() {
            heun_point(model, p, h, &dw)?;
        }
    }
    Ok(())
}

/// Transport points backward from t2 to t1 by integrating the time-reversed
/// equation with the same increments in reverse order.
pub fn inverse_flow_map(
    model: &FlowModel,
    points: &mut [LiftedPoint],
    path: &NoisePath,
    t2: f64,
    t1: f64,
) -> Result<(), SdeError> {
    assert!(t2 >= t1);
    check_span(path, t1)?;
    check_span(path, t2)?;
    let i1 = path.index_of(t1);
    let i2 = path.index_of(t2);
    let h = path.step();
    let mut dw = vec![0.0; path.dim];
    for idx in (i1..i2).rev() {
        path.increments_into(idx, &mut dw);
        for w in dw.iter_mut() {
            *w = -*w;
        }
        for p in points.iter_mut() {
            heun_point(model, p, -h, &dw)?;
        }
    }
    Ok(())
}

#[inline]
fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// One joint Heun step of position and variational frame.
#[inline]
pub fn heun_tangent(
    model: &FlowModel,
    s: &mut TangentState,
    dt: f64,
    dw: &[f64],
) -> Result<(), SdeError> {
    let x = s.position.frac;
    let u0 = model.stage_velocity(x, dt, dw);
    let j0 = model.stage_jacobian(x, dt, dw);
    let k0 = mat_mul(j0, s.frame);
    let xp = [x[0] + u0[0], x[1] + u0[1]];
    let mut fp = s.frame;
    for i in 0..2 {
        for j in 0..2 {
            fp[i][j] += k0[i][j];
        }
    }
    let u1 = model.stage_velocity(xp, dt, dw);
    let j1 = model.stage_jacobian(xp, dt, dw);
    let k1 = mat_mul(j1, fp);
    let dx = [0.5 * (u0[0] + u1[0]), 0.5 * (u0[1] + u1[1])];
    let norm = dx[0].hypot(dx[1]);
    if norm > 0.25 {
        return Err(SdeError::StepUnstable(norm));
    }
    s.position.frac = [x[0] + dx[0], x[1] + dx[1]];
    s.position.rewrap();
    for i in 0..2 {
        for j in 0..2 {
            s.frame[i][j] += 0.5 * (k0[i][j] + k1[i][j]);
        }
    }
    Ok(())
}

/// Joint Heun step of a point and one tangent vector (cheaper than a frame).
#[inline]
pub fn heun_point_vec(
    model: &FlowModel,
    p: &mut LiftedPoint,
    v: &mut [f64; 2],
    dt: f64,
    dw: &[f64],
) -> Result<(), SdeError> {
    let x = p.frac;
    let u0 = model.stage_velocity(x, dt, dw);
    let j0 = model.stage_jacobian(x, dt, dw);
    let k0 = [j0[0][0] * v[0] + j0[0][1] * v[1], j0[1][0] * v[0] + j0[1][1] * v[1]];
    let xp = [x[0] + u0[0], x[1] + u0[1]];
    let vp = [v[0] + k0[0], v[1] + k0[1]];
    let u1 = model.stage_velocity(xp, dt, dw);
    let j1 = model.stage_jacobian(xp, dt, dw);
    let k1 = [j1[0][0] * vp[0] + j1[0][1] * vp[1], j1[1][0] * vp[0] + j1[1][1] * vp[1]];
    let dx = [0.5 * (u0[0] + u1[0]), 0.5 * (u0[1] + u1[1])];
    let norm = dx[0].hypot(dx[1]);
    if norm > 0.25 {
        return Err(SdeError::StepUnstable(norm));
    }
    p.frac = [x[0] + dx[0], x[1] + dx[1]];
    p.rewrap();
    v[0] += 0.5 * (k0[0] + k1[0]);
    v[1] += 0.5 * (k0[1] + k1[1]);
    Ok(())
}

pub fn tangent_flow(
    model: &FlowModel,
    state: &mut TangentState,
    path: &NoisePath,
    t1: f64,
    t2: f64,
) -> Result<(), SdeError> {
    assert!(t1 <= t2);
    check_span(path, t1)?;
    check_span(path, t2)?;
    let i1 = path.index_of(t1);
    let i2 = path.index_of(t2);
    let h = path.step();
    let mut dw = vec![0.0; path.dim];
    for idx in i1..i2 {
        path.increments_into(idx, &mut dw);
        heun_tangent(model, state, h, &dw)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    pub stderr: f64,
    pub t: f64,
}

/// Top exponent by renormalized tangent-vector growth; stderr by batch means
/// over per-interval log-stretches.
pub fn top_lyapunov(
    model: &FlowModel,
    seed: u64,
    t_total: f64,
    h: f64,
    renorm_interval: f64,
) -> Result<LyapunovEstimate, SdeError> {
    let mut rng = CounterRng::from_words(&[seed, 0x6c79_6170]);
    let x0 = [rng.uniform(), rng.uniform()];
    let ang = rng.uniform_in(0.0, std::f64::consts::TAU);
    top_lyapunov_from(model, seed, x0, [ang.cos(), ang.sin()], t_total, h, renorm_interval)
}

pub fn top_lyapunov_from(
    model: &FlowModel,
    seed: u64,
    x0: [f64; 2],
    v0: [f64; 2],
    t_total: f64,
    h: f64,
    renorm_interval: f64,
) -> Result<LyapunovEstimate, SdeError> {
    assert!(t_total > 4.0 * renorm_interval);
    let path = NoisePath::sample(seed, model.d(), t_total, h);
    let mut state = TangentState::identity_at(x0);
    let n0 = v0[0].hypot(v0[1]);
    state.frame = [[v0[0] / n0, 0.0], [v0[1] / n0, 0.0]];
    let n_intervals = (t_total / renorm_interval).floor() as usize;
    let mut logs = Vec::with_capacity(n_intervals);
    let mut dw = vec![0.0; path.dim];
    let steps_per = (renorm_interval / h).round() as u64;
    let mut idx = 0u64;
    for _ in 0..n_intervals {
        for _ in 0..steps_per {
            path.increments_into(idx, &mut dw);
            heun_tangent(model, &mut state, h, &dw)?;
            idx += 1;
        }
        let v = [state.frame[0][0], state.frame[1][0]];
        let n = v[0].hypot(v[1]);
        logs.push(n.ln());
        state.frame[0][0] /= n;
        state.frame[1][0] /= n;
    }
    Ok(batch_mean_estimate(&logs, renorm_interval))
}

fn batch_mean_estimate(logs: &[f64], dt: f64) -> LyapunovEstimate {
    let n = logs.len();
    let mean: f64 = logs.iter().sum::<f64>() / n as f64;
    let nb = 20.min(n / 2).max(2);
    let per = n / nb;
    let mut bm = Vec::with_capacity(nb);
    for b in 0..nb {
        let sl = &logs[b * per..(b + 1) * per];
        bm.push(sl.iter().sum::<f64>() / per as f64);
    }
    let bmean: f64 = bm.iter().sum::<f64>() / nb as f64;
    let var: f64 = bm.iter().map(|x| (x - bmean) * (x - bmean)).sum::<f64>() / (nb - 1) as f64;
    LyapunovEstimate {
        lambda: mean / dt,
        stderr: (var / nb as f64).sqrt() / dt,
        t: n as f64 * dt,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub lambdas: [f64; 2],
    pub sum: f64,
    pub stderr: [f64; 2],
    pub t: f64,
}

/// Full spectrum by QR (Gram-Schmidt) re-orthonormalization of a frame.
pub fn lyapunov_spectrum(
    model: &FlowModel,
    seed: u64,
    t_total: f64,
    h: f64,
    renorm_interval: f64,
) -> Result<SpectrumEstimate, SdeError> {
    let mut rng = CounterRng::from_words(&[seed, 0x7370_6563]);
    let x0 = [rng.uniform(), rng.uniform()];
    let path = NoisePath::sample(seed, model.d(), t_total, h);
    let mut state = TangentState::identity_at(x0);
    let n_intervals = (t_total / renorm_interval).floor() as usize;
    let steps_per = (renorm_interval / h).round() as u64;
    let mut logs1 = Vec::with_capacity(n_intervals);
    let mut logs2 = Vec::with_capacity(n_intervals);
    let mut dw = vec![0.0; path.dim];
    let mut idx = 0u64;
    for _ in 0..n_intervals {
        for _ in 0..steps_per {
            path.increments_into(idx, &mut dw);
            heun_tangent(model, &mut state, h, &dw)?;
            idx += 1;
        }
        // Gram-Schmidt on columns.
        let c1 = [state.frame[0][0], state.frame[1][0]];
        let r11 = c1[0].hypot(c1[1]);
        let q1 = [c1[0] / r11, c1[1] / r11];
        let c2 = [state.frame[0][1], state.frame[1][1]];
        let r12 = q1[0] * c2[0] + q1[1] * c2[1];
        let c2o = [c2[0] - r12 * q1[0], c2[1] - r12 * q1[1]];
        let r22 = c2o[0].hypot(c2o[1]);
        logs1.push(r11.ln());
        logs2.push(r22.ln());
        state.frame = [[q1[0], c2o[0] / r22], [q1[1], c2o[1] / r22]];
    }
    let e1 = batch_mean_estimate(&logs1, renorm_interval);
    let e2 = batch_mean_estimate(&logs2, renorm_interval);
    let mut lams = [e1.lambda, e2.lambda];
    let mut errs = [e1.stderr, e2.stderr];
    if lams[0] < lams[1] {
        lams.swap(0, 1);
        errs.swap(0, 1);
    }
    Ok(SpectrumEstimate {
        lambdas: lams,
        sum: lams[0] + lams[1],
        stderr: errs,
        t: e1.t,
    })
}
