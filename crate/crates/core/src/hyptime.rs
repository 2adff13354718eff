//! Hyperbolic stopping times on material curves, and the inductive partition
//! of a curve into pieces with uniform expansion and backward contraction.
//!
//! Detection uses the per-vertex cumulative tangent log-stretch S_m carried
//! by the curve. With the discounted stretch G_m = S_m - lambda1' m n0, the
//! backward-contraction condition "S_tau - S_m >= lambda1'(tau - m) for all
//! m < tau" is exactly "G_tau is a running maximum", so candidate times are
//! found in O(1) per block per vertex. Candidates are then screened by the
//! full condition battery: expansion and local image length, smoothness of
//! the r-neighborhood, explicit backward integration against the geometric
//! envelope, and the distortion statistic.

use crate::curve::{
    advect_curve, holder_norm, AdvectOptions, CurveError, MaterialCurve, SeedCurve,
};
use crate::flow_model::FlowModel;
use crate::noise::NoisePath;
use crate::sde::{heun_point, LiftedPoint, SdeError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HypError {
    #[error("no hyperbolic time found within T_max = {0}")]
    NotFoundWithin(f64),
    #[error("material point {0} too close to a curve end for the r-window")]
    WindowClipped(f64),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error("assigned measure stalled at {coverage:.4} for {blocks} blocks")]
    CoverageStall { coverage: f64, blocks: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HypParams {
    /// Local-curve scale of the stopping-time theorem.
    pub r: f64,
    /// Holder exponent for smoothness checks.
    pub alpha: f64,
    /// Contraction rate, chosen well below the measured lambda_1. The gap
    /// between the realized along-curve stretch rate and this value sets how
    /// fast material with a bad early stretch history recovers a valid
    /// stopping time, so a small value keeps the slow tail of the partition
    /// from ballooning before it can be stopped.
    pub lambda1p: f64,
    /// Stopping times are multiples of this block length.
    pub n0: f64,
    /// Required tangent expansion at the stopping time.
    pub e_threshold: f64,
    /// Holder bound accepted for the local curve (condition b).
    pub k_bound: f64,
    /// Detection horizon.
    pub t_max: f64,
    pub advect: AdvectOptions,
}

impl Default for HypParams {
    fn default() -> Self {
        HypParams {
            r: 0.05,
            alpha: 0.25,
            // default model: lambda_1 ~ 0.29; a low rate makes records frequent
            // and the backward envelope attainable at finite resolution
            lambda1p: 0.05,
            n0: 1.0,
            e_threshold: 10.0,
            k_bound: 25.0,
            t_max: 200.0,
            advect: AdvectOptions {
                rho_max: 2e-3,
                theta_max: 15.0f64.to_radians(),
                max_vertices: 1_000_000,
                insert_mode: crate::curve::InsertMode::Interpolated,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperbolicEvent {
    pub x: f64,
    pub tau: f64,
    pub expansion: f64,
    /// backcheck[k-1] = worst pairwise contraction ratio at tau - k n0.
    pub backcheck: Vec<f64>,
    pub distortion_holder: f64,
    pub local_k_hat: f64,
    pub local_curve: MaterialCurve,
}

/// Working window around one material point, advanced block by block.
struct Tracker {
    work: MaterialCurve,
    s: f64,
    gmax: f64,
    g_hist: Vec<f64>,
}

impl Tracker {
    fn new(curve: &MaterialCurve, s: f64, p: &HypParams) -> Result<Self, HypError> {
        assert_eq!(curve.time, 0.0, "detector needs a time-zero curve");
        let lo = curve.params[0];
        let hi = *curve.params.last().unwrap();
        assert!(s > lo && s < hi);
        // Material window: the image only ever expands, so a window that is
        // generous at time zero stays sufficient after trimming.
        let w = 3.0 * p.r;
        let a = (s - w).max(lo);
        let b = (s + w).min(hi);
        let n = ((b - a) / p.advect.rho_max).ceil() as usize;
        let mut params: Vec<f64> = (0..n.max(8))
            .map(|i| a + (b - a) * i as f64 / (n.max(8) - 1) as f64)
            .collect();
        if !params.iter().any(|&q| q == s) {
            params.push(s);
            params.sort_by(|x, y| x.partial_cmp(y).unwrap());
        }
        let points = params
            .iter()
            .map(|&q| LiftedPoint::new(curve.seed.eval(q)))
            .collect();
        let tangents = params
            .iter()
            .map(|&q| crate::curve::TangentVec {
                dir: curve.seed.tangent(q),
                log_stretch: 0.0,
            })
            .collect();
        let work = MaterialCurve {
            seed: curve.seed.clone(),
            params,
            points,
            tangents: Some(tangents),
            time: 0.0,
            orientation_ltr: curve.orientation_ltr,
        };
        Ok(Tracker {
            work,
            s,
            gmax: 0.0,
            g_hist: vec![0.0],
        })
    }

    fn s_vertex(&self) -> usize {
        self.work
            .params
            .binary_search_by(|p| p.partial_cmp(&self.s).unwrap())
            .expect("tracked parameter must stay a vertex")
    }

    /// Advance one block; returns (S_m, is_record).
    fn step_block(
        &mut self,
        model: &FlowModel,
        path: &NoisePath,
        p: &HypParams,
    ) -> Result<(f64, bool), HypError> {
        // Sub-block stepping with eager trimming keeps the window from
        // ballooning during bursts of strong local expansion.
        let sub = 5;
        for _ in 0..sub {
            advect_curve(model, &mut self.work, path, p.n0 / sub as f64, &p.advect)?;
            let vi = self.s_vertex();
            let cum = self.work.cum_arclength();
            if *cum.last().unwrap() > 2.4 * p.r {
                let c = cum[vi];
                let lo = self.work.param_at_arclength(&cum, c - 0.9 * p.r);
                let hi = self.work.param_at_arclength(&cum, c + 0.9 * p.r);
                self.work.trim(lo, hi);
            }
        }
        let m = self.g_hist.len() as f64;
        let vi = self.s_vertex();
        let s_m = self.work.tangents.as_ref().unwrap()[vi].log_stretch;
        let g = s_m - p.lambda1p * m * p.n0;
        let record = g >= self.gmax;
        self.gmax = self.gmax.max(g);
        self.g_hist.push(g);
        Ok((s_m, record))
    }
}

/// Extract the image-arclength r-neighborhood of s as a sub-curve.
fn local_window(work: &MaterialCurve, vi: usize, r: f64) -> Option<MaterialCurve> {
    let cum = work.cum_arclength();
    let c = cum[vi];
    if c < 0.5 * r || *cum.last().unwrap() - c < 0.5 * r {
        return None;
    }
    let i_lo = cum.partition_point(|&l| l < c - 0.5 * r).saturating_sub(1);
    let i_hi = (cum.partition_point(|&l| l <= c + 0.5 * r)).min(cum.len() - 1);
    if i_hi - i_lo < 4 {
        return None;
    }
    Some(work.slice(i_lo, i_hi))
}

/// Backward-contraction check. Pairwise distances of window sample points
/// at every earlier block are obtained by replaying their forward
/// trajectories under the same noise (backward re-integration would amplify
/// scheme error at the positive backward exponent and drown the signal).
/// Returns the per-k worst ratios (k = blocks before tau), or None on
/// envelope violation.
fn backward_check(
    model: &FlowModel,
    window: &MaterialCurve,
    path: &NoisePath,
    tau: f64,
    p: &HypParams,
) -> Result<Option<Vec<f64>>, HypError> {
    let n = window.points.len();
    let picks = [0, n / 4, n / 2, 3 * n / 4, n - 1];
    let npts = picks.len();
    let mut pts: Vec<LiftedPoint> = picks
        .iter()
        .map(|&i| LiftedPoint::new(window.seed.eval(window.params[i])))
        .collect();
    let blocks = (tau / p.n0).round() as usize;
    let h = path.step();
    let steps_per = (p.n0 / h).round() as u64;
    let mut dw = vec![0.0; path.dim];
    let mut idx = 0u64;
    // dists[m][pair] = pairwise distances after m blocks (m = 0 .. blocks).
    let pair_dists = |pts: &[LiftedPoint]| {
        let mut out = Vec::with_capacity(npts * (npts - 1) / 2);
        for i in 0..npts {
            for j in i + 1..npts {
                let d = pts[j].delta(&pts[i]);
                out.push(d[0].hypot(d[1]).max(1e-12));
            }
        }
        out
    };
    let mut dists = Vec::with_capacity(blocks + 1);
    dists.push(pair_dists(&pts));
    for _ in 0..blocks {
        for _ in 0..steps_per {
            path.increments_into(idx, &mut dw);
            for q in pts.iter_mut() {
                heun_point(model, q, h, &dw)?;
            }
            idx += 1;
        }
        dists.push(pair_dists(&pts));
    }
    let d_tau = &dists[blocks];
    let mut ratios = Vec::with_capacity(blocks);
    for k in 1..=blocks {
        let d_back = &dists[blocks - k];
        let worst = d_back
            .iter()
            .zip(d_tau.iter())
            .map(|(b, t)| b / t)
            .fold(0.0f64, f64::max);
        if worst > (-p.lambda1p * k as f64 * p.n0).exp() {
            return Ok(None);
        }
        ratios.push(worst);
    }
    Ok(Some(ratios))
}

/// Distortion statistic: empirical Holder constant of ln ||dphi^{-1}|T||
/// (equivalently of the per-vertex log-stretch) over the local window.
fn distortion_holder(window: &MaterialCurve, alpha: f64) -> f64 {
    let tans = window.tangents.as_ref().unwrap();
    let cum = window.cum_arclength();
    let n = window.points.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let rho = cum[j] - cum[i];
            if rho > 1e-6 {
                let d = (tans[j].log_stretch - tans[i].log_stretch).abs();
                worst = worst.max(d / rho.powf(alpha));
            }
        }
    }
    worst
}

/// Evaluate the full condition battery at a fixed candidate time; the
/// tracker must already be advanced to tau.
fn try_accept(
    model: &FlowModel,
    tracker: &Tracker,
    path: &NoisePath,
    tau: f64,
    s_m: f64,
    p: &HypParams,
) -> Result<Option<HyperbolicEvent>, HypError> {
    let debug = std::env::var("TORUSFLOW_TRACE").is_ok();
    if s_m < p.e_threshold.ln() {
        return Ok(None);
    }
    let vi = tracker.s_vertex();
    if tracker.work.arclength() < p.r {
        if debug {
            eprintln!("  reject tau {tau}: image too short");
        }
        return Ok(None);
    }
    let Some(window) = local_window(&tracker.work, vi, p.r) else {
        if debug {
            eprintln!("  reject tau {tau}: window clipped");
        }
        return Ok(None);
    };
    // (b) local smoothness
    let smooth = holder_norm(&window, p.alpha)?;
    if smooth.k_hat > p.k_bound {
        if debug {
            eprintln!("  reject tau {tau}: k_hat {:.2}", smooth.k_hat);
        }
        return Ok(None);
    }
    // (c) backward envelope
    let Some(ratios) = backward_check(model, &window, path, tau, p)? else {
        if debug {
            eprintln!("  reject tau {tau}: backward envelope");
        }
        return Ok(None);
    };
    // (d) distortion, recorded
    let dist = distortion_holder(&window, p.alpha);
    Ok(Some(HyperbolicEvent {
        x: tracker.s,
        tau,
        expansion: s_m.exp(),
        backcheck: ratios,
        distortion_holder: dist,
        local_k_hat: smooth.k_hat,
        local_curve: window,
    }))
}

/// Scan candidate times tau = n0, 2 n0, ... <= T_max for the first one at
/// which all conditions hold for the material point s.
pub fn detect_hyperbolic_time(
    model: &FlowModel,
    curve: &MaterialCurve,
    s: f64,
    path: &NoisePath,
    p: &HypParams,
) -> Result<HyperbolicEvent, HypError> {
    let mut tracker = Tracker::new(curve, s, p)?;
    let blocks = (p.t_max / p.n0).floor() as usize;
    let debug = std::env::var("TORUSFLOW_TRACE").is_ok();
    for m in 1..=blocks {
        let (s_m, record) = tracker.step_block(model, path, p)?;
        if debug {
            eprintln!(
                "trace block {m}: verts {} len {:.4} S {:.3} rec {}",
                tracker.work.len_vertices(),
                tracker.work.arclength(),
                s_m,
                record
            );
        }
        if !record {
            continue;
        }
        let tau = m as f64 * p.n0;
        if let Some(ev) = try_accept(model, &tracker, path, tau, s_m, p)? {
            return Ok(ev);
        }
    }
    Err(HypError::NotFoundWithin(p.t_max))
}

/// Re-run the condition battery at one fixed time (re-validation of a
/// partition piece's stopping time).
pub fn check_event_at(
    model: &FlowModel,
    curve: &MaterialCurve,
    s: f64,
    path: &NoisePath,
    tau: f64,
    p: &HypParams,
) -> Result<Option<HyperbolicEvent>, HypError> {
    let mut tracker = Tracker::new(curve, s, p)?;
    let blocks = (tau / p.n0).round() as usize;
    let mut s_m = 0.0;
    for _ in 1..=blocks {
        (s_m, _) = tracker.step_block(model, path, p)?;
    }
    try_accept(model, &tracker, path, tau, s_m, p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionPiece {
    pub s_lo: f64,
    pub s_hi: f64,
    /// Stopping time in blocks.
    pub n_j: u32,
    pub created_step: u32,
    /// Image polyline length at creation time.
    pub image_length: f64,
    /// Sparse trace of the piece's image at its stopping time:
    /// (material parameter, lifted position). Endpoints plus the polyline
    /// vertices that fell inside the piece, capped at 32 entries. Enough to
    /// re-seed the image as the starting curve of a later stage.
    pub image_samples: Vec<(f64, [f64; 2])>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionResult {
    pub pieces: Vec<PartitionPiece>,
    pub coverage: f64,
    pub blocks: u32,
    pub unassigned: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PartitionParams {
    pub hyp: HypParams,
    pub eps_cover: f64,
    pub max_blocks: usize,
    pub stall_window: usize,
    /// Validate the backward length envelope for each candidate piece
    /// before emitting it (deferred otherwise).
    pub validate_envelope: bool,
    /// Require the discounted stretch to beat its running maximum by this
    /// margin before a vertex counts as stopped. At a bare record the
    /// backward envelope holds with equality at the historical argmax, so
    /// piece-level fluctuations make validation fail; the margin buys the
    /// envelope room and stops rejected material from re-firing every block.
    pub record_slack: f64,
    /// Residual slivers with less material than this fraction of the whole
    /// curve may be dropped (and booked as permanently unassigned) once
    /// their bookkeeping cost outweighs their measure. Total dropped mass is
    /// capped well below `eps_cover`.
    pub drop_sliver_frac: f64,
}

impl Default for PartitionParams {
    fn default() -> Self {
        PartitionParams {
            hyp: HypParams::default(),
            eps_cover: 1e-3,
            max_blocks: 400,
            stall_window: 150,
            validate_envelope: true,
            record_slack: 0.5,
            drop_sliver_frac: 1e-9,
        }
    }
}

struct Segment {
    curve: MaterialCurve,
    /// Running maximum of the discounted stretch per vertex.
    gmax: Vec<f64>,
    /// Log-stretch baseline per vertex (stretch accumulated during warmup,
    /// before the partition clock started).
    base: Vec<f64>,
}

/// Rebuild a per-vertex auxiliary vector after refinement inserted vertices.
/// `combine` merges the neighboring old values for an inserted vertex.
fn realign_aux(
    new_params: &[f64],
    old_params: &[f64],
    old_vals: &[f64],
    combine: fn(f64, f64) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(new_params.len());
    let mut oi = 0usize;
    for &q in new_params {
        if oi < old_params.len() && old_params[oi] == q {
            out.push(old_vals[oi]);
            oi += 1;
        } else {
            let left = if oi > 0 { old_vals[oi - 1] } else { old_vals[oi] };
            let right = if oi < old_vals.len() {
                old_vals[oi]
            } else {
                old_vals[oi - 1]
            };
            out.push(combine(left, right));
        }
    }
    out
}

impl Segment {
    fn realign(&mut self, old_params: &[f64], old_gmax: &[f64], old_base: &[f64]) {
        // gmax: stricter neighbor record, so inserted vertices cannot fire
        // on a record they never earned.
        self.gmax = realign_aux(&self.curve.params, old_params, old_gmax, f64::max);
        self.base = realign_aux(&self.curve.params, old_params, old_base, |a, b| {
            0.5 * (a + b)
        });
    }
}

/// Forward length envelope of Prop-style condition (b) for one piece:
/// l(phi_m piece) <= l(phi_n piece) e^{-lambda1'(n-m) n0} for 1 <= m < n.
fn piece_envelope_ok(
    model: &FlowModel,
    seed: &SeedCurve,
    s_lo: f64,
    s_hi: f64,
    path: &NoisePath,
    warmup_blocks: usize,
    post_blocks: usize,
    expected_final: f64,
    p: &HypParams,
) -> Result<bool, HypError> {
    let k = 5;
    let mut pts: Vec<LiftedPoint> = (0..k)
        .map(|i| {
            let s = s_lo + (s_hi - s_lo) * i as f64 / (k - 1) as f64;
            LiftedPoint::new(seed.eval(s))
        })
        .collect();
    let mut lens = Vec::with_capacity(post_blocks);
    let h = path.step();
    let steps_per = (p.n0 / h).round() as u64;
    let mut dw = vec![0.0; path.dim];
    let mut idx = 0u64;
    let poly_len = |pts: &[LiftedPoint]| {
        pts.windows(2)
            .map(|w| {
                let d = w[1].delta(&w[0]);
                d[0].hypot(d[1])
            })
            .sum::<f64>()
    };
    for block in 0..warmup_blocks + post_blocks {
        for _ in 0..steps_per {
            path.increments_into(idx, &mut dw);
            for q in pts.iter_mut() {
                heun_point(model, q, h, &dw)?;
            }
            idx += 1;
        }
        if block >= warmup_blocks {
            let l = poly_len(&pts);
            // Cheap early rejection: the polyline image length at creation
            // predicts the integrated final length, so a gross envelope
            // violation shows up without integrating the remaining blocks.
            // The margin absorbs the polyline-vs-integration mismatch; exact
            // passes are still confirmed against the integrated final length.
            let m = block - warmup_blocks + 1;
            if m < post_blocks {
                let bound =
                    3.0 * expected_final * (-p.lambda1p * (post_blocks - m) as f64 * p.n0).exp();
                if l > bound {
                    return Ok(false);
                }
            }
            lens.push(l);
        }
    }
    let l_final = *lens.last().unwrap();
    for (mi, &l) in lens.iter().enumerate().take(post_blocks - 1) {
        let m = mi + 1;
        let bound = l_final * (-p.lambda1p * (post_blocks - m) as f64 * p.n0).exp();
        if l > bound {
            if std::env::var("TORUSFLOW_TRACE_ENV").is_ok() {
                eprintln!(
                    "    env fail: n_j {post_blocks} at m {m}: l {l:.3e} bound {bound:.3e} l_final {l_final:.3e}"
                );
            }
            return Ok(false);
        }
    }
    Ok(true)
}

/// Re-validate an emitted piece independently of the partitioner: integrate
/// a fresh subsample of the piece from time zero and check the backward
/// length envelope at every block checkpoint up to its stopping time.
pub fn validate_piece(
    model: &FlowModel,
    seed: &SeedCurve,
    piece: &PartitionPiece,
    path: &NoisePath,
    p: &HypParams,
) -> Result<bool, HypError> {
    piece_envelope_ok(
        model,
        seed,
        piece.s_lo,
        piece.s_hi,
        path,
        0,
        piece.n_j as usize,
        piece.image_length,
        p,
    )
}

/// Inductive partition of a time-zero curve into pieces whose image length
/// at their stopping time lies in [r/100, r/50].
///
/// At each block, vertices at a fresh discounted-stretch record with
/// Lifted position at image arclength c along the polyline.
fn position_at_arclength(curve: &MaterialCurve, cum: &[f64], c: f64) -> [f64; 2] {
    let last = *cum.last().unwrap();
    let c = c.clamp(0.0, last);
    let j = match cum.binary_search_by(|v| v.partial_cmp(&c).unwrap()) {
        Ok(j) => return curve.points[j].position(),
        Err(j) => j.clamp(1, cum.len() - 1),
    };
    let f = (c - cum[j - 1]) / (cum[j] - cum[j - 1]).max(1e-300);
    let a = curve.points[j - 1].position();
    let b = curve.points[j].position();
    [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
}

/// Endpoint-plus-interior-vertex trace of the image slice [c_lo, c_hi].
fn sample_image(
    curve: &MaterialCurve,
    cum: &[f64],
    c_lo: f64,
    c_hi: f64,
    m_lo: f64,
    m_hi: f64,
) -> Vec<(f64, [f64; 2])> {
    let mut out = vec![(m_lo, position_at_arclength(curve, cum, c_lo))];
    let i_lo = cum.partition_point(|&v| v <= c_lo + 1e-15);
    let i_hi = cum.partition_point(|&v| v < c_hi - 1e-15);
    let interior = i_hi.saturating_sub(i_lo);
    let stride = interior / 30 + 1;
    for i in (i_lo..i_hi).step_by(stride) {
        out.push((curve.params[i], curve.points[i].position()));
    }
    out.push((m_hi, position_at_arclength(curve, cum, c_hi)));
    out
}

/// expansion above threshold form the stopping set; its maximal runs are
/// extended to the nearest obstacle within r/2 of image arclength (or by
/// r/100), divided into segments of image length in [r/100, r/50], pulled
/// back to material intervals, and removed from the active curve. Obstacles
/// are the active-segment endpoints (curve ends and boundaries of earlier
/// pieces) and the boundaries of the current stopping set.
pub fn partition_curve(
    model: &FlowModel,
    curve: &MaterialCurve,
    path: &NoisePath,
    pp: &PartitionParams,
) -> Result<PartitionResult, HypError> {
    assert_eq!(curve.time, 0.0);
    let s0 = curve.params[0];
    let s1 = *curve.params.last().unwrap();
    partition_curve_from(model, curve.seed.clone(), s0, s1, path, pp, 0)
}

/// Partition of the image at time `warmup_blocks * n0` of the material
/// interval [s_lo, s_hi]: the curve is first advected through the warmup
/// (inheriting whatever geometry the flow gave it) and the stopping clock,
/// stretch baseline, and envelope all start after the warmup. This is how
/// deeper generations of the nested construction re-enter the partitioner.
pub fn partition_curve_from(
    model: &FlowModel,
    seed: SeedCurve,
    s_lo: f64,
    s_hi: f64,
    path: &NoisePath,
    pp: &PartitionParams,
    warmup_blocks: usize,
) -> Result<PartitionResult, HypError> {
    // Material labels must stay exact here: pieces are defined by material
    // pullback and later re-validated by label-faithful re-integration.
    // Interpolated inserts would let labels drift across generations.
    let mut p_fixed = pp.hyp;
    p_fixed.advect.insert_mode = crate::curve::InsertMode::PositionExact;
    let pp = &PartitionParams {
        hyp: p_fixed,
        ..*pp
    };
    let p = &pp.hyp;
    let total_material = s_hi - s_lo;
    let n0verts = ((total_material / p.advect.rho_max).ceil() as usize).clamp(16, 4096);
    let mut base = MaterialCurve::new_over(seed, s_lo, s_hi, n0verts, true);
    for _ in 0..warmup_blocks {
        advect_curve(model, &mut base, path, p.n0, &p.advect)?;
    }
    let baseline: Vec<f64> = base
        .tangents
        .as_ref()
        .unwrap()
        .iter()
        .map(|t| t.log_stretch)
        .collect();
    let mut segments = vec![Segment {
        gmax: vec![0.0; base.params.len()],
        base: baseline,
        curve: base,
    }];
    let mut pieces: Vec<PartitionPiece> = Vec::new();
    let mut assigned = 0.0;
    let mut dropped = 0.0;
    let drop_budget = 0.3 * pp.eps_cover * total_material;
    let drop_thresh = pp.drop_sliver_frac * total_material;
    let mut stall = 0usize;
    let ln_e = p.e_threshold.ln();

    let debug = std::env::var("TORUSFLOW_TRACE").is_ok();
    for block in 1..=pp.max_blocks {
        let mut next_segments = Vec::new();
        let mut assigned_this_block = 0.0;
        let mut cand_count = 0usize;
        let mut reject_count = 0usize;
        let mut defer_count = 0usize;
        if debug {
            let verts: usize = segments.iter().map(|s| s.curve.params.len()).sum();
            let len: f64 = segments.iter().map(|s| s.curve.arclength()).sum();
            eprintln!(
                "part block {block}: segs {} verts {verts} len {len:.3} pieces {} assigned {:.4}",
                segments.len(),
                pieces.len(),
                assigned / total_material
            );
        }
        for seg in segments.iter_mut() {
            let old_params = seg.curve.params.clone();
            let old_gmax = seg.gmax.clone();
            let old_base = seg.base.clone();
            advect_curve(model, &mut seg.curve, path, p.n0, &p.advect)?;
            seg.realign(&old_params, &old_gmax, &old_base);

            let tans = seg.curve.tangents.as_ref().unwrap();
            let nv = seg.curve.params.len();
            let m = block as f64;
            let mut flags = vec![false; nv];
            for i in 0..nv {
                let rel = tans[i].log_stretch - seg.base[i];
                let g = rel - p.lambda1p * m * p.n0;
                if g >= seg.gmax[i] + pp.record_slack && rel >= ln_e {
                    flags[i] = true;
                }
                seg.gmax[i] = seg.gmax[i].max(g);
            }

            // Maximal runs of flagged vertices.
            let mut runs = Vec::new();
            let mut i = 0;
            while i < nv {
                if flags[i] {
                    let start = i;
                    while i + 1 < nv && flags[i + 1] {
                        i += 1;
                    }
                    runs.push((start, i));
                }
                i += 1;
            }
            if runs.is_empty() {
                next_segments.push(Segment {
                    curve: seg.curve.clone(),
                    gmax: seg.gmax.clone(),
                    base: seg.base.clone(),
                });
                continue;
            }

            let cum = seg.curve.cum_arclength();
            let end = *cum.last().unwrap();
            // Image-arclength obstacles: segment ends and run boundaries.
            let mut obstacles = vec![0.0, end];
            for &(a, b) in &runs {
                obstacles.push(cum[a]);
                obstacles.push(cum[b]);
            }
            obstacles.sort_by(|x, y| x.partial_cmp(y).unwrap());

            let r = p.r;
            let mut cursor = 0.0; // end of last assignment in image coords
            let mut assigned_intervals: Vec<(f64, f64)> = Vec::new();
            for &(ra, rb) in &runs {
                let a = cum[ra];
                let b = cum[rb];
                // Left adjustment.
                let left_obs = obstacles
                    .iter()
                    .cloned()
                    .filter(|&o| o < a - 1e-12)
                    .fold(f64::MIN, f64::max);
                let mut a_t = if left_obs > f64::MIN && a - left_obs <= 0.5 * r {
                    left_obs
                } else {
                    a - r / 100.0
                };
                a_t = a_t.max(cursor).max(0.0);
                // Right adjustment.
                let right_obs = obstacles
                    .iter()
                    .cloned()
                    .filter(|&o| o > b + 1e-12)
                    .fold(f64::MAX, f64::min);
                let mut b_t = if right_obs < f64::MAX && right_obs - b <= 0.5 * r {
                    right_obs
                } else {
                    b + r / 100.0
                };
                b_t = b_t.min(end);
                let l = b_t - a_t;
                if l < r / 100.0 {
                    defer_count += 1;
                    continue; // deferred; the run can refire at a later record
                }
                let n_pieces = (l / (r / 50.0)).ceil() as usize;
                let piece_len = l / n_pieces as f64;
                for j in 0..n_pieces {
                    let c_lo = a_t + j as f64 * piece_len;
                    let c_hi = if j + 1 == n_pieces { b_t } else { c_lo + piece_len };
                    let m_lo = seg.curve.param_at_arclength(&cum, c_lo);
                    let m_hi = seg.curve.param_at_arclength(&cum, c_hi);
                    if m_hi <= m_lo {
                        continue;
                    }
                    cand_count += 1;
                    if pp.validate_envelope
                        && !piece_envelope_ok(
                            model,
                            &seg.curve.seed,
                            m_lo,
                            m_hi,
                            path,
                            warmup_blocks,
                            block,
                            c_hi - c_lo,
                            p,
                        )?
                    {
                        reject_count += 1;
                        continue; // deferred
                    }
                    pieces.push(PartitionPiece {
                        s_lo: m_lo,
                        s_hi: m_hi,
                        n_j: block as u32,
                        created_step: block as u32,
                        image_length: c_hi - c_lo,
                        image_samples: sample_image(&seg.curve, &cum, c_lo, c_hi, m_lo, m_hi),
                    });
                    assigned_intervals.push((m_lo, m_hi));
                    assigned_this_block += m_hi - m_lo;
                    cursor = c_hi;
                }
            }

            // Residual material continues as fresh segments.
            assigned_intervals.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            let mut lo = seg.curve.params[0];
            let seg_hi = *seg.curve.params.last().unwrap();
            let mut residuals = Vec::new();
            for &(a, b) in &assigned_intervals {
                if a > lo {
                    residuals.push((lo, a));
                }
                lo = lo.max(b);
            }
            if seg_hi > lo {
                residuals.push((lo, seg_hi));
            }
            for (a, b) in residuals {
                if b - a < 1e-12 {
                    continue;
                }
                if b - a < drop_thresh && dropped + (b - a) < drop_budget {
                    dropped += b - a;
                    continue;
                }
                let mut sub = seg.curve.clone();
                let all_params = sub.params.clone();
                sub.trim(a, b);
                // Carry per-vertex aux values into the trimmed segment.
                let mut gm = Vec::with_capacity(sub.params.len() + 2);
                let mut bs = Vec::with_capacity(sub.params.len() + 2);
                let mut oi = 0;
                for &q in &sub.params {
                    while oi < all_params.len() && all_params[oi] < q {
                        oi += 1;
                    }
                    let j = if oi < all_params.len() && all_params[oi] == q {
                        oi
                    } else {
                        oi.min(seg.gmax.len() - 1)
                    };
                    gm.push(seg.gmax[j]);
                    bs.push(seg.base[j]);
                }
                // Residuals are usually narrower than the material vertex
                // spacing; dropping intervals without interior vertices
                // would silently lose percent-scale coverage. Give every
                // residual exact boundary vertices, integrated from time
                // zero; their aux values are taken from the neighboring
                // original vertices.
                let aux_near = |q: f64| -> (f64, f64) {
                    let j = all_params.partition_point(|&v| v < q);
                    let j1 = j.min(seg.gmax.len() - 1);
                    let j0 = j.saturating_sub(1);
                    (
                        seg.gmax[j0].max(seg.gmax[j1]),
                        0.5 * (seg.base[j0] + seg.base[j1]),
                    )
                };
                if sub.params.first() != Some(&a) {
                    let (pt, tv) = crate::curve::integrate_vertex(
                        model,
                        &seg.curve.seed,
                        a,
                        path,
                        seg.curve.time,
                        true,
                    )?;
                    sub.params.insert(0, a);
                    sub.points.insert(0, pt);
                    sub.tangents.as_mut().unwrap().insert(0, tv.unwrap());
                    let (g, bb) = aux_near(a);
                    gm.insert(0, g);
                    bs.insert(0, bb);
                }
                if sub.params.last() != Some(&b) {
                    let (pt, tv) = crate::curve::integrate_vertex(
                        model,
                        &seg.curve.seed,
                        b,
                        path,
                        seg.curve.time,
                        true,
                    )?;
                    sub.params.push(b);
                    sub.points.push(pt);
                    sub.tangents.as_mut().unwrap().push(tv.unwrap());
                    let (g, bb) = aux_near(b);
                    gm.push(g);
                    bs.push(bb);
                }
                next_segments.push(Segment {
                    curve: sub,
                    gmax: gm,
                    base: bs,
                });
            }
        }

        if debug {
            eprintln!(
                "  block {block}: cands {cand_count} rejected {reject_count} deferred_runs {defer_count}"
            );
        }
        segments = next_segments;
        assigned += assigned_this_block;
        if assigned_this_block <= 0.0 {
            stall += 1;
        } else {
            stall = 0;
        }
        let coverage = assigned / total_material;
        if coverage >= 1.0 - pp.eps_cover || segments.is_empty() {
            return Ok(PartitionResult {
                pieces,
                coverage,
                blocks: block as u32,
                unassigned: segments
                    .iter()
                    .map(|s| (s.curve.params[0], *s.curve.params.last().unwrap()))
                    .collect(),
            });
        }
        if stall >= pp.stall_window {
            return Err(HypError::CoverageStall {
                coverage,
                blocks: stall,
            });
        }
    }
    let coverage = assigned / total_material;
    Ok(PartitionResult {
        pieces,
        coverage,
        blocks: pp.max_blocks as u32,
        unassigned: segments
            .iter()
            .map(|s| (s.curve.params[0], *s.curve.params.last().unwrap()))
            .collect(),
    })
}

/// Check that pieces are pairwise disjoint in material parameter.
pub fn pieces_disjoint(pieces: &[PartitionPiece]) -> bool {
    let mut iv: Vec<(f64, f64)> = pieces.iter().map(|p| (p.s_lo, p.s_hi)).collect();
    iv.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    iv.windows(2).all(|w| w[0].1 <= w[1].0 + 1e-12)
}

/// Dedup key helper for tests wanting per-piece hashes of material bounds.
pub fn piece_key(p: &PartitionPiece) -> (u64, u64) {
    (p.s_lo.to_bits(), p.s_hi.to_bits())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_model::FourierStreamField;

    fn zero_model() -> FlowModel {
        FlowModel::new(
            FourierStreamField::zero(),
            vec![FourierStreamField::zero(), FourierStreamField::zero()],
        )
        .unwrap()
    }

    fn seed_seg() -> SeedCurve {
        SeedCurve::Segment {
            a: [0.15, 0.35],
            b: [0.65, 0.55],
        }
    }

    #[test]
    fn zero_model_never_fires() {
        let model = zero_model();
        let path = NoisePath::sample(1, 2, 30.0, 1e-2);
        let curve = MaterialCurve::new(seed_seg(), 64, true);
        let mut p = HypParams::default();
        p.t_max = 25.0;
        let err = detect_hyperbolic_time(&model, &curve, 0.5, &path, &p).unwrap_err();
        assert!(matches!(err, HypError::NotFoundWithin(_)));
    }

    #[test]
    fn default_model_finds_events() {
        let model = FlowModel::default_model();
        let p = HypParams::default();
        let mut found = 0;
        let mut taus = Vec::new();
        for seed in 0..12u64 {
            let path = NoisePath::sample(1000 + seed, model.d(), p.t_max, 1e-2);
            let curve = MaterialCurve::new(seed_seg(), 64, true);
            match detect_hyperbolic_time(&model, &curve, 0.5, &path, &p) {
                Ok(ev) => {
                    found += 1;
                    taus.push(ev.tau);
                    assert!(ev.expansion > p.e_threshold);
                    for (k, &ratio) in ev.backcheck.iter().enumerate() {
                        let bound = (-p.lambda1p * (k + 1) as f64 * p.n0).exp();
                        assert!(ratio <= bound, "k={} ratio {} bound {}", k + 1, ratio, bound);
                    }
                }
                Err(HypError::NotFoundWithin(_)) => {}
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert!(found >= 10, "only {found}/12 events found; taus {taus:?}");
    }

    #[test]
    fn revalidation_at_fixed_tau() {
        let model = FlowModel::default_model();
        let p = HypParams::default();
        let path = NoisePath::sample(1003, model.d(), p.t_max, 1e-2);
        let curve = MaterialCurve::new(seed_seg(), 64, true);
        let ev = detect_hyperbolic_time(&model, &curve, 0.5, &path, &p).unwrap();
        let again = check_event_at(&model, &curve, 0.5, &path, ev.tau, &p)
            .unwrap()
            .expect("event must re-validate at its own tau");
        assert!((again.expansion - ev.expansion).abs() / ev.expansion < 1e-6);
    }

    #[test]
    fn partition_small_curve() {
        let model = FlowModel::default_model();
        let pp = PartitionParams::default();
        let path = NoisePath::sample(2001, model.d(), pp.max_blocks as f64, 1e-2);
        let seed = SeedCurve::Segment {
            a: [0.2, 0.4],
            b: [0.2 + 0.6, 0.4 + 0.25],
        };
        let curve = MaterialCurve::new(seed, 64, true);
        let res = partition_curve(&model, &curve, &path, &pp).unwrap();
        assert!(res.coverage >= 0.999, "coverage {}", res.coverage);
        assert!(pieces_disjoint(&res.pieces));
        let r = pp.hyp.r;
        for piece in &res.pieces {
            assert!(
                piece.image_length >= r / 100.0 - 1e-12 && piece.image_length <= r / 50.0 + 1e-12,
                "piece image length {} outside [{}, {}]",
                piece.image_length,
                r / 100.0,
                r / 50.0
            );
        }
        assert!(!res.pieces.is_empty());
    }
}
