//! Random cut-off Cantor measures on a material curve, and the statistics
//! built on them: drift of measure-typical points, dimension estimates
//! (mass-distribution and box-counting), escape classification, CLT clouds,
//! and shape hulls.
//!
//! The tree refines a seed curve by repeatedly partitioning stopped images
//! into well-stretched pieces. Each piece whose image is monotone in a fixed
//! direction `e` loses a fixed fraction of that image at its `e`-bottom; the
//! surviving material carries a renormalized share of its parent's mass.
//! Conditioning on the cut tilts the surviving measure toward linear escape
//! in direction `e`, while small cut fractions keep its dimension near one.
//!
//! Deep trees are built lazily: a node re-seeds its stopped image polyline as
//! a fresh curve and runs its own partition on a time-shifted view of the
//! same noise realization, so the cost of expanding a node is independent of
//! its depth. Node intervals are mapped back to the original material
//! parameter through composed piecewise-linear maps.

use crate::curve::{MaterialCurve, SeedCurve};
use crate::flow_model::FlowModel;
use crate::hyptime::{partition_curve_from, HypError, PartitionParams, PartitionPiece};
use crate::noise::NoisePath;
use crate::rng::CounterRng;
use crate::sde::{flow_map, LiftedPoint, SdeError};
use crate::stats::{linear_fit, moments, Moments};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CantorError {
    #[error("fewer than {need} usable scales ({got})")]
    InsufficientScales { need: usize, got: usize },
    #[error("tree has no surviving leaves")]
    EmptyTree,
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Partition(#[from] HypError),
}

/// One node of the Cantor tree: a material interval of its (re-seeded) local
/// curve, the piecewise-linear map back to the original curve parameter, and
/// the node's share of the total mass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CantorNode {
    /// Local geometry this node's partition advects: the original seed for
    /// the root, the node's stopped image polyline below.
    pub seed: SeedCurve,
    /// Local parameter range within `seed`.
    pub lo: f64,
    pub hi: f64,
    /// Monotone knots (local parameter, original material parameter).
    pub map: Vec<(f64, f64)>,
    /// Absolute start time of this node's curve on the shared realization.
    pub t0: f64,
    /// Cumulative stopping time in blocks along the root-to-node path.
    pub n_cum: u32,
    pub depth: u32,
    pub mass: f64,
    /// The stopped image was strictly monotone along `e`.
    pub monotone: bool,
    /// A cut was applied (monotone and a positive cut fraction).
    pub cut: bool,
    /// Expansion failed; the node stays a leaf with its mass intact.
    pub failed: bool,
    pub children: Option<Vec<usize>>,
}

impl CantorNode {
    /// Original material parameter of local parameter s.
    pub fn to_original(&self, s: f64) -> f64 {
        let m = &self.map;
        if s <= m[0].0 {
            return m[0].1;
        }
        if s >= m[m.len() - 1].0 {
            return m[m.len() - 1].1;
        }
        let i = m.partition_point(|&(l, _)| l < s).max(1);
        let (l0, o0) = m[i - 1];
        let (l1, o1) = m[i];
        let f = if l1 > l0 { (s - l0) / (l1 - l0) } else { 0.0 };
        o0 + f * (o1 - o0)
    }

    /// Original material interval covered by this node.
    pub fn original_interval(&self) -> (f64, f64) {
        (self.map[0].1, self.map[self.map.len() - 1].1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CantorTree {
    pub model: FlowModel,
    pub path: NoisePath,
    /// Escape direction; cuts remove the image end with the smaller
    /// projection on `e`.
    pub e: [f64; 2],
    /// Fraction of a monotone image removed at its `e`-bottom.
    pub theta_cut: f64,
    pub target_depth: u32,
    pub pp: PartitionParams,
    pub nodes: Vec<CantorNode>,
}

/// Lazy tree rooted at the given time-zero curve. Nodes are expanded on
/// demand by `expand_node` (or wholesale by `expand_all`); sampling and the
/// dimension estimator expand exactly the branches they visit.
pub fn build_cantor(
    model: &FlowModel,
    curve: &MaterialCurve,
    path: &NoisePath,
    e: [f64; 2],
    theta_cut: f64,
    depth: u32,
    pp: &PartitionParams,
) -> CantorTree {
    assert!(curve.time == 0.0, "the tree starts from a time-zero curve");
    assert!((0.0..1.0).contains(&theta_cut));
    assert!(depth >= 1);
    let lo = curve.params[0];
    let hi = *curve.params.last().unwrap();
    let root = CantorNode {
        seed: curve.seed.clone(),
        lo,
        hi,
        map: vec![(lo, lo), (hi, hi)],
        t0: 0.0,
        n_cum: 0,
        depth: 0,
        mass: 1.0,
        monotone: false,
        cut: false,
        failed: false,
        children: None,
    };
    CantorTree {
        model: model.clone(),
        path: *path,
        e,
        theta_cut,
        target_depth: depth,
        pp: pp.clone(),
        nodes: vec![root],
    }
}

/// Child node data distilled from one partition piece: trimmed polyline,
/// local->original map, and the surviving original-material width.
fn child_from_piece(
    parent: &CantorNode,
    piece: &PartitionPiece,
    e: [f64; 2],
    theta_cut: f64,
    n0: f64,
) -> Option<(CantorNode, f64)> {
    let samples = &piece.image_samples;
    if samples.len() < 2 {
        return None;
    }
    // Strict monotonicity of <image, e> with a tie tolerance: ties count as
    // non-monotone, matching the strictness of the cut-off construction.
    let proj: Vec<f64> = samples.iter().map(|(_, p)| p[0] * e[0] + p[1] * e[1]).collect();
    let mut monotone = true;
    let mut dir = 0i8;
    for w in proj.windows(2) {
        let d = w[1] - w[0];
        if d.abs() <= 1e-12 {
            monotone = false;
            break;
        }
        let s = if d > 0.0 { 1 } else { -1 };
        if dir == 0 {
            dir = s;
        } else if s != dir {
            monotone = false;
            break;
        }
    }

    // Work on (local cumulative arclength, original param, position).
    let mut pts: Vec<(f64, [f64; 2])> = Vec::with_capacity(samples.len());
    let mut cum = vec![0.0];
    for (i, &(_, p)) in samples.iter().enumerate() {
        pts.push((samples[i].0, p));
        if i > 0 {
            let q = samples[i - 1].1;
            cum.push(cum[i - 1] + (p[0] - q[0]).hypot(p[1] - q[1]));
        }
    }
    let total = *cum.last().unwrap();
    if total <= 1e-300 {
        return None;
    }

    let cut = monotone && theta_cut > 0.0;
    let (mut keep_lo, keep_hi) = (0.0, total);
    let mut keep_hi = keep_hi;
    if cut {
        let cut_len = theta_cut * total;
        // e-bottom = the end with the smaller projection.
        if proj[0] < proj[proj.len() - 1] {
            keep_lo = cut_len;
        } else {
            keep_hi = total - cut_len;
        }
    }

    // Rebuild the surviving polyline with interpolated end points.
    let interp = |c: f64| -> (f64, [f64; 2]) {
        let j = cum.partition_point(|&v| v < c).clamp(1, cum.len() - 1);
        let f = ((c - cum[j - 1]) / (cum[j] - cum[j - 1]).max(1e-300)).clamp(0.0, 1.0);
        let (qa, pa) = pts[j - 1];
        let (qb, pb) = pts[j];
        (
            qa + f * (qb - qa),
            [pa[0] + f * (pb[0] - pa[0]), pa[1] + f * (pb[1] - pa[1])],
        )
    };
    let mut new_pts: Vec<[f64; 2]> = Vec::new();
    let mut new_q: Vec<f64> = Vec::new();
    let (q0, p0) = interp(keep_lo);
    new_pts.push(p0);
    new_q.push(q0);
    for j in 0..pts.len() {
        if cum[j] > keep_lo + 1e-15 && cum[j] < keep_hi - 1e-15 {
            new_pts.push(pts[j].1);
            new_q.push(pts[j].0);
        }
    }
    let (q1, p1) = interp(keep_hi);
    new_pts.push(p1);
    new_q.push(q1);
    if new_pts.len() < 2 {
        return None;
    }

    // Local parameters: arclength fraction along the surviving polyline.
    let mut ncum = vec![0.0];
    for w in new_pts.windows(2) {
        let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        ncum.push(ncum.last().unwrap() + l);
    }
    let nl = *ncum.last().unwrap();
    if nl <= 1e-300 {
        return None;
    }
    let map: Vec<(f64, f64)> = ncum
        .iter()
        .zip(&new_q)
        .map(|(&c, &q)| (c / nl, parent.to_original(q)))
        .collect();
    let w_orig = (map[map.len() - 1].1 - map[0].1).abs();
    if w_orig <= 0.0 {
        return None;
    }

    Some((
        CantorNode {
            seed: SeedCurve::Polyline {
                pts: std::sync::Arc::new(new_pts),
            },
            lo: 0.0,
            hi: 1.0,
            map,
            t0: parent.t0 + piece.n_j as f64 * n0,
            n_cum: parent.n_cum + piece.n_j,
            depth: parent.depth + 1,
            mass: 0.0,
            monotone,
            cut,
            failed: false,
            children: None,
        },
        w_orig,
    ))
}

impl CantorTree {
    /// Expand a node in place (no-op if already expanded or at target
    /// depth). A failed partition marks the node as a failed leaf; its mass
    /// stays where it is.
    pub fn expand_node(&mut self, i: usize) {
        if self.nodes[i].children.is_some()
            || self.nodes[i].failed
            || self.nodes[i].depth >= self.target_depth
        {
            return;
        }
        let node = self.nodes[i].clone();
        let local_path = self.path.offset(node.t0);
        let res = partition_curve_from(
            &self.model,
            node.seed.clone(),
            node.lo,
            node.hi,
            &local_path,
            &self.pp,
            0,
        );
        let res = match res {
            Ok(r) => r,
            Err(_) => {
                self.nodes[i].failed = true;
                return;
            }
        };
        let n0 = self.pp.hyp.n0;
        let mut kids: Vec<(CantorNode, f64)> = res
            .pieces
            .iter()
            .filter_map(|pc| child_from_piece(&node, pc, self.e, self.theta_cut, n0))
            .collect();
        let wsum: f64 = kids.iter().map(|(_, w)| w).sum();
        if kids.is_empty() || wsum <= 0.0 {
            self.nodes[i].failed = true;
            return;
        }
        // Renormalize: children masses sum to the parent's mass.
        let mut idx = Vec::with_capacity(kids.len());
        for (mut k, w) in kids.drain(..) {
            k.mass = node.mass * w / wsum;
            idx.push(self.nodes.len());
            self.nodes.push(k);
        }
        self.nodes[i].children = Some(idx);
    }

    /// Eagerly expand every node down to the target depth. Only sensible for
    /// shallow trees; deep trees are expanded branch by branch.
    pub fn expand_all(&mut self) {
        let mut i = 0;
        while i < self.nodes.len() {
            self.expand_node(i);
            i += 1;
        }
    }

    /// Leaves of the currently expanded tree (target-depth and failed nodes).
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].children.is_none())
            .collect()
    }

    /// One mass-proportional root-to-leaf walk; returns the leaf index.
    fn walk(&mut self, rng: &mut CounterRng) -> usize {
        let mut i = 0;
        loop {
            self.expand_node(i);
            let Some(kids) = self.nodes[i].children.clone() else {
                return i;
            };
            let mut u = rng.uniform() * self.nodes[i].mass;
            let mut next = *kids.last().unwrap();
            for &k in &kids {
                u -= self.nodes[k].mass;
                if u <= 0.0 {
                    next = k;
                    break;
                }
            }
            i = next;
        }
    }

    /// Draw `count` original-material parameters from the measure: a
    /// mass-proportional walk to a leaf, then uniform within the leaf's
    /// interval. Expands the tree along the sampled branches as needed.
    pub fn sample_measure(&mut self, count: usize, rng_seed: u64) -> Vec<f64> {
        (0..count as u64)
            .map(|k| {
                let mut rng = CounterRng::from_words(&[0x6361_6e74_6f72, rng_seed, k]);
                let leaf = self.walk(&mut rng);
                let n = &self.nodes[leaf];
                let s = n.lo + rng.uniform() * (n.hi - n.lo);
                n.to_original(s)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimensionMethod {
    MassDistribution,
    BoxCounting,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub method: DimensionMethod,
    pub value: f64,
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub r2: f64,
}

/// Local scaling exponent of the measure: regress ln mu(I) on ln |I| over
/// the nodes visited by mass-proportional branch sampling (so nodes are
/// weighted by the measure itself, as in the mass-distribution principle).
pub fn dimension_mass_distribution(
    tree: &mut CantorTree,
    branches: usize,
    rng_seed: u64,
) -> Result<DimensionEstimate, CantorError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut depths: HashSet<u32> = HashSet::new();
    for k in 0..branches as u64 {
        let mut rng = CounterRng::from_words(&[0x6469_6d65_6e73, rng_seed, k]);
        let mut i = 0;
        loop {
            tree.expand_node(i);
            let Some(kids) = tree.nodes[i].children.clone() else {
                break;
            };
            let mut u = rng.uniform() * tree.nodes[i].mass;
            let mut next = *kids.last().unwrap();
            for &c in &kids {
                u -= tree.nodes[c].mass;
                if u <= 0.0 {
                    next = c;
                    break;
                }
            }
            i = next;
            let n = &tree.nodes[i];
            let (a, b) = n.original_interval();
            let w = (b - a).abs();
            if w > 0.0 && n.mass > 0.0 {
                xs.push(w.ln());
                ys.push(n.mass.ln());
                depths.insert(n.depth);
            }
        }
    }
    if depths.len() < 3 {
        return Err(CantorError::InsufficientScales {
            need: 3,
            got: depths.len(),
        });
    }
    let (slope, _, r2) = linear_fit(&xs, &ys);
    let lo = xs.iter().cloned().fold(f64::MAX, f64::min).exp();
    let hi = xs.iter().cloned().fold(f64::MIN, f64::max).exp();
    Ok(DimensionEstimate {
        method: DimensionMethod::MassDistribution,
        value: slope,
        scale_lo: lo,
        scale_hi: hi,
        r2,
    })
}

/// Box-counting dimension of a point set in R^m: slope of ln N(r) against
/// ln(1/r) over the given scales.
pub fn box_counting(points: &[Vec<f64>], scales: &[f64]) -> Result<DimensionEstimate, CantorError> {
    if scales.len() < 4 {
        return Err(CantorError::InsufficientScales {
            need: 4,
            got: scales.len(),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &r in scales {
        assert!(r > 0.0);
        let mut cells: HashSet<Vec<i64>> = HashSet::new();
        for p in points {
            cells.insert(p.iter().map(|&c| (c / r).floor() as i64).collect());
        }
        xs.push((1.0 / r).ln());
        ys.push((cells.len() as f64).ln());
    }
    let (slope, _, r2) = linear_fit(&xs, &ys);
    let lo = scales.iter().cloned().fold(f64::MAX, f64::min);
    let hi = scales.iter().cloned().fold(f64::MIN, f64::max);
    Ok(DimensionEstimate {
        method: DimensionMethod::BoxCounting,
        value: slope,
        scale_lo: lo,
        scale_hi: hi,
    r2,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftReport {
    /// Per sample: minimum of <x_t - x_0, e>/t over the late window [T/2, T].
    pub late_min_drift: Vec<f64>,
    pub fraction_positive: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Per sample: largest displacement between consecutive checkpoints
    /// (excursion diagnostic; its tail should be lighter than exponential).
    pub max_excursion: Vec<f64>,
}

/// Integrate material points from the given original parameters under the
/// shared realization and summarize their directional drift.
pub fn drift_statistics(
    model: &FlowModel,
    seed: &SeedCurve,
    params: &[f64],
    path: &NoisePath,
    e: [f64; 2],
    t_horizon: f64,
    checkpoint_dt: f64,
) -> Result<DriftReport, SdeError> {
    let mut late_min = Vec::with_capacity(params.len());
    let mut max_exc = Vec::with_capacity(params.len());
    let n_cp = (t_horizon / checkpoint_dt).round() as usize;
    for &s in params {
        let mut p = LiftedPoint::new(seed.eval(s));
        let x0 = p.position();
        let mut prev = x0;
        let mut lm = f64::MAX;
        let mut me: f64 = 0.0;
        for c in 1..=n_cp {
            let (t1, t2) = ((c - 1) as f64 * checkpoint_dt, c as f64 * checkpoint_dt);
            flow_map(model, std::slice::from_mut(&mut p), path, t1, t2)?;
            let x = p.position();
            me = me.max((x[0] - prev[0]).hypot(x[1] - prev[1]));
            prev = x;
            if t2 >= 0.5 * t_horizon {
                let d = ((x[0] - x0[0]) * e[0] + (x[1] - x0[1]) * e[1]) / t2;
                lm = lm.min(d);
            }
        }
        late_min.push(lm);
        max_exc.push(me);
    }
    let m = moments(&late_min);
    let frac = late_min.iter().filter(|&&d| d > 0.0).count() as f64 / late_min.len().max(1) as f64;
    Ok(DriftReport {
        late_min_drift: late_min,
        fraction_positive: frac,
        mean: m.mean,
        stderr: m.stderr,
        max_excursion: max_exc,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeReport {
    /// Per sample: minimum of |x_t - x_0|/t over the late window.
    pub speeds: Vec<f64>,
    pub escaped: Vec<bool>,
    pub fraction_escaped: f64,
}

/// Label material points as linearly escaping when their late-window speed
/// (lifted displacement over time) stays above the threshold.
pub fn escape_classifier(
    model: &FlowModel,
    seed: &SeedCurve,
    params: &[f64],
    path: &NoisePath,
    t_horizon: f64,
    speed_threshold: f64,
) -> Result<EscapeReport, SdeError> {
    let cp = 1.0f64.min(t_horizon / 8.0);
    let n_cp = (t_horizon / cp).round() as usize;
    let mut speeds = Vec::with_capacity(params.len());
    for &s in params {
        let mut p = LiftedPoint::new(seed.eval(s));
        let x0 = p.position();
        let mut lm = f64::MAX;
        for c in 1..=n_cp {
            let (t1, t2) = ((c - 1) as f64 * cp, c as f64 * cp);
            flow_map(model, std::slice::from_mut(&mut p), path, t1, t2)?;
            if t2 >= 0.5 * t_horizon {
                let x = p.position();
                lm = lm.min((x[0] - x0[0]).hypot(x[1] - x0[1]) / t2);
            }
        }
        speeds.push(lm);
    }
    let escaped: Vec<bool> = speeds.iter().map(|&v| v > speed_threshold).collect();
    let frac = escaped.iter().filter(|&&b| b).count() as f64 / escaped.len().max(1) as f64;
    Ok(EscapeReport {
        speeds,
        escaped,
        fraction_escaped: frac,
    })
}

/// Initial measures the CLT experiment supports: uniform on a curve, or
/// uniform on an axis-aligned square.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InitialMeasure {
    Curve(SeedCurve),
    Square { center: [f64; 2], side: f64 },
}

impl InitialMeasure {
    fn points(&self, count: usize, rng_seed: u64) -> Vec<LiftedPoint> {
        match self {
            InitialMeasure::Curve(seed) => (0..count)
                .map(|i| LiftedPoint::new(seed.eval((i as f64 + 0.5) / count as f64)))
                .collect(),
            InitialMeasure::Square { center, side } => (0..count as u64)
                .map(|i| {
                    let mut rng = CounterRng::from_words(&[0x636c_7420, rng_seed, i]);
                    LiftedPoint::new([
                        center[0] + side * (rng.uniform() - 0.5),
                        center[1] + side * (rng.uniform() - 0.5),
                    ])
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CltReport {
    /// Rescaled displacements (x_T - x_0) / sqrt(T) under one realization.
    pub cloud: Vec<[f64; 2]>,
    /// Moments along the principal axes of the cloud's covariance.
    pub principal_moments: [Moments; 2],
    pub covariance: [[f64; 2]; 2],
}

/// One-realization CLT cloud: advect an ensemble of initial points to time T
/// and rescale displacements by sqrt(T).
pub fn clt_experiment(
    model: &FlowModel,
    init: &InitialMeasure,
    path: &NoisePath,
    t_horizon: f64,
    count: usize,
    rng_seed: u64,
) -> Result<CltReport, SdeError> {
    let mut pts = init.points(count, rng_seed);
    let starts: Vec<[f64; 2]> = pts.iter().map(|p| p.position()).collect();
    flow_map(model, &mut pts, path, 0.0, t_horizon)?;
    Ok(report_from_points(&pts, &starts, t_horizon))
}

/// CLT clouds at T and 2T in one integration pass (the 0..T work is shared).
pub fn clt_experiment_pair(
    model: &FlowModel,
    init: &InitialMeasure,
    path: &NoisePath,
    t_horizon: f64,
    count: usize,
    rng_seed: u64,
) -> Result<(CltReport, CltReport), SdeError> {
    let mut pts = init.points(count, rng_seed);
    let starts: Vec<[f64; 2]> = pts.iter().map(|p| p.position()).collect();
    flow_map(model, &mut pts, path, 0.0, t_horizon)?;
    let at_t = report_from_points(&pts, &starts, t_horizon);
    flow_map(model, &mut pts, path, t_horizon, 2.0 * t_horizon)?;
    let at_2t = report_from_points(&pts, &starts, 2.0 * t_horizon);
    Ok((at_t, at_2t))
}

fn report_from_points(pts: &[LiftedPoint], starts: &[[f64; 2]], t_horizon: f64) -> CltReport {
    let rt = t_horizon.sqrt();
    let cloud: Vec<[f64; 2]> = pts
        .iter()
        .zip(starts)
        .map(|(p, s)| {
            let x = p.position();
            [(x[0] - s[0]) / rt, (x[1] - s[1]) / rt]
        })
        .collect();
    let n = cloud.len() as f64;
    let mean = cloud.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let mut cov = [[0.0; 2]; 2];
    for p in &cloud {
        let d = [p[0] - mean[0], p[1] - mean[1]];
        for a in 0..2 {
            for b in 0..2 {
                cov[a][b] += d[a] * d[b] / n;
            }
        }
    }
    // Principal axes of the 2x2 covariance.
    let half_tr = 0.5 * (cov[0][0] + cov[1][1]);
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let disc = (half_tr * half_tr - det).max(0.0).sqrt();
    let l1 = half_tr + disc;
    let axis1 = if cov[0][1].abs() > 1e-15 {
        let v = [l1 - cov[1][1], cov[0][1]];
        let nv = v[0].hypot(v[1]);
        [v[0] / nv, v[1] / nv]
    } else if cov[0][0] >= cov[1][1] {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let axis2 = [-axis1[1], axis1[0]];
    let proj = |ax: [f64; 2]| -> Vec<f64> {
        cloud.iter().map(|p| p[0] * ax[0] + p[1] * ax[1]).collect()
    };
    let principal_moments = [moments(&proj(axis1)), moments(&proj(axis2))];
    CltReport {
        cloud,
        principal_moments,
        covariance: cov,
    }
}

/// Convex hull (counter-clockwise, no duplicate endpoint) via the monotone
/// chain; degenerate inputs return what survives dedup.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let chain = |iter: &mut dyn Iterator<Item = [f64; 2]>| {
        let mut out: Vec<[f64; 2]> = Vec::new();
        for p in iter {
            while out.len() >= 2 && cross(out[out.len() - 2], out[out.len() - 1], p) <= 0.0 {
                out.pop();
            }
            out.push(p);
        }
        out.pop();
        out
    };
    let mut lower = chain(&mut pts.iter().cloned());
    let upper = chain(&mut pts.iter().rev().cloned());
    lower.extend(upper);
    lower
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapeHull {
    pub t: f64,
    /// Convex hull of the accumulated contaminated cloud scaled by 1/t.
    pub hull: Vec<[f64; 2]>,
}

/// Track the accumulated contaminated set C_t = union of snapshots of an
/// advected boundary ensemble, and return hulls of C_t / t at the requested
/// times (ascending).
pub fn shape_hull(
    model: &FlowModel,
    seed: &SeedCurve,
    n_boundary: usize,
    path: &NoisePath,
    t_list: &[f64],
) -> Result<Vec<ShapeHull>, SdeError> {
    assert!(t_list.windows(2).all(|w| w[0] < w[1]));
    let mut pts: Vec<LiftedPoint> = (0..n_boundary)
        .map(|i| LiftedPoint::new(seed.eval((i as f64 + 0.5) / n_boundary as f64)))
        .collect();
    let mut cloud: Vec<[f64; 2]> = pts.iter().map(|p| p.position()).collect();
    let t_max = *t_list.last().unwrap();
    let dt = (t_max / 200.0).max(path.base_step);
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut next_out = 0;
    while next_out < t_list.len() {
        let t2 = (t + dt).min(t_list[next_out]);
        flow_map(model, &mut pts, path, t, t2)?;
        t = t2;
        cloud.extend(pts.iter().map(|p| p.position()));
        if (t - t_list[next_out]).abs() < 1e-9 {
            let scaled: Vec<[f64; 2]> = cloud.iter().map(|p| [p[0] / t, p[1] / t]).collect();
            out.push(ShapeHull {
                t,
                hull: convex_hull(&scaled),
            });
            next_out += 1;
        }
    }
    Ok(out)
}
