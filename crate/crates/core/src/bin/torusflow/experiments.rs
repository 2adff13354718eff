//! One function per subcommand: run the experiment for the configured seeds,
//! write artifacts (plain CSV/JSON plus a gnuplot script) and a manifest into
//! the run directory, and report gate outcomes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use torusflow::cantor::{
    build_cantor, clt_experiment, dimension_mass_distribution, drift_statistics, shape_hull,
    InitialMeasure,
};
use torusflow::curve::{MaterialCurve, SeedCurve};
use torusflow::flow_model::{
    check_hypoellipticity, check_zero_drift, check_zero_mean, model_hash, to_text, Condition,
    FlowModel, DIAGONAL_MARGIN,
};
use torusflow::hyptime::{detect_hyperbolic_time, partition_curve, HypParams, PartitionParams};
use torusflow::ld::{bad_pair_density, return_walk_tails, supermartingale_gate, WalkSpec};
use torusflow::manifest::RunManifest;
use torusflow::model_example::{in_dimension, mu_drift};
use torusflow::noise::NoisePath;
use torusflow::rng::CounterRng;
use torusflow::sde::lyapunov_spectrum;
use torusflow::stats::{linear_fit, moments};

use crate::config::Config;

pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Gate {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Gate {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

pub struct ExpCtx<'a> {
    pub cfg: &'a Config,
    pub model: FlowModel,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub pool: &'a rayon::ThreadPool,
}

impl ExpCtx<'_> {
    fn manifest(&self, experiment: &str) -> RunManifest {
        RunManifest::new(experiment, &model_hash(&self.model), self.seeds.clone())
    }

    fn par_map<T: Send, F: Fn(u64) -> T + Sync>(&self, f: F) -> Vec<T> {
        self.pool
            .install(|| self.seeds.par_iter().map(|&s| f(s)).collect())
    }
}

/// Number of work-unit seeds an experiment wants when `--seeds` is absent.
pub fn default_seed_count(name: &str, cfg: &Config) -> u64 {
    match name {
        "lyapunov" => cfg.lyapunov.seeds,
        "hyptimes" => cfg.hyptimes.trials,
        _ => 1,
    }
}

pub fn run(name: &str, ctx: &ExpCtx) -> Result<Vec<Gate>, String> {
    std::fs::create_dir_all(&ctx.out).map_err(|e| format!("create {:?}: {e}", ctx.out))?;
    let mut manifest = ctx.manifest(name);
    write_artifact(ctx, &mut manifest, "model.txt", &to_text(&ctx.model))?;
    let gates = match name {
        "diagnose-model" => diagnose_model(ctx, &mut manifest)?,
        "lyapunov" => lyapunov(ctx, &mut manifest)?,
        "clt" => clt(ctx, &mut manifest)?,
        "shape" => shape(ctx, &mut manifest)?,
        "hyptimes" => hyptimes(ctx, &mut manifest)?,
        "partition" => partition(ctx, &mut manifest)?,
        "cantor" => cantor(ctx, &mut manifest)?,
        "escape" => escape(ctx, &mut manifest)?,
        "model-example" => model_example(ctx, &mut manifest)?,
        "ld-checks" => ld_checks(ctx, &mut manifest)?,
        other => return Err(format!("unknown experiment {other}")),
    };
    let mut gate_text = String::new();
    for g in &gates {
        let _ = writeln!(
            gate_text,
            "{} {}: {}",
            if g.pass { "PASS" } else { "FAIL" },
            g.name,
            g.detail
        );
    }
    write_artifact(ctx, &mut manifest, "gates.txt", &gate_text)?;
    manifest
        .write(&ctx.out)
        .map_err(|e| format!("write manifest: {e}"))?;
    Ok(gates)
}

fn write_artifact(
    ctx: &ExpCtx,
    manifest: &mut RunManifest,
    name: &str,
    content: &str,
) -> Result<(), String> {
    std::fs::write(ctx.out.join(name), content).map_err(|e| format!("write {name}: {e}"))?;
    manifest
        .add_artifact(&ctx.out, name)
        .map_err(|e| format!("checksum {name}: {e}"))
}

fn write_json<T: serde::Serialize>(
    ctx: &ExpCtx,
    manifest: &mut RunManifest,
    name: &str,
    value: &T,
) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    write_artifact(ctx, manifest, name, &(text + "\n"))
}

/// The calibration segment family used by the curve experiments.
fn standard_segment(scale: f64) -> SeedCurve {
    SeedCurve::Segment {
        a: [0.2, 0.4],
        b: [0.2 + 0.3 * scale, 0.4 + 0.125 * scale],
    }
}

// ---------------------------------------------------------------- experiments

fn diagnose_model(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    use torusflow::flow_model::torus_dist;
    let c = &ctx.cfg.diagnose;
    let depth = c.bracket_depth as usize;
    let model = &ctx.model;
    let mut rng = CounterRng::from_words(&[0x6469_6167, ctx.seeds[0]]);
    let pts_a: Vec<Vec<f64>> = (0..c.points_a)
        .map(|_| vec![rng.uniform(), rng.uniform()])
        .collect();
    let pts_b: Vec<Vec<f64>> = (0..c.points_b)
        .map(|_| loop {
            let p = vec![rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()];
            if torus_dist([p[0], p[1]], [p[2], p[3]]) >= DIAGONAL_MARGIN {
                break p;
            }
        })
        .collect();
    let pts_c: Vec<Vec<f64>> = (0..c.points_c)
        .map(|_| {
            vec![
                rng.uniform(),
                rng.uniform(),
                rng.uniform_in(0.0, std::f64::consts::TAU),
            ]
        })
        .collect();
    m.set("diagnose.points_a", pts_a.len() as f64)
        .set("diagnose.points_b", pts_b.len() as f64)
        .set("diagnose.points_c", pts_c.len() as f64)
        .set("diagnose.bracket_depth", depth as f64);

    let mut gates = Vec::new();
    let mut reports = Vec::new();
    for (cond, pts) in [
        (Condition::A, &pts_a),
        (Condition::B, &pts_b),
        (Condition::C, &pts_c),
    ] {
        match check_hypoellipticity(model, cond, pts, depth) {
            Ok(rep) => {
                gates.push(Gate::new(
                    &format!("hypoellipticity_{cond}"),
                    rep.pass,
                    format!(
                        "rank {}/{} at {} points",
                        rep.achieved_rank.iter().min().unwrap(),
                        rep.required_rank,
                        pts.len()
                    ),
                ));
                reports.push(rep);
            }
            Err(e) => gates.push(Gate::new(
                &format!("hypoellipticity_{cond}"),
                false,
                e.to_string(),
            )),
        }
    }
    let mean_ok = model
        .noise_fields()
        .iter()
        .all(|f| check_zero_mean(f).0);
    gates.push(Gate::new(
        "zero_mean",
        mean_ok,
        "all noise fields have zero spatial mean".into(),
    ));
    let drift = check_zero_drift(model).map_err(|e| e.to_string())?;
    let drift_norm = drift[0].hypot(drift[1]);
    gates.push(Gate::new(
        "zero_drift",
        drift_norm < 1e-8,
        format!("|Ito-corrected mean drift| = {drift_norm:.3e}"),
    ));
    write_json(ctx, m, "rank_reports.json", &reports)?;
    Ok(gates)
}

fn lyapunov(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.lyapunov;
    m.set("lyapunov.t", c.t)
        .set("lyapunov.h", c.h)
        .set("lyapunov.renorm", c.renorm)
        .set("lyapunov.gate_sigma", c.gate_sigma)
        .set("lyapunov.sum_tol", c.sum_tol);
    let specs = ctx.par_map(|s| lyapunov_spectrum(&ctx.model, s, c.t, c.h, c.renorm));
    let mut csv = String::from("seed,lambda1,lambda2,sum\n");
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    for (seed, r) in ctx.seeds.iter().zip(specs) {
        let r = r.map_err(|e| e.to_string())?;
        let _ = writeln!(csv, "{seed},{},{},{}", r.lambdas[0], r.lambdas[1], r.sum);
        l1.push(r.lambdas[0]);
        l2.push(r.lambdas[1]);
    }
    let m1 = moments(&l1);
    let m2 = moments(&l2);
    write_artifact(ctx, m, "lyapunov.csv", &csv)?;
    write_plot(ctx, m, "lyapunov.csv", "seed", "lambda1")?;
    let sum = m1.mean + m2.mean;
    Ok(vec![
        Gate::new(
            "lambda1_positive",
            m1.mean > c.gate_sigma * m1.stderr,
            format!("lambda1 = {:.4} +- {:.4}", m1.mean, m1.stderr),
        ),
        Gate::new(
            "spectrum_sum_zero",
            sum.abs() < c.sum_tol,
            format!("lambda1 + lambda2 = {sum:.4}"),
        ),
    ])
}

fn clt(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.clt;
    m.set("clt.t", c.t)
        .set("clt.count", c.count as f64)
        .set("clt.h", c.h)
        .set("clt.ax", c.ax)
        .set("clt.ay", c.ay)
        .set("clt.bx", c.bx)
        .set("clt.by", c.by)
        .set("clt.skew_tol", c.skew_tol)
        .set("clt.kurt_tol", c.kurt_tol)
        .set("clt.cov_tol", c.cov_tol);
    let init = InitialMeasure::Curve(SeedCurve::Segment {
        a: [c.ax, c.ay],
        b: [c.bx, c.by],
    });
    let path = NoisePath::sample(ctx.seeds[0], ctx.model.d(), 2.0 * c.t + 1.0, c.h);
    let rep1 = clt_experiment(&ctx.model, &init, &path, c.t, c.count as usize, ctx.seeds[0])
        .map_err(|e| e.to_string())?;
    let rep2 = clt_experiment(
        &ctx.model,
        &init,
        &path,
        2.0 * c.t,
        c.count as usize,
        ctx.seeds[0],
    )
    .map_err(|e| e.to_string())?;
    let mut csv = String::from("x,y\n");
    for p in &rep1.cloud {
        let _ = writeln!(csv, "{},{}", p[0], p[1]);
    }
    write_artifact(ctx, m, "clt_cloud.csv", &csv)?;
    write_plot(ctx, m, "clt_cloud.csv", "x", "y")?;
    write_json(ctx, m, "clt_moments.json", &rep1.principal_moments)?;

    let mut gates = Vec::new();
    for (ax, mo) in rep1.principal_moments.iter().enumerate() {
        gates.push(Gate::new(
            &format!("axis{ax}_skewness"),
            mo.skewness.abs() < c.skew_tol,
            format!("skewness = {:.4}", mo.skewness),
        ));
        gates.push(Gate::new(
            &format!("axis{ax}_kurtosis"),
            mo.excess_kurtosis.abs() < c.kurt_tol,
            format!("excess kurtosis = {:.4}", mo.excess_kurtosis),
        ));
    }
    let (c1, c2) = (rep1.covariance, rep2.covariance);
    let num = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (c2[i][j] - c1[i][j]).powi(2))
        .sum::<f64>()
        .sqrt();
    let den = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| c1[i][j].powi(2))
        .sum::<f64>()
        .sqrt();
    let rel = num / den;
    gates.push(Gate::new(
        "covariance_stabilized",
        rel < c.cov_tol,
        format!("relative covariance change T -> 2T: {rel:.3}"),
    ));
    Ok(gates)
}

fn shape(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.shape;
    m.set("shape.t_max", c.t_max)
        .set("shape.n_boundary", c.n_boundary as f64)
        .set("shape.snapshots", c.snapshots as f64)
        .set("shape.h", c.h)
        .set("shape.cx", c.cx)
        .set("shape.cy", c.cy)
        .set("shape.radius", c.radius);
    let seed = SeedCurve::Arc {
        center: [c.cx, c.cy],
        radius: c.radius,
        ang0: 0.0,
        ang1: std::f64::consts::TAU,
    };
    let t_list: Vec<f64> = (1..=c.snapshots)
        .map(|i| c.t_max * i as f64 / c.snapshots as f64)
        .collect();
    let path = NoisePath::sample(ctx.seeds[0], ctx.model.d(), c.t_max + 1.0, c.h);
    let hulls = shape_hull(&ctx.model, &seed, c.n_boundary as usize, &path, &t_list)
        .map_err(|e| e.to_string())?;
    let mut csv = String::from("t,x,y\n");
    for h in &hulls {
        for p in &h.hull {
            let _ = writeln!(csv, "{},{},{}", h.t, p[0], p[1]);
        }
    }
    write_artifact(ctx, m, "shape_hulls.csv", &csv)?;
    write_plot(ctx, m, "shape_hulls.csv", "x", "y")?;
    // Desk-scale sanity gate: the rescaled hulls stay bounded (linear growth
    // of the contaminated region, as in the shape theorem) and non-trivial.
    let areas: Vec<f64> = hulls.iter().map(|h| polygon_area(&h.hull)).collect();
    let bounded = areas.iter().all(|&a| a.is_finite() && a < 1e4);
    let nontrivial = areas.last().copied().unwrap_or(0.0) > 0.0;
    write_json(ctx, m, "shape_areas.json", &areas)?;
    Ok(vec![Gate::new(
        "hull_bounded_nontrivial",
        bounded && nontrivial,
        format!("rescaled hull areas {areas:.3?}"),
    )])
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        a += p[0] * q[1] - q[0] * p[1];
    }
    a.abs() / 2.0
}

fn hyptimes(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.hyptimes;
    let mut p = HypParams::default();
    p.e_threshold = c.e_threshold;
    p.t_max = c.t_max;
    p.r = c.r;
    p.lambda1p = c.lambda1p;
    p.n0 = c.n0;
    m.set("hyptimes.e_threshold", c.e_threshold)
        .set("hyptimes.t_max", c.t_max)
        .set("hyptimes.found_frac", c.found_frac)
        .set("hyptimes.r2_min", c.r2_min)
        .set("hyptimes.r", p.r)
        .set("hyptimes.lambda1p", p.lambda1p)
        .set("hyptimes.n0", p.n0);
    let seed = SeedCurve::Segment {
        a: [0.15, 0.35],
        b: [0.65, 0.55],
    };
    let results = ctx.par_map(|s| {
        let path = NoisePath::sample(s, ctx.model.d(), p.t_max, 1e-2);
        let curve = MaterialCurve::new(seed.clone(), 64, true);
        detect_hyperbolic_time(&ctx.model, &curve, 0.5, &path, &p)
    });
    let mut csv = String::from("seed,tau,expansion\n");
    let mut taus = Vec::new();
    let mut found = 0usize;
    for (s, r) in ctx.seeds.iter().zip(results) {
        match r {
            Ok(ev) => {
                let _ = writeln!(csv, "{s},{},{}", ev.tau, ev.expansion);
                taus.push(ev.tau as f64);
                found += 1;
            }
            Err(_) => {
                let _ = writeln!(csv, "{s},,");
            }
        }
    }
    write_artifact(ctx, m, "hyptimes.csv", &csv)?;
    write_plot(ctx, m, "hyptimes.csv", "seed", "tau")?;
    let frac = found as f64 / ctx.seeds.len() as f64;
    let mut gates = vec![Gate::new(
        "found_fraction",
        frac >= c.found_frac,
        format!("{found}/{} trials found a hyperbolic time", ctx.seeds.len()),
    )];
    // Exponential tail of the stopping time: ln P{tau > T} vs T, fit on the
    // tail region (median to 98th percentile) where the claim applies.
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |f: f64| {
        if taus.is_empty() {
            0.0
        } else {
            taus[((taus.len() - 1) as f64 * f) as usize]
        }
    };
    let (t_lo, t_hi) = (q(0.5), q(0.98));
    let thresholds: Vec<f64> = (0..9).map(|i| t_lo + (t_hi - t_lo) * i as f64 / 8.0).collect();
    let n = taus.len() as f64;
    let mut ts = Vec::new();
    let mut ls = Vec::new();
    for &t in &thresholds {
        let cnt = taus.iter().filter(|&&x| x > t).count();
        if cnt > 0 {
            ts.push(t);
            ls.push((cnt as f64 / n).ln());
        }
    }
    if ts.len() >= 3 {
        let (slope, _, r2) = linear_fit(&ts, &ls);
        gates.push(Gate::new(
            "survival_exponential",
            slope < 0.0 && r2 >= c.r2_min,
            format!("log-survival slope {slope:.4}, R^2 {r2:.3}"),
        ));
    } else {
        gates.push(Gate::new(
            "survival_exponential",
            false,
            "too few distinct stopping times for a tail fit".into(),
        ));
    }
    Ok(gates)
}

fn partition(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.partition;
    let mut pp = PartitionParams::default();
    pp.eps_cover = c.eps_cover;
    pp.hyp.r = c.r;
    pp.hyp.lambda1p = c.lambda1p;
    m.set("partition.scale", c.scale)
        .set("partition.eps_cover", c.eps_cover)
        .set("partition.coverage_min", c.coverage_min)
        .set("partition.r", pp.hyp.r)
        .set("partition.lambda1p", pp.hyp.lambda1p);
    let curve = MaterialCurve::new(standard_segment(c.scale), 64, true);
    let path = NoisePath::sample(ctx.seeds[0], ctx.model.d(), pp.hyp.t_max * 3.0, 1e-2);
    let res = partition_curve(&ctx.model, &curve, &path, &pp).map_err(|e| e.to_string())?;
    let mut csv = String::from("s_lo,s_hi,n_j,image_length\n");
    for p in &res.pieces {
        let _ = writeln!(csv, "{},{},{},{}", p.s_lo, p.s_hi, p.n_j, p.image_length);
    }
    write_artifact(ctx, m, "pieces.csv", &csv)?;
    write_plot(ctx, m, "pieces.csv", "s_lo", "n_j")?;

    let r = pp.hyp.r;
    let band_ok = res
        .pieces
        .iter()
        .all(|p| p.image_length >= r / 100.0 - 1e-12 && p.image_length <= r / 50.0 + 1e-12);
    let mut sorted: Vec<(f64, f64)> = res.pieces.iter().map(|p| (p.s_lo, p.s_hi)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let disjoint = sorted.windows(2).all(|w| w[0].1 <= w[1].0 + 1e-12);
    Ok(vec![
        Gate::new(
            "coverage",
            res.coverage >= c.coverage_min,
            format!(
                "{} pieces cover {:.5} of the material in {} blocks",
                res.pieces.len(),
                res.coverage,
                res.blocks
            ),
        ),
        Gate::new(
            "length_band",
            band_ok,
            format!("image lengths within [r/100, r/50], r = {r}"),
        ),
        Gate::new("disjoint", disjoint, "material intervals are disjoint".into()),
    ])
}

fn cantor(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.cantor;
    let mut pp = PartitionParams::default();
    pp.eps_cover = c.eps_cover;
    m.set("cantor.depth", c.depth as f64)
        .set("cantor.theta_cut", c.theta_cut)
        .set("cantor.branches", c.branches as f64)
        .set("cantor.eps_cover", c.eps_cover)
        .set("cantor.ex", c.ex)
        .set("cantor.ey", c.ey)
        .set("cantor.r2_min", c.r2_min);
    let curve = MaterialCurve::new(standard_segment(0.4), 64, true);
    let path = NoisePath::sample(ctx.seeds[0], ctx.model.d(), 5000.0, 1e-2);
    let mut tree = build_cantor(
        &ctx.model,
        &curve,
        &path,
        [c.ex, c.ey],
        c.theta_cut,
        c.depth as u32,
        &pp,
    );
    let est = dimension_mass_distribution(&mut tree, c.branches as usize, ctx.seeds[0])
        .map_err(|e| e.to_string())?;
    let mut csv = String::from("depth,mass,width,monotone,cut,failed\n");
    for n in &tree.nodes {
        let (lo, hi) = n.original_interval();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            n.depth,
            n.mass,
            (hi - lo).abs(),
            n.monotone as u8,
            n.cut as u8,
            n.failed as u8
        );
    }
    write_artifact(ctx, m, "nodes.csv", &csv)?;
    write_plot(ctx, m, "nodes.csv", "depth", "mass")?;
    write_json(ctx, m, "dimension.json", &est)?;
    Ok(vec![
        Gate::new(
            "dimension_fit",
            est.r2 >= c.r2_min,
            format!(
                "dimension {:.4}, R^2 {:.3}, scales [{:.2e}, {:.2e}]",
                est.value, est.r2, est.scale_lo, est.scale_hi
            ),
        ),
        Gate::new(
            "dimension_range",
            est.value > 0.0 && est.value <= 1.05,
            format!("estimate {:.4} within (0, 1]", est.value),
        ),
    ])
}

fn escape(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.escape;
    let mut pp = PartitionParams::default();
    pp.eps_cover = c.eps_cover;
    m.set("escape.depth", c.depth as f64)
        .set("escape.theta_cut", c.theta_cut)
        .set("escape.samples", c.samples as f64)
        .set("escape.t_horizon", c.t_horizon)
        .set("escape.eps_cover", c.eps_cover)
        .set("escape.ex", c.ex)
        .set("escape.ey", c.ey)
        .set("escape.positive_frac", c.positive_frac);
    let seed = standard_segment(0.4);
    let curve = MaterialCurve::new(seed.clone(), 64, true);
    let horizon = 5000.0f64.max(c.t_horizon + 1.0);
    let path = NoisePath::sample(ctx.seeds[0], ctx.model.d(), horizon, 1e-2);
    let e = [c.ex, c.ey];
    let mut tree = build_cantor(
        &ctx.model,
        &curve,
        &path,
        e,
        c.theta_cut,
        c.depth as u32,
        &pp,
    );
    let params = tree.sample_measure(c.samples as usize, ctx.seeds[0]);
    let rep = drift_statistics(&ctx.model, &seed, &params, &path, e, c.t_horizon, 1.0)
        .map_err(|e| e.to_string())?;
    let mut csv = String::from("param,late_min_drift,max_excursion\n");
    for i in 0..params.len() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            params[i], rep.late_min_drift[i], rep.max_excursion[i]
        );
    }
    write_artifact(ctx, m, "escape.csv", &csv)?;
    write_plot(ctx, m, "escape.csv", "param", "late_min_drift")?;
    let gate = if c.theta_cut > 0.0 {
        Gate::new(
            "positive_drift",
            rep.fraction_positive >= c.positive_frac,
            format!(
                "{:.3} of mu-samples drift positively (mean {:.4} +- {:.4})",
                rep.fraction_positive, rep.mean, rep.stderr
            ),
        )
    } else {
        Gate::new(
            "centered_drift",
            rep.mean.abs() <= 3.0 * rep.stderr,
            format!(
                "uncut control mean {:.4} +- {:.4} consistent with 0",
                rep.mean, rep.stderr
            ),
        )
    };
    Ok(vec![gate])
}

fn model_example(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.model_example;
    m.set("model_example.depth", c.depth as f64)
        .set("model_example.eps_a", c.eps_a)
        .set("model_example.eps_b", c.eps_b)
        .set("model_example.eps_c", c.eps_c)
        .set("model_example.dim_tol", c.dim_tol)
        .set("model_example.drift_eps", c.drift_eps)
        .set("model_example.drift_tau", c.drift_tau)
        .set("model_example.drift_n", c.drift_n as f64)
        .set("model_example.drift_count", c.drift_count as f64)
        .set("model_example.drift_tol", c.drift_tol);
    let mut gates = Vec::new();
    let mut dims = Vec::new();
    for eps in [c.eps_a, c.eps_b, c.eps_c] {
        let d = in_dimension(eps);
        gates.push(Gate::new(
            &format!("dimension_eps_{eps}"),
            (d.box_count - d.closed_form).abs() <= c.dim_tol,
            format!(
                "box-count {:.4} vs closed form {:.4}",
                d.box_count, d.closed_form
            ),
        ));
        dims.push(d);
    }
    write_json(ctx, m, "in_dimension.json", &dims)?;

    let drift = mu_drift(
        c.drift_eps,
        c.drift_tau,
        c.drift_n as usize,
        c.drift_count as usize,
        ctx.seeds[0],
    );
    gates.push(Gate::new(
        "mu_drift",
        (drift.mean - drift.expected).abs() <= c.drift_tol * drift.expected,
        format!("mean {:.5} vs expected {:.5}", drift.mean, drift.expected),
    ));
    let zero = mu_drift(
        0.0,
        c.drift_tau,
        c.drift_n as usize,
        c.drift_count as usize,
        ctx.seeds[0],
    );
    gates.push(Gate::new(
        "mu_drift_zero",
        zero.mean.abs() <= 3.0 * zero.stderr,
        format!("eps = 0 mean {:.5} +- {:.5}", zero.mean, zero.stderr),
    ));
    let mut csv = String::from("eps,per_sample_drift\n");
    for v in &drift.per_sample {
        let _ = writeln!(csv, "{},{}", c.drift_eps, v);
    }
    write_artifact(ctx, m, "mu_drift.csv", &csv)?;
    write_plot(ctx, m, "mu_drift.csv", "eps", "per_sample_drift")?;
    Ok(gates)
}

fn ld_checks(ctx: &ExpCtx, m: &mut RunManifest) -> Result<Vec<Gate>, String> {
    let c = &ctx.cfg.ld;
    m.set("ld.replicas", c.replicas as f64)
        .set("ld.n_max", c.n_max as f64)
        .set("ld.eps", c.eps)
        .set("ld.walk_bias", c.walk_bias)
        .set("ld.walk_replicas", c.walk_replicas as f64)
        .set("ld.walk_steps", c.walk_steps as f64)
        .set("ld.r2_min", c.r2_min);
    let n = c.n_max as usize;
    let seqs: Vec<Vec<f64>> = (0..c.replicas)
        .map(|i| {
            let mut rng = CounterRng::from_words(&[0x6c64_6368, ctx.seeds[0], i]);
            (0..n).map(|_| rng.normal()).collect()
        })
        .collect();
    let n_grid: Vec<usize> = (2..=8).map(|k| n * k / 8).collect();
    let mart = supermartingale_gate(&seqs, &[0.1, 0.25, 0.5, 1.0], 20.0, 0.0, c.eps, &n_grid)
        .map_err(|e| e.to_string())?;
    let horizons: Vec<usize> = (1..=4).map(|k| n * k / 4).collect();
    let bad = bad_pair_density(&seqs, 3.0, c.eps, &horizons, 0.01);
    let mean_bad = bad.fractions.iter().sum::<f64>() / bad.fractions.len() as f64;
    let spec = WalkSpec {
        bias: c.walk_bias,
        m: 0,
        steps: c.walk_steps as usize,
    };
    let walk = return_walk_tails(
        &spec,
        c.walk_replicas as usize,
        ctx.seeds[0],
        &[1.0, 3.0, 10.0, 30.0],
    )
    .map_err(|e| e.to_string())?;
    write_json(ctx, m, "mart_report.json", &mart)?;
    write_json(ctx, m, "walk_report.json", &walk)?;
    let mut csv = String::from("n,log_survival\n");
    for (t, l) in mart.tail.thresholds.iter().zip(&mart.tail.log_survival) {
        let _ = writeln!(csv, "{t},{l}");
    }
    write_artifact(ctx, m, "mart_tail.csv", &csv)?;
    write_plot(ctx, m, "mart_tail.csv", "n", "log_survival")?;
    Ok(vec![
        Gate::new(
            "supermartingale_conditions",
            mart.cond_exp_moment_ok && mart.cond_mean_ok,
            format!("max passing s = {:.2}", mart.max_passing_s),
        ),
        Gate::new(
            "deviation_tail",
            mart.tail_ok && mart.tail.r2 >= c.r2_min,
            format!("slope {:.4}, R^2 {:.3}", mart.tail.slope, mart.tail.r2),
        ),
        Gate::new(
            "bad_pair_density",
            mean_bad < 0.01,
            format!("mean bad-pair fraction {mean_bad:.5}"),
        ),
        Gate::new(
            "return_walk_tails",
            walk.both_ok
                && walk.return_time_tail.r2 >= c.r2_min
                && walk.excursion_max_tail.r2 >= c.r2_min
                && walk.good_time_fraction.windows(2).all(|w| w[1] >= w[0]),
            format!(
                "return slope {:.3} (R^2 {:.3}), excursion slope {:.3} (R^2 {:.3})",
                walk.return_time_tail.slope,
                walk.return_time_tail.r2,
                walk.excursion_max_tail.slope,
                walk.excursion_max_tail.r2
            ),
        ),
    ])
}

fn write_plot(
    ctx: &ExpCtx,
    manifest: &mut RunManifest,
    csv: &str,
    xlabel: &str,
    ylabel: &str,
) -> Result<(), String> {
    let script = format!(
        "# gnuplot script; run `gnuplot plot.gp` in this directory\n\
         set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel '{xlabel}'\n\
         set ylabel '{ylabel}'\n\
         set terminal pngcairo size 900,600\n\
         set output '{stem}.png'\n\
         plot '{csv}' using 1:2 with points pt 7 ps 0.4\n",
        stem = Path::new(csv).file_stem().unwrap().to_string_lossy(),
    );
    write_artifact(ctx, manifest, "plot.gp", &script)
}
