//! Full acceptance gate: eleven desk-scale criteria, one PASS/FAIL line
//! each. The run takes on the order of an hour single-threaded, so it is
//! ignored by default:
//!
//! ```text
//! cargo test --release --test acceptance -- --ignored --nocapture
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use torusflow::cantor::{
    box_counting, build_cantor, clt_experiment_pair, dimension_mass_distribution,
    drift_statistics, InitialMeasure,
};
use torusflow::curve::{MaterialCurve, SeedCurve};
use torusflow::flow_model::FlowModel;
use torusflow::hyptime::{
    detect_hyperbolic_time, partition_curve, validate_piece, HypParams, PartitionParams,
};
use torusflow::ld::{bad_pair_density, return_walk_tails, supermartingale_gate, WalkSpec};
use torusflow::model_example::{in_dimension, mu_drift};
use torusflow::noise::NoisePath;
use torusflow::rng::CounterRng;
use torusflow::sde::lyapunov_spectrum;
use torusflow::stats::{linear_fit, moments};

struct Outcome {
    criterion: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn standard_segment(scale: f64) -> SeedCurve {
    SeedCurve::Segment {
        a: [0.2, 0.4],
        b: [0.2 + 0.3 * scale, 0.4 + 0.125 * scale],
    }
}

#[test]
#[ignore = "full acceptance run (~1 h); invoke with --ignored --nocapture"]
fn acceptance() {
    let model = FlowModel::default_model();
    let criteria: Vec<(usize, &'static str, fn(&FlowModel) -> (bool, String))> = vec![
        (1, "model-example dimension", c01_dimension),
        (2, "model-example drift", c02_drift),
        (3, "lyapunov exponents", c03_lyapunov),
        (4, "clt at desk scale", c04_clt),
        (5, "hyperbolic-time tails", c05_hyptimes),
        (6, "partition soundness", c06_partition),
        (7, "cantor dimension trend", c07_cantor_trend),
        (8, "constructed-measure drift", c08_measure_drift),
        (9, "full-dimension mechanism", c09_foliation),
        (10, "ld harness", c10_ld),
        (11, "reproducibility", c11_replay),
    ];
    let mut outcomes = Vec::new();
    for (criterion, name, f) in criteria {
        let t0 = Instant::now();
        let (pass, detail) = f(&model);
        let line = format!(
            "{} criterion {criterion:2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
        println!("{line}");
        outcomes.push(Outcome {
            criterion,
            name,
            pass,
            detail,
        });
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("criterion {} ({}): {}", o.criterion, o.name, o.detail))
        .collect();
    assert!(failed.is_empty(), "acceptance failures:\n{}", failed.join("\n"));
}

// 1. Box-count of the depth-14 cut construction matches ln2/ln(2/(1-eps))
//    within 0.05 for eps in {0.1, 0.3, 0.5}.
fn c01_dimension(_: &FlowModel) -> (bool, String) {
    let mut pass = true;
    let mut detail = Vec::new();
    for eps in [0.1, 0.3, 0.5] {
        let d = in_dimension(eps);
        let err = (d.box_count - d.closed_form).abs();
        pass &= err <= 0.05;
        detail.push(format!(
            "eps {eps}: box {:.4} vs closed {:.4}",
            d.box_count, d.closed_form
        ));
    }
    (pass, detail.join("; "))
}

// 2. mu_drift(0.2, tau=1, n=2000, count=500) within 10% of eps/(2(1-eps));
//    eps = 0 within 3 stderr of 0.
fn c02_drift(_: &FlowModel) -> (bool, String) {
    let d = mu_drift(0.2, 1.0, 2000, 500, 1);
    let ok1 = (d.mean - d.expected).abs() <= 0.1 * d.expected;
    let z = mu_drift(0.0, 1.0, 2000, 500, 1);
    let ok0 = z.mean.abs() <= 3.0 * z.stderr;
    (
        ok1 && ok0,
        format!(
            "mean {:.5} vs expected {:.5}; eps=0 mean {:.5} +- {:.5}",
            d.mean, d.expected, z.mean, z.stderr
        ),
    )
}

// 3. 16 seeds, T=2000, h=1e-3: lambda1 > 3 stderr above 0 and
//    |lambda1 + lambda2| < 0.05.
fn c03_lyapunov(model: &FlowModel) -> (bool, String) {
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    for seed in 1..=16u64 {
        let e = lyapunov_spectrum(model, seed, 2000.0, 1e-3, 1.0).expect("spectrum");
        l1.push(e.lambdas[0]);
        l2.push(e.lambdas[1]);
    }
    let m1 = moments(&l1);
    let m2 = moments(&l2);
    let sum = m1.mean + m2.mean;
    (
        m1.mean > 3.0 * m1.stderr && sum.abs() < 0.05,
        format!(
            "lambda1 {:.4} +- {:.4}, lambda1+lambda2 {:.4}",
            m1.mean, m1.stderr, sum
        ),
    )
}

// 4. Quenched CLT, T=400, 1e4 segment points: per-axis |skewness| < 0.15,
//    |excess kurtosis| < 0.3, covariance change T -> 2T below 15%.
fn c04_clt(model: &FlowModel) -> (bool, String) {
    let t = 400.0;
    let init = InitialMeasure::Curve(SeedCurve::Segment {
        a: [0.2, 0.4],
        b: [0.7, 0.55],
    });
    let path = NoisePath::sample(5, model.d(), 2.0 * t + 1.0, 1e-2);
    let (rep_t, rep_2t) =
        clt_experiment_pair(model, &init, &path, t, 10_000, 5).expect("clt pair");
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, mo) in rep_t.principal_moments.iter().enumerate() {
        pass &= mo.skewness.abs() < 0.15 && mo.excess_kurtosis.abs() < 0.3;
        parts.push(format!(
            "axis{i} skew {:.3} kurt {:.3}",
            mo.skewness, mo.excess_kurtosis
        ));
    }
    let (a, b) = (rep_t.covariance, rep_2t.covariance);
    let frob = |m: [[f64; 2]; 2]| (m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2)).sqrt();
    let diff = [
        [b[0][0] - a[0][0], b[0][1] - a[0][1]],
        [b[1][0] - a[1][0], b[1][1] - a[1][1]],
    ];
    let rel = frob(diff) / frob(a);
    pass &= rel < 0.15;
    parts.push(format!("cov change {rel:.3}"));
    (pass, parts.join("; "))
}

// 5. 500 detection trials at E=10: at least 95% find a hyperbolic time
//    within T_max=200 and the stopping-time log-survival is linear
//    (slope < 0, R^2 >= 0.9).
fn c05_hyptimes(model: &FlowModel) -> (bool, String) {
    let p = HypParams::default();
    assert_eq!(p.e_threshold, 10.0);
    assert_eq!(p.t_max, 200.0);
    let seed = SeedCurve::Segment {
        a: [0.15, 0.35],
        b: [0.65, 0.55],
    };
    let mut taus = Vec::new();
    let trials = 500u64;
    for s in 1..=trials {
        let path = NoisePath::sample(s, model.d(), p.t_max, 1e-2);
        let curve = MaterialCurve::new(seed.clone(), 64, true);
        if let Ok(ev) = detect_hyperbolic_time(model, &curve, 0.5, &path, &p) {
            taus.push(ev.tau);
        }
    }
    let frac = taus.len() as f64 / trials as f64;
    // Exponential-tail fit on the tail region (median to 98th percentile);
    // thresholds spanning the bulk or the extreme order statistics measure
    // the ramp-up, not the advertised tail.
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |f: f64| taus[((taus.len() - 1) as f64 * f) as usize];
    let (lo, hi) = (q(0.5), q(0.98));
    let thresholds: Vec<f64> = (0..9).map(|i| lo + (hi - lo) * i as f64 / 8.0).collect();
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
    let (slope, _, r2) = linear_fit(&ts, &ls);
    (
        frac >= 0.95 && slope < 0.0 && r2 >= 0.9,
        format!(
            "found {:.3} of {trials}, tail slope {slope:.4}, R^2 {r2:.3}",
            frac
        ),
    )
}

// 6. Partition soundness: every piece's image length in [r/100, r/50] on
//    the polyline metric, the backward envelope re-validated independently
//    for every piece, coverage >= 0.999.
fn c06_partition(model: &FlowModel) -> (bool, String) {
    let pp = PartitionParams::default();
    let seed = standard_segment(0.4);
    let curve = MaterialCurve::new(seed.clone(), 64, true);
    let path = NoisePath::sample(11, model.d(), pp.hyp.t_max * 3.0, 1e-2);
    let res = partition_curve(model, &curve, &path, &pp).expect("partition");
    let r = pp.hyp.r;
    let band = res
        .pieces
        .iter()
        .all(|p| p.image_length >= r / 100.0 - 1e-12 && p.image_length <= r / 50.0 + 1e-12);
    let mut envelope_ok = 0usize;
    for piece in &res.pieces {
        if validate_piece(model, &seed, piece, &path, &pp.hyp).unwrap_or(false) {
            envelope_ok += 1;
        }
    }
    let all_env = envelope_ok == res.pieces.len();
    (
        band && all_env && res.coverage >= 0.999,
        format!(
            "{} pieces, coverage {:.5}, band {}, envelope {}/{}",
            res.pieces.len(),
            res.coverage,
            band,
            envelope_ok,
            res.pieces.len()
        ),
    )
}

// 7. Mass-distribution dimension at depth 8 strictly increases as the cut
//    fraction shrinks over {0.3, 0.1, 0.03}, ends >= 0.9, and the uncut
//    control reaches >= 0.98.
fn c07_cantor_trend(model: &FlowModel) -> (bool, String) {
    let mut pp = PartitionParams::default();
    pp.eps_cover = 0.02;
    let curve = MaterialCurve::new(standard_segment(0.4), 64, true);
    let path = NoisePath::sample(77, model.d(), 5000.0, 1e-2);
    let mut dims = Vec::new();
    for theta in [0.3, 0.1, 0.03, 0.0] {
        let mut tree = build_cantor(model, &curve, &path, [1.0, 0.0], theta, 8, &pp);
        let est = dimension_mass_distribution(&mut tree, 60, 77).expect("dimension");
        dims.push(est.value);
    }
    let increasing = dims[0] < dims[1] && dims[1] < dims[2];
    (
        increasing && dims[2] >= 0.9 && dims[3] >= 0.98,
        format!(
            "theta 0.3/0.1/0.03 -> {:.4}/{:.4}/{:.4}; uncut control {:.4}",
            dims[0], dims[1], dims[2], dims[3]
        ),
    )
}

// 8. Late-window directional drift of 500 mu-samples from the theta=0.3,
//    depth-6 measure positive for >= 90%; the uncut control is centered.
fn c08_measure_drift(model: &FlowModel) -> (bool, String) {
    let mut pp = PartitionParams::default();
    pp.eps_cover = 0.02;
    let seed = standard_segment(0.05);
    let curve = MaterialCurve::new(seed.clone(), 64, true);
    let path = NoisePath::sample(77, model.d(), 5000.0, 1e-2);
    let e = [1.0, 0.0];

    let mut tree = build_cantor(model, &curve, &path, e, 0.3, 6, &pp);
    let params = tree.sample_measure(500, 77);
    let rep = drift_statistics(model, &seed, &params, &path, e, 60.0, 1.0).expect("drift");

    // Samples sharing one realization are correlated, so the control's
    // centering is judged across independent realizations: one mean drift
    // per noise path, 3-sigma gate on their spread.
    let mut cmeans = Vec::new();
    for ps in [177u64, 277, 377, 477] {
        let cpath = NoisePath::sample(ps, model.d(), 5000.0, 1e-2);
        let mut control = build_cantor(model, &curve, &cpath, e, 0.0, 6, &pp);
        let cparams = control.sample_measure(50, ps);
        let crep = drift_statistics(model, &seed, &cparams, &cpath, e, 60.0, 1.0).expect("drift");
        cmeans.push(crep.mean);
    }
    let cm = moments(&cmeans);
    let centered = cm.mean.abs() <= 3.0 * cm.stderr;
    (
        rep.fraction_positive >= 0.9 && centered,
        format!(
            "positive fraction {:.3} (mean {:.4} +- {:.4}); control mean {:.4} +- {:.4} over {} realizations",
            rep.fraction_positive, rep.mean, rep.stderr, cm.mean, cm.stderr, cmeans.len()
        ),
    )
}

// 9. Pooling mu-samples across 32 transverse foliation leaves raises the
//    box-count estimate by one dimension over a single leaf, on the scale
//    window set by the leaf spacing.
fn c09_foliation(model: &FlowModel) -> (bool, String) {
    let path = NoisePath::sample(77, model.d(), 5000.0, 1e-2);
    let mut pp = PartitionParams::default();
    pp.eps_cover = 0.02;
    // Leaf spacing delta sets the fit window [delta, 16*delta]: below delta
    // the 32 discrete leaves stop acting like a transversal continuum, above
    // 32*delta the stack saturates. Horizontal leaves translated along y at
    // half-box offsets of a grid-aligned spacing (0.4 is a multiple of
    // 16*delta) make the transversal box count exactly 32/2^j at scale
    // 2^j*delta, so the pooled estimate gains the full extra dimension.
    // Per-leaf mu-sample spacing (~leaf length / samples) sits inside the
    // window so both box-counts are populated at every scale.
    let leaves = 32usize;
    let samples = 30usize;
    let delta = 0.4 / 1024.0;
    let scale = 0.05;
    let scales: Vec<f64> = (0..5).map(|i| delta * (1 << i) as f64).collect();

    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let mut leaf_dims = Vec::new();
    for k in 0..leaves {
        let off = (k as f64 + 0.5) * delta;
        let seed = SeedCurve::Segment {
            a: [0.2, 0.4 + off],
            b: [0.2 + 0.3 * scale, 0.4 + off],
        };
        let curve = MaterialCurve::new(seed.clone(), 64, true);
        let mut tree = build_cantor(model, &curve, &path, [1.0, 0.0], 0.3, 2, &pp);
        let pts: Vec<Vec<f64>> = tree
            .sample_measure(samples, 1000 + k as u64)
            .iter()
            .map(|&s| {
                let p = seed.eval(s);
                vec![p[0], p[1]]
            })
            .collect();
        if let Ok(e) = box_counting(&pts, &scales) {
            leaf_dims.push(e.value);
        }
        pooled.extend(pts);
    }
    let leaf = leaf_dims.iter().sum::<f64>() / leaf_dims.len() as f64;
    let est = box_counting(&pooled, &scales).expect("pooled box-count");
    (
        est.value >= leaf + 1.0 - 0.1,
        format!(
            "pooled {:.3} (R^2 {:.3}) vs mean leaf {:.3} + 1 - 0.1",
            est.value, est.r2, leaf
        ),
    )
}

// 10. The three synthetic appendix checks: supermartingale conditions with
//     an exponential deviation tail on normal increments, vanishing
//     bad-pair density, and return/excursion tails of the biased reflected
//     walk; all tail fits with R^2 >= 0.9.
fn c10_ld(_: &FlowModel) -> (bool, String) {
    let n = 400usize;
    let seqs: Vec<Vec<f64>> = (0..4000u64)
        .map(|i| {
            let mut rng = CounterRng::from_words(&[0x6c64_6368, 1, i]);
            (0..n).map(|_| rng.normal()).collect()
        })
        .collect();
    let n_grid: Vec<usize> = (2..=8).map(|k| n * k / 8).collect();
    let mart = supermartingale_gate(&seqs, &[0.1, 0.25, 0.5, 1.0], 20.0, 0.0, 0.15, &n_grid)
        .expect("supermartingale");
    let horizons: Vec<usize> = (1..=4).map(|k| n * k / 4).collect();
    let bad = bad_pair_density(&seqs, 3.0, 0.15, &horizons, 0.01);
    let mean_bad = bad.fractions.iter().sum::<f64>() / bad.fractions.len() as f64;
    let walk = return_walk_tails(
        &WalkSpec {
            bias: 0.25,
            m: 0,
            steps: 40_000,
        },
        8,
        1,
        &[1.0, 3.0, 10.0, 30.0],
    )
    .expect("walk");
    let pass = mart.cond_exp_moment_ok
        && mart.cond_mean_ok
        && mart.tail_ok
        && mart.tail.r2 >= 0.9
        && mean_bad < 0.01
        && walk.both_ok
        && walk.return_time_tail.r2 >= 0.9
        && walk.excursion_max_tail.r2 >= 0.9;
    (
        pass,
        format!(
            "mart tail R^2 {:.3}, bad-pair {:.5}, walk R^2 {:.3}/{:.3}",
            mart.tail.r2, mean_bad, walk.return_time_tail.r2, walk.excursion_max_tail.r2
        ),
    )
}

// 11. Every subcommand's manifest replays bit-identically at reduced scale,
//     and multi-seed experiments produce identical artifacts with 1 or 2
//     worker threads.
fn c11_replay(_: &FlowModel) -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_torusflow");
    let base = std::env::temp_dir().join(format!("torusflow-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("diagnose-model", vec![]),
        ("lyapunov", vec!["--seeds", "4", "--set", "lyapunov.t=50"]),
        ("clt", vec!["--set", "clt.t=20", "--set", "clt.count=200"]),
        ("shape", vec!["--set", "shape.t_max=10", "--set", "shape.n_boundary=64"]),
        ("hyptimes", vec!["--seeds", "20"]),
        ("partition", vec!["--set", "partition.scale=0.1"]),
        ("cantor", vec!["--set", "cantor.depth=3", "--set", "cantor.branches=8"]),
        (
            "escape",
            vec![
                "--set",
                "escape.depth=2",
                "--set",
                "escape.samples=16",
                "--set",
                "escape.t_horizon=20",
            ],
        ),
        (
            "model-example",
            vec![
                "--set",
                "model_example.drift_n=500",
                "--set",
                "model_example.drift_count=100",
            ],
        ),
        (
            "ld-checks",
            vec![
                "--set",
                "ld.replicas=400",
                "--set",
                "ld.n_max=100",
                "--set",
                "ld.walk_steps=4000",
                "--set",
                "ld.walk_replicas=4",
            ],
        ),
    ];
    let mut problems = Vec::new();
    for (cmd, extra) in &runs {
        let out = base.join(cmd);
        let mut args: Vec<&str> = vec![cmd, "--seed", "3", "--out"];
        let out_s = out.to_str().unwrap().to_string();
        let leaked: &str = Box::leak(out_s.into_boxed_str());
        args.push(leaked);
        args.extend(extra.iter().copied());
        let code = run_cli(bin, &args);
        if code != 0 && code != 1 {
            problems.push(format!("{cmd}: run exited {code}"));
            continue;
        }
        // Replay into <out>/replay and byte-compare every recorded artifact.
        let manifest = out.join("manifest.json");
        let rcode = run_cli(bin, &["replay", manifest.to_str().unwrap()]);
        if rcode != 0 {
            problems.push(format!("{cmd}: replay exited {rcode}"));
            continue;
        }
        let replay_dir = out.join("replay");
        for (name, bytes) in dir_bytes(&out) {
            let rb = std::fs::read(replay_dir.join(&name)).unwrap_or_default();
            if rb != bytes {
                problems.push(format!("{cmd}: {name} differs after replay"));
            }
        }
    }
    // Parallel vs serial determinism on the multi-seed experiments.
    for cmd in ["lyapunov", "hyptimes"] {
        let a = base.join(format!("{cmd}-t1"));
        let b = base.join(format!("{cmd}-t2"));
        for (dir, threads) in [(&a, "1"), (&b, "2")] {
            let extra: Vec<&str> = if cmd == "lyapunov" {
                vec!["--seeds", "4", "--set", "lyapunov.t=50"]
            } else {
                vec!["--seeds", "20"]
            };
            let mut args = vec![cmd, "--seed", "3", "--threads", threads, "--out", dir.to_str().unwrap()];
            args.extend(extra);
            let code = run_cli(bin, &args);
            if code != 0 && code != 1 {
                problems.push(format!("{cmd} --threads {threads}: exited {code}"));
            }
        }
        let (da, db) = (dir_bytes(&a), dir_bytes(&b));
        if da != db {
            problems.push(format!("{cmd}: threads 1 vs 2 artifacts differ"));
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    if problems.is_empty() {
        (true, format!("{} subcommands replayed bit-identically; parallel == serial", runs.len()))
    } else {
        (false, problems.join("; "))
    }
}

fn run_cli(bin: &str, args: &[&str]) -> i32 {
    Command::new(bin)
        .args(args)
        .output()
        .map(|o| o.status.code().unwrap_or(-1))
        .unwrap_or(-1)
}

/// Bytes of every regular file directly inside `dir` (artifact directories
/// are flat; the nested replay directory is skipped).
fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    if let Ok(entries) = std::fs::read_dir(dir) {
        for e in entries.flatten() {
            if e.path().is_file() {
                map.insert(
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap_or_default(),
                );
            }
        }
    }
    map
}
