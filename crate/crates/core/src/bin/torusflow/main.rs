//! Batch experiment runner: every subcommand runs one reproducible
//! experiment into a run directory (data files, a gnuplot script, and a
//! manifest that replays bit-identically).

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Config;
use experiments::{default_seed_count, run, ExpCtx};
use torusflow::flow_model::{from_text, model_hash, FlowModel};
use torusflow::manifest::RunManifest;

#[derive(Parser)]
#[command(name = "torusflow", version, about = "Stochastic-flow experiments on the torus")]
struct Cli {
    /// TOML config file; defaults live in the binary and configs/default.toml
    /// mirrors them.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; work-unit seeds are base, base+1, ...
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Number of work-unit seeds (default depends on the experiment).
    #[arg(long, global = true)]
    seeds: Option<u64>,
    /// Run directory (default: runs/<experiment>-s<seed>-n<count>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; parallel and serial runs produce identical artifacts.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Override a config value, e.g. --set lyapunov.t=100. Repeatable.
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Nondegeneracy rank checks (A), (B), (C) and the zero-drift residual.
    DiagnoseModel,
    /// Lyapunov spectrum over an ensemble of realizations.
    Lyapunov,
    /// Rescaled displacement cloud of a transported segment measure.
    Clt,
    /// Convex hulls of the rescaled contaminated region.
    Shape,
    /// Hyperbolic stopping-time detection trials and their survival tail.
    Hyptimes,
    /// Stopping-time partition of a material curve.
    Partition,
    /// Random cut-off Cantor measure and its dimension estimate.
    Cantor,
    /// Directional drift of samples from the constructed measure.
    Escape,
    /// Exact self-similar cut construction: dimension and drift oracles.
    ModelExample,
    /// Synthetic large-deviations harness checks.
    LdChecks,
    /// Re-run a recorded manifest and verify artifacts are bit-identical.
    Replay { manifest: PathBuf },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::DiagnoseModel => "diagnose-model",
            Cmd::Lyapunov => "lyapunov",
            Cmd::Clt => "clt",
            Cmd::Shape => "shape",
            Cmd::Hyptimes => "hyptimes",
            Cmd::Partition => "partition",
            Cmd::Cantor => "cantor",
            Cmd::Escape => "escape",
            Cmd::ModelExample => "model-example",
            Cmd::LdChecks => "ld-checks",
            Cmd::Replay { .. } => "replay",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_model(cfg: &Config) -> Result<FlowModel, String> {
    if cfg.model.file.is_empty() {
        Ok(FlowModel::default_model())
    } else {
        let text = std::fs::read_to_string(&cfg.model.file)
            .map_err(|e| format!("model file {}: {e}", cfg.model.file))?;
        from_text(&text).map_err(|e| format!("model file {}: {e}", cfg.model.file))
    }
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| e.to_string())
}

fn main_inner(cli: &Cli) -> Result<bool, String> {
    if let Cmd::Replay { manifest } = &cli.cmd {
        return replay(cli, manifest);
    }
    let name = cli.cmd.name();
    let cfg = Config::load(cli.config.as_deref(), &cli.set, None).map_err(|e| e.to_string())?;
    let model = load_model(&cfg)?;
    let count = cli.seeds.unwrap_or_else(|| default_seed_count(name, &cfg));
    if count == 0 {
        return Err("--seeds must be at least 1".into());
    }
    let seeds: Vec<u64> = (cli.seed..cli.seed + count).collect();
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{name}-s{}-n{count}", cli.seed)));
    let pool = build_pool(cli.threads)?;
    let ctx = ExpCtx {
        cfg: &cfg,
        model,
        seeds,
        out,
        pool: &pool,
    };
    let gates = run(name, &ctx)?;
    let mut all = true;
    for g in &gates {
        println!(
            "{} {name}.{}: {}",
            if g.pass { "PASS" } else { "FAIL" },
            g.name,
            g.detail
        );
        all &= g.pass;
    }
    println!("run directory: {}", ctx.out.display());
    Ok(all)
}

/// Re-run the experiment recorded in a manifest into a fresh directory and
/// compare every artifact checksum. The model is taken from the original run
/// directory's `model.txt` and verified against the recorded hash.
fn replay(cli: &Cli, manifest_path: &std::path::Path) -> Result<bool, String> {
    let recorded = RunManifest::read(manifest_path).map_err(|e| e.to_string())?;
    let orig_dir = manifest_path
        .parent()
        .ok_or("manifest has no parent directory")?;
    let model_text = std::fs::read_to_string(orig_dir.join("model.txt"))
        .map_err(|e| format!("model.txt next to the manifest: {e}"))?;
    let model = from_text(&model_text).map_err(|e| e.to_string())?;
    if model_hash(&model) != recorded.model_hash {
        return Err("model.txt does not match the manifest's model hash".into());
    }
    let cfg = Config::load(None, &cli.set, Some(&recorded.params)).map_err(|e| e.to_string())?;
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| orig_dir.join("replay"));
    let pool = build_pool(cli.threads)?;
    let ctx = ExpCtx {
        cfg: &cfg,
        model,
        seeds: recorded.seeds.clone(),
        out,
        pool: &pool,
    };
    run(&recorded.experiment, &ctx)?;
    let bad = recorded.verify_artifacts(&ctx.out);
    if bad.is_empty() {
        println!(
            "PASS replay.identical: {} artifacts reproduced bit-identically",
            recorded.artifacts.len()
        );
        Ok(true)
    } else {
        for name in &bad {
            println!("FAIL replay.identical: {name} differs from the recorded checksum");
        }
        Ok(false)
    }
}
