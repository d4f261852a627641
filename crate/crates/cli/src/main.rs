use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ebcomplete::checkpoint::Checkpoint;
use ebcomplete::config::{LangevinConfig, TrainConfig};
use ebcomplete::data::{self, build_dataset, load_held_out, load_training_pools, write_dataset};
use ebcomplete::gradsuite::{run_suite, SuiteOptions};
use ebcomplete::inference::{self, TransportMode};
use ebcomplete::train::run_training_with;

#[derive(Parser, Debug)]
#[command(name = "ebcomplete", version, about = "Unpaired point cloud completion by latent energy transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the synthetic corpus and write it with a manifest.
    GenData(GenData),
    /// Train a model on a generated corpus.
    Train(Train),
    /// Complete one partial cloud.
    Complete(Complete),
    /// Write a per-point variance map over repeated completions.
    Uncertainty(Uncertainty),
    /// Score a checkpoint (or a reference completer) on the held-out pairs.
    Eval(Eval),
    /// Run the finite-difference gradient suite.
    Gradcheck(Gradcheck),
}

#[derive(Args, Debug)]
struct GenData {
    /// TOML training config; only the `data` table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    instances_per_family: Option<usize>,
    #[arg(long)]
    num_points: Option<usize>,
}

#[derive(Args, Debug)]
struct Train {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Manifest file or the directory holding it.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Continue from the newest checkpoint in `--out`.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate for all four networks.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    disable_eb_transport: bool,
    #[arg(long)]
    disable_residual_sampling: bool,
    #[arg(long)]
    disable_adversarial: bool,
    /// Print a progress line every this many iterations (0 for none).
    #[arg(long, default_value_t = 100)]
    progress_every: u64,
}

#[derive(Args, Debug, Clone)]
struct Chain {
    /// Langevin steps K.
    #[arg(long, default_value_t = 8)]
    steps: usize,
    /// Langevin step size δ².
    #[arg(long, default_value_t = 0.05)]
    step_size: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl Chain {
    fn langevin(&self) -> LangevinConfig {
        LangevinConfig {
            steps: self.steps,
            step_size_sq: self.step_size,
            noise_scale: self.noise_scale,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct Complete {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    chain: Chain,
}

#[derive(Args, Debug)]
struct Uncertainty {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[command(flatten)]
    chain: Chain,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("completer").required(true).args(["checkpoint", "oracle", "identity"])))]
struct Eval {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Score the ground truth itself.
    #[arg(long)]
    oracle: bool,
    /// Score the partial input as its own completion.
    #[arg(long)]
    identity: bool,
    #[arg(long)]
    data: PathBuf,
    /// Where to write the CSV table.
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    chain: Chain,
}

#[derive(Args, Debug)]
struct Gradcheck {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn print_config(value: &serde_json::Value) {
    println!("resolved config:");
    println!("{}", serde_json::to_string_pretty(value).expect("json"));
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

fn gen_data(a: GenData) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?.data;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.instances_per_family {
        cfg.instances_per_family = n;
    }
    if let Some(n) = a.num_points {
        cfg.num_points = n;
    }
    cfg.validate()?;
    print_config(&serde_json::to_value(&cfg)?);
    let split = build_dataset(&cfg, cfg.seed)?;
    let manifest = write_dataset(&a.out, &split, &cfg, cfg.seed)?;
    println!(
        "wrote {} partial, {} complete, {} held-out pairs; manifest {}",
        split.train.partial.len(),
        split.train.complete.len(),
        split.held_out.len(),
        manifest.display()
    );
    Ok(())
}

fn train(a: Train) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    let manifest = data::read_manifest(&a.data)
        .with_context(|| format!("reading manifest {}", a.data.display()))?;
    if a.config.is_none() {
        cfg.data = manifest.config.clone();
        cfg.model.num_points = cfg.data.num_points;
    }
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.optim.set_lr(v);
    }
    if let Some(v) = a.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    cfg.ablation.disable_eb_transport |= a.disable_eb_transport;
    cfg.ablation.disable_residual_sampling |= a.disable_residual_sampling;
    cfg.ablation.disable_adversarial |= a.disable_adversarial;
    cfg.validate()?;
    print_config(&serde_json::to_value(&cfg)?);
    let pools = load_training_pools(&a.data)?;
    let every = a.progress_every;
    let out = run_training_with(&cfg, &pools, &a.out, a.resume, |r| {
        if every > 0 && (r.iteration + 1) % every == 0 {
            eprintln!(
                "iter {:>6}  recon {:.5}  fid {:.5}  adv_g {:+.4}  adv_d {:.4}  ebm {:+.4}  E(y) {:+.3}  E(z~) {:+.3}",
                r.iteration + 1,
                r.recon,
                r.fidelity,
                r.adv_g,
                r.adv_d,
                r.ebm,
                r.energy_complete,
                r.energy_transported
            );
        }
    })?;
    if let Some(k) = out.resumed_from {
        println!("resumed from iteration {k}");
    }
    println!("final checkpoint {}", out.final_checkpoint.display());
    println!("log {}", out.log.display());
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn complete(a: Complete) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let lc = a.chain.langevin();
    lc.validate()?;
    let mode = TransportMode::from_ablation(&ckpt.config.ablation);
    print_config(&json!({ "langevin": lc, "transport": mode, "checkpoint_iteration": ckpt.iteration }));
    let x = data::read_cloud(&a.input)?;
    let y = inference::complete(&ckpt.model, mode, &x, &lc, a.chain.seed)?;
    data::write_cloud(&a.out, &y)?;
    println!("wrote {} points to {}", y.len(), a.out.display());
    Ok(())
}

fn uncertainty(a: Uncertainty) -> Result<()> {
    if a.runs < 2 {
        bail!(UsageError(format!("--runs must be at least 2, got {}", a.runs)));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let lc = a.chain.langevin();
    lc.validate()?;
    let mode = TransportMode::from_ablation(&ckpt.config.ablation);
    print_config(&json!({ "langevin": lc, "transport": mode, "runs": a.runs }));
    let x = data::read_cloud(&a.input)?;
    let map = inference::uncertainty_map(&ckpt.model, mode, &x, &lc, a.runs, a.chain.seed)?;
    data::write_cloud_with_scalar(&a.out, &map.mean_points, &map.variance)?;
    let mean = map.variance.iter().sum::<f64>() / map.variance.len() as f64;
    println!("wrote {} points to {}; mean variance {mean:.6e}", map.variance.len(), a.out.display());
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    let pairs = load_held_out(&a.data).with_context(|| format!("reading held-out pairs from {}", a.data.display()))?;
    let lc = a.chain.langevin();
    let report = if a.oracle {
        print_config(&json!({ "completer": "oracle" }));
        inference::evaluate_oracle(&pairs)?
    } else if a.identity {
        print_config(&json!({ "completer": "identity" }));
        inference::evaluate_identity(&pairs)?
    } else {
        let path = a.checkpoint.as_deref().expect("clap group");
        let ckpt = load_checkpoint(path)?;
        lc.validate()?;
        let mode = TransportMode::from_ablation(&ckpt.config.ablation);
        print_config(&json!({ "completer": path, "langevin": lc, "transport": mode }));
        inference::evaluate_model(&ckpt.model, mode, &pairs, &lc, a.chain.seed)?
    };
    print!("{}", report.summary());
    if let Some(p) = a.report {
        std::fs::write(&p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
        println!("report {}", p.display());
    }
    Ok(())
}

fn gradcheck(a: Gradcheck) -> Result<()> {
    let opts = SuiteOptions {
        seed: a.seed,
        instances: a.instances,
        inject_fault: a.inject_fault,
        ..Default::default()
    };
    print_config(&json!({
        "seed": opts.seed,
        "instances": opts.instances,
        "h": opts.h,
        "tol": opts.tol,
        "coords_per_instance": opts.coords_per_instance,
    }));
    let report = run_suite(&opts)?;
    for c in &report.cases {
        println!(
            "{:<28} {:>5} checked {:>5} skipped  max rel err {:.3e}  {}",
            c.name,
            c.report.checked,
            c.report.skipped_nonsmooth,
            c.report.max_rel_error,
            if c.report.passes(report.tol) { "ok" } else { "FAIL" }
        );
    }
    if let Some(w) = report.worst() {
        println!("worst relative error {:.3e} ({})", w.report.max_rel_error, w.name);
    }
    if !report.passes() {
        bail!("gradient check failed at tolerance {:e}", report.tol);
    }
    println!("all {} cases passed", report.cases.len());
    Ok(())
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Keeps large tensor buffers on the heap instead of fresh mappings, which
/// otherwise page-fault on every training step.
fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
    }
}

fn main() -> ExitCode {
    tune_allocator();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Complete(a) => complete(a),
        Command::Uncertainty(a) => uncertainty(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
