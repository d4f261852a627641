//! Joint training. Each iteration runs six steps in order:
//!
//! 1. encode `z_x = E_α(x)`, `z_y = E_α(y)`
//! 2. transport `z_x → z̃` with a short Langevin chain
//! 3. decode `x̃ = D_β(z̃)`, `ỹ = D_β(z_y)`
//! 4. update `α, β` with `recon + λ₁·fidelity − λ₂·mean D_γ(x̃)`
//! 5. update `θ` with the energy objective
//! 6. update `γ` with the hinge loss
//!
//! Steps 1–4 share one tape; 5 and 6 each get their own, fed with detached
//! values, so no update can leak gradient into another network.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::checkpoint::{checkpoint_name, latest_in, Checkpoint, OptimizerStates};
use crate::config::{Ablation, AdvRealSource, LangevinConfig, TrainConfig};
use crate::data::TrainingPools;
use crate::error::{Error, Result};
use crate::geometry::{self, PointCloud};
use crate::networks::{decoder_forward, encoder_forward, Model, NetworkParams, Role};
use crate::objectives::{
    discriminator_loss, encoder_decoder_loss, fidelity_loss, generator_adv_term, hinge_discriminator_loss,
    recon_loss,
};
use crate::rng::{rng_for, stream};
use crate::transport::{ebm_surrogate_loss, sample_codes, sample_residuals, transport, EnergyNet};

/// One row of the training log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLogRecord {
    pub iteration: u64,
    pub recon: f64,
    pub fidelity: f64,
    /// `−mean D(x̃)`, zero when the adversarial branch is off.
    pub adv_g: f64,
    pub adv_d: f64,
    pub ed_loss: f64,
    pub ebm: f64,
    pub energy_complete: f64,
    pub energy_transported: f64,
    pub max_abs_energy: f64,
    /// Nodes on the encoder/decoder tape.
    pub tape_nodes: usize,
    pub wall_time: f64,
}

pub const LOG_HEADER: &str = "iteration,recon,fidelity,adv_g,adv_d,ed_loss,ebm,energy_complete,\
energy_transported,max_abs_energy,tape_nodes,wall_time";

impl TrainLogRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.6}",
            self.iteration,
            self.recon,
            self.fidelity,
            self.adv_g,
            self.adv_d,
            self.ed_loss,
            self.ebm,
            self.energy_complete,
            self.energy_transported,
            self.max_abs_energy,
            self.tape_nodes,
            self.wall_time
        )
    }

    pub fn is_finite(&self) -> bool {
        [
            self.recon,
            self.fidelity,
            self.adv_g,
            self.adv_d,
            self.ed_loss,
            self.ebm,
            self.energy_complete,
            self.energy_transported,
            self.max_abs_energy,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Parses a log written by [`run_training`].
pub fn read_log(path: &Path) -> Result<Vec<TrainLogRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(bad(format!("expected 12 fields, found {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| bad(format!("field {k}: {e}")));
        out.push(TrainLogRecord {
            iteration: f[0].parse().map_err(|e| bad(format!("iteration: {e}")))?,
            recon: num(1)?,
            fidelity: num(2)?,
            adv_g: num(3)?,
            adv_d: num(4)?,
            ed_loss: num(5)?,
            ebm: num(6)?,
            energy_complete: num(7)?,
            energy_transported: num(8)?,
            max_abs_energy: num(9)?,
            tape_nodes: f[10].parse().map_err(|e| bad(format!("tape_nodes: {e}")))?,
            wall_time: num(11)?,
        });
    }
    Ok(out)
}

/// A pair of unpaired batches stacked as `[B, N, 3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub y: Tensor,
}

impl Batch {
    pub fn from_clouds(x: &[&PointCloud], y: &[&PointCloud]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!(
                "batches of {} partial and {} complete clouds",
                x.len(),
                y.len()
            )));
        }
        Ok(Self {
            x: geometry::stack(x)?,
            y: geometry::stack(y)?,
        })
    }
}

/// Draws `batch_size` clouds with replacement from each pool, keyed by the
/// iteration so a resumed run sees the same batches.
pub fn sample_batch(pools: &TrainingPools, batch_size: usize, seed: u64, iteration: u64) -> Result<Batch> {
    if pools.partial.is_empty() || pools.complete.is_empty() {
        return Err(Error::InvalidArgument("both training pools must be non-empty".into()));
    }
    let mut rng = rng_for(seed, stream::BATCH, iteration);
    let x: Vec<&PointCloud> = (0..batch_size)
        .map(|_| &pools.partial[rng.random_range(0..pools.partial.len())].cloud)
        .collect();
    let y: Vec<&PointCloud> = (0..batch_size)
        .map(|_| &pools.complete[rng.random_range(0..pools.complete.len())].cloud)
        .collect();
    Batch::from_clouds(&x, &y)
}

fn diverged(loss: &'static str, iteration: u64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } | Error::Langevin { .. } => Error::Diverged { loss, iteration },
        other => other,
    }
}

/// Step 2 on a tape. Returns `z̃` for partial codes `z_x`:
///
/// - full model: `z_x + Ω(r)` with `r` sampled from zero
/// - `disable_eb_transport`: `z_x` itself
/// - `disable_residual_sampling`: a constant code sampled from `z_x`, so
///   nothing upstream receives gradient through it
pub fn transport_codes(
    tape: &mut Tape,
    theta: &NetworkParams,
    langevin: &LangevinConfig,
    ablation: &Ablation,
    z_x: Var,
    rng: &mut impl Rng,
) -> Result<Var> {
    if ablation.disable_eb_transport {
        return Ok(z_x);
    }
    let start = tape.value(z_x).clone();
    if ablation.disable_residual_sampling {
        let codes = sample_codes(&EnergyNet(theta), &start, langevin, rng)?;
        return tape.constant(codes);
    }
    let r = sample_residuals(&EnergyNet(theta), &start, langevin, rng)?;
    transport(tape, z_x, &r)
}

/// Values produced by steps 1–4.
#[derive(Clone, Debug)]
pub struct EdOutcome {
    pub recon: f64,
    pub fidelity: f64,
    pub adv_g: f64,
    pub loss: f64,
    pub tape_nodes: usize,
    pub z_x: Tensor,
    pub z_y: Tensor,
    pub z_tilde: Tensor,
    pub x_tilde: Tensor,
    pub y_tilde: Tensor,
}

/// Gradients of the encoder/decoder loss, in [`NetworkParams::tensors`] order.
pub struct EdGradients {
    pub encoder: Vec<Tensor>,
    pub decoder: Vec<Tensor>,
    /// Gradient reaching the discriminator's constants; always zero.
    pub discriminator: Vec<Tensor>,
}

/// Steps 1–4 without applying the update.
pub fn encoder_decoder_gradients(
    model: &Model,
    cfg: &TrainConfig,
    batch: &Batch,
    iteration: u64,
) -> Result<(EdOutcome, EdGradients)> {
    let fail = diverged("encoder_decoder", iteration);
    let n = model.config.num_points;
    let mut tape = Tape::new();
    let enc = model.encoder.bind(&mut tape, true)?;
    let dec = model.decoder.bind(&mut tape, true)?;
    let x = tape.constant(batch.x.clone())?;
    let y = tape.constant(batch.y.clone())?;
    let z_x = encoder_forward(&mut tape, &enc, x, n).map_err(&fail)?;
    let z_y = encoder_forward(&mut tape, &enc, y, n).map_err(&fail)?;

    let mut rng = rng_for(cfg.seed, stream::LANGEVIN, iteration);
    let z_tilde = transport_codes(&mut tape, &model.energy, &cfg.langevin, &cfg.ablation, z_x, &mut rng)
        .map_err(diverged("langevin", iteration))?;

    let x_tilde = decoder_forward(&mut tape, &dec, z_tilde).map_err(&fail)?;
    let y_tilde = decoder_forward(&mut tape, &dec, z_y).map_err(&fail)?;

    let squared = cfg.loss.squared_chamfer;
    let recon = recon_loss(&mut tape, y, y_tilde, squared).map_err(diverged("recon", iteration))?;
    let fid = fidelity_loss(&mut tape, x, x_tilde, squared).map_err(diverged("fidelity", iteration))?;
    let disc = model.discriminator.bind(&mut tape, false)?;
    let adv = if cfg.ablation.disable_adversarial {
        None
    } else {
        Some(
            generator_adv_term(&mut tape, &disc, model.disc_point_layers(), x_tilde)
                .map_err(diverged("adv_g", iteration))?,
        )
    };
    let mut weights = cfg.loss.clone();
    if cfg.ablation.disable_adversarial {
        weights.adversarial = 0.0;
    }
    let loss = encoder_decoder_loss(&mut tape, recon, fid, adv, &weights).map_err(&fail)?;
    let mut grads = tape.backward(loss)?;
    let outcome = EdOutcome {
        recon: tape.value(recon).item()?,
        fidelity: tape.value(fid).item()?,
        adv_g: match adv {
            Some(a) => tape.value(a).item()?,
            None => 0.0,
        },
        loss: tape.value(loss).item()?,
        tape_nodes: tape.len(),
        z_x: tape.value(z_x).clone(),
        z_y: tape.value(z_y).clone(),
        z_tilde: tape.value(z_tilde).clone(),
        x_tilde: tape.value(x_tilde).clone(),
        y_tilde: tape.value(y_tilde).clone(),
    };
    let g = EdGradients {
        encoder: enc.gradients(&mut grads),
        decoder: dec.gradients(&mut grads),
        discriminator: disc.gradients(&mut grads),
    };
    Ok((outcome, g))
}

/// Steps 1–4: computes the encoder/decoder loss and updates `α, β`.
pub fn encoder_decoder_step(
    model: &mut Model,
    opt: &mut OptimizerStates,
    cfg: &TrainConfig,
    batch: &Batch,
    iteration: u64,
) -> Result<EdOutcome> {
    let (out, g) = encoder_decoder_gradients(model, cfg, batch, iteration)?;
    let fail = diverged("encoder_decoder", iteration);
    opt.encoder.step(model.encoder.tensors_mut(), &g.encoder).map_err(&fail)?;
    opt.decoder.step(model.decoder.tensors_mut(), &g.decoder).map_err(&fail)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EbmStats {
    pub loss: f64,
    pub energy_complete: f64,
    pub energy_transported: f64,
    pub max_abs_energy: f64,
}

/// Step 5: updates `θ` from detached codes.
pub fn energy_step(
    model: &mut Model,
    opt: &mut OptimizerStates,
    cfg: &TrainConfig,
    z_tilde: &Tensor,
    z_y: &Tensor,
    iteration: u64,
) -> Result<EbmStats> {
    let fail = diverged("ebm", iteration);
    let mut tape = Tape::new();
    let theta = model.energy.bind(&mut tape, true)?;
    let zt = tape.constant(z_tilde.clone())?;
    let zy = tape.constant(z_y.clone())?;
    let l = ebm_surrogate_loss(&mut tape, &theta, zt, zy, cfg.loss.energy_reg).map_err(&fail)?;
    let mut grads = tape.backward(l.loss)?;
    let g = theta.gradients(&mut grads);
    opt.energy.step(model.energy.tensors_mut(), &g).map_err(&fail)?;
    Ok(EbmStats {
        loss: tape.value(l.loss).item()?,
        energy_complete: l.mean_energy_complete,
        energy_transported: l.mean_energy_transported,
        max_abs_energy: l.max_abs_energy,
    })
}

/// Step 6: updates `γ` with `real` as the real branch and `fake` as the
/// fake one, both detached.
pub fn discriminator_step(
    model: &mut Model,
    opt: &mut OptimizerStates,
    real: &Tensor,
    fake: &Tensor,
    iteration: u64,
) -> Result<f64> {
    let fail = diverged("adv_d", iteration);
    let mut tape = Tape::new();
    let gamma = model.discriminator.bind(&mut tape, true)?;
    let r = tape.constant(real.clone())?;
    let f = tape.constant(fake.clone())?;
    let loss = discriminator_loss(&mut tape, &gamma, model.disc_point_layers(), r, f).map_err(&fail)?;
    let mut grads = tape.backward(loss)?;
    let g = gamma.gradients(&mut grads);
    opt.discriminator
        .step(model.discriminator.tensors_mut(), &g)
        .map_err(&fail)?;
    tape.value(loss).item()
}

/// Hinge loss value for fixed scores, without touching any parameters.
pub fn hinge_value(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let r = tape.constant(Tensor::matrix(real_scores.len(), 1, real_scores.to_vec())?)?;
    let f = tape.constant(Tensor::matrix(fake_scores.len(), 1, fake_scores.to_vec())?)?;
    let l = hinge_discriminator_loss(&mut tape, r, f)?;
    tape.value(l).item()
}

/// One full iteration.
pub fn train_step(
    model: &mut Model,
    opt: &mut OptimizerStates,
    cfg: &TrainConfig,
    batch: &Batch,
    iteration: u64,
) -> Result<TrainLogRecord> {
    let start = Instant::now();
    let ed = encoder_decoder_step(model, opt, cfg, batch, iteration)?;
    let ebm = if cfg.ablation.disable_eb_transport {
        EbmStats::default()
    } else {
        energy_step(model, opt, cfg, &ed.z_tilde, &ed.z_y, iteration)?
    };
    let adv_d = if cfg.ablation.disable_adversarial {
        0.0
    } else {
        let real = match cfg.loss.adv_real_source {
            AdvRealSource::Reconstruction => &ed.y_tilde,
            AdvRealSource::Data => &batch.y,
        };
        discriminator_step(model, opt, real, &ed.x_tilde, iteration)?
    };
    let rec = TrainLogRecord {
        iteration,
        recon: ed.recon,
        fidelity: ed.fidelity,
        adv_g: ed.adv_g,
        adv_d,
        ed_loss: ed.loss,
        ebm: ebm.loss,
        energy_complete: ebm.energy_complete,
        energy_transported: ebm.energy_transported,
        max_abs_energy: ebm.max_abs_energy,
        tape_nodes: ed.tape_nodes,
        wall_time: start.elapsed().as_secs_f64(),
    };
    if !rec.is_finite() {
        return Err(Error::Diverged {
            loss: "log record",
            iteration,
        });
    }
    Ok(rec)
}

/// In-memory training state.
pub struct Trainer {
    pub state: Checkpoint,
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            state: Checkpoint::init(cfg)?,
        })
    }

    pub fn from_checkpoint(state: Checkpoint) -> Self {
        Self { state }
    }

    pub fn model(&self) -> &Model {
        &self.state.model
    }

    /// Runs the next iteration on `pools`.
    pub fn step(&mut self, pools: &TrainingPools) -> Result<TrainLogRecord> {
        let it = self.state.iteration;
        let cfg = &self.state.config;
        let batch = sample_batch(pools, cfg.batch_size, cfg.seed, it)?;
        let rec = train_step(&mut self.state.model, &mut self.state.optimizers, cfg, &batch, it)?;
        self.state.iteration += 1;
        Ok(rec)
    }
}

/// Files written by [`run_training`].
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub final_checkpoint: PathBuf,
    pub log: PathBuf,
    pub records: Vec<TrainLogRecord>,
    pub resumed_from: Option<u64>,
}

pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.json";

/// Trains to `config.iterations`, writing periodic checkpoints, the final
/// checkpoint and the CSV log under `out`. With `resume`, continues from
/// the newest checkpoint in `out` and keeps the log rows up to it. Only
/// `iterations` may differ from the checkpoint's config.
pub fn run_training(config: &TrainConfig, pools: &TrainingPools, out: &Path, resume: bool) -> Result<TrainOutput> {
    run_training_with(config, pools, out, resume, |_| {})
}

/// [`run_training`] with a callback invoked after every iteration.
pub fn run_training_with(
    config: &TrainConfig,
    pools: &TrainingPools,
    out: &Path,
    resume: bool,
    mut progress: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    if pools.num_points() != Some(config.model.num_points) {
        return Err(Error::Config(format!(
            "training clouds have {:?} points, model expects {}",
            pools.num_points(),
            config.model.num_points
        )));
    }
    fs::create_dir_all(out)?;
    let log_path = out.join(LOG_FILE);
    let mut records = Vec::new();
    let mut resumed_from = None;
    let mut trainer = match (resume, latest_in(out)?) {
        (true, Some((it, path))) => {
            let mut ckpt = Checkpoint::load(&path)?;
            let mut echo = ckpt.config.clone();
            echo.iterations = config.iterations;
            if echo != *config {
                return Err(Error::Checkpoint(format!(
                    "{} was written with a different config",
                    path.display()
                )));
            }
            if it > config.iterations {
                return Err(Error::Checkpoint(format!(
                    "{} is past the requested {} iterations",
                    path.display(),
                    config.iterations
                )));
            }
            ckpt.config = echo;
            if log_path.exists() {
                records = read_log(&log_path)?;
                records.retain(|r| r.iteration < it);
            }
            resumed_from = Some(it);
            Trainer::from_checkpoint(ckpt)
        }
        _ => Trainer::new(config)?,
    };

    let write_log = |records: &[TrainLogRecord]| -> Result<()> {
        let mut s = String::with_capacity(128 * (records.len() + 1));
        s.push_str(LOG_HEADER);
        s.push('\n');
        for r in records {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        fs::write(&log_path, s)?;
        Ok(())
    };

    while trainer.state.iteration < config.iterations {
        let rec = trainer.step(pools)?;
        progress(&rec);
        records.push(rec);
        let it = trainer.state.iteration;
        if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 && it < config.iterations {
            trainer.state.save(&out.join(checkpoint_name(it)))?;
            write_log(&records)?;
        }
    }
    trainer.state.save(&out.join(checkpoint_name(trainer.state.iteration)))?;
    let final_checkpoint = out.join(FINAL_CHECKPOINT);
    trainer.state.save(&final_checkpoint)?;
    write_log(&records)?;
    Ok(TrainOutput {
        final_checkpoint,
        log: log_path,
        records,
        resumed_from,
    })
}

/// Network roles whose parameters differ between two models.
pub fn changed_roles(a: &Model, b: &Model) -> Vec<Role> {
    Role::ALL
        .into_iter()
        .filter(|&r| a.network(r).fingerprint() != b.network(r).fingerprint())
        .collect()
}
