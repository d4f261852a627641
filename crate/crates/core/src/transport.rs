//! Latent code transport.
//!
//! The partial code `z_x` is moved toward the complete-shape manifold by
//! sampling a residual `r` with short-run Langevin dynamics under the
//! energy `E(z_x + r)`, starting from `r = 0`:
//!
//! ```text
//! r ← r − (δ²/2) ∂E(z_x + r)/∂r + δ·ε,   ε ~ N(0, I)
//! ```
//!
//! Chains run on throwaway tapes; only the final residual enters a training
//! graph, wrapped in a stop-gradient, so parameter gradients never unroll
//! the chain.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Tensor, Var};
use crate::config::LangevinConfig;
use crate::error::{Error, Result};
use crate::networks::{energy_forward, Bound, LatentCode, NetworkParams};
use crate::rng::{rng_for, stream};

/// An energy over rows of a `[B, d]` code matrix, each row independent.
pub trait Energy {
    /// Per-row energies and `∂E_i/∂c_i` stacked as `[B, d]`.
    fn value_and_grad(&self, codes: &Tensor) -> Result<(Vec<f64>, Tensor)>;
}

/// The learned energy network.
pub struct EnergyNet<'a>(pub &'a NetworkParams);

impl Energy for EnergyNet<'_> {
    fn value_and_grad(&self, codes: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        let mut tape = Tape::new();
        let theta = self.0.bind(&mut tape, false)?;
        let c = tape.leaf(codes.clone())?;
        let e = energy_forward(&mut tape, &theta, c)?;
        let total = tape.sum(e)?;
        let grad = tape.backward(total)?.wrt(c);
        Ok((tape.value(e).data().to_vec(), grad))
    }
}

/// `E(c) = ½‖c − μ‖²`, whose Langevin stationary law is `N(μ, I)`.
#[derive(Clone, Debug)]
pub struct QuadraticEnergy {
    pub mean: Vec<f64>,
}

impl Energy for QuadraticEnergy {
    fn value_and_grad(&self, codes: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        let d = self.mean.len();
        if codes.shape().len() != 2 || codes.shape()[1] != d {
            return Err(Error::Shape {
                op: "quadratic_energy",
                detail: format!("codes {:?} vs mean of length {d}", codes.shape()),
            });
        }
        let mut values = Vec::with_capacity(codes.shape()[0]);
        let mut grad = codes.clone();
        for row in grad.data_mut().chunks_exact_mut(d) {
            let mut e = 0.0;
            for (g, m) in row.iter_mut().zip(&self.mean) {
                *g -= m;
                e += 0.5 * *g * *g;
            }
            values.push(e);
        }
        Ok((values, grad))
    }
}

/// Per-step trace of a chain, for diagnostics.
#[derive(Clone, Debug, Default)]
pub struct ChainTrace {
    /// Mean energy over rows before each step, plus the final state.
    pub mean_energy: Vec<f64>,
}

/// Runs `cfg.steps` Langevin updates on `state` in place, evaluating the
/// energy at `offset + state` when an offset is given.
pub fn langevin_chain(
    energy: &dyn Energy,
    offset: Option<&Tensor>,
    state: &mut Tensor,
    cfg: &LangevinConfig,
    rng: &mut impl Rng,
    mut trace: Option<&mut ChainTrace>,
) -> Result<()> {
    cfg.validate()?;
    if let Some(o) = offset {
        if o.shape() != state.shape() {
            return Err(Error::Shape {
                op: "langevin",
                detail: format!("offset {:?} vs state {:?}", o.shape(), state.shape()),
            });
        }
    }
    let half_step = 0.5 * cfg.step_size_sq;
    let noise = cfg.noise_scale * cfg.step_size_sq.sqrt();
    let mut point = state.clone();
    for step in 0..=cfg.steps {
        if let Some(o) = offset {
            for ((p, s), z) in point.data_mut().iter_mut().zip(state.data()).zip(o.data()) {
                *p = z + s;
            }
        } else {
            point.data_mut().copy_from_slice(state.data());
        }
        let (values, grad) = energy.value_and_grad(&point).map_err(|e| Error::Langevin {
            step,
            detail: e.to_string(),
        })?;
        if values.iter().any(|v| !v.is_finite()) || !grad.is_finite() {
            return Err(Error::Langevin {
                step,
                detail: "non-finite energy or gradient".into(),
            });
        }
        if let Some(t) = trace.as_deref_mut() {
            t.mean_energy.push(values.iter().sum::<f64>() / values.len().max(1) as f64);
        }
        if step == cfg.steps {
            break;
        }
        for (s, g) in state.data_mut().iter_mut().zip(grad.data()) {
            let eps: f64 = rng.sample(StandardNormal);
            *s += -half_step * g + noise * eps;
        }
        if !state.is_finite() {
            return Err(Error::Langevin {
                step,
                detail: "state left the finite range".into(),
            });
        }
    }
    Ok(())
}

/// Samples residuals `r^K` for a batch of partial codes `[B, d]`, starting
/// every chain at zero.
pub fn sample_residuals(
    energy: &dyn Energy,
    z_x: &Tensor,
    cfg: &LangevinConfig,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let mut r = Tensor::zeros(z_x.shape());
    langevin_chain(energy, Some(z_x), &mut r, cfg, rng, None)?;
    Ok(r)
}

/// Samples complete codes directly, starting each chain at `z_x`.
pub fn sample_codes(
    energy: &dyn Energy,
    z_x: &Tensor,
    cfg: &LangevinConfig,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    let mut c = z_x.clone();
    langevin_chain(energy, None, &mut c, cfg, rng, None)?;
    Ok(c)
}

/// Residual for a single partial code, seeded from `cfg.seed`.
pub fn langevin_sample_residual(
    theta: &NetworkParams,
    z_x: &LatentCode,
    cfg: &LangevinConfig,
) -> Result<LatentCode> {
    let mut rng = rng_for(cfg.seed, stream::LANGEVIN, 0);
    let r = sample_residuals(&EnergyNet(theta), &z_x.to_tensor(), cfg, &mut rng)?;
    Ok(LatentCode(r.into_data()))
}

/// `z̃ = z_x + Ω(r)` for a residual computed off-tape.
pub fn transport(tape: &mut Tape, z_x: Var, residual: &Tensor) -> Result<Var> {
    if tape.shape(z_x) != residual.shape() {
        return Err(Error::Shape {
            op: "transport",
            detail: format!("code {:?} vs residual {:?}", tape.shape(z_x), residual.shape()),
        });
    }
    let r = tape.constant(residual.clone())?;
    transport_var(tape, z_x, r)
}

/// `z̃ = z_x + Ω(r)` where `r` may itself depend on `z_x` on this tape.
pub fn transport_var(tape: &mut Tape, z_x: Var, residual: Var) -> Result<Var> {
    let frozen = tape.stop_gradient(residual)?;
    tape.add(z_x, frozen)
}

/// Pieces of the energy objective.
#[derive(Clone, Copy, Debug)]
pub struct EbmLoss {
    pub loss: Var,
    pub mean_energy_complete: f64,
    pub mean_energy_transported: f64,
    pub max_abs_energy: f64,
}

/// `mean E(z_y) − mean E(z̃) + λ (mean E(z_y)² + mean E(z̃)²)`.
///
/// Descending this lowers the energy of complete-shape codes and raises it
/// on transported samples. Both code batches are expected to be constants
/// on `tape`.
pub fn ebm_surrogate_loss(
    tape: &mut Tape,
    theta: &Bound,
    z_tilde: Var,
    z_y: Var,
    lambda: f64,
) -> Result<EbmLoss> {
    for v in [z_tilde, z_y] {
        if tape.shape(v).first().copied().unwrap_or(0) == 0 {
            return Err(Error::InvalidArgument("energy loss needs non-empty batches".into()));
        }
    }
    let e_y = energy_forward(tape, theta, z_y)?;
    let e_t = energy_forward(tape, theta, z_tilde)?;
    let max_abs = tape.value(e_y).max_abs().max(tape.value(e_t).max_abs());
    let m_y = tape.mean(e_y)?;
    let m_t = tape.mean(e_t)?;
    let contrast = tape.sub(m_y, m_t)?;
    let sq_y = tape.square(e_y)?;
    let sq_t = tape.square(e_t)?;
    let r_y = tape.mean(sq_y)?;
    let r_t = tape.mean(sq_t)?;
    let reg = tape.add(r_y, r_t)?;
    let reg = tape.scale(reg, lambda)?;
    let loss = tape.add(contrast, reg)?;
    Ok(EbmLoss {
        loss,
        mean_energy_complete: tape.value(m_y).item()?,
        mean_energy_transported: tape.value(m_t).item()?,
        max_abs_energy: max_abs,
    })
}
