//! Losses for the encoder/decoder and the discriminator. Clouds are
//! `[B, N, 3]` tape values; every loss averages over the batch.

use crate::autodiff::{Tape, Var};
use crate::config::LossWeights;
use crate::error::Result;
use crate::networks::{discriminator_forward, Bound};

/// Chamfer distance between `y` and its reconstruction.
pub fn recon_loss(tape: &mut Tape, y: Var, y_tilde: Var, squared: bool) -> Result<Var> {
    let forward = tape.nearest_dist(y, y_tilde, squared)?;
    let backward = tape.nearest_dist(y_tilde, y, squared)?;
    let both = tape.add(forward, backward)?;
    tape.mean(both)
}

/// One-sided Chamfer distance from the partial input to its completion.
pub fn fidelity_loss(tape: &mut Tape, x: Var, x_tilde: Var, squared: bool) -> Result<Var> {
    let d = tape.nearest_dist(x, x_tilde, squared)?;
    tape.mean(d)
}

/// Hinge loss for the discriminator given raw scores `[B, 1]`:
/// `mean relu(1 − D_real) + mean relu(1 + D_fake)`, the negation of
/// `E[min(0, −1 + D_real)] + E[min(0, −1 − D_fake)]`.
pub fn hinge_discriminator_loss(tape: &mut Tape, real: Var, fake: Var) -> Result<Var> {
    let neg_real = tape.neg(real)?;
    let real_margin = tape.add_scalar(neg_real, 1.0)?;
    let real_hinge = tape.relu(real_margin)?;
    let fake_margin = tape.add_scalar(fake, 1.0)?;
    let fake_hinge = tape.relu(fake_margin)?;
    let a = tape.mean(real_hinge)?;
    let b = tape.mean(fake_hinge)?;
    tape.add(a, b)
}

/// Discriminator objective on decoded clouds: `y_tilde` is the real branch,
/// `x_tilde` the fake one.
pub fn discriminator_loss(
    tape: &mut Tape,
    disc: &Bound,
    point_layers: usize,
    y_tilde: Var,
    x_tilde: Var,
) -> Result<Var> {
    let real = discriminator_forward(tape, disc, point_layers, y_tilde)?;
    let fake = discriminator_forward(tape, disc, point_layers, x_tilde)?;
    hinge_discriminator_loss(tape, real, fake)
}

/// `−mean D(x̃)`. Bind `disc` as constants so only the generator side
/// receives gradient.
pub fn generator_adv_term(tape: &mut Tape, disc: &Bound, point_layers: usize, x_tilde: Var) -> Result<Var> {
    let score = discriminator_forward(tape, disc, point_layers, x_tilde)?;
    let m = tape.mean(score)?;
    tape.neg(m)
}

/// `recon + λ₁·fidelity + λ₂·adv`, where `adv` is already `−E[D(x̃)]`.
pub fn encoder_decoder_loss(
    tape: &mut Tape,
    recon: Var,
    fidelity: Var,
    adv: Option<Var>,
    w: &LossWeights,
) -> Result<Var> {
    let f = tape.scale(fidelity, w.fidelity)?;
    let mut total = tape.add(recon, f)?;
    if let Some(adv) = adv {
        let a = tape.scale(adv, w.adversarial)?;
        total = tape.add(total, a)?;
    }
    Ok(total)
}
