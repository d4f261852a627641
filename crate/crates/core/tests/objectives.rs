use ebcomplete::autodiff::{Tape, Tensor};
use ebcomplete::config::{LossWeights, ModelConfig};
use ebcomplete::geometry::{stack, PointCloud};
use ebcomplete::networks::{init_params, Model};
use ebcomplete::objectives::{encoder_decoder_loss, generator_adv_term, hinge_discriminator_loss};
use proptest::prelude::*;

fn hinge(real: &[f64], fake: &[f64]) -> f64 {
    let mut t = Tape::new();
    let r = t.constant(Tensor::new(vec![real.len(), 1], real.to_vec()).unwrap()).unwrap();
    let f = t.constant(Tensor::new(vec![fake.len(), 1], fake.to_vec()).unwrap()).unwrap();
    let l = hinge_discriminator_loss(&mut t, r, f).unwrap();
    t.value(l).item().unwrap()
}

fn constant_discriminator(score: f64) -> Model {
    let cfg = ModelConfig {
        num_points: 3,
        latent_dim: 2,
        encoder_hidden: vec![2],
        decoder_hidden: vec![2],
        energy_hidden: vec![2],
        disc_point_hidden: vec![4],
        disc_head_hidden: vec![3],
    };
    let mut m = init_params(&cfg, 0).unwrap();
    for t in m.discriminator.tensors_mut() {
        t.data_mut().fill(0.0);
    }
    let last = m.discriminator.layers.len() - 1;
    m.discriminator.layers[last].bias.data_mut()[0] = score;
    m
}

fn combine(recon: f64, fid: f64, adv: Option<f64>, w: &LossWeights) -> f64 {
    let mut t = Tape::new();
    let r = t.constant(Tensor::scalar(recon)).unwrap();
    let f = t.constant(Tensor::scalar(fid)).unwrap();
    let a = adv.map(|a| t.constant(Tensor::scalar(a)).unwrap());
    let l = encoder_decoder_loss(&mut t, r, f, a, w).unwrap();
    t.value(l).item().unwrap()
}

#[test]
fn hinge_hand_values() {
    assert_eq!(hinge(&[2.0], &[-2.0]), 0.0);
    assert_eq!(hinge(&[0.0], &[0.0]), 2.0);
    assert_eq!(hinge(&[-3.0], &[3.0]), 8.0);
}

#[test]
fn generator_term_is_negative_mean_score() {
    let cloud = PointCloud::new(vec![[0.1, 0.2, 0.3], [0.0, -0.1, 0.4], [0.2, 0.2, 0.2]]).unwrap();
    for (score, expect) in [(5.0, -5.0), (0.0, 0.0)] {
        let m = constant_discriminator(score);
        let mut t = Tape::new();
        let g = m.discriminator.bind(&mut t, false).unwrap();
        let x = t.leaf(stack(&[&cloud, &cloud]).unwrap()).unwrap();
        let adv = generator_adv_term(&mut t, &g, m.disc_point_layers(), x).unwrap();
        assert_eq!(t.value(adv).item().unwrap(), expect);
        let grads = t.backward(adv).unwrap();
        // the discriminator was bound as constants
        assert!(g.vars().all(|v| !grads.reached(v)));
    }
}

#[test]
fn encoder_decoder_loss_composition() {
    let w = LossWeights::default();
    assert_eq!(combine(1.0, 0.5, Some(-0.25), &w), 1.75);
    let pure = LossWeights {
        fidelity: 0.0,
        adversarial: 0.0,
        ..LossWeights::default()
    };
    assert_eq!(combine(0.8, 0.3, Some(-4.0), &pure), 0.8);
    assert_eq!(combine(0.8, 0.3, None, &w), 0.8 + 2.0 * 0.3);
}

#[test]
fn default_weights() {
    let w = LossWeights::default();
    assert_eq!((w.fidelity, w.adversarial, w.energy_reg), (2.0, 1.0, 0.1));
    assert!(!w.squared_chamfer);
}

proptest! {
    #[test]
    fn hinge_is_nonnegative_and_zero_only_past_the_margins(
        real in prop::collection::vec(-3.0f64..3.0, 1..6),
        fake in prop::collection::vec(-3.0f64..3.0, 1..6),
    ) {
        let l = hinge(&real, &fake);
        prop_assert!(l >= 0.0);
        let separated = real.iter().all(|&r| r >= 1.0) && fake.iter().all(|&f| f <= -1.0);
        prop_assert_eq!(l == 0.0, separated);
    }

    #[test]
    fn composition_matches_hand_sum(
        recon in 0.0f64..3.0,
        fid in 0.0f64..3.0,
        adv in -5.0f64..5.0,
        l1 in 0.0f64..4.0,
        l2 in 0.0f64..4.0,
    ) {
        let w = LossWeights { fidelity: l1, adversarial: l2, ..LossWeights::default() };
        let got = combine(recon, fid, Some(adv), &w);
        prop_assert!((got - (recon + l1 * fid + l2 * adv)).abs() < 1e-12);
    }
}
