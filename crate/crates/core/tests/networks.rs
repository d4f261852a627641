use ebcomplete::autodiff::{compare_with_fd, Tape, Tensor};
use ebcomplete::checkpoint::Checkpoint;
use ebcomplete::config::{ModelConfig, TrainConfig};
use ebcomplete::geometry::{stack, PointCloud};
use ebcomplete::networks::{
    encoder_forward, energy_forward, init_params, LatentCode, Model, NetworkParams, Role,
};
use ebcomplete::objectives::discriminator_loss;
use ebcomplete::rng::rng_for;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn small() -> ModelConfig {
    ModelConfig {
        num_points: 12,
        latent_dim: 6,
        encoder_hidden: vec![8, 10],
        decoder_hidden: vec![9],
        energy_hidden: vec![7, 7],
        disc_point_hidden: vec![6, 8],
        disc_head_hidden: vec![5],
    }
}

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = rng_for(seed, 9, 0);
    PointCloud::new(
        (0..n)
            .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
            .collect(),
    )
    .unwrap()
}

fn zero_params(net: &mut NetworkParams) {
    for t in net.tensors_mut() {
        t.data_mut().fill(0.0);
    }
}

fn param_fd(model: &Model, role: Role, loss: impl Fn(&Model) -> f64, analytic: &[f64]) -> f64 {
    let point = Tensor::vector(model.network(role).flatten());
    let value = |p: &Tensor| {
        let mut m = model.clone();
        m.network_mut(role).assign_flat(p.data())?;
        Ok(loss(&m))
    };
    compare_with_fd(analytic, value, &point, 1e-5, 1e-4, None).unwrap().max_rel_error
}

fn flat_grads(grads: &[Tensor]) -> Vec<f64> {
    grads.iter().flat_map(|g| g.data().iter().copied()).collect()
}

#[test]
fn default_widths_follow_the_layout() {
    let m = init_params(&ModelConfig::default(), 0).unwrap();
    let shapes = |n: &NetworkParams| n.layers.iter().map(|l| l.weight.shape().to_vec()).collect::<Vec<_>>();
    assert_eq!(shapes(&m.encoder), vec![vec![3, 64], vec![64, 128], vec![128, 64]]);
    assert_eq!(shapes(&m.decoder), vec![vec![64, 256], vec![256, 512], vec![512, 768]]);
    assert_eq!(shapes(&m.energy), vec![vec![64, 128], vec![128, 128], vec![128, 1]]);
}

#[test]
fn init_is_seeded_xavier_with_zero_bias() {
    let a = init_params(&small(), 4).unwrap();
    assert_eq!(a, init_params(&small(), 4).unwrap());
    assert_ne!(a, init_params(&small(), 5).unwrap());
    for role in Role::ALL {
        for l in &a.network(role).layers {
            let s = l.weight.shape();
            let bound = (6.0 / (s[0] + s[1]) as f64).sqrt();
            assert!(l.weight.data().iter().all(|w| w.abs() <= bound));
            assert!(l.bias.data().iter().all(|&b| b == 0.0));
        }
    }
}

#[test]
fn initial_energies_are_moderate() {
    let m = init_params(&ModelConfig::default(), 0).unwrap();
    let mut rng = rng_for(1, 0, 0);
    for _ in 0..200 {
        let code = LatentCode((0..64).map(|_| rng.sample(StandardNormal)).collect());
        assert!(m.energy_of(&code).unwrap().abs() < 10.0);
    }
}

#[test]
fn encoder_and_discriminator_ignore_point_order() {
    let m = init_params(&small(), 2).unwrap();
    let c = random_cloud(12, 3);
    let mut pts = c.points().to_vec();
    pts.shuffle(&mut rng_for(0, 0, 1));
    let p = PointCloud::new(pts).unwrap();
    assert_eq!(m.encode(&c).unwrap(), m.encode(&p).unwrap());
    assert_eq!(
        m.discriminate(&c).unwrap().to_bits(),
        m.discriminate(&p).unwrap().to_bits()
    );
}

#[test]
fn encoder_rejects_wrong_point_count() {
    let m = init_params(&small(), 2).unwrap();
    assert!(m.encode(&random_cloud(11, 0)).is_err());
}

#[test]
fn zero_networks_give_trivial_outputs() {
    let mut m = init_params(&small(), 6).unwrap();
    zero_params(&mut m.encoder);
    assert!(m.encode(&random_cloud(12, 1)).unwrap().0.iter().all(|&v| v == 0.0));

    let last = m.energy.layers.len() - 1;
    m.energy.layers[last].weight.data_mut().fill(0.0);
    m.energy.layers[last].bias.data_mut()[0] = 0.375;
    for s in 0..5 {
        let code = LatentCode((0..6).map(|i| (i + s) as f64 - 2.0).collect());
        assert_eq!(m.energy_of(&code).unwrap(), 0.375);
    }

    zero_params(&mut m.discriminator);
    let (a, b) = (random_cloud(12, 2), random_cloud(12, 3));
    assert_eq!(m.discriminate(&a).unwrap(), 0.0);
    let mut t = Tape::new();
    let g = m.discriminator.bind(&mut t, false).unwrap();
    let ya = t.constant(stack(&[&a]).unwrap()).unwrap();
    let xb = t.constant(stack(&[&b]).unwrap()).unwrap();
    let l = discriminator_loss(&mut t, &g, m.disc_point_layers(), ya, xb).unwrap();
    assert_eq!(t.value(l).item().unwrap(), 2.0);
}

#[test]
fn decoder_is_deterministic_and_shaped() {
    let m = init_params(&small(), 8).unwrap();
    let code = LatentCode(vec![0.1, -0.4, 0.3, 0.9, -1.0, 0.2]);
    let a = m.decode(&code).unwrap();
    assert_eq!(a.len(), 12);
    assert_eq!(a, m.decode(&code).unwrap());
}

#[test]
fn checkpoint_holds_one_shared_encoder_and_decoder() {
    let mut cfg = TrainConfig::default();
    cfg.model = small();
    cfg.data.num_points = 12;
    let json: serde_json::Value = serde_json::from_str(&Checkpoint::init(&cfg).unwrap().to_json().unwrap()).unwrap();
    let model = json["model"].as_object().unwrap();
    let mut keys: Vec<&str> = model.keys().map(|k| k.as_str()).filter(|k| *k != "config").collect();
    keys.sort();
    assert_eq!(keys, vec!["decoder", "discriminator", "encoder", "energy"]);
}

#[test]
fn encoder_parameter_gradient_matches_fd() {
    let m = init_params(&small(), 11).unwrap();
    let clouds = [random_cloud(12, 20), random_cloud(12, 21)];
    let w = Tensor::new(vec![6, 1], vec![0.3, -0.2, 0.5, 0.1, -0.7, 0.4]).unwrap();
    let objective = |model: &Model, t: &mut Tape, trainable: bool| {
        let enc = model.encoder.bind(t, trainable).unwrap();
        let x = t.constant(stack(&[&clouds[0], &clouds[1]]).unwrap()).unwrap();
        let z = encoder_forward(t, &enc, x, 12).unwrap();
        let w = t.constant(w.clone()).unwrap();
        let s = t.matmul(z, w).unwrap();
        let s = t.tanh(s).unwrap();
        (enc, t.sum(s).unwrap())
    };
    let mut t = Tape::new();
    let (enc, loss) = objective(&m, &mut t, true);
    let mut grads = t.backward(loss).unwrap();
    let analytic = flat_grads(&enc.gradients(&mut grads));
    let err = param_fd(
        &m,
        Role::Encoder,
        |mm| {
            let mut t = Tape::new();
            let (_, l) = objective(mm, &mut t, false);
            t.value(l).item().unwrap()
        },
        &analytic,
    );
    assert!(err < 1e-4, "{err}");
}

#[test]
fn energy_code_gradient_matches_fd() {
    let m = init_params(&small(), 12).unwrap();
    let codes = Tensor::new(vec![2, 6], (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let mut t = Tape::new();
    let th = m.energy.bind(&mut t, false).unwrap();
    let c = t.leaf(codes.clone()).unwrap();
    let e = energy_forward(&mut t, &th, c).unwrap();
    let s = t.sum(e).unwrap();
    let analytic = t.backward(s).unwrap().wrt(c);
    let value = |p: &Tensor| {
        let mut t = Tape::new();
        let th = m.energy.bind(&mut t, false)?;
        let c = t.constant(p.clone())?;
        let e = energy_forward(&mut t, &th, c)?;
        let s = t.sum(e)?;
        t.value(s).item()
    };
    let r = compare_with_fd(analytic.data(), value, &codes, 1e-5, 1e-4, None).unwrap();
    assert!(r.max_rel_error < 1e-4 && r.checked > 0, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forwards_are_pure(seed in any::<u64>(), cloud_seed in any::<u64>()) {
        let m = init_params(&small(), seed).unwrap();
        let c = random_cloud(12, cloud_seed);
        let z = m.encode(&c).unwrap();
        prop_assert_eq!(&z, &m.clone().encode(&c).unwrap());
        prop_assert_eq!(m.decode(&z).unwrap(), m.decode(&z).unwrap());
        prop_assert_eq!(m.energy_of(&z).unwrap().to_bits(), m.energy_of(&z).unwrap().to_bits());
    }

    #[test]
    fn permutation_invariance_holds_for_any_shuffle(seed in any::<u64>(), perm_seed in any::<u64>()) {
        let m = init_params(&small(), seed).unwrap();
        let c = random_cloud(12, seed ^ 0xabc);
        let mut pts = c.points().to_vec();
        pts.shuffle(&mut rng_for(perm_seed, 0, 0));
        let p = PointCloud::new(pts).unwrap();
        prop_assert_eq!(m.encode(&c).unwrap(), m.encode(&p).unwrap());
        prop_assert_eq!(m.discriminate(&c).unwrap().to_bits(), m.discriminate(&p).unwrap().to_bits());
    }
}
