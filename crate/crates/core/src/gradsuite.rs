//! Finite-difference suite over every tape primitive and every network
//! composed with every loss.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{compare_with_fd, GradCheckReport, Tape, Tensor, Var};
use crate::config::{LossWeights, ModelConfig};
use crate::error::Result;
use crate::networks::{
    decoder_forward, discriminator_forward, encoder_forward, energy_forward, init_params, Bound, Model,
    NetworkParams,
};
use crate::objectives::{
    discriminator_loss, encoder_decoder_loss, fidelity_loss, generator_adv_term, recon_loss,
};
use crate::transport::{ebm_surrogate_loss, transport};

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random instances per case.
    pub instances: usize,
    pub h: f64,
    pub tol: f64,
    /// Coordinates compared per instance; all of them when smaller.
    pub coords_per_instance: usize,
    /// Corrupts one analytic gradient so the suite must fail.
    pub inject_fault: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 100,
            h: 1e-5,
            tol: 1e-4,
            coords_per_instance: 8,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CaseReport {
    pub name: &'static str,
    pub instances: usize,
    pub report: GradCheckReport,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub tol: f64,
    pub cases: Vec<CaseReport>,
}

impl SuiteReport {
    pub fn passes(&self) -> bool {
        self.cases.iter().all(|c| c.report.passes(self.tol))
    }

    /// Case with the largest relative error.
    pub fn worst(&self) -> Option<&CaseReport> {
        self.cases
            .iter()
            .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
    }
}

struct Ctx<'a> {
    rng: ChaCha8Rng,
    opts: &'a SuiteOptions,
    fault: bool,
}

fn uniform(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

fn dim(rng: &mut impl Rng) -> usize {
    rng.random_range(1..5)
}

impl Ctx<'_> {
    fn coords(&mut self, len: usize) -> Vec<usize> {
        let k = self.opts.coords_per_instance.min(len);
        let mut c = sample(&mut self.rng, len, k).into_vec();
        c.sort_unstable();
        c
    }

    fn finish(&mut self, mut analytic: Vec<f64>, value: impl Fn(&Tensor) -> Result<f64>, point: &Tensor) -> Result<GradCheckReport> {
        if self.fault {
            for g in &mut analytic {
                *g += 1e-3;
            }
        }
        let coords = self.coords(point.len());
        compare_with_fd(&analytic, value, point, self.opts.h, self.opts.tol, Some(&coords))
    }

    /// Checks `f(x)` with respect to the leaf `x`.
    fn check_input<F>(&mut self, point: Tensor, f: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, Var) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let x = tape.leaf(point.clone())?;
        let out = f(&mut tape, x)?;
        let g = tape.backward(out)?.wrt(x);
        let value = |p: &Tensor| -> Result<f64> {
            let mut t = Tape::new();
            let x = t.leaf(p.clone())?;
            let o = f(&mut t, x)?;
            t.value(o).item()
        };
        self.finish(g.into_data(), value, &point)
    }

    /// Checks `f` with respect to every parameter of `net`.
    fn check_params<F>(&mut self, net: &NetworkParams, f: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape, &Bound) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape, true)?;
        let out = f(&mut tape, &bound)?;
        let mut grads = tape.backward(out)?;
        let analytic: Vec<f64> = bound
            .gradients(&mut grads)
            .into_iter()
            .flat_map(Tensor::into_data)
            .collect();
        let value = |p: &Tensor| -> Result<f64> {
            let mut n = net.clone();
            n.assign_flat(p.data())?;
            let mut t = Tape::new();
            let b = n.bind(&mut t, false)?;
            let o = f(&mut t, &b)?;
            t.value(o).item()
        };
        self.finish(analytic, value, &Tensor::vector(net.flatten()))
    }
}

/// Random linear functional `Σ w ⊙ v`, reducing any node to a scalar.
fn project(tape: &mut Tape, v: Var, w: &Tensor) -> Result<Var> {
    let len = tape.value(v).len();
    let flat = tape.reshape(v, &[1, len])?;
    let wv = tape.constant(w.clone().reshaped(vec![len, 1])?)?;
    let s = tape.matmul(flat, wv)?;
    tape.sum(s)
}

fn weights_for(rng: &mut impl Rng, len: usize) -> Tensor {
    uniform(rng, &[len])
}

type Case = fn(&mut Ctx) -> Result<GradCheckReport>;

macro_rules! unary {
    ($name:ident, $op:ident) => {
        fn $name(c: &mut Ctx) -> Result<GradCheckReport> {
            let shape = [dim(&mut c.rng), dim(&mut c.rng)];
            let x = uniform(&mut c.rng, &shape);
            let w = weights_for(&mut c.rng, x.len());
            c.check_input(x, move |t, x| {
                let y = t.$op(x)?;
                project(t, y, &w)
            })
        }
    };
}

unary!(case_relu, relu);
unary!(case_tanh, tanh);
unary!(case_square, square);

fn case_add(c: &mut Ctx) -> Result<GradCheckReport> {
    let shape = [dim(&mut c.rng), dim(&mut c.rng)];
    let x = uniform(&mut c.rng, &shape);
    let k = uniform(&mut c.rng, &shape);
    let w = weights_for(&mut c.rng, x.len());
    c.check_input(x, move |t, x| {
        let kv = t.constant(k.clone())?;
        let a = t.add(x, kv)?;
        let b = t.add(a, x)?;
        project(t, b, &w)
    })
}

fn case_sub(c: &mut Ctx) -> Result<GradCheckReport> {
    let shape = [dim(&mut c.rng), dim(&mut c.rng)];
    let x = uniform(&mut c.rng, &shape);
    let k = uniform(&mut c.rng, &shape);
    let w = weights_for(&mut c.rng, x.len());
    c.check_input(x, move |t, x| {
        let kv = t.constant(k.clone())?;
        let a = t.sub(kv, x)?;
        let sq = t.square(x)?;
        let b = t.sub(a, sq)?;
        project(t, b, &w)
    })
}

fn case_scale(c: &mut Ctx) -> Result<GradCheckReport> {
    let shape = [dim(&mut c.rng), dim(&mut c.rng)];
    let x = uniform(&mut c.rng, &shape);
    let (s, k) = (c.rng.random_range(-3.0..3.0), c.rng.random_range(-1.0..1.0));
    let w = weights_for(&mut c.rng, x.len());
    c.check_input(x, move |t, x| {
        let a = t.scale(x, s)?;
        let b = t.add_scalar(a, k)?;
        let n = t.neg(b)?;
        let q = t.square(n)?;
        project(t, q, &w)
    })
}

fn case_matmul_left(c: &mut Ctx) -> Result<GradCheckReport> {
    let (m, k, n) = (dim(&mut c.rng), dim(&mut c.rng), dim(&mut c.rng));
    let x = uniform(&mut c.rng, &[m, k]);
    let b = uniform(&mut c.rng, &[k, n]);
    let w = weights_for(&mut c.rng, m * n);
    c.check_input(x, move |t, x| {
        let bv = t.constant(b.clone())?;
        let y = t.matmul(x, bv)?;
        project(t, y, &w)
    })
}

fn case_matmul_right(c: &mut Ctx) -> Result<GradCheckReport> {
    let (m, k, n) = (dim(&mut c.rng), dim(&mut c.rng), dim(&mut c.rng));
    let a = uniform(&mut c.rng, &[m, k]);
    let x = uniform(&mut c.rng, &[k, n]);
    let w = weights_for(&mut c.rng, m * n);
    c.check_input(x, move |t, x| {
        let av = t.constant(a.clone())?;
        let y = t.matmul(av, x)?;
        let z = t.tanh(y)?;
        project(t, z, &w)
    })
}

fn case_add_bias(c: &mut Ctx) -> Result<GradCheckReport> {
    let (r, f) = (dim(&mut c.rng), dim(&mut c.rng));
    let rows = uniform(&mut c.rng, &[r, f]);
    let x = uniform(&mut c.rng, &[f]);
    let w = weights_for(&mut c.rng, r * f);
    c.check_input(x, move |t, b| {
        let xv = t.leaf(rows.clone())?;
        let y = t.add_bias(xv, b)?;
        let q = t.square(y)?;
        project(t, q, &w)
    })
}

fn case_add_bias_rows(c: &mut Ctx) -> Result<GradCheckReport> {
    let (r, f) = (dim(&mut c.rng), dim(&mut c.rng));
    let x = uniform(&mut c.rng, &[r, f]);
    let b = uniform(&mut c.rng, &[f]);
    let w = weights_for(&mut c.rng, r * f);
    c.check_input(x, move |t, x| {
        let bv = t.constant(b.clone())?;
        let y = t.add_bias(x, bv)?;
        let q = t.square(y)?;
        project(t, q, &w)
    })
}

fn case_broadcast(c: &mut Ctx) -> Result<GradCheckReport> {
    let (r, f) = (dim(&mut c.rng), dim(&mut c.rng));
    let x = uniform(&mut c.rng, &[f]);
    let w = weights_for(&mut c.rng, r * f);
    c.check_input(x, move |t, x| {
        let y = t.broadcast(x, r)?;
        let q = t.tanh(y)?;
        project(t, q, &w)
    })
}

fn case_max_pool(c: &mut Ctx) -> Result<GradCheckReport> {
    let (b, n, f) = (dim(&mut c.rng), dim(&mut c.rng) + 1, dim(&mut c.rng));
    let x = uniform(&mut c.rng, &[b, n, f]);
    let w = weights_for(&mut c.rng, b * f);
    c.check_input(x, move |t, x| {
        let y = t.max_pool(x)?;
        let q = t.square(y)?;
        project(t, q, &w)
    })
}

fn case_mean_sum(c: &mut Ctx) -> Result<GradCheckReport> {
    let shape = [dim(&mut c.rng), dim(&mut c.rng)];
    let x = uniform(&mut c.rng, &shape);
    c.check_input(x, |t, x| {
        let q = t.square(x)?;
        let m = t.mean(q)?;
        let s = t.sum(x)?;
        let s2 = t.square(s)?;
        t.add(m, s2)
    })
}

fn case_concat(c: &mut Ctx) -> Result<GradCheckReport> {
    let (r, fa, fb) = (dim(&mut c.rng), dim(&mut c.rng), dim(&mut c.rng));
    let x = uniform(&mut c.rng, &[r, fa]);
    let other = uniform(&mut c.rng, &[r, fb]);
    let w = weights_for(&mut c.rng, r * (fa + fb));
    let left = c.rng.random_bool(0.5);
    c.check_input(x, move |t, x| {
        let o = t.constant(other.clone())?;
        let sq = t.square(x)?;
        let y = if left { t.concat(sq, o)? } else { t.concat(o, sq)? };
        project(t, y, &w)
    })
}

fn case_reshape(c: &mut Ctx) -> Result<GradCheckReport> {
    let (a, b, k) = (dim(&mut c.rng), dim(&mut c.rng), dim(&mut c.rng));
    let x = uniform(&mut c.rng, &[a, b * k]);
    let wm = uniform(&mut c.rng, &[k, 2]);
    let w = weights_for(&mut c.rng, a * b * 2);
    c.check_input(x, move |t, x| {
        let y = t.reshape(x, &[a * b, k])?;
        let wv = t.constant(wm.clone())?;
        let z = t.matmul(y, wv)?;
        project(t, z, &w)
    })
}

/// `proj(x) + proj(Ω(x²))` against differences of the frozen function.
fn case_stop_gradient(c: &mut Ctx) -> Result<GradCheckReport> {
    let shape = [dim(&mut c.rng), dim(&mut c.rng)];
    let x0 = uniform(&mut c.rng, &shape);
    let w1 = weights_for(&mut c.rng, x0.len());
    let w2 = weights_for(&mut c.rng, x0.len());
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone())?;
    let a = project(&mut tape, x, &w1)?;
    let sq = tape.square(x)?;
    let frozen = tape.stop_gradient(sq)?;
    let b = project(&mut tape, frozen, &w2)?;
    let out = tape.add(a, b)?;
    let g = tape.backward(out)?.wrt(x);
    let frozen_value = tape.value(sq).clone();
    let value = |p: &Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let x = t.leaf(p.clone())?;
        let a = project(&mut t, x, &w1)?;
        let k = t.constant(frozen_value.clone())?;
        let b = project(&mut t, k, &w2)?;
        let o = t.add(a, b)?;
        t.value(o).item()
    };
    c.finish(g.into_data(), value, &x0)
}

fn nearest_case(c: &mut Ctx, src_side: bool, squared: bool) -> Result<GradCheckReport> {
    let (b, ns, nd) = (dim(&mut c.rng), dim(&mut c.rng) + 2, dim(&mut c.rng) + 2);
    let (xs, other) = if src_side {
        (uniform(&mut c.rng, &[b, ns, 3]), uniform(&mut c.rng, &[b, nd, 3]))
    } else {
        (uniform(&mut c.rng, &[b, nd, 3]), uniform(&mut c.rng, &[b, ns, 3]))
    };
    let w = weights_for(&mut c.rng, b);
    c.check_input(xs, move |t, x| {
        let o = t.constant(other.clone())?;
        let d = if src_side {
            t.nearest_dist(x, o, squared)?
        } else {
            t.nearest_dist(o, x, squared)?
        };
        project(t, d, &w)
    })
}

fn case_nearest_src(c: &mut Ctx) -> Result<GradCheckReport> {
    nearest_case(c, true, false)
}

fn case_nearest_dst(c: &mut Ctx) -> Result<GradCheckReport> {
    nearest_case(c, false, false)
}

fn case_nearest_squared(c: &mut Ctx) -> Result<GradCheckReport> {
    let src = c.rng.random_bool(0.5);
    nearest_case(c, src, true)
}

// ---------------------------------------------------------------------------
// Networks composed with losses

/// Small widths with the default depth of every network.
pub fn suite_model_config() -> ModelConfig {
    ModelConfig {
        num_points: 16,
        latent_dim: 6,
        encoder_hidden: vec![8, 8],
        decoder_hidden: vec![10, 12],
        energy_hidden: vec![8, 8],
        disc_point_hidden: vec![8, 8],
        disc_head_hidden: vec![6],
    }
}

fn random_model(rng: &mut ChaCha8Rng) -> Result<Model> {
    let mut m = init_params(&suite_model_config(), rng.random())?;
    for net in [&mut m.encoder, &mut m.decoder, &mut m.energy, &mut m.discriminator] {
        for l in &mut net.layers {
            for b in l.bias.data_mut() {
                *b = rng.random_range(-0.1..0.1);
            }
        }
    }
    Ok(m)
}

fn scaled(mut t: Tensor, s: f64) -> Tensor {
    for v in t.data_mut() {
        *v *= s;
    }
    t
}

struct NetFixture {
    model: Model,
    x: Tensor,
    y: Tensor,
    residual: Tensor,
}

fn fixture(c: &mut Ctx) -> Result<NetFixture> {
    let model = random_model(&mut c.rng)?;
    let n = model.config.num_points;
    let batch = c.rng.random_range(1..3);
    let x = scaled(uniform(&mut c.rng, &[batch, n, 3]), 0.5);
    let y = scaled(uniform(&mut c.rng, &[batch, n, 3]), 0.5);
    let residual = scaled(uniform(&mut c.rng, &[batch, model.config.latent_dim]), 0.3);
    Ok(NetFixture { model, x, y, residual })
}

/// `CD(y, D(E(y)))`.
fn autoencode(t: &mut Tape, enc: &Bound, dec: &Bound, y: Var, n: usize) -> Result<Var> {
    let z = encoder_forward(t, enc, y, n)?;
    let yt = decoder_forward(t, dec, z)?;
    recon_loss(t, y, yt, false)
}

fn case_encoder_recon(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let n = f.model.config.num_points;
    c.check_params(&f.model.encoder, |t, enc| {
        let dec = f.model.decoder.bind(t, false)?;
        let y = t.constant(f.y.clone())?;
        autoencode(t, enc, &dec, y, n)
    })
}

fn case_decoder_recon(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let n = f.model.config.num_points;
    c.check_params(&f.model.decoder, |t, dec| {
        let enc = f.model.encoder.bind(t, false)?;
        let y = t.constant(f.y.clone())?;
        autoencode(t, &enc, dec, y, n)
    })
}

fn case_cloud_recon(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let n = f.model.config.num_points;
    let m = &f.model;
    c.check_input(f.y.clone(), |t, y| {
        let enc = m.encoder.bind(t, false)?;
        let dec = m.decoder.bind(t, false)?;
        autoencode(t, &enc, &dec, y, n)
    })
}

/// `UCD(x, D(E(x) + Ω(r)))`.
fn fidelity_through_transport(t: &mut Tape, f: &NetFixture, enc: &Bound, dec: &Bound) -> Result<Var> {
    let x = t.constant(f.x.clone())?;
    let z = encoder_forward(t, enc, x, f.model.config.num_points)?;
    let zt = transport(t, z, &f.residual)?;
    let xt = decoder_forward(t, dec, zt)?;
    fidelity_loss(t, x, xt, false)
}

fn case_encoder_fidelity(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    c.check_params(&f.model.encoder, |t, enc| {
        let dec = f.model.decoder.bind(t, false)?;
        fidelity_through_transport(t, &f, enc, &dec)
    })
}

fn case_decoder_fidelity(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    c.check_params(&f.model.decoder, |t, dec| {
        let enc = f.model.encoder.bind(t, false)?;
        fidelity_through_transport(t, &f, &enc, dec)
    })
}

fn case_energy_code(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let codes = uniform(&mut c.rng, &[2, f.model.config.latent_dim]);
    let m = &f.model;
    c.check_input(codes, |t, z| {
        let th = m.energy.bind(t, false)?;
        let e = energy_forward(t, &th, z)?;
        t.sum(e)
    })
}

fn case_energy_loss(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let d = f.model.config.latent_dim;
    let (bt, by) = (c.rng.random_range(1..4), c.rng.random_range(1..4));
    let zt = uniform(&mut c.rng, &[bt, d]);
    let zy = uniform(&mut c.rng, &[by, d]);
    c.check_params(&f.model.energy, |t, th| {
        let a = t.constant(zt.clone())?;
        let b = t.constant(zy.clone())?;
        Ok(ebm_surrogate_loss(t, th, a, b, 0.1)?.loss)
    })
}

fn case_discriminator_loss(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let layers = f.model.disc_point_layers();
    c.check_params(&f.model.discriminator, |t, g| {
        let r = t.constant(f.y.clone())?;
        let x = t.constant(f.x.clone())?;
        discriminator_loss(t, g, layers, r, x)
    })
}

fn case_discriminator_cloud(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let m = &f.model;
    c.check_input(f.x.clone(), |t, x| {
        let g = m.discriminator.bind(t, false)?;
        let s = discriminator_forward(t, &g, m.disc_point_layers(), x)?;
        t.sum(s)
    })
}

fn case_generator_term(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let m = &f.model;
    c.check_params(&m.decoder, |t, dec| {
        let enc = m.encoder.bind(t, false)?;
        let g = m.discriminator.bind(t, false)?;
        let x = t.constant(f.x.clone())?;
        let z = encoder_forward(t, &enc, x, m.config.num_points)?;
        let zt = transport(t, z, &f.residual)?;
        let xt = decoder_forward(t, dec, zt)?;
        generator_adv_term(t, &g, m.disc_point_layers(), xt)
    })
}

/// The full encoder/decoder objective with respect to the encoder.
fn case_encoder_decoder_loss(c: &mut Ctx) -> Result<GradCheckReport> {
    let f = fixture(c)?;
    let m = &f.model;
    let w = LossWeights::default();
    c.check_params(&m.encoder, |t, enc| {
        let dec = m.decoder.bind(t, false)?;
        let g = m.discriminator.bind(t, false)?;
        let x = t.constant(f.x.clone())?;
        let y = t.constant(f.y.clone())?;
        let n = m.config.num_points;
        let zx = encoder_forward(t, enc, x, n)?;
        let zy = encoder_forward(t, enc, y, n)?;
        let zt = transport(t, zx, &f.residual)?;
        let xt = decoder_forward(t, &dec, zt)?;
        let yt = decoder_forward(t, &dec, zy)?;
        let r = recon_loss(t, y, yt, false)?;
        let fl = fidelity_loss(t, x, xt, false)?;
        let a = generator_adv_term(t, &g, m.disc_point_layers(), xt)?;
        encoder_decoder_loss(t, r, fl, Some(a), &w)
    })
}

const CASES: &[(&str, Case)] = &[
    ("add", case_add),
    ("sub", case_sub),
    ("scale/add_scalar/neg", case_scale),
    ("matmul lhs", case_matmul_left),
    ("matmul rhs", case_matmul_right),
    ("add_bias bias", case_add_bias),
    ("add_bias rows", case_add_bias_rows),
    ("broadcast", case_broadcast),
    ("relu", case_relu),
    ("tanh", case_tanh),
    ("square", case_square),
    ("max_pool", case_max_pool),
    ("mean/sum", case_mean_sum),
    ("concat", case_concat),
    ("reshape", case_reshape),
    ("stop_gradient", case_stop_gradient),
    ("nearest_dist src", case_nearest_src),
    ("nearest_dist dst", case_nearest_dst),
    ("nearest_dist squared", case_nearest_squared),
    ("encoder + recon", case_encoder_recon),
    ("decoder + recon", case_decoder_recon),
    ("input cloud + recon", case_cloud_recon),
    ("encoder + fidelity", case_encoder_fidelity),
    ("decoder + fidelity", case_decoder_fidelity),
    ("energy wrt code", case_energy_code),
    ("energy + ebm loss", case_energy_loss),
    ("discriminator + hinge", case_discriminator_loss),
    ("discriminator wrt cloud", case_discriminator_cloud),
    ("decoder + generator term", case_generator_term),
    ("encoder + full ed loss", case_encoder_decoder_loss),
];

pub fn case_names() -> Vec<&'static str> {
    CASES.iter().map(|c| c.0).collect()
}

/// Runs every case `opts.instances` times.
pub fn run_suite(opts: &SuiteOptions) -> Result<SuiteReport> {
    let mut cases = Vec::with_capacity(CASES.len());
    for (k, &(name, case)) in CASES.iter().enumerate() {
        let mut ctx = Ctx {
            rng: ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(opts.seed, 100, k as u64)),
            opts,
            fault: opts.inject_fault && name == "relu",
        };
        let mut report = GradCheckReport::default();
        for _ in 0..opts.instances {
            report.merge(&case(&mut ctx)?);
        }
        cases.push(CaseReport {
            name,
            instances: opts.instances,
            report,
        });
    }
    Ok(SuiteReport { tol: opts.tol, cases })
}
