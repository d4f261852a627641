//! The four parametric networks: a shared point encoder and decoder, the
//! latent energy function, and the point-domain discriminator.
//!
//! All of them are plain ReLU MLPs. The encoder and discriminator apply a
//! shared per-point MLP followed by a max over points, which makes them
//! invariant to point order.

use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::geometry::{self, PointCloud};
use crate::rng::{rng_for, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Encoder,
    Decoder,
    Energy,
    Discriminator,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Encoder, Role::Decoder, Role::Energy, Role::Discriminator];

    fn tag(self) -> u64 {
        match self {
            Role::Encoder => 0,
            Role::Decoder => 1,
            Role::Energy => 2,
            Role::Discriminator => 3,
        }
    }
}

/// A `d`-dimensional latent vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentCode(pub Vec<f64>);

impl LatentCode {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![1, self.0.len()], self.0.clone()).expect("row vector")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    /// `[fan_in, fan_out]`
    pub weight: Tensor,
    /// `[fan_out]`
    pub bias: Tensor,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Named layers of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub role: Role,
    pub layers: Vec<Layer>,
}

impl NetworkParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(role: Role, widths: &[usize], rng: &mut impl Rng) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-s..s)).collect();
                Layer {
                    name: format!("{}.fc{i}", role_name(role)),
                    weight: Tensor::new(vec![fan_in, fan_out], data).expect("weight shape"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Self { role, layers }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in `w0, b0, w1, b1, ...` order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// All parameters as one flat vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Overwrites all parameters from a flat vector.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape {
                op: "assign_flat",
                detail: format!("{} values for {} parameters", flat.len(), self.num_params()),
            });
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Bit-level fingerprint of the parameter values.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for t in self.tensors() {
            t.shape().hash(&mut h);
            for v in t.data() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Registers every tensor on `tape`; as leaves when `trainable`,
    /// otherwise as constants that receive no gradient.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<Bound> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (w, b) = if trainable {
                (tape.leaf(l.weight.clone())?, tape.leaf(l.bias.clone())?)
            } else {
                (tape.constant(l.weight.clone())?, tape.constant(l.bias.clone())?)
            };
            layers.push((w, b));
        }
        Ok(Bound {
            role: self.role,
            layers,
        })
    }

    fn check_widths(&self, widths: &[usize]) -> Result<()> {
        let ok = self.layers.len() + 1 == widths.len()
            && self
                .layers
                .iter()
                .zip(widths.windows(2))
                .all(|(l, w)| l.weight.shape() == [w[0], w[1]] && l.bias.shape() == [w[1]]);
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "{} layers do not match widths {widths:?}",
                role_name(self.role)
            )))
        }
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Encoder => "encoder",
        Role::Decoder => "decoder",
        Role::Energy => "energy",
        Role::Discriminator => "discriminator",
    }
}

/// Tape handles for one network's parameters.
#[derive(Clone, Debug)]
pub struct Bound {
    pub role: Role,
    pub layers: Vec<(Var, Var)>,
}

impl Bound {
    /// Gradients in the same order as [`NetworkParams::tensors`].
    pub fn gradients(&self, grads: &mut Gradients) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|&(w, b)| [w, b])
            .map(|v| grads.take(v))
            .collect()
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

/// Applies `layers` as a dense MLP to rows of `x`. ReLU follows every layer
/// except the last, unless `relu_last`.
fn mlp(tape: &mut Tape, layers: &[(Var, Var)], x: Var, relu_last: bool) -> Result<Var> {
    let mut h = x;
    for (i, &(w, b)) in layers.iter().enumerate() {
        let z = tape.matmul(h, w)?;
        h = tape.add_bias(z, b)?;
        if i + 1 < layers.len() || relu_last {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

fn cloud_dims(tape: &Tape, clouds: Var, expected_points: usize, op: &'static str) -> Result<(usize, usize)> {
    let s = tape.shape(clouds);
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::Shape {
            op,
            detail: format!("expected [batch, points, 3], got {s:?}"),
        });
    }
    if s[1] != expected_points {
        return Err(Error::Shape {
            op,
            detail: format!("expected {expected_points} points per cloud, got {}", s[1]),
        });
    }
    Ok((s[0], s[1]))
}

/// `[B, N, 3]` clouds to `[B, d]` codes.
pub fn encoder_forward(tape: &mut Tape, enc: &Bound, clouds: Var, num_points: usize) -> Result<Var> {
    let (b, n) = cloud_dims(tape, clouds, num_points, "encoder")?;
    let rows = tape.reshape(clouds, &[b * n, 3])?;
    let feats = mlp(tape, &enc.layers, rows, false)?;
    let d = tape.shape(feats)[1];
    let grouped = tape.reshape(feats, &[b, n, d])?;
    tape.max_pool(grouped)
}

/// `[B, d]` codes to `[B, N, 3]` clouds; point `i` of the output always
/// comes from the same output units.
pub fn decoder_forward(tape: &mut Tape, dec: &Bound, codes: Var) -> Result<Var> {
    let out = mlp(tape, &dec.layers, codes, false)?;
    let s = tape.shape(out).to_vec();
    if s[1] % 3 != 0 {
        return Err(Error::Shape {
            op: "decoder",
            detail: format!("output width {} is not 3N", s[1]),
        });
    }
    tape.reshape(out, &[s[0], s[1] / 3, 3])
}

/// `[B, d]` codes to `[B, 1]` energies.
pub fn energy_forward(tape: &mut Tape, energy: &Bound, codes: Var) -> Result<Var> {
    let e = mlp(tape, &energy.layers, codes, false)?;
    if !tape.value(e).is_finite() {
        return Err(Error::NonFinite {
            what: "energy".into(),
        });
    }
    Ok(e)
}

/// `[B, N, 3]` clouds to `[B, 1]` unbounded scores.
pub fn discriminator_forward(
    tape: &mut Tape,
    disc: &Bound,
    point_layers: usize,
    clouds: Var,
) -> Result<Var> {
    let s = tape.shape(clouds).to_vec();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::Shape {
            op: "discriminator",
            detail: format!("expected [batch, points, 3], got {s:?}"),
        });
    }
    let (b, n) = (s[0], s[1]);
    let rows = tape.reshape(clouds, &[b * n, 3])?;
    let feats = mlp(tape, &disc.layers[..point_layers], rows, true)?;
    let f = tape.shape(feats)[1];
    let grouped = tape.reshape(feats, &[b, n, f])?;
    let pooled = tape.max_pool(grouped)?;
    mlp(tape, &disc.layers[point_layers..], pooled, false)
}

/// Layer widths for each role under `cfg`.
pub fn widths(cfg: &ModelConfig, role: Role) -> Vec<usize> {
    let mut w = Vec::new();
    match role {
        Role::Encoder => {
            w.push(3);
            w.extend(&cfg.encoder_hidden);
            w.push(cfg.latent_dim);
        }
        Role::Decoder => {
            w.push(cfg.latent_dim);
            w.extend(&cfg.decoder_hidden);
            w.push(3 * cfg.num_points);
        }
        Role::Energy => {
            w.push(cfg.latent_dim);
            w.extend(&cfg.energy_hidden);
            w.push(1);
        }
        Role::Discriminator => {
            w.push(3);
            w.extend(&cfg.disc_point_hidden);
            w.extend(&cfg.disc_head_hidden);
            w.push(1);
        }
    }
    w
}

/// The complete model. There is exactly one encoder and one decoder; both
/// domains go through them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: NetworkParams,
    pub decoder: NetworkParams,
    pub energy: NetworkParams,
    pub discriminator: NetworkParams,
}

/// Deterministic initialization of all four networks from `seed`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let make = |role: Role| {
        let mut rng = rng_for(seed, stream::INIT, role.tag());
        NetworkParams::init(role, &widths(cfg, role), &mut rng)
    };
    Ok(Model {
        config: cfg.clone(),
        encoder: make(Role::Encoder),
        decoder: make(Role::Decoder),
        energy: make(Role::Energy),
        discriminator: make(Role::Discriminator),
    })
}

impl Model {
    pub fn network(&self, role: Role) -> &NetworkParams {
        match role {
            Role::Encoder => &self.encoder,
            Role::Decoder => &self.decoder,
            Role::Energy => &self.energy,
            Role::Discriminator => &self.discriminator,
        }
    }

    pub fn network_mut(&mut self, role: Role) -> &mut NetworkParams {
        match role {
            Role::Encoder => &mut self.encoder,
            Role::Decoder => &mut self.decoder,
            Role::Energy => &mut self.energy,
            Role::Discriminator => &mut self.discriminator,
        }
    }

    /// Checks that every network's layer shapes agree with the config.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        for role in Role::ALL {
            let net = self.network(role);
            if net.role != role {
                return Err(Error::Checkpoint(format!("network slot {role:?} holds {:?}", net.role)));
            }
            net.check_widths(&widths(&self.config, role))?;
        }
        Ok(())
    }

    pub fn disc_point_layers(&self) -> usize {
        self.config.disc_point_hidden.len()
    }

    pub fn encode_batch(&self, clouds: &[&PointCloud]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let enc = self.encoder.bind(&mut tape, false)?;
        let x = tape.constant(geometry::stack(clouds)?)?;
        let z = encoder_forward(&mut tape, &enc, x, self.config.num_points)?;
        Ok(tape.value(z).clone())
    }

    pub fn encode(&self, cloud: &PointCloud) -> Result<LatentCode> {
        Ok(LatentCode(self.encode_batch(&[cloud])?.into_data()))
    }

    /// Decodes `[B, d]` codes.
    pub fn decode_batch(&self, codes: &Tensor) -> Result<Vec<PointCloud>> {
        self.check_codes(codes)?;
        let mut tape = Tape::new();
        let dec = self.decoder.bind(&mut tape, false)?;
        let z = tape.constant(codes.clone())?;
        let y = decoder_forward(&mut tape, &dec, z)?;
        geometry::unstack(tape.value(y))
    }

    pub fn decode(&self, code: &LatentCode) -> Result<PointCloud> {
        Ok(self.decode_batch(&code.to_tensor())?.remove(0))
    }

    pub fn energy_of(&self, code: &LatentCode) -> Result<f64> {
        let codes = code.to_tensor();
        self.check_codes(&codes)?;
        let mut tape = Tape::new();
        let th = self.energy.bind(&mut tape, false)?;
        let z = tape.constant(codes)?;
        let e = energy_forward(&mut tape, &th, z)?;
        tape.value(e).item()
    }

    pub fn discriminate(&self, cloud: &PointCloud) -> Result<f64> {
        let mut tape = Tape::new();
        let g = self.discriminator.bind(&mut tape, false)?;
        let x = tape.constant(geometry::stack(&[cloud])?)?;
        let s = discriminator_forward(&mut tape, &g, self.disc_point_layers(), x)?;
        tape.value(s).item()
    }

    pub fn check_codes(&self, codes: &Tensor) -> Result<()> {
        let s = codes.shape();
        if s.len() != 2 || s[1] != self.config.latent_dim {
            return Err(Error::Shape {
                op: "latent",
                detail: format!(
                    "codes of shape {s:?} do not match latent_dim {}",
                    self.config.latent_dim
                ),
            });
        }
        Ok(())
    }
}
