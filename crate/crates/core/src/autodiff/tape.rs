//! Tape-based reverse-mode differentiation.
//!
//! Every primitive appends one node holding its forward value. `backward`
//! walks the tape in reverse insertion order, which is a valid reverse
//! topological order because inputs always precede their consumers.
//! Gradients from multiple consumers accumulate additively.

use crate::error::{Error, Result};
use crate::geometry;

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Broadcast(Var),
    Relu(Var),
    Tanh(Var),
    Square(Var),
    MaxPool { input: Var, argmax: Vec<usize> },
    Mean(Var),
    Sum(Var),
    Concat(Var, Var),
    Reshape(Var),
    StopGradient,
    NearestDist {
        src: Var,
        dst: Var,
        nn: Vec<usize>,
        squared: bool,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Broadcast(..) => "broadcast",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Square(..) => "square",
            Op::MaxPool { .. } => "max_pool",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::Concat(..) => "concat",
            Op::Reshape(..) => "reshape",
            Op::StopGradient => "stop_gradient",
            Op::NearestDist { .. } => "nearest_dist",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

/// C = A·B for row-major A [m,k], B [k,n], with optional transposes
/// expressed through strides. `beta` scales the existing contents of `c`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the caller guarantees the strides describe in-bounds views of
    // `a` (m×k) and `b` (k×n); `c` is a dense row-major m×n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "node {} is not on this tape ({} nodes)",
                v.0,
                self.nodes.len()
            )));
        }
        Ok(())
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: op.name().to_string(),
            });
        }
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn grad_flag(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Differentiable input (a parameter or a point we differentiate at).
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Leaf, value, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(Op::Constant, value, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, format!("operands {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        let g = self.grad_flag(&[a, b]);
        self.push(Op::Add(a, b), out, g)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        let g = self.grad_flag(&[a, b]);
        self.push(Op::Sub(a, b), out, g)
    }

    /// Multiplication by a scalar constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * c);
        let g = self.grad_flag(&[a]);
        self.push(Op::Scale(a, c), out, g)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x + c);
        let g = self.grad_flag(&[a]);
        self.push(Op::AddScalar(a), out, g)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", format!("cannot multiply {sa:?} by {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            0.0,
            &mut out,
        );
        let g = self.grad_flag(&[a, b]);
        self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?, g)
    }

    /// Adds vector `b` of length F to every row of `x` `[R,F]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check(x)?;
        self.check(b)?;
        let (sx, sb) = (self.shape(x).to_vec(), self.shape(b).to_vec());
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(shape_err(
                "add_bias",
                format!("bias {sb:?} does not match rows of {sx:?}"),
            ));
        }
        let cols = sx[1];
        let mut out = self.value(x).clone();
        let bias = self.value(b).data();
        for row in out.data_mut().chunks_exact_mut(cols) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let g = self.grad_flag(&[x, b]);
        self.push(Op::AddBias(x, b), out, g)
    }

    /// Repeats vector `[F]` over `rows` points, giving `[rows,F]`.
    pub fn broadcast(&mut self, v: Var, rows: usize) -> Result<Var> {
        self.check(v)?;
        let sv = self.shape(v).to_vec();
        if sv.len() != 1 {
            return Err(shape_err("broadcast", format!("expected a vector, got {sv:?}")));
        }
        let src = self.value(v).data();
        let mut data = Vec::with_capacity(rows * sv[0]);
        for _ in 0..rows {
            data.extend_from_slice(src);
        }
        let g = self.grad_flag(&[v]);
        self.push(Op::Broadcast(v), Tensor::new(vec![rows, sv[0]], data)?, g)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let g = self.grad_flag(&[a]);
        self.push(Op::Relu(a), out, g)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(f64::tanh);
        let g = self.grad_flag(&[a]);
        self.push(Op::Tanh(a), out, g)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(|x| x * x);
        let g = self.grad_flag(&[a]);
        self.push(Op::Square(a), out, g)
    }

    /// Max over the point axis: `[B,N,F] -> [B,F]`. Ties go to the lowest
    /// point index.
    pub fn max_pool(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.shape(a).to_vec();
        if s.len() != 3 || s[1] == 0 {
            return Err(shape_err(
                "max_pool",
                format!("expected [batch, points>0, features], got {s:?}"),
            ));
        }
        let (b, n, f) = (s[0], s[1], s[2]);
        let src = self.value(a).data();
        let mut out = vec![f64::NEG_INFINITY; b * f];
        let mut argmax = vec![0usize; b * f];
        for bi in 0..b {
            let base = bi * n * f;
            let orow = &mut out[bi * f..(bi + 1) * f];
            let arow = &mut argmax[bi * f..(bi + 1) * f];
            for p in 0..n {
                let row = &src[base + p * f..base + (p + 1) * f];
                for j in 0..f {
                    if row[j] > orow[j] {
                        orow[j] = row[j];
                        arow[j] = p;
                    }
                }
            }
        }
        let g = self.grad_flag(&[a]);
        self.push(
            Op::MaxPool { input: a, argmax },
            Tensor::new(vec![b, f], out)?,
            g,
        )
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let t = self.value(a);
        if t.is_empty() {
            return Err(shape_err("mean", "empty operand".into()));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let g = self.grad_flag(&[a]);
        self.push(Op::Mean(a), Tensor::scalar(m), g)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.value(a).data().iter().sum::<f64>();
        let g = self.grad_flag(&[a]);
        self.push(Op::Sum(a), Tensor::scalar(s), g)
    }

    /// Concatenation of `[R,F1]` and `[R,F2]` along the feature axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(shape_err("concat", format!("cannot join {sa:?} and {sb:?}")));
        }
        let (rows, fa, fb) = (sa[0], sa[1], sb[1]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(rows * (fa + fb));
        for r in 0..rows {
            data.extend_from_slice(&da[r * fa..(r + 1) * fa]);
            data.extend_from_slice(&db[r * fb..(r + 1) * fb]);
        }
        let g = self.grad_flag(&[a, b]);
        self.push(Op::Concat(a, b), Tensor::new(vec![rows, fa + fb], data)?, g)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).clone().reshaped(shape.to_vec())?;
        let g = self.grad_flag(&[a]);
        self.push(Op::Reshape(a), out, g)
    }

    /// Identity forward; blocks every gradient flowing back through it.
    pub fn stop_gradient(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).clone();
        self.push(Op::StopGradient, out, false)
    }

    /// Per-cloud mean nearest-neighbour distance from `src` `[B,Ns,3]` to
    /// `dst` `[B,Nd,3]`, giving `[B]`. The assignment is held fixed during
    /// backward.
    pub fn nearest_dist(&mut self, src: Var, dst: Var, squared: bool) -> Result<Var> {
        self.check(src)?;
        self.check(dst)?;
        let (ss, sd) = (self.shape(src).to_vec(), self.shape(dst).to_vec());
        if ss.len() != 3 || sd.len() != 3 || ss[2] != 3 || sd[2] != 3 || ss[0] != sd[0] {
            return Err(shape_err(
                "nearest_dist",
                format!("expected matching [batch, points, 3] clouds, got {ss:?} and {sd:?}"),
            ));
        }
        if ss[1] == 0 || sd[1] == 0 {
            return Err(Error::EmptyCloud);
        }
        let (b, ns, nd) = (ss[0], ss[1], sd[1]);
        let (ps, pd) = (self.value(src).data(), self.value(dst).data());
        let mut nn = Vec::with_capacity(b * ns);
        let mut out = Vec::with_capacity(b);
        for bi in 0..b {
            let s = &ps[bi * ns * 3..(bi + 1) * ns * 3];
            let d = &pd[bi * nd * 3..(bi + 1) * nd * 3];
            let mut total = 0.0;
            for p in s.chunks_exact(3) {
                let (j, d2) = geometry::nearest_sq(p, d);
                nn.push(j);
                total += if squared { d2 } else { d2.sqrt() };
            }
            out.push(total / ns as f64);
        }
        let g = self.grad_flag(&[src, dst]);
        self.push(
            Op::NearestDist {
                src,
                dst,
                nn,
                squared,
            },
            Tensor::vector(out),
            g,
        )
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check(loss)?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        }
        for i in (0..=loss.0).rev() {
            let Some(upstream) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &upstream, &mut grads);
            grads[i] = Some(upstream);
        }
        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, contribution: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, i: usize, up: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Constant | Op::StopGradient => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, up.clone());
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, up.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, up.clone());
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, up.map(|g| -g));
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, up.map(|g| g * c));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, up.clone()),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        up.data(),
                        (n as isize, 1),
                        tb.data(),
                        (1, n as isize),
                        0.0,
                        &mut da,
                    );
                    self.accumulate(grads, *a, Tensor::new(vec![m, k], da).expect("shape"));
                }
                if self.wants(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * n];
                    gemm(
                        k,
                        m,
                        n,
                        ta.data(),
                        (1, k as isize),
                        up.data(),
                        (n as isize, 1),
                        0.0,
                        &mut db,
                    );
                    self.accumulate(grads, *b, Tensor::new(vec![k, n], db).expect("shape"));
                }
            }
            Op::AddBias(x, b) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, up.clone());
                }
                if self.wants(*b) {
                    let cols = self.shape(*b)[0];
                    let mut db = vec![0.0; cols];
                    for row in up.data().chunks_exact(cols) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    self.accumulate(grads, *b, Tensor::vector(db));
                }
            }
            Op::Broadcast(v) => {
                let cols = self.shape(*v)[0];
                let mut dv = vec![0.0; cols];
                for row in up.data().chunks_exact(cols) {
                    for (d, g) in dv.iter_mut().zip(row) {
                        *d += g;
                    }
                }
                self.accumulate(grads, *v, Tensor::vector(dv));
            }
            Op::Relu(a) => {
                let out = &node.value;
                let data = up
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, Tensor::new(out.shape().to_vec(), data).expect("shape"));
            }
            Op::Tanh(a) => {
                let out = &node.value;
                let data = up
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * (1.0 - y * y))
                    .collect();
                self.accumulate(grads, *a, Tensor::new(out.shape().to_vec(), data).expect("shape"));
            }
            Op::Square(a) => {
                let x = self.value(*a);
                let data = up
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&g, &v)| 2.0 * v * g)
                    .collect();
                self.accumulate(grads, *a, Tensor::new(x.shape().to_vec(), data).expect("shape"));
            }
            Op::MaxPool { input, argmax } => {
                let s = self.shape(*input);
                let (b, n, f) = (s[0], s[1], s[2]);
                let mut dx = Tensor::zeros(s);
                let d = dx.data_mut();
                for bi in 0..b {
                    for j in 0..f {
                        let p = argmax[bi * f + j];
                        d[bi * n * f + p * f + j] += up.data()[bi * f + j];
                    }
                }
                self.accumulate(grads, *input, dx);
            }
            Op::Mean(a) => {
                let shape = self.shape(*a);
                let n = self.value(*a).len() as f64;
                let g = up.data()[0] / n;
                self.accumulate(grads, *a, Tensor::filled(shape, g));
            }
            Op::Sum(a) => {
                let shape = self.shape(*a);
                self.accumulate(grads, *a, Tensor::filled(shape, up.data()[0]));
            }
            Op::Concat(a, b) => {
                let (fa, fb) = (self.shape(*a)[1], self.shape(*b)[1]);
                let rows = self.shape(*a)[0];
                if self.wants(*a) {
                    let mut da = Vec::with_capacity(rows * fa);
                    for row in up.data().chunks_exact(fa + fb) {
                        da.extend_from_slice(&row[..fa]);
                    }
                    self.accumulate(grads, *a, Tensor::new(vec![rows, fa], da).expect("shape"));
                }
                if self.wants(*b) {
                    let mut db = Vec::with_capacity(rows * fb);
                    for row in up.data().chunks_exact(fa + fb) {
                        db.extend_from_slice(&row[fa..]);
                    }
                    self.accumulate(grads, *b, Tensor::new(vec![rows, fb], db).expect("shape"));
                }
            }
            Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                self.accumulate(grads, *a, up.clone().reshaped(shape).expect("shape"));
            }
            Op::NearestDist {
                src,
                dst,
                nn,
                squared,
            } => {
                let (ss, sd) = (self.shape(*src).to_vec(), self.shape(*dst).to_vec());
                let (b, ns, nd) = (ss[0], ss[1], sd[1]);
                let (ps, pd) = (self.value(*src).data(), self.value(*dst).data());
                let mut gs = Tensor::zeros(&ss);
                let mut gd = Tensor::zeros(&sd);
                {
                    let (gsd, gdd) = (gs.data_mut(), gd.data_mut());
                    for bi in 0..b {
                        let w = up.data()[bi] / ns as f64;
                        for p in 0..ns {
                            let si = (bi * ns + p) * 3;
                            let di = (bi * nd + nn[bi * ns + p]) * 3;
                            let diff = [
                                ps[si] - pd[di],
                                ps[si + 1] - pd[di + 1],
                                ps[si + 2] - pd[di + 2],
                            ];
                            // d/dp of ‖p−q‖ is the unit vector; zero at coincidence.
                            let coef = if *squared {
                                2.0 * w
                            } else {
                                let dist = (diff[0] * diff[0]
                                    + diff[1] * diff[1]
                                    + diff[2] * diff[2])
                                    .sqrt();
                                if dist > 0.0 {
                                    w / dist
                                } else {
                                    0.0
                                }
                            };
                            for c in 0..3 {
                                gsd[si + c] += coef * diff[c];
                                gdd[di + c] -= coef * diff[c];
                            }
                        }
                    }
                }
                if self.wants(*src) {
                    self.accumulate(grads, *src, gs);
                }
                if self.wants(*dst) {
                    self.accumulate(grads, *dst, gd);
                }
            }
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`; all zeros when the loss does not depend on `v`.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Takes the gradient out without copying.
    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads.get_mut(v.0).and_then(|g| g.take()) {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Whether any gradient reached `v`.
    pub fn reached(&self, v: Var) -> bool {
        matches!(self.grads.get(v.0), Some(Some(_)))
    }
}
