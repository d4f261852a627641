//! Parameter update rules.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::{OptimizerConfig, OptimizerKind};
use crate::error::{Error, Result};

fn check(params: &[&mut Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape {
            op: "optimizer",
            detail: format!("{} parameter tensors, {} gradients", params.len(), grads.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                op: "optimizer",
                detail: format!("tensor {i}: parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: format!("gradient of tensor {i}"),
            });
        }
    }
    Ok(())
}

/// `p ← p − lr·g`.
pub fn sgd_step(params: Vec<&mut Tensor>, grads: &[Tensor], lr: f64) -> Result<()> {
    check(&params, grads)?;
    for (p, g) in params.into_iter().zip(grads) {
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * gv;
        }
    }
    Ok(())
}

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        check(&params, grads)?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(&params).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::Shape {
                op: "adam",
                detail: "moment buffers do not match parameters".into(),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Optimizer for one network role.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam(AdamState),
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn from_config(cfg: &OptimizerConfig) -> Self {
        match cfg.kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)),
            OptimizerKind::Sgd => Optimizer::Sgd { lr: cfg.lr },
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        match self {
            Optimizer::Adam(s) => s.step(params, grads),
            Optimizer::Sgd { lr } => sgd_step(params, grads, *lr),
        }
    }
}
