//! Test-time completion, uncertainty maps and held-out evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::config::{Ablation, LangevinConfig};
use crate::data::{Family, HeldOutPair};
use crate::error::{Error, Result};
use crate::geometry::{chamfer_distance, unidirectional_chamfer, PointCloud};
use crate::networks::{LatentCode, Model};
use crate::rng::{derive_seed, rng_for, stream};
use crate::transport::{sample_codes, sample_residuals, EnergyNet};

/// How a partial code reaches the complete-shape manifold at test time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    /// `z_x + r` with `r` sampled from zero.
    Residual,
    /// Langevin over the full code starting at `z_x`.
    Direct,
    /// `z_x` unchanged.
    Identity,
}

impl TransportMode {
    pub fn from_ablation(a: &Ablation) -> Self {
        if a.disable_eb_transport {
            TransportMode::Identity
        } else if a.disable_residual_sampling {
            TransportMode::Direct
        } else {
            TransportMode::Residual
        }
    }
}

/// Transports a batch of codes `[B, d]` with the chain seeded by `seed`.
pub fn transport_batch(
    model: &Model,
    mode: TransportMode,
    z_x: &Tensor,
    cfg: &LangevinConfig,
    seed: u64,
) -> Result<Tensor> {
    model.check_codes(z_x)?;
    let mut rng = rng_for(seed, stream::INFERENCE, 0);
    let energy = EnergyNet(&model.energy);
    match mode {
        TransportMode::Identity => Ok(z_x.clone()),
        TransportMode::Direct => sample_codes(&energy, z_x, cfg, &mut rng),
        TransportMode::Residual => {
            let mut z = sample_residuals(&energy, z_x, cfg, &mut rng)?;
            for (a, b) in z.data_mut().iter_mut().zip(z_x.data()) {
                *a += b;
            }
            Ok(z)
        }
    }
}

/// Encodes `x`, transports its code and decodes the result.
pub fn complete(model: &Model, mode: TransportMode, x: &PointCloud, cfg: &LangevinConfig, seed: u64) -> Result<PointCloud> {
    let z_x = model.encode(x)?;
    let z = transport_batch(model, mode, &z_x.to_tensor(), cfg, seed)?;
    model.decode(&LatentCode(z.into_data()))
}

/// Per-index statistics over repeated completions.
#[derive(Clone, Debug, PartialEq)]
pub struct UncertaintyMap {
    pub mean_points: PointCloud,
    /// Population variance summed over the three coordinates, per index.
    pub variance: Vec<f64>,
    pub num_runs: usize,
}

/// Seed of run `m` of an uncertainty map.
pub fn run_seed(seed: u64, m: usize) -> u64 {
    derive_seed(seed, stream::INFERENCE, m as u64 + 1)
}

/// Statistics over already computed runs; every run must have the same size.
pub fn map_from_runs(runs: &[PointCloud]) -> Result<UncertaintyMap> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "an uncertainty map needs at least 2 runs, got {}",
            runs.len()
        )));
    }
    let n = runs[0].len();
    if runs.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("runs differ in point count".into()));
    }
    let m = runs.len() as f64;
    let mut mean = vec![[0.0; 3]; n];
    for r in runs {
        for (acc, p) in mean.iter_mut().zip(r.points()) {
            for k in 0..3 {
                acc[k] += p[k];
            }
        }
    }
    for p in &mut mean {
        for c in p.iter_mut() {
            *c /= m;
        }
    }
    let mut variance = vec![0.0; n];
    for r in runs {
        for ((v, p), mu) in variance.iter_mut().zip(r.points()).zip(&mean) {
            for k in 0..3 {
                let d = p[k] - mu[k];
                *v += d * d;
            }
        }
    }
    for v in &mut variance {
        *v /= m;
    }
    Ok(UncertaintyMap {
        mean_points: PointCloud::new(mean)?,
        variance,
        num_runs: runs.len(),
    })
}

/// Runs [`complete`] `runs` times with seeds from [`run_seed`].
pub fn uncertainty_map(
    model: &Model,
    mode: TransportMode,
    x: &PointCloud,
    cfg: &LangevinConfig,
    runs: usize,
    seed: u64,
) -> Result<UncertaintyMap> {
    if runs < 2 {
        return Err(Error::InvalidArgument(format!(
            "an uncertainty map needs at least 2 runs, got {runs}"
        )));
    }
    let z_x = model.encode(x)?.to_tensor();
    let clouds = (0..runs)
        .map(|m| {
            let z = transport_batch(model, mode, &z_x, cfg, run_seed(seed, m))?;
            model.decode(&LatentCode(z.into_data()))
        })
        .collect::<Result<Vec<_>>>()?;
    map_from_runs(&clouds)
}

/// Metrics for one family, as raw distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMetrics {
    pub family: Family,
    pub count: usize,
    pub cd: f64,
    pub ucd: f64,
    pub baseline_cd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub families: Vec<FamilyMetrics>,
    /// Average of the per-family means.
    pub cd: f64,
    pub ucd: f64,
    pub baseline_cd: f64,
    pub count: usize,
}

pub const METRIC_SCALE: f64 = 1e4;

impl EvalReport {
    pub fn cd_x1e4(&self) -> f64 {
        self.cd * METRIC_SCALE
    }

    pub fn ucd_x1e4(&self) -> f64 {
        self.ucd * METRIC_SCALE
    }

    pub fn baseline_cd_x1e4(&self) -> f64 {
        self.baseline_cd * METRIC_SCALE
    }

    /// Tab-free comma-separated table, one row per family plus `average`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("family,count,cd_x1e4,ucd_x1e4,baseline_cd_x1e4\n");
        for f in &self.families {
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.4}",
                f.family.name(),
                f.count,
                f.cd * METRIC_SCALE,
                f.ucd * METRIC_SCALE,
                f.baseline_cd * METRIC_SCALE
            );
        }
        let _ = writeln!(
            s,
            "average,{},{:.4},{:.4},{:.4}",
            self.count,
            self.cd_x1e4(),
            self.ucd_x1e4(),
            self.baseline_cd_x1e4()
        );
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{:<10} {:>6} {:>12} {:>12} {:>14}\n",
            "family", "pairs", "CD x1e4", "UCD x1e4", "baseline x1e4"
        );
        for f in &self.families {
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>12.2} {:>12.2} {:>14.2}",
                f.family.name(),
                f.count,
                f.cd * METRIC_SCALE,
                f.ucd * METRIC_SCALE,
                f.baseline_cd * METRIC_SCALE
            );
        }
        let _ = writeln!(
            s,
            "{:<10} {:>6} {:>12.2} {:>12.2} {:>14.2}",
            "average",
            self.count,
            self.cd_x1e4(),
            self.ucd_x1e4(),
            self.baseline_cd_x1e4()
        );
        s
    }
}

/// Scores `completer` on every pair. `completer` receives the pair index.
pub fn evaluate<F>(pairs: &[HeldOutPair], mut completer: F) -> Result<EvalReport>
where
    F: FnMut(usize, &HeldOutPair) -> Result<PointCloud>,
{
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let mut acc: BTreeMap<Family, (usize, f64, f64, f64)> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let x_tilde = completer(i, p)?;
        let e = acc.entry(p.family).or_insert((0, 0.0, 0.0, 0.0));
        e.0 += 1;
        e.1 += chamfer_distance(&x_tilde, &p.complete)?;
        e.2 += unidirectional_chamfer(&p.partial, &x_tilde)?;
        e.3 += chamfer_distance(&p.partial, &p.complete)?;
    }
    let families: Vec<FamilyMetrics> = acc
        .into_iter()
        .map(|(family, (n, cd, ucd, base))| {
            let k = n as f64;
            FamilyMetrics {
                family,
                count: n,
                cd: cd / k,
                ucd: ucd / k,
                baseline_cd: base / k,
            }
        })
        .collect();
    let nf = families.len() as f64;
    Ok(EvalReport {
        cd: families.iter().map(|f| f.cd).sum::<f64>() / nf,
        ucd: families.iter().map(|f| f.ucd).sum::<f64>() / nf,
        baseline_cd: families.iter().map(|f| f.baseline_cd).sum::<f64>() / nf,
        count: pairs.len(),
        families,
    })
}

/// Seed used for pair `i` of an evaluation run.
pub fn pair_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, stream::INFERENCE, 1 << 32 | i as u64)
}

/// Completes every held-out partial with the model.
pub fn evaluate_model(
    model: &Model,
    mode: TransportMode,
    pairs: &[HeldOutPair],
    cfg: &LangevinConfig,
    seed: u64,
) -> Result<EvalReport> {
    evaluate(pairs, |i, p| complete(model, mode, &p.partial, cfg, pair_seed(seed, i)))
}

/// `x̃ := ground truth`.
pub fn evaluate_oracle(pairs: &[HeldOutPair]) -> Result<EvalReport> {
    evaluate(pairs, |_, p| Ok(p.complete.clone()))
}

/// `x̃ := x`.
pub fn evaluate_identity(pairs: &[HeldOutPair]) -> Result<EvalReport> {
    evaluate(pairs, |_, p| Ok(p.partial.clone()))
}

/// Mean `UCD(x, x̃)` over arbitrary partial clouds.
pub fn mean_fidelity(
    model: &Model,
    mode: TransportMode,
    partials: &[&PointCloud],
    cfg: &LangevinConfig,
    seed: u64,
) -> Result<f64> {
    if partials.is_empty() {
        return Err(Error::InvalidArgument("no clouds to score".into()));
    }
    let mut total = 0.0;
    for (i, x) in partials.iter().enumerate() {
        let x_tilde = complete(model, mode, x, cfg, pair_seed(seed, i))?;
        total += unidirectional_chamfer(x, &x_tilde)?;
    }
    Ok(total / partials.len() as f64)
}

/// Per-shape mean variance of decoded points nearest the occluded and the
/// observed side of the crop. Each decoded point is assigned to the side of
/// its nearest ground-truth point.
pub fn region_variance(map: &UncertaintyMap, pair: &HeldOutPair) -> Result<(f64, f64)> {
    let nn = crate::geometry::nearest_neighbor_indices(&map.mean_points, &pair.complete)?;
    let (mut occ, mut nocc, mut obs, mut nobs) = (0.0, 0usize, 0.0, 0usize);
    for (v, &j) in map.variance.iter().zip(&nn) {
        if pair.is_occluded(&pair.complete.points()[j]) {
            occ += v;
            nocc += 1;
        } else {
            obs += v;
            nobs += 1;
        }
    }
    if nocc == 0 || nobs == 0 {
        return Err(Error::InvalidArgument("one side of the crop has no decoded points".into()));
    }
    Ok((occ / nocc as f64, obs / nobs as f64))
}
