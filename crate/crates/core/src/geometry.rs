//! Point sets and Chamfer-style distances between them.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// A set of 3D points; order is meaningful only where callers need stable
/// indices (decoder outputs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "point coordinates".into(),
            });
        }
        Ok(Self { points })
    }

    /// Interprets a flat `x0 y0 z0 x1 ...` buffer.
    pub fn from_flat(data: &[f64]) -> Result<Self> {
        if data.len() % 3 != 0 {
            return Err(Error::InvalidArgument(format!(
                "flat buffer of {} values is not a list of 3D points",
                data.len()
            )));
        }
        Self::new(data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        c.map(|v| v / n)
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// True when every coordinate lies in `[-0.5, 0.5]`.
    pub fn fits_unit_cube(&self) -> bool {
        self.points.iter().flatten().all(|v| v.abs() <= 0.5)
    }
}

/// Stacks equally sized clouds into a `[B, N, 3]` tensor.
pub fn stack(clouds: &[&PointCloud]) -> Result<Tensor> {
    let n = clouds.first().map(|c| c.len()).ok_or(Error::EmptyCloud)?;
    let mut data = Vec::with_capacity(clouds.len() * n * 3);
    for c in clouds {
        if c.len() != n {
            return Err(Error::Shape {
                op: "stack",
                detail: format!("clouds of {} and {} points", n, c.len()),
            });
        }
        data.extend(c.points.iter().flatten());
    }
    Tensor::new(vec![clouds.len(), n, 3], data)
}

/// Splits a `[B, N, 3]` (or `[B, 3N]`) tensor back into clouds.
pub fn unstack(t: &Tensor) -> Result<Vec<PointCloud>> {
    let b = *t.shape().first().ok_or_else(|| Error::Shape {
        op: "unstack",
        detail: "scalar tensor".into(),
    })?;
    if b == 0 {
        return Ok(Vec::new());
    }
    let per = t.len() / b;
    t.data().chunks_exact(per).map(PointCloud::from_flat).collect()
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Nearest point of a flat `dst` buffer to `p`, with its squared distance.
/// Ties resolve to the lowest index.
#[inline]
pub(crate) fn nearest_sq(p: &[f64], dst: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, q) in dst.chunks_exact(3).enumerate() {
        let d = dist_sq(p, q);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// For each point of `src`, the index of its closest point in `dst`.
pub fn nearest_neighbor_indices(src: &PointCloud, dst: &PointCloud) -> Result<Vec<usize>> {
    if dst.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let flat = dst.flat();
    Ok(src.points.iter().map(|p| nearest_sq(p, &flat).0).collect())
}

fn directed(src: &PointCloud, dst: &PointCloud, squared: bool) -> Result<f64> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let flat = dst.flat();
    let total: f64 = src
        .points
        .iter()
        .map(|p| {
            let d2 = nearest_sq(p, &flat).1;
            if squared {
                d2
            } else {
                d2.sqrt()
            }
        })
        .sum();
    Ok(total / src.len() as f64)
}

/// Mean distance from each point of `x` to its nearest point in `x_tilde`.
pub fn unidirectional_chamfer(x: &PointCloud, x_tilde: &PointCloud) -> Result<f64> {
    directed(x, x_tilde, false)
}

/// Symmetric Chamfer distance with unsquared Euclidean norms.
pub fn chamfer_distance(s1: &PointCloud, s2: &PointCloud) -> Result<f64> {
    chamfer_distance_with(s1, s2, false)
}

/// Chamfer distance; `squared` switches to squared point distances.
pub fn chamfer_distance_with(s1: &PointCloud, s2: &PointCloud, squared: bool) -> Result<f64> {
    Ok(directed(s1, s2, squared)? + directed(s2, s1, squared)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.to_vec()).unwrap()
    }

    #[test]
    fn singleton_chamfer_is_two() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[1.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn unidirectional_hand_value() {
        let x = cloud(&[[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let xt = cloud(&[[0.0, 0.0, 0.0]]);
        assert_eq!(unidirectional_chamfer(&x, &xt).unwrap(), 1.0);
        assert_eq!(unidirectional_chamfer(&xt, &x).unwrap(), 0.0);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let src = cloud(&[[0.0, 0.0, 0.0]]);
        let dst = cloud(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        assert_eq!(nearest_neighbor_indices(&src, &dst).unwrap(), vec![0]);
    }

    #[test]
    fn self_neighbours_are_identity() {
        let c = cloud(&[[0.1, 0.2, 0.3], [0.5, -0.2, 0.0], [-0.3, 0.3, 0.3]]);
        assert_eq!(nearest_neighbor_indices(&c, &c).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(matches!(PointCloud::new(vec![]), Err(Error::EmptyCloud)));
    }

    #[test]
    fn squared_variant() {
        let a = cloud(&[[0.0, 0.0, 0.0]]);
        let b = cloud(&[[2.0, 0.0, 0.0]]);
        assert_eq!(chamfer_distance_with(&a, &b, true).unwrap(), 8.0);
        assert_eq!(chamfer_distance_with(&a, &b, false).unwrap(), 4.0);
    }

    #[test]
    fn stack_roundtrip() {
        let a = cloud(&[[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]);
        let b = cloud(&[[6.0, 7.0, 8.0], [9.0, 10.0, 11.0]]);
        let t = stack(&[&a, &b]).unwrap();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert_eq!(unstack(&t).unwrap(), vec![a, b]);
    }
}
