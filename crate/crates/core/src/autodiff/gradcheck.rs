//! Central finite-difference oracle for tape gradients.

use crate::error::{Error, Result};

use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// `max |ad - fd| / max(1, |fd|)` over compared coordinates.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose finite difference is unstable under halving `h`,
    /// i.e. a ReLU / max / nearest-neighbour switch lies within `h`.
    pub skipped_nonsmooth: usize,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: &GradCheckReport) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.skipped_nonsmooth += other.skipped_nonsmooth;
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tol
    }
}

/// Relative error used throughout the checker.
pub fn relative_error(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / fd.abs().max(1.0)
}

fn central(value: &impl Fn(&Tensor) -> Result<f64>, point: &Tensor, i: usize, h: f64) -> Result<f64> {
    let mut p = point.clone();
    p.data_mut()[i] = point.data()[i] + h;
    let fp = value(&p)?;
    p.data_mut()[i] = point.data()[i] - h;
    let fm = value(&p)?;
    if !fp.is_finite() || !fm.is_finite() {
        return Err(Error::NonFinite {
            what: format!("function value at coordinate {i}"),
        });
    }
    Ok((fp - fm) / (2.0 * h))
}

/// Compares `analytic` against central differences of `value` at `point`.
///
/// `coords` restricts the comparison to a subset of coordinates. When a
/// coordinate misses the tolerance `tol`, the difference is recomputed at
/// `h/2`; if the two estimates disagree the function is not smooth within
/// `h` there and the coordinate is skipped rather than counted.
pub fn compare_with_fd(
    analytic: &[f64],
    value: impl Fn(&Tensor) -> Result<f64>,
    point: &Tensor,
    h: f64,
    tol: f64,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    if analytic.len() != point.len() {
        return Err(Error::Shape {
            op: "gradcheck",
            detail: format!(
                "gradient has {} entries, point has {}",
                analytic.len(),
                point.len()
            ),
        });
    }
    let f0 = value(point)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite {
            what: "function value".into(),
        });
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let mut report = GradCheckReport::default();
    for &i in coords {
        let fd = central(&value, point, i, h)?;
        let err = relative_error(analytic[i], fd);
        if err >= tol {
            let fd_half = central(&value, point, i, h / 2.0)?;
            if relative_error(fd, fd_half) > 1e-6 {
                report.skipped_nonsmooth += 1;
                continue;
            }
        }
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(err);
    }
    Ok(report)
}

/// Differentiates the scalar `f` at `point` on a fresh tape and checks the
/// result against central differences. Returns the max relative error.
pub fn finite_diff_check<F>(f: F, point: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    Ok(finite_diff_report(f, point, h, 1e-4, None)?.max_rel_error)
}

/// Like [`finite_diff_check`] with full reporting and optional coordinate
/// subset.
pub fn finite_diff_report<F>(
    f: F,
    point: &Tensor,
    h: f64,
    tol: f64,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone())?;
    let out = f(&mut tape, x)?;
    let grad = tape.backward(out)?.wrt(x);
    let value = |p: &Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let x = t.leaf(p.clone())?;
        let out = f(&mut t, x)?;
        t.value(out).item()
    };
    compare_with_fd(grad.data(), value, point, h, tol, coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_near_exact() {
        let w = Tensor::vector(vec![0.3, -1.2, 2.5, 0.01]);
        let err = finite_diff_check(
            |t, x| {
                let sq = t.square(x)?;
                let s = t.sum(sq)?;
                t.scale(s, 0.5)
            },
            &w,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let w = Tensor::vector(vec![0.5, 1.5]);
        // d/dw of sum(w²) is 2w; hand the checker w instead.
        let bogus = w.data().to_vec();
        let report = compare_with_fd(
            &bogus,
            |p| Ok(p.data().iter().map(|v| v * v).sum()),
            &w,
            1e-5,
            1e-4,
            None,
        )
        .unwrap();
        assert!(!report.passes(1e-4));
        assert_eq!(report.skipped_nonsmooth, 0);
    }

    #[test]
    fn stop_gradient_matches_frozen_function() {
        // f(x) = x·c + Ω(x²) where the FD oracle freezes the Ω branch at x0.
        let x0 = Tensor::scalar(1.3);
        let frozen = 1.3f64 * 1.3;
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone()).unwrap();
        let sq = tape.square(x).unwrap();
        let sg = tape.stop_gradient(sq).unwrap();
        let lin = tape.scale(x, 2.0).unwrap();
        let f = tape.add(lin, sg).unwrap();
        let g = tape.backward(f).unwrap().wrt(x);
        let report = compare_with_fd(g.data(), |p| Ok(2.0 * p.data()[0] + frozen), &x0, 1e-5, 1e-4, None)
            .unwrap();
        assert!(report.passes(1e-4), "{report:?}");
    }

    #[test]
    fn rejects_nonpositive_step() {
        let w = Tensor::scalar(1.0);
        assert!(compare_with_fd(&[0.0], |_| Ok(0.0), &w, 0.0, 1e-4, None).is_err());
    }
}
