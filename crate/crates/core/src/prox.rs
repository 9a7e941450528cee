//! Proximal maps, thresholding rules, the feasible-set projection and the
//! Moreau construction of conjugate proximal maps.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CMatrix;
use crate::pipeline::ColumnMask;

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "lambda {lambda} must be finite and >= 0"
        )));
    }
    Ok(())
}

#[inline]
fn soft_scalar(z: Complex64, lambda: f64) -> Complex64 {
    let mag = z.norm_sqr().sqrt();
    if mag <= lambda {
        Complex64::default()
    } else {
        z * ((mag - lambda) / mag)
    }
}

#[inline]
fn pshrink_scalar(z: Complex64, lambda: f64, p: f64) -> Complex64 {
    let mag = z.norm_sqr().sqrt();
    if mag == 0.0 {
        return Complex64::default();
    }
    let shrunk = mag - lambda.powf(2.0 - p) * mag.powf(p - 1.0);
    if shrunk > 0.0 {
        z * (shrunk / mag)
    } else {
        Complex64::default()
    }
}

#[inline]
fn smooth_hard_scalar(z: Complex64, lambda: f64, alpha: f64) -> Complex64 {
    let mag = z.norm_sqr().sqrt();
    if mag <= lambda {
        return Complex64::default();
    }
    let d = (mag - lambda).exp_m1();
    z * (-alpha / (d * d)).exp()
}

/// `sgn(X) * max(|X| - lambda, 0)` entrywise.
pub fn soft_threshold(x: &CMatrix, lambda: f64) -> Result<CMatrix> {
    check_lambda(lambda)?;
    Ok(x.map(|z| soft_scalar(z, lambda)))
}

/// p-shrinkage: `sgn(X) * max(|X| - lambda^(2-p) |X|^(p-1), 0)`.
pub fn p_shrinkage(x: &CMatrix, lambda: f64, p: f64) -> Result<CMatrix> {
    check_lambda(lambda)?;
    check_p(p)?;
    Ok(x.map(|z| pshrink_scalar(z, lambda, p)))
}

/// Smooth-hard thresholding: `X exp(-alpha / (e^(|X| - lambda) - 1)^2)` above
/// the threshold, zero at or below it.
pub fn smooth_hard(x: &CMatrix, lambda: f64, alpha: f64) -> Result<CMatrix> {
    check_lambda(lambda)?;
    check_alpha(alpha)?;
    Ok(x.map(|z| smooth_hard_scalar(z, lambda, alpha)))
}

/// Proximal map of `lambda * ||.||_F` over the whole matrix.
pub fn prox_l2_block(x: &CMatrix, lambda: f64) -> Result<CMatrix> {
    check_lambda(lambda)?;
    let nrm = x.norm_fro();
    if nrm <= lambda {
        return Ok(CMatrix::zeros(x.rows(), x.cols()));
    }
    Ok(x.scaled(1.0 - lambda / nrm))
}

/// Proximal map of `lambda * ||.||_F^2`.
pub fn prox_l2_squared(x: &CMatrix, lambda: f64) -> Result<CMatrix> {
    check_lambda(lambda)?;
    Ok(x.scaled(1.0 / (1.0 + 2.0 * lambda)))
}

/// Projection onto the spectrograms that agree with `observed` on every
/// reliable column; unreliable columns pass through.
pub fn project_feasible(x: &CMatrix, mask: &ColumnMask, observed: &CMatrix) -> Result<CMatrix> {
    x.ensure_same_shape(observed)?;
    if mask.n_cols() != x.cols() {
        return Err(Error::invalid(format!(
            "mask covers {} columns, spectrogram has {}",
            mask.n_cols(),
            x.cols()
        )));
    }
    let mut out = x.clone();
    for n in mask.reliable_cols() {
        out.col_mut(n).copy_from_slice(observed.col(n));
    }
    Ok(out)
}

/// Moreau identity: `prox_{eta f*}(X) = X - eta * prox_{f/eta}(X / eta)`.
///
/// `prox(v, s)` must return `prox_{s f}(v)`.
pub fn prox_conjugate<F>(prox: F, eta: f64, x: &CMatrix) -> Result<CMatrix>
where
    F: Fn(&CMatrix, f64) -> Result<CMatrix>,
{
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid(format!("eta {eta} must be finite and > 0")));
    }
    let inner = prox(&x.scaled(1.0 / eta), 1.0 / eta)?;
    let mut out = x.clone();
    out.axpy(-eta, &inner);
    Ok(out)
}

fn check_p(p: f64) -> Result<()> {
    if !(p > -1.0 && p <= 1.0) {
        return Err(Error::invalid(format!("p {p} must lie in (-1, 1]")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!(
            "alpha {alpha} must be finite and > 0"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ThresholdKind {
    Soft,
    PShrinkage { p: f64 },
    SmoothHard { alpha: f64 },
    L2Block,
    L2Squared,
}

impl ThresholdKind {
    pub const DEFAULT_P: f64 = 0.9;
    pub const DEFAULT_ALPHA: f64 = 1e-2;

    /// Regularization weight tuned for each rule on normalized segments.
    pub fn default_lambda(&self) -> f64 {
        match self {
            ThresholdKind::Soft => 1e-2,
            ThresholdKind::PShrinkage { .. } => 1e-2,
            ThresholdKind::SmoothHard { .. } => 1e-3,
            ThresholdKind::L2Block => 1.0,
            ThresholdKind::L2Squared => 0.2,
        }
    }

    /// Whether the rule is the proximal map of a convex function.
    pub fn is_convex(&self) -> bool {
        match self {
            ThresholdKind::Soft | ThresholdKind::L2Block | ThresholdKind::L2Squared => true,
            ThresholdKind::PShrinkage { p } => *p == 1.0,
            ThresholdKind::SmoothHard { .. } => false,
        }
    }
}

/// A thresholding rule with its weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholder {
    pub kind: ThresholdKind,
    pub lambda: f64,
}

impl Thresholder {
    pub fn new(kind: ThresholdKind, lambda: f64) -> Result<Self> {
        let t = Self { kind, lambda };
        t.validate()?;
        Ok(t)
    }

    pub fn soft(lambda: f64) -> Result<Self> {
        Self::new(ThresholdKind::Soft, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        match self.kind {
            ThresholdKind::PShrinkage { p } => check_p(p),
            ThresholdKind::SmoothHard { alpha } => check_alpha(alpha),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let mut out = x.clone();
        self.apply_with_lambda_inplace(&mut out, self.lambda);
        out
    }

    fn apply_with_lambda_inplace(&self, x: &mut CMatrix, lambda: f64) {
        let data = x.as_mut_slice();
        match self.kind {
            ThresholdKind::Soft => data.iter_mut().for_each(|z| *z = soft_scalar(*z, lambda)),
            ThresholdKind::PShrinkage { p } => data
                .iter_mut()
                .for_each(|z| *z = pshrink_scalar(*z, lambda, p)),
            ThresholdKind::SmoothHard { alpha } => data
                .iter_mut()
                .for_each(|z| *z = smooth_hard_scalar(*z, lambda, alpha)),
            ThresholdKind::L2Block => {
                let nrm = data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let factor = if nrm <= lambda {
                    0.0
                } else {
                    1.0 - lambda / nrm
                };
                data.iter_mut().for_each(|z| *z *= factor);
            }
            ThresholdKind::L2Squared => {
                let factor = 1.0 / (1.0 + 2.0 * lambda);
                data.iter_mut().for_each(|z| *z *= factor);
            }
        }
    }

    /// In place `q <- q - sigma * T_{lambda / sigma}(q / sigma)`, the
    /// conjugate proximal step of the dual update. With `sigma = 1` this is
    /// `q - T_lambda(q)`.
    pub fn conjugate_step_inplace(&self, q: &mut CMatrix, sigma: f64, work: &mut CMatrix) {
        debug_assert_eq!(q.shape(), work.shape());
        if self.kind == ThresholdKind::Soft {
            // q - sigma soft(q / sigma, lambda / sigma) clips |q| to lambda
            let lambda = self.lambda;
            for z in q.as_mut_slice() {
                let mag = z.norm_sqr().sqrt();
                if mag > lambda {
                    *z *= lambda / mag;
                }
            }
            return;
        }
        work.as_mut_slice().copy_from_slice(q.as_slice());
        if sigma != 1.0 {
            work.scale(1.0 / sigma);
        }
        self.apply_with_lambda_inplace(work, self.lambda / sigma);
        q.axpy(-sigma, work);
    }
}

impl Default for Thresholder {
    fn default() -> Self {
        Self {
            kind: ThresholdKind::Soft,
            lambda: ThresholdKind::Soft.default_lambda(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn scalar(z: Complex64) -> CMatrix {
        CMatrix::from_fn(1, 1, |_, _| z)
    }

    fn re(v: f64) -> CMatrix {
        scalar(Complex64::new(v, 0.0))
    }

    #[test]
    fn soft_threshold_scalars() {
        assert_eq!(soft_threshold(&re(3.0), 1.0).unwrap().get(0, 0).re, 2.0);
        assert_eq!(
            soft_threshold(&re(0.5), 1.0).unwrap().get(0, 0),
            Complex64::default()
        );
        let z = Complex64::from_polar(2.0, PI / 4.0);
        let out = soft_threshold(&scalar(z), 1.0).unwrap().get(0, 0);
        assert!((out - Complex64::from_polar(1.0, PI / 4.0)).norm() < 1e-15);
        assert!(soft_threshold(&re(1.0), -0.1).is_err());
        assert_eq!(
            soft_threshold(&re(0.0), 0.0).unwrap().get(0, 0),
            Complex64::default()
        );
    }

    #[test]
    fn p_shrinkage_scalars() {
        assert_eq!(p_shrinkage(&re(3.0), 1.0, 1.0).unwrap().get(0, 0).re, 2.0);
        assert_eq!(
            p_shrinkage(&re(0.0), 0.01, 0.9).unwrap().get(0, 0),
            Complex64::default()
        );
        let v = p_shrinkage(&re(1.0), 0.01, 0.9).unwrap().get(0, 0).re;
        // 1 - 0.01^1.1 = 1 - 10^-2.2
        assert!((v - 0.993_690_426_555_53).abs() < 1e-12);
        assert!(p_shrinkage(&re(1.0), 0.01, 1.5).is_err());
    }

    #[test]
    fn smooth_hard_scalars() {
        let lambda = 0.3;
        assert_eq!(
            smooth_hard(&re(0.2), lambda, 0.01).unwrap().get(0, 0),
            Complex64::default()
        );
        assert_eq!(
            smooth_hard(&re(lambda), lambda, 0.01).unwrap().get(0, 0),
            Complex64::default()
        );
        let v = smooth_hard(&re(lambda + 1.0), lambda, 0.01)
            .unwrap()
            .get(0, 0)
            .re;
        let factor = (-0.01 / ((E - 1.0) * (E - 1.0))).exp();
        // two-term series of exp(-u), u = 0.01 / (e - 1)^2 = 0.003386968...
        let u = 0.003_386_968_f64;
        assert!((factor - (1.0 - u + u * u / 2.0)).abs() < 1e-8);
        assert!((factor - 0.996_617).abs() < 5e-6);
        assert!((v - (lambda + 1.0) * factor).abs() < 1e-14);
        let big = smooth_hard(&re(50.0), lambda, 0.01).unwrap().get(0, 0).re;
        assert!((big - 50.0).abs() < 1e-12);
        assert!(smooth_hard(&re(1.0), 0.1, 0.0).is_err());
    }

    #[test]
    fn l2_proxes() {
        let x = CMatrix::from_fn(2, 2, |r, c| Complex64::new(r as f64 + 1.0, c as f64 - 0.5));
        assert_eq!(prox_l2_block(&x, 0.0).unwrap(), x);
        assert_eq!(prox_l2_block(&x, x.norm_fro()).unwrap().max_abs(), 0.0);
        assert_eq!(prox_l2_squared(&x, 0.0).unwrap(), x);
        let half = prox_l2_squared(&x, 0.5).unwrap();
        assert!(half.sub(&x.scaled(0.5)).norm_fro() < 1e-15);
    }

    #[test]
    fn l2_squared_is_stationary_point() {
        let x = CMatrix::from_fn(2, 3, |r, c| {
            Complex64::new(r as f64 - c as f64, 0.3 * c as f64)
        });
        let lambda = 0.7;
        let z = prox_l2_squared(&x, lambda).unwrap();
        let obj = |z: &CMatrix| 0.5 * z.sub(&x).norm_fro().powi(2) + lambda * z.norm_fro().powi(2);
        let h = 1e-6;
        for i in 0..6 {
            for part in 0..2 {
                let mut plus = z.clone();
                let mut minus = z.clone();
                let d = if part == 0 {
                    Complex64::new(h, 0.0)
                } else {
                    Complex64::new(0.0, h)
                };
                plus.as_mut_slice()[i] += d;
                minus.as_mut_slice()[i] -= d;
                let grad = (obj(&plus) - obj(&minus)) / (2.0 * h);
                assert!(grad.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn projection_cases() {
        let x = CMatrix::from_fn(3, 4, |r, c| Complex64::new(r as f64, c as f64));
        let obs = CMatrix::from_fn(3, 4, |_, c| Complex64::new(-1.0, c as f64));
        let none = ColumnMask::new(4, vec![]).unwrap();
        let all = ColumnMask::new(4, vec![0, 1, 2, 3]).unwrap();
        assert_eq!(project_feasible(&x, &none, &obs).unwrap(), obs);
        assert_eq!(project_feasible(&x, &all, &obs).unwrap(), x);
        let some = ColumnMask::new(4, vec![1, 2]).unwrap();
        let p = project_feasible(&x, &some, &obs).unwrap();
        assert_eq!(project_feasible(&p, &some, &obs).unwrap(), p);
        assert_eq!(p.col(0), obs.col(0));
        assert_eq!(p.col(1), x.col(1));
        assert!(project_feasible(&x, &ColumnMask::new(5, vec![]).unwrap(), &obs).is_err());
    }

    #[test]
    fn moreau_soft_and_indicator() {
        let x = CMatrix::from_fn(3, 3, |r, c| {
            Complex64::new(r as f64 - 1.2, c as f64 * 0.7 - 0.4)
        });
        let lambda = 0.5;
        let sigma = 2.5;
        let conj = prox_conjugate(|v, s| soft_threshold(v, lambda * s), sigma, &x).unwrap();
        let direct = x.sub(&soft_threshold(&x, lambda).unwrap());
        assert!(conj.sub(&direct).norm_fro() < 1e-14);

        let obs = CMatrix::from_fn(3, 3, |r, _| Complex64::new(r as f64, 1.0));
        let mask = ColumnMask::new(3, vec![1]).unwrap();
        let eta = 4.0;
        let conj = prox_conjugate(|v, _| project_feasible(v, &mask, &obs), eta, &x).unwrap();
        let mut expected = x.clone();
        expected.axpy(
            -eta,
            &project_feasible(&x.scaled(1.0 / eta), &mask, &obs).unwrap(),
        );
        assert_eq!(conj, expected);
        assert!(prox_conjugate(|v, _| Ok(v.clone()), 0.0, &x).is_err());
    }

    #[test]
    fn conjugate_step_matches_moreau() {
        let q = CMatrix::from_fn(4, 2, |r, c| Complex64::new(r as f64 * 0.1, c as f64 - 0.5));
        for kind in [
            ThresholdKind::Soft,
            ThresholdKind::L2Block,
            ThresholdKind::L2Squared,
        ] {
            let t = Thresholder::new(kind, 0.3).unwrap();
            for sigma in [1.0, 0.5, 3.0] {
                let mut a = q.clone();
                let mut work = q.clone();
                t.conjugate_step_inplace(&mut a, sigma, &mut work);
                let b = prox_conjugate(
                    |v, s| match kind {
                        ThresholdKind::Soft => soft_threshold(v, 0.3 * s),
                        ThresholdKind::L2Block => prox_l2_block(v, 0.3 * s),
                        _ => prox_l2_squared(v, 0.3 * s),
                    },
                    sigma,
                    &q,
                )
                .unwrap();
                assert!(a.sub(&b).norm_fro() < 1e-14, "{kind:?} sigma={sigma}");
            }
        }
    }

    #[test]
    fn default_lambdas() {
        assert_eq!(ThresholdKind::Soft.default_lambda(), 0.01);
        assert_eq!(ThresholdKind::PShrinkage { p: 0.9 }.default_lambda(), 0.01);
        assert_eq!(
            ThresholdKind::SmoothHard { alpha: 0.01 }.default_lambda(),
            1e-3
        );
        assert_eq!(ThresholdKind::L2Block.default_lambda(), 1.0);
        assert_eq!(ThresholdKind::L2Squared.default_lambda(), 0.2);
        assert!(!ThresholdKind::SmoothHard { alpha: 0.01 }.is_convex());
    }
}
