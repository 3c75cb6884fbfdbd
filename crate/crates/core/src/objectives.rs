//! Per-sample smooth losses `g_i(x) = phi(a_i^T x; b_i) + (tau/2)||x||^2`.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{CurvatureMatrix, Vector};

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Feature row, shared with any rank-1 curvature built from it.
    pub features: Arc<Vector>,
    /// Regression target, or a label in `{-1, +1}` for logistic loss.
    pub target: f64,
}

impl Sample {
    pub fn new(features: Vector, target: f64) -> Self {
        Self { features: Arc::new(features), target }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyFile)?;
        let dim = first.features.len();
        for (i, s) in samples.iter().enumerate() {
            check_dim(dim, s.features.len())?;
            if !s.target.is_finite() || s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("sample {i} has non-finite entries")));
            }
        }
        Ok(Self { samples, dim })
    }

    /// Builds a dataset from an `n x p` feature matrix and `n` targets.
    pub fn from_rows(features: &Array2<f64>, targets: &[f64]) -> Result<Self> {
        check_dim(features.nrows(), targets.len())?;
        Self::new(
            features
                .outer_iter()
                .zip(targets)
                .map(|(row, &b)| Sample::new(row.to_owned(), b))
                .collect(),
        )
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when every target is `-1` or `+1`.
    pub fn has_binary_labels(&self) -> bool {
        self.samples.iter().all(|s| s.target == 1.0 || s.target == -1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Squared,
    Logistic,
}

/// Loss applied to every sample, with an optional ridge `(tau/2)||x||^2`
/// folded into each component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossFamily {
    pub kind: LossKind,
    pub ridge: f64,
}

impl LossFamily {
    pub fn new(kind: LossKind, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0) || !ridge.is_finite() {
            return Err(Error::InvalidConfig(format!("loss ridge must be >= 0, got {ridge}")));
        }
        Ok(Self { kind, ridge })
    }

    pub fn squared() -> Self {
        Self { kind: LossKind::Squared, ridge: 0.0 }
    }

    pub fn logistic() -> Self {
        Self { kind: LossKind::Logistic, ridge: 0.0 }
    }

    pub fn with_ridge(self, ridge: f64) -> Result<Self> {
        Self::new(self.kind, ridge)
    }

    /// `phi(t)`, `phi'(t)` and `phi''(t)` at margin `t = a^T x`.
    fn link(&self, t: f64, b: f64) -> (f64, f64, f64) {
        match self.kind {
            LossKind::Squared => {
                let r = t - b;
                (0.5 * r * r, r, 1.0)
            }
            LossKind::Logistic => {
                let z = b * t;
                let s = sigmoid(-z);
                (log1p_exp_neg(z), -b * s, s * (1.0 - s))
            }
        }
    }

    pub fn value(&self, s: &Sample, x: ArrayView1<f64>) -> Result<f64> {
        check_dim(s.features.len(), x.len())?;
        let (v, _, _) = self.link(s.features.dot(&x), s.target);
        Ok(v + 0.5 * self.ridge * x.dot(&x))
    }

    pub fn value_grad(&self, s: &Sample, x: ArrayView1<f64>) -> Result<(f64, Vector)> {
        check_dim(s.features.len(), x.len())?;
        let (v, d1, _) = self.link(s.features.dot(&x), s.target);
        let mut grad = s.features.as_ref() * d1;
        if self.ridge != 0.0 {
            grad.scaled_add(self.ridge, &x);
        }
        Ok((v + 0.5 * self.ridge * x.dot(&x), grad))
    }

    /// Exact Hessian in rank-1 form `phi'' a a^T + tau I`.
    pub fn hessian(&self, s: &Sample, x: ArrayView1<f64>) -> Result<CurvatureMatrix> {
        check_dim(s.features.len(), x.len())?;
        let (_, _, d2) = self.link(s.features.dot(&x), s.target);
        Ok(CurvatureMatrix::rank1(d2, s.features.clone(), self.ridge))
    }

    /// Tight supremum of the Hessian spectrum over all `x`.
    pub fn lipschitz_bound(&self, s: &Sample) -> f64 {
        let norm_sq = s.features.dot(s.features.as_ref());
        let curvature_sup = match self.kind {
            LossKind::Squared => 1.0,
            LossKind::Logistic => 0.25,
        };
        curvature_sup * norm_sq + self.ridge
    }
}

/// Value, gradient and Hessian of one component.
#[derive(Debug, Clone)]
pub struct ComponentEval {
    pub value: f64,
    pub grad: Vector,
    pub hess: CurvatureMatrix,
}

pub fn eval_component(loss: &LossFamily, s: &Sample, x: ArrayView1<f64>) -> Result<ComponentEval> {
    let (value, grad) = loss.value_grad(s, x)?;
    let hess = loss.hessian(s, x)?;
    Ok(ComponentEval { value, grad, hess })
}

pub fn lipschitz_bound(loss: &LossFamily, s: &Sample) -> f64 {
    loss.lipschitz_bound(s)
}

/// Mean value and gradient over the dataset.
pub fn eval_full(loss: &LossFamily, ds: &Dataset, x: ArrayView1<f64>) -> Result<(f64, Vector)> {
    check_dim(ds.dim(), x.len())?;
    let n = ds.len() as f64;
    let mut value = 0.0;
    let mut grad = Vector::zeros(ds.dim());
    for s in ds.samples() {
        let (t_val, d1, _) = loss.link(s.features.dot(&x), s.target);
        value += t_val;
        grad.scaled_add(d1, s.features.as_ref());
    }
    value /= n;
    grad /= n;
    if loss.ridge != 0.0 {
        value += 0.5 * loss.ridge * x.dot(&x);
        grad.scaled_add(loss.ridge, &x);
    }
    Ok((value, grad))
}

/// Mean value only.
pub fn eval_value(loss: &LossFamily, ds: &Dataset, x: ArrayView1<f64>) -> Result<f64> {
    check_dim(ds.dim(), x.len())?;
    let sum: f64 = ds.samples().iter().map(|s| loss.link(s.features.dot(&x), s.target).0).sum();
    Ok(sum / ds.len() as f64 + 0.5 * loss.ridge * x.dot(&x))
}

/// Dense mean Hessian `(1/n) sum_i grad^2 g_i(x)`.
pub fn full_hessian(loss: &LossFamily, ds: &Dataset, x: ArrayView1<f64>) -> Result<Array2<f64>> {
    check_dim(ds.dim(), x.len())?;
    let p = ds.dim();
    let inv_n = 1.0 / ds.len() as f64;
    let mut h = Array2::<f64>::zeros((p, p));
    for s in ds.samples() {
        let (_, _, d2) = loss.link(s.features.dot(&x), s.target);
        let c = d2 * inv_n;
        if c == 0.0 {
            continue;
        }
        for i in 0..p {
            let ci = c * s.features[i];
            for j in i..p {
                h[[i, j]] += ci * s.features[j];
            }
        }
    }
    for i in 0..p {
        h[[i, i]] += loss.ridge;
        for j in 0..i {
            h[[i, j]] = h[[j, i]];
        }
    }
    Ok(h)
}

/// Logistic function, stable for large `|t|`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-t))` without overflow.
pub fn log1p_exp_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn squared_component_by_hand() {
        let s = Sample::new(array![1.0, 2.0], 1.0);
        let e = eval_component(&LossFamily::squared(), &s, array![1.0, 1.0].view()).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.grad, array![2.0, 4.0]);
        match e.hess.repr() {
            crate::linalg::Curvature::Rank1 { coef, shift, .. } => {
                assert_eq!(*coef, 1.0);
                assert_eq!(*shift, 0.0);
            }
            other => panic!("expected rank-1 Hessian, got {other:?}"),
        }
    }

    #[test]
    fn logistic_at_origin() {
        let s = Sample::new(array![1.0, 0.0], 1.0);
        let e = eval_component(&LossFamily::logistic(), &s, array![0.0, 0.0].view()).unwrap();
        assert_abs_diff_eq!(e.value, std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(e.grad, array![-0.5, 0.0]);
        match e.hess.repr() {
            crate::linalg::Curvature::Rank1 { coef, .. } => assert_eq!(*coef, 0.25),
            other => panic!("expected rank-1 Hessian, got {other:?}"),
        }
    }

    #[test]
    fn zero_residual_has_zero_gradient() {
        let s = Sample::new(array![0.5, -1.5, 2.0], -1.25);
        // a^T x = 0.5 - 3.75 + 2.0 = -1.25
        let x = array![1.0, 2.5, 1.0];
        let (_, g) = LossFamily::squared().value_grad(&s, x.view()).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lipschitz_examples() {
        let sq = LossFamily::squared();
        assert_eq!(sq.lipschitz_bound(&Sample::new(array![3.0, 4.0], 0.0)), 25.0);
        assert_eq!(LossFamily::logistic().lipschitz_bound(&Sample::new(array![2.0, 0.0], 1.0)), 1.0);
        let ridge = sq.with_ridge(0.5).unwrap();
        assert_eq!(ridge.lipschitz_bound(&Sample::new(array![0.0, 0.0], 0.0)), 0.5);
    }

    #[test]
    fn eval_full_is_mean() {
        let ds = Dataset::new(vec![Sample::new(array![1.0, 0.0], 0.0), Sample::new(array![0.0, 1.0], 0.0)]).unwrap();
        // gradients (2, 0) and (0, 2) at x = (2, 2)
        let (_, g) = eval_full(&LossFamily::squared(), &ds, array![2.0, 2.0].view()).unwrap();
        assert_eq!(g, array![1.0, 1.0]);

        let single = Dataset::new(vec![Sample::new(array![1.0, 2.0], 1.0)]).unwrap();
        let loss = LossFamily::logistic().with_ridge(0.1).unwrap();
        let x = array![0.3, -0.2];
        let (v, g) = eval_full(&loss, &single, x.view()).unwrap();
        let e = eval_component(&loss, single.sample(0), x.view()).unwrap();
        assert_abs_diff_eq!(v, e.value, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], e.grad[0], epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], e.grad[1], epsilon = 1e-15);
    }

    #[test]
    fn logistic_is_stable_at_extreme_margins() {
        let loss = LossFamily::logistic();
        let s = Sample::new(array![1.0], 1.0);
        let v = loss.value(&s, array![-800.0].view()).unwrap();
        assert_abs_diff_eq!(v, 800.0, epsilon = 1e-9);
        let v = loss.value(&s, array![800.0].view()).unwrap();
        assert!((0.0..1e-300).contains(&v));
        let (_, g) = loss.value_grad(&s, array![-800.0].view()).unwrap();
        assert_abs_diff_eq!(g[0], -1.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = Sample::new(array![1.0, 2.0], 1.0);
        assert!(matches!(
            eval_component(&LossFamily::squared(), &s, array![1.0].view()),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
        assert!(Dataset::new(vec![]).is_err());
        assert!(Dataset::new(vec![Sample::new(array![1.0], 0.0), Sample::new(array![1.0, 2.0], 0.0)]).is_err());
    }

    #[test]
    fn full_hessian_matches_sum_of_components() {
        let ds = Dataset::new(vec![
            Sample::new(array![1.0, 2.0], 1.0),
            Sample::new(array![-0.5, 0.3], -1.0),
            Sample::new(array![2.0, -1.0], 1.0),
        ])
        .unwrap();
        let loss = LossFamily::logistic().with_ridge(0.2).unwrap();
        let x = array![0.4, -0.7];
        let h = full_hessian(&loss, &ds, x.view()).unwrap();
        let mut expect = Array2::<f64>::zeros((2, 2));
        for s in ds.samples() {
            loss.hessian(s, x.view()).unwrap().add_scaled_to(&mut expect, 1.0 / 3.0);
        }
        for (a, b) in h.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }
}
