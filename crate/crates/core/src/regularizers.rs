//! Separable convex penalties `h(x) = l1 ||x||_1 + (l2/2) ||x||^2`.

use ndarray::ArrayView1;

use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    Zero,
    L1,
    Ridge,
    ElasticNet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularizer {
    kind: RegularizerKind,
    l1: f64,
    l2: f64,
}

impl Regularizer {
    pub fn zero() -> Self {
        Self { kind: RegularizerKind::Zero, l1: 0.0, l2: 0.0 }
    }

    pub fn l1(l1: f64) -> Result<Self> {
        Self::new(l1, 0.0)
    }

    pub fn ridge(l2: f64) -> Result<Self> {
        Self::new(0.0, l2)
    }

    pub fn elastic_net(l1: f64, l2: f64) -> Result<Self> {
        Self::new(l1, l2)
    }

    /// Picks the kind from which weights are nonzero.
    pub fn new(l1: f64, l2: f64) -> Result<Self> {
        for (name, w) in [("l1", l1), ("l2", l2)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} weight must be finite and >= 0, got {w}")));
            }
        }
        let kind = match (l1 > 0.0, l2 > 0.0) {
            (false, false) => RegularizerKind::Zero,
            (true, false) => RegularizerKind::L1,
            (false, true) => RegularizerKind::Ridge,
            (true, true) => RegularizerKind::ElasticNet,
        };
        Ok(Self { kind, l1, l2 })
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn l1_weight(&self) -> f64 {
        self.l1
    }

    pub fn l2_weight(&self) -> f64 {
        self.l2
    }

    /// Convexity parameter `mu_h`.
    pub fn strong_convexity(&self) -> f64 {
        self.l2
    }

    pub fn value(&self, x: ArrayView1<f64>) -> f64 {
        if self.kind == RegularizerKind::Zero {
            return 0.0;
        }
        self.l1 * x.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * self.l2 * x.dot(&x)
    }

    /// Scalar prox `argmin_u (u - v)^2 / (2 alpha) + l1 |u| + (l2/2) u^2`.
    #[inline]
    pub fn prox_scalar(&self, v: f64, alpha: f64) -> f64 {
        soft_threshold(v, alpha * self.l1) / (1.0 + alpha * self.l2)
    }

    /// `prox_{alpha h}(v)`.
    pub fn prox(&self, v: ArrayView1<f64>, alpha: f64) -> Result<Vector> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidStep(alpha));
        }
        Ok(v.mapv(|t| self.prox_scalar(t, alpha)))
    }

    pub(crate) fn prox_in_place(&self, v: &mut Vector, alpha: f64) {
        v.mapv_inplace(|t| self.prox_scalar(t, alpha));
    }
}

/// `sign(t) * max(|t| - s, 0)`.
#[inline]
pub fn soft_threshold(t: f64, s: f64) -> f64 {
    if t > s {
        t - s
    } else if t < -s {
        t + s
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn values() {
        assert_eq!(Regularizer::zero().value(array![3.0, -7.0].view()), 0.0);
        assert_eq!(Regularizer::l1(2.0).unwrap().value(array![1.0, -3.0].view()), 8.0);
        assert_eq!(Regularizer::elastic_net(1.0, 2.0).unwrap().value(array![1.0, 1.0].view()), 4.0);
    }

    #[test]
    fn prox_examples() {
        let v = array![5.0, -5.0];
        assert_eq!(Regularizer::zero().prox(v.view(), 1.0).unwrap(), v);
        let l1 = Regularizer::l1(1.0).unwrap();
        assert_eq!(l1.prox(array![3.0, -0.5, 0.0].view(), 1.0).unwrap(), array![2.0, 0.0, 0.0]);
        let en = Regularizer::elastic_net(1.0, 1.0).unwrap();
        assert_eq!(en.prox(array![3.0, 0.0].view(), 1.0).unwrap(), array![1.0, 0.0]);
    }

    /// Golden-section minimization of the scalar prox objective, as an
    /// independent check of the closed form.
    #[test]
    fn elastic_net_prox_matches_golden_section() {
        let obj = |u: f64| (u - 3.0f64).powi(2) / 2.0 + u.abs() + 0.5 * u * u;
        let (mut a, mut b) = (-10.0f64, 10.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if obj(c) < obj(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let u = 0.5 * (a + b);
        // golden section resolves a minimizer only to about sqrt(eps)
        assert!((u - 1.0).abs() < 1e-6, "golden section gave {u}");
        let en = Regularizer::elastic_net(1.0, 1.0).unwrap();
        assert_eq!(en.prox_scalar(3.0, 1.0), 1.0);
    }

    #[test]
    fn prox_rejects_bad_step() {
        let r = Regularizer::l1(1.0).unwrap();
        assert!(matches!(r.prox(array![1.0].view(), 0.0), Err(Error::InvalidStep(_))));
        assert!(matches!(r.prox(array![1.0].view(), -1.0), Err(Error::InvalidStep(_))));
    }

    #[test]
    fn kinds_and_convexity() {
        assert_eq!(Regularizer::l1(0.5).unwrap().kind(), RegularizerKind::L1);
        assert_eq!(Regularizer::ridge(0.5).unwrap().kind(), RegularizerKind::Ridge);
        assert_eq!(Regularizer::elastic_net(0.1, 0.5).unwrap().strong_convexity(), 0.5);
        assert_eq!(Regularizer::l1(3.0).unwrap().strong_convexity(), 0.0);
        assert!(Regularizer::new(-1.0, 0.0).is_err());
    }
}
