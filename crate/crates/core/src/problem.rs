use ndarray::ArrayView1;

use crate::error::Result;
use crate::linalg::Vector;
use crate::objectives::{eval_full, eval_value, Dataset, LossFamily};
use crate::regularizers::Regularizer;

/// Composite objective `f(x) = (1/n) sum_i g_i(x) + h(x)`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dataset: Dataset,
    pub loss: LossFamily,
    pub regularizer: Regularizer,
}

impl Problem {
    pub fn new(dataset: Dataset, loss: LossFamily, regularizer: Regularizer) -> Self {
        Self { dataset, loss, regularizer }
    }

    /// Number of components `n`.
    pub fn n(&self) -> usize {
        self.dataset.len()
    }

    /// Dimension `p`.
    pub fn p(&self) -> usize {
        self.dataset.dim()
    }

    pub fn smooth_value(&self, x: ArrayView1<f64>) -> Result<f64> {
        eval_value(&self.loss, &self.dataset, x)
    }

    pub fn smooth_value_grad(&self, x: ArrayView1<f64>) -> Result<(f64, Vector)> {
        eval_full(&self.loss, &self.dataset, x)
    }

    /// `f(x) = g(x) + h(x)`.
    pub fn objective(&self, x: ArrayView1<f64>) -> Result<f64> {
        Ok(self.smooth_value(x)? + self.regularizer.value(x))
    }

    pub fn lipschitz_constants(&self) -> Vec<f64> {
        self.dataset.samples().iter().map(|s| self.loss.lipschitz_bound(s)).collect()
    }

    /// `(1/n) sum_i L_i`, an upper bound on the Lipschitz constant of `grad g`.
    pub fn lipschitz_average(&self) -> f64 {
        self.lipschitz_constants().iter().sum::<f64>() / self.n() as f64
    }

    /// Composite gradient mapping norm `||x - prox_{h/L}(x - grad g(x)/L)|| * L`
    /// with `L` the average Lipschitz bound. Zero exactly at minimizers.
    pub fn gradient_mapping_norm(&self, x: ArrayView1<f64>) -> Result<f64> {
        let (_, grad) = self.smooth_value_grad(x)?;
        let lip = self.lipschitz_average().max(f64::MIN_POSITIVE);
        let mut step = x.to_owned();
        step.scaled_add(-1.0 / lip, &grad);
        let next = self.regularizer.prox(step.view(), 1.0 / lip)?;
        Ok(crate::linalg::norm((&x - &next).view()) * lip)
    }
}
