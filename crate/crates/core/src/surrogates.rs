//! Per-sample quadratic surrogates and their running aggregates.
//!
//! Each sample `i` keeps a quadratic model of `g_i` anchored at the point
//! where it was last refreshed:
//!
//! ```text
//! g_i^k(x) = g_i(z_i) + grad g_i(z_i)^T (x - z_i) + 1/2 (x - z_i)^T H_i (x - z_i)
//! ```
//!
//! The store holds this in two equivalent views at once. The incremental
//! view keeps the shift vector `s_i = grad g_i(z_i) - H_i z_i`, so the
//! surrogate gradient at any `x` is `mean(s_i) + mean(H_i) x`. The anchored
//! view keeps `z_i`, `g_i(z_i)` and `grad g_i(z_i)` so the surrogate value
//! itself can be evaluated. `s_i + H_i z_i == grad g_i(z_i)` is checked by
//! [`SurrogateEntry::consistency_residual`].

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{clamp_to_band, dist_sq, quad_form, Curvature, CurvatureMatrix, SpectralBand, Vector};
use crate::objectives::Sample;
use crate::problem::Problem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurvatureKind {
    /// `H_i = clamp(grad^2 g_i(z_i))`.
    ExactHessian,
    /// `H_i = clamp(L_i I)`.
    ScaledIdentity,
    /// `H_i = clamp(diag(grad^2 g_i(z_i)))`.
    Diagonal,
}

/// Rule that produces the per-sample curvature `H_i`, spectrum-clamped to a
/// band `[m, M]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureStrategy {
    pub kind: CurvatureKind,
    pub band: SpectralBand,
}

impl CurvatureStrategy {
    pub fn new(kind: CurvatureKind, band: SpectralBand) -> Self {
        Self { kind, band }
    }

    /// Strategy with the band `m = max(1e-6, 1e-3 min L_i)`,
    /// `M = 1.05 max L_i`.
    pub fn with_default_band(problem: &Problem, kind: CurvatureKind) -> Result<Self> {
        Ok(Self::new(kind, default_band(problem)?))
    }

    /// Curvature for sample `s` at point `x`.
    pub fn curvature(&self, problem: &Problem, s: &Sample, x: ArrayView1<f64>) -> Result<CurvatureMatrix> {
        let raw = match self.kind {
            CurvatureKind::ExactHessian => problem.loss.hessian(s, x)?,
            CurvatureKind::ScaledIdentity => {
                CurvatureMatrix::rank1(0.0, s.features.clone(), problem.loss.lipschitz_bound(s))
            }
            CurvatureKind::Diagonal => CurvatureMatrix::diagonal(problem.loss.hessian(s, x)?.diag()),
        };
        Ok(clamp_to_band(&raw, self.band))
    }
}

pub fn default_band(problem: &Problem) -> Result<SpectralBand> {
    let lips = problem.lipschitz_constants();
    let min = lips.iter().copied().fold(f64::INFINITY, f64::min);
    let max = lips.iter().copied().fold(0.0, f64::max);
    let lo = (1e-3 * min).max(1e-6);
    SpectralBand::new(lo, (1.05 * max).max(lo))
}

/// One sample's surrogate, in both views.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEntry {
    /// `grad g_i(anchor) - H_i anchor`.
    pub shift: Vector,
    pub curvature: CurvatureMatrix,
    pub anchor: Vector,
    pub anchor_value: f64,
    pub anchor_grad: Vector,
    /// Iteration at which this entry was last rebuilt.
    pub last_update: usize,
}

impl SurrogateEntry {
    fn build(problem: &Problem, i: usize, x: &Vector, strategy: &CurvatureStrategy, iteration: usize) -> Result<Self> {
        let s = problem.dataset.sample(i);
        let (anchor_value, anchor_grad) = problem.loss.value_grad(s, x.view())?;
        let curvature = strategy.curvature(problem, s, x.view())?;
        let shift = &anchor_grad - &curvature.apply(x.view())?;
        Ok(Self { shift, curvature, anchor: x.clone(), anchor_value, anchor_grad, last_update: iteration })
    }

    /// `g_i^k(x)`.
    pub fn eval(&self, x: ArrayView1<f64>) -> Result<f64> {
        check_dim(self.anchor.len(), x.len())?;
        let d = &x - &self.anchor;
        Ok(self.anchor_value + self.anchor_grad.dot(&d) + 0.5 * quad_form(&self.curvature, d.view())?)
    }

    /// `max_j |s_i + H_i z_i - grad g_i(z_i)|`.
    pub fn consistency_residual(&self) -> f64 {
        let hz = self.curvature.apply(self.anchor.view()).expect("entry dimensions agree");
        (&self.shift + &hz - &self.anchor_grad).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Hash of every stored bit, for detecting untouched entries.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let mut feed = |v: &[f64]| v.iter().for_each(|x| x.to_bits().hash(&mut h));
        feed(self.shift.as_slice().expect("contiguous"));
        feed(self.anchor.as_slice().expect("contiguous"));
        feed(self.anchor_grad.as_slice().expect("contiguous"));
        feed(&[self.anchor_value, self.curvature.lower_bound(), self.curvature.upper_bound()]);
        feed(self.curvature.to_dense().as_slice().expect("contiguous"));
        self.last_update.hash(&mut h);
        h.finish()
    }
}

/// The surrogate memory: `n` entries plus incrementally maintained means of
/// their shifts and curvatures.
#[derive(Debug, Clone)]
pub struct SurrogateStore {
    entries: Vec<SurrogateEntry>,
    aggregate_shift: Vector,
    aggregate_curvature: Array2<f64>,
    /// Mean of the entries' spectral upper bounds; bounds the aggregate's.
    curvature_ceiling: f64,
    band: SpectralBand,
    iteration: usize,
}

impl SurrogateStore {
    /// Anchors every entry at `x0`.
    pub fn init(problem: &Problem, x0: &Vector, strategy: &CurvatureStrategy) -> Result<Self> {
        check_dim(problem.p(), x0.len())?;
        let n = problem.n();
        let p = problem.p();
        let entries = (0..n)
            .map(|i| SurrogateEntry::build(problem, i, x0, strategy, 0))
            .collect::<Result<Vec<_>>>()?;
        let mut store = Self {
            entries,
            aggregate_shift: Vector::zeros(p),
            aggregate_curvature: Array2::zeros((p, p)),
            curvature_ceiling: 0.0,
            band: strategy.band,
            iteration: 0,
        };
        let (shift, curvature) = store.recompute_aggregates();
        store.aggregate_shift = shift;
        store.aggregate_curvature = curvature;
        store.curvature_ceiling = store.entries.iter().map(|e| e.curvature.upper_bound()).sum::<f64>() / n as f64;
        Ok(store)
    }

    /// Re-anchors entry `j` at `x_new` and advances the iteration counter.
    /// Every other entry is left untouched.
    pub fn refresh(&mut self, problem: &Problem, j: usize, x_new: &Vector, strategy: &CurvatureStrategy) -> Result<()> {
        let n = self.entries.len();
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, len: n });
        }
        check_dim(self.aggregate_shift.len(), x_new.len())?;
        self.iteration += 1;
        let fresh = SurrogateEntry::build(problem, j, x_new, strategy, self.iteration)?;
        let old = std::mem::replace(&mut self.entries[j], fresh);
        let new = &self.entries[j];
        let inv_n = 1.0 / n as f64;

        self.aggregate_shift.scaled_add(inv_n, &(&new.shift - &old.shift));
        match (old.curvature.repr(), new.curvature.repr()) {
            (
                Curvature::Rank1 { coef: c0, direction: a0, shift: r0 },
                Curvature::Rank1 { coef: c1, direction: a1, shift: r1 },
            ) if Arc::ptr_eq(a0, a1) => {
                let delta = CurvatureMatrix::rank1(c1 - c0, a1.clone(), r1 - r0);
                delta.add_scaled_to(&mut self.aggregate_curvature, inv_n);
            }
            _ => {
                old.curvature.add_scaled_to(&mut self.aggregate_curvature, -inv_n);
                new.curvature.add_scaled_to(&mut self.aggregate_curvature, inv_n);
            }
        }
        self.curvature_ceiling += inv_n * (new.curvature.upper_bound() - old.curvature.upper_bound());
        Ok(())
    }

    pub fn entries(&self) -> &[SurrogateEntry] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &SurrogateEntry {
        &self.entries[i]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn band(&self) -> SpectralBand {
        self.band
    }

    /// Running mean of the shift vectors.
    pub fn aggregate_shift(&self) -> &Vector {
        &self.aggregate_shift
    }

    /// Running mean of the curvatures, as a dense operator whose spectrum
    /// lies in `[m, min(M, mean of entry upper bounds)]`.
    pub fn aggregate_curvature(&self) -> CurvatureMatrix {
        let hi = self.curvature_ceiling.min(self.band.hi()).max(self.band.lo());
        CurvatureMatrix::dense_with_bounds(self.aggregate_curvature.clone(), self.band.lo(), hi)
    }

    /// Gradient of the surrogate mean at `x`: `mean(s_i) + mean(H_i) x`.
    pub fn linear_term(&self, x: ArrayView1<f64>) -> Result<Vector> {
        check_dim(self.aggregate_shift.len(), x.len())?;
        Ok(&self.aggregate_shift + &self.aggregate_curvature.dot(&x))
    }

    /// Means of the shifts and curvatures recomputed from the entries.
    pub fn recompute_aggregates(&self) -> (Vector, Array2<f64>) {
        let p = self.aggregate_shift.len();
        let inv_n = 1.0 / self.entries.len() as f64;
        let mut shift = Vector::zeros(p);
        let mut curvature = Array2::zeros((p, p));
        for e in &self.entries {
            shift.scaled_add(inv_n, &e.shift);
            e.curvature.add_scaled_to(&mut curvature, inv_n);
        }
        (shift, curvature)
    }

    /// Largest absolute difference between the running aggregates and a
    /// from-scratch recomputation.
    pub fn aggregate_drift(&self) -> f64 {
        let (shift, curvature) = self.recompute_aggregates();
        let a = (&shift - &self.aggregate_shift).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b = (&curvature - &self.aggregate_curvature).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.max(b)
    }

    /// Quadratic coefficients `(b, H)` of `G^k(x) = const + b^T x + x^T H x / 2`
    /// computed from the anchored view only:
    /// `b = mean(grad g_i(z_i) - H_i z_i)`, `H = mean(H_i)`.
    pub fn surrogate_quadratic(&self) -> Result<(Vector, CurvatureMatrix)> {
        let p = self.aggregate_shift.len();
        let inv_n = 1.0 / self.entries.len() as f64;
        let mut linear = Vector::zeros(p);
        let mut curvature = Array2::zeros((p, p));
        for e in &self.entries {
            linear.scaled_add(inv_n, &e.anchor_grad);
            linear.scaled_add(-inv_n, &e.curvature.apply(e.anchor.view())?);
            e.curvature.add_scaled_to(&mut curvature, inv_n);
        }
        let hi = self.curvature_ceiling.min(self.band.hi()).max(self.band.lo());
        Ok((linear, CurvatureMatrix::dense_with_bounds(curvature, self.band.lo(), hi)))
    }

    /// `G^k(x) = (1/n) sum_i g_i^k(x)`.
    pub fn surrogate_eval(&self, x: ArrayView1<f64>) -> Result<f64> {
        let mut total = 0.0;
        for e in &self.entries {
            total += e.eval(x)?;
        }
        Ok(total / self.entries.len() as f64)
    }

    /// `(1/n) sum_i (M + L_i)/2 ||x - z_i||^2`, a certified bound on
    /// `|G^k(x) - g(x)|`.
    pub fn gap_bound(&self, problem: &Problem, x: ArrayView1<f64>) -> Result<f64> {
        check_dim(self.aggregate_shift.len(), x.len())?;
        let m_hi = self.band.hi();
        let total: f64 = self
            .entries
            .iter()
            .zip(problem.dataset.samples())
            .map(|(e, s)| 0.5 * (m_hi + problem.loss.lipschitz_bound(s)) * dist_sq(x, e.anchor.view()))
            .sum();
        Ok(total / self.entries.len() as f64)
    }

    /// `(1/n) sum_i ||x - z_i||^2`.
    pub fn mean_anchor_dist_sq(&self, x: ArrayView1<f64>) -> f64 {
        self.entries.iter().map(|e| dist_sq(x, e.anchor.view())).sum::<f64>() / self.entries.len() as f64
    }

    /// True when every stored curvature dominates `L_i I`, the condition
    /// under which `G^k` majorizes `g`.
    pub fn is_majorizing(&self, problem: &Problem) -> bool {
        self.entries
            .iter()
            .zip(problem.dataset.samples())
            .all(|(e, s)| e.curvature.lower_bound() >= problem.loss.lipschitz_bound(s) * (1.0 - 1e-12))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingScheme {
    /// Uniform with replacement.
    Uniform,
    /// `0, 1, ..., n-1, 0, ...`; for diagnostics only.
    Cyclic,
}

/// Seeded source of refresh indices.
#[derive(Debug, Clone)]
pub struct IndexSampler {
    scheme: SamplingScheme,
    rng: ChaCha8Rng,
    n: usize,
    next: usize,
}

impl IndexSampler {
    pub fn new(n: usize, seed: u64, scheme: SamplingScheme) -> Self {
        Self { scheme, rng: ChaCha8Rng::seed_from_u64(seed), n, next: 0 }
    }

    pub fn sample(&mut self) -> usize {
        match self.scheme {
            SamplingScheme::Uniform => self.rng.random_range(0..self.n),
            SamplingScheme::Cyclic => {
                let j = self.next;
                self.next = (self.next + 1) % self.n;
                j
            }
        }
    }
}
