//! The scaled proximal subproblem
//!
//! ```text
//! minimize_d  q(d) = v^T d + 1/2 d^T H d + h(x + d)
//! ```
//!
//! which is both the PROXTONE search-direction problem (with
//! `v = mean shift + H x`) and the proximal Newton step (with `v = grad g(x)`).
//!
//! `h = 0` and pure ridge are solved in closed form. Anything with an L1 part
//! goes through accelerated proximal gradient with step `1/lambda_max(H)` and
//! gradient-based adaptive restart. Whenever the support of the iterate stops
//! changing, an active-set Newton step is tried: solve the reduced linear
//! system on the support with the signs fixed, and keep the result if its
//! optimality certificate passes. The certificate is always the norm of the
//! composite gradient mapping, so a polished answer is held to the same test
//! as a proximal-gradient one.

use ndarray::{Array2, ArrayView1};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, cholesky_solve, dist_sq, norm, quad_form, spectral_upper_bound, sym_solve, Curvature, CurvatureMatrix, Vector};
use crate::regularizers::{Regularizer, RegularizerKind};
use crate::surrogates::SurrogateStore;

pub const DEFAULT_MAX_INNER: usize = 10_000;

/// Operands of one subproblem.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemSpec<'a> {
    pub linear: ArrayView1<'a, f64>,
    pub curvature: &'a CurvatureMatrix,
    pub base: ArrayView1<'a, f64>,
    pub regularizer: &'a Regularizer,
    pub tolerance: f64,
    pub max_inner: usize,
    pub initial_direction: Option<ArrayView1<'a, f64>>,
    /// Skip the closed-form paths.
    pub force_iterative: bool,
}

impl<'a> SubproblemSpec<'a> {
    /// Spec with tolerance `1e-10 * max(1, ||v||)` and the default inner cap.
    pub fn new(
        linear: ArrayView1<'a, f64>,
        curvature: &'a CurvatureMatrix,
        base: ArrayView1<'a, f64>,
        regularizer: &'a Regularizer,
    ) -> Self {
        Self {
            linear,
            curvature,
            base,
            regularizer,
            tolerance: default_tolerance(linear),
            max_inner: DEFAULT_MAX_INNER,
            initial_direction: None,
            force_iterative: false,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_inner(mut self, max_inner: usize) -> Self {
        self.max_inner = max_inner;
        self
    }

    pub fn with_initial_direction(mut self, d: ArrayView1<'a, f64>) -> Self {
        self.initial_direction = Some(d);
        self
    }

    pub fn force_iterative(mut self) -> Self {
        self.force_iterative = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let p = self.curvature.dim();
        check_dim(p, self.linear.len())?;
        check_dim(p, self.base.len())?;
        if let Some(d) = self.initial_direction {
            check_dim(p, d.len())?;
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!("inner tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.curvature.lower_bound() > 0.0) {
            // Gershgorin is loose for dense matrices; let a factorization decide
            match self.curvature.repr() {
                Curvature::Dense(a) => {
                    cholesky(a)?;
                }
                _ => return Err(Error::NotPositiveDefinite { pivot: 0, value: self.curvature.lower_bound() }),
            }
        }
        Ok(())
    }

    /// `q(d) = v^T d + 1/2 d^T H d + h(x + d)`.
    pub fn model_value(&self, d: ArrayView1<f64>) -> Result<f64> {
        check_dim(self.linear.len(), d.len())?;
        let u = &self.base + &d;
        Ok(self.linear.dot(&d) + 0.5 * quad_form(self.curvature, d)? + self.regularizer.value(u.view()))
    }

    /// Composite gradient mapping norm at `d` for step `1/lipschitz`.
    pub fn certificate_with(&self, d: ArrayView1<f64>, lipschitz: f64) -> Result<f64> {
        let grad = &self.linear + &self.curvature.apply(d)?;
        let step = 1.0 / lipschitz;
        let mut z = &self.base + &d;
        z.scaled_add(-step, &grad);
        self.regularizer.prox_in_place(&mut z, step);
        // z - x is the prox-gradient image of d
        let mut diff = d.to_owned();
        diff -= &z;
        diff += &self.base;
        Ok(norm(diff.view()) * lipschitz)
    }

    /// Certificate with the step the iterative solver uses.
    pub fn certificate(&self, d: ArrayView1<f64>) -> Result<f64> {
        self.certificate_with(d, spectral_upper_bound(self.curvature).max(self.curvature.lower_bound()))
    }
}

pub fn default_tolerance(linear: ArrayView1<f64>) -> f64 {
    1e-10 * norm(linear).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionMethod {
    ClosedForm,
    ProximalGradient,
    ActiveSetPolish,
}

#[derive(Debug, Clone)]
pub struct DirectionResult {
    pub direction: Vector,
    pub inner_iters: usize,
    /// Composite gradient mapping norm at `direction`.
    pub certificate: f64,
    /// False when the inner cap was hit before the certificate passed.
    pub converged: bool,
    pub method: DirectionMethod,
}

pub fn solve_direction(spec: &SubproblemSpec) -> Result<DirectionResult> {
    spec.validate()?;
    if !spec.force_iterative {
        match spec.regularizer.kind() {
            RegularizerKind::Zero => {
                let mut d = sym_solve(spec.curvature, spec.linear)?;
                d.mapv_inplace(|v| -v);
                return closed_form(spec, d);
            }
            RegularizerKind::Ridge => {
                let l2 = spec.regularizer.l2_weight();
                let mut rhs = spec.linear.to_owned();
                rhs.scaled_add(l2, &spec.base);
                let mut d = sym_solve(&spec.curvature.shifted(l2), rhs.view())?;
                d.mapv_inplace(|v| -v);
                return closed_form(spec, d);
            }
            _ => {}
        }
    }
    proximal_gradient(spec)
}

fn closed_form(spec: &SubproblemSpec, direction: Vector) -> Result<DirectionResult> {
    let certificate = spec.certificate(direction.view())?;
    Ok(DirectionResult { direction, inner_iters: 0, certificate, converged: true, method: DirectionMethod::ClosedForm })
}

fn proximal_gradient(spec: &SubproblemSpec) -> Result<DirectionResult> {
    let h = spec.curvature;
    let reg = spec.regularizer;
    let lipschitz = spectral_upper_bound(h).max(h.lower_bound());
    let step = 1.0 / lipschitz;
    let p = h.dim();

    let mut d = spec.initial_direction.map_or_else(|| Vector::zeros(p), |d| d.to_owned());
    let mut best_cert = spec.certificate_with(d.view(), lipschitz)?;
    let mut best = d.clone();
    let done = |direction: Vector, inner_iters, certificate, method| {
        Ok(DirectionResult { direction, inner_iters, certificate, converged: true, method })
    };
    if best_cert <= spec.tolerance {
        return done(best, 0, best_cert, DirectionMethod::ProximalGradient);
    }

    let mut dense: Option<Array2<f64>> = None;
    let mut y = d.clone();
    let mut theta = 1.0f64;
    let mut prev_support: Vec<bool> = Vec::new();
    let mut polished_support: Vec<bool> = Vec::new();

    for it in 1..=spec.max_inner {
        // z = x + y - step * (v + H y), then prox
        let mut z = &spec.base + &y;
        z.scaled_add(-step, &spec.linear);
        z.scaled_add(-step, &h.apply(y.view())?);
        reg.prox_in_place(&mut z, step);
        let support: Vec<bool> = z.iter().map(|v| *v != 0.0).collect();
        let d_new = z - spec.base;

        let restart = (&y - &d_new).dot(&(&d_new - &d)) > 0.0;
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        if restart {
            theta = 1.0;
            y = d_new.clone();
        } else {
            y = &d_new + &((&d_new - &d) * ((theta - 1.0) / theta_next));
            theta = theta_next;
        }
        d = d_new;

        let cert = spec.certificate_with(d.view(), lipschitz)?;
        if cert < best_cert {
            best_cert = cert;
            best.assign(&d);
        }
        if cert <= spec.tolerance {
            return done(d, it, cert, DirectionMethod::ProximalGradient);
        }

        if support == prev_support && support != polished_support {
            let dense = dense.get_or_insert_with(|| h.to_dense());
            if let Some(candidate) = active_set_step(spec, dense, &d) {
                let c = spec.certificate_with(candidate.view(), lipschitz)?;
                if c < best_cert {
                    best_cert = c;
                    best.assign(&candidate);
                }
                if c <= spec.tolerance {
                    return done(candidate, it, c, DirectionMethod::ActiveSetPolish);
                }
            }
            polished_support = support.clone();
        }
        prev_support = support;
    }

    // Cap reached: keep the best iterate, but never one worse than d = 0.
    let zero = Vector::zeros(p);
    if spec.model_value(best.view())? > spec.model_value(zero.view())? {
        best_cert = spec.certificate_with(zero.view(), lipschitz)?;
        best = zero;
    }
    Ok(DirectionResult {
        direction: best,
        inner_iters: spec.max_inner,
        certificate: best_cert,
        converged: false,
        method: DirectionMethod::ProximalGradient,
    })
}

/// Newton step on the support of `x + d` with signs held fixed. Returns
/// `None` when the reduced system is singular or the signs flip.
fn active_set_step(spec: &SubproblemSpec, dense: &Array2<f64>, d: &Vector) -> Option<Vector> {
    let u = &spec.base + d;
    let support: Vec<usize> = (0..u.len()).filter(|&j| u[j] != 0.0).collect();
    let l1 = spec.regularizer.l1_weight();
    let l2 = spec.regularizer.l2_weight();
    // linear coefficient in u-coordinates: v - H x
    let c = &spec.linear - &dense.dot(&spec.base);
    let mut out = Vector::zeros(u.len());
    if !support.is_empty() {
        let k = support.len();
        let mut a = Array2::<f64>::zeros((k, k));
        let mut rhs = Vector::zeros(k);
        for (r, &i) in support.iter().enumerate() {
            for (s, &j) in support.iter().enumerate() {
                a[[r, s]] = dense[[i, j]];
            }
            a[[r, r]] += l2;
            rhs[r] = -(c[i] + l1 * u[i].signum());
        }
        let sol = cholesky_solve(&cholesky(&a).ok()?, rhs.view()).ok()?;
        for (r, &i) in support.iter().enumerate() {
            if sol[r] * u[i].signum() <= 0.0 {
                return None;
            }
            out[i] = sol[r];
        }
    }
    Some(out - spec.base)
}

/// Distance between a PROXTONE direction and a proximal Newton direction
/// computed at the same point, next to the anchor-spread quantity
/// `K_max / (2 m n) * sum_i ||z_i - x||^2` it is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionGap {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn direction_gap(
    d_proxtone: ArrayView1<f64>,
    d_proxn: ArrayView1<f64>,
    store: &SurrogateStore,
    x: ArrayView1<f64>,
    k_max: f64,
) -> Result<DirectionGap> {
    check_dim(d_proxtone.len(), d_proxn.len())?;
    let lhs = dist_sq(d_proxtone, d_proxn).sqrt();
    let n = store.len() as f64;
    let spread: f64 = store.entries().iter().map(|e| dist_sq(e.anchor.view(), x)).sum();
    Ok(DirectionGap { lhs, rhs: k_max / (2.0 * store.band().lo() * n) * spread })
}
