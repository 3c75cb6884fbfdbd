//! Self-checks of the numerical building blocks against independent
//! oracles: finite differences, grid search, Monte-Carlo sampling.

use std::fmt;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::Result;
use crate::harness::synthetic::{gen_synthetic, SyntheticSpec};
use crate::linalg::{dist_sq, norm, Vector};
use crate::objectives::LossKind;
use crate::problem::Problem;
use crate::regularizers::Regularizer;
use crate::surrogates::{
    default_band, CurvatureKind, CurvatureStrategy, IndexSampler, SamplingScheme, SurrogateStore,
};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random points per finite-difference and prox check.
    pub samples: usize,
    /// Refreshes simulated for the sampling checks.
    pub theta_iterations: usize,
    /// Components in the sampling checks.
    pub theta_n: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0, samples: 50, theta_iterations: 100_000, theta_n: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {:.3e} (threshold {:.3e}){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold,
            if self.detail.is_empty() { String::new() } else { format!(" {}", self.detail) }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn le(name: &str, value: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed: value <= threshold, value, threshold, detail }
}

fn ge(name: &str, value: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed: value >= threshold, value, threshold, detail }
}

pub fn run_suite(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    for loss in [LossKind::Squared, LossKind::Logistic] {
        let problem = test_problem(loss, opts.seed)?;
        let tag = match loss {
            LossKind::Squared => "squared",
            LossKind::Logistic => "logistic",
        };
        checks.push(fd_gradient(&problem, opts, tag)?);
        checks.push(fd_hessian(&problem, opts, tag)?);
        checks.push(smoothness(&problem, opts, tag)?);
        checks.push(aggregate_consistency(&problem, opts, tag)?);
        checks.push(majorization(&problem, opts, tag)?);
    }
    checks.extend(prox_checks(opts)?);
    checks.extend(theta_checks(opts)?);
    Ok(VerifyReport { checks })
}

fn test_problem(loss: LossKind, seed: u64) -> Result<Problem> {
    let spec = SyntheticSpec { n: 20, p: 5, loss, tau: 0.1, l1: 0.05, l2: 0.2, condition: 10.0, noise: 0.1, seed, ..Default::default() };
    Ok(gen_synthetic(&spec)?.0)
}

fn random_vector(rng: &mut ChaCha8Rng, p: usize, scale: f64) -> Vector {
    (0..p).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Central differences of each `g_i` against the analytic gradient.
fn fd_gradient(problem: &Problem, opts: &VerifyOptions, tag: &str) -> Result<CheckResult> {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6772_6164);
    let p = problem.p();
    let mut worst = 0.0f64;
    for _ in 0..opts.samples {
        let i = rng.random_range(0..problem.n());
        let s = problem.dataset.sample(i);
        let x = random_vector(&mut rng, p, 1.0);
        let (_, grad) = problem.loss.value_grad(s, x.view())?;
        let mut fd = Vector::zeros(p);
        for j in 0..p {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += H;
            xm[j] -= H;
            fd[j] = (problem.loss.value(s, xp.view())? - problem.loss.value(s, xm.view())?) / (2.0 * H);
        }
        worst = worst.max(norm((&fd - &grad).view()) / norm(grad.view()).max(1.0));
    }
    Ok(le(&format!("fd_gradient_{tag}"), worst, 1e-6, format!("{} points", opts.samples)))
}

/// Central differences of the gradient against the analytic Hessian.
fn fd_hessian(problem: &Problem, opts: &VerifyOptions, tag: &str) -> Result<CheckResult> {
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6865_7373);
    let p = problem.p();
    let mut worst = 0.0f64;
    for _ in 0..opts.samples {
        let i = rng.random_range(0..problem.n());
        let s = problem.dataset.sample(i);
        let x = random_vector(&mut rng, p, 1.0);
        let hess = problem.loss.hessian(s, x.view())?.to_dense();
        let mut fd = Array2::<f64>::zeros((p, p));
        for j in 0..p {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += H;
            xm[j] -= H;
            let (_, gp) = problem.loss.value_grad(s, xp.view())?;
            let (_, gm) = problem.loss.value_grad(s, xm.view())?;
            fd.column_mut(j).assign(&((&gp - &gm) / (2.0 * H)));
        }
        let err = (&fd - &hess).iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = hess.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        worst = worst.max(err / scale);
    }
    Ok(le(&format!("fd_hessian_{tag}"), worst, 1e-6, format!("{} points", opts.samples)))
}

/// `|g_i(x) - g_i(y) - grad g_i(y)^T (x - y)| <= (L_i/2) ||x - y||^2` and
/// `||grad g_i(x) - grad g_i(y)|| <= L_i ||x - y||` on random pairs.
fn smoothness(problem: &Problem, opts: &VerifyOptions, tag: &str) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x736d_6f6f);
    let p = problem.p();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..2 * opts.samples {
        let i = rng.random_range(0..problem.n());
        let s = problem.dataset.sample(i);
        let x = random_vector(&mut rng, p, 2.0);
        let y = random_vector(&mut rng, p, 2.0);
        let lip = problem.loss.lipschitz_bound(s);
        let d2 = dist_sq(x.view(), y.view());
        let (fx, gx) = problem.loss.value_grad(s, x.view())?;
        let (fy, gy) = problem.loss.value_grad(s, y.view())?;
        let value_excess = (fx - fy - gy.dot(&(&x - &y))).abs() - 0.5 * lip * d2;
        let grad_excess = norm((&gx - &gy).view()) - lip * d2.sqrt() * (1.0 + 1e-12);
        worst = worst.max(value_excess).max(grad_excess);
    }
    Ok(le(&format!("smoothness_{tag}"), worst, 1e-12, "max excess over the L_i certificates".into()))
}

/// Running aggregates against recomputation, and the direction-form linear
/// term against the gradient of the surrogate-form quadratic.
fn aggregate_consistency(problem: &Problem, opts: &VerifyOptions, tag: &str) -> Result<CheckResult> {
    let strategy = CurvatureStrategy::with_default_band(problem, CurvatureKind::ExactHessian)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6167_6772);
    let p = problem.p();
    let mut store = SurrogateStore::init(problem, &Vector::zeros(p), &strategy)?;
    let mut sampler = IndexSampler::new(problem.n(), opts.seed, SamplingScheme::Uniform);
    let mut worst = 0.0f64;
    for step in 0..2000 {
        let x = random_vector(&mut rng, p, 1.0);
        store.refresh(problem, sampler.sample(), &x, &strategy)?;
        if step % 100 == 99 {
            let y = random_vector(&mut rng, p, 1.0);
            let direct = store.linear_term(y.view())?;
            let (b, h) = store.surrogate_quadratic()?;
            let via_quadratic = &b + &h.apply(y.view())?;
            let scale = norm(direct.view()).max(1.0);
            worst = worst.max(store.aggregate_drift()).max(norm((&direct - &via_quadratic).view()) / scale);
        }
    }
    Ok(le(&format!("aggregate_consistency_{tag}"), worst, 1e-10, "after 2000 refreshes".into()))
}

/// With `H_i >= L_i I`, the surrogate mean majorizes `g`, and its gap stays
/// under the anchor-distance bound.
fn majorization(problem: &Problem, opts: &VerifyOptions, tag: &str) -> Result<CheckResult> {
    let strategy = CurvatureStrategy::with_default_band(problem, CurvatureKind::ScaledIdentity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6d61_6a6f);
    let p = problem.p();
    let mut store = SurrogateStore::init(problem, &Vector::zeros(p), &strategy)?;
    let mut sampler = IndexSampler::new(problem.n(), opts.seed, SamplingScheme::Uniform);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..opts.samples {
        let z = random_vector(&mut rng, p, 1.0);
        store.refresh(problem, sampler.sample(), &z, &strategy)?;
        let x = random_vector(&mut rng, p, 1.0);
        let g = problem.smooth_value(x.view())?;
        let surrogate = store.surrogate_eval(x.view())?;
        let bound = store.gap_bound(problem, x.view())?;
        // both violations as positive numbers
        worst = worst.max(g - surrogate).max((surrogate - g).abs() - bound);
    }
    let ok = store.is_majorizing(problem);
    let mut check = le(&format!("majorization_{tag}"), worst, 1e-9, "max(g - G, |G - g| - gap_bound)".into());
    check.passed &= ok;
    Ok(check)
}

/// Closed-form prox against a dense grid of its defining objective, plus
/// nonexpansiveness.
fn prox_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    const GRID: usize = 10_000;
    let regs = [
        Regularizer::zero(),
        Regularizer::l1(0.7)?,
        Regularizer::ridge(1.3)?,
        Regularizer::elastic_net(0.4, 0.9)?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7072_6f78);
    let mut subopt = 0.0f64;
    let mut expansion = 0.0f64;
    for _ in 0..opts.samples {
        for reg in &regs {
            let alpha = 0.1 + 2.0 * rng.random::<f64>();
            let v = 3.0 * rng.sample::<f64, _>(StandardNormal);
            let u = reg.prox_scalar(v, alpha);
            let obj = |w: f64| (w - v).powi(2) / (2.0 * alpha) + reg.l1_weight() * w.abs() + 0.5 * reg.l2_weight() * w * w;
            // grid centered at 0 and v, fine enough that its best point is
            // within 1e-10 of the true minimum only if u is the minimizer
            let (lo, hi) = (v.min(0.0) - 1.0, v.max(0.0) + 1.0);
            let grid_best = (0..=GRID)
                .map(|t| lo + (hi - lo) * t as f64 / GRID as f64)
                .chain([0.0])
                .map(obj)
                .fold(f64::INFINITY, f64::min);
            subopt = subopt.max(obj(u) - grid_best);

            let a = random_vector(&mut rng, 4, 2.0);
            let b = random_vector(&mut rng, 4, 2.0);
            let pa = reg.prox(a.view(), alpha)?;
            let pb = reg.prox(b.view(), alpha)?;
            expansion = expansion.max(dist_sq(pa.view(), pb.view()).sqrt() - dist_sq(a.view(), b.view()).sqrt());
        }
    }
    Ok(vec![
        le("prox_grid", subopt, 1e-10, format!("{GRID}-point grid, 4 regularizers")),
        le("prox_nonexpansive", expansion, 1e-12, String::new()),
    ])
}

/// Drives a real store with the solver's sampler and checks that the
/// refreshed index is uniform and the anchor age is geometric with mean `n`.
fn theta_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let n = opts.theta_n;
    let spec = SyntheticSpec { n, p: 2, seed: opts.seed, ..Default::default() };
    let (problem, _) = gen_synthetic(&spec)?;
    let strategy = CurvatureStrategy::new(CurvatureKind::ScaledIdentity, default_band(&problem)?);
    let x = Vector::zeros(2);
    let mut store = SurrogateStore::init(&problem, &x, &strategy)?;
    let mut sampler = IndexSampler::new(n, opts.seed, SamplingScheme::Uniform);
    let iters = opts.theta_iterations;
    let mut counts = vec![0usize; n];
    let (mut age_sum, mut age_count) = (0.0f64, 0usize);
    for _ in 0..iters {
        let j = sampler.sample();
        let before: Vec<usize> = store.entries().iter().map(|e| e.last_update).collect();
        store.refresh(&problem, j, &x, &strategy)?;
        let k = store.iteration();
        // identify the refreshed entry from the store, not the sampler
        let hit = (0..n).find(|&i| store.entry(i).last_update == k).expect("one entry refreshed");
        counts[hit] += 1;
        if before[hit] > 0 {
            age_sum += (k - before[hit]) as f64;
            age_count += 1;
        }
    }

    let q = 1.0 / n as f64;
    let expect = iters as f64 * q;
    let sigma = (iters as f64 * q * (1.0 - q)).sqrt();
    let worst_z = counts.iter().map(|&c| (c as f64 - expect).abs() / sigma).fold(0.0, f64::max);
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    let p_value = ChiSquared::new((n - 1) as f64).map(|d| d.sf(chi2)).unwrap_or(0.0);
    let mean_age = age_sum / age_count as f64;
    let age_sigma = ((1.0 - q) / (q * q) / age_count as f64).sqrt();
    let age_z = (mean_age - n as f64).abs() / age_sigma;
    Ok(vec![
        le("theta_counts_3sigma", worst_z, 3.0, format!("{iters} refreshes, n = {n}")),
        ge("theta_chi_square", p_value, 0.01, format!("chi2 = {chi2:.3}")),
        le("theta_age_mean", age_z, 3.0, format!("mean age {mean_age:.4}, expected {n}")),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_small() {
        let opts = VerifyOptions { theta_iterations: 20_000, ..Default::default() };
        let report = run_suite(&opts).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c}");
        }
    }
}
