//! Problem constants and the convergence bounds built from them.
//!
//! Everything here is a pure function of the constants; nothing touches a
//! solver.

use std::fmt;

use crate::error::{Error, Result};
use crate::objectives::LossKind;
use crate::problem::Problem;
use crate::surrogates::CurvatureStrategy;

/// `sup_z |phi'''(z)|` for the logistic loss `phi(z) = log(1 + e^{-z})`,
/// attained where `sigmoid(z) = 1/2 +- 1/(2 sqrt 3)`.
pub const LOGISTIC_THIRD_DERIVATIVE_SUP: f64 = 0.096_225_044_864_937_63;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    /// Per-component gradient Lipschitz constants `L_i`.
    pub lipschitz: Vec<f64>,
    pub l_max: f64,
    pub l_avg: f64,
    /// Strong convexity of the smooth part (the ridge weight `tau`).
    pub mu_g: f64,
    /// Strong convexity of `h` (its `l2` weight).
    pub mu_h: f64,
    /// Curvature band `[m, M]`.
    pub m: f64,
    pub big_m: f64,
    /// Per-component Hessian Lipschitz constants `K_i`.
    pub hessian_lipschitz: Vec<f64>,
    pub k_avg: f64,
    pub k_max: f64,
    pub n: usize,
    pub p: usize,
}

pub fn compute_constants(problem: &Problem, strategy: &CurvatureStrategy) -> Result<ProblemConstants> {
    let lipschitz = problem.lipschitz_constants();
    let n = lipschitz.len();
    let hessian_lipschitz: Vec<f64> = problem
        .dataset
        .samples()
        .iter()
        .map(|s| match problem.loss.kind {
            LossKind::Squared => 0.0,
            LossKind::Logistic => LOGISTIC_THIRD_DERIVATIVE_SUP * s.features.dot(s.features.as_ref()).powf(1.5),
        })
        .collect();
    Ok(ProblemConstants {
        l_max: lipschitz.iter().copied().fold(0.0, f64::max),
        l_avg: lipschitz.iter().sum::<f64>() / n as f64,
        lipschitz,
        mu_g: problem.loss.ridge,
        mu_h: problem.regularizer.strong_convexity(),
        m: strategy.band.lo(),
        big_m: strategy.band.hi(),
        k_avg: hessian_lipschitz.iter().sum::<f64>() / n as f64,
        k_max: hessian_lipschitz.iter().copied().fold(0.0, f64::max),
        hessian_lipschitz,
        n,
        p: problem.p(),
    })
}

impl ProblemConstants {
    /// `rho = (1/n) (M + L_max)/(2 mu_h + m) + (1 - 1/n)`.
    pub fn rho(&self) -> f64 {
        let n = self.n as f64;
        (self.big_m + self.l_max) / (2.0 * self.mu_h + self.m) / n + (1.0 - 1.0 / n)
    }

    /// `rho >= 1`: the bounds carry no information.
    pub fn is_vacuous(&self) -> bool {
        self.rho() >= 1.0
    }

    /// `C = (K_avg + 2 L_max)/m * (M + L_max)/(2 mu_h + m) + 2 L_max / m`.
    pub fn c(&self) -> f64 {
        (self.k_avg + 2.0 * self.l_max) / self.m * (self.big_m + self.l_max) / (2.0 * self.mu_h + self.m)
            + 2.0 * self.l_max / self.m
    }

    /// Lower bound `mu_g + mu_h` on the strong convexity of `f`.
    pub fn mu(&self) -> f64 {
        self.mu_g + self.mu_h
    }

    fn require_contraction(&self) -> Result<f64> {
        let rho = self.rho();
        if rho >= 1.0 {
            Err(Error::VacuousBound { rho })
        } else {
            Ok(rho)
        }
    }
}

/// `((M + L_max)/2) rho^k ||x* - x0||^2`, a bound on `E f(x^k) - f*`.
pub fn theorem1_bound(consts: &ProblemConstants, k: usize, dist0_sq: f64) -> f64 {
    0.5 * (consts.big_m + consts.l_max) * consts.rho().powi(k as i32) * dist0_sq
}

/// `C rho^(k-1) ||x* - x0||^2`, a bound on `E ||x^k - x*||` under exact
/// Hessian curvature.
pub fn theorem2_bound(consts: &ProblemConstants, k: usize, dist0_sq: f64) -> Result<f64> {
    let rho = consts.require_contraction()?;
    Ok(consts.c() * rho.powi(k as i32 - 1) * dist0_sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// `f(x^k) - f* <= eps` with probability at least `1 - delta`.
    Value,
    /// `||x^k - x*|| <= eps` with probability at least `1 - delta`.
    Solution,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Value => "value",
            Target::Solution => "solution",
        })
    }
}

/// Iterations after which the Markov-inequality guarantee holds; at least 1.
pub fn corollary_iterations(
    consts: &ProblemConstants,
    eps: f64,
    delta: f64,
    dist0_sq: f64,
    target: Target,
) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidConfig(format!("delta must lie in (0, 1], got {delta}")));
    }
    let rho = consts.require_contraction()?;
    if dist0_sq == 0.0 {
        return Ok(1);
    }
    let (lmax, big_m, m, mu_h) = (consts.l_max, consts.big_m, consts.m, consts.mu_h);
    let ratio = match target {
        Target::Value => (big_m + lmax) * dist0_sq / (2.0 * delta * eps),
        Target::Solution => {
            ((consts.k_avg + 2.0 * lmax) * (big_m + lmax) + 2.0 * lmax * (2.0 * mu_h + m)) * dist0_sq
                / (m * (2.0 * mu_h + m) * delta * eps)
        }
    };
    let k = (ratio.ln() / (1.0 / rho).ln()).ceil();
    Ok(if k.is_finite() && k >= 1.0 { k as usize } else { 1 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub eps: f64,
    pub delta: f64,
    pub target: Target,
    /// `None` when the bound is vacuous.
    pub iterations: Option<usize>,
}

/// Bound sequences over `1..=k_max` and iteration predictions, with the
/// vacuous case reported rather than raised.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub rho: f64,
    pub c: f64,
    pub vacuous: bool,
    pub dist0_sq: f64,
    /// `(k, theorem1_bound(k))`.
    pub theorem1: Vec<(usize, f64)>,
    /// `(k, theorem2_bound(k))`; empty when vacuous.
    pub theorem2: Vec<(usize, f64)>,
    pub predictions: Vec<Prediction>,
}

pub fn bound_report(
    consts: &ProblemConstants,
    dist0_sq: f64,
    k_max: usize,
    queries: &[(f64, f64, Target)],
) -> Result<BoundReport> {
    let vacuous = consts.is_vacuous();
    let theorem1 = (1..=k_max).map(|k| (k, theorem1_bound(consts, k, dist0_sq))).collect();
    let theorem2 = if vacuous {
        Vec::new()
    } else {
        (1..=k_max).map(|k| Ok((k, theorem2_bound(consts, k, dist0_sq)?))).collect::<Result<_>>()?
    };
    let predictions = queries
        .iter()
        .map(|&(eps, delta, target)| {
            let iterations = match corollary_iterations(consts, eps, delta, dist0_sq, target) {
                Ok(k) => Some(k),
                Err(Error::VacuousBound { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(Prediction { eps, delta, target, iterations })
        })
        .collect::<Result<_>>()?;
    Ok(BoundReport { rho: consts.rho(), c: consts.c(), vacuous, dist0_sq, theorem1, theorem2, predictions })
}
