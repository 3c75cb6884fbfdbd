//! Proximal stochastic Newton-type optimization for regularized finite sums
//!
//! ```text
//! minimize  f(x) = (1/n) sum_i g_i(x) + h(x)
//! ```
//!
//! with smooth per-sample losses `g_i` (squared or logistic, optionally with a
//! ridge term) and `h = l1 ||x||_1 + (l2/2) ||x||^2`.
//!
//! PROXTONE keeps one quadratic model of each `g_i`, anchored where that
//! sample was last refreshed. Every iteration minimizes the averaged model
//! plus `h` (a scaled proximal step), then refreshes one uniformly sampled
//! model at the new point. Both forms of the iteration are implemented
//! ([`Algorithm::Proxtone`], [`Algorithm::ProxtoneSurrogateForm`]) together
//! with the Prox-FG, Prox-SG and Prox-N baselines, the constants and bounds
//! of the convergence theory, and a harness for data, optima, races and
//! rate fits.
//!
//! ```
//! use proxtone::harness::{compute_optimum, gen_synthetic, SyntheticSpec};
//! use proxtone::{run, Algorithm, SolverConfig, Vector};
//!
//! let spec: SyntheticSpec = "n=200,p=8,loss=logistic,l1=0.001,l2=0.01,seed=1".parse()?;
//! let (problem, _planted) = gen_synthetic(&spec)?;
//! let config = SolverConfig::new(&problem, Algorithm::Proxtone)?.with_epochs(&problem, 30);
//! let trace = run(&problem, &config, &Vector::zeros(problem.p()))?;
//!
//! let optimum = compute_optimum(&problem)?;
//! assert!(trace.last().objective - optimum.f < 1e-8);
//! # Ok::<(), proxtone::Error>(())
//! ```
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doc-tests of this crate.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objectives;
pub mod problem;
pub mod regularizers;
pub mod solvers;
pub mod subproblem;
pub mod surrogates;

pub use constants::{compute_constants, ProblemConstants};
pub use error::{Error, Result};
pub use linalg::{CurvatureMatrix, SpectralBand, Vector};
pub use objectives::{Dataset, LossFamily, LossKind, Sample};
pub use problem::Problem;
pub use regularizers::Regularizer;
pub use solvers::{run, Algorithm, SolveTrace, SolverConfig, StepPolicy};
pub use surrogates::{CurvatureKind, CurvatureStrategy};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problem.md")]
    mod problem {}
    #[doc = include_str!("../../../book/src/proximal.md")]
    mod proximal {}
    #[doc = include_str!("../../../book/src/surrogates.md")]
    mod surrogates {}
    #[doc = include_str!("../../../book/src/proxtone.md")]
    mod proxtone {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
