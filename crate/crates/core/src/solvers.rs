//! PROXTONE in both of its forms, plus the proximal baselines it is compared
//! against.
//!
//! Each run is single-threaded and fully determined by the problem, the
//! config (including the seed) and `x0`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::ArrayView1;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{clamp_to_band, dist_sq, CurvatureMatrix, Vector};
use crate::objectives::full_hessian;
use crate::problem::Problem;
use crate::subproblem::{default_tolerance, solve_direction, SubproblemSpec, DEFAULT_MAX_INNER};
use crate::surrogates::{CurvatureKind, CurvatureStrategy, IndexSampler, SamplingScheme, SurrogateStore};

/// Objective growth beyond `f(x0)` treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Search direction from the aggregated surrogate, then a step.
    Proxtone,
    /// Next iterate as the minimizer of the surrogate mean plus `h`.
    ProxtoneSurrogateForm,
    ProxFg,
    ProxSg,
    ProxN,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Proxtone, Algorithm::ProxtoneSurrogateForm, Algorithm::ProxFg, Algorithm::ProxSg, Algorithm::ProxN];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Proxtone => "proxtone",
            Algorithm::ProxtoneSurrogateForm => "proxtone_surrogate_form",
            Algorithm::ProxFg => "prox_fg",
            Algorithm::ProxSg => "prox_sg",
            Algorithm::ProxN => "prox_n",
        }
    }

    /// One iteration touches a single component.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Algorithm::Proxtone | Algorithm::ProxtoneSurrogateForm | Algorithm::ProxSg)
    }

    pub fn is_newton_type(self) -> bool {
        matches!(self, Algorithm::Proxtone | Algorithm::ProxtoneSurrogateForm | Algorithm::ProxN)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy {
    /// `t_k = 1`. Newton-type methods only.
    Unit,
    /// Constant `t_k` (Newton-type) or constant `alpha` (gradient methods).
    Fixed(f64),
    /// `alpha_k = c / (k + offset)`. Prox-SG only.
    ProxSgDecay { c: f64, offset: f64 },
}

impl StepPolicy {
    /// `alpha_k = c / (k + 1)`.
    pub fn prox_sg_decay(c: f64) -> Self {
        StepPolicy::ProxSgDecay { c, offset: 1.0 }
    }

    fn at(self, k: usize) -> f64 {
        match self {
            StepPolicy::Unit => 1.0,
            StepPolicy::Fixed(t) => t,
            StepPolicy::ProxSgDecay { c, offset } => c / (k as f64 + offset),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceCadence {
    /// Every iteration when `n <= 1000`; otherwise every `ceil(n/100)`
    /// iterations plus each epoch boundary.
    Auto,
    Every(usize),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub max_iterations: usize,
    pub seed: u64,
    pub curvature: CurvatureStrategy,
    pub step_policy: StepPolicy,
    /// Subproblem tolerance; `None` scales `1e-10` by `||v||`.
    pub inner_tolerance: Option<f64>,
    pub max_inner: usize,
    pub cadence: TraceCadence,
    pub sampling: SamplingScheme,
    /// Known minimizer, for distance records.
    pub reference: Option<Vector>,
    /// Keep a copy of `x^k` in every record.
    pub record_iterates: bool,
    /// Gradient-mapping norm under which the final iterate counts as converged.
    pub tolerance: f64,
    /// Stop as soon as `tolerance` is met (checked each pass for full-gradient
    /// methods, each epoch for stochastic ones).
    pub early_stop: bool,
}

impl SolverConfig {
    /// Defaults for `algorithm` on `problem`: exact-Hessian curvature with the
    /// default band, unit steps for Newton-type methods, `1/L` for Prox-FG
    /// and `alpha_k = 1/(L_max (k/n + 1))` for Prox-SG.
    pub fn new(problem: &Problem, algorithm: Algorithm) -> Result<Self> {
        let curvature = CurvatureStrategy::with_default_band(problem, CurvatureKind::ExactHessian)?;
        let lips = problem.lipschitz_constants();
        let l_max = lips.iter().copied().fold(0.0f64, f64::max);
        let n = problem.n() as f64;
        let step_policy = match algorithm {
            Algorithm::ProxFg => StepPolicy::Fixed(1.0 / problem.lipschitz_average()),
            Algorithm::ProxSg => StepPolicy::ProxSgDecay { c: n / l_max, offset: n },
            _ => StepPolicy::Unit,
        };
        Ok(Self {
            algorithm,
            max_iterations: if algorithm.is_stochastic() { 20 * problem.n() } else { 50 },
            seed: 0,
            curvature,
            step_policy,
            inner_tolerance: None,
            max_inner: DEFAULT_MAX_INNER,
            cadence: TraceCadence::Auto,
            sampling: SamplingScheme::Uniform,
            reference: None,
            record_iterates: false,
            tolerance: 1e-8,
            early_stop: false,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iterations(mut self, k: usize) -> Self {
        self.max_iterations = k;
        self
    }

    /// Sets `max_iterations` to `epochs` passes over the data.
    pub fn with_epochs(mut self, problem: &Problem, epochs: usize) -> Self {
        self.max_iterations = if self.algorithm.is_stochastic() { epochs * problem.n() } else { epochs };
        self
    }

    pub fn with_curvature(mut self, curvature: CurvatureStrategy) -> Self {
        self.curvature = curvature;
        self
    }

    pub fn with_step_policy(mut self, policy: StepPolicy) -> Self {
        self.step_policy = policy;
        self
    }

    pub fn with_inner_tolerance(mut self, tol: f64) -> Self {
        self.inner_tolerance = Some(tol);
        self
    }

    pub fn with_cadence(mut self, cadence: TraceCadence) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn with_reference(mut self, x_star: Vector) -> Self {
        self.reference = Some(x_star);
        self
    }

    pub fn with_record_iterates(mut self, on: bool) -> Self {
        self.record_iterates = on;
        self
    }

    pub fn with_early_stop(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.early_stop = true;
        self
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        let newton = self.algorithm.is_newton_type();
        match self.step_policy {
            StepPolicy::Unit if !newton => {
                return Err(Error::InvalidConfig(format!("unit step policy is for Newton-type methods, not {}", self.algorithm)))
            }
            StepPolicy::Fixed(t) if !(t > 0.0) || !t.is_finite() => return Err(Error::InvalidStep(t)),
            StepPolicy::Fixed(_) if self.algorithm == Algorithm::ProxtoneSurrogateForm => {
                return Err(Error::InvalidConfig("the surrogate form has no step size".into()))
            }
            StepPolicy::ProxSgDecay { .. } if self.algorithm != Algorithm::ProxSg => {
                return Err(Error::InvalidConfig(format!("decaying steps are for prox_sg, not {}", self.algorithm)))
            }
            StepPolicy::ProxSgDecay { c, offset } if !(c > 0.0) || !(offset > 0.0) => {
                return Err(Error::InvalidConfig(format!("decay needs c > 0 and offset > 0, got c={c}, offset={offset}")))
            }
            _ => {}
        }
        if let TraceCadence::Every(0) = self.cadence {
            return Err(Error::InvalidConfig("trace cadence must be at least 1".into()));
        }
        if let Some(tol) = self.inner_tolerance {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig(format!("inner tolerance must be positive, got {tol}")));
            }
        }
        if let Some(r) = &self.reference {
            check_dim(problem.p(), r.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Passes over the data: `k/n` for stochastic methods, `k` otherwise.
    pub epoch: f64,
    /// True composite objective `f(x^k)`.
    pub objective: f64,
    /// `||x^k - x*||` when a reference point is configured.
    pub dist: Option<f64>,
    /// Component refreshed (or sampled) to produce `x^k`.
    pub refreshed: Option<usize>,
    pub inner_iters: usize,
    pub elapsed_s: f64,
    pub iterate: Option<Vector>,
}

#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub algorithm: Algorithm,
    pub records: Vec<TraceRecord>,
    pub x0: Vector,
    pub x_final: Vector,
    pub converged: bool,
    /// Subproblem solves that hit the inner cap.
    pub inner_cap_hits: usize,
}

impl SolveTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }
}

/// State exposed to a PROXTONE observer once `x^{k+1}` is known and before
/// the sampled entry is refreshed, so `store` still describes `G^k`.
pub struct ProxtoneStep<'a> {
    pub k: usize,
    pub x_prev: &'a Vector,
    pub x_next: &'a Vector,
    pub store: &'a SurrogateStore,
    pub problem: &'a Problem,
}

struct Recorder {
    n: usize,
    stochastic: bool,
    cadence: TraceCadence,
    reference: Option<Vector>,
    record_iterates: bool,
    start: Instant,
    f0: f64,
    records: Vec<TraceRecord>,
}

impl Recorder {
    fn new(problem: &Problem, config: &SolverConfig, x0: &Vector) -> Result<Self> {
        let f0 = problem.objective(x0.view())?;
        if !f0.is_finite() {
            return Err(Error::DivergenceDetected { iteration: 0, value: f0 });
        }
        let mut rec = Self {
            n: problem.n(),
            stochastic: config.algorithm.is_stochastic(),
            cadence: config.cadence,
            reference: config.reference.clone(),
            record_iterates: config.record_iterates,
            start: Instant::now(),
            f0,
            records: Vec::new(),
        };
        rec.push(0, f0, x0, None, 0);
        Ok(rec)
    }

    fn due(&self, k: usize, last: bool) -> bool {
        if last || !self.stochastic {
            return true;
        }
        match self.cadence {
            TraceCadence::Every(c) => k.is_multiple_of(c),
            TraceCadence::Auto if self.n <= 1000 => true,
            TraceCadence::Auto => k.is_multiple_of(self.n.div_ceil(100)) || k.is_multiple_of(self.n),
        }
    }

    fn push(&mut self, k: usize, objective: f64, x: &Vector, refreshed: Option<usize>, inner_iters: usize) {
        let epoch = if self.stochastic { k as f64 / self.n as f64 } else { k as f64 };
        self.records.push(TraceRecord {
            k,
            epoch,
            objective,
            dist: self.reference.as_ref().map(|r| dist_sq(x.view(), r.view()).sqrt()),
            refreshed,
            inner_iters,
            elapsed_s: self.start.elapsed().as_secs_f64(),
            iterate: self.record_iterates.then(|| x.clone()),
        });
    }

    /// Records `x^k` if the cadence asks for it.
    fn observe(
        &mut self,
        problem: &Problem,
        k: usize,
        x: &Vector,
        refreshed: Option<usize>,
        inner_iters: usize,
        last: bool,
    ) -> Result<()> {
        if !self.due(k, last) {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::DivergenceDetected { iteration: k, value: f64::NAN });
            }
            return Ok(());
        }
        let f = problem.objective(x.view())?;
        if !f.is_finite() || f - self.f0 > DIVERGENCE_THRESHOLD {
            return Err(Error::DivergenceDetected { iteration: k, value: f });
        }
        self.push(k, f, x, refreshed, inner_iters);
        Ok(())
    }
}

fn is_epoch_boundary(config: &SolverConfig, problem: &Problem, k: usize) -> bool {
    !config.algorithm.is_stochastic() || k.is_multiple_of(problem.n())
}

fn finish(
    problem: &Problem,
    config: &SolverConfig,
    rec: Recorder,
    x0: &Vector,
    x: Vector,
    inner_cap_hits: usize,
) -> Result<SolveTrace> {
    let converged = problem.gradient_mapping_norm(x.view())? <= config.tolerance;
    Ok(SolveTrace {
        algorithm: config.algorithm,
        records: rec.records,
        x0: x0.clone(),
        x_final: x,
        converged,
        inner_cap_hits,
    })
}

/// Dispatches on `config.algorithm`.
pub fn run(problem: &Problem, config: &SolverConfig, x0: &Vector) -> Result<SolveTrace> {
    match config.algorithm {
        Algorithm::Proxtone | Algorithm::ProxtoneSurrogateForm => run_proxtone(problem, config, x0),
        _ => run_baseline(problem, config, x0),
    }
}

pub fn run_proxtone(problem: &Problem, config: &SolverConfig, x0: &Vector) -> Result<SolveTrace> {
    run_proxtone_observed(problem, config, x0, |_| Ok(()))
}

/// PROXTONE with a callback after every step.
pub fn run_proxtone_observed<F>(problem: &Problem, config: &SolverConfig, x0: &Vector, mut observer: F) -> Result<SolveTrace>
where
    F: FnMut(&ProxtoneStep) -> Result<()>,
{
    if !matches!(config.algorithm, Algorithm::Proxtone | Algorithm::ProxtoneSurrogateForm) {
        return Err(Error::InvalidConfig(format!("{} is not a PROXTONE variant", config.algorithm)));
    }
    config.validate(problem)?;
    check_dim(problem.p(), x0.len())?;
    let surrogate_form = config.algorithm == Algorithm::ProxtoneSurrogateForm;
    let reg = &problem.regularizer;
    let strategy = &config.curvature;

    let mut store = SurrogateStore::init(problem, x0, strategy)?;
    let mut sampler = IndexSampler::new(problem.n(), config.seed, config.sampling);
    let mut rec = Recorder::new(problem, config, x0)?;
    let mut x = x0.clone();
    let mut inner_cap_hits = 0;

    for k in 0..config.max_iterations {
        let (x_next, inner_iters) = if surrogate_form {
            let (b, h) = store.surrogate_quadratic()?;
            let origin = Vector::zeros(problem.p());
            let spec = subproblem_spec(config, b.view(), &h, origin.view(), reg).with_initial_direction(x.view());
            let r = solve_direction(&spec)?;
            inner_cap_hits += usize::from(!r.converged);
            (r.direction, r.inner_iters)
        } else {
            let h = store.aggregate_curvature();
            let v = store.linear_term(x.view())?;
            let spec = subproblem_spec(config, v.view(), &h, x.view(), reg);
            let r = solve_direction(&spec)?;
            inner_cap_hits += usize::from(!r.converged);
            let mut next = x.clone();
            next.scaled_add(config.step_policy.at(k), &r.direction);
            (next, r.inner_iters)
        };

        observer(&ProxtoneStep { k, x_prev: &x, x_next: &x_next, store: &store, problem })?;

        let j = sampler.sample();
        store.refresh(problem, j, &x_next, strategy)?;
        x = x_next;

        let last = k + 1 == config.max_iterations;
        let stop = config.early_stop
            && is_epoch_boundary(config, problem, k + 1)
            && problem.gradient_mapping_norm(x.view())? <= config.tolerance;
        rec.observe(problem, k + 1, &x, Some(j), inner_iters, last || stop)?;
        if stop {
            break;
        }
    }
    finish(problem, config, rec, x0, x, inner_cap_hits)
}

fn subproblem_spec<'a>(
    config: &SolverConfig,
    v: ArrayView1<'a, f64>,
    h: &'a CurvatureMatrix,
    base: ArrayView1<'a, f64>,
    reg: &'a crate::regularizers::Regularizer,
) -> SubproblemSpec<'a> {
    SubproblemSpec::new(v, h, base, reg)
        .with_tolerance(config.inner_tolerance.unwrap_or_else(|| default_tolerance(v)))
        .with_max_inner(config.max_inner)
}

/// Prox-FG, Prox-SG or Prox-N.
pub fn run_baseline(problem: &Problem, config: &SolverConfig, x0: &Vector) -> Result<SolveTrace> {
    config.validate(problem)?;
    check_dim(problem.p(), x0.len())?;
    let reg = &problem.regularizer;
    let mut rec = Recorder::new(problem, config, x0)?;
    let mut x = x0.clone();
    let mut sampler = IndexSampler::new(problem.n(), config.seed, config.sampling);
    let mut inner_cap_hits = 0;

    for k in 0..config.max_iterations {
        let mut refreshed = None;
        let mut inner_iters = 0;
        match config.algorithm {
            Algorithm::ProxFg => {
                let alpha = config.step_policy.at(k);
                let (_, grad) = problem.smooth_value_grad(x.view())?;
                x.scaled_add(-alpha, &grad);
                x = reg.prox(x.view(), alpha)?;
            }
            Algorithm::ProxSg => {
                let alpha = config.step_policy.at(k);
                let i = sampler.sample();
                let (_, grad) = problem.loss.value_grad(problem.dataset.sample(i), x.view())?;
                x.scaled_add(-alpha, &grad);
                x = reg.prox(x.view(), alpha)?;
                refreshed = Some(i);
            }
            Algorithm::ProxN => {
                let (_, grad) = problem.smooth_value_grad(x.view())?;
                let hess = full_hessian(&problem.loss, &problem.dataset, x.view())?;
                let h = clamp_to_band(&CurvatureMatrix::dense(hess)?, config.curvature.band);
                let spec = subproblem_spec(config, grad.view(), &h, x.view(), reg);
                let r = solve_direction(&spec)?;
                inner_cap_hits += usize::from(!r.converged);
                inner_iters = r.inner_iters;
                x.scaled_add(config.step_policy.at(k), &r.direction);
            }
            other => return Err(Error::InvalidConfig(format!("{other} is not a baseline"))),
        }
        let last = k + 1 == config.max_iterations;
        let stop = config.early_stop
            && is_epoch_boundary(config, problem, k + 1)
            && problem.gradient_mapping_norm(x.view())? <= config.tolerance;
        rec.observe(problem, k + 1, &x, refreshed, inner_iters, last || stop)?;
        if stop {
            break;
        }
    }
    finish(problem, config, rec, x0, x, inner_cap_hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SpectralBand;
    use crate::objectives::{Dataset, LossFamily, Sample};
    use crate::regularizers::Regularizer;
    use ndarray::array;

    fn one_d(reg: Regularizer) -> Problem {
        // g(x) = (x - 0)^2 / 2 with a = 1, b = 0
        let ds = Dataset::new(vec![Sample::new(array![1.0], 0.0)]).unwrap();
        Problem::new(ds, LossFamily::squared(), reg)
    }

    #[test]
    fn prox_fg_one_step_to_zero() {
        let problem = one_d(Regularizer::l1(1.0).unwrap());
        let config = SolverConfig::new(&problem, Algorithm::ProxFg)
            .unwrap()
            .with_step_policy(StepPolicy::Fixed(1.0))
            .with_max_iterations(1);
        let trace = run(&problem, &config, &array![3.0]).unwrap();
        assert_eq!(trace.x_final, array![0.0]);
        assert_eq!(trace.records.len(), 2);
    }

    #[test]
    fn newton_on_quadratic_is_one_step() {
        let ds = Dataset::new(vec![Sample::new(array![2.0, 1.0], 3.0)]).unwrap();
        let problem = Problem::new(ds, LossFamily::squared().with_ridge(0.5).unwrap(), Regularizer::zero());
        let config = SolverConfig::new(&problem, Algorithm::Proxtone)
            .unwrap()
            .with_curvature(CurvatureStrategy::new(CurvatureKind::ExactHessian, SpectralBand::new(1e-6, 100.0).unwrap()))
            .with_max_iterations(1);
        let trace = run(&problem, &config, &array![0.0, 0.0]).unwrap();
        let (_, g) = problem.smooth_value_grad(trace.x_final.view()).unwrap();
        assert!(crate::linalg::norm(g.view()) <= 1e-9);
    }

    #[test]
    fn step_policy_validation() {
        let problem = one_d(Regularizer::zero());
        let base = SolverConfig::new(&problem, Algorithm::ProxFg).unwrap();
        assert!(base.clone().with_step_policy(StepPolicy::Unit).validate(&problem).is_err());
        assert!(base.clone().with_step_policy(StepPolicy::prox_sg_decay(1.0)).validate(&problem).is_err());
        let sg = SolverConfig::new(&problem, Algorithm::ProxSg).unwrap();
        assert!(sg.validate(&problem).is_ok());
        assert!(sg.with_step_policy(StepPolicy::Fixed(0.0)).validate(&problem).is_err());
        let alg2 = SolverConfig::new(&problem, Algorithm::ProxtoneSurrogateForm).unwrap();
        assert!(alg2.with_step_policy(StepPolicy::Fixed(0.5)).validate(&problem).is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("prox-sg".parse::<Algorithm>().unwrap(), Algorithm::ProxSg);
        assert!("sgd".parse::<Algorithm>().is_err());
    }

    #[test]
    fn auto_cadence_thins_large_problems() {
        let rows: Vec<Sample> = (0..2000).map(|i| Sample::new(array![1.0, (i % 7) as f64 / 7.0], 1.0)).collect();
        let problem = Problem::new(Dataset::new(rows).unwrap(), LossFamily::squared(), Regularizer::ridge(0.1).unwrap());
        let config = SolverConfig::new(&problem, Algorithm::ProxSg).unwrap().with_max_iterations(4000);
        let trace = run(&problem, &config, &array![0.0, 0.0]).unwrap();
        // every 20 iterations, k = 0 included
        assert_eq!(trace.records.len(), 201);
        assert!(trace.records.windows(2).all(|w| w[0].k < w[1].k));
        assert!(trace.records.iter().any(|r| r.k == 2000 && r.epoch == 1.0));
    }
}
