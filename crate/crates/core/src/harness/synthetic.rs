//! Seeded synthetic problems with a planted parameter.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{norm, SpectralBand, Vector};
use crate::objectives::{sigmoid, Dataset, LossFamily, LossKind, Sample};
use crate::problem::Problem;
use crate::regularizers::Regularizer;
use crate::surrogates::{CurvatureKind, CurvatureStrategy};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub loss: LossKind,
    pub l1: f64,
    pub l2: f64,
    /// Ridge folded into each component.
    pub tau: f64,
    /// Overall feature scale (row norm when `normalize_rows` is set).
    pub feature_scale: f64,
    /// Target ratio between the largest and smallest column variance.
    pub condition: f64,
    /// Standard deviation of the planted parameter's entries.
    pub signal: f64,
    /// Standard deviation of additive target noise (squared loss only).
    pub noise: f64,
    pub normalize_rows: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 100,
            p: 10,
            loss: LossKind::Squared,
            l1: 0.0,
            l2: 0.0,
            tau: 0.0,
            feature_scale: 1.0,
            condition: 1.0,
            signal: 1.0,
            noise: 0.0,
            normalize_rows: false,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.p == 0 {
            return bad(format!("need n, p >= 1, got n={}, p={}", self.n, self.p));
        }
        for (name, v) in [("scale", self.feature_scale), ("cond", self.condition)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("signal", self.signal), ("noise", self.noise), ("tau", self.tau)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Regularizer::new(self.l1, self.l2)?;
        Ok(())
    }
}

/// Parses `key=value` pairs separated by commas, e.g.
/// `n=1000,p=20,loss=logistic,l1=1e-3,l2=1e-2,seed=7`. Unset keys keep their
/// defaults.
impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got '{part}'")))?;
            let bad = || Error::InvalidConfig(format!("bad value for {key}: '{value}'"));
            let num = || value.parse::<f64>().map_err(|_| bad());
            match key.trim() {
                "n" => spec.n = value.parse().map_err(|_| bad())?,
                "p" => spec.p = value.parse().map_err(|_| bad())?,
                "loss" => {
                    spec.loss = match value {
                        "squared" => LossKind::Squared,
                        "logistic" => LossKind::Logistic,
                        _ => return Err(Error::UnsupportedLoss(value.into())),
                    }
                }
                "l1" => spec.l1 = num()?,
                "l2" => spec.l2 = num()?,
                "tau" => spec.tau = num()?,
                "scale" => spec.feature_scale = num()?,
                "cond" => spec.condition = num()?,
                "signal" => spec.signal = num()?,
                "noise" => spec.noise = num()?,
                "normalize" => spec.normalize_rows = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                other => return Err(Error::InvalidConfig(format!("unknown synthetic key '{other}'"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let loss = match self.loss {
            LossKind::Squared => "squared",
            LossKind::Logistic => "logistic",
        };
        write!(
            f,
            "n={},p={},loss={loss},l1={},l2={},tau={},scale={},cond={},signal={},noise={},normalize={},seed={}",
            self.n,
            self.p,
            self.l1,
            self.l2,
            self.tau,
            self.feature_scale,
            self.condition,
            self.signal,
            self.noise,
            self.normalize_rows,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub x_bar: Vector,
}

/// Draws features, a planted `x_bar` and targets from one seeded stream.
///
/// Column `j` is scaled by `condition^(-j / (2 (p - 1)))` so the column
/// variances span the requested ratio. Squared-loss targets are
/// `a^T x_bar + noise`; logistic labels are `+1` with probability
/// `sigmoid(a^T x_bar)`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(Problem, Planted)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = spec.p;
    let col_scale: Vec<f64> = (0..p)
        .map(|j| if p > 1 { spec.condition.powf(-(j as f64) / (2.0 * (p - 1) as f64)) } else { 1.0 })
        .collect();
    let x_bar: Vector = (0..p).map(|_| spec.signal * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut samples = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut a: Vector = (0..p).map(|j| col_scale[j] * rng.sample::<f64, _>(StandardNormal)).collect();
        if spec.normalize_rows {
            let len = norm(a.view());
            if len > 0.0 {
                a /= len;
            }
        }
        a *= spec.feature_scale;
        let z = a.dot(&x_bar);
        let target = match spec.loss {
            LossKind::Squared => z + spec.noise * rng.sample::<f64, _>(StandardNormal),
            LossKind::Logistic => {
                if rng.random::<f64>() < sigmoid(z) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        samples.push(Sample::new(a, target));
    }
    let loss = LossFamily::new(spec.loss, spec.tau)?;
    let reg = Regularizer::new(spec.l1, spec.l2)?;
    Ok((Problem::new(Dataset::new(samples)?, loss, reg), Planted { x_bar }))
}

/// Spec of the problem on which the contraction factor is below one:
/// squared loss on unit-norm rows (`L_i = 1`), `l2 = 2`, a small `l1`.
pub fn engineered_spec(n: usize, p: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n,
        p,
        loss: LossKind::Squared,
        l1: 0.1,
        l2: 2.0,
        signal: 2.0,
        noise: 0.1,
        normalize_rows: true,
        seed,
        ..SyntheticSpec::default()
    }
}

/// Engineered problem plus its curvature strategy, `H_i = I` from the
/// one-point band `[1, 1]`. With `M = L_max = m = 1` and `mu_h = 2` this
/// gives `rho = 1 - 3/(5n)`.
///
/// The same band also pins an exact-Hessian strategy to `I`, since every
/// component Hessian `a a^T` has spectrum `{0, 1}`.
pub fn engineered_problem(n: usize, p: usize, seed: u64, kind: CurvatureKind) -> Result<(Problem, CurvatureStrategy)> {
    let (problem, _) = gen_synthetic(&engineered_spec(n, p, seed))?;
    Ok((problem, CurvatureStrategy::new(kind, SpectralBand::new(1.0, 1.0)?)))
}
