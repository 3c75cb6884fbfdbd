//! High-precision minimizer of a composite problem, with a certificate.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{clamp_to_band, norm, CurvatureMatrix, SpectralBand, Vector};
use crate::objectives::full_hessian;
use crate::problem::Problem;
use crate::subproblem::{solve_direction, SubproblemSpec};

/// Composite gradient mapping norm the oracle must reach.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OracleMethod {
    /// Proximal Newton with backtracking on the composite objective.
    ProxNewton,
    /// FISTA with gradient-based restart.
    AcceleratedGradient,
}

impl OracleMethod {
    pub fn name(self) -> &'static str {
        match self {
            OracleMethod::ProxNewton => "prox_newton",
            OracleMethod::AcceleratedGradient => "accelerated_gradient",
        }
    }
}

impl fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OracleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prox_newton" => Ok(OracleMethod::ProxNewton),
            "accelerated_gradient" => Ok(OracleMethod::AcceleratedGradient),
            _ => Err(Error::InvalidConfig(format!("unknown oracle method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimumCertificate {
    pub x: Vector,
    pub f: f64,
    /// Composite gradient mapping norm at `x` (step `1/L_avg`).
    pub certificate: f64,
    pub method: OracleMethod,
    pub iterations: usize,
}

impl OptimumCertificate {
    /// Plain-text cache: one `key value...` line per field.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let xs: Vec<String> = self.x.iter().map(|v| format!("{v:e}")).collect();
        let text = format!(
            "method {}\nf {:e}\ncertificate {:e}\niterations {}\nx {}\n",
            self.method,
            self.f,
            self.certificate,
            self.iterations,
            xs.join(" ")
        );
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let (mut method, mut f, mut certificate, mut iterations, mut x) = (None, None, None, None, None);
        for (i, line) in text.lines().enumerate() {
            let err = |m: &str| Error::Parse { line: i + 1, message: m.to_string() };
            let mut parts = line.split_whitespace();
            let Some(key) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            let one = || rest.first().copied().ok_or_else(|| err("missing value"));
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            match key {
                "method" => method = Some(one()?.parse::<OracleMethod>()?),
                "f" => f = Some(num(one()?)?),
                "certificate" => certificate = Some(num(one()?)?),
                "iterations" => iterations = Some(one()?.parse::<usize>().map_err(|_| err("bad count"))?),
                "x" => x = Some(rest.iter().map(|s| num(s)).collect::<Result<Vector>>()?),
                _ => return Err(err("unknown key")),
            }
        }
        let missing = |k: &str| Error::Parse { line: 0, message: format!("missing '{k}'") };
        Ok(Self {
            method: method.ok_or_else(|| missing("method"))?,
            f: f.ok_or_else(|| missing("f"))?,
            certificate: certificate.ok_or_else(|| missing("certificate"))?,
            iterations: iterations.ok_or_else(|| missing("iterations"))?,
            x: x.ok_or_else(|| missing("x"))?,
        })
    }
}

/// Proximal Newton, falling back to accelerated proximal gradient.
pub fn compute_optimum(problem: &Problem) -> Result<OptimumCertificate> {
    match compute_optimum_with(problem, OracleMethod::ProxNewton) {
        Ok(c) => Ok(c),
        Err(Error::OracleFailed { certificate: first, .. }) => {
            compute_optimum_with(problem, OracleMethod::AcceleratedGradient).map_err(|e| match e {
                Error::OracleFailed { certificate, iterations } => {
                    Error::OracleFailed { certificate: certificate.min(first), iterations }
                }
                other => other,
            })
        }
        Err(e) => Err(e),
    }
}

pub fn compute_optimum_with(problem: &Problem, method: OracleMethod) -> Result<OptimumCertificate> {
    let x0 = Vector::zeros(problem.p());
    let (x, iterations) = match method {
        OracleMethod::ProxNewton => prox_newton(problem, x0)?,
        OracleMethod::AcceleratedGradient => accelerated_gradient(problem, x0)?,
    };
    let certificate = problem.gradient_mapping_norm(x.view())?;
    if !(certificate <= CERTIFICATE_TOLERANCE) {
        return Err(Error::OracleFailed { certificate, iterations });
    }
    Ok(OptimumCertificate { f: problem.objective(x.view())?, x, certificate, method, iterations })
}

const NEWTON_MAX_ITERS: usize = 100;
const AGD_MAX_ITERS: usize = 200_000;

fn prox_newton(problem: &Problem, mut x: Vector) -> Result<(Vector, usize)> {
    let reg = &problem.regularizer;
    let l_max = problem.lipschitz_constants().into_iter().fold(0.0, f64::max);
    let band = SpectralBand::new(1e-10 * l_max.max(1.0), f64::MAX / 4.0)?;
    let mut fx = problem.objective(x.view())?;
    for it in 0..NEWTON_MAX_ITERS {
        if problem.gradient_mapping_norm(x.view())? <= CERTIFICATE_TOLERANCE {
            return Ok((x, it));
        }
        let (_, grad) = problem.smooth_value_grad(x.view())?;
        let h = clamp_to_band(&CurvatureMatrix::dense(full_hessian(&problem.loss, &problem.dataset, x.view())?)?, band);
        let tol = 1e-15 * norm(grad.view()).max(1.0);
        let d = solve_direction(&SubproblemSpec::new(grad.view(), &h, x.view(), reg).with_tolerance(tol))?.direction;
        if norm(d.view()) == 0.0 {
            return Ok((x, it));
        }
        // Armijo on F with the model decrease grad^T d + h(x + d) - h(x)
        let decrease = grad.dot(&d) + reg.value((&x + &d).view()) - reg.value(x.view());
        let mut t = 1.0;
        loop {
            let trial = &x + &(&d * t);
            let ft = problem.objective(trial.view())?;
            if ft <= fx + 1e-4 * t * decrease.min(0.0) || t < 1e-12 {
                if ft <= fx {
                    x = trial;
                    fx = ft;
                }
                break;
            }
            t *= 0.5;
        }
        if t < 1e-12 {
            // no progress left at this precision
            return Ok((x, it + 1));
        }
    }
    Ok((x, NEWTON_MAX_ITERS))
}

fn accelerated_gradient(problem: &Problem, mut x: Vector) -> Result<(Vector, usize)> {
    let reg = &problem.regularizer;
    let step = 1.0 / problem.lipschitz_average().max(f64::MIN_POSITIVE);
    let mut y = x.clone();
    let mut theta = 1.0f64;
    for it in 0..AGD_MAX_ITERS {
        let (_, gy) = problem.smooth_value_grad(y.view())?;
        let mut z = y.clone();
        z.scaled_add(-step, &gy);
        let x_new = reg.prox(z.view(), step)?;
        let restart = (&y - &x_new).dot(&(&x_new - &x)) > 0.0;
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        if restart {
            theta = 1.0;
            y = x_new.clone();
        } else {
            y = &x_new + &((&x_new - &x) * ((theta - 1.0) / theta_next));
            theta = theta_next;
        }
        x = x_new;
        if it % 10 == 9 && problem.gradient_mapping_norm(x.view())? <= CERTIFICATE_TOLERANCE {
            return Ok((x, it + 1));
        }
    }
    Ok((x, AGD_MAX_ITERS))
}
