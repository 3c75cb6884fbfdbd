//! Empirical linear-rate fits on optimality gaps.

use crate::constants::{theorem1_bound, ProblemConstants};
use crate::error::{Error, Result};
use crate::harness::oracle::OptimumCertificate;
use crate::linalg::dist_sq;
use crate::solvers::SolveTrace;

/// Gaps at or below this are rounding noise and are left out of fits.
pub const GAP_FLOOR: f64 = 1e-13;
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitWindow {
    All,
    /// Inclusive iteration range.
    Iterations(usize, usize),
    /// Inclusive epoch range.
    Epochs(f64, f64),
}

impl FitWindow {
    fn contains(self, k: usize, epoch: f64) -> bool {
        match self {
            FitWindow::All => true,
            FitWindow::Iterations(lo, hi) => (lo..=hi).contains(&k),
            FitWindow::Epochs(lo, hi) => epoch >= lo && epoch <= hi,
        }
    }
}

/// Least-squares line `y = intercept + slope * t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 1 when `y` has no spread.
    pub r_squared: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> LineFit {
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let intercept = my - slope * mt;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LineFit { slope, intercept, r_squared }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// Per-iteration geometric factor `exp(slope)`.
    pub rho_emp: f64,
    pub fit: LineFit,
    pub window: FitWindow,
    pub points_used: usize,
    /// Contraction factor from the problem constants, when supplied.
    pub rho_theory: Option<f64>,
    pub vacuous: Option<bool>,
    /// `(k, f(x^k) - f*, theorem1_bound(k))` for `k >= 1`, when constants
    /// are supplied.
    pub pairs: Vec<(usize, f64, f64)>,
}

/// Fits `log(f(x^k) - f*)` against `k` over the records inside `window`.
pub fn fit_rate(
    trace: &SolveTrace,
    oracle: &OptimumCertificate,
    window: FitWindow,
    consts: Option<&ProblemConstants>,
) -> Result<RateReport> {
    let points: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| window.contains(r.k, r.epoch))
        .map(|r| (r.k as f64, r.objective - oracle.f))
        .filter(|&(_, gap)| gap > GAP_FLOOR)
        .map(|(k, gap)| (k, gap.ln()))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData { usable: points.len(), required: MIN_FIT_POINTS });
    }
    let fit = fit_line(&points);
    let (rho_theory, vacuous, pairs) = match consts {
        Some(c) => {
            let d0 = dist_sq(trace.x0.view(), oracle.x.view());
            let pairs = trace
                .records
                .iter()
                .filter(|r| r.k >= 1)
                .map(|r| (r.k, r.objective - oracle.f, theorem1_bound(c, r.k, d0)))
                .collect();
            (Some(c.rho()), Some(c.is_vacuous()), pairs)
        }
        None => (None, None, Vec::new()),
    };
    Ok(RateReport { rho_emp: fit.slope.exp(), fit, window, points_used: points.len(), rho_theory, vacuous, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::oracle::OracleMethod;
    use crate::solvers::{Algorithm, TraceRecord};
    use ndarray::array;

    fn trace_from(gaps: &[f64]) -> SolveTrace {
        SolveTrace {
            algorithm: Algorithm::Proxtone,
            records: gaps
                .iter()
                .enumerate()
                .map(|(k, g)| TraceRecord {
                    k,
                    epoch: k as f64,
                    objective: *g,
                    dist: None,
                    refreshed: None,
                    inner_iters: 0,
                    elapsed_s: 0.0,
                    iterate: None,
                })
                .collect(),
            x0: array![0.0],
            x_final: array![0.0],
            converged: false,
            inner_cap_hits: 0,
        }
    }

    fn oracle() -> OptimumCertificate {
        OptimumCertificate { x: array![0.0], f: 0.0, certificate: 0.0, method: OracleMethod::ProxNewton, iterations: 0 }
    }

    #[test]
    fn geometric_trace() {
        let gaps: Vec<f64> = (0..30).map(|k| 0.5f64.powi(k)).collect();
        let r = fit_rate(&trace_from(&gaps), &oracle(), FitWindow::All, None).unwrap();
        assert!((r.rho_emp - 0.5).abs() < 1e-10);
        assert!((r.fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_trace() {
        let r = fit_rate(&trace_from(&[0.25; 20]), &oracle(), FitWindow::All, None).unwrap();
        assert!(r.fit.slope.abs() < 1e-15);
        assert_eq!(r.rho_emp, 1.0);
    }

    #[test]
    fn floor_and_window() {
        let gaps: Vec<f64> = (0..40).map(|k| if k <= 12 { 0.1f64.powi(k) } else { 1e-14 }).collect();
        let r = fit_rate(&trace_from(&gaps), &oracle(), FitWindow::All, None).unwrap();
        assert_eq!(r.points_used, 13);
        assert!(matches!(
            fit_rate(&trace_from(&gaps), &oracle(), FitWindow::Iterations(5, 12), None),
            Err(Error::InsufficientData { usable: 8, .. })
        ));
    }
}
