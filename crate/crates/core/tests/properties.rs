use std::sync::Arc;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use proxtone::constants::{theorem1_bound, ProblemConstants};
use proxtone::linalg::{
    clamp_spectrum, norm, quad_form, sym_solve, CurvatureMatrix, SpectralBand, Vector,
};
use proxtone::objectives::{LossFamily, Sample};
use proxtone::regularizers::Regularizer;
use proxtone::subproblem::{solve_direction, SubproblemSpec};

fn vector(p: usize, scale: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-scale..scale, p).prop_map(Array1::from)
}

fn symmetric(p: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0..3.0f64, p * p).prop_map(move |v| {
        let a = Array2::from_shape_vec((p, p), v).unwrap();
        (&a + &a.t()) * 0.5
    })
}

/// `B B^T + shift I`, positive definite.
fn spd(p: usize) -> impl Strategy<Value = Array2<f64>> {
    (prop::collection::vec(-1.0..1.0f64, p * p), 0.05..2.0f64).prop_map(move |(v, shift)| {
        let b = Array2::from_shape_vec((p, p), v).unwrap();
        let mut a = b.dot(&b.t());
        a.diag_mut().mapv_inplace(|d| d + shift);
        a
    })
}

fn regularizer() -> impl Strategy<Value = Regularizer> {
    (0usize..4, 0.01..2.0f64, 0.01..2.0f64).prop_map(|(kind, l1, l2)| match kind {
        0 => Regularizer::zero(),
        1 => Regularizer::l1(l1).unwrap(),
        2 => Regularizer::ridge(l2).unwrap(),
        _ => Regularizer::elastic_net(l1, l2).unwrap(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn clamp_keeps_rayleigh_quotients_in_band(
        (a, u) in (1usize..8).prop_flat_map(|p| (symmetric(p), vector(p, 1.0))),
        lo in 0.01..1.0f64,
        width in 0.0..5.0f64,
    ) {
        prop_assume!(norm(u.view()) > 1e-3);
        let hi = lo + width;
        let h = clamp_spectrum(&CurvatureMatrix::dense(a).unwrap(), lo, hi).unwrap();
        let u = &u / norm(u.view());
        let q = quad_form(&h, u.view()).unwrap();
        prop_assert!(q >= lo - 1e-8 && q <= hi + 1e-8, "q = {q}, band [{lo}, {hi}]");
    }

    #[test]
    fn sym_solve_round_trip(
        (a, v) in (1usize..=64).prop_flat_map(|p| (spd(p), vector(p, 5.0))),
    ) {
        prop_assume!(norm(v.view()) > 1e-6);
        let h = CurvatureMatrix::dense(a).unwrap();
        let x = sym_solve(&h, v.view()).unwrap();
        let back = h.apply(x.view()).unwrap();
        let rel = norm((&back - &v).view()) / norm(v.view());
        prop_assert!(rel <= 1e-10, "relative residual {rel}");
    }

    #[test]
    fn rank1_matches_dense_quad_form(
        (a, d) in (1usize..12).prop_flat_map(|p| (vector(p, 2.0), vector(p, 2.0))),
        coef in 0.0..3.0f64,
        shift in 0.0..2.0f64,
    ) {
        let r1 = CurvatureMatrix::rank1(coef, Arc::new(a), shift);
        let dense = CurvatureMatrix::dense(r1.to_dense()).unwrap();
        let (x, y) = (quad_form(&r1, d.view()).unwrap(), quad_form(&dense, d.view()).unwrap());
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }

    #[test]
    fn prox_is_nonexpansive(
        (v, w) in (1usize..10).prop_flat_map(|p| (vector(p, 5.0), vector(p, 5.0))),
        reg in regularizer(),
        alpha in 0.01..5.0f64,
    ) {
        let pv = reg.prox(v.view(), alpha).unwrap();
        let pw = reg.prox(w.view(), alpha).unwrap();
        prop_assert!(norm((&pv - &pw).view()) <= norm((&v - &w).view()) + 1e-12);
    }

    #[test]
    fn logistic_rayleigh_quotient_below_lipschitz(
        (a, x, u) in (1usize..8).prop_flat_map(|p| (vector(p, 3.0), vector(p, 3.0), vector(p, 1.0))),
        label in prop::bool::ANY,
        tau in 0.0..1.0f64,
    ) {
        prop_assume!(norm(u.view()) > 1e-3);
        let loss = LossFamily::logistic().with_ridge(tau).unwrap();
        let s = Sample::new(a, if label { 1.0 } else { -1.0 });
        let h = loss.hessian(&s, x.view()).unwrap();
        let u = &u / norm(u.view());
        prop_assert!(quad_form(&h, u.view()).unwrap() <= loss.lipschitz_bound(&s) * (1.0 + 1e-12));
    }

    #[test]
    fn rho_below_one_iff_band_condition(
        n in 1usize..1000,
        big_m in 0.01..10.0f64,
        l_max in 0.01..10.0f64,
        mu_h in 0.0..10.0f64,
        m in 0.01..10.0f64,
    ) {
        let c = constants(n, big_m, l_max, mu_h, m);
        let lhs = big_m + l_max;
        let rhs = 2.0 * mu_h + m;
        // skip the knife edge where rounding decides
        prop_assume!((lhs - rhs).abs() > 1e-9 * rhs);
        prop_assert_eq!(c.rho() < 1.0, lhs < rhs);
    }

    #[test]
    fn theorem1_bound_is_geometric(
        n in 1usize..100,
        mu_h in 0.0..5.0f64,
        k in 1usize..500,
        d0 in 0.01..10.0f64,
    ) {
        let c = constants(n, 1.0, 1.0, mu_h, 1.0);
        let ratio = theorem1_bound(&c, k + 1, d0) / theorem1_bound(&c, k, d0);
        prop_assert!((ratio - c.rho()).abs() <= 1e-12 * c.rho());
    }

    /// With `H = c I`, the subproblem is one proximal-gradient step:
    /// `x + d = prox_{h/c}(x - v/c)`.
    #[test]
    fn scaled_identity_subproblem_is_a_prox_step(
        (x, v) in (1usize..8).prop_flat_map(|p| (vector(p, 3.0), vector(p, 3.0))),
        reg in regularizer(),
        c in 0.1..10.0f64,
    ) {
        let p = x.len();
        let h = CurvatureMatrix::scaled_identity(p, c);
        let r = solve_direction(&SubproblemSpec::new(v.view(), &h, x.view(), &reg).force_iterative()).unwrap();
        let mut z = x.clone();
        z.scaled_add(-1.0 / c, &v);
        let expect = reg.prox(z.view(), 1.0 / c).unwrap();
        let got = &x + &r.direction;
        let err = got.iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9, "max error {err}");
    }

    #[test]
    fn subproblem_never_ascends_and_certifies(
        (a, x, v) in (1usize..10).prop_flat_map(|p| (spd(p), vector(p, 3.0), vector(p, 3.0))),
        reg in regularizer(),
    ) {
        let h = CurvatureMatrix::dense(a).unwrap();
        let spec = SubproblemSpec::new(v.view(), &h, x.view(), &reg);
        let r = solve_direction(&spec).unwrap();
        let zero = Vector::zeros(x.len());
        prop_assert!(spec.model_value(r.direction.view()).unwrap() <= spec.model_value(zero.view()).unwrap() + 1e-12);
        prop_assert!(r.converged);
        prop_assert!(r.certificate <= spec.tolerance);
    }

    #[test]
    fn forced_iterative_matches_closed_form(
        (a, x, v) in (1usize..10).prop_flat_map(|p| (spd(p), vector(p, 3.0), vector(p, 3.0))),
    ) {
        let h = CurvatureMatrix::dense(a).unwrap();
        let reg = Regularizer::zero();
        let spec = SubproblemSpec::new(v.view(), &h, x.view(), &reg);
        let closed = solve_direction(&spec).unwrap().direction;
        let iterative = solve_direction(&spec.force_iterative()).unwrap().direction;
        let err = closed.iter().zip(&iterative).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-8, "max error {err}");
    }
}

fn constants(n: usize, big_m: f64, l_max: f64, mu_h: f64, m: f64) -> ProblemConstants {
    ProblemConstants {
        lipschitz: vec![l_max; n],
        l_max,
        l_avg: l_max,
        mu_g: 0.0,
        mu_h,
        m,
        big_m,
        hessian_lipschitz: vec![0.0; n],
        k_avg: 0.0,
        k_max: 0.0,
        n,
        p: 1,
    }
}

#[test]
fn clamp_band_rejects_inverted_bounds() {
    assert!(SpectralBand::new(2.0, 1.0).is_err());
    assert!(SpectralBand::new(0.0, 1.0).is_err());
}
