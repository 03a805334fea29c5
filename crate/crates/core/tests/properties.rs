//! Property tests for the structural invariants of the geometry and
//! subproblem layers.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use riemann_sqp::manifold::{
    SpdMatrix, TangentVector, build_chart, metric, retract, skew_project, sym_project,
};
use riemann_sqp::qp::elastic_feasible_point;
use riemann_sqp::solver::penalty_update;

fn matrix_strategy(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-5.0f64..5.0, n * n)
        .prop_map(move |v| DMatrix::from_vec(n, n, v))
}

fn spd_strategy(n: usize) -> impl Strategy<Value = SpdMatrix> {
    matrix_strategy(n).prop_map(move |g| {
        let mut m = (&g * g.transpose()) / n as f64 + DMatrix::identity(n, n) * 0.3;
        for i in 0..n {
            for j in (i + 1)..n {
                m[(j, i)] = m[(i, j)];
            }
        }
        SpdMatrix::new(m).expect("positive definite by construction")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projections_split_every_matrix(m in matrix_strategy(4)) {
        let sym = sym_project(&m).unwrap();
        let skew = skew_project(&m).unwrap();
        // complementary decomposition
        prop_assert!((sym.matrix() + skew.matrix() - &m).abs().max() < 1e-12);
        // idempotence
        let sym_again = sym_project(sym.matrix()).unwrap();
        let skew_again = skew_project(skew.matrix()).unwrap();
        prop_assert_eq!(sym_again.matrix(), sym.matrix());
        prop_assert_eq!(skew_again.matrix(), skew.matrix());
    }

    #[test]
    fn retraction_preserves_positive_definiteness(
        r in spd_strategy(3),
        q in spd_strategy(3),
        j_raw in matrix_strategy(3),
        xi_j in matrix_strategy(3),
        xi_r in matrix_strategy(3),
        xi_q in matrix_strategy(3),
        scale in 0.0f64..20.0,
    ) {
        let x = riemann_sqp::manifold::ProductPoint::new(
            skew_project(&j_raw).unwrap(), r, q,
        ).unwrap();
        let v = TangentVector::new(
            skew_project(&xi_j).unwrap(),
            sym_project(&xi_r).unwrap(),
            sym_project(&xi_q).unwrap(),
        ).unwrap().scale(scale);
        let y = retract(&x, &v).unwrap();
        prop_assert!(y.r.matrix().clone().cholesky().is_some());
        prop_assert!(y.q.matrix().clone().cholesky().is_some());
    }

    #[test]
    fn chart_round_trip_is_isometric(
        r in spd_strategy(3),
        q in spd_strategy(3),
        j_raw in matrix_strategy(3),
        coords in proptest::collection::vec(-2.0f64..2.0, 15),
    ) {
        let x = riemann_sqp::manifold::ProductPoint::new(
            skew_project(&j_raw).unwrap(), r, q,
        ).unwrap();
        let chart = build_chart(&x);
        let c = DVector::from_vec(coords);
        let v = chart.from_coords(&c).unwrap();
        let back = chart.to_coords(&v).unwrap();
        prop_assert!((&back - &c).abs().max() < 1e-10);
        // coordinate norm equals metric norm
        let m = metric(&x, &v, &v).unwrap();
        prop_assert!((m - c.norm_squared()).abs() < 1e-9 * (1.0 + m));
    }

    #[test]
    fn elastic_point_is_always_feasible(
        g in proptest::collection::vec(-10.0f64..10.0, 0..8),
        h in proptest::collection::vec(-10.0f64..10.0, 0..6),
    ) {
        let gv = DVector::from_vec(g);
        let hv = DVector::from_vec(h);
        let s = elastic_feasible_point(&gv, &hv);
        for i in 0..gv.len() {
            prop_assert!(gv[i] + s.v[i] <= 0.0);
            prop_assert!(s.v[i] <= 0.0);
        }
        for j in 0..hv.len() {
            prop_assert_eq!(hv[j] + s.w_plus[j] - s.w_minus[j], 0.0);
            prop_assert!(s.w_plus[j] <= 0.0 && s.w_minus[j] <= 0.0);
        }
    }

    #[test]
    fn penalty_update_dominates_multipliers_and_never_decreases(
        rho_prev in 1e-6f64..10.0,
        lam in proptest::collection::vec(0.0f64..5.0, 0..6),
        mu in proptest::collection::vec(-5.0f64..5.0, 0..4),
    ) {
        let lam = DVector::from_vec(lam);
        let mu = DVector::from_vec(mu);
        let rho = penalty_update(rho_prev, &lam, &mu, 1e-4);
        prop_assert!(rho >= rho_prev);
        let bound = lam.iter().fold(0.0f64, |a, &l| a.max(l))
            .max(mu.iter().fold(0.0f64, |a, &m| a.max(m.abs())));
        prop_assert!(rho >= bound);
    }
}
