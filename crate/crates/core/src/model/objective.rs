use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::{ProductPoint, TangentVector, riem_grad_from_euclidean};
use crate::model::trajectory::Trajectory;

/// Assembles the system matrix `A = (J - R) Q`. Stable by construction for
/// every point of the product space.
pub fn assemble_a(x: &ProductPoint) -> DMatrix<f64> {
    (x.j.matrix() - x.r.matrix()) * x.q.matrix()
}

fn check_dims(x: &ProductPoint, traj: &Trajectory) -> Result<()> {
    if x.dim() != traj.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: traj.state_dim(),
            got: x.dim(),
            context: "point dimension vs trajectory state dimension",
        });
    }
    Ok(())
}

fn residual(a: &DMatrix<f64>, traj: &Trajectory) -> DMatrix<f64> {
    let x0 = traj.x0_matrix();
    traj.x1_matrix() - x0 - (a * x0) * traj.dt()
}

fn check_matrix_dims(a: &DMatrix<f64>, traj: &Trajectory) -> Result<()> {
    if a.nrows() != traj.state_dim() || a.ncols() != traj.state_dim() {
        return Err(Error::DimensionMismatch {
            expected: traj.state_dim(),
            got: a.nrows().max(a.ncols()),
            context: "system matrix vs trajectory state dimension",
        });
    }
    Ok(())
}

/// One-step prediction error
/// `f(x) = ||X1 - (I + dt A) X0||_F^2 / N` with `A = (J - R) Q`.
pub fn objective_value(x: &ProductPoint, traj: &Trajectory) -> Result<f64> {
    check_dims(x, traj)?;
    let e = residual(&assemble_a(x), traj);
    Ok(e.norm_squared() / traj.num_samples() as f64)
}

/// Same prediction error evaluated at an explicit system matrix, the cost of
/// the flat-space formulation.
pub fn objective_value_at_matrix(a: &DMatrix<f64>, traj: &Trajectory) -> Result<f64> {
    check_matrix_dims(a, traj)?;
    Ok(residual(a, traj).norm_squared() / traj.num_samples() as f64)
}

/// Euclidean gradient `-(2 dt / N) E X0^T` of the prediction error with
/// respect to the system matrix itself.
pub fn euclidean_gradient_at_matrix(
    a: &DMatrix<f64>,
    traj: &Trajectory,
) -> Result<DMatrix<f64>> {
    check_matrix_dims(a, traj)?;
    let e = residual(a, traj);
    let c = -2.0 * traj.dt() / traj.num_samples() as f64;
    Ok((&e * traj.x0_matrix().transpose()) * c)
}

/// Euclidean gradient blocks of the objective at `x`:
/// `G_J = -(2 dt / N) E X0^T Q^T`, `G_R = -G_J`,
/// `G_Q = -(2 dt / N) (J - R)^T E X0^T`, with `E` the prediction residual.
/// `G_R` is the exact elementwise negation of `G_J`.
pub fn euclidean_gradient_blocks(
    x: &ProductPoint,
    traj: &Trajectory,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    check_dims(x, traj)?;
    let a = assemble_a(x);
    let e = residual(&a, traj);
    let c = -2.0 * traj.dt() / traj.num_samples() as f64;
    let e_x0t = &e * traj.x0_matrix().transpose();
    let g_j = (&e_x0t * x.q.matrix().transpose()) * c;
    let g_r = -&g_j;
    let g_q = ((x.j.matrix() - x.r.matrix()).transpose() * e_x0t) * c;
    Ok((g_j, g_r, g_q))
}

/// Riemannian gradient of the objective: the Euclidean blocks projected
/// through the product-space gradient conversion.
pub fn objective_gradient(x: &ProductPoint, traj: &Trajectory) -> Result<TangentVector> {
    let (g_j, g_r, g_q) = euclidean_gradient_blocks(x, traj)?;
    riem_grad_from_euclidean(x, &g_j, &g_r, &g_q)
}

/// Euclidean gradient blocks of the entry functional
/// `phi_ij(x) = e_i^T (J - R) Q e_j`: returns `(G_J, G_Q)` with
/// `G_J = e_i e_j^T Q^T` and `G_Q = (J - R)^T e_i e_j^T`; the R block is
/// `-G_J`.
pub fn entry_gradient_blocks(x: &ProductPoint, i: usize, j: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x.dim();
    let q = x.q.matrix();
    let mut g_j = DMatrix::zeros(n, n);
    for c in 0..n {
        g_j[(i, c)] = q[(c, j)];
    }
    let jr = x.j.matrix() - x.r.matrix();
    let mut g_q = DMatrix::zeros(n, n);
    for r in 0..n {
        g_q[(r, j)] = jr[(i, r)];
    }
    (g_j, g_q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{SkewMatrix, SpdMatrix, build_chart, metric, norm, retract};
    use crate::model::random::{random_stable_triple, random_unit_box_vector};
    use crate::model::trajectory::simulate_euler;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn assemble_identity_case() {
        let x = ProductPoint::new(
            SkewMatrix::zeros(3),
            SpdMatrix::identity(3),
            SpdMatrix::identity(3),
        )
        .unwrap();
        let a = assemble_a(&x);
        assert_eq!(a, -DMatrix::<f64>::identity(3, 3));
        for ev in a.complex_eigenvalues().iter() {
            assert_relative_eq!(ev.re, -1.0);
        }
    }

    #[test]
    fn assemble_scalar_case() {
        let x = ProductPoint::new(
            SkewMatrix::zeros(1),
            SpdMatrix::new(DMatrix::from_element(1, 1, 2.0)).unwrap(),
            SpdMatrix::new(DMatrix::from_element(1, 1, 0.25)).unwrap(),
        )
        .unwrap();
        assert_eq!(assemble_a(&x)[(0, 0)], -0.5);
    }

    #[test]
    fn assembled_matrix_is_stable_for_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = random_stable_triple(10, &mut rng);
            let a = assemble_a(&x);
            let max_re = a
                .complex_eigenvalues()
                .iter()
                .fold(f64::NEG_INFINITY, |acc, ev| acc.max(ev.re));
            assert!(max_re < 0.0, "unstable sample: max Re = {max_re}");
        }
    }

    #[test]
    fn euler_data_is_interpolated_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_stable_triple(4, &mut rng);
        let a = assemble_a(&x);
        let x0 = random_unit_box_vector(4, &mut rng);
        let traj = simulate_euler(&a, &x0, 0.05, 15).unwrap();
        assert!(objective_value(&x, &traj).unwrap() <= 1e-20);
        let grad = objective_gradient(&x, &traj).unwrap();
        assert!(norm(&x, &grad).unwrap() <= 1e-12);
    }

    #[test]
    fn constant_data_reduces_to_pure_drift_term() {
        // X1 = X0 -> f = (dt^2 / N) ||A X0||_F^2
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_stable_triple(3, &mut rng);
        let states = DMatrix::from_fn(3, 6, |i, _| 0.5 + 0.1 * i as f64);
        let traj = Trajectory::from_states(states, 0.2).unwrap();
        let a = assemble_a(&x);
        let expected =
            (0.2f64).powi(2) * (&a * traj.x0_matrix()).norm_squared() / 6.0;
        assert_relative_eq!(
            objective_value(&x, &traj).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn objective_matches_per_column_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_stable_triple(3, &mut rng);
        let truth = random_stable_triple(3, &mut rng);
        let traj = simulate_euler(
            &assemble_a(&truth),
            &random_unit_box_vector(3, &mut rng),
            0.1,
            9,
        )
        .unwrap();
        let a = assemble_a(&x);
        let n_samples = traj.num_samples();
        let mut acc = 0.0;
        for k in 0..n_samples - 1 {
            let pred = traj.states().column(k)
                + (&a * traj.states().column(k)) * traj.dt();
            acc += (traj.states().column(k + 1) - pred).norm_squared();
        }
        assert_relative_eq!(
            objective_value(&x, &traj).unwrap(),
            acc / n_samples as f64,
            epsilon = 1e-12
        );
    }

    #[test]
    fn r_block_is_exact_negation_of_j_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = random_stable_triple(4, &mut rng);
            let truth = random_stable_triple(4, &mut rng);
            let traj = simulate_euler(
                &assemble_a(&truth),
                &random_unit_box_vector(4, &mut rng),
                0.1,
                8,
            )
            .unwrap();
            let (g_j, g_r, _) = euclidean_gradient_blocks(&x, &traj).unwrap();
            for (a, b) in g_j.iter().zip(g_r.iter()) {
                assert_eq!(*a, -*b);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_through_retraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 10;
        let x = random_stable_triple(n, &mut rng);
        let truth = random_stable_triple(n, &mut rng);
        let traj = simulate_euler(
            &assemble_a(&truth),
            &random_unit_box_vector(n, &mut rng),
            0.1,
            12,
        )
        .unwrap();
        let grad = objective_gradient(&x, &traj).unwrap();
        let chart = build_chart(&x);
        let h = 1e-5;
        for _ in 0..20 {
            let w = chart
                .from_coords(&DVector::from_fn(chart.dim(), |_, _| {
                    rng.gen_range(-1.0..1.0)
                }))
                .unwrap();
            let fp = objective_value(&retract(&x, &w.scale(h)).unwrap(), &traj).unwrap();
            let fm = objective_value(&retract(&x, &w.scale(-h)).unwrap(), &traj).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let an = metric(&x, &grad, &w).unwrap();
            let denom = fd.abs().max(an.abs());
            assert!(
                (fd - an).abs() / denom < 1e-6,
                "fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_stable_triple(3, &mut rng);
        let traj = simulate_euler(
            &DMatrix::from_element(2, 2, -0.1),
            &DVector::from_vec(vec![1.0, 1.0]),
            0.1,
            5,
        )
        .unwrap();
        assert!(objective_value(&x, &traj).is_err());
        assert!(objective_gradient(&x, &traj).is_err());
    }
}
