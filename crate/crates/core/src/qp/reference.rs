//! Exhaustive active-set reference solver for small quadratic programs.
//!
//! Enumerates every subset of the inequality rows, solves the corresponding
//! equality-constrained system, and keeps the candidate that is primal and
//! dual feasible. Exponential in the number of inequality rows, so only
//! suitable as an independent check of the interior-point path on small
//! instances.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{LinearRow, QpProblem};
use crate::error::{Error, Result};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;

/// Draws a small strongly convex instance for oracle comparisons: dimension
/// up to 6, up to 4 inequality rows (a mix of feasible and contradictory
/// offsets), and optionally one equality row.
pub fn random_instance(rng: &mut impl Rng, with_eq: bool) -> QpProblem {
    let d = rng.gen_range(1..=6);
    let l = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let mut h = &l * l.transpose() + DMatrix::identity(d, d) * 0.5;
    for i in 0..d {
        for j in (i + 1)..d {
            h[(j, i)] = h[(i, j)];
        }
    }
    let g = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
    let mi = rng.gen_range(0..=4);
    let ineq = (0..mi)
        .map(|_| LinearRow {
            a: DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
            b: rng.gen_range(-1.5..0.8),
        })
        .collect();
    let me = if with_eq && d > 1 { rng.gen_range(0..=1) } else { 0 };
    let eq = (0..me)
        .map(|_| LinearRow {
            a: DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
            b: rng.gen_range(-0.5..0.5),
        })
        .collect();
    QpProblem::new(h, g, ineq, eq).expect("generated Hessian is positive definite")
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub z: DVector<f64>,
    pub ineq_mult: DVector<f64>,
    pub eq_mult: DVector<f64>,
    pub objective: f64,
}

/// Solves by enumerating active sets. Returns `None` when no subset yields a
/// primal-dual feasible candidate, i.e. the problem is infeasible.
pub fn solve_by_enumeration(qp: &QpProblem) -> Result<Option<ReferenceSolution>> {
    let mi = qp.ineq().len();
    if mi > 20 {
        return Err(Error::InvalidConfig(format!(
            "active-set enumeration over {mi} rows is not practical"
        )));
    }
    let d = qp.dim();
    let me = qp.eq().len();
    let mut best: Option<ReferenceSolution> = None;

    for mask in 0u32..(1u32 << mi) {
        let active: Vec<usize> = (0..mi).filter(|&r| mask & (1 << r) != 0).collect();
        let na = active.len();
        let k = d + na + me;
        let mut kkt = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for i in 0..d {
            for j in 0..d {
                kkt[(i, j)] = qp.h()[(i, j)];
            }
            rhs[i] = -qp.g()[i];
        }
        for (s, &r) in active.iter().enumerate() {
            for c in 0..d {
                kkt[(d + s, c)] = qp.ineq()[r].a[c];
                kkt[(c, d + s)] = qp.ineq()[r].a[c];
            }
            rhs[d + s] = -qp.ineq()[r].b;
        }
        for (s, row) in qp.eq().iter().enumerate() {
            for c in 0..d {
                kkt[(d + na + s, c)] = row.a[c];
                kkt[(c, d + na + s)] = row.a[c];
            }
            rhs[d + na + s] = -row.b;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else {
            continue; // dependent active rows
        };
        // singular subsets can slip through LU with garbage; verify the solve
        if (&kkt * &sol - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
            continue;
        }
        let z = sol.rows(0, d).into_owned();
        let lam_active = sol.rows(d, na).into_owned();
        let eq_mult = sol.rows(d + na, me).into_owned();

        if lam_active.iter().any(|&l| l < -DUAL_TOL) {
            continue;
        }
        let mut feasible = true;
        for (r, row) in qp.ineq().iter().enumerate() {
            if active.contains(&r) {
                continue;
            }
            if row.a.dot(&z) + row.b > PRIMAL_TOL {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }

        let mut ineq_mult = DVector::zeros(mi);
        for (s, &r) in active.iter().enumerate() {
            ineq_mult[r] = lam_active[s].max(0.0);
        }
        let objective = qp.objective(&z);
        let better = match &best {
            None => true,
            Some(b) => objective < b.objective - 1e-12,
        };
        if better {
            best = Some(ReferenceSolution {
                z,
                ineq_mult,
                eq_mult,
                objective,
            });
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::LinearRow;
    use approx::assert_relative_eq;

    fn identity_qp(g: Vec<f64>, ineq: Vec<LinearRow>) -> QpProblem {
        let d = g.len();
        QpProblem::new(
            DMatrix::identity(d, d),
            DVector::from_vec(g),
            ineq,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn unconstrained_minimum() {
        let qp = identity_qp(vec![1.0, -2.0], vec![]);
        let sol = solve_by_enumeration(&qp).unwrap().unwrap();
        assert_relative_eq!(sol.z[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.z[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn single_active_constraint_projection() {
        // H = I, g = 0, z_1 <= -1: optimum is the projection (-1, 0)
        let qp = identity_qp(
            vec![0.0, 0.0],
            vec![LinearRow {
                a: DVector::from_vec(vec![1.0, 0.0]),
                b: 1.0,
            }],
        );
        let sol = solve_by_enumeration(&qp).unwrap().unwrap();
        assert_relative_eq!(sol.z[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.z[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(sol.ineq_mult[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let qp = identity_qp(
            vec![0.0],
            vec![
                LinearRow {
                    a: DVector::from_vec(vec![1.0]),
                    b: 1.0,
                },
                LinearRow {
                    a: DVector::from_vec(vec![-1.0]),
                    b: 1.0,
                },
            ],
        );
        assert!(solve_by_enumeration(&qp).unwrap().is_none());
    }
}
