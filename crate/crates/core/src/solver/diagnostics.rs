//! Finite-difference verification of the analytic gradients a problem
//! reports. The probes go through `cost`, `constraint_values`, and `retract`
//! only, so they stay independent of the gradient formulas under test.

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::solver::problem::Problem;

/// Worst relative disagreements between analytic directional derivatives and
/// central finite differences of the composed maps.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub objective_max_rel_err: f64,
    pub constraint_max_rel_err: f64,
    pub directions: usize,
}

/// Compares `<grad, w>` against `(phi(retract(x, h w)) - phi(retract(x, -h w))) / 2h`
/// for the cost and every constraint row, over random unit coordinate
/// directions. Rows where both sides are below `1e-10` in magnitude are
/// skipped as indistinguishable from zero.
pub fn gradient_check<P: Problem>(
    problem: &P,
    x: &P::Point,
    num_dirs: usize,
    h: f64,
    rng: &mut impl Rng,
) -> Result<GradCheckReport> {
    let lin = problem.linearize(x)?;
    let dim = problem.dim();
    let mut obj_err = 0.0f64;
    let mut con_err = 0.0f64;

    for _ in 0..num_dirs {
        let mut w = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let norm = w.norm();
        if norm == 0.0 {
            continue;
        }
        w /= norm;

        let x_plus = problem.retract(x, &(&w * h))?;
        let x_minus = problem.retract(x, &(&w * -h))?;

        let fd_cost = (problem.cost(&x_plus)? - problem.cost(&x_minus)?) / (2.0 * h);
        let an_cost = lin.grad.dot(&w);
        obj_err = obj_err.max(rel_err(fd_cost, an_cost));

        let vp = problem.constraint_values(&x_plus)?;
        let vm = problem.constraint_values(&x_minus)?;
        for (row, a) in lin.ineq_grads.iter().enumerate() {
            let fd = (vp.ineq[row] - vm.ineq[row]) / (2.0 * h);
            con_err = con_err.max(rel_err(fd, a.dot(&w)));
        }
        for (row, a) in lin.eq_grads.iter().enumerate() {
            let fd = (vp.eq[row] - vm.eq[row]) / (2.0 * h);
            con_err = con_err.max(rel_err(fd, a.dot(&w)));
        }
    }

    Ok(GradCheckReport {
        objective_max_rel_err: obj_err,
        constraint_max_rel_err: con_err,
        directions: num_dirs,
    })
}

fn rel_err(fd: f64, analytic: f64) -> f64 {
    let denom = fd.abs().max(analytic.abs());
    if denom < 1e-10 {
        0.0
    } else {
        (fd - analytic).abs() / denom
    }
}
