//! Strongly convex quadratic subproblems over tangent coordinates: the
//! standard SQP subproblem, phase-I feasibility detection, and the elastic
//! reformulation that is always solvable.

mod ipm;
pub mod reference;

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use ipm::{IpmInput, ipm_last_iterate, ipm_solve};

/// Tolerance below which a constraint row coefficient vector counts as zero.
const ZERO_ROW_TOL: f64 = 1e-14;
/// Phase-I total-violation threshold separating feasible from infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Curvature added to the phase-I objective so its minimizer is unique and
/// the interior-point solve stays well conditioned. Generic constraint rows
/// have O(1) gradients, so at this scale the regularized minimizer still
/// attains exactly zero violation whenever the rows are satisfiable.
const PHASE_ONE_REG: f64 = 1e-8;

/// One linear constraint row `a^T z + b` (compared against 0).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub a: DVector<f64>,
    pub b: f64,
}

/// A strongly convex quadratic program in chart coordinates:
/// minimize `1/2 z^T H z + g^T z` subject to `a^T z + b <= 0` per inequality
/// row and `a^T z + b = 0` per equality row.
#[derive(Debug, Clone)]
pub struct QpProblem {
    h: DMatrix<f64>,
    g: DVector<f64>,
    ineq: Vec<LinearRow>,
    eq: Vec<LinearRow>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        ineq: Vec<LinearRow>,
        eq: Vec<LinearRow>,
    ) -> Result<Self> {
        let d = g.len();
        if h.nrows() != d || h.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: h.nrows().max(h.ncols()),
                context: "QP Hessian",
            });
        }
        let max_asym = (&h - h.transpose()).abs().max();
        if max_asym > 1e-10 {
            return Err(Error::NotSymmetric { max_asym });
        }
        if h.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite {
                context: "QP Hessian must be positive definite",
            });
        }
        for row in ineq.iter().chain(eq.iter()) {
            if row.a.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.a.len(),
                    context: "QP constraint row",
                });
            }
        }
        Ok(Self { h, g, ineq, eq })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn ineq(&self) -> &[LinearRow] {
        &self.ineq
    }

    pub fn eq(&self) -> &[LinearRow] {
        &self.eq
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * (&self.h * z).dot(z) + self.g.dot(z)
    }

    /// Plain-text dump for offline inspection: dimension line, `H` rows,
    /// `g`, then one line per constraint row.
    pub fn dump(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "dim {} ineq {} eq {}", self.dim(), self.ineq.len(), self.eq.len())?;
        writeln!(w, "H")?;
        for i in 0..self.h.nrows() {
            let row: Vec<String> = (0..self.h.ncols()).map(|j| self.h[(i, j)].to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        writeln!(w, "g")?;
        let g: Vec<String> = self.g.iter().map(f64::to_string).collect();
        writeln!(w, "{}", g.join(" "))?;
        for (label, rows) in [("ineq", &self.ineq), ("eq", &self.eq)] {
            for row in rows.iter() {
                let a: Vec<String> = row.a.iter().map(f64::to_string).collect();
                writeln!(w, "{label} {} ; {}", a.join(" "), row.b)?;
            }
        }
        Ok(())
    }
}

/// Assembles the quadratic subproblem from a cost gradient and linearized
/// constraints, all expressed in the same chart: the objective is
/// `1/2 z^T H z + g^T z` and each constraint contributes one linear row whose
/// offset is the current constraint value.
pub fn build_subproblem(
    grad_coords: DVector<f64>,
    ineq_values: &DVector<f64>,
    ineq_grad_coords: &[DVector<f64>],
    eq_values: &DVector<f64>,
    eq_grad_coords: &[DVector<f64>],
    h: DMatrix<f64>,
) -> Result<QpProblem> {
    if ineq_values.len() != ineq_grad_coords.len() {
        return Err(Error::DimensionMismatch {
            expected: ineq_values.len(),
            got: ineq_grad_coords.len(),
            context: "inequality values vs gradients",
        });
    }
    if eq_values.len() != eq_grad_coords.len() {
        return Err(Error::DimensionMismatch {
            expected: eq_values.len(),
            got: eq_grad_coords.len(),
            context: "equality values vs gradients",
        });
    }
    let ineq = ineq_grad_coords
        .iter()
        .zip(ineq_values.iter())
        .map(|(a, &b)| LinearRow { a: a.clone(), b })
        .collect();
    let eq = eq_grad_coords
        .iter()
        .zip(eq_values.iter())
        .map(|(a, &b)| LinearRow { a: a.clone(), b })
        .collect();
    QpProblem::new(h, grad_coords, ineq, eq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    Infeasible,
    ElasticSolved,
}

/// Slack variables of an elastic solution, all nonpositive.
#[derive(Debug, Clone)]
pub struct ElasticSlacks {
    pub v: DVector<f64>,
    pub w_plus: DVector<f64>,
    pub w_minus: DVector<f64>,
}

impl ElasticSlacks {
    /// Total slack magnitude; zero iff the base subproblem was feasible and
    /// the elastic reformulation did not need to relax anything.
    pub fn total(&self) -> f64 {
        self.v.iter().map(|v| v.abs()).sum::<f64>()
            + self.w_plus.iter().map(|v| v.abs()).sum::<f64>()
            + self.w_minus.iter().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub ineq_mult: DVector<f64>,
    pub eq_mult: DVector<f64>,
    pub slacks: Option<ElasticSlacks>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    /// Max-norm KKT residual of this solution for the given problem:
    /// stationarity, primal and dual feasibility, and complementarity.
    pub fn kkt_residual(&self, qp: &QpProblem) -> f64 {
        let mut stat = qp.h() * &self.z + qp.g();
        for (row, &l) in qp.ineq().iter().zip(self.ineq_mult.iter()) {
            stat += &row.a * l;
        }
        for (row, &m) in qp.eq().iter().zip(self.eq_mult.iter()) {
            stat += &row.a * m;
        }
        let mut res = stat.amax();
        for (row, &l) in qp.ineq().iter().zip(self.ineq_mult.iter()) {
            let val = row.a.dot(&self.z) + row.b;
            res = res.max(val).max(-l).max((l * val).abs());
        }
        for row in qp.eq() {
            res = res.max((row.a.dot(&self.z) + row.b).abs());
        }
        res
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

/// Outcome of the phase-I violation-minimization problem: the minimizer, the
/// total violation at it, and the multipliers of the original rows.
#[derive(Debug, Clone)]
pub struct PhaseOneOutcome {
    pub z: DVector<f64>,
    pub total_violation: f64,
    pub ineq_mult: DVector<f64>,
    pub eq_mult: DVector<f64>,
}

/// Minimizes the total constraint violation `sum s` over
/// `a^T z + b <= s, s >= 0` (with an absolute-value split per equality row).
pub fn phase_one(qp: &QpProblem) -> Result<PhaseOneOutcome> {
    let d = qp.dim();
    let mi = qp.ineq.len();
    let me = qp.eq.len();
    let nv = d + mi + 2 * me;

    let mut h = DMatrix::zeros(nv, nv);
    for i in 0..d {
        h[(i, i)] = PHASE_ONE_REG;
    }
    let mut g = DVector::zeros(nv);
    for i in d..nv {
        g[i] = 1.0;
    }

    let n_ineq_rows = 2 * mi + 2 * me;
    let mut a_ineq = DMatrix::zeros(n_ineq_rows, nv);
    let mut b_ineq = DVector::zeros(n_ineq_rows);
    for (r, row) in qp.ineq.iter().enumerate() {
        for c in 0..d {
            a_ineq[(r, c)] = row.a[c];
        }
        a_ineq[(r, d + r)] = -1.0;
        b_ineq[r] = row.b;
        a_ineq[(mi + r, d + r)] = -1.0; // s >= 0
    }
    for j in 0..me {
        a_ineq[(2 * mi + j, d + mi + j)] = -1.0; // p >= 0
        a_ineq[(2 * mi + me + j, d + mi + me + j)] = -1.0; // q >= 0
    }
    let mut a_eq = DMatrix::zeros(me, nv);
    let mut b_eq = DVector::zeros(me);
    for (j, row) in qp.eq.iter().enumerate() {
        for c in 0..d {
            a_eq[(j, c)] = row.a[c];
        }
        a_eq[(j, d + mi + j)] = 1.0;
        a_eq[(j, d + mi + me + j)] = -1.0;
        b_eq[j] = row.b;
    }

    let input = IpmInput {
        h: &h,
        g: &g,
        a_ineq: &a_ineq,
        b_ineq: &b_ineq,
        a_eq: &a_eq,
        b_eq: &b_eq,
        warm_start: None,
    };
    // a degenerate optimal face can defeat the tight solve; any iterate
    // still yields a sound violation certificate when evaluated directly
    let out = match ipm_solve(&input, "phase-I") {
        Ok(out) => out,
        Err(Error::QpSolverFailure { .. }) => ipm_last_iterate(&input, 60),
        Err(e) => return Err(e),
    };
    let z = out.w.rows(0, d).into_owned();
    // total violation measured at the point itself, not via the slack
    // variables: feasibility verdicts are then certificates
    let total_violation = qp
        .ineq
        .iter()
        .map(|row| (row.a.dot(&z) + row.b).max(0.0))
        .sum::<f64>()
        + qp.eq.iter().map(|row| (row.a.dot(&z) + row.b).abs()).sum::<f64>();
    Ok(PhaseOneOutcome {
        z,
        total_violation,
        ineq_mult: out.lambda.rows(0, mi).into_owned(),
        eq_mult: out.mu,
    })
}

/// Decides whether the feasible region is nonempty. A point with every
/// inequality offset nonpositive and every equality offset zero certifies
/// feasibility of `z = 0` directly; otherwise the phase-I program is solved
/// and compared against [`FEASIBILITY_TOL`].
pub fn detect_feasibility(qp: &QpProblem) -> Result<Feasibility> {
    let origin_feasible = qp.ineq.iter().all(|row| row.b <= 0.0)
        && qp.eq.iter().all(|row| row.b.abs() <= 1e-12);
    if origin_feasible {
        return Ok(Feasibility::Feasible);
    }
    // constant rows decide immediately
    for row in &qp.ineq {
        if row.a.amax() <= ZERO_ROW_TOL && row.b > FEASIBILITY_TOL {
            return Ok(Feasibility::Infeasible);
        }
    }
    for row in &qp.eq {
        if row.a.amax() <= ZERO_ROW_TOL && row.b.abs() > FEASIBILITY_TOL {
            return Ok(Feasibility::Infeasible);
        }
    }
    let outcome = phase_one(qp)?;
    Ok(if outcome.total_violation <= FEASIBILITY_TOL {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible
    })
}

/// Solves the subproblem. Returns the unique optimum with its multipliers
/// when the feasible region is nonempty, and `QpStatus::Infeasible`
/// otherwise. Solver breakdown (iteration exhaustion) is an error distinct
/// from infeasibility.
pub fn solve_qp(qp: &QpProblem) -> Result<QpSolution> {
    if detect_feasibility(qp)? == Feasibility::Infeasible {
        return Ok(QpSolution {
            z: DVector::zeros(qp.dim()),
            ineq_mult: DVector::zeros(qp.ineq.len()),
            eq_mult: DVector::zeros(qp.eq.len()),
            slacks: None,
            status: QpStatus::Infeasible,
            iterations: 0,
        });
    }

    // strip rows with zero coefficients (their offsets are feasible here);
    // they keep zero multipliers
    let live_ineq: Vec<usize> = (0..qp.ineq.len())
        .filter(|&r| qp.ineq[r].a.amax() > ZERO_ROW_TOL)
        .collect();
    let live_eq: Vec<usize> = (0..qp.eq.len())
        .filter(|&r| qp.eq[r].a.amax() > ZERO_ROW_TOL)
        .collect();

    let d = qp.dim();
    let mut a_ineq = DMatrix::zeros(live_ineq.len(), d);
    let mut b_ineq = DVector::zeros(live_ineq.len());
    for (k, &r) in live_ineq.iter().enumerate() {
        for c in 0..d {
            a_ineq[(k, c)] = qp.ineq[r].a[c];
        }
        b_ineq[k] = qp.ineq[r].b;
    }
    let mut a_eq = DMatrix::zeros(live_eq.len(), d);
    let mut b_eq = DVector::zeros(live_eq.len());
    for (k, &r) in live_eq.iter().enumerate() {
        for c in 0..d {
            a_eq[(k, c)] = qp.eq[r].a[c];
        }
        b_eq[k] = qp.eq[r].b;
    }

    let out = ipm_solve(
        &IpmInput {
            h: &qp.h,
            g: &qp.g,
            a_ineq: &a_ineq,
            b_ineq: &b_ineq,
            a_eq: &a_eq,
            b_eq: &b_eq,
            warm_start: None,
        },
        "subproblem",
    )?;

    let mut ineq_mult = DVector::zeros(qp.ineq.len());
    for (k, &r) in live_ineq.iter().enumerate() {
        ineq_mult[r] = out.lambda[k].max(0.0);
    }
    let mut eq_mult = DVector::zeros(qp.eq.len());
    for (k, &r) in live_eq.iter().enumerate() {
        eq_mult[r] = out.mu[k];
    }
    Ok(QpSolution {
        z: out.w,
        ineq_mult,
        eq_mult,
        slacks: None,
        status: QpStatus::Solved,
        iterations: out.iterations,
    })
}

/// Emulates an external quadratic solver that judges the problem infeasible
/// and reports the iterate it stopped at: a fixed number of interior-point
/// iterations whose primal point drifts toward minimum violation while the
/// dual estimates grow. Used by the baseline without the elastic mode.
pub fn infeasible_last_iterate(qp: &QpProblem, cap: usize) -> QpSolution {
    let d = qp.dim();
    let mi = qp.ineq.len();
    let me = qp.eq.len();
    let mut a_ineq = DMatrix::zeros(mi, d);
    let mut b_ineq = DVector::zeros(mi);
    for (r, row) in qp.ineq.iter().enumerate() {
        for c in 0..d {
            a_ineq[(r, c)] = row.a[c];
        }
        b_ineq[r] = row.b;
    }
    let mut a_eq = DMatrix::zeros(me, d);
    let mut b_eq = DVector::zeros(me);
    for (r, row) in qp.eq.iter().enumerate() {
        for c in 0..d {
            a_eq[(r, c)] = row.a[c];
        }
        b_eq[r] = row.b;
    }
    let out = ipm_last_iterate(
        &IpmInput {
            h: &qp.h,
            g: &qp.g,
            a_ineq: &a_ineq,
            b_ineq: &b_ineq,
            a_eq: &a_eq,
            b_eq: &b_eq,
            warm_start: None,
        },
        cap,
    );
    QpSolution {
        z: out.w,
        ineq_mult: out.lambda,
        eq_mult: out.mu,
        slacks: None,
        status: QpStatus::Infeasible,
        iterations: out.iterations,
    }
}

/// The elastic reformulation: one nonpositive slack per inequality row and a
/// nonpositive pair per equality row, penalized linearly with weight
/// `rho_bar` so the problem is always solvable.
#[derive(Debug, Clone)]
pub struct ElasticQpProblem {
    pub base: QpProblem,
    pub rho_bar: f64,
}

pub fn build_elastic(base: QpProblem, rho_bar: f64) -> Result<ElasticQpProblem> {
    if !(rho_bar > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "elastic penalty must be positive, got {rho_bar}"
        )));
    }
    Ok(ElasticQpProblem { base, rho_bar })
}

/// The closed-form feasible point of the elastic subproblem at `z = 0`:
/// `v = -g` where the inequality value `g` is positive (zero otherwise), and
/// `(w+, w-) = (-h, 0)`, `(0, 0)`, or `(0, h)` according to the sign of the
/// equality value `h`.
pub fn elastic_feasible_point(
    ineq_values: &DVector<f64>,
    eq_values: &DVector<f64>,
) -> ElasticSlacks {
    let v = ineq_values.map(|g| if g > 0.0 { -g } else { 0.0 });
    let w_plus = eq_values.map(|h| if h > 0.0 { -h } else { 0.0 });
    let w_minus = eq_values.map(|h| if h < 0.0 { h } else { 0.0 });
    ElasticSlacks { v, w_plus, w_minus }
}

/// Solves the elastic subproblem. The returned multipliers are those of the
/// relaxed inequality rows and the relaxed equality rows; the slack bound
/// rows keep theirs internal. Always returns `QpStatus::ElasticSolved`.
pub fn solve_elastic(eqp: &ElasticQpProblem) -> Result<QpSolution> {
    let qp = &eqp.base;
    let d = qp.dim();
    let mi = qp.ineq.len();
    let me = qp.eq.len();
    let nv = d + mi + 2 * me;

    let mut h = DMatrix::zeros(nv, nv);
    for i in 0..d {
        for j in 0..d {
            h[(i, j)] = qp.h[(i, j)];
        }
    }
    let mut g = DVector::zeros(nv);
    for i in 0..d {
        g[i] = qp.g[i];
    }
    for i in d..nv {
        g[i] = -eqp.rho_bar;
    }

    let n_ineq_rows = 2 * mi + 2 * me;
    let mut a_ineq = DMatrix::zeros(n_ineq_rows, nv);
    let mut b_ineq = DVector::zeros(n_ineq_rows);
    for (r, row) in qp.ineq.iter().enumerate() {
        for c in 0..d {
            a_ineq[(r, c)] = row.a[c];
        }
        a_ineq[(r, d + r)] = 1.0; // g_hat + v <= 0
        b_ineq[r] = row.b;
        a_ineq[(mi + r, d + r)] = 1.0; // v <= 0
    }
    for j in 0..me {
        a_ineq[(2 * mi + j, d + mi + j)] = 1.0; // w+ <= 0
        a_ineq[(2 * mi + me + j, d + mi + me + j)] = 1.0; // w- <= 0
    }
    let mut a_eq = DMatrix::zeros(me, nv);
    let mut b_eq = DVector::zeros(me);
    for (j, row) in qp.eq.iter().enumerate() {
        for c in 0..d {
            a_eq[(j, c)] = row.a[c];
        }
        a_eq[(j, d + mi + j)] = 1.0; // + w+
        a_eq[(j, d + mi + me + j)] = -1.0; // - w-
        b_eq[j] = row.b;
    }

    // start from the closed-form feasible point
    let start = {
        let slacks = elastic_feasible_point(
            &DVector::from_fn(mi, |i, _| qp.ineq[i].b),
            &DVector::from_fn(me, |j, _| qp.eq[j].b),
        );
        let mut w0 = DVector::zeros(nv);
        for i in 0..mi {
            w0[d + i] = slacks.v[i];
        }
        for j in 0..me {
            w0[d + mi + j] = slacks.w_plus[j];
            w0[d + mi + me + j] = slacks.w_minus[j];
        }
        w0
    };

    let out = ipm_solve(
        &IpmInput {
            h: &h,
            g: &g,
            a_ineq: &a_ineq,
            b_ineq: &b_ineq,
            a_eq: &a_eq,
            b_eq: &b_eq,
            warm_start: Some(&start),
        },
        "elastic subproblem",
    )?;

    let z = out.w.rows(0, d).into_owned();
    let slacks = ElasticSlacks {
        v: out.w.rows(d, mi).into_owned().map(|v| v.min(0.0)),
        w_plus: out.w.rows(d + mi, me).into_owned().map(|v| v.min(0.0)),
        w_minus: out.w.rows(d + mi + me, me).into_owned().map(|v| v.min(0.0)),
    };
    Ok(QpSolution {
        z,
        ineq_mult: out.lambda.rows(0, mi).into_owned().map(|l| l.max(0.0)),
        eq_mult: out.mu,
        slacks: Some(slacks),
        status: QpStatus::ElasticSolved,
        iterations: out.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::reference::solve_by_enumeration;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_qp(g: Vec<f64>, ineq: Vec<LinearRow>, eq: Vec<LinearRow>) -> QpProblem {
        let d = g.len();
        QpProblem::new(DMatrix::identity(d, d), DVector::from_vec(g), ineq, eq).unwrap()
    }

    fn row(a: Vec<f64>, b: f64) -> LinearRow {
        LinearRow {
            a: DVector::from_vec(a),
            b,
        }
    }

    use crate::qp::reference::random_instance as random_qp;

    #[test]
    fn unconstrained_solution_is_newton_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let d = rng.gen_range(1..=6);
            let l = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
            let mut h = &l * l.transpose() + DMatrix::identity(d, d);
            for i in 0..d {
                for j in (i + 1)..d {
                    h[(j, i)] = h[(i, j)];
                }
            }
            let g = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            let qp = QpProblem::new(h.clone(), g.clone(), vec![], vec![]).unwrap();
            let sol = solve_qp(&qp).unwrap();
            assert_eq!(sol.status, QpStatus::Solved);
            let expected = h.cholesky().unwrap().solve(&(-&g));
            assert!((&sol.z - expected).amax() < 1e-10);
            assert!(sol.ineq_mult.is_empty() && sol.eq_mult.is_empty());
        }
    }

    #[test]
    fn identity_hessian_unconstrained_direction_is_exact_negated_gradient() {
        let g = DVector::from_vec(vec![0.3, -1.7, 0.05]);
        let qp = QpProblem::new(DMatrix::identity(3, 3), g.clone(), vec![], vec![]).unwrap();
        let sol = solve_qp(&qp).unwrap();
        for i in 0..3 {
            assert_eq!(sol.z[i], -g[i]);
        }
    }

    #[test]
    fn single_constraint_projection_hand_kkt() {
        // H = I, g = 0, z_1 + 1 <= 0: optimum (-1, 0), multiplier 1
        let qp = identity_qp(vec![0.0, 0.0], vec![row(vec![1.0, 0.0], 1.0)], vec![]);
        let sol = solve_qp(&qp).unwrap();
        assert_relative_eq!(sol.z[0], -1.0, epsilon = 1e-9);
        assert_relative_eq!(sol.z[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(sol.ineq_mult[0], 1.0, epsilon = 1e-8);
        assert!(sol.kkt_residual(&qp) < 1e-8);
    }

    #[test]
    fn contradictory_rows_reported_infeasible() {
        let qp = identity_qp(
            vec![0.0],
            vec![row(vec![1.0], 1.0), row(vec![-1.0], 1.0)],
            vec![],
        );
        assert_eq!(detect_feasibility(&qp).unwrap(), Feasibility::Infeasible);
        let sol = solve_qp(&qp).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn empty_constraint_list_is_feasible() {
        let qp = identity_qp(vec![1.0], vec![], vec![]);
        assert_eq!(detect_feasibility(&qp).unwrap(), Feasibility::Feasible);
    }

    #[test]
    fn constructed_feasible_systems_are_detected_feasible() {
        // rows built to hold at a known point are always feasible
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let d = rng.gen_range(1..=5);
            let z_known = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            let rows: Vec<LinearRow> = (0..rng.gen_range(1..=4))
                .map(|_| {
                    let a = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
                    let slack = rng.gen_range(0.0..1.0);
                    let b = -a.dot(&z_known) - slack;
                    LinearRow { a, b }
                })
                .collect();
            let qp = QpProblem::new(
                DMatrix::identity(d, d),
                DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)),
                rows,
                vec![],
            )
            .unwrap();
            assert_eq!(detect_feasibility(&qp).unwrap(), Feasibility::Feasible);
        }
    }

    #[test]
    fn matches_enumeration_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut solved = 0;
        let mut infeasible = 0;
        for trial in 0..150 {
            let qp = random_qp(&mut rng, true);
            let oracle = solve_by_enumeration(&qp).unwrap();
            let sol = solve_qp(&qp).unwrap();
            match oracle {
                None => {
                    assert_eq!(sol.status, QpStatus::Infeasible, "trial {trial}");
                    infeasible += 1;
                }
                Some(reference) => {
                    assert_eq!(sol.status, QpStatus::Solved, "trial {trial}");
                    // gaps are scaled by the solution magnitude: on nearly
                    // degenerate instances the multipliers are huge and only
                    // relative agreement is numerically meaningful
                    let primal_gap =
                        (&sol.z - &reference.z).amax() / (1.0 + reference.z.amax());
                    assert!(primal_gap < 1e-8, "trial {trial}: primal gap {primal_gap}");
                    let dual_gap = ((&sol.ineq_mult - &reference.ineq_mult).amax())
                        .max((&sol.eq_mult - &reference.eq_mult).amax())
                        / (1.0
                            + reference.ineq_mult.amax().max(
                                if reference.eq_mult.is_empty() {
                                    0.0
                                } else {
                                    reference.eq_mult.amax()
                                },
                            ));
                    assert!(dual_gap < 1e-8, "trial {trial}: dual gap {dual_gap}");
                    assert!(sol.kkt_residual(&qp) < 1e-8, "trial {trial}");
                    solved += 1;
                }
            }
        }
        assert!(solved > 50 && infeasible > 5, "solved {solved}, infeasible {infeasible}");
    }

    #[test]
    fn subproblem_rows_reproduce_constraint_values_at_origin() {
        let grad = DVector::from_vec(vec![0.1, 0.2]);
        let ineq_values = DVector::from_vec(vec![-0.3, 0.4]);
        let ineq_grads = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ];
        let eq_values = DVector::from_vec(vec![0.7]);
        let eq_grads = vec![DVector::from_vec(vec![1.0, 1.0])];
        let qp = build_subproblem(
            grad,
            &ineq_values,
            &ineq_grads,
            &eq_values,
            &eq_grads,
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let origin = DVector::zeros(2);
        for (r, row) in qp.ineq().iter().enumerate() {
            assert_eq!(row.a.dot(&origin) + row.b, ineq_values[r]);
        }
        assert_eq!(qp.eq()[0].a.dot(&origin) + qp.eq()[0].b, eq_values[0]);
    }

    #[test]
    fn elastic_with_feasible_base_matches_plain_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut compared = 0;
        for _ in 0..60 {
            let qp = random_qp(&mut rng, true);
            if detect_feasibility(&qp).unwrap() == Feasibility::Infeasible {
                continue;
            }
            let sol = solve_qp(&qp).unwrap();
            let mult_bound = sol
                .ineq_mult
                .iter()
                .chain(sol.eq_mult.iter())
                .fold(0.0f64, |acc, &m| acc.max(m.abs()));
            let rho_bar = (mult_bound * 4.0).max(10.0);
            let esol = solve_elastic(&build_elastic(qp.clone(), rho_bar).unwrap()).unwrap();
            assert_eq!(esol.status, QpStatus::ElasticSolved);
            let slacks = esol.slacks.as_ref().unwrap();
            assert!(slacks.total() < 1e-7, "slacks {}", slacks.total());
            assert!(
                (&esol.z - &sol.z).amax() < 1e-6,
                "gap {}",
                (&esol.z - &sol.z).amax()
            );
            compared += 1;
        }
        assert!(compared > 20);
    }

    #[test]
    fn elastic_on_contradictory_pair_splits_violation_symmetrically() {
        // z_1 + 1 <= 0 and -z_1 + 1 <= 0 with H = I, g = 0, rho_bar = 100:
        // optimum z = 0 with both slacks -1 and both multipliers at the bound
        let qp = identity_qp(
            vec![0.0, 0.0],
            vec![row(vec![1.0, 0.0], 1.0), row(vec![-1.0, 0.0], 1.0)],
            vec![],
        );
        let esol = solve_elastic(&build_elastic(qp, 100.0).unwrap()).unwrap();
        assert!(esol.z.amax() < 1e-7, "z = {}", esol.z);
        let slacks = esol.slacks.unwrap();
        assert_relative_eq!(slacks.v[0], -1.0, epsilon = 1e-6);
        assert_relative_eq!(slacks.v[1], -1.0, epsilon = 1e-6);
        assert_relative_eq!(esol.ineq_mult[0], 100.0, epsilon = 1e-5);
        assert_relative_eq!(esol.ineq_mult[1], 100.0, epsilon = 1e-5);
    }

    #[test]
    fn elastic_multipliers_respect_penalty_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..60 {
            let qp = random_qp(&mut rng, true);
            let rho_bar = 10.0;
            let esol = solve_elastic(&build_elastic(qp, rho_bar).unwrap()).unwrap();
            for &l in esol.ineq_mult.iter() {
                assert!(l >= -1e-9 && l <= rho_bar + 1e-6, "lambda {l}");
            }
            for &m in esol.eq_mult.iter() {
                assert!(m.abs() <= rho_bar + 1e-6, "mu {m}");
            }
            let slacks = esol.slacks.unwrap();
            for v in slacks
                .v
                .iter()
                .chain(slacks.w_plus.iter())
                .chain(slacks.w_minus.iter())
            {
                assert!(*v <= 1e-12, "positive slack {v}");
            }
        }
    }

    #[test]
    fn closed_form_elastic_point_satisfies_every_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let mi = rng.gen_range(0..6);
            let me = rng.gen_range(0..4);
            let g = DVector::from_fn(mi, |_, _| rng.gen_range(-2.0..2.0));
            let h = DVector::from_fn(me, |_, _| rng.gen_range(-2.0..2.0));
            let slacks = elastic_feasible_point(&g, &h);
            for i in 0..mi {
                assert!(g[i] + slacks.v[i] <= 0.0, "relaxed inequality row");
                assert!(slacks.v[i] <= 0.0);
            }
            for j in 0..me {
                assert_eq!(h[j] + slacks.w_plus[j] - slacks.w_minus[j], 0.0);
                assert!(slacks.w_plus[j] <= 0.0 && slacks.w_minus[j] <= 0.0);
            }
        }
    }

    #[test]
    fn elastic_point_cases_from_sign_split() {
        let g = DVector::from_vec(vec![0.7, -0.2, 0.0]);
        let h = DVector::from_vec(vec![-0.4, 0.0, 0.9]);
        let s = elastic_feasible_point(&g, &h);
        assert_eq!(s.v[0], -0.7); // positive value: row holds with equality
        assert_eq!(s.v[1], 0.0);
        assert_eq!(s.v[2], 0.0);
        assert_eq!((s.w_plus[0], s.w_minus[0]), (0.0, -0.4));
        assert_eq!((s.w_plus[1], s.w_minus[1]), (0.0, 0.0));
        assert_eq!((s.w_plus[2], s.w_minus[2]), (-0.9, 0.0));
    }

    #[test]
    fn constant_violated_row_triggers_infeasibility_and_elastic_absorbs_it() {
        // a band row linearized at the band center has zero gradient and a
        // positive offset: unsalvageable for the plain subproblem
        let qp = identity_qp(
            vec![0.2, -0.1],
            vec![row(vec![0.0, 0.0], 0.04), row(vec![1.0, 0.0], -0.5)],
            vec![],
        );
        assert_eq!(detect_feasibility(&qp).unwrap(), Feasibility::Infeasible);
        let esol = solve_elastic(&build_elastic(qp, 100.0).unwrap()).unwrap();
        let slacks = esol.slacks.unwrap();
        assert_relative_eq!(slacks.v[0], -0.04, epsilon = 1e-8);
        assert!(slacks.v[1].abs() < 1e-8);
    }

    #[test]
    fn solver_failure_is_distinct_from_infeasible() {
        // iteration exhaustion carries context; infeasibility is a status
        let qp = identity_qp(
            vec![0.0],
            vec![row(vec![1.0], 1.0), row(vec![-1.0], 1.0)],
            vec![],
        );
        match solve_qp(&qp) {
            Ok(sol) => assert_eq!(sol.status, QpStatus::Infeasible),
            Err(e) => panic!("expected infeasible status, got error {e}"),
        }
    }

    #[test]
    fn dump_round_trips_visually() {
        let qp = identity_qp(
            vec![0.5, -1.0],
            vec![row(vec![1.0, 2.0], -0.25)],
            vec![row(vec![0.0, 1.0], 0.1)],
        );
        let mut buf = Vec::new();
        qp.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("dim 2 ineq 1 eq 1\n"));
        assert!(text.contains("ineq 1 2 ; -0.25"));
        assert!(text.contains("eq 0 1 ; 0.1"));
    }

    #[test]
    fn rejects_indefinite_or_asymmetric_hessians() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(QpProblem::new(h, DVector::zeros(2), vec![], vec![]).is_err());
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QpProblem::new(h, DVector::zeros(2), vec![], vec![]).is_err());
    }
}
