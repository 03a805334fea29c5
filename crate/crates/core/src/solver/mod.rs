//! The elastic sequential quadratic optimization outer loop: a search
//! direction from the quadratic subproblem (or its elastic relaxation when
//! the linearized constraints are inconsistent), a multiplier-driven penalty
//! update, an Armijo line search on the l1 merit function, and per-iteration
//! KKT diagnostics.

mod diagnostics;
mod problem;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qp::{
    QpSolution, QpStatus, build_elastic, build_subproblem, infeasible_last_iterate, solve_elastic,
    solve_qp,
};

pub use diagnostics::{GradCheckReport, gradient_check};
pub use problem::{FlatConstraintValues, Linearization, Problem};

/// Choice of the quadratic model operator. Only the identity is supported;
/// in the orthonormal chart it doubles as the exact metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum HChoice {
    #[default]
    Identity,
}

/// Solver hyperparameters. Defaults follow the reference experiment setup:
/// elastic penalty `1e2`, initial penalty `1e-3`, penalty margin `1e-4`,
/// Armijo ratio `0.9`, Armijo constant `0.25`, and a fixed 200-iteration
/// budget with early stopping disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Elastic penalty weight (rho-bar).
    pub rho_bar: f64,
    /// Initial merit penalty (rho at iteration -1).
    pub rho_init: f64,
    /// Margin added when the penalty must grow to cover the multipliers.
    pub eps_pen: f64,
    /// Armijo backtracking ratio, in (0, 1).
    pub beta: f64,
    /// Armijo sufficient-decrease constant, in (0, 1).
    pub sigma: f64,
    pub max_iter: usize,
    /// With this off, an infeasible subproblem is answered with the last
    /// iterate of a capped solve attempt instead of the elastic subproblem.
    pub elastic_enabled: bool,
    pub h_choice: HChoice,
    /// Stop before `max_iter` once the direction norm and the constraint
    /// violation fall below their tolerances. Off by default to match the
    /// fixed-iteration protocol.
    pub early_stop: bool,
    pub dir_norm_tol: f64,
    pub violation_tol: f64,
    /// Maximum number of Armijo trials per iteration.
    pub line_search_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho_bar: 1e2,
            rho_init: 1e-3,
            eps_pen: 1e-4,
            beta: 0.9,
            sigma: 0.25,
            max_iter: 200,
            elastic_enabled: true,
            h_choice: HChoice::Identity,
            early_stop: false,
            dir_norm_tol: 1e-10,
            violation_tol: 1e-9,
            line_search_cap: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_bar > 0.0 && self.rho_init > 0.0 && self.eps_pen > 0.0) {
            return Err(Error::InvalidConfig(
                "rho_bar, rho_init, and eps_pen must be positive".into(),
            ));
        }
        if !(self.beta > 0.0 && self.beta < 1.0 && self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidConfig(
                "beta and sigma must lie strictly between 0 and 1".into(),
            ));
        }
        if self.max_iter == 0 || self.line_search_cap == 0 {
            return Err(Error::InvalidConfig(
                "iteration and line-search budgets must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Current primal-dual state of the outer loop.
#[derive(Debug, Clone)]
pub struct IterateState<P> {
    pub x: P,
    pub ineq_mult: DVector<f64>,
    pub eq_mult: DVector<f64>,
    pub rho: f64,
    pub k: usize,
}

/// One completed outer iteration. Diagnostics are evaluated at the post-step
/// iterate with the freshly updated multipliers.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub cost: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub rho: f64,
    pub alpha: f64,
    pub dir_norm: f64,
    pub elastic: bool,
    pub qp_status: String,
    pub merit: f64,
    /// Merit of the pre-step iterate under the same penalty, so the accepted
    /// Armijo inequality can be replayed from the trace.
    pub merit_before: f64,
    pub multiplier_max: f64,
    pub point_norm: f64,
    /// Total elastic slack magnitude (elastic iterations only).
    pub slack_total: Option<f64>,
    /// Forward-difference estimate of the one-sided merit derivative along
    /// the direction, at the smallest probe step (elastic iterations only).
    pub descent_fd: Option<f64>,
    /// The bound the estimate is compared against: `-<H d, d>`.
    pub descent_bound: Option<f64>,
}

/// Full per-iteration history of one solve.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub wall_time_s: f64,
    pub early_stopped: bool,
    /// Set when the updated penalty ever exceeded `rho_bar`, voiding the
    /// elastic descent guarantee for later elastic iterations.
    pub rho_exceeded_rho_bar: bool,
}

impl SolverTrace {
    /// Writes the per-iteration columns
    /// `iter,cost,kkt_residual,max_violation,rho,alpha,dir_norm,elastic,qp_status`.
    pub fn to_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            w,
            "iter,cost,kkt_residual,max_violation,rho,alpha,dir_norm,elastic,qp_status"
        )?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.iter,
                r.cost,
                r.kkt_residual,
                r.max_violation,
                r.rho,
                r.alpha,
                r.dir_norm,
                r.elastic,
                r.qp_status
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A failed solve still carries the iterations completed before the failure.
#[derive(Debug)]
pub struct SolveFailure {
    pub error: Error,
    pub trace: SolverTrace,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} completed iterations)",
            self.error,
            self.trace.records.len()
        )
    }
}

impl std::error::Error for SolveFailure {}

#[derive(Debug, Clone)]
pub struct SolveOutcome<P> {
    pub state: IterateState<P>,
    pub trace: SolverTrace,
}

/// Search direction with the multiplier estimates attached.
#[derive(Debug, Clone)]
pub struct Direction {
    pub z: DVector<f64>,
    pub ineq_mult: DVector<f64>,
    pub eq_mult: DVector<f64>,
    pub elastic: bool,
    pub qp_status: QpStatus,
    pub slack_total: Option<f64>,
    /// `<H z, z>`, the curvature term of the Armijo bound.
    pub hdd: f64,
}

fn identity_h(dim: usize) -> DMatrix<f64> {
    DMatrix::identity(dim, dim)
}

fn direction_from_linearization(
    lin: &Linearization,
    dim: usize,
    config: &SolverConfig,
) -> Result<Direction> {
    let HChoice::Identity = config.h_choice;
    let qp = build_subproblem(
        lin.grad.clone(),
        &lin.ineq_values,
        &lin.ineq_grads,
        &lin.eq_values,
        &lin.eq_grads,
        identity_h(dim),
    )?;
    // a subproblem the solver cannot finish is treated like a detected
    // infeasibility: that is exactly how an external solver's failure flag
    // drives the elastic mode
    let sol = match solve_qp(&qp) {
        Ok(sol) => sol,
        Err(Error::QpSolverFailure { .. }) => QpSolution {
            z: DVector::zeros(qp.dim()),
            ineq_mult: DVector::zeros(qp.ineq().len()),
            eq_mult: DVector::zeros(qp.eq().len()),
            slacks: None,
            status: QpStatus::Infeasible,
            iterations: 0,
        },
        Err(e) => return Err(e),
    };
    match sol.status {
        QpStatus::Solved => Ok(Direction {
            hdd: sol.z.norm_squared(),
            z: sol.z,
            ineq_mult: sol.ineq_mult,
            eq_mult: sol.eq_mult,
            elastic: false,
            qp_status: QpStatus::Solved,
            slack_total: None,
        }),
        QpStatus::Infeasible if config.elastic_enabled => {
            let esol = solve_elastic(&build_elastic(qp, config.rho_bar)?)?;
            let slack_total = esol.slacks.as_ref().map(|s| s.total());
            Ok(Direction {
                hdd: esol.z.norm_squared(),
                z: esol.z,
                ineq_mult: esol.ineq_mult,
                eq_mult: esol.eq_mult,
                elastic: true,
                qp_status: QpStatus::ElasticSolved,
                slack_total,
            })
        }
        QpStatus::Infeasible => {
            // baseline without the elastic mode: emulate an external solver
            // that hands back the iterate it stopped at, diverging duals
            // included
            let last = infeasible_last_iterate(&qp, RSQO_FALLBACK_ITERATIONS);
            Ok(Direction {
                hdd: last.z.norm_squared(),
                z: last.z,
                ineq_mult: last.ineq_mult,
                eq_mult: last.eq_mult,
                elastic: false,
                qp_status: QpStatus::Infeasible,
                slack_total: None,
            })
        }
        QpStatus::ElasticSolved => unreachable!("solve_qp never reports elastic status"),
    }
}

/// Computes the search direction at `x`: the subproblem optimum when its
/// feasible region is nonempty, the elastic optimum otherwise (or the
/// phase-I fallback when the elastic mode is disabled).
pub fn compute_direction<P: Problem>(
    problem: &P,
    x: &P::Point,
    config: &SolverConfig,
) -> Result<Direction> {
    let lin = problem.linearize(x)?;
    direction_from_linearization(&lin, problem.dim(), config)
}

/// Penalty update: keep the previous penalty when it already dominates the
/// multiplier magnitudes, otherwise jump to that magnitude plus `eps`. The
/// maximum over empty multiplier sets is taken as 0, so unconstrained
/// problems keep their initial penalty.
pub fn penalty_update(
    rho_prev: f64,
    ineq_mult: &DVector<f64>,
    eq_mult: &DVector<f64>,
    eps: f64,
) -> f64 {
    let lambda_max = ineq_mult.iter().fold(0.0f64, |acc, &l| acc.max(l));
    let mu_max = eq_mult.iter().fold(0.0f64, |acc, &m| acc.max(m.abs()));
    let bound = lambda_max.max(mu_max);
    if rho_prev >= bound {
        rho_prev
    } else {
        bound + eps
    }
}

/// l1 merit function `F(x) = f(x) + rho (sum max{0, g} + sum |h|)`.
pub fn merit_value<P: Problem>(problem: &P, x: &P::Point, rho: f64) -> Result<f64> {
    let cost = problem.cost(x)?;
    let values = problem.constraint_values(x)?;
    Ok(cost + rho * values.violation_sum())
}

/// Accepted line-search step with the quantities already evaluated at the
/// new point.
#[derive(Debug, Clone)]
struct StepResult<P> {
    alpha: f64,
    point: P,
    cost: f64,
    values: FlatConstraintValues,
    merit: f64,
    merit_origin: f64,
}

fn line_search_impl<P: Problem>(
    problem: &P,
    x: &P::Point,
    d: &DVector<f64>,
    hdd: f64,
    rho: f64,
    config: &SolverConfig,
    iteration: usize,
) -> std::result::Result<StepResult<P::Point>, Error> {
    let merit_origin = merit_value(problem, x, rho)?;
    for l in 0..=config.line_search_cap {
        let alpha = config.beta.powi(l as i32);
        let trial = problem.retract(x, &(d * alpha))?;
        let cost = problem.cost(&trial)?;
        let values = problem.constraint_values(&trial)?;
        let merit = cost + rho * values.violation_sum();
        if config.sigma * alpha * hdd <= merit_origin - merit {
            return Ok(StepResult {
                alpha,
                point: trial,
                cost,
                values,
                merit,
                merit_origin,
            });
        }
    }
    Err(Error::LineSearchFailure {
        iteration,
        trials: config.line_search_cap,
    })
}

/// Armijo backtracking on the l1 merit: the accepted step is the largest
/// `beta^l` with `sigma beta^l <H d, d> <= F(x) - F(retract(x, beta^l d))`.
pub fn line_search<P: Problem>(
    problem: &P,
    x: &P::Point,
    d: &DVector<f64>,
    rho: f64,
    config: &SolverConfig,
) -> Result<(f64, P::Point)> {
    let hdd = d.norm_squared();
    let step = line_search_impl(problem, x, d, hdd, rho, config, 0)?;
    Ok((step.alpha, step.point))
}

/// KKT residual: the 2-norm of the Lagrangian gradient stacked with the
/// squared violation, multiplier-negativity, and complementarity blocks,
/// square-rooted, plus the manifold-violation indicator (infinite off the
/// search space, zero on it).
pub fn kkt_residual_from_linearization<P: Problem>(
    problem: &P,
    x: &P::Point,
    lin: &Linearization,
    ineq_mult: &DVector<f64>,
    eq_mult: &DVector<f64>,
) -> f64 {
    let mut grad_l = lin.grad.clone();
    for (a, &l) in lin.ineq_grads.iter().zip(ineq_mult.iter()) {
        grad_l += a * l;
    }
    for (a, &m) in lin.eq_grads.iter().zip(eq_mult.iter()) {
        grad_l += a * m;
    }
    let cstr_err = lin
        .ineq_values
        .iter()
        .map(|&g| g.max(0.0).powi(2))
        .sum::<f64>()
        + lin.eq_values.iter().map(|&h| h * h).sum::<f64>();
    let mult_err = ineq_mult.iter().map(|&l| (-l).max(0.0).powi(2)).sum::<f64>();
    let compl_err = lin
        .ineq_values
        .iter()
        .zip(ineq_mult.iter())
        .map(|(&g, &l)| (l * g).powi(2))
        .sum::<f64>();
    let man_vio = if problem.on_manifold(x) { 0.0 } else { f64::INFINITY };
    (grad_l.norm_squared() + cstr_err + mult_err + compl_err).sqrt() + man_vio
}

/// KKT residual at `x` with the given multipliers.
pub fn kkt_residual<P: Problem>(
    problem: &P,
    x: &P::Point,
    ineq_mult: &DVector<f64>,
    eq_mult: &DVector<f64>,
) -> Result<f64> {
    let lin = problem.linearize(x)?;
    Ok(kkt_residual_from_linearization(
        problem, x, &lin, ineq_mult, eq_mult,
    ))
}

/// Probe steps for the forward-difference estimate of the one-sided merit
/// derivative checked on elastic iterations.
const DESCENT_PROBE_STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Interior-point iterations granted to the emulated infeasible solve of the
/// baseline without the elastic mode.
const RSQO_FALLBACK_ITERATIONS: usize = 20;

/// Directions below this norm are numerically zero; they are snapped to an
/// exact zero step so the Armijo comparison stays exact at a fixed point.
const DIR_SNAP_TOL: f64 = 1e-14;

/// Runs the solver from `x0`, calling `observer` after every completed
/// iteration with the new iterate and its trace record.
pub fn solve_observed<P: Problem>(
    problem: &P,
    x0: P::Point,
    config: &SolverConfig,
    mut observer: impl FnMut(&P::Point, &TraceRecord),
) -> std::result::Result<SolveOutcome<P::Point>, SolveFailure> {
    let started = std::time::Instant::now();
    let mut trace = SolverTrace::default();

    let fail = |error: Error, mut trace: SolverTrace| {
        trace.wall_time_s = started.elapsed().as_secs_f64();
        SolveFailure { error, trace }
    };

    if let Err(e) = config.validate() {
        return Err(fail(e, trace));
    }

    let mut x = x0;
    let mut rho = config.rho_init;
    let mut ineq_mult = DVector::zeros(0);
    let mut eq_mult = DVector::zeros(0);
    let mut lin = match problem.linearize(&x) {
        Ok(l) => l,
        Err(e) => return Err(fail(e, trace)),
    };

    let mut k = 0;
    while k < config.max_iter {
        let mut dir = match direction_from_linearization(&lin, problem.dim(), config) {
            Ok(d) => d,
            Err(e) => return Err(fail(e, trace)),
        };
        if dir.z.norm() <= DIR_SNAP_TOL {
            dir.z.fill(0.0);
            dir.hdd = 0.0;
        }
        let current_violation = FlatConstraintValues {
            ineq: lin.ineq_values.clone(),
            eq: lin.eq_values.clone(),
        }
        .max_violation();
        if config.early_stop
            && dir.z.norm() <= config.dir_norm_tol
            && current_violation <= config.violation_tol
        {
            trace.early_stopped = true;
            break;
        }
        rho = penalty_update(rho, &dir.ineq_mult, &dir.eq_mult, config.eps_pen);
        if rho > config.rho_bar {
            trace.rho_exceeded_rho_bar = true;
        }
        let multiplier_max = dir
            .ineq_mult
            .iter()
            .map(|l| l.abs())
            .chain(dir.eq_mult.iter().map(|m| m.abs()))
            .fold(0.0f64, f64::max);

        // descent-property probe on elastic iterations, before stepping
        let (descent_fd, descent_bound) = if dir.elastic {
            let probe = (|| -> Result<f64> {
                let f0 = merit_value(problem, &x, rho)?;
                let mut est = f64::NAN;
                for &h in &DESCENT_PROBE_STEPS {
                    let xt = problem.retract(&x, &(&dir.z * h))?;
                    est = (merit_value(problem, &xt, rho)? - f0) / h;
                }
                Ok(est)
            })();
            match probe {
                Ok(est) => (Some(est), Some(-dir.hdd)),
                Err(e) => return Err(fail(e, trace)),
            }
        } else {
            (None, None)
        };

        let step = match line_search_impl(problem, &x, &dir.z, dir.hdd, rho, config, k) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, trace)),
        };

        let new_lin = match problem.linearize(&step.point) {
            Ok(l) => l,
            Err(e) => return Err(fail(e, trace)),
        };
        let kkt = kkt_residual_from_linearization(
            problem,
            &step.point,
            &new_lin,
            &dir.ineq_mult,
            &dir.eq_mult,
        );

        let dir_norm = dir.z.norm();
        let record = TraceRecord {
            iter: k,
            cost: step.cost,
            kkt_residual: kkt,
            max_violation: step.values.max_violation(),
            rho,
            alpha: step.alpha,
            dir_norm,
            elastic: dir.elastic,
            qp_status: format!("{:?}", dir.qp_status),
            merit: step.merit,
            merit_before: step.merit_origin,
            multiplier_max,
            point_norm: problem.point_norm(&step.point),
            slack_total: dir.slack_total,
            descent_fd,
            descent_bound,
        };
        observer(&step.point, &record);
        trace.records.push(record);

        x = step.point;
        lin = new_lin;
        ineq_mult = dir.ineq_mult;
        eq_mult = dir.eq_mult;
        k += 1;
    }

    trace.wall_time_s = started.elapsed().as_secs_f64();
    Ok(SolveOutcome {
        state: IterateState {
            x,
            ineq_mult,
            eq_mult,
            rho,
            k,
        },
        trace,
    })
}

/// Runs the solver from `x0` for `config.max_iter` iterations (or until the
/// early-stop tolerances are met, when enabled).
pub fn solve<P: Problem>(
    problem: &P,
    x0: P::Point,
    config: &SolverConfig,
) -> std::result::Result<SolveOutcome<P::Point>, SolveFailure> {
    solve_observed(problem, x0, config, |_, _| {})
}
