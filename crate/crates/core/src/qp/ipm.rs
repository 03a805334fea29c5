//! Dense primal-dual interior point core with Mehrotra predictor-corrector
//! steps. Handles `min 1/2 w^T H w + g^T w` subject to `A w + b <= 0` and
//! `C w + d = 0` with `H` positive semidefinite; strong convexity is only
//! required of the problems the public layer admits, the core itself relies
//! on a regularized augmented KKT factorization plus iterative refinement
//! against the unregularized system.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Static regularization of the augmented KKT matrix (positive on the primal
/// block, negative on the dual blocks).
const REG: f64 = 1e-10;
/// Convergence tolerance on scaled residuals and the complementarity gap.
const TOL: f64 = 1e-11;
const MAX_ITER: usize = 100;
/// Residual level below which a stagnated iterate is still accepted.
const STALL_ACCEPT: f64 = 1e-9;
const FRACTION_TO_BOUNDARY: f64 = 0.995;
/// Bounds on the barrier diagonal `s_i / lambda_i`.
const BARRIER_CLAMP: f64 = 1e14;

pub(crate) struct IpmInput<'a> {
    pub h: &'a DMatrix<f64>,
    pub g: &'a DVector<f64>,
    /// Inequality rows `a^T w + b <= 0`, one row per matrix row.
    pub a_ineq: &'a DMatrix<f64>,
    pub b_ineq: &'a DVector<f64>,
    /// Equality rows `c^T w + d = 0`.
    pub a_eq: &'a DMatrix<f64>,
    pub b_eq: &'a DVector<f64>,
    pub warm_start: Option<&'a DVector<f64>>,
}

/// `(dw, dmu, ds, dlambda)` blocks of one Newton direction.
type NewtonDirection = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);

pub(crate) struct IpmOutput {
    pub w: DVector<f64>,
    pub lambda: DVector<f64>,
    pub mu: DVector<f64>,
    pub iterations: usize,
}

pub(crate) fn ipm_solve(input: &IpmInput<'_>, context: &str) -> Result<IpmOutput> {
    let nv = input.g.len();
    let mi = input.b_ineq.len();
    let me = input.b_eq.len();
    debug_assert_eq!(input.h.nrows(), nv);

    if mi == 0 {
        return solve_equality_only(input, context);
    }

    // normalize the objective so penalty-dominated costs (elastic slack
    // weights) do not wreck the step scaling; the primal solution is
    // unchanged and the multipliers scale back by the same factor
    let obj_scale = (1.0f64).max(input.g.amax()).max(input.h.amax());
    if obj_scale > 1.0 {
        let h = input.h / obj_scale;
        let g = input.g / obj_scale;
        let scaled = IpmInput {
            h: &h,
            g: &g,
            a_ineq: input.a_ineq,
            b_ineq: input.b_ineq,
            a_eq: input.a_eq,
            b_eq: input.b_eq,
            warm_start: input.warm_start,
        };
        let mut out = ipm_solve(&scaled, context)?;
        out.lambda *= obj_scale;
        out.mu *= obj_scale;
        return Ok(out);
    }

    let mut w = match input.warm_start {
        Some(w0) => w0.clone(),
        None => DVector::zeros(nv),
    };
    let mut mu = DVector::<f64>::zeros(me);
    let mut lambda = DVector::from_element(mi, 1.0);
    let row_vals = input.a_ineq * &w + input.b_ineq;
    let mut s = DVector::from_fn(mi, |i, _| row_vals[i].abs().max(1.0));

    let scale_d = 1.0 + input.g.amax();
    let scale_p = 1.0 + input.b_ineq.amax();
    let scale_e = 1.0 + if me > 0 { input.b_eq.amax() } else { 0.0 };
    let k = nv + mi + me;
    let mut best_metric = f64::INFINITY;
    let mut best: Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> = None;
    let mut stagnant = 0usize;

    for iter in 0..MAX_ITER {
        let r_d = input.h * &w
            + input.g
            + input.a_ineq.transpose() * &lambda
            + input.a_eq.transpose() * &mu;
        let r_p = input.a_ineq * &w + input.b_ineq + &s;
        let r_e = input.a_eq * &w + input.b_eq;
        let gap = lambda.dot(&s) / mi as f64;

        let metric = (r_d.amax() / scale_d)
            .max(r_p.amax() / scale_p)
            .max(if me > 0 { r_e.amax() / scale_e } else { 0.0 })
            .max(gap / scale_d);
        if metric <= TOL {
            let (w, lambda, mu) = polish(input, w, lambda, mu, &s);
            return Ok(IpmOutput {
                w,
                lambda,
                mu,
                iterations: iter,
            });
        }
        // refinement precision can floor the residuals above TOL; accept a
        // stagnated iterate while it is still well inside the 1e-8 contract
        if metric >= 0.9 * best_metric {
            stagnant += 1;
            if stagnant >= 6 && best_metric <= STALL_ACCEPT {
                let (w, lambda, mu, s) = best.expect("best tracked below stall level");
                let (w, lambda, mu) = polish(input, w, lambda, mu, &s);
                return Ok(IpmOutput {
                    w,
                    lambda,
                    mu,
                    iterations: iter,
                });
            }
        } else {
            stagnant = 0;
        }
        if metric < best_metric {
            best_metric = metric;
            best = Some((w.clone(), lambda.clone(), mu.clone(), s.clone()));
        }
        if !w.iter().all(|v| v.is_finite()) || lambda.amax() > 1e14 {
            if best_metric <= STALL_ACCEPT {
                let (w, lambda, mu, s) = best.expect("best tracked below stall level");
                let (w, lambda, mu) = polish(input, w, lambda, mu, &s);
                return Ok(IpmOutput { w, lambda, mu, iterations: iter });
            }
            return Err(Error::QpSolverFailure {
                iterations: iter,
                context: format!("{context}: iterates diverged"),
            });
        }

        // augmented KKT matrix
        //   [ H + dI   A^T        C^T ]
        //   [ A       -S/L - dI   0   ]
        //   [ C        0         -dI  ]
        let barrier = DVector::from_fn(mi, |i, _| {
            (s[i] / lambda[i]).clamp(1.0 / BARRIER_CLAMP, BARRIER_CLAMP)
        });
        let mut m = DMatrix::zeros(k, k);
        for i in 0..nv {
            for j in 0..nv {
                m[(i, j)] = input.h[(i, j)];
            }
            m[(i, i)] += REG;
        }
        for r in 0..mi {
            for c in 0..nv {
                m[(nv + r, c)] = input.a_ineq[(r, c)];
                m[(c, nv + r)] = input.a_ineq[(r, c)];
            }
            m[(nv + r, nv + r)] = -barrier[r] - REG;
        }
        for r in 0..me {
            for c in 0..nv {
                m[(nv + mi + r, c)] = input.a_eq[(r, c)];
                m[(c, nv + mi + r)] = input.a_eq[(r, c)];
            }
            m[(nv + mi + r, nv + mi + r)] = -REG;
        }
        let lu = m.lu();

        // Newton solve for a complementarity target rc, refined against the
        // unregularized augmented system
        let solve_direction = |rc: &DVector<f64>| -> Option<NewtonDirection> {
                let mut rhs = DVector::zeros(k);
                for i in 0..nv {
                    rhs[i] = -r_d[i];
                }
                for r in 0..mi {
                    rhs[nv + r] = -r_p[r] + rc[r] / lambda[r];
                }
                for r in 0..me {
                    rhs[nv + mi + r] = -r_e[r];
                }
                let mut sol = lu.solve(&rhs)?;
                for _ in 0..2 {
                    let dw = sol.rows(0, nv).into_owned();
                    let dl = sol.rows(nv, mi).into_owned();
                    let dmu = sol.rows(nv + mi, me).into_owned();
                    let mut resid = rhs.clone();
                    let top = input.h * &dw
                        + input.a_ineq.transpose() * &dl
                        + input.a_eq.transpose() * &dmu;
                    for i in 0..nv {
                        resid[i] -= top[i];
                    }
                    let adw = input.a_ineq * &dw;
                    for r in 0..mi {
                        resid[nv + r] -= adw[r] - (s[r] / lambda[r]) * dl[r];
                    }
                    let edw = input.a_eq * &dw;
                    for r in 0..me {
                        resid[nv + mi + r] -= edw[r];
                    }
                    let corr = lu.solve(&resid)?;
                    sol += corr;
                }
                let dw = sol.rows(0, nv).into_owned();
                let dl = sol.rows(nv, mi).into_owned();
                let dmu = sol.rows(nv + mi, me).into_owned();
                let ds = -&r_p - input.a_ineq * &dw;
                Some((dw, dmu, ds, dl))
            };

        // predictor
        let rc_aff = DVector::from_fn(mi, |i, _| lambda[i] * s[i]);
        let Some((_, _, ds_aff, dl_aff)) = solve_direction(&rc_aff) else {
            return Err(Error::QpSolverFailure {
                iterations: iter,
                context: format!("{context}: singular KKT system"),
            });
        };
        let alpha_p_aff = max_step(&s, &ds_aff);
        let alpha_d_aff = max_step(&lambda, &dl_aff);
        let gap_aff = (0..mi)
            .map(|i| (lambda[i] + alpha_d_aff * dl_aff[i]) * (s[i] + alpha_p_aff * ds_aff[i]))
            .sum::<f64>()
            / mi as f64;
        let sigma = if gap > 0.0 {
            (gap_aff / gap).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // corrector
        let rc = DVector::from_fn(mi, |i, _| {
            lambda[i] * s[i] + dl_aff[i] * ds_aff[i] - sigma * gap
        });
        let Some((dw, dmu, ds, dl)) = solve_direction(&rc) else {
            return Err(Error::QpSolverFailure {
                iterations: iter,
                context: format!("{context}: singular KKT system"),
            });
        };

        let alpha_p = (FRACTION_TO_BOUNDARY * max_step(&s, &ds)).min(1.0);
        let alpha_d = (FRACTION_TO_BOUNDARY * max_step(&lambda, &dl)).min(1.0);
        w += &dw * alpha_p;
        s += &ds * alpha_p;
        lambda += &dl * alpha_d;
        mu += &dmu * alpha_d;
    }

    if best_metric <= STALL_ACCEPT {
        let (w, lambda, mu, s) = best.expect("best tracked below stall level");
        let (w, lambda, mu) = polish(input, w, lambda, mu, &s);
        return Ok(IpmOutput {
            w,
            lambda,
            mu,
            iterations: MAX_ITER,
        });
    }
    Err(Error::QpSolverFailure {
        iterations: MAX_ITER,
        context: format!("{context}: iteration limit reached"),
    })
}

/// Worst KKT violation of a candidate triple, used to decide whether the
/// polished solution actually improved on the interior-point iterate.
fn kkt_metric(input: &IpmInput<'_>, w: &DVector<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    let r_d = input.h * w + input.g + input.a_ineq.transpose() * lambda + input.a_eq.transpose() * mu;
    let mut worst = r_d.amax();
    let vals = input.a_ineq * w + input.b_ineq;
    for i in 0..vals.len() {
        worst = worst.max(vals[i]).max(-lambda[i]).max((lambda[i] * vals[i]).abs());
    }
    let eq_vals = input.a_eq * w + input.b_eq;
    if !eq_vals.is_empty() {
        worst = worst.max(eq_vals.amax());
    }
    worst
}

/// Active-set polish: weakly active rows leave an interior-point iterate a
/// little off the exact vertex. Guess the active set from the converged
/// slack/multiplier split, re-solve that equality-constrained system
/// directly, and keep the result when it is feasible and strictly better.
fn polish(
    input: &IpmInput<'_>,
    w: DVector<f64>,
    lambda: DVector<f64>,
    mu: DVector<f64>,
    s: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let nv = input.g.len();
    let mi = lambda.len();
    let me = mu.len();
    let active: Vec<usize> = (0..mi).filter(|&i| s[i] < lambda[i]).collect();
    let na = active.len();
    let k = nv + na + me;

    let mut kkt = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for i in 0..nv {
        for j in 0..nv {
            kkt[(i, j)] = input.h[(i, j)];
        }
        kkt[(i, i)] += REG;
        rhs[i] = -input.g[i];
    }
    for (t, &r) in active.iter().enumerate() {
        for c in 0..nv {
            kkt[(nv + t, c)] = input.a_ineq[(r, c)];
            kkt[(c, nv + t)] = input.a_ineq[(r, c)];
        }
        kkt[(nv + t, nv + t)] = -REG;
        rhs[nv + t] = -input.b_ineq[r];
    }
    for r in 0..me {
        for c in 0..nv {
            kkt[(nv + na + r, c)] = input.a_eq[(r, c)];
            kkt[(c, nv + na + r)] = input.a_eq[(r, c)];
        }
        kkt[(nv + na + r, nv + na + r)] = -REG;
        rhs[nv + na + r] = -input.b_eq[r];
    }
    let lu = kkt.clone().lu();
    let Some(mut sol) = lu.solve(&rhs) else {
        return (w, lambda, mu);
    };
    // refinement against the unregularized saddle system
    let mut kkt_true = kkt;
    for i in 0..nv {
        kkt_true[(i, i)] -= REG;
    }
    for t in 0..na + me {
        kkt_true[(nv + t, nv + t)] += REG;
    }
    for _ in 0..2 {
        let resid = &rhs - &kkt_true * &sol;
        if let Some(corr) = lu.solve(&resid) {
            sol += corr;
        }
    }
    let wp = sol.rows(0, nv).into_owned();
    let mut lp = DVector::zeros(mi);
    for (t, &r) in active.iter().enumerate() {
        lp[r] = sol[nv + t];
    }
    let mp = sol.rows(nv + na, me).into_owned();
    if !wp.iter().all(|v| v.is_finite()) {
        return (w, lambda, mu);
    }
    if kkt_metric(input, &wp, &lp, &mp) < kkt_metric(input, &w, &lambda, &mu) {
        (wp, lp, mp)
    } else {
        (w, lambda, mu)
    }
}

/// Largest step in [0, 1] keeping `x + alpha dx > 0` componentwise.
fn max_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let mut alpha = 1.0f64;
    for i in 0..x.len() {
        if dx[i] < 0.0 {
            alpha = alpha.min(-x[i] / dx[i]);
        }
    }
    alpha
}

/// Direct saddle solve for problems without inequality rows.
fn solve_equality_only(input: &IpmInput<'_>, context: &str) -> Result<IpmOutput> {
    let nv = input.g.len();
    let me = input.b_eq.len();
    if me == 0 {
        if let Some(chol) = input.h.clone().cholesky() {
            return Ok(IpmOutput {
                w: chol.solve(&(-input.g)),
                lambda: DVector::zeros(0),
                mu: DVector::zeros(0),
                iterations: 0,
            });
        }
    }
    let mut m = DMatrix::zeros(nv + me, nv + me);
    for i in 0..nv {
        for j in 0..nv {
            m[(i, j)] = input.h[(i, j)];
        }
        m[(i, i)] += REG;
    }
    for r in 0..me {
        for i in 0..nv {
            m[(nv + r, i)] = input.a_eq[(r, i)];
            m[(i, nv + r)] = input.a_eq[(r, i)];
        }
        m[(nv + r, nv + r)] = -REG;
    }
    let lu = m.lu();
    let mut rhs = DVector::zeros(nv + me);
    for i in 0..nv {
        rhs[i] = -input.g[i];
    }
    for r in 0..me {
        rhs[nv + r] = -input.b_eq[r];
    }
    let mut sol = lu.solve(&rhs).ok_or_else(|| Error::QpSolverFailure {
        iterations: 0,
        context: format!("{context}: singular equality KKT system"),
    })?;
    for _ in 0..2 {
        let w = sol.rows(0, nv).into_owned();
        let mu = sol.rows(nv, me).into_owned();
        let mut resid = rhs.clone();
        let top = input.h * &w + input.a_eq.transpose() * &mu;
        for i in 0..nv {
            resid[i] -= top[i];
        }
        let ew = input.a_eq * &w;
        for r in 0..me {
            resid[nv + r] -= ew[r];
        }
        if let Some(corr) = lu.solve(&resid) {
            sol += corr;
        }
    }
    Ok(IpmOutput {
        w: sol.rows(0, nv).into_owned(),
        lambda: DVector::zeros(0),
        mu: sol.rows(nv, me).into_owned(),
        iterations: 1,
    })
}

/// Runs a fixed number of interior-point iterations on a (typically
/// infeasible) problem and hands back whatever iterate the loop reached.
/// Emulates an external solver that reports its last iterate with a failure
/// flag. Never converges by construction on infeasible input; the dual
/// variables keep growing, which is part of the emulated behavior.
pub(crate) fn ipm_last_iterate(input: &IpmInput<'_>, cap: usize) -> IpmOutput {
    let nv = input.g.len();
    let mi = input.b_ineq.len();
    let me = input.b_eq.len();
    if mi == 0 {
        return solve_equality_only(input, "capped run").unwrap_or(IpmOutput {
            w: DVector::zeros(nv),
            lambda: DVector::zeros(0),
            mu: DVector::zeros(me),
            iterations: 0,
        });
    }

    let mut w = DVector::zeros(nv);
    let mut mu = DVector::<f64>::zeros(me);
    let mut lambda = DVector::from_element(mi, 1.0);
    let row_vals = input.a_ineq * &w + input.b_ineq;
    let mut s = DVector::from_fn(mi, |i, _| row_vals[i].abs().max(1.0));
    let k = nv + mi + me;

    for iter in 0..cap {
        let r_d = input.h * &w
            + input.g
            + input.a_ineq.transpose() * &lambda
            + input.a_eq.transpose() * &mu;
        let r_p = input.a_ineq * &w + input.b_ineq + &s;
        let r_e = input.a_eq * &w + input.b_eq;
        let gap = lambda.dot(&s) / mi as f64;

        let barrier = DVector::from_fn(mi, |i, _| {
            (s[i] / lambda[i]).clamp(1.0 / BARRIER_CLAMP, BARRIER_CLAMP)
        });
        let mut m = DMatrix::zeros(k, k);
        for i in 0..nv {
            for j in 0..nv {
                m[(i, j)] = input.h[(i, j)];
            }
            m[(i, i)] += REG;
        }
        for r in 0..mi {
            for c in 0..nv {
                m[(nv + r, c)] = input.a_ineq[(r, c)];
                m[(c, nv + r)] = input.a_ineq[(r, c)];
            }
            m[(nv + r, nv + r)] = -barrier[r] - REG;
        }
        for r in 0..me {
            for c in 0..nv {
                m[(nv + mi + r, c)] = input.a_eq[(r, c)];
                m[(c, nv + mi + r)] = input.a_eq[(r, c)];
            }
            m[(nv + mi + r, nv + mi + r)] = -REG;
        }
        let lu = m.lu();
        let mut rhs = DVector::zeros(k);
        for i in 0..nv {
            rhs[i] = -r_d[i];
        }
        for r in 0..mi {
            rhs[nv + r] = -r_p[r] + (lambda[r] * s[r] - 0.1 * gap) / lambda[r];
        }
        for r in 0..me {
            rhs[nv + mi + r] = -r_e[r];
        }
        let Some(sol) = lu.solve(&rhs) else {
            return IpmOutput { w, lambda, mu, iterations: iter };
        };
        let dw = sol.rows(0, nv).into_owned();
        let dl = sol.rows(nv, mi).into_owned();
        let dmu = sol.rows(nv + mi, me).into_owned();
        let ds = -&r_p - input.a_ineq * &dw;

        let alpha_p = (FRACTION_TO_BOUNDARY * max_step(&s, &ds)).min(1.0);
        let alpha_d = (FRACTION_TO_BOUNDARY * max_step(&lambda, &dl)).min(1.0);
        let w_next = &w + &dw * alpha_p;
        if !w_next.iter().all(|v| v.is_finite()) || lambda.amax() > 1e12 {
            return IpmOutput { w, lambda, mu, iterations: iter };
        }
        w = w_next;
        s += &ds * alpha_p;
        lambda += &dl * alpha_d;
        mu += &dmu * alpha_d;
    }
    IpmOutput {
        w,
        lambda,
        mu,
        iterations: cap,
    }
}
