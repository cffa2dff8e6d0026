//! SQP with damped BFGS, L1 merit line search and elastic feasibility restoration.

use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, QpError, QpProblem};
use super::{NlpSolution, SolveStatus, SolverOptions};
use crate::regularize::{violation_of, NlpEval, SmoothNlp};

fn certified(e: &NlpEval, lam_in: &DVector<f64>, lam_eq: &DVector<f64>, opts: &SolverOptions) -> SolveStatus {
    let lam_max = lam_in.amax().max(lam_eq.amax());
    if lam_max > opts.multiplier_bound * (1.0 + e.grad.amax()) {
        SolveStatus::DegenerateMultipliers
    } else {
        SolveStatus::Converged
    }
}

pub(crate) fn residual_at(e: &NlpEval, lam_in: &[f64], lam_eq: &[f64]) -> f64 {
    let li = DVector::from_column_slice(lam_in);
    let le = DVector::from_column_slice(lam_eq);
    let stat = &e.grad - e.ineq_jac.transpose() * &li - e.eq_jac.transpose() * &le;
    let mut res = stat.amax().max(violation_of(e));
    for (c, l) in e.ineq.iter().zip(lam_in) {
        res = res.max((c * l).abs()).max(-l);
    }
    res
}

fn l1_violation(e: &NlpEval) -> f64 {
    e.ineq.iter().map(|c| (-c).max(0.0)).sum::<f64>() + e.eq.iter().map(|c| c.abs()).sum::<f64>()
}

/// L1 violation of the linearization at step `d`.
fn l1_linearized(e: &NlpEval, d: &DVector<f64>) -> f64 {
    let ci = &e.ineq + &e.ineq_jac * d;
    let ce = &e.eq + &e.eq_jac * d;
    ci.iter().map(|c| (-c).max(0.0)).sum::<f64>() + ce.iter().map(|c| c.abs()).sum::<f64>()
}

fn lagrangian_grad(e: &NlpEval, li: &DVector<f64>, le: &DVector<f64>) -> DVector<f64> {
    &e.grad - e.ineq_jac.transpose() * li - e.eq_jac.transpose() * le
}

struct Best {
    score: f64,
    x: DVector<f64>,
    lam_in: DVector<f64>,
    lam_eq: DVector<f64>,
    residual: f64,
    f: f64,
}

fn qp_step(
    b: &DMatrix<f64>,
    e: &NlpEval,
    ineq_rhs: &DVector<f64>,
    eq_rhs: &DVector<f64>,
) -> Result<super::qp::QpSolution, QpError> {
    solve_qp(&QpProblem {
        h: b,
        g: &e.grad,
        a_eq: &e.eq_jac,
        b_eq: eq_rhs,
        a_in: &e.ineq_jac,
        b_in: ineq_rhs,
    })
}

/// Step minimizing the largest linearized violation (elastic QP in `(d, v)`).
fn restoration_step(b: &DMatrix<f64>, e: &NlpEval) -> Option<DVector<f64>> {
    let n = b.nrows();
    let mi = e.ineq.len();
    let me = e.eq.len();
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(b);
    h[(n, n)] = 1e-6;
    let mut g = DVector::zeros(n + 1);
    g[n] = 1.0;
    let rows = mi + 2 * me + 1;
    let mut a = DMatrix::zeros(rows, n + 1);
    let mut rhs = DVector::zeros(rows);
    for i in 0..mi {
        a.view_mut((i, 0), (1, n)).copy_from(&e.ineq_jac.row(i));
        a[(i, n)] = 1.0;
        rhs[i] = -e.ineq[i];
    }
    for k in 0..me {
        let r = mi + 2 * k;
        a.view_mut((r, 0), (1, n)).copy_from(&e.eq_jac.row(k));
        a[(r, n)] = 1.0;
        rhs[r] = -e.eq[k];
        a.view_mut((r + 1, 0), (1, n)).copy_from(&(-e.eq_jac.row(k)));
        a[(r + 1, n)] = 1.0;
        rhs[r + 1] = e.eq[k];
    }
    a[(rows - 1, n)] = 1.0;
    let empty_a = DMatrix::zeros(0, n + 1);
    let empty_b = DVector::zeros(0);
    let sol = solve_qp(&QpProblem {
        h: &h,
        g: &g,
        a_eq: &empty_a,
        b_eq: &empty_b,
        a_in: &a,
        b_in: &rhs,
    })
    .ok()?;
    Some(sol.d.rows(0, n).into_owned())
}

fn damped_bfgs(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, first: &mut bool) {
    let ss = s.dot(s);
    if ss < 1e-30 || !y.iter().all(|v| v.is_finite()) {
        return;
    }
    if *first {
        let sy = s.dot(y);
        let yy = y.dot(y);
        if sy > 1e-2 * (ss * yy).sqrt() {
            let scale = (yy / sy).clamp(1e-3, 1e3);
            *b = DMatrix::identity(s.len(), s.len()) * scale;
        }
        *first = false;
    }
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 0.0 {
        return;
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    if sr <= 1e-16 * sbs {
        return;
    }
    *b -= &bs * bs.transpose() / sbs;
    *b += &r * r.transpose() / sr;
    let sym = (&*b + b.transpose()) * 0.5;
    *b = sym;
}

#[allow(clippy::too_many_arguments)]
fn finish(
    nlp: &SmoothNlp,
    x: &DVector<f64>,
    lam_in: &DVector<f64>,
    lam_eq: &DVector<f64>,
    status: SolveStatus,
    residual: f64,
    iterations: usize,
    f: f64,
) -> NlpSolution {
    let mut multipliers: Vec<f64> = lam_in.iter().copied().collect();
    multipliers.extend(lam_eq.iter());
    debug_assert_eq!(multipliers.len(), nlp.ineqs.len() + nlp.eqs.len());
    NlpSolution {
        point: x.iter().copied().collect(),
        multipliers,
        status,
        kkt_residual: residual,
        iterations,
        objective: f,
    }
}

/// Solve `nlp` from `x0`. Deterministic for identical inputs.
pub fn solve_nlp(nlp: &SmoothNlp, x0: &[f64], opts: &SolverOptions) -> NlpSolution {
    let n = nlp.n();
    assert_eq!(x0.len(), n, "starting point dimension");
    let mi = nlp.ineqs.len();
    let me = nlp.eqs.len();
    let mut x = DVector::from_column_slice(x0);
    let mut lam_in = DVector::zeros(mi);
    let mut lam_eq = DVector::zeros(me);
    let fail = |x: &DVector<f64>, it: usize, status: SolveStatus| {
        finish(
            nlp,
            x,
            &DVector::zeros(mi),
            &DVector::zeros(me),
            status,
            f64::INFINITY,
            it,
            nlp.problem.objective.value(x.as_slice()).unwrap_or(f64::NAN),
        )
    };
    let mut e = match nlp.eval(x.as_slice()) {
        Ok(e) => e,
        Err(_) => return fail(&x, 0, SolveStatus::NumericalFailure),
    };
    let mut b = DMatrix::identity(n, n);
    let mut first_update = true;
    let mut rho: f64 = 1.0;
    let mut best: Option<Best> = None;
    let mut ls_failures = 0;
    let mut qp_failures = 0;

    let best_or_fail = |best: Option<Best>, x: &DVector<f64>, it: usize, status: SolveStatus| match best {
        Some(bst) => finish(nlp, &bst.x, &bst.lam_in, &bst.lam_eq, status, bst.residual, it, bst.f),
        None => fail(x, it, status),
    };

    for iter in 0..opts.max_iter {
        if !x.iter().all(|v| v.is_finite())
            || x.amax() > opts.divergence_bound
            || !e.f.is_finite()
            || e.f < -opts.divergence_bound * opts.divergence_bound
        {
            return fail(&x, iter, SolveStatus::NumericalFailure);
        }
        let ineq_rhs = -&e.ineq;
        let eq_rhs = -&e.eq;
        match qp_step(&b, &e, &ineq_rhs, &eq_rhs) {
            Err(QpError::Infeasible) => {
                let theta0 = l1_violation(&e);
                let Some(d) = restoration_step(&b, &e) else {
                    return best_or_fail(best, &x, iter, SolveStatus::Infeasible);
                };
                let predicted = theta0 - l1_linearized(&e, &d);
                if predicted <= 1e-12 * (1.0 + theta0) {
                    return best_or_fail(best, &x, iter, SolveStatus::Infeasible);
                }
                let mut alpha = 1.0;
                let mut accepted = None;
                while alpha >= opts.min_step {
                    let xt = &x + &d * alpha;
                    if let Ok(et) = nlp.eval(xt.as_slice()) {
                        if l1_violation(&et) <= theta0 - opts.armijo * alpha * predicted {
                            accepted = Some((xt, et));
                            break;
                        }
                    }
                    alpha *= opts.backtrack;
                }
                let Some((xt, et)) = accepted else {
                    return best_or_fail(best, &x, iter, SolveStatus::Infeasible);
                };
                x = xt;
                e = et;
                lam_in.fill(0.0);
                lam_eq.fill(0.0);
            }
            Err(_) => {
                qp_failures += 1;
                if qp_failures >= 2 {
                    return best_or_fail(best, &x, iter, SolveStatus::NumericalFailure);
                }
                b = DMatrix::identity(n, n);
                first_update = true;
            }
            Ok(sol) => {
                qp_failures = 0;
                lam_in = sol.lambda_in;
                lam_eq = sol.lambda_eq;
                let residual = residual_at(&e, lam_in.as_slice(), lam_eq.as_slice());
                let viol = violation_of(&e);
                if viol <= opts.feas_tol && residual <= opts.kkt_tol {
                    return finish(
                        nlp,
                        &x,
                        &lam_in,
                        &lam_eq,
                        certified(&e, &lam_in, &lam_eq, opts),
                        residual,
                        iter,
                        e.f,
                    );
                }
                let score = residual.max(viol);
                if best.as_ref().is_none_or(|bst| score < bst.score) {
                    best = Some(Best {
                        score,
                        x: x.clone(),
                        lam_in: lam_in.clone(),
                        lam_eq: lam_eq.clone(),
                        residual,
                        f: e.f,
                    });
                }

                let d = sol.d;
                let lam_max = lam_in.amax().max(lam_eq.amax());
                if rho < 1.1 * lam_max {
                    rho = 2.0 * lam_max;
                }
                let theta0 = l1_violation(&e);
                let merit0 = e.f + rho * theta0;
                let mut slope = e.grad.dot(&d) - rho * theta0;
                if slope >= 0.0 {
                    slope = -d.dot(&(&b * &d));
                }
                let noise = 16.0 * f64::EPSILON * (1.0 + merit0.abs());
                let merit = |et: &NlpEval| et.f + rho * l1_violation(et);

                let mut accepted: Option<(DVector<f64>, NlpEval)> = None;
                let mut alpha = 1.0;
                while alpha >= opts.min_step {
                    let xt = &x + &d * alpha;
                    if let Ok(et) = nlp.eval(xt.as_slice()) {
                        if merit(&et) <= merit0 + opts.armijo * alpha * slope + noise {
                            accepted = Some((xt, et));
                            break;
                        }
                        if alpha == 1.0 {
                            // Second-order correction against the Maratos effect.
                            let soc_in = &e.ineq_jac * &d - &et.ineq;
                            let soc_eq = &e.eq_jac * &d - &et.eq;
                            if let Ok(soc) = qp_step(&b, &e, &soc_in, &soc_eq) {
                                let xs = &x + &soc.d;
                                if let Ok(es) = nlp.eval(xs.as_slice()) {
                                    if merit(&es) <= merit0 + opts.armijo * slope + noise {
                                        accepted = Some((xs, es));
                                        break;
                                    }
                                }
                            }
                        }
                    }
                    alpha *= opts.backtrack;
                }
                let Some((xn, en)) = accepted else {
                    ls_failures += 1;
                    if ls_failures >= 2 {
                        let usable = best.as_ref().is_some_and(|bst| bst.score <= 1e-6);
                        let status = if usable {
                            SolveStatus::MaxIter
                        } else {
                            SolveStatus::NumericalFailure
                        };
                        return best_or_fail(best, &x, iter, status);
                    }
                    b = DMatrix::identity(n, n);
                    first_update = true;
                    continue;
                };
                ls_failures = 0;
                let s = &xn - &x;
                let y = lagrangian_grad(&en, &lam_in, &lam_eq) - lagrangian_grad(&e, &lam_in, &lam_eq);
                damped_bfgs(&mut b, &s, &y, &mut first_update);
                x = xn;
                e = en;
            }
        }
    }

    // Final check at the last iterate before falling back to the best one.
    if let Ok(sol) = qp_step(&b, &e, &(-&e.ineq), &(-&e.eq)) {
        let residual = residual_at(&e, sol.lambda_in.as_slice(), sol.lambda_eq.as_slice());
        if violation_of(&e) <= opts.feas_tol && residual <= opts.kkt_tol {
            return finish(
                nlp,
                &x,
                &sol.lambda_in,
                &sol.lambda_eq,
                certified(&e, &sol.lambda_in, &sol.lambda_eq, opts),
                residual,
                opts.max_iter,
                e.f,
            );
        }
    }
    best_or_fail(best, &x, opts.max_iter, SolveStatus::MaxIter)
}
