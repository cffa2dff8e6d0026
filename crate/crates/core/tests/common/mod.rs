#![allow(dead_code)]

use std::sync::Arc;

use mpcc::bench::builtin_entry;
use mpcc::disjunctive::{solve_disjunctive, DisjMode, DisjSolution};
use mpcc::expr::{Expr, SmoothFn};
use mpcc::nlp::{SolveStatus, SolverOptions};
use mpcc::regularize::disjunctive;
use mpcc::{Execution, MpccProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

pub fn problem(name: &str) -> Arc<MpccProblem> {
    builtin_entry(name)
        .unwrap_or_else(|| panic!("no built-in problem {name}"))
        .problem
}

/// Greedy D(t) solve started exactly at `x0`.
pub fn solve_at(name: &str, t: f64, x0: &[f64]) -> DisjSolution {
    let p = problem(name);
    let d = disjunctive(&p, t).unwrap();
    let sol = solve_disjunctive(
        &d,
        x0,
        &SolverOptions::default(),
        DisjMode::Greedy,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(sol.status, SolveStatus::Converged, "{name} at t={t}");
    sol
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Closed-form D(t) points and their nonzero multipliers.
pub struct Fixture {
    pub name: &'static str,
    pub point: Vec<f64>,
    /// (kind, zero-based pair, value) with kind one of eta1, eta2, nu1, nu2.
    pub multipliers: Vec<(&'static str, usize, f64)>,
}

pub fn fixtures(t: f64) -> Vec<Fixture> {
    vec![
        Fixture {
            name: "saddle_limit",
            point: vec![t, 2.0 * t, t, 1.0],
            multipliers: vec![("eta1", 0, 1.0 + 2.0 * t), ("eta1", 1, t)],
        },
        Fixture {
            name: "index_shift",
            point: vec![t / 2.0, t / 2.0, 1.0],
            multipliers: vec![("eta1", 1, 1.0 - t), ("nu1", 2, 2.0)],
        },
        Fixture {
            name: "finer_convergence",
            point: vec![t, t, 0.0, 1.0],
            multipliers: vec![("eta1", 1, 1.0), ("nu1", 0, 2.0 * t)],
        },
        Fixture {
            name: "ks_condition",
            point: vec![t, t, 0.0, 1.0],
            multipliers: vec![("eta1", 1, 1.0 - 2.0 * t), ("nu1", 0, 2.0 * t), ("nu2", 0, t)],
        },
    ]
}

/// Worst deviation of a solve from its fixture, or `None` if multipliers are missing.
pub fn fixture_error(f: &Fixture, sol: &DisjSolution) -> Option<f64> {
    let m = sol.multipliers.as_ref()?;
    let mut err = max_abs_diff(&sol.point, &f.point);
    for &(kind, j, v) in &f.multipliers {
        let got = match kind {
            "eta1" => m.eta1(j),
            "eta2" => m.eta2(j),
            "nu1" => m.nu1(j),
            "nu2" => m.nu2(j),
            _ => unreachable!(),
        }?;
        err = err.max((got - v).abs());
    }
    let listed = f.multipliers.len();
    let total = m.zeta1.len() + m.zeta2.len() + m.eta1.len() + m.eta2.len() + m.nu1.len() + m.nu2.len();
    if total != listed {
        return None;
    }
    Some(err)
}

/// KS(t) multipliers of a D(t) point: `μ = η1/(F2 - t)` on H1, `μ = η2/(F1 - t)` on H2, `μ1 = ν1`, `μ2 = ν2`.
pub fn ks_from_disj(
    p: &MpccProblem,
    x: &[f64],
    t: f64,
    m: &mpcc::disjunctive::DisjMultipliers,
) -> mpcc::nlp::KsMultipliers {
    let k = p.kappa();
    let vals = p.pair_values(x).unwrap();
    let mut out = mpcc::nlp::KsMultipliers::new(vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for (&j, &v) in m.sets.h1.iter().zip(&m.eta1) {
        out.mu[j] = v / (vals[j].1 - t);
    }
    for (&j, &v) in m.sets.h2.iter().zip(&m.eta2) {
        out.mu[j] = v / (vals[j].0 - t);
    }
    for (&j, &v) in m.sets.n1.iter().zip(&m.nu1) {
        out.mu1[j] = v;
    }
    for (&j, &v) in m.sets.n2.iter().zip(&m.nu2) {
        out.mu2[j] = v;
    }
    out.side_ineq = vec![0.0; p.ineqs.len()];
    for &(i, v) in &m.side_ineq {
        out.side_ineq[i] = v;
    }
    out.side_eq = m.side_eq.clone();
    out
}

pub struct BridgeOutcome {
    pub ks_converged: usize,
    pub ks_failures: Vec<String>,
    pub disj_s_points: usize,
    pub disj_failures: Vec<String>,
}

pub const BRIDGE_TS: [f64; 3] = [1.0, 0.1, 0.01];

/// Both directions of the KKT(KS) / S-stationary(D) correspondence on the built-in corpus.
pub fn ks_disj_bridge() -> BridgeOutcome {
    use mpcc::analysis::{Stationarity, SIGN_TOL};
    use mpcc::disjunctive::{classify_disj_stationarity, recover_disj_multipliers};
    use mpcc::nlp::{epsilon_stationarity_check, solve_nlp};
    use mpcc::regularize::kanzow_schwartz;
    use mpcc::ACTIVE_TOL;

    let mut out = BridgeOutcome {
        ks_converged: 0,
        ks_failures: Vec::new(),
        disj_s_points: 0,
        disj_failures: Vec::new(),
    };
    let opts = SolverOptions::default();
    for entry in mpcc::bench::builtin_corpus() {
        let p = entry.problem;
        for t in BRIDGE_TS {
            let ks = kanzow_schwartz(&p, t).unwrap();
            let d = disjunctive(&p, t).unwrap();
            let sol = solve_nlp(&ks, &p.start, &opts);
            if sol.status == SolveStatus::Converged {
                out.ks_converged += 1;
                let class = recover_disj_multipliers(&d, &sol.point, ACTIVE_TOL)
                    .map(|m| (classify_disj_stationarity(&m, SIGN_TOL), m.residual));
                match class {
                    Ok((Stationarity::S, r)) if r <= 1e-6 => {}
                    other => out.ks_failures.push(format!("{} t={t}: {other:?}", p.name)),
                }
            }
            let ds = solve_disjunctive(&d, &p.start, &opts, DisjMode::Enumerate, Execution::Sequential).unwrap();
            if ds.class == Stationarity::S {
                out.disj_s_points += 1;
                let m = ds.multipliers.as_ref().unwrap();
                let km = ks_from_disj(&p, &ds.point, t, m);
                let rep = epsilon_stationarity_check(&ks, &ds.point, &km, 1e-6).unwrap();
                if !rep.pass() {
                    out.disj_failures.push(format!("{} t={t}: {rep:?}", p.name));
                }
            }
        }
    }
    out
}

/// `max{-min(0, g), |h|, |min(F1, F2)|}` from raw function values.
pub fn oracle_maxvio(p: &MpccProblem, x: &[f64]) -> f64 {
    let mut v: f64 = 0.0;
    for g in &p.ineqs {
        v = v.max(-g.value(x).unwrap().min(0.0));
    }
    for h in &p.eqs {
        v = v.max(h.value(x).unwrap().abs());
    }
    for pair in &p.pairs {
        v = v.max(pair.f1.value(x).unwrap().min(pair.f2.value(x).unwrap()).abs());
    }
    v
}

/// Violations of the t-schedule and termination invariants of one run.
pub fn schedule_violations(
    p: &MpccProblem,
    params: &mpcc::homotopy::HomotopyParams,
    trace: &mpcc::homotopy::RunTrace,
) -> Vec<String> {
    use mpcc::homotopy::Termination;
    let mut bad = Vec::new();
    let rows = &trace.rows;
    if rows.is_empty() {
        bad.push("empty trace".into());
        return bad;
    }
    if rows[0].t != params.t0 {
        bad.push(format!("first t {} != t0", rows[0].t));
    }
    let ln_s = params.shrink.ln();
    for w in rows.windows(2) {
        let l = (w[1].t / w[0].t).ln() / ln_s;
        if w[1].t >= w[0].t || l < 1.0 - 1e-9 || (l - l.round()).abs() > 1e-6 {
            bad.push(format!("t {} -> {} is not a power of shrink", w[0].t, w[1].t));
        }
    }
    if let Some(r) = rows.iter().find(|r| r.t < params.t_min) {
        bad.push(format!("t {} below t_min", r.t));
    }
    let mut last = p.start.clone();
    for r in rows {
        if r.start != last {
            bad.push(format!("row {} not warm-started at the last accepted point", r.k));
        }
        if r.accepted {
            last = r.point.clone();
        }
    }
    if trace.termination == Termination::TargetMet {
        let v = oracle_maxvio(p, &trace.point);
        if v > params.eps {
            bad.push(format!("target-met with recomputed maxvio {v:e}"));
        }
    }
    bad
}

pub const MEMBERSHIP_POINTS: usize = 10_000;

/// Uniform points in a box around the start vector, seeded per problem.
pub fn membership_points(p: &MpccProblem, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..MEMBERSHIP_POINTS)
        .map(|_| {
            p.start
                .iter()
                .map(|&c| {
                    let w = 2.0 * c.abs().max(1.0);
                    rng.gen_range(c - w..c + w)
                })
                .collect()
        })
        .collect()
}

pub const FD_POINTS: usize = 100;

/// Five-point central difference of a scalar function along coordinate `i`.
pub fn fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-3 * (1.0 + x[i].abs());
    let at = |s: f64| {
        let mut y = x.to_vec();
        y[i] += s * h;
        f(&y)
    };
    (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h)
}

fn close(exact: f64, approx: f64) -> bool {
    (exact - approx).abs() <= 1e-6 * exact.abs().max(1.0)
}

/// Compare symbolic first and second derivatives against finite differences.
pub fn fd_check(expr: &Expr, n: usize, seed: u64) -> Result<(), String> {
    let sf = SmoothFn::new(expr.clone(), n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..FD_POINTS {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let e = sf.eval(&x, true).map_err(|e| e.to_string())?;
        let value = |y: &[f64]| sf.value(y).unwrap();
        for i in 0..n {
            let g = fd(&value, &x, i);
            if !close(e.grad[i], g) {
                return Err(format!("d/dx{} of {expr} at {x:?}: {} vs {g}", i + 1, e.grad[i]));
            }
            for j in 0..n {
                let gi = |y: &[f64]| sf.eval(y, false).unwrap().grad[i];
                let h = fd(&gi, &x, j);
                if !close(e.hess()[(i, j)], h) {
                    return Err(format!(
                        "d2/dx{}dx{} of {expr} at {x:?}: {} vs {h}",
                        i + 1,
                        j + 1,
                        e.hess()[(i, j)]
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The problem with its objective multiplied by `c`.
pub fn scaled_problem(p: &MpccProblem, c: f64) -> MpccProblem {
    let mut q = p.clone();
    let expr = Expr::Mul(Box::new(Expr::Const(c)), Box::new(p.objective.expr.clone()));
    q.objective = SmoothFn::new(expr, p.n);
    q
}

/// Brute force: try every active subset of the inequalities and keep the KKT one.
pub fn qp_oracle(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_in: &DMatrix<f64>,
    b_in: &DVector<f64>,
) -> Option<DVector<f64>> {
    let n = g.len();
    let m = a_in.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0..(1usize << m) {
        let act: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let k = a_eq.nrows() + act.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        rhs.rows_mut(0, n).copy_from(&(-g));
        let rows: Vec<(DVector<f64>, f64)> = (0..a_eq.nrows())
            .map(|i| (a_eq.row(i).transpose(), b_eq[i]))
            .chain(act.iter().map(|&i| (a_in.row(i).transpose(), b_in[i])))
            .collect();
        for (r, (a, b)) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(c, n + r)] = -a[c];
                kkt[(n + r, c)] = a[c];
            }
            rhs[n + r] = *b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let d = sol.rows(0, n).into_owned();
        let feasible = (0..m).all(|i| (a_in.row(i) * &d)[0] >= b_in[i] - 1e-9)
            && (0..a_eq.nrows()).all(|i| ((a_eq.row(i) * &d)[0] - b_eq[i]).abs() <= 1e-9);
        let signs = (a_eq.nrows()..k).all(|r| sol[n + r] >= -1e-9);
        if feasible && signs {
            let obj = 0.5 * d.dot(&(h * &d)) + g.dot(&d);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, d));
            }
        }
    }
    best.map(|b| b.1)
}
