mod common;

use std::sync::Arc;

use common::{problem, qp_oracle};
use mpcc::bench::builtin_corpus;
use mpcc::nlp::{solve_nlp, SolveStatus, SolverOptions};
use mpcc::regularize::{disjunctive, kanzow_schwartz, quadrant_penalty, scholtes, SmoothNlp, DEFAULT_BETA};
use mpcc::MpccProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stationarity, feasibility, sign and complementarity of `L = f - Σ λ c`, from raw evaluations.
fn kkt_violations(nlp: &SmoothNlp, x: &[f64], lam: &[f64]) -> (f64, f64, f64, f64) {
    let e = nlp.eval(x).unwrap();
    let mi = nlp.ineqs.len();
    let mut stat = e.grad.clone();
    for (i, l) in lam[..mi].iter().enumerate() {
        stat -= e.ineq_jac.row(i).transpose() * *l;
    }
    for (i, l) in lam[mi..].iter().enumerate() {
        stat -= e.eq_jac.row(i).transpose() * *l;
    }
    let feas = e
        .ineq
        .iter()
        .map(|c| (-c).max(0.0))
        .chain(e.eq.iter().map(|c| c.abs()))
        .fold(0.0, f64::max);
    let sign = lam[..mi].iter().map(|l| (-l).max(0.0)).fold(0.0, f64::max);
    let comp = e
        .ineq
        .iter()
        .zip(&lam[..mi])
        .map(|(c, l)| (c * l).abs())
        .fold(0.0, f64::max);
    (stat.amax(), feas, sign, comp)
}

fn subproblems(p: &Arc<MpccProblem>, t: f64) -> Vec<SmoothNlp> {
    let mut out = vec![
        scholtes(p, t).unwrap(),
        kanzow_schwartz(p, t).unwrap(),
        quadrant_penalty(p, t, DEFAULT_BETA).unwrap(),
    ];
    let d = disjunctive(p, t).unwrap();
    let k = p.kappa().min(3);
    for mask in 0..1usize << k {
        let pattern: Vec<bool> = (0..p.kappa()).map(|j| j < k && mask >> j & 1 == 1).collect();
        out.push(d.branch(&pattern));
    }
    out
}

#[test]
fn converged_solutions_pass_an_independent_kkt_check() {
    let opts = SolverOptions::default();
    let mut converged = 0;
    for entry in builtin_corpus() {
        for t in [1.0, 0.1, 0.01] {
            for nlp in subproblems(&entry.problem, t) {
                let sol = solve_nlp(&nlp, &entry.problem.start, &opts);
                if sol.status != SolveStatus::Converged {
                    continue;
                }
                converged += 1;
                let (stat, feas, sign, comp) = kkt_violations(&nlp, &sol.point, &sol.multipliers);
                let what = format!("{} {:?} t={t}", entry.problem.name, nlp.kind);
                assert!(stat <= opts.kkt_tol, "{what}: stationarity {stat:e}");
                assert!(feas <= opts.feas_tol, "{what}: feasibility {feas:e}");
                assert!(sign <= opts.kkt_tol, "{what}: sign {sign:e}");
                assert!(comp <= opts.kkt_tol, "{what}: complementarity {comp:e}");
                assert!(sol.kkt_residual <= opts.kkt_tol);
            }
        }
    }
    assert!(converged > 100, "{converged}");
}

#[test]
fn identical_inputs_give_identical_runs() {
    let opts = SolverOptions::default();
    for name in ["ex9_2_2", "scholtes4", "index_shift"] {
        let p = problem(name);
        for nlp in subproblems(&p, 0.1) {
            let a = solve_nlp(&nlp, &p.start, &opts);
            let b = solve_nlp(&nlp, &p.start, &opts);
            // Debug output compares NaN fields too.
            assert_eq!(format!("{a:?}"), format!("{b:?}"), "{name} {:?}", nlp.kind);
        }
    }
}

fn number(v: f64) -> String {
    format!("({v})")
}

/// `0.5 xᵀHx + gᵀx` subject to a linear pair, linear side inequalities and one branch.
fn random_linear_branch(rng: &mut ChaCha8Rng) -> (SmoothNlp, DMatrix<f64>, DVector<f64>) {
    let n = rng.gen_range(1..=3);
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    let var = |i: usize| format!("x{}", i + 1);
    let mut objective = Vec::new();
    for i in 0..n {
        for j in 0..n {
            objective.push(format!("{}*{}*{}", number(0.5 * h[(i, j)]), var(i), var(j)));
        }
        objective.push(format!("{}*{}", number(g[i]), var(i)));
    }
    let affine = |rng: &mut ChaCha8Rng| {
        let mut terms: Vec<String> = (0..n)
            .map(|i| format!("{}*{}", number(rng.gen_range(-1.0..1.0)), var(i)))
            .collect();
        terms.push(number(rng.gen_range(-1.0..1.0)));
        terms.join(" + ")
    };
    let mut text = format!(
        "problem qp\nvars {}\nobjective {}\npair ({}, {})\n",
        (0..n).map(var).collect::<Vec<_>>().join(" "),
        objective.join(" + "),
        affine(rng),
        affine(rng)
    );
    for _ in 0..rng.gen_range(0..=3) {
        text.push_str(&format!("ineq {}\n", affine(rng)));
    }
    let p = Arc::new(MpccProblem::from_text(&text).unwrap());
    let nlp = disjunctive(&p, 0.5).unwrap().branch(&[rng.gen_bool(0.5)]);
    (nlp, h, g)
}

#[test]
fn convex_quadratic_branches_match_the_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let opts = SolverOptions::default();
    let mut solved = 0;
    for _ in 0..200 {
        let (nlp, h, g) = random_linear_branch(&mut rng);
        let n = g.len();
        let x0 = vec![0.0; n];
        let e = nlp.eval(&x0).unwrap();
        let (a_eq, b_eq) = (DMatrix::zeros(0, n), DVector::zeros(0));
        let oracle = qp_oracle(&h, &g, &a_eq, &b_eq, &e.ineq_jac, &(-&e.ineq));
        let sol = solve_nlp(&nlp, &x0, &opts);
        match oracle {
            Some(d) => {
                assert_eq!(sol.status, SolveStatus::Converged, "{nlp:?}");
                let err = d.iter().zip(&sol.point).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err <= 1e-8, "deviation {err:e}");
                solved += 1;
            }
            None => assert_ne!(sol.status, SolveStatus::Converged),
        }
    }
    assert!(solved > 100, "{solved}");
}
