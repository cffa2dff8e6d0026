mod common;

use std::sync::Arc;

use common::{fixtures, problem, scaled_problem, solve_at};
use mpcc::analysis::{
    classify_mpcc_stationarity, disj_c_index, mpcc_c_index, recover_mpcc_multipliers, MpccMultipliers, SIGN_TOL,
};
use mpcc::bench::builtin_corpus;
use mpcc::disjunctive::DisjMultipliers;
use mpcc::expr::SmoothFn;
use mpcc::regularize::disjunctive;
use mpcc::{MpccProblem, ACTIVE_TOL};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `L = f + Σ c_k φ_k`; every `φ_k` is an active constraint spanning the normal space.
struct Lagrangian<'a> {
    f: &'a SmoothFn,
    terms: Vec<(f64, &'a SmoothFn)>,
}

impl Lagrangian<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.f.value(x).unwrap(), |acc, (c, g)| acc + c * g.value(x).unwrap())
    }

    /// Eigenvalues of the finite-difference Hessian restricted to the tangent space.
    fn restricted_eigenvalues(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let h = 1e-5;
        let at = |di: (usize, f64), dj: (usize, f64)| {
            let mut y = x.to_vec();
            y[di.0] += di.1 * h;
            y[dj.0] += dj.1 * h;
            self.value(&y)
        };
        let hess = DMatrix::from_fn(n, n, |i, j| {
            (at((i, 1.0), (j, 1.0)) - at((i, 1.0), (j, -1.0)) - at((i, -1.0), (j, 1.0)) + at((i, -1.0), (j, -1.0)))
                / (4.0 * h * h)
        });
        let mut normals = DMatrix::zeros(n, self.terms.len());
        for (k, (_, g)) in self.terms.iter().enumerate() {
            normals.set_column(k, &g.eval(x, false).unwrap().grad);
        }
        // Tangent basis from the eigenvectors of the orthogonal projector onto ker(Aᵀ).
        let projector = if self.terms.is_empty() {
            DMatrix::identity(n, n)
        } else {
            DMatrix::identity(n, n) - &normals * normals.clone().pseudo_inverse(1e-10).unwrap()
        };
        let eig = SymmetricEigen::new((&projector + projector.transpose()) * 0.5);
        let cols: Vec<DVector<f64>> = (0..n)
            .filter(|&k| eig.eigenvalues[k] > 0.5)
            .map(|k| eig.eigenvectors.column(k).into_owned())
            .collect();
        if cols.is_empty() {
            return Vec::new();
        }
        let z = DMatrix::from_columns(&cols);
        let r = z.transpose() * hess * &z;
        let mut ev: Vec<f64> = SymmetricEigen::new((&r + r.transpose()) * 0.5)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

fn mpcc_lagrangian<'a>(p: &'a MpccProblem, m: &MpccMultipliers) -> Lagrangian<'a> {
    let s = &m.sets;
    let mut terms = Vec::new();
    terms.extend(s.a01.iter().zip(&m.sigma1).map(|(&j, v)| (-v, &p.pairs[j].f1)));
    terms.extend(s.a10.iter().zip(&m.sigma2).map(|(&j, v)| (-v, &p.pairs[j].f2)));
    for (k, &j) in s.a00.iter().enumerate() {
        terms.push((-m.rho1[k], &p.pairs[j].f1));
        terms.push((-m.rho2[k], &p.pairs[j].f2));
    }
    terms.extend(m.side_ineq.iter().map(|&(i, v)| (-v, &p.ineqs[i])));
    terms.extend(m.side_eq.iter().zip(&p.eqs).map(|(v, h)| (-v, h)));
    Lagrangian { f: &p.objective, terms }
}

fn disj_lagrangian<'a>(p: &'a MpccProblem, m: &DisjMultipliers) -> Lagrangian<'a> {
    let s = &m.sets;
    let mut terms = Vec::new();
    for (k, &j) in s.h12.iter().enumerate() {
        terms.push((m.zeta1[k], &p.pairs[j].f1));
        terms.push((m.zeta2[k], &p.pairs[j].f2));
    }
    terms.extend(s.h1.iter().zip(&m.eta1).map(|(&j, v)| (*v, &p.pairs[j].f1)));
    terms.extend(s.h2.iter().zip(&m.eta2).map(|(&j, v)| (*v, &p.pairs[j].f2)));
    terms.extend(s.n1.iter().zip(&m.nu1).map(|(&j, v)| (-v, &p.pairs[j].f1)));
    terms.extend(s.n2.iter().zip(&m.nu2).map(|(&j, v)| (-v, &p.pairs[j].f2)));
    terms.extend(m.side_ineq.iter().map(|&(i, v)| (-v, &p.ineqs[i])));
    terms.extend(m.side_eq.iter().zip(&p.eqs).map(|(v, h)| (-v, h)));
    Lagrangian { f: &p.objective, terms }
}

/// Negative-eigenvalue count, or `None` when an eigenvalue is too close to zero to call.
fn negative_count(ev: &[f64]) -> Option<usize> {
    let scale = ev.iter().fold(1.0_f64, |m, e| m.max(e.abs()));
    if ev.iter().any(|e| e.abs() < 1e-3 * scale) {
        return None;
    }
    Some(ev.iter().filter(|&&e| e < 0.0).count())
}

#[test]
fn quadratic_index_matches_finite_difference_hessians() {
    let mut compared = 0;
    for entry in builtin_corpus() {
        let p = &entry.problem;
        for e in &entry.expectations {
            let m = recover_mpcc_multipliers(p, &e.point, ACTIVE_TOL).unwrap();
            let r = mpcc_c_index(p, &e.point, &m, SIGN_TOL).unwrap();
            let ev = mpcc_lagrangian(p, &m).restricted_eigenvalues(&e.point);
            assert_eq!(ev.len(), r.tangent_dim, "{}", p.name);
            if let Some(qi) = negative_count(&ev) {
                assert_eq!(qi, r.qi, "{}: {ev:?}", p.name);
                compared += 1;
            }
        }
    }
    for t in [0.1, 0.01] {
        for f in fixtures(t) {
            let p = problem(f.name);
            let d = disjunctive(&p, t).unwrap();
            let sol = solve_at(f.name, t, &f.point);
            let m = sol.multipliers.as_ref().unwrap();
            let r = disj_c_index(&d, &sol.point, m, SIGN_TOL).unwrap();
            let ev = disj_lagrangian(&p, m).restricted_eigenvalues(&sol.point);
            assert_eq!(ev.len(), r.tangent_dim, "{} t={t}", f.name);
            if let Some(qi) = negative_count(&ev) {
                assert_eq!(qi, r.qi, "{} t={t}: {ev:?}", f.name);
                compared += 1;
            }
        }
    }
    assert!(compared >= 10, "{compared}");
}

#[test]
fn c_index_is_preserved_when_every_nondegeneracy_holds() {
    let p = problem("biactive_min");
    let limit = recover_mpcc_multipliers(&p, &[0.0, 0.0], ACTIVE_TOL).unwrap();
    let lr = mpcc_c_index(&p, &[0.0, 0.0], &limit, SIGN_TOL).unwrap();
    assert!(lr.nondegenerate() && lr.nd4 == Some(true));
    for t in [1.0, 0.5, 0.1, 0.01] {
        let d = disjunctive(&p, t).unwrap();
        let sol = solve_at("biactive_min", t, &[0.0, 0.0]);
        let dr = disj_c_index(&d, &sol.point, sol.multipliers.as_ref().unwrap(), SIGN_TOL).unwrap();
        assert!(dr.nondegenerate(), "t={t}");
        assert_eq!(dr.ci, lr.ci, "t={t}");
    }
}

#[test]
fn multiplier_residual_vanishes_at_corpus_fixtures() {
    for entry in builtin_corpus() {
        for e in &entry.expectations {
            let m = recover_mpcc_multipliers(&entry.problem, &e.point, ACTIVE_TOL).unwrap();
            assert!(m.residual <= 1e-8, "{}: {:e}", entry.problem.name, m.residual);
        }
    }
}

#[test]
fn multipliers_scale_with_the_objective() {
    for entry in builtin_corpus() {
        for e in &entry.expectations {
            let base = recover_mpcc_multipliers(&entry.problem, &e.point, ACTIVE_TOL).unwrap();
            for c in [1e-3, 0.5, 7.0, 1e3] {
                let q = Arc::new(scaled_problem(&entry.problem, c));
                let m = recover_mpcc_multipliers(&q, &e.point, ACTIVE_TOL).unwrap();
                let want = base.scaled(c);
                let flat = |m: &MpccMultipliers| -> Vec<f64> {
                    let mut v = [&m.sigma1[..], &m.sigma2, &m.rho1, &m.rho2, &m.side_eq].concat();
                    v.extend(m.side_ineq.iter().map(|p| p.1));
                    v
                };
                let (a, b) = (flat(&m), flat(&want));
                assert_eq!(a.len(), b.len());
                for (x, y) in a.iter().zip(&b) {
                    assert!(
                        (x - y).abs() <= 1e-9 * c.max(1.0),
                        "{} c={c}: {x} vs {y}",
                        entry.problem.name
                    );
                }
                assert_eq!(
                    classify_mpcc_stationarity(&m, SIGN_TOL),
                    classify_mpcc_stationarity(&base, SIGN_TOL)
                );
            }
        }
    }
}
