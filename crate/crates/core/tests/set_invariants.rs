use std::collections::HashSet;

use mpcc::bench::builtin_corpus;
use mpcc::homotopy::{run_homotopy, HomotopyParams, RegKind};
use mpcc::regularize::{disjunctive, kanzow_schwartz, quadrant_penalty, scholtes, Provenance, DEFAULT_BETA};
use proptest::prelude::*;

proptest! {
    #[test]
    fn active_sets_are_stable_under_tolerance_shrinking(
        which in 0usize..13,
        x in prop::collection::vec(-0.01f64..0.01, 5),
        tol in 1e-9f64..1e-2,
        shrink in 0.0f64..1.0,
    ) {
        let corpus = builtin_corpus();
        let p = &corpus[which % corpus.len()].problem;
        let x = &x[..p.n];
        let a = p.active_sets(x, tol).unwrap();
        prop_assert_eq!(&a, &p.active_sets(x, tol).unwrap());
        let b = p.active_sets(x, tol * shrink).unwrap();
        for j in a.a01.iter().chain(&a.a10) {
            prop_assert!(!b.a00.contains(j));
        }
        let all: HashSet<usize> = a.a01.iter().chain(&a.a10).chain(&a.a00).chain(&a.violated).copied().collect();
        prop_assert_eq!(all.len(), p.kappa());
    }
}

#[test]
fn mpcc_points_lie_in_every_regularization() {
    let mut checked = 0;
    for entry in builtin_corpus() {
        let p = &entry.problem;
        let mut points: Vec<Vec<f64>> = entry.expectations.iter().map(|e| e.point.clone()).collect();
        let end = run_homotopy(p, &HomotopyParams::new(RegKind::Disj)).unwrap();
        if p.maxvio(&end.point) == 0.0 {
            points.push(end.point);
        }
        for x in points {
            assert_eq!(p.maxvio(&x), 0.0, "{}", p.name);
            for t in [1.0, 0.1, 0.01, 1e-6] {
                let name = &p.name;
                assert!(scholtes(p, t).unwrap().is_feasible(&x, 0.0), "{name} S t={t}");
                assert!(kanzow_schwartz(p, t).unwrap().is_feasible(&x, 0.0), "{name} KS t={t}");
                assert!(
                    quadrant_penalty(p, t, DEFAULT_BETA).unwrap().is_feasible(&x, 0.0),
                    "{name} QPF t={t}"
                );
                assert!(disjunctive(p, t).unwrap().contains(&x, 0.0), "{name} D t={t}");
            }
            checked += 1;
        }
    }
    assert!(checked >= 10, "{checked}");
}

#[test]
fn provenance_tags_partition_the_constraints() {
    for entry in builtin_corpus() {
        let p = entry.problem;
        let d = disjunctive(&p, 0.1).unwrap();
        let nlps = [
            (scholtes(&p, 0.1).unwrap(), "scholtes-product"),
            (kanzow_schwartz(&p, 0.1).unwrap(), "ks-phi"),
            (quadrant_penalty(&p, 0.1, DEFAULT_BETA).unwrap(), "qpf-penalty"),
            (d.branch(&vec![false; p.kappa()]), "branch-A"),
            (d.branch(&vec![true; p.kappa()]), "branch-B"),
        ];
        for (nlp, tag) in nlps {
            let all: Vec<Provenance> = nlp.ineqs.iter().chain(&nlp.eqs).copied().collect();
            assert_eq!(
                all.iter().collect::<HashSet<_>>().len(),
                all.len(),
                "{} {tag}: duplicates",
                p.name
            );
            assert_eq!(
                all.len(),
                p.ineqs.len() + p.eqs.len() + 3 * p.kappa(),
                "{} {tag}",
                p.name
            );
            for j in 0..p.kappa() {
                let tags: Vec<&str> = all.iter().filter(|q| q.pair() == Some(j)).map(|q| q.tag()).collect();
                assert_eq!(tags, ["lower-F1", "lower-F2", tag], "{} pair {j}", p.name);
            }
            assert!(all.iter().all(|q| q.pair().is_none_or(|j| j < p.kappa())));
            let side = all.iter().filter(|q| q.pair().is_none()).count();
            assert_eq!(side, p.ineqs.len() + p.eqs.len());
        }
    }
}
