mod common;

use common::fd_check as check;
use mpcc::bench::builtin_corpus;
use mpcc::expr::Expr;
use proptest::prelude::*;

const N: usize = 3;

fn expr_strategy() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(0..N).prop_map(Expr::Var), (-3.0..3.0f64).prop_map(Expr::Const),];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let b = |e: Expr| Box::new(e);
        prop_oneof![
            inner.clone().prop_map(move |a| Expr::Neg(b(a))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Add(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Sub(b(x), b(y))),
            (inner.clone(), inner.clone()).prop_map(move |(x, y)| Expr::Mul(b(x), b(y))),
            (inner.clone(), 0..4i32).prop_map(move |(x, k)| Expr::Pow(b(x), k)),
            // Denominator bounded away from zero.
            (inner.clone(), inner).prop_map(move |(x, y)| {
                let den = Expr::Add(b(Expr::Const(1.0)), b(Expr::Pow(b(y), 2)));
                Expr::Div(b(x), b(den))
            }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_expressions_match_finite_differences(e in expr_strategy(), seed in any::<u64>()) {
        prop_assert!(check(&e, N, seed).is_ok(), "{}", check(&e, N, seed).unwrap_err());
    }
}

#[test]
fn corpus_functions_match_finite_differences() {
    for entry in builtin_corpus() {
        let p = &entry.problem;
        let mut fns = vec![&p.objective];
        for pair in &p.pairs {
            fns.push(&pair.f1);
            fns.push(&pair.f2);
        }
        fns.extend(&p.ineqs);
        fns.extend(&p.eqs);
        for (k, f) in fns.into_iter().enumerate() {
            check(&f.expr, p.n, k as u64).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }
}

#[test]
fn negative_powers_and_quotients() {
    let text = "problem q\nvars x1 x2\nobjective (x1^2 + 3) / (2 + x2^2) - (1 + x1^2)^-2\npair (x1, x2)\nstart 0 0\n";
    let p = mpcc::MpccProblem::from_text(text).unwrap();
    check(&p.objective.expr, 2, 7).unwrap();
}
