use mpcc::bench::builtin_corpus;
use mpcc::MpccProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn printed_problems_parse_back_to_the_same_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for entry in builtin_corpus() {
        let p = &entry.problem;
        let printed = p.to_string();
        let q = MpccProblem::from_text(&printed).unwrap_or_else(|e| panic!("{}: {e}\n{printed}", p.name));
        assert_eq!(q.to_string(), printed, "printing is a fixed point");
        assert_eq!(
            (q.n, q.pairs.len(), q.ineqs.len(), q.eqs.len()),
            (p.n, p.pairs.len(), p.ineqs.len(), p.eqs.len())
        );
        assert_eq!(q.start, p.start);
        for _ in 0..20 {
            let x: Vec<f64> = (0..p.n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = p.evaluate(&x).unwrap();
            let b = q.evaluate(&x).unwrap();
            assert_eq!(a.f.value, b.f.value);
            for (u, v) in a.f1.iter().zip(&b.f1).chain(a.f2.iter().zip(&b.f2)) {
                assert_eq!(u.value, v.value);
            }
        }
    }
}

#[test]
fn errors_carry_positions() {
    let cases = [
        ("problem p\nvars x1\nobjective x1 +\npair (x1, x1)\n", 3),
        ("problem p\nvars x1\nobjective x2\npair (x1, x1)\n", 3),
        ("problem p\nvars x1\nobjective x1\n", 4),
        ("problem p\nobjective x1\n", 2),
        ("problem p\nvars x1\nobjective x1\npair (x1, x1)\nstart 1 2\n", 5),
        ("problem p\nvars x1\nobjective 1.2.3\npair (x1, x1)\n", 3),
    ];
    for (text, line) in cases {
        let e = MpccProblem::from_text(text).unwrap_err();
        assert_eq!(e.line, line, "{text:?}: {e}");
        assert!(e.column >= 1);
    }
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let text =
        "# header\n\nproblem p   # trailing\nvars x1 x2\nobjective x1*x2\n\npair (x1, x2)\nineq 1 - x1\neq x1 - x2\n";
    let p = MpccProblem::from_text(text).unwrap();
    assert_eq!(p.name, "p");
    assert_eq!(p.start, vec![0.0, 0.0]);
    assert_eq!((p.ineqs.len(), p.eqs.len()), (1, 1));
}
