mod common;

use common::{ks_disj_bridge, problem};
use mpcc::nlp::{epsilon_stationarity_check, KsMultipliers};
use mpcc::regularize::kanzow_schwartz;

#[test]
fn ks_kkt_points_are_s_points_of_d_and_back() {
    let b = ks_disj_bridge();
    assert!(b.ks_converged > 0 && b.disj_s_points > 0);
    assert!(b.ks_failures.is_empty(), "{:#?}", b.ks_failures);
    assert!(b.disj_failures.is_empty(), "{:#?}", b.disj_failures);
}

fn eps_point(t: f64) -> (Vec<f64>, KsMultipliers) {
    let e = t * t;
    (
        vec![t - e, t - e],
        KsMultipliers::new(vec![1.0 / e], vec![0.0], vec![0.0]),
    )
}

#[test]
fn fritz_john_eps_points() {
    let p = problem("fritz_john");
    for t in [0.1, 0.01] {
        let ks = kanzow_schwartz(&p, t).unwrap();
        let (x, m) = eps_point(t);
        let at = epsilon_stationarity_check(&ks, &x, &m, t * t).unwrap();
        assert!(at.pass(), "t={t}: {at:?}");
        let tighter = epsilon_stationarity_check(&ks, &x, &m, t * t / 10.0).unwrap();
        assert!(!tighter.pass(), "t={t}: {tighter:?}");
    }
}

#[test]
fn eps_multiplier_grows_without_bound() {
    // Stationarity forces μ (t - x1) ≈ 1 while x1 - t → 0.
    let mu: Vec<f64> = [0.1, 0.01, 0.001].iter().map(|t| eps_point(*t).1.mu[0]).collect();
    assert!(mu.windows(2).all(|w| w[1] > 10.0 * w[0]));
}
