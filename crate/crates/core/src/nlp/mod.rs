//! Dense SQP solver for the regularized subproblems and KKT certificates.

pub mod qp;
mod sqp;

use std::fmt;

use nalgebra::DVector;

use crate::error::EvalError;
use crate::regularize::{ks_phi, NlpKind, Provenance, SmoothNlp};

pub use sqp::solve_nlp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
    NumericalFailure,
    /// KKT residual met only with multipliers above `multiplier_bound` (a Fritz-John-like point).
    DegenerateMultipliers,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical-failure",
            SolveStatus::DegenerateMultipliers => "degenerate-multipliers",
        }
    }

    /// Whether the returned point is usable as an approximate solution.
    pub fn is_usable(&self) -> bool {
        matches!(
            self,
            SolveStatus::Converged | SolveStatus::MaxIter | SolveStatus::DegenerateMultipliers
        )
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant of the merit line search.
    pub armijo: f64,
    /// Backtracking factor of the merit line search.
    pub backtrack: f64,
    /// Smallest step length tried before the line search gives up.
    pub min_step: f64,
    /// Iterates with a larger infinity norm are treated as divergence.
    pub divergence_bound: f64,
    /// Multipliers above `multiplier_bound * (1 + ‖∇f‖∞)` do not certify a KKT point.
    pub multiplier_bound: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kkt_tol: 1e-9,
            feas_tol: 1e-9,
            max_iter: 200,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-10,
            divergence_bound: 1e10,
            multiplier_bound: 1e8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NlpSolution {
    pub point: Vec<f64>,
    /// One multiplier per constraint: inequalities first, then equalities.
    pub multipliers: Vec<f64>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub objective: f64,
}

impl NlpSolution {
    /// Multiplier of the constraint with the given provenance.
    pub fn multiplier(&self, nlp: &SmoothNlp, p: Provenance) -> Option<f64> {
        nlp.ineqs
            .iter()
            .chain(&nlp.eqs)
            .position(|q| *q == p)
            .map(|i| self.multipliers[i])
    }
}

/// Largest of stationarity, feasibility, complementarity and sign violations.
///
/// Uses `L = f - Σ λ c`, with `λ >= 0` on inequalities `c >= 0`.
pub fn kkt_residual(nlp: &SmoothNlp, x: &[f64], multipliers: &[f64]) -> Result<f64, EvalError> {
    let e = nlp.eval(x)?;
    let mi = nlp.ineqs.len();
    assert_eq!(multipliers.len(), mi + nlp.eqs.len(), "one multiplier per constraint");
    Ok(sqp::residual_at(&e, &multipliers[..mi], &multipliers[mi..]))
}

/// Multipliers of a KS(t) point: `μ` for `Φ_j <= 0`, `μ1`, `μ2` for `F1_j, F2_j >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct KsMultipliers {
    pub mu: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    /// Side inequality multipliers (empty means zero).
    pub side_ineq: Vec<f64>,
    /// Side equality multipliers (empty means zero).
    pub side_eq: Vec<f64>,
}

impl KsMultipliers {
    pub fn new(mu: Vec<f64>, mu1: Vec<f64>, mu2: Vec<f64>) -> KsMultipliers {
        KsMultipliers {
            mu,
            mu1,
            mu2,
            side_ineq: Vec::new(),
            side_eq: Vec::new(),
        }
    }

    /// Read off the multipliers of a KS(t) solution.
    pub fn from_solution(nlp: &SmoothNlp, sol: &NlpSolution) -> KsMultipliers {
        let k = nlp.problem.kappa();
        let mut m = KsMultipliers {
            mu: vec![0.0; k],
            mu1: vec![0.0; k],
            mu2: vec![0.0; k],
            side_ineq: vec![0.0; nlp.problem.ineqs.len()],
            side_eq: vec![0.0; nlp.problem.eqs.len()],
        };
        for (p, &v) in nlp.ineqs.iter().chain(&nlp.eqs).zip(&sol.multipliers) {
            match *p {
                Provenance::KsPhi(j) => m.mu[j] = v,
                Provenance::LowerF1(j) => m.mu1[j] = v,
                Provenance::LowerF2(j) => m.mu2[j] = v,
                Provenance::Side(i) => m.side_ineq[i] = v,
                Provenance::SideEq(i) => m.side_eq[i] = v,
                _ => {}
            }
        }
        m
    }
}

/// Per-condition outcome of the ε-stationarity test for KS(t).
#[derive(Clone, Debug, PartialEq)]
pub struct EpsReport {
    pub eps: f64,
    /// Stationarity residual `‖∇f + Σμ∇Φ - Σμ1∇F1 - Σμ2∇F2‖∞`.
    pub stationarity: f64,
    /// Largest of `Φ_j`, `-F1_j`, `-F2_j`.
    pub feasibility: f64,
    /// Largest of `-μ_j`, `-μ1_j`, `-μ2_j`.
    pub sign: f64,
    /// Largest of `|μ_j Φ_j|`, `|μ1_j F1_j|`, `|μ2_j F2_j|`.
    pub complementarity: f64,
    pub violated: Vec<&'static str>,
}

impl EpsReport {
    pub fn pass(&self) -> bool {
        self.violated.is_empty()
    }
}

/// Relative and absolute slack absorbing rounding in quantities that sit exactly on the ε level.
const ROUNDING_SLACK: f64 = 1e-12;
const ROUNDING_FLOOR: f64 = 16.0 * f64::EPSILON;

/// ε-stationarity of a KS(t) point (conditions ekkt1 to ekkt4).
pub fn epsilon_stationarity_check(
    ks: &SmoothNlp,
    x: &[f64],
    m: &KsMultipliers,
    eps: f64,
) -> Result<EpsReport, EvalError> {
    assert_eq!(ks.kind, NlpKind::KanzowSchwartz, "expects a KS(t) problem");
    let p = &ks.problem;
    let k = p.kappa();
    assert!(m.mu.len() == k && m.mu1.len() == k && m.mu2.len() == k);
    let r = p.evaluate_with(x, false)?;
    let t = ks.t;
    let mut grad: DVector<f64> = r.f.grad.clone();
    let mut feas: f64 = f64::NEG_INFINITY;
    let mut sign: f64 = f64::NEG_INFINITY;
    let mut comp: f64 = 0.0;
    for j in 0..k {
        let (a, b) = (&r.f1[j], &r.f2[j]);
        let (phi, d) = ks_phi(a.value - t, b.value - t);
        grad += (&a.grad * d[0] + &b.grad * d[1]) * m.mu[j];
        grad -= &a.grad * m.mu1[j] + &b.grad * m.mu2[j];
        feas = feas.max(phi).max(-a.value).max(-b.value);
        sign = sign.max(-m.mu[j]).max(-m.mu1[j]).max(-m.mu2[j]);
        comp = comp
            .max((m.mu[j] * phi).abs())
            .max((m.mu1[j] * a.value).abs())
            .max((m.mu2[j] * b.value).abs());
    }
    for (i, g) in r.g.iter().enumerate() {
        let l = m.side_ineq.get(i).copied().unwrap_or(0.0);
        grad -= &g.grad * l;
        feas = feas.max(-g.value);
        sign = sign.max(-l);
        comp = comp.max((l * g.value).abs());
    }
    for (i, h) in r.h.iter().enumerate() {
        let l = m.side_eq.get(i).copied().unwrap_or(0.0);
        grad -= &h.grad * l;
        feas = feas.max(h.value.abs());
    }
    let stationarity = grad.amax();
    let level = eps * (1.0 + ROUNDING_SLACK) + ROUNDING_FLOOR;
    let mut violated = Vec::new();
    for (name, v) in [
        ("ekkt1", stationarity),
        ("ekkt2", feas),
        ("ekkt3", sign),
        ("ekkt4", comp),
    ] {
        if v > level {
            violated.push(name);
        }
    }
    Ok(EpsReport {
        eps,
        stationarity,
        feasibility: feas,
        sign,
        complementarity: comp,
        violated,
    })
}
