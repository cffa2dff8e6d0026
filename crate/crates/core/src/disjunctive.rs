//! Branch-enumeration solver for D(t) and disjunctive multiplier recovery.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::analysis::{Stationarity, RANK_TOL, RESIDUAL_TOL, SIGN_TOL};
use crate::error::AnalysisError;
use crate::linalg::{columns, full_column_rank, lstsq_min_norm};
use crate::model::ACTIVE_TOL;
use crate::nlp::{solve_nlp, SolveStatus, SolverOptions};
use crate::par;
use crate::regularize::{DisjActiveSets, DisjunctiveNlp, Pattern};
use crate::Execution;

/// Largest κ accepted by [`DisjMode::Enumerate`].
pub const ENUMERATION_CAP: usize = 12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DisjMode {
    /// Solve every branch pattern and keep the best.
    #[default]
    Enumerate,
    /// Solve only the pattern picked by `argmin(F1_j(x0), F2_j(x0))`.
    Greedy,
}

impl DisjMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DisjMode::Enumerate => "enumerate",
            DisjMode::Greedy => "greedy",
        }
    }
}

impl std::str::FromStr for DisjMode {
    type Err = String;
    fn from_str(s: &str) -> Result<DisjMode, String> {
        match s {
            "enumerate" => Ok(DisjMode::Enumerate),
            "greedy" => Ok(DisjMode::Greedy),
            _ => Err(format!("unknown mode `{s}` (expected enumerate or greedy)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DisjError {
    #[error("enumeration over {kappa} pairs exceeds the cap of {cap}; use greedy mode")]
    EnumerationCap { kappa: usize, cap: usize },
}

/// Multipliers of the disjunctive stationarity system, aligned with `sets`.
///
/// `∇f = -Σ_{H12}(ζ1∇F1 + ζ2∇F2) - Σ_{H1} η1∇F1 - Σ_{H2} η2∇F2 + Σ_{N1} ν1∇F1 + Σ_{N2} ν2∇F2
///       + Σ_{active g} λ∇g + Σ μ∇h`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisjMultipliers {
    pub sets: DisjActiveSets,
    pub zeta1: Vec<f64>,
    pub zeta2: Vec<f64>,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
    /// Active side inequalities `g_i` (index, multiplier).
    pub side_ineq: Vec<(usize, f64)>,
    /// All side equalities in order.
    pub side_eq: Vec<f64>,
    /// Least-squares residual `‖A y - ∇f‖∞`.
    pub residual: f64,
    /// Whether the active gradients are linearly independent.
    pub licq: bool,
}

fn lookup(idx: &[usize], vals: &[f64], j: usize) -> Option<f64> {
    idx.iter().position(|&k| k == j).map(|p| vals[p])
}

impl DisjMultipliers {
    pub fn zeta(&self, j: usize) -> Option<(f64, f64)> {
        let p = self.sets.h12.iter().position(|&k| k == j)?;
        Some((self.zeta1[p], self.zeta2[p]))
    }
    pub fn eta1(&self, j: usize) -> Option<f64> {
        lookup(&self.sets.h1, &self.eta1, j)
    }
    pub fn eta2(&self, j: usize) -> Option<f64> {
        lookup(&self.sets.h2, &self.eta2, j)
    }
    pub fn nu1(&self, j: usize) -> Option<f64> {
        lookup(&self.sets.n1, &self.nu1, j)
    }
    pub fn nu2(&self, j: usize) -> Option<f64> {
        lookup(&self.sets.n2, &self.nu2, j)
    }

    /// All multipliers carrying a sign condition.
    fn signed(&self) -> impl Iterator<Item = f64> + '_ {
        self.zeta1
            .iter()
            .chain(&self.zeta2)
            .chain(&self.eta1)
            .chain(&self.eta2)
            .chain(&self.nu1)
            .chain(&self.nu2)
            .copied()
            .chain(self.side_ineq.iter().map(|p| p.1))
    }
}

impl fmt::Display for DisjMultipliers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, &j) in self.sets.h12.iter().enumerate() {
            writeln!(f, "zeta1[{}]: {:e}", j + 1, self.zeta1[k])?;
            writeln!(f, "zeta2[{}]: {:e}", j + 1, self.zeta2[k])?;
        }
        let groups = [
            ("eta1", &self.sets.h1, &self.eta1),
            ("eta2", &self.sets.h2, &self.eta2),
            ("nu1", &self.sets.n1, &self.nu1),
            ("nu2", &self.sets.n2, &self.nu2),
        ];
        for (name, idx, vals) in groups {
            for (&j, v) in idx.iter().zip(vals.iter()) {
                writeln!(f, "{name}[{}]: {v:e}", j + 1)?;
            }
        }
        for &(i, v) in &self.side_ineq {
            writeln!(f, "lambda[{}]: {v:e}", i + 1)?;
        }
        for (i, v) in self.side_eq.iter().enumerate() {
            writeln!(f, "mu[{}]: {v:e}", i + 1)?;
        }
        write!(f, "residual: {:e}", self.residual)
    }
}

/// Active gradient matrix of D(t) in the column order used by [`DisjMultipliers`].
struct DisjSystem {
    a: DMatrix<f64>,
    grad_f: DVector<f64>,
    sets: DisjActiveSets,
    side_active: Vec<usize>,
}

fn disj_system(disj: &DisjunctiveNlp, x: &[f64], tol: f64) -> Result<DisjSystem, AnalysisError> {
    let sets = disj.active_sets(x, tol)?;
    let r = disj.problem.evaluate_with(x, false)?;
    let mut cols = Vec::new();
    for &j in &sets.h12 {
        cols.push(-&r.f1[j].grad);
    }
    for &j in &sets.h12 {
        cols.push(-&r.f2[j].grad);
    }
    cols.extend(sets.h1.iter().map(|&j| -&r.f1[j].grad));
    cols.extend(sets.h2.iter().map(|&j| -&r.f2[j].grad));
    cols.extend(sets.n1.iter().map(|&j| r.f1[j].grad.clone()));
    cols.extend(sets.n2.iter().map(|&j| r.f2[j].grad.clone()));
    let side_active: Vec<usize> = (0..r.g.len()).filter(|&i| r.g[i].value.abs() <= tol).collect();
    cols.extend(side_active.iter().map(|&i| r.g[i].grad.clone()));
    cols.extend(r.h.iter().map(|h| h.grad.clone()));
    Ok(DisjSystem {
        a: columns(disj.problem.n, &cols),
        grad_f: r.f.grad,
        sets,
        side_active,
    })
}

/// Least-squares recovery of the disjunctive multipliers at a feasible point of D(t).
pub fn recover_disj_multipliers(disj: &DisjunctiveNlp, x: &[f64], tol: f64) -> Result<DisjMultipliers, AnalysisError> {
    let sys = disj_system(disj, x, tol)?;
    let licq = full_column_rank(&sys.a, RANK_TOL);
    let (y, residual) = lstsq_min_norm(&sys.a, &sys.grad_f, 1e-12);
    let s = &sys.sets;
    let mut it = y.iter().copied();
    let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
    let zeta1 = take(s.h12.len());
    let zeta2 = take(s.h12.len());
    let eta1 = take(s.h1.len());
    let eta2 = take(s.h2.len());
    let nu1 = take(s.n1.len());
    let nu2 = take(s.n2.len());
    let side_vals = take(sys.side_active.len());
    let side_eq = take(disj.problem.eqs.len());
    Ok(DisjMultipliers {
        sets: sys.sets.clone(),
        zeta1,
        zeta2,
        eta1,
        eta2,
        nu1,
        nu2,
        side_ineq: sys.side_active.iter().copied().zip(side_vals).collect(),
        side_eq,
        residual,
        licq,
    })
}

/// Stationarity type of D(t) from recovered multipliers.
pub fn classify_disj_stationarity(m: &DisjMultipliers, tol: f64) -> Stationarity {
    if m.residual > RESIDUAL_TOL || m.signed().any(|v| v < -tol) {
        return Stationarity::None;
    }
    let pairs = || m.zeta1.iter().zip(&m.zeta2);
    if pairs().all(|(a, b)| a.abs() <= tol && b.abs() <= tol) {
        Stationarity::S
    } else if pairs().all(|(a, b)| a.abs().min(b.abs()) <= tol) {
        Stationarity::M
    } else {
        Stationarity::C
    }
}

/// Outcome of the DISJ-LICQ rank test.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub holds: bool,
    pub gradients: usize,
    pub singular_values: Vec<f64>,
}

pub(crate) fn rank_report(a: &DMatrix<f64>) -> RankReport {
    let sv = if a.ncols() == 0 {
        Vec::new()
    } else {
        nalgebra::SVD::new(a.clone(), false, false)
            .singular_values
            .iter()
            .copied()
            .collect()
    };
    RankReport {
        holds: full_column_rank(a, RANK_TOL),
        gradients: a.ncols(),
        singular_values: sv,
    }
}

/// DISJ-LICQ: linear independence of all active gradients of D(t) at `x`.
pub fn disj_licq(disj: &DisjunctiveNlp, x: &[f64], tol: f64) -> Result<RankReport, AnalysisError> {
    Ok(rank_report(&disj_system(disj, x, tol)?.a))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisjSolution {
    pub point: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub pattern: Pattern,
    pub sets: Option<DisjActiveSets>,
    pub multipliers: Option<DisjMultipliers>,
    pub class: Stationarity,
    pub patterns_tried: usize,
    pub patterns_converged: usize,
}

fn greedy_pattern(disj: &DisjunctiveNlp, x0: &[f64]) -> Pattern {
    match disj.problem.pair_values(x0) {
        Ok(v) => v.into_iter().map(|(a, b)| b < a).collect(),
        Err(_) => vec![false; disj.problem.kappa()],
    }
}

/// Pattern number `mask` with pair 0 as the most significant choice, so that
/// numeric order is lexicographic order with A before B.
fn pattern_of(mask: usize, kappa: usize) -> Pattern {
    (0..kappa).map(|j| (mask >> (kappa - 1 - j)) & 1 == 1).collect()
}

/// Solve D(t) from `x0` by branch enumeration or a single greedy pattern.
pub fn solve_disjunctive(
    disj: &DisjunctiveNlp,
    x0: &[f64],
    opts: &SolverOptions,
    mode: DisjMode,
    exec: Execution,
) -> Result<DisjSolution, DisjError> {
    let kappa = disj.problem.kappa();
    let patterns: Vec<Pattern> = match mode {
        DisjMode::Enumerate => {
            if kappa > ENUMERATION_CAP {
                return Err(DisjError::EnumerationCap {
                    kappa,
                    cap: ENUMERATION_CAP,
                });
            }
            (0..1usize << kappa).map(|m| pattern_of(m, kappa)).collect()
        }
        DisjMode::Greedy => vec![greedy_pattern(disj, x0)],
    };
    let results = par::map(exec, &patterns, |p| solve_nlp(&disj.branch(p), x0, opts));

    // Deterministic reduction in pattern order: a later pattern wins only if strictly better.
    let mut winner: Option<usize> = None;
    let mut converged = 0;
    for (i, r) in results.iter().enumerate() {
        if r.status != SolveStatus::Converged || !disj.contains(&r.point, ACTIVE_TOL) {
            continue;
        }
        converged += 1;
        let better = match winner {
            None => true,
            Some(w) => {
                let fw = results[w].objective;
                r.objective < fw - 1e-9 * (1.0 + fw.abs())
            }
        };
        if better {
            winner = Some(i);
        }
    }

    let Some(w) = winner else {
        // Best-violation iterate among all patterns.
        let (i, _) = results
            .iter()
            .enumerate()
            .map(|(i, r)| (i, disj.violation(&r.point)))
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
        let r = &results[i];
        let objective = disj.problem.objective.value(&r.point).unwrap_or(f64::NAN);
        return Ok(DisjSolution {
            point: r.point.clone(),
            objective,
            status: SolveStatus::Infeasible,
            pattern: patterns[i].clone(),
            sets: None,
            multipliers: None,
            class: Stationarity::None,
            patterns_tried: patterns.len(),
            patterns_converged: 0,
        });
    };

    let r = &results[w];
    let multipliers = recover_disj_multipliers(disj, &r.point, ACTIVE_TOL).ok();
    let class = multipliers
        .as_ref()
        .map_or(Stationarity::None, |m| classify_disj_stationarity(m, SIGN_TOL));
    Ok(DisjSolution {
        point: r.point.clone(),
        objective: r.objective,
        status: SolveStatus::Converged,
        pattern: patterns[w].clone(),
        sets: multipliers.as_ref().map(|m| m.sets.clone()),
        multipliers,
        class,
        patterns_tried: patterns.len(),
        patterns_converged: converged,
    })
}

/// Pattern as a string of `A`/`B` choices.
pub struct PatternDisplay<'a>(pub &'a [bool]);

impl fmt::Display for PatternDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in self.0 {
            f.write_str(if b { "B" } else { "A" })?;
        }
        Ok(())
    }
}
