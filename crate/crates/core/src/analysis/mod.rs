//! Stationarity classification, nondegeneracy and C-index of MPCC and D(t) points.

mod index;
mod trajectory;

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::disjunctive::RankReport;
use crate::error::AnalysisError;
use crate::linalg::{columns, full_column_rank, lstsq_min_norm};
use crate::model::{ActiveSets, MpccProblem};

pub use index::{disj_c_index, mpcc_c_index, singularity_threshold, tangent_basis, IndexReport, TangentBasis};
pub use trajectory::{
    trajectory_diagnostics, trajectory_diagnostics_with, BoundCheck, DiagnosticTolerances, EntryDiagnostics,
    InclusionCheck, LimitCheck, TrajectoryReport,
};

/// Sign tolerance for multiplier classification.
pub const SIGN_TOL: f64 = 1e-6;

/// Residual above which recovered MPCC multipliers do not certify stationarity.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// Rank tolerance relative to the largest singular value.
pub(crate) const RANK_TOL: f64 = 1e-9;

/// First-order stationarity type, from tightest to none.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stationarity {
    S,
    M,
    C,
    None,
}

impl Stationarity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stationarity::S => "S",
            Stationarity::M => "M",
            Stationarity::C => "C",
            Stationarity::None => "none",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Stationarity::S => 3,
            Stationarity::M => 2,
            Stationarity::C => 1,
            Stationarity::None => 0,
        }
    }

    /// Whether this class implies `other` (S implies M implies C).
    pub fn implies(&self, other: Stationarity) -> bool {
        self.rank() >= other.rank()
    }
}

impl fmt::Display for Stationarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// MPCC multipliers keyed by the active-set partition.
///
/// `∇f = Σ_{a01} σ1∇F1 + Σ_{a10} σ2∇F2 + Σ_{a00}(ϱ1∇F1 + ϱ2∇F2) + Σ_{active g} λ∇g + Σ μ∇h`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpccMultipliers {
    pub sets: ActiveSets,
    /// Aligned with `sets.a01`.
    pub sigma1: Vec<f64>,
    /// Aligned with `sets.a10`.
    pub sigma2: Vec<f64>,
    /// Aligned with `sets.a00`.
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    /// Active side inequalities (index, multiplier).
    pub side_ineq: Vec<(usize, f64)>,
    /// All side equalities in order.
    pub side_eq: Vec<f64>,
    /// Least-squares residual `‖A y - ∇f‖∞`.
    pub residual: f64,
    pub licq: bool,
}

fn lookup(idx: &[usize], vals: &[f64], j: usize) -> Option<f64> {
    idx.iter().position(|&k| k == j).map(|p| vals[p])
}

impl MpccMultipliers {
    pub fn sigma1(&self, j: usize) -> Option<f64> {
        lookup(&self.sets.a01, &self.sigma1, j)
    }
    pub fn sigma2(&self, j: usize) -> Option<f64> {
        lookup(&self.sets.a10, &self.sigma2, j)
    }
    pub fn rho(&self, j: usize) -> Option<(f64, f64)> {
        let p = self.sets.a00.iter().position(|&k| k == j)?;
        Some((self.rho1[p], self.rho2[p]))
    }

    /// Multiply every multiplier by `c`.
    pub fn scaled(&self, c: f64) -> MpccMultipliers {
        let s = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        MpccMultipliers {
            sets: self.sets.clone(),
            sigma1: s(&self.sigma1),
            sigma2: s(&self.sigma2),
            rho1: s(&self.rho1),
            rho2: s(&self.rho2),
            side_ineq: self.side_ineq.iter().map(|&(i, v)| (i, v * c)).collect(),
            side_eq: s(&self.side_eq),
            residual: self.residual * c.abs(),
            licq: self.licq,
        }
    }
}

impl fmt::Display for MpccMultipliers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (&j, v) in self.sets.a01.iter().zip(&self.sigma1) {
            writeln!(f, "sigma1[{}]: {v:e}", j + 1)?;
        }
        for (&j, v) in self.sets.a10.iter().zip(&self.sigma2) {
            writeln!(f, "sigma2[{}]: {v:e}", j + 1)?;
        }
        for (k, &j) in self.sets.a00.iter().enumerate() {
            writeln!(f, "rho1[{}]: {:e}", j + 1, self.rho1[k])?;
            writeln!(f, "rho2[{}]: {:e}", j + 1, self.rho2[k])?;
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

/// Active gradients of the MPCC at a point, as columns.
pub(crate) struct MpccSystem {
    pub a: DMatrix<f64>,
    pub grad_f: DVector<f64>,
    pub sets: ActiveSets,
    pub side_active: Vec<usize>,
}

pub(crate) fn mpcc_system(problem: &MpccProblem, x: &[f64], tol: f64) -> Result<MpccSystem, AnalysisError> {
    let violation = problem.try_maxvio(x)?;
    if violation > tol {
        return Err(AnalysisError::Infeasible { violation });
    }
    let sets = problem.active_sets(x, tol)?;
    let r = problem.evaluate_with(x, false)?;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    cols.extend(sets.a01.iter().map(|&j| r.f1[j].grad.clone()));
    cols.extend(sets.a10.iter().map(|&j| r.f2[j].grad.clone()));
    cols.extend(sets.a00.iter().map(|&j| r.f1[j].grad.clone()));
    cols.extend(sets.a00.iter().map(|&j| r.f2[j].grad.clone()));
    let side_active: Vec<usize> = (0..r.g.len()).filter(|&i| r.g[i].value.abs() <= tol).collect();
    cols.extend(side_active.iter().map(|&i| r.g[i].grad.clone()));
    cols.extend(r.h.iter().map(|h| h.grad.clone()));
    Ok(MpccSystem {
        a: columns(problem.n, &cols),
        grad_f: r.f.grad,
        sets,
        side_active,
    })
}

/// MPCC-LICQ: independence of `∇F1_j` on `a01 ∪ a00`, `∇F2_j` on `a10 ∪ a00`,
/// and the active side constraint gradients.
pub fn mpcc_licq(problem: &MpccProblem, x: &[f64], tol: f64) -> Result<RankReport, AnalysisError> {
    Ok(crate::disjunctive::rank_report(&mpcc_system(problem, x, tol)?.a))
}

/// Least-squares recovery of the MPCC multipliers; minimum-norm when LICQ fails.
pub fn recover_mpcc_multipliers(problem: &MpccProblem, x: &[f64], tol: f64) -> Result<MpccMultipliers, AnalysisError> {
    let sys = mpcc_system(problem, x, tol)?;
    let licq = full_column_rank(&sys.a, RANK_TOL);
    let (y, residual) = lstsq_min_norm(&sys.a, &sys.grad_f, 1e-12);
    let s = &sys.sets;
    let mut it = y.iter().copied();
    let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
    let sigma1 = take(s.a01.len());
    let sigma2 = take(s.a10.len());
    let rho1 = take(s.a00.len());
    let rho2 = take(s.a00.len());
    let side_vals = take(sys.side_active.len());
    let side_eq = take(problem.eqs.len());
    Ok(MpccMultipliers {
        sets: sys.sets.clone(),
        sigma1,
        sigma2,
        rho1,
        rho2,
        side_ineq: sys.side_active.iter().copied().zip(side_vals).collect(),
        side_eq,
        residual,
        licq,
    })
}

/// Tightest stationarity class whose sign conditions hold on `a00` within `tol`.
pub fn classify_mpcc_stationarity(m: &MpccMultipliers, tol: f64) -> Stationarity {
    if m.residual > RESIDUAL_TOL || m.side_ineq.iter().any(|p| p.1 < -tol) {
        return Stationarity::None;
    }
    let pairs = || m.rho1.iter().zip(&m.rho2);
    let product_tol = tol * tol;
    if pairs().any(|(a, b)| (a * b < -product_tol) && a.abs().min(b.abs()) > tol) {
        return Stationarity::None;
    }
    if pairs().all(|(&a, &b)| a >= -tol && b >= -tol) {
        Stationarity::S
    } else if pairs().all(|(&a, &b)| (a > tol && b > tol) || a.abs().min(b.abs()) <= tol) {
        Stationarity::M
    } else {
        Stationarity::C
    }
}

/// Sign partition of the active sets.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SignedActiveSets {
    pub a01_minus: Vec<usize>,
    pub a01_zero: Vec<usize>,
    pub a01_plus: Vec<usize>,
    pub a10_minus: Vec<usize>,
    pub a10_zero: Vec<usize>,
    pub a10_plus: Vec<usize>,
    pub a00_minus: Vec<usize>,
    pub a00_zero: Vec<usize>,
    pub a00_plus: Vec<usize>,
    /// Biactive pairs with multipliers of opposite strict signs (not C-stationary).
    pub a00_mixed: Vec<usize>,
    pub tol: f64,
}

fn split(idx: &[usize], vals: &[f64], tol: f64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (mut minus, mut zero, mut plus) = (Vec::new(), Vec::new(), Vec::new());
    for (&j, &v) in idx.iter().zip(vals) {
        if v < -tol {
            minus.push(j);
        } else if v > tol {
            plus.push(j);
        } else {
            zero.push(j);
        }
    }
    (minus, zero, plus)
}

pub fn signed_subsets(m: &MpccMultipliers, tol: f64) -> SignedActiveSets {
    let (a01_minus, a01_zero, a01_plus) = split(&m.sets.a01, &m.sigma1, tol);
    let (a10_minus, a10_zero, a10_plus) = split(&m.sets.a10, &m.sigma2, tol);
    let mut s = SignedActiveSets {
        a01_minus,
        a01_zero,
        a01_plus,
        a10_minus,
        a10_zero,
        a10_plus,
        tol,
        ..Default::default()
    };
    for (k, &j) in m.sets.a00.iter().enumerate() {
        let (a, b) = (m.rho1[k], m.rho2[k]);
        if a.abs().min(b.abs()) <= tol {
            s.a00_zero.push(j);
        } else if a < 0.0 && b < 0.0 {
            s.a00_minus.push(j);
        } else if a > 0.0 && b > 0.0 {
            s.a00_plus.push(j);
        } else {
            s.a00_mixed.push(j);
        }
    }
    s
}
