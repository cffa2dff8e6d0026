use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::{classify_mpcc_stationarity, signed_subsets, MpccMultipliers, Stationarity, RANK_TOL, RESIDUAL_TOL};
use crate::disjunctive::{classify_disj_stationarity, DisjMultipliers};
use crate::error::AnalysisError;
use crate::linalg::{columns, nullspace, sym_eigenvalues};
use crate::model::MpccProblem;
use crate::regularize::DisjunctiveNlp;

/// Orthonormal basis of the tangent space, one vector per column.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentBasis {
    pub basis: DMatrix<f64>,
    pub dim: usize,
}

/// Nullspace of the transposed gradient matrix (gradients are the columns, `n` rows).
pub fn tangent_basis(active_gradients: &DMatrix<f64>) -> TangentBasis {
    let basis = nullspace(&active_gradients.transpose(), RANK_TOL);
    let dim = basis.ncols();
    TangentBasis { basis, dim }
}

/// Eigenvalues within this distance of zero make the restricted Hessian singular.
pub fn singularity_threshold(eigenvalues: &[f64]) -> f64 {
    let radius = eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    1e-7 * (1.0 + radius)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexReport {
    pub licq: bool,
    pub nd1: bool,
    pub nd2: bool,
    pub nd3: bool,
    /// Only defined for MPCC points.
    pub nd4: Option<bool>,
    pub class: Stationarity,
    pub qi: usize,
    pub bi: usize,
    pub ci: usize,
    /// Number of vanishing single-active multipliers (zero for D(t) points).
    pub shift: usize,
    /// Eigenvalues of the restricted Hessian, ascending.
    pub eigenvalues: Vec<f64>,
    pub tangent_dim: usize,
    /// False when LICQ fails or the multiplier residual is too large.
    pub reliable: bool,
}

impl IndexReport {
    pub fn nondegenerate(&self) -> bool {
        self.nd1 && self.nd2 && self.nd3
    }

    /// One-line summary such as `class=C QI=0 BI=1 CI=1 ND4=true ND1=true ND2=false ND3=true`.
    pub fn summary(&self) -> String {
        let mut s = format!("class={} QI={} BI={} CI={}", self.class, self.qi, self.bi, self.ci);
        if let Some(nd4) = self.nd4 {
            s.push_str(&format!(" ND4={nd4}"));
        }
        s.push_str(&format!(" ND1={} ND2={} ND3={}", self.nd1, self.nd2, self.nd3));
        if !self.reliable {
            s.push_str(" unreliable");
        }
        s
    }
}

/// `key: value` lines.
impl fmt::Display for IndexReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "licq: {}", self.licq)?;
        writeln!(f, "nd1: {}", self.nd1)?;
        writeln!(f, "nd2: {}", self.nd2)?;
        writeln!(f, "nd3: {}", self.nd3)?;
        match self.nd4 {
            Some(v) => writeln!(f, "nd4: {v}")?,
            None => writeln!(f, "nd4: n/a")?,
        }
        writeln!(f, "class: {}", self.class)?;
        writeln!(f, "qi: {}", self.qi)?;
        writeln!(f, "bi: {}", self.bi)?;
        writeln!(f, "ci: {}", self.ci)?;
        writeln!(f, "shift: {}", self.shift)?;
        writeln!(f, "tangent_dim: {}", self.tangent_dim)?;
        let ev: Vec<String> = self.eigenvalues.iter().map(|e| format!("{e:e}")).collect();
        writeln!(f, "eigenvalues: {}", ev.join(" "))?;
        write!(f, "reliable: {}", self.reliable)
    }
}

struct Restricted {
    eigenvalues: Vec<f64>,
    qi: usize,
    nd3: bool,
    dim: usize,
}

fn restrict(hess: &DMatrix<f64>, gradients: &[DVector<f64>], n: usize) -> Restricted {
    let t = tangent_basis(&columns(n, gradients));
    let r = t.basis.transpose() * hess * &t.basis;
    let r = (&r + r.transpose()) * 0.5;
    let eigenvalues = sym_eigenvalues(&r);
    let tol = singularity_threshold(&eigenvalues);
    Restricted {
        qi: eigenvalues.iter().filter(|&&e| e < -tol).count(),
        nd3: eigenvalues.iter().all(|e| e.abs() > tol),
        eigenvalues,
        dim: t.dim,
    }
}

/// Indices of an MPCC point from its recovered multipliers.
///
/// `tol` is the sign tolerance for vanishing multipliers.
pub fn mpcc_c_index(
    problem: &MpccProblem,
    x: &[f64],
    m: &MpccMultipliers,
    tol: f64,
) -> Result<IndexReport, AnalysisError> {
    let s = &m.sets;
    if m.sigma1.len() != s.a01.len()
        || m.sigma2.len() != s.a10.len()
        || m.rho1.len() != s.a00.len()
        || m.rho2.len() != s.a00.len()
        || m.side_eq.len() != problem.eqs.len()
    {
        return Err(AnalysisError::MultiplierShape);
    }
    let r = problem.evaluate_with(x, true)?;
    let mut hess = r.f.hess().clone();
    let mut grads = Vec::new();
    for (&j, v) in s.a01.iter().zip(&m.sigma1) {
        hess -= r.f1[j].hess() * *v;
        grads.push(r.f1[j].grad.clone());
    }
    for (&j, v) in s.a10.iter().zip(&m.sigma2) {
        hess -= r.f2[j].hess() * *v;
        grads.push(r.f2[j].grad.clone());
    }
    for (k, &j) in s.a00.iter().enumerate() {
        hess -= r.f1[j].hess() * m.rho1[k] + r.f2[j].hess() * m.rho2[k];
        grads.push(r.f1[j].grad.clone());
        grads.push(r.f2[j].grad.clone());
    }
    for &(i, v) in &m.side_ineq {
        hess -= r.g[i].hess() * v;
        grads.push(r.g[i].grad.clone());
    }
    for (h, v) in r.h.iter().zip(&m.side_eq) {
        hess -= h.hess() * *v;
        grads.push(h.grad.clone());
    }
    let red = restrict(&hess, &grads, problem.n);
    let signed = signed_subsets(m, tol);
    let side_strict = m.side_ineq.iter().all(|p| p.1 > tol);
    let bi = signed.a00_minus.len();
    Ok(IndexReport {
        licq: m.licq,
        nd1: m.licq,
        nd2: signed.a00_zero.is_empty() && signed.a00_mixed.is_empty() && side_strict,
        nd3: red.nd3,
        nd4: Some(signed.a01_zero.is_empty() && signed.a10_zero.is_empty()),
        class: classify_mpcc_stationarity(m, tol),
        qi: red.qi,
        bi,
        ci: red.qi + bi,
        shift: signed.a01_zero.len() + signed.a10_zero.len(),
        eigenvalues: red.eigenvalues,
        tangent_dim: red.dim,
        reliable: m.licq && m.residual <= RESIDUAL_TOL,
    })
}

/// Indices of a D(t) point from its recovered multipliers.
pub fn disj_c_index(
    disj: &DisjunctiveNlp,
    x: &[f64],
    m: &DisjMultipliers,
    tol: f64,
) -> Result<IndexReport, AnalysisError> {
    let s = &m.sets;
    let problem = &disj.problem;
    if m.zeta1.len() != s.h12.len()
        || m.zeta2.len() != s.h12.len()
        || m.eta1.len() != s.h1.len()
        || m.eta2.len() != s.h2.len()
        || m.nu1.len() != s.n1.len()
        || m.nu2.len() != s.n2.len()
        || m.side_eq.len() != problem.eqs.len()
    {
        return Err(AnalysisError::MultiplierShape);
    }
    let r = problem.evaluate_with(x, true)?;
    // D²L = D²f + Σ ζ D²F + Σ η D²F - Σ ν D²F - Σ λ D²g - Σ μ D²h.
    let mut hess = r.f.hess().clone();
    let mut grads = Vec::new();
    for (k, &j) in s.h12.iter().enumerate() {
        hess += r.f1[j].hess() * m.zeta1[k] + r.f2[j].hess() * m.zeta2[k];
        grads.push(r.f1[j].grad.clone());
        grads.push(r.f2[j].grad.clone());
    }
    for (&j, v) in s.h1.iter().zip(&m.eta1) {
        hess += r.f1[j].hess() * *v;
        grads.push(r.f1[j].grad.clone());
    }
    for (&j, v) in s.h2.iter().zip(&m.eta2) {
        hess += r.f2[j].hess() * *v;
        grads.push(r.f2[j].grad.clone());
    }
    for (&j, v) in s.n1.iter().zip(&m.nu1) {
        hess -= r.f1[j].hess() * *v;
        grads.push(r.f1[j].grad.clone());
    }
    for (&j, v) in s.n2.iter().zip(&m.nu2) {
        hess -= r.f2[j].hess() * *v;
        grads.push(r.f2[j].grad.clone());
    }
    for &(i, v) in &m.side_ineq {
        hess -= r.g[i].hess() * v;
        grads.push(r.g[i].grad.clone());
    }
    for (h, v) in r.h.iter().zip(&m.side_eq) {
        hess -= h.hess() * *v;
        grads.push(h.grad.clone());
    }
    let red = restrict(&hess, &grads, problem.n);
    let nd2 = m
        .zeta1
        .iter()
        .chain(&m.zeta2)
        .chain(&m.eta1)
        .chain(&m.eta2)
        .chain(&m.nu1)
        .chain(&m.nu2)
        .copied()
        .chain(m.side_ineq.iter().map(|p| p.1))
        .all(|v| v > tol);
    let bi = m
        .zeta1
        .iter()
        .zip(&m.zeta2)
        .filter(|(a, b)| a.abs() > tol && b.abs() > tol)
        .count();
    Ok(IndexReport {
        licq: m.licq,
        nd1: m.licq,
        nd2,
        nd3: red.nd3,
        nd4: None,
        class: classify_disj_stationarity(m, tol),
        qi: red.qi,
        bi,
        ci: red.qi + bi,
        shift: 0,
        eigenvalues: red.eigenvalues,
        tangent_dim: red.dim,
        reliable: m.licq && m.residual <= RESIDUAL_TOL,
    })
}
