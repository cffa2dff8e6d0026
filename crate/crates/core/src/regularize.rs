//! Regularized subproblems S(t), KS(t), D(t) and QPF(t).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{require, AnalysisError, EvalError, ParameterError};
use crate::model::{EvalRecord, MpccProblem};

/// Default β of the quadrant penalty.
pub const DEFAULT_BETA: f64 = 2.0;

/// Kanzow-Schwartz NCP function: `ab` if `a + b >= 0`, else `-(a² + b²)/2`.
pub fn ks_phi(a: f64, b: f64) -> (f64, [f64; 2]) {
    if a + b >= 0.0 {
        (a * b, [b, a])
    } else {
        (-(a * a + b * b) / 2.0, [-a, -b])
    }
}

/// Quadrant penalty `g_β(u, v)`. Vanishes exactly when `u <= 0` or `v >= 0`.
///
/// The middle wedge uses `(u² + 2βuv + v²)/(1 - β²)`, which joins the `u²` and `v²`
/// pieces continuously and with matching gradients.
pub fn quadrant_penalty_g(u: f64, v: f64, beta: f64) -> Result<f64, ParameterError> {
    require(beta > 1.0, "beta", beta, "must exceed 1")?;
    Ok(g_beta(u, v, beta).0)
}

pub(crate) fn g_beta(u: f64, v: f64, beta: f64) -> (f64, [f64; 2]) {
    if u <= 0.0 || v >= 0.0 {
        (0.0, [0.0, 0.0])
    } else if u <= -v / beta {
        (u * u, [2.0 * u, 0.0])
    } else if u < -beta * v {
        let s = 1.0 / (1.0 - beta * beta);
        (
            s * (u * u + 2.0 * beta * u * v + v * v),
            [s * (2.0 * u + 2.0 * beta * v), s * (2.0 * beta * u + 2.0 * v)],
        )
    } else {
        (v * v, [0.0, 2.0 * v])
    }
}

/// Origin of a generated constraint. Pair and side indices are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// Side inequality `g_i >= 0`.
    Side(usize),
    /// Side equality `h_i = 0`.
    SideEq(usize),
    /// `F1_j >= 0`.
    LowerF1(usize),
    /// `F2_j >= 0`.
    LowerF2(usize),
    /// `t - F1_j F2_j >= 0`.
    ScholtesProduct(usize),
    /// `-Φ_j(x, t) >= 0`.
    KsPhi(usize),
    /// `g_β(F1_j - t, t - F2_j) = 0`.
    QpfPenalty(usize),
    /// Disjunctive branch A, `t - F1_j >= 0`.
    BranchA(usize),
    /// Disjunctive branch B, `t - F2_j >= 0`.
    BranchB(usize),
}

impl Provenance {
    /// Complementarity pair the constraint was generated from, if any.
    pub fn pair(&self) -> Option<usize> {
        match *self {
            Provenance::Side(_) | Provenance::SideEq(_) => None,
            Provenance::LowerF1(j)
            | Provenance::LowerF2(j)
            | Provenance::ScholtesProduct(j)
            | Provenance::KsPhi(j)
            | Provenance::QpfPenalty(j)
            | Provenance::BranchA(j)
            | Provenance::BranchB(j) => Some(j),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Provenance::Side(_) | Provenance::SideEq(_) => "side",
            Provenance::LowerF1(_) => "lower-F1",
            Provenance::LowerF2(_) => "lower-F2",
            Provenance::ScholtesProduct(_) => "scholtes-product",
            Provenance::KsPhi(_) => "ks-phi",
            Provenance::QpfPenalty(_) => "qpf-penalty",
            Provenance::BranchA(_) => "branch-A",
            Provenance::BranchB(_) => "branch-B",
        }
    }
}

/// Which regularization produced a [`SmoothNlp`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NlpKind {
    Scholtes,
    KanzowSchwartz,
    QuadrantPenalty,
    /// One fixed branch pattern of D(t).
    Branch,
}

/// Smooth NLP `min f s.t. c_i(x) >= 0, e_k(x) = 0` derived from an MPCC.
#[derive(Clone, Debug)]
pub struct SmoothNlp {
    pub problem: Arc<MpccProblem>,
    pub kind: NlpKind,
    pub t: f64,
    pub beta: f64,
    pub ineqs: Vec<Provenance>,
    pub eqs: Vec<Provenance>,
}

/// Constraint values and Jacobians (rows are constraint gradients).
#[derive(Clone, Debug)]
pub struct NlpEval {
    pub f: f64,
    pub grad: DVector<f64>,
    pub ineq: DVector<f64>,
    pub ineq_jac: DMatrix<f64>,
    pub eq: DVector<f64>,
    pub eq_jac: DMatrix<f64>,
}

impl SmoothNlp {
    pub fn n(&self) -> usize {
        self.problem.n
    }

    fn constraint(&self, p: Provenance, r: &EvalRecord) -> (f64, DVector<f64>) {
        let t = self.t;
        match p {
            Provenance::Side(i) => (r.g[i].value, r.g[i].grad.clone()),
            Provenance::SideEq(i) => (r.h[i].value, r.h[i].grad.clone()),
            Provenance::LowerF1(j) => (r.f1[j].value, r.f1[j].grad.clone()),
            Provenance::LowerF2(j) => (r.f2[j].value, r.f2[j].grad.clone()),
            Provenance::ScholtesProduct(j) => {
                let (a, b) = (&r.f1[j], &r.f2[j]);
                (t - a.value * b.value, -(&a.grad * b.value + &b.grad * a.value))
            }
            Provenance::KsPhi(j) => {
                let (a, b) = (&r.f1[j], &r.f2[j]);
                let (v, d) = ks_phi(a.value - t, b.value - t);
                (-v, -(&a.grad * d[0] + &b.grad * d[1]))
            }
            Provenance::QpfPenalty(j) => {
                let (a, b) = (&r.f1[j], &r.f2[j]);
                let (v, d) = g_beta(a.value - t, t - b.value, self.beta);
                (v, &a.grad * d[0] - &b.grad * d[1])
            }
            Provenance::BranchA(j) => (t - r.f1[j].value, -&r.f1[j].grad),
            Provenance::BranchB(j) => (t - r.f2[j].value, -&r.f2[j].grad),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<NlpEval, EvalError> {
        let r = self.problem.evaluate_with(x, false)?;
        let n = self.n();
        let fill = |list: &[Provenance]| {
            let mut vals = DVector::zeros(list.len());
            let mut jac = DMatrix::zeros(list.len(), n);
            for (i, p) in list.iter().enumerate() {
                let (v, g) = self.constraint(*p, &r);
                vals[i] = v;
                jac.set_row(i, &g.transpose());
            }
            (vals, jac)
        };
        let (ineq, ineq_jac) = fill(&self.ineqs);
        let (eq, eq_jac) = fill(&self.eqs);
        Ok(NlpEval {
            f: r.f.value,
            grad: r.f.grad,
            ineq,
            ineq_jac,
            eq,
            eq_jac,
        })
    }

    /// Largest violation of `c >= 0` and `e = 0`; infinite if evaluation fails.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self.eval(x) {
            Ok(e) => violation_of(&e),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }
}

pub(crate) fn violation_of(e: &NlpEval) -> f64 {
    let a = e.ineq.iter().fold(0.0_f64, |m, &c| m.max(-c));
    e.eq.iter().fold(a, |m, &c| m.max(c.abs()))
}

fn check_t(t: f64) -> Result<(), ParameterError> {
    require(t > 0.0 && t.is_finite(), "t", t, "must be positive and finite")
}

fn base_constraints(problem: &MpccProblem) -> (Vec<Provenance>, Vec<Provenance>) {
    let mut ineqs: Vec<Provenance> = (0..problem.ineqs.len()).map(Provenance::Side).collect();
    for j in 0..problem.kappa() {
        ineqs.push(Provenance::LowerF1(j));
        ineqs.push(Provenance::LowerF2(j));
    }
    let eqs = (0..problem.eqs.len()).map(Provenance::SideEq).collect();
    (ineqs, eqs)
}

/// Scholtes regularization S(t): `F1_j F2_j <= t`.
pub fn scholtes(problem: &Arc<MpccProblem>, t: f64) -> Result<SmoothNlp, ParameterError> {
    check_t(t)?;
    let (mut ineqs, eqs) = base_constraints(problem);
    ineqs.extend((0..problem.kappa()).map(Provenance::ScholtesProduct));
    Ok(SmoothNlp {
        problem: problem.clone(),
        kind: NlpKind::Scholtes,
        t,
        beta: DEFAULT_BETA,
        ineqs,
        eqs,
    })
}

/// Kanzow-Schwartz regularization KS(t): `Φ_j(x, t) <= 0`.
pub fn kanzow_schwartz(problem: &Arc<MpccProblem>, t: f64) -> Result<SmoothNlp, ParameterError> {
    check_t(t)?;
    let (mut ineqs, eqs) = base_constraints(problem);
    ineqs.extend((0..problem.kappa()).map(Provenance::KsPhi));
    Ok(SmoothNlp {
        problem: problem.clone(),
        kind: NlpKind::KanzowSchwartz,
        t,
        beta: DEFAULT_BETA,
        ineqs,
        eqs,
    })
}

/// Quadrant-penalty regularization QPF(t): `g_β(F1_j - t, t - F2_j) = 0`.
pub fn quadrant_penalty(problem: &Arc<MpccProblem>, t: f64, beta: f64) -> Result<SmoothNlp, ParameterError> {
    check_t(t)?;
    require(beta > 1.0, "beta", beta, "must exceed 1")?;
    let (ineqs, mut eqs) = base_constraints(problem);
    eqs.extend((0..problem.kappa()).map(Provenance::QpfPenalty));
    Ok(SmoothNlp {
        problem: problem.clone(),
        kind: NlpKind::QuadrantPenalty,
        t,
        beta,
        ineqs,
        eqs,
    })
}

/// Disjunctive regularization D(t): `max{t - F1_j, t - F2_j} >= 0`, `F1_j, F2_j >= 0`.
#[derive(Clone, Debug)]
pub struct DisjunctiveNlp {
    pub problem: Arc<MpccProblem>,
    pub t: f64,
}

/// Active index sets of a point of D(t) (zero-based, ascending).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DisjActiveSets {
    pub h12: Vec<usize>,
    pub h1: Vec<usize>,
    pub h2: Vec<usize>,
    pub n1: Vec<usize>,
    pub n2: Vec<usize>,
    pub tol: f64,
}

/// Branch choice per pair; `false` is branch A (`t - F1 >= 0`), `true` branch B.
pub type Pattern = Vec<bool>;

pub fn disjunctive(problem: &Arc<MpccProblem>, t: f64) -> Result<DisjunctiveNlp, ParameterError> {
    check_t(t)?;
    Ok(DisjunctiveNlp {
        problem: problem.clone(),
        t,
    })
}

impl DisjunctiveNlp {
    /// Largest violation of the D(t) constraints; infinite if evaluation fails.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.try_violation(x).unwrap_or(f64::INFINITY)
    }

    fn try_violation(&self, x: &[f64]) -> Result<f64, EvalError> {
        let p = &self.problem;
        let mut v: f64 = 0.0;
        for (a, b) in p.pair_values(x)? {
            v = v.max(-a).max(-b).max(-(self.t - a).max(self.t - b));
        }
        for g in &p.ineqs {
            v = v.max(-g.value(x)?);
        }
        for h in &p.eqs {
            v = v.max(h.value(x)?.abs());
        }
        Ok(v)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// Smooth NLP for a fixed branch pattern; `true` enforces branch B for that pair.
    pub fn branch(&self, pattern: &[bool]) -> SmoothNlp {
        assert_eq!(pattern.len(), self.problem.kappa(), "pattern length");
        let (mut ineqs, eqs) = base_constraints(&self.problem);
        ineqs.extend(pattern.iter().enumerate().map(|(j, &b)| {
            if b {
                Provenance::BranchB(j)
            } else {
                Provenance::BranchA(j)
            }
        }));
        SmoothNlp {
            problem: self.problem.clone(),
            kind: NlpKind::Branch,
            t: self.t,
            beta: DEFAULT_BETA,
            ineqs,
            eqs,
        }
    }

    pub fn active_sets(&self, x: &[f64], tol: f64) -> Result<DisjActiveSets, AnalysisError> {
        let violation = self.try_violation(x)?;
        if violation > tol {
            return Err(AnalysisError::Infeasible { violation });
        }
        let t = self.t;
        let mut s = DisjActiveSets {
            tol,
            ..Default::default()
        };
        for (j, (a, b)) in self.problem.pair_values(x)?.into_iter().enumerate() {
            let at1 = (a - t).abs() <= tol;
            let at2 = (b - t).abs() <= tol;
            if at1 && at2 {
                s.h12.push(j);
            } else if at1 && b > t + tol {
                s.h1.push(j);
            } else if at2 && a > t + tol {
                s.h2.push(j);
            }
            if a.abs() <= tol {
                s.n1.push(j);
            }
            if b.abs() <= tol {
                s.n2.push(j);
            }
        }
        Ok(s)
    }
}

/// Membership counts over a sample of points for KS(t), D(t) and QPF(t).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Agreement {
    pub points: usize,
    pub in_disjunctive: usize,
    pub ks_agrees: usize,
    pub qpf_agrees: usize,
}

/// Compare feasible-set membership of KS(t), D(t) and QPF(t) on the given points.
pub fn membership_agreement(
    problem: &Arc<MpccProblem>,
    t: f64,
    beta: f64,
    points: &[Vec<f64>],
    tol: f64,
    exec: crate::Execution,
) -> Result<Agreement, ParameterError> {
    let ks = kanzow_schwartz(problem, t)?;
    let qpf = quadrant_penalty(problem, t, beta)?;
    let disj = disjunctive(problem, t)?;
    let flags = crate::par::map(exec, points, |x| {
        let d = disj.contains(x, tol);
        (d, ks.is_feasible(x, tol) == d, qpf.is_feasible(x, tol) == d)
    });
    Ok(flags.into_iter().fold(Agreement::default(), |mut acc, (d, k, q)| {
        acc.points += 1;
        acc.in_disjunctive += d as usize;
        acc.ks_agrees += k as usize;
        acc.qpf_agrees += q as usize;
        acc
    }))
}

/// Debug listing in the model grammar; non-polynomial constraints appear as comments.
impl fmt::Display for SmoothNlp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.problem;
        writeln!(f, "# {:?} regularization of {} at t = {}", self.kind, p.name, self.t)?;
        writeln!(f, "problem {}", p.name)?;
        write!(f, "vars")?;
        for i in 0..p.n {
            write!(f, " x{}", i + 1)?;
        }
        writeln!(f)?;
        writeln!(f, "objective {}", p.objective.expr)?;
        let t = self.t;
        for c in self.ineqs.iter().chain(&self.eqs) {
            let kw = if self.eqs.contains(c) { "eq" } else { "ineq" };
            match *c {
                Provenance::Side(i) => writeln!(f, "ineq {}", p.ineqs[i].expr)?,
                Provenance::SideEq(i) => writeln!(f, "eq {}", p.eqs[i].expr)?,
                Provenance::LowerF1(j) => writeln!(f, "ineq {}", p.pairs[j].f1.expr)?,
                Provenance::LowerF2(j) => writeln!(f, "ineq {}", p.pairs[j].f2.expr)?,
                Provenance::ScholtesProduct(j) => {
                    writeln!(f, "ineq {t} - {} * {}", p.pairs[j].f1.expr, p.pairs[j].f2.expr)?
                }
                Provenance::BranchA(j) => writeln!(f, "ineq {t} - {}", p.pairs[j].f1.expr)?,
                Provenance::BranchB(j) => writeln!(f, "ineq {t} - {}", p.pairs[j].f2.expr)?,
                Provenance::KsPhi(j) => writeln!(
                    f,
                    "# {kw} -phi({} - {t}, {} - {t}) >= 0",
                    p.pairs[j].f1.expr, p.pairs[j].f2.expr
                )?,
                Provenance::QpfPenalty(j) => writeln!(
                    f,
                    "# {kw} g_{}({} - {t}, {t} - {}) = 0",
                    self.beta, p.pairs[j].f1.expr, p.pairs[j].f2.expr
                )?,
            }
        }
        Ok(())
    }
}
