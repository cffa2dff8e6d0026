//! MPCC problem model: compiled functions, evaluation, activity and violation.

use std::fmt;

use crate::error::{EvalError, ParseError};
use crate::expr::{FnEval, SmoothFn};
use crate::parse::{parse_problem, ProblemText};

/// Default activation tolerance for active-set detection.
pub const ACTIVE_TOL: f64 = 1e-8;

/// A complementarity pair `0 <= F1 ⟂ F2 >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub f1: SmoothFn,
    pub f2: SmoothFn,
}

/// min f(x) s.t. g(x) >= 0, h(x) = 0, 0 <= F1_j(x) ⟂ F2_j(x) >= 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MpccProblem {
    pub name: String,
    pub n: usize,
    pub objective: SmoothFn,
    pub pairs: Vec<Pair>,
    pub ineqs: Vec<SmoothFn>,
    pub eqs: Vec<SmoothFn>,
    pub start: Vec<f64>,
}

/// All function values and derivatives at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub f: FnEval,
    pub f1: Vec<FnEval>,
    pub f2: Vec<FnEval>,
    pub g: Vec<FnEval>,
    pub h: Vec<FnEval>,
}

/// MPCC active index sets at a point (zero-based pair indices, ascending).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActiveSets {
    /// F1 = 0 < F2.
    pub a01: Vec<usize>,
    /// F1 > 0 = F2.
    pub a10: Vec<usize>,
    /// F1 = F2 = 0.
    pub a00: Vec<usize>,
    /// Pairs with both functions strictly positive (empty on the feasible set).
    pub violated: Vec<usize>,
}

impl MpccProblem {
    pub fn from_text(text: &str) -> Result<MpccProblem, ParseError> {
        Ok(MpccProblem::from_parsed(parse_problem(text)?))
    }

    pub fn from_parsed(p: ProblemText) -> MpccProblem {
        let n = p.nvars;
        MpccProblem {
            name: p.name,
            n,
            objective: SmoothFn::new(p.objective, n),
            pairs: p
                .pairs
                .into_iter()
                .map(|(a, b)| Pair {
                    f1: SmoothFn::new(a, n),
                    f2: SmoothFn::new(b, n),
                })
                .collect(),
            ineqs: p.ineqs.into_iter().map(|e| SmoothFn::new(e, n)).collect(),
            eqs: p.eqs.into_iter().map(|e| SmoothFn::new(e, n)).collect(),
            start: p.start,
        }
    }

    /// Number of complementarity pairs.
    pub fn kappa(&self) -> usize {
        self.pairs.len()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), EvalError> {
        if x.len() != self.n {
            return Err(EvalError::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<EvalRecord, EvalError> {
        self.evaluate_with(x, true)
    }

    /// Evaluate values and gradients, and Hessians when `hessians` is set.
    pub fn evaluate_with(&self, x: &[f64], hessians: bool) -> Result<EvalRecord, EvalError> {
        self.check_dim(x)?;
        let all = |fs: &mut dyn Iterator<Item = &SmoothFn>| -> Result<Vec<FnEval>, EvalError> {
            fs.map(|f| f.eval(x, hessians)).collect()
        };
        Ok(EvalRecord {
            f: self.objective.eval(x, hessians)?,
            f1: all(&mut self.pairs.iter().map(|p| &p.f1))?,
            f2: all(&mut self.pairs.iter().map(|p| &p.f2))?,
            g: all(&mut self.ineqs.iter())?,
            h: all(&mut self.eqs.iter())?,
        })
    }

    /// Values of (F1_j, F2_j) for every pair.
    pub fn pair_values(&self, x: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
        self.check_dim(x)?;
        self.pairs
            .iter()
            .map(|p| Ok((p.f1.value(x)?, p.f2.value(x)?)))
            .collect()
    }

    pub fn active_sets(&self, x: &[f64], tol: f64) -> Result<ActiveSets, EvalError> {
        let mut s = ActiveSets::default();
        for (j, (a, b)) in self.pair_values(x)?.into_iter().enumerate() {
            match (a.abs() <= tol, b.abs() <= tol) {
                (true, true) => s.a00.push(j),
                (true, false) => s.a01.push(j),
                (false, true) => s.a10.push(j),
                (false, false) => s.violated.push(j),
            }
        }
        Ok(s)
    }

    /// max{ -min(0, g), |h|, |min(F1, F2)| } over all constraints.
    pub fn try_maxvio(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mut v: f64 = 0.0;
        for g in &self.ineqs {
            v = v.max(-g.value(x)?.min(0.0));
        }
        for h in &self.eqs {
            v = v.max(h.value(x)?.abs());
        }
        for (a, b) in self.pair_values(x)? {
            v = v.max(a.min(b).abs());
        }
        Ok(v)
    }

    /// Constraint violation; infinite when the point cannot be evaluated.
    pub fn maxvio(&self, x: &[f64]) -> f64 {
        self.try_maxvio(x).unwrap_or(f64::INFINITY)
    }

    /// Membership in the MPCC feasible set up to `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.maxvio(x) <= tol
    }
}

/// Prints the problem back in the input grammar.
impl fmt::Display for MpccProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "problem {}", self.name)?;
        write!(f, "vars")?;
        for i in 0..self.n {
            write!(f, " x{}", i + 1)?;
        }
        writeln!(f)?;
        writeln!(f, "objective {}", self.objective.expr)?;
        for p in &self.pairs {
            writeln!(f, "pair ({}, {})", p.f1.expr, p.f2.expr)?;
        }
        for g in &self.ineqs {
            writeln!(f, "ineq {}", g.expr)?;
        }
        for h in &self.eqs {
            writeln!(f, "eq {}", h.expr)?;
        }
        write!(f, "start")?;
        for v in &self.start {
            write!(f, " {v}")?;
        }
        writeln!(f)
    }
}
