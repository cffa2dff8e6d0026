//! Expression trees over `x1..xn` with exact symbolic derivatives.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::EvalError;

/// Arithmetic expression. Variables are zero-based internally and print as `x1..xn`.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer power.
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) | Expr::Pow(a, _) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => match (a.max_var(), b.max_var()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => *x.get(*i).ok_or(EvalError::Dimension {
                expected: i + 1,
                got: x.len(),
            })?,
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(EvalError::Domain {
                        expr: self.to_string(),
                        reason: "division by zero",
                    });
                }
                a.eval(x)? / den
            }
            Expr::Pow(a, k) => {
                let base = a.eval(x)?;
                if base == 0.0 && *k < 0 {
                    return Err(EvalError::Domain {
                        expr: self.to_string(),
                        reason: "zero raised to a negative power",
                    });
                }
                base.powi(*k)
            }
        })
    }

    /// Partial derivative with respect to variable `i`, lightly simplified.
    pub fn diff(&self, i: usize) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(j) => Expr::Const(if *j == i { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(i)),
            Expr::Add(a, b) => add(a.diff(i), b.diff(i)),
            Expr::Sub(a, b) => sub(a.diff(i), b.diff(i)),
            Expr::Mul(a, b) => add(mul(a.diff(i), (**b).clone()), mul((**a).clone(), b.diff(i))),
            Expr::Div(a, b) => {
                let num = sub(mul(a.diff(i), (**b).clone()), mul((**a).clone(), b.diff(i)));
                div(num, pow((**b).clone(), 2))
            }
            Expr::Pow(a, k) => {
                if *k == 0 {
                    return Expr::Const(0.0);
                }
                let outer = mul(Expr::Const(*k as f64), pow((**a).clone(), k - 1));
                mul(outer, a.diff(i))
            }
        }
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(p), Some(q)) => Expr::Const(p + q),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(p), Some(q)) => Expr::Const(p - q),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(p), Some(q)) => Expr::Const(p * q),
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Const(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(0.0), _) => Expr::Const(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn pow(a: Expr, k: i32) -> Expr {
    match (k, a.as_const()) {
        (0, _) => Expr::Const(1.0),
        (1, _) => a,
        (_, Some(c)) if c != 0.0 || k > 0 => Expr::Const(c.powi(k)),
        _ => Expr::Pow(Box::new(a), k),
    }
}

/// Fully parenthesized output that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{})", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
        }
    }
}

/// Value, gradient and (optionally) Hessian of a function at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct FnEval {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
}

impl FnEval {
    pub fn hess(&self) -> &DMatrix<f64> {
        self.hess
            .as_ref()
            .expect("Hessian was not requested for this evaluation")
    }
}

/// An expression together with its precomputed symbolic gradient and Hessian.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothFn {
    pub expr: Expr,
    grad: Vec<Expr>,
    /// Lower triangle, `hess[i][j]` for `j <= i`.
    hess: Vec<Vec<Expr>>,
}

impl SmoothFn {
    pub fn new(expr: Expr, n: usize) -> SmoothFn {
        let grad: Vec<Expr> = (0..n).map(|i| expr.diff(i)).collect();
        let hess = (0..n).map(|i| (0..=i).map(|j| grad[i].diff(j)).collect()).collect();
        SmoothFn { expr, grad, hess }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.expr.eval(x)
    }

    pub fn eval(&self, x: &[f64], hessian: bool) -> Result<FnEval, EvalError> {
        let n = self.grad.len();
        let value = self.expr.eval(x)?;
        let mut grad = DVector::zeros(n);
        for (i, g) in self.grad.iter().enumerate() {
            grad[i] = g.eval(x)?;
        }
        let hess = if hessian {
            let mut h = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = self.hess[i][j].eval(x)?;
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
            Some(h)
        } else {
            None
        };
        Ok(FnEval { value, grad, hess })
    }
}
