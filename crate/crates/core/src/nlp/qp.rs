//! Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.
//!
//! Solves
//! ```text
//! min ½ dᵀH d + gᵀd   s.t.  A_eq d = b_eq,  A_in d >= b_in
//! ```
//! with `H` positive definite. Rows of `A_eq` and `A_in` are constraint normals.
//! Active-set quantities are recomputed from scratch every step, which is cheap at
//! the problem sizes this crate targets.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("QP Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("QP constraints are inconsistent")]
    Infeasible,
    #[error("QP active-set iteration limit reached")]
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub d: DVector<f64>,
    /// Multipliers of `A_eq d = b_eq` (free sign).
    pub lambda_eq: DVector<f64>,
    /// Multipliers of `A_in d >= b_in` (nonnegative, exactly zero when inactive).
    pub lambda_in: DVector<f64>,
}

pub struct QpProblem<'a> {
    pub h: &'a DMatrix<f64>,
    pub g: &'a DVector<f64>,
    pub a_eq: &'a DMatrix<f64>,
    pub b_eq: &'a DVector<f64>,
    pub a_in: &'a DMatrix<f64>,
    pub b_in: &'a DVector<f64>,
}

struct Constraint {
    normal: DVector<f64>,
    rhs: f64,
    equality: bool,
}

pub fn solve_qp(qp: &QpProblem) -> Result<QpSolution, QpError> {
    let n = qp.g.len();
    let m_eq = qp.a_eq.nrows();
    let m_in = qp.a_in.nrows();
    let hinv = Cholesky::new(qp.h.clone())
        .ok_or(QpError::NotPositiveDefinite)?
        .inverse();

    let mut cons: Vec<Constraint> = Vec::with_capacity(m_eq + m_in);
    for i in 0..m_eq {
        cons.push(Constraint {
            normal: qp.a_eq.row(i).transpose(),
            rhs: qp.b_eq[i],
            equality: true,
        });
    }
    for i in 0..m_in {
        cons.push(Constraint {
            normal: qp.a_in.row(i).transpose(),
            rhs: qp.b_in[i],
            equality: false,
        });
    }
    // Equalities may be flipped so that they are approached from the violated side.
    let mut sign = vec![1.0; cons.len()];
    let mut skipped = vec![false; cons.len()];

    let mut x = -(&hinv * qp.g);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let limit = 50 + 20 * (n + cons.len());
    let mut steps = 0;

    let slack = |c: &Constraint, s: f64, x: &DVector<f64>| s * (c.normal.dot(x) - c.rhs);
    let tol_of = |c: &Constraint, x: &DVector<f64>| 1e-12 * (1.0 + c.rhs.abs() + c.normal.amax() * x.amax());

    loop {
        // Pick the next constraint to add: pending equalities first, then the most violated inequality.
        let mut pick = None;
        for (i, c) in cons.iter().enumerate() {
            if c.equality && !skipped[i] && !active.contains(&i) {
                pick = Some(i);
                break;
            }
        }
        if pick.is_none() {
            let mut worst = 0.0;
            for (i, c) in cons.iter().enumerate() {
                if c.equality || active.contains(&i) {
                    continue;
                }
                let s = slack(c, 1.0, &x);
                if s < -tol_of(c, &x) && s < worst {
                    worst = s;
                    pick = Some(i);
                }
            }
        }
        let Some(p) = pick else { break };
        if cons[p].equality && slack(&cons[p], 1.0, &x) > 0.0 {
            sign[p] = -1.0;
        }
        let np = &cons[p].normal * sign[p];
        let mut up = 0.0;

        loop {
            steps += 1;
            if steps > limit {
                return Err(QpError::IterationLimit);
            }
            let sp = slack(&cons[p], sign[p], &x);
            let hnp = &hinv * &np;
            let (z, r) = if active.is_empty() {
                (hnp.clone(), DVector::zeros(0))
            } else {
                let mut nmat = DMatrix::zeros(n, active.len());
                for (k, &i) in active.iter().enumerate() {
                    nmat.set_column(k, &(&cons[i].normal * sign[i]));
                }
                let hn = &hinv * &nmat;
                let m = nmat.transpose() * &hn;
                let rhs = hn.transpose() * &np;
                let r = match Cholesky::new(m.clone()) {
                    Some(ch) => ch.solve(&rhs),
                    None => m.pseudo_inverse(1e-14).map_err(|_| QpError::IterationLimit)? * rhs,
                };
                (&hnp - hn * &r, r)
            };

            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            let rscale = r.amax().max(1.0);
            for (k, &i) in active.iter().enumerate() {
                if !cons[i].equality && r[k] > 1e-14 * rscale {
                    let ratio = u[k] / r[k];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_at = Some(k);
                    }
                }
            }
            // A full active set leaves no primal direction.
            let zn = if active.len() >= n { 0.0 } else { z.dot(&np) };
            let t2 = if zn > 1e-11 * np.dot(&hnp).max(f64::MIN_POSITIVE) {
                -sp / zn
            } else {
                f64::INFINITY
            };

            if t2.is_infinite() && t1.is_infinite() {
                if cons[p].equality && sp.abs() <= 1e3 * tol_of(&cons[p], &x) {
                    // Consistent but linearly dependent equality.
                    skipped[p] = true;
                    break;
                }
                return Err(QpError::Infeasible);
            }
            if t2.is_infinite() {
                for k in 0..active.len() {
                    u[k] -= t1 * r[k];
                }
                up += t1;
                let k = drop_at.expect("finite partial step has a blocking constraint");
                active.remove(k);
                u.remove(k);
                continue;
            }
            let t = t1.min(t2);
            x += &z * t;
            for k in 0..active.len() {
                u[k] -= t * r[k];
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let k = drop_at.expect("partial step has a blocking constraint");
            active.remove(k);
            u.remove(k);
        }
    }

    let mut lambda_eq = DVector::zeros(m_eq);
    let mut lambda_in = DVector::zeros(m_in);
    for (k, &i) in active.iter().enumerate() {
        if i < m_eq {
            lambda_eq[i] = sign[i] * u[k];
        } else {
            lambda_in[i - m_eq] = u[k].max(0.0);
        }
    }
    Ok(QpSolution {
        d: x,
        lambda_eq,
        lambda_in,
    })
}
