//! Outer continuation loop: solve regularized problems for shrinking `t`.

use std::fmt;
use std::io;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::disjunctive::{solve_disjunctive, DisjError, DisjMode, DisjSolution, PatternDisplay};
use crate::error::{require, ParameterError};
use crate::model::{MpccProblem, ACTIVE_TOL};
use crate::nlp::{solve_nlp, SolveStatus, SolverOptions};
use crate::regularize::{disjunctive, kanzow_schwartz, quadrant_penalty, scholtes, SmoothNlp, DEFAULT_BETA};
use crate::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegKind {
    Scholtes,
    Ks,
    Disj,
    Qpf,
}

impl RegKind {
    pub const ALL: [RegKind; 4] = [RegKind::Scholtes, RegKind::Ks, RegKind::Disj, RegKind::Qpf];

    pub fn as_str(&self) -> &'static str {
        match self {
            RegKind::Scholtes => "scholtes",
            RegKind::Ks => "ks",
            RegKind::Disj => "disj",
            RegKind::Qpf => "qpf",
        }
    }

    pub fn default_shrink(&self) -> f64 {
        match self {
            RegKind::Scholtes => 1e-4,
            _ => 1e-2,
        }
    }
}

impl fmt::Display for RegKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown regularization `{0}` (expected one of scholtes, ks, disj, qpf)")]
pub struct UnknownRegKind(pub String);

impl FromStr for RegKind {
    type Err = UnknownRegKind;

    fn from_str(s: &str) -> Result<RegKind, UnknownRegKind> {
        RegKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownRegKind(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomotopyParams {
    pub t0: f64,
    pub t_min: f64,
    /// Target for the MPCC constraint violation.
    pub eps: f64,
    /// Factor applied to `t` per reduction step.
    pub shrink: f64,
    pub kind: RegKind,
    /// Curvature parameter of the quadrant penalty.
    pub beta: f64,
    pub solver: SolverOptions,
    pub mode: DisjMode,
    pub exec: Execution,
}

impl HomotopyParams {
    /// Defaults for `kind`, with the shrink factor chosen per kind.
    pub fn new(kind: RegKind) -> HomotopyParams {
        HomotopyParams {
            t0: 1.0,
            t_min: 1e-15,
            eps: 1e-6,
            shrink: kind.default_shrink(),
            kind,
            beta: DEFAULT_BETA,
            solver: SolverOptions::default(),
            mode: DisjMode::default(),
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ParameterError> {
        require(
            self.shrink > 0.0 && self.shrink < 1.0,
            "shrink",
            self.shrink,
            "must lie in (0, 1)",
        )?;
        require(self.t_min > 0.0, "t_min", self.t_min, "must be positive")?;
        require(
            self.t0 >= self.t_min && self.t0.is_finite(),
            "t0",
            self.t0,
            "must be finite and at least t_min",
        )?;
        require(self.eps > 0.0, "eps", self.eps, "must be positive")?;
        require(self.beta > 1.0, "beta", self.beta, "must exceed 1")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Termination {
    TargetMet,
    TFloor,
    SubproblemFailure,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::TargetMet => "target-met",
            Termination::TFloor => "t-floor",
            Termination::SubproblemFailure => "subproblem-failure",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Termination {
    type Err = String;

    fn from_str(s: &str) -> Result<Termination, String> {
        [
            Termination::TargetMet,
            Termination::TFloor,
            Termination::SubproblemFailure,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("unknown termination `{s}`"))
    }
}

/// One subproblem solve.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub start: Vec<f64>,
    pub point: Vec<f64>,
    pub maxvio: f64,
    pub status: SolveStatus,
    pub millis: f64,
    /// Whether the result became the next iterate.
    pub accepted: bool,
    /// Winning branch pattern for D(t) solves.
    pub pattern: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub problem: String,
    pub kind: RegKind,
    pub eps: f64,
    pub rows: Vec<TraceRow>,
    pub point: Vec<f64>,
    pub objective: f64,
    pub maxvio: f64,
    pub termination: Termination,
    pub millis: f64,
    /// Accepted D(t) solutions with their `t`, for trajectory diagnostics.
    pub disj_runs: Vec<(f64, DisjSolution)>,
}

impl RunTrace {
    pub fn feasible(&self) -> bool {
        self.maxvio <= self.eps
    }

    /// Objective, or infinity when the final point misses the feasibility target.
    pub fn reported_objective(&self) -> f64 {
        if self.feasible() {
            self.objective
        } else {
            f64::INFINITY
        }
    }

    /// Wall time, or infinity when the final point misses the feasibility target.
    pub fn reported_millis(&self) -> f64 {
        if self.feasible() {
            self.millis
        } else {
            f64::INFINITY
        }
    }

    /// One CSV row per subproblem: `k, t, x1..xn, maxvio, status, millis`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let n = self.point.len();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string(), "t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend(["maxvio", "status", "millis"].map(String::from));
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.k.to_string(), format!("{:.16e}", r.t)];
            rec.extend(r.point.iter().map(|v| format!("{v:.16e}")));
            rec.push(format!("{:.16e}", r.maxvio));
            rec.push(r.status.as_str().to_string());
            rec.push(format!("{:.16e}", r.millis));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HomotopyError {
    #[error(transparent)]
    Parameter(#[from] ParameterError),
    #[error(transparent)]
    Disjunctive(#[from] DisjError),
    #[error("start point has {got} entries, expected {expected}")]
    StartDimension { expected: usize, got: usize },
}

/// Result of the `t` update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TUpdate {
    Next(f64),
    /// `x` is feasible for every admissible smaller `t`.
    Exhausted,
}

fn smooth(problem: &Arc<MpccProblem>, kind: RegKind, t: f64, beta: f64) -> Result<SmoothNlp, ParameterError> {
    match kind {
        RegKind::Scholtes => scholtes(problem, t),
        RegKind::Ks => kanzow_schwartz(problem, t),
        RegKind::Qpf => quadrant_penalty(problem, t, beta),
        RegKind::Disj => unreachable!("D(t) is not a single smooth NLP"),
    }
}

/// Violation of the constraints of R(t) at `x`.
pub fn regularized_violation(
    problem: &Arc<MpccProblem>,
    kind: RegKind,
    t: f64,
    beta: f64,
    x: &[f64],
) -> Result<f64, ParameterError> {
    Ok(match kind {
        RegKind::Disj => disjunctive(problem, t)?.violation(x),
        _ => smooth(problem, kind, t, beta)?.violation(x),
    })
}

/// Largest `shrink^l · t_k >= t_min`, `l >= 1`, for which `x_next` is infeasible for R.
pub fn update_t(
    problem: &Arc<MpccProblem>,
    t_k: f64,
    x_next: &[f64],
    kind: RegKind,
    shrink: f64,
    t_min: f64,
    beta: f64,
) -> Result<TUpdate, ParameterError> {
    require(shrink > 0.0 && shrink < 1.0, "shrink", shrink, "must lie in (0, 1)")?;
    let mut l = 1;
    loop {
        let t = t_k * shrink.powi(l);
        if t < t_min || t == 0.0 {
            return Ok(TUpdate::Exhausted);
        }
        if regularized_violation(problem, kind, t, beta, x_next)? > ACTIVE_TOL {
            return Ok(TUpdate::Next(t));
        }
        l += 1;
    }
}

/// Run the continuation from the problem's start vector.
pub fn run_homotopy(problem: &Arc<MpccProblem>, params: &HomotopyParams) -> Result<RunTrace, HomotopyError> {
    run_homotopy_from(problem, &problem.start, params)
}

struct Solved {
    point: Vec<f64>,
    status: SolveStatus,
    pattern: Option<String>,
    disj: Option<DisjSolution>,
}

fn solve_at(problem: &Arc<MpccProblem>, x: &[f64], t: f64, p: &HomotopyParams) -> Result<Solved, HomotopyError> {
    if p.kind == RegKind::Disj {
        let d = disjunctive(problem, t)?;
        let s = solve_disjunctive(&d, x, &p.solver, p.mode, p.exec)?;
        Ok(Solved {
            point: s.point.clone(),
            status: s.status,
            pattern: Some(PatternDisplay(&s.pattern).to_string()),
            disj: Some(s),
        })
    } else {
        let nlp = smooth(problem, p.kind, t, p.beta)?;
        let s = solve_nlp(&nlp, x, &p.solver);
        Ok(Solved {
            point: s.point,
            status: s.status,
            pattern: None,
            disj: None,
        })
    }
}

/// Run the continuation from `x0`.
pub fn run_homotopy_from(
    problem: &Arc<MpccProblem>,
    x0: &[f64],
    params: &HomotopyParams,
) -> Result<RunTrace, HomotopyError> {
    params.validate()?;
    if x0.len() != problem.n {
        return Err(HomotopyError::StartDimension {
            expected: problem.n,
            got: x0.len(),
        });
    }
    let clock = Instant::now();
    let mut x = x0.to_vec();
    let mut t = params.t0;
    let mut k = 0;
    let mut rows = Vec::new();
    let mut disj_runs = Vec::new();
    let mut failures = 0;
    let termination = loop {
        let vio = problem.maxvio(&x);
        // After a failed solve the loop retries at a smaller t instead of testing the old iterate.
        if k > 0 && failures == 0 && !(t >= params.t_min && vio > params.eps) {
            break if vio <= params.eps {
                Termination::TargetMet
            } else {
                Termination::TFloor
            };
        }
        let started = Instant::now();
        let solved = solve_at(problem, &x, t, params)?;
        let millis = started.elapsed().as_secs_f64() * 1e3;
        let accepted = solved.status.is_usable();
        rows.push(TraceRow {
            k,
            t,
            start: x.clone(),
            point: solved.point.clone(),
            maxvio: problem.maxvio(&solved.point),
            status: solved.status,
            millis,
            accepted,
            pattern: solved.pattern,
        });
        k += 1;
        if !accepted {
            failures += 1;
            if failures >= 2 {
                break Termination::SubproblemFailure;
            }
            t *= params.shrink;
            if t < params.t_min {
                break Termination::TFloor;
            }
            continue;
        }
        failures = 0;
        x = solved.point;
        if let Some(d) = solved.disj {
            disj_runs.push((t, d));
        }
        match update_t(problem, t, &x, params.kind, params.shrink, params.t_min, params.beta)? {
            TUpdate::Next(next) => t = next,
            TUpdate::Exhausted => {
                break if problem.maxvio(&x) <= params.eps {
                    Termination::TargetMet
                } else {
                    Termination::TFloor
                };
            }
        }
    };
    let maxvio = problem.maxvio(&x);
    let objective = problem.objective.value(&x).unwrap_or(f64::NAN);
    Ok(RunTrace {
        problem: problem.name.clone(),
        kind: params.kind,
        eps: params.eps,
        rows,
        point: x,
        objective,
        maxvio,
        termination,
        millis: clock.elapsed().as_secs_f64() * 1e3,
        disj_runs,
    })
}
