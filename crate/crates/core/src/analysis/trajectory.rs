use std::fmt;
use std::sync::Arc;

use super::{
    mpcc_c_index, recover_mpcc_multipliers, signed_subsets, IndexReport, MpccMultipliers, SignedActiveSets,
    Stationarity, SIGN_TOL,
};
use crate::disjunctive::{DisjMultipliers, DisjSolution};
use crate::model::{MpccProblem, ACTIVE_TOL};
use crate::regularize::{disjunctive, DisjActiveSets};

use super::disj_c_index;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticTolerances {
    /// Activity and feasibility tolerance at the limit point.
    pub limit_active: f64,
    pub sign: f64,
    /// Multiplier limits must be met within `trend_factor * t` at the smallest `t`.
    pub trend_factor: f64,
}

impl Default for DiagnosticTolerances {
    fn default() -> Self {
        DiagnosticTolerances {
            limit_active: ACTIVE_TOL,
            sign: SIGN_TOL,
            trend_factor: 10.0,
        }
    }
}

/// One active-set inclusion between the limit point and a D(t) point.
#[derive(Clone, Debug, PartialEq)]
pub struct InclusionCheck {
    pub label: &'static str,
    pub subset: Vec<usize>,
    pub superset: Vec<usize>,
    pub holds: bool,
    /// Whether equality is predicted under the assumption flags.
    pub equality_expected: bool,
    pub equal: bool,
}

impl InclusionCheck {
    pub fn pass(&self) -> bool {
        self.holds && (!self.equality_expected || self.equal)
    }
}

/// Index bound between a nondegenerate D(t) point and the limit point.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub disj_qi: usize,
    pub disj_bi: usize,
    pub mpcc_qi: usize,
    pub mpcc_bi: usize,
    pub shift: usize,
    pub lower_holds: bool,
    pub upper_holds: bool,
    pub bi_equal: bool,
    /// Whether `MPCC-QI = DISJ-QI` is predicted (ND4 at the limit).
    pub equality_expected: bool,
    pub theory_applies: bool,
}

impl BoundCheck {
    pub fn pass(&self) -> bool {
        self.lower_holds
            && self.upper_holds
            && self.bi_equal
            && (!self.equality_expected || self.mpcc_qi == self.disj_qi)
    }

    /// Explanation of a quadratic-index drop.
    pub fn note(&self) -> &'static str {
        if self.mpcc_qi == self.disj_qi {
            "no shift"
        } else if self.shift > 0 {
            "shift consistent with ND4 violation"
        } else {
            "shift without vanishing single-active multipliers"
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryDiagnostics {
    pub t: f64,
    pub sets: Option<DisjActiveSets>,
    pub class: Stationarity,
    pub report: Option<IndexReport>,
    pub inclusions: Vec<InclusionCheck>,
    pub bound: Option<BoundCheck>,
}

/// Limit of one multiplier along the trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitCheck {
    pub name: String,
    pub expected: f64,
    /// Deviation from the expected limit per entry, in trajectory order.
    pub deviations: Vec<f64>,
    pub monotone: bool,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryReport {
    pub limit_point: Vec<f64>,
    pub limit_feasible: bool,
    pub limit_multipliers: Option<MpccMultipliers>,
    pub limit_report: Option<IndexReport>,
    pub signed: Option<SignedActiveSets>,
    pub licq: bool,
    pub nd2: bool,
    pub nd4: bool,
    pub entries: Vec<EntryDiagnostics>,
    pub limits: Vec<LimitCheck>,
    /// Multiplier limits are predicted only under MPCC-LICQ and MPCC-ND2.
    pub limits_apply: bool,
}

impl TrajectoryReport {
    /// Human-readable descriptions of failed checks with the assumption flags.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let flags = format!("licq={} nd2={} nd4={}", self.licq, self.nd2, self.nd4);
        for e in &self.entries {
            for c in &e.inclusions {
                if !c.pass() {
                    let what = if c.holds { "equality" } else { "inclusion" };
                    out.push(format!(
                        "t={:e} {} {what} failed ({flags}, theory applies: {})",
                        e.t,
                        c.label,
                        self.licq && e.class.implies(Stationarity::C)
                    ));
                }
            }
            if let Some(b) = &e.bound {
                if !b.pass() {
                    out.push(format!(
                        "t={:e} index bound failed ({flags}, theory applies: {})",
                        e.t, b.theory_applies
                    ));
                }
            }
        }
        for l in &self.limits {
            if !l.pass {
                out.push(format!(
                    "multiplier limit {} failed ({flags}, theory applies: {})",
                    l.name, self.limits_apply
                ));
            }
        }
        out
    }

    /// Whether every check whose assumptions hold passes.
    pub fn consistent(&self) -> bool {
        let inclusions = self.entries.iter().all(|e| {
            !(self.licq && e.class.implies(Stationarity::C))
                || e.inclusions
                    .iter()
                    .all(|c| c.holds && (!c.equality_expected || c.equal))
        });
        let bounds = self
            .entries
            .iter()
            .filter_map(|e| e.bound.as_ref())
            .all(|b| !b.theory_applies || b.pass());
        let limits = !self.limits_apply || self.limits.iter().all(|l| l.pass);
        inclusions && bounds && limits
    }
}

fn join(v: &[usize]) -> String {
    let s: Vec<String> = v.iter().map(|j| (j + 1).to_string()).collect();
    format!("{{{}}}", s.join(","))
}

/// `key: value` lines.
impl fmt::Display for TrajectoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let x: Vec<String> = self.limit_point.iter().map(|v| format!("{v:e}")).collect();
        writeln!(f, "limit_point: {}", x.join(" "))?;
        writeln!(f, "limit_feasible: {}", self.limit_feasible)?;
        if let Some(r) = &self.limit_report {
            writeln!(f, "limit_summary: {}", r.summary())?;
        }
        writeln!(f, "licq: {}", self.licq)?;
        writeln!(f, "nd2: {}", self.nd2)?;
        writeln!(f, "nd4: {}", self.nd4)?;
        for e in &self.entries {
            let prefix = format!("t={:e}", e.t);
            writeln!(f, "{prefix} class: {}", e.class)?;
            if let Some(r) = &e.report {
                writeln!(f, "{prefix} summary: {}", r.summary())?;
            }
            for c in &e.inclusions {
                writeln!(
                    f,
                    "{prefix} inclusion {}: {} in {} holds={} equal={} equality_expected={}",
                    c.label,
                    join(&c.subset),
                    join(&c.superset),
                    c.holds,
                    c.equal,
                    c.equality_expected
                )?;
            }
            if let Some(b) = &e.bound {
                writeln!(
                    f,
                    "{prefix} index_bound: disj_qi={} mpcc_qi={} shift={} bi={}/{} pass={} applies={} note={}",
                    b.disj_qi,
                    b.mpcc_qi,
                    b.shift,
                    b.disj_bi,
                    b.mpcc_bi,
                    b.pass(),
                    b.theory_applies,
                    b.note()
                )?;
            }
        }
        for l in &self.limits {
            writeln!(
                f,
                "limit {}: expected={:e} final_deviation={:e} monotone={} pass={}",
                l.name,
                l.expected,
                l.deviations.last().copied().unwrap_or(0.0),
                l.monotone,
                l.pass
            )?;
        }
        writeln!(f, "limits_apply: {}", self.limits_apply)?;
        write!(f, "consistent: {}", self.consistent())
    }
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|j| b.contains(j))
}

fn minus(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|j| !b.contains(j)).collect()
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|j| b.contains(j)).collect()
}

fn inclusions(s: &SignedActiveSets, d: &DisjActiveSets, nd2: bool, nd4: bool) -> Vec<InclusionCheck> {
    let n1_only = minus(&d.n1, &d.n2);
    let n2_only = minus(&d.n2, &d.n1);
    let both = intersect(&d.n1, &d.n2);
    let items: [(&'static str, &[usize], Vec<usize>, bool); 6] = [
        ("a) a01- in H1", &s.a01_minus, d.h1.clone(), nd2 && nd4),
        ("b) a01+ in N1\\N2", &s.a01_plus, n1_only, nd2 && nd4),
        ("c) a10- in H2", &s.a10_minus, d.h2.clone(), nd2 && nd4),
        ("d) a10+ in N2\\N1", &s.a10_plus, n2_only, nd2 && nd4),
        ("e) a00- in H12", &s.a00_minus, d.h12.clone(), nd2),
        ("f) a00+ in N1 and N2", &s.a00_plus, both, nd2),
    ];
    items
        .into_iter()
        .map(|(label, sub, sup, eq)| InclusionCheck {
            label,
            subset: sub.to_vec(),
            holds: subset(sub, &sup),
            equal: subset(sub, &sup) && subset(&sup, sub),
            superset: sup,
            equality_expected: eq,
        })
        .collect()
}

/// Expected limits of the D(t) multipliers, as (name, value, reader).
type Reader = Box<dyn Fn(&DisjMultipliers) -> f64>;

fn limit_targets(m: &MpccMultipliers, s: &SignedActiveSets, kappa: usize) -> Vec<(String, f64, Reader)> {
    let mut out: Vec<(String, f64, Reader)> = Vec::new();
    for j in 0..kappa {
        let rho = m.rho(j);
        let neg = s.a00_minus.contains(&j);
        let pos = s.a00_plus.contains(&j);
        // -ζ → ϱ on a00-, else 0.
        let z1 = if neg { rho.map_or(0.0, |r| r.0) } else { 0.0 };
        let z2 = if neg { rho.map_or(0.0, |r| r.1) } else { 0.0 };
        out.push((
            format!("zeta1[{}]", j + 1),
            z1,
            Box::new(move |d| -d.zeta(j).map_or(0.0, |z| z.0)),
        ));
        out.push((
            format!("zeta2[{}]", j + 1),
            z2,
            Box::new(move |d| -d.zeta(j).map_or(0.0, |z| z.1)),
        ));
        // -η1 → σ1 on a01-, -η2 → σ2 on a10-.
        let e1 = if s.a01_minus.contains(&j) {
            m.sigma1(j).unwrap_or(0.0)
        } else {
            0.0
        };
        let e2 = if s.a10_minus.contains(&j) {
            m.sigma2(j).unwrap_or(0.0)
        } else {
            0.0
        };
        out.push((
            format!("eta1[{}]", j + 1),
            e1,
            Box::new(move |d| -d.eta1(j).unwrap_or(0.0)),
        ));
        out.push((
            format!("eta2[{}]", j + 1),
            e2,
            Box::new(move |d| -d.eta2(j).unwrap_or(0.0)),
        ));
        // ν1 → σ1 on a01+, ϱ1 on a00+; ν2 symmetric.
        let v1 = if s.a01_plus.contains(&j) {
            m.sigma1(j).unwrap_or(0.0)
        } else if pos {
            rho.map_or(0.0, |r| r.0)
        } else {
            0.0
        };
        let v2 = if s.a10_plus.contains(&j) {
            m.sigma2(j).unwrap_or(0.0)
        } else if pos {
            rho.map_or(0.0, |r| r.1)
        } else {
            0.0
        };
        out.push((
            format!("nu1[{}]", j + 1),
            v1,
            Box::new(move |d| d.nu1(j).unwrap_or(0.0)),
        ));
        out.push((
            format!("nu2[{}]", j + 1),
            v2,
            Box::new(move |d| d.nu2(j).unwrap_or(0.0)),
        ));
    }
    out
}

/// Diagnostics with default tolerances.
pub fn trajectory_diagnostics(
    problem: &Arc<MpccProblem>,
    runs: &[(f64, DisjSolution)],
    xbar: &[f64],
) -> TrajectoryReport {
    trajectory_diagnostics_with(problem, runs, xbar, &DiagnosticTolerances::default())
}

/// Compare D(t) points along decreasing `t` against their limit `xbar`:
/// active-set inclusions, multiplier limits and the C-index bounds.
pub fn trajectory_diagnostics_with(
    problem: &Arc<MpccProblem>,
    runs: &[(f64, DisjSolution)],
    xbar: &[f64],
    tols: &DiagnosticTolerances,
) -> TrajectoryReport {
    let mult = recover_mpcc_multipliers(problem, xbar, tols.limit_active).ok();
    let limit_report = mult
        .as_ref()
        .and_then(|m| mpcc_c_index(problem, xbar, m, tols.sign).ok());
    let signed = mult.as_ref().map(|m| signed_subsets(m, tols.sign));
    let licq = mult.as_ref().is_some_and(|m| m.licq);
    let nd2 = limit_report.as_ref().is_some_and(|r| r.nd2);
    let nd4 = limit_report.as_ref().is_some_and(|r| r.nd4 == Some(true));
    let limit_c = limit_report.as_ref().is_some_and(|r| r.class.implies(Stationarity::C));

    let mut entries = Vec::new();
    for (t, sol) in runs {
        let disj = disjunctive(problem, *t).ok();
        let report = match (&disj, &sol.multipliers) {
            (Some(d), Some(m)) => disj_c_index(d, &sol.point, m, tols.sign).ok(),
            _ => None,
        };
        let incl = match (&signed, &sol.sets) {
            (Some(s), Some(d)) => inclusions(s, d, nd2, nd4),
            _ => Vec::new(),
        };
        let bound = match (&report, &limit_report) {
            (Some(dr), Some(mr)) if dr.class.implies(Stationarity::C) => {
                let lower = dr.qi.saturating_sub(mr.shift);
                Some(BoundCheck {
                    disj_qi: dr.qi,
                    disj_bi: dr.bi,
                    mpcc_qi: mr.qi,
                    mpcc_bi: mr.bi,
                    shift: mr.shift,
                    lower_holds: lower <= mr.qi,
                    upper_holds: mr.qi <= dr.qi,
                    bi_equal: mr.bi == dr.bi,
                    equality_expected: nd4,
                    theory_applies: dr.nondegenerate() && mr.nondegenerate() && limit_c,
                })
            }
            _ => None,
        };
        entries.push(EntryDiagnostics {
            t: *t,
            sets: sol.sets.clone(),
            class: sol.class,
            report,
            inclusions: incl,
            bound,
        });
    }

    let mut limits = Vec::new();
    if let (Some(m), Some(s)) = (&mult, &signed) {
        let with_mult: Vec<(f64, &DisjMultipliers)> = runs
            .iter()
            .filter_map(|(t, sol)| sol.multipliers.as_ref().map(|d| (*t, d)))
            .collect();
        if let Some(&(t_last, _)) = with_mult.last() {
            for (name, expected, read) in limit_targets(m, s, problem.kappa()) {
                let deviations: Vec<f64> = with_mult.iter().map(|(_, d)| (read(d) - expected).abs()).collect();
                let monotone = deviations.windows(2).all(|w| w[1] <= w[0] + 1e-9);
                let slack = tols.trend_factor * t_last;
                let last = *deviations.last().expect("nonempty");
                limits.push(LimitCheck {
                    name,
                    expected,
                    monotone,
                    slack,
                    pass: monotone && last <= slack,
                    deviations,
                });
            }
        }
    }

    TrajectoryReport {
        limit_point: xbar.to_vec(),
        limit_feasible: mult.is_some(),
        limit_multipliers: mult,
        limit_report,
        signed,
        licq,
        nd2,
        nd4,
        entries,
        limits,
        limits_apply: licq && nd2,
    }
}
