//! Test corpus, relative metrics, performance profiles and the benchmark suite.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::Stationarity;
use crate::disjunctive::DisjMode;
use crate::error::{ParameterError, ParseError};
use crate::homotopy::{run_homotopy, HomotopyParams, RegKind};
use crate::model::MpccProblem;
use crate::nlp::SolverOptions;
use crate::par;
use crate::Execution;

/// Machine epsilon `2^-52`.
pub const MACHINE_EPS: f64 = f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// Small analytic instance with known stationary points.
    Analytic,
    /// Transcription of a standard MPCC library instance.
    Library,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Analytic => "analytic",
            Source::Library => "macmpec-style",
        }
    }
}

/// A known stationary point with its expected class and indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Expectation {
    pub point: Vec<f64>,
    pub class: Stationarity,
    pub qi: Option<usize>,
    pub bi: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub problem: Arc<MpccProblem>,
    pub optimum: Option<f64>,
    pub expectations: Vec<Expectation>,
    pub source: Source,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}: {source}")]
    Parse { file: String, source: ParseError },
    #[error("{file}: bad metadata line `{line}`")]
    Metadata { file: String, line: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse_class(s: &str) -> Option<Stationarity> {
    match s {
        "S" => Some(Stationarity::S),
        "M" => Some(Stationarity::M),
        "C" => Some(Stationarity::C),
        "none" => Some(Stationarity::None),
        _ => None,
    }
}

fn parse_expectation(rest: &str, n: usize) -> Option<Expectation> {
    // point=0 0 1; class=C; qi=0; bi=1
    let mut e = Expectation {
        point: Vec::new(),
        class: Stationarity::None,
        qi: None,
        bi: None,
    };
    let mut class = None;
    for field in rest.split(';') {
        let (key, value) = field.split_once('=')?;
        let value = value.trim();
        match key.trim() {
            "point" => {
                e.point = value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .ok()?
            }
            "class" => class = parse_class(value),
            "qi" => e.qi = Some(value.parse().ok()?),
            "bi" => e.bi = Some(value.parse().ok()?),
            _ => return None,
        }
    }
    e.class = class?;
    (e.point.len() == n).then_some(e)
}

/// Parse a problem file together with its `# optimum:`, `# source:` and `# expect:` comments.
pub fn parse_entry(file: &str, text: &str) -> Result<CorpusEntry, CorpusError> {
    let problem = MpccProblem::from_text(text).map_err(|source| CorpusError::Parse {
        file: file.to_string(),
        source,
    })?;
    let bad = |line: &str| CorpusError::Metadata {
        file: file.to_string(),
        line: line.to_string(),
    };
    let mut entry = CorpusEntry {
        optimum: None,
        expectations: Vec::new(),
        source: Source::Analytic,
        problem: Arc::new(problem),
    };
    for line in text.lines() {
        let Some(comment) = line.trim().strip_prefix('#') else {
            continue;
        };
        let Some((key, rest)) = comment.split_once(':') else {
            continue;
        };
        let rest = rest.trim();
        match key.trim() {
            "optimum" => entry.optimum = Some(rest.parse().map_err(|_| bad(line))?),
            "source" => {
                entry.source = match rest {
                    "analytic" => Source::Analytic,
                    "macmpec-style" => Source::Library,
                    _ => return Err(bad(line)),
                }
            }
            "expect" => entry
                .expectations
                .push(parse_expectation(rest, entry.problem.n).ok_or_else(|| bad(line))?),
            _ => {}
        }
    }
    Ok(entry)
}

const BUILTIN: [(&str, &str); 13] = [
    ("saddle_limit.mpcc", include_str!("../corpus/saddle_limit.mpcc")),
    ("index_shift.mpcc", include_str!("../corpus/index_shift.mpcc")),
    (
        "finer_convergence.mpcc",
        include_str!("../corpus/finer_convergence.mpcc"),
    ),
    ("ks_condition.mpcc", include_str!("../corpus/ks_condition.mpcc")),
    ("biactive_min.mpcc", include_str!("../corpus/biactive_min.mpcc")),
    ("ssosc_degenerate.mpcc", include_str!("../corpus/ssosc_degenerate.mpcc")),
    ("fritz_john.mpcc", include_str!("../corpus/fritz_john.mpcc")),
    ("cancellation.mpcc", include_str!("../corpus/cancellation.mpcc")),
    ("prototype.mpcc", include_str!("../corpus/prototype.mpcc")),
    ("ralph1.mpcc", include_str!("../corpus/ralph1.mpcc")),
    ("scholtes4.mpcc", include_str!("../corpus/scholtes4.mpcc")),
    ("ex9_2_2.mpcc", include_str!("../corpus/ex9_2_2.mpcc")),
    ("kth1.mpcc", include_str!("../corpus/kth1.mpcc")),
];

/// The corpus shipped with the crate.
pub fn builtin_corpus() -> Vec<CorpusEntry> {
    BUILTIN
        .iter()
        .map(|(f, t)| parse_entry(f, t).expect("built-in corpus parses"))
        .collect()
}

/// Look up a built-in entry by problem name.
pub fn builtin_entry(name: &str) -> Option<CorpusEntry> {
    builtin_corpus().into_iter().find(|e| e.problem.name == name)
}

/// All `*.mpcc` files of a directory, in file-name order.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "mpcc"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| parse_entry(&p.display().to_string(), &fs::read_to_string(p)?))
        .collect()
}

/// Relative metric against the per-problem minimum with the zero and infinity cases.
fn relative(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values
        .iter()
        .map(|&v| {
            if min == f64::INFINITY {
                f64::INFINITY
            } else if min == 0.0 {
                v / MACHINE_EPS
            } else {
                (v - min) / min.abs()
            }
        })
        .collect()
}

/// `f̄_R` for the final objective values of one problem.
pub fn normalized_relative_error(values: &[f64]) -> Vec<f64> {
    relative(values)
}

/// `τ̄_R` for the averaged times of one problem.
pub fn relative_time(times: &[f64]) -> Vec<f64> {
    relative(times)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub reg: String,
    pub tau: f64,
    pub fraction: f64,
}

/// Fraction of problems with metric `<= τ`, per regularization, at every breakpoint.
///
/// `metrics[p][r]` is the metric of regularization `r` on problem `p`.
pub fn performance_profile(metrics: &[Vec<f64>], regs: &[String]) -> Vec<ProfilePoint> {
    let mut taus: Vec<f64> = metrics
        .iter()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .chain([0.0])
        .collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let np = metrics.len().max(1) as f64;
    let mut out = Vec::new();
    for (r, name) in regs.iter().enumerate() {
        for &tau in &taus {
            let hits = metrics.iter().filter(|row| row[r] <= tau).count();
            out.push(ProfilePoint {
                reg: name.clone(),
                tau,
                fraction: hits as f64 / np,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub problem: String,
    pub reg: String,
    pub status: String,
    pub f: f64,
    pub maxvio: f64,
    pub time_ms_avg: f64,
    pub fbar: f64,
    pub taubar: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Fbar,
    Taubar,
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Metric, String> {
        match s {
            "fbar" => Ok(Metric::Fbar),
            "taubar" => Ok(Metric::Taubar),
            _ => Err(format!("unknown metric `{s}` (expected fbar or taubar)")),
        }
    }
}

impl BenchReport {
    /// Problems and regularizations in first-appearance order.
    fn axes(&self) -> (Vec<String>, Vec<String>) {
        let mut problems: Vec<String> = Vec::new();
        let mut regs: Vec<String> = Vec::new();
        for r in &self.rows {
            if !problems.contains(&r.problem) {
                problems.push(r.problem.clone());
            }
            if !regs.contains(&r.reg) {
                regs.push(r.reg.clone());
            }
        }
        (problems, regs)
    }

    /// Performance profile of `f̄` or `τ̄`; missing cells count as infinite.
    pub fn profile(&self, metric: Metric) -> Vec<ProfilePoint> {
        let (problems, regs) = self.axes();
        let matrix: Vec<Vec<f64>> = problems
            .iter()
            .map(|p| {
                regs.iter()
                    .map(|g| {
                        self.rows.iter().find(|r| &r.problem == p && &r.reg == g).map_or(
                            f64::INFINITY,
                            |r| match metric {
                                Metric::Fbar => r.fbar,
                                Metric::Taubar => r.taubar,
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        performance_profile(&matrix, &regs)
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<BenchReport, csv::Error> {
        let rows = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<Result<Vec<ReportRow>, _>>()?;
        Ok(BenchReport { rows })
    }
}

pub fn write_profile_csv<W: io::Write>(points: &[ProfilePoint], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_profile_csv<R: io::Read>(r: R) -> Result<Vec<ProfilePoint>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// Standalone matplotlib script drawing a profile CSV as step functions.
pub fn plot_script(profile_csv: &str, metric: &str) -> String {
    format!(
        r#"import csv
import matplotlib.pyplot as plt

series = {{}}
with open("{profile_csv}") as fh:
    for row in csv.DictReader(fh):
        series.setdefault(row["reg"], []).append((float(row["tau"]), float(row["fraction"])))

for reg, pts in series.items():
    pts.sort()
    plt.step([p[0] for p in pts], [p[1] for p in pts], where="post", label=reg)
plt.xscale("symlog")
plt.xlabel("tau ({metric})")
plt.ylabel("fraction of problems")
plt.ylim(0, 1.05)
plt.legend()
plt.savefig("{profile_csv}.png", dpi=150)
"#
    )
}

/// Suite settings shared by all regularizations.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub kinds: Vec<RegKind>,
    pub t0: f64,
    pub t_min: f64,
    pub eps: f64,
    /// Overrides the per-kind default shrink factor.
    pub shrink: Option<f64>,
    pub beta: f64,
    pub mode: DisjMode,
    pub solver: SolverOptions,
    /// Timed runs per (problem, regularization).
    pub repeats: usize,
    pub exec: Execution,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let base = HomotopyParams::new(RegKind::Disj);
        SuiteConfig {
            kinds: vec![RegKind::Ks, RegKind::Disj, RegKind::Scholtes],
            t0: base.t0,
            t_min: base.t_min,
            eps: base.eps,
            shrink: None,
            beta: base.beta,
            mode: base.mode,
            solver: base.solver,
            repeats: 10,
            exec: Execution::default(),
        }
    }
}

impl SuiteConfig {
    pub fn params(&self, kind: RegKind) -> HomotopyParams {
        HomotopyParams {
            t0: self.t0,
            t_min: self.t_min,
            eps: self.eps,
            shrink: self.shrink.unwrap_or(kind.default_shrink()),
            kind,
            beta: self.beta,
            solver: self.solver.clone(),
            mode: self.mode,
            // Suite-level parallelism replaces the per-run branch parallelism.
            exec: Execution::Sequential,
        }
    }
}

fn run_one(entry: &CorpusEntry, params: &HomotopyParams, repeats: usize) -> (String, f64, f64, f64) {
    let mut first = None;
    let mut total = 0.0;
    for _ in 0..repeats.max(1) {
        match run_homotopy(&entry.problem, params) {
            Ok(trace) => {
                total += trace.millis;
                first.get_or_insert(trace);
            }
            Err(e) => return (format!("error: {e}"), f64::INFINITY, f64::INFINITY, f64::INFINITY),
        }
    }
    let trace = first.expect("at least one run");
    let avg = total / repeats.max(1) as f64;
    let (f, time) = if trace.feasible() {
        (trace.objective, avg)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    (trace.termination.as_str().to_string(), f, trace.maxvio, time)
}

/// Run every regularization on every entry and derive `f̄` and `τ̄`.
pub fn run_suite(corpus: &[CorpusEntry], config: &SuiteConfig) -> Result<BenchReport, ParameterError> {
    crate::error::require(!config.kinds.is_empty(), "regs", 0.0, "at least one regularization")?;
    for &k in &config.kinds {
        config.params(k).validate()?;
    }
    let kinds: Vec<RegKind> = {
        let mut seen = BTreeSet::new();
        config.kinds.iter().copied().filter(|k| seen.insert(*k)).collect()
    };
    let jobs: Vec<(usize, RegKind)> = (0..corpus.len())
        .flat_map(|i| kinds.iter().map(move |&k| (i, k)))
        .collect();
    let results = par::map(config.exec, &jobs, |&(i, k)| {
        run_one(&corpus[i], &config.params(k), config.repeats)
    });
    let mut rows = Vec::with_capacity(jobs.len());
    for (i, entry) in corpus.iter().enumerate() {
        let block = &results[i * kinds.len()..(i + 1) * kinds.len()];
        let fs: Vec<f64> = block.iter().map(|r| r.1).collect();
        let ts: Vec<f64> = block.iter().map(|r| r.3).collect();
        let fbar = normalized_relative_error(&fs);
        let taubar = relative_time(&ts);
        for (m, (k, r)) in kinds.iter().zip(block).enumerate() {
            rows.push(ReportRow {
                problem: entry.problem.name.clone(),
                reg: k.as_str().to_string(),
                status: r.0.clone(),
                f: r.1,
                maxvio: r.2,
                time_ms_avg: r.3,
                fbar: fbar[m],
                taubar: taubar[m],
            });
        }
    }
    Ok(BenchReport { rows })
}
