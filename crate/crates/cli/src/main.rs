//! `mpcc` command-line front end.
//!
//! Exit codes: 0 success, 1 usage/parse/IO error, 2 solved but infeasible
//! (or an infeasible point handed to `analyze`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use mpcc::analysis::{disj_c_index, mpcc_c_index, recover_mpcc_multipliers, SIGN_TOL};
use mpcc::bench::{load_corpus_dir, plot_script, run_suite, write_profile_csv, BenchReport, Metric, SuiteConfig};
use mpcc::disjunctive::{recover_disj_multipliers, DisjMode};
use mpcc::homotopy::{run_homotopy, HomotopyParams, RegKind};
use mpcc::regularize::disjunctive;
use mpcc::{AnalysisError, MpccProblem, ACTIVE_TOL};

/// `println!` that tolerates a closed stdout, as in `mpcc bench ... | head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser, Debug)]
#[command(
    name = "mpcc",
    version,
    about = "Regularization solvers and stationarity analysis for MPCCs"
)]
struct Cli {
    /// Print per-iteration progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the regularization homotopy on one problem file.
    Solve {
        problem: PathBuf,
        #[arg(long, default_value = "disj")]
        reg: String,
        #[command(flatten)]
        homotopy: HomotopyArgs,
        /// Write the iteration trace as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify a point of the MPCC, or of D(t) with `--t`.
    Analyze {
        problem: PathBuf,
        #[arg(long, num_args = 1.., allow_negative_numbers = true, required = true)]
        point: Vec<f64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Run every regularization on a corpus directory.
    Bench {
        corpus: PathBuf,
        /// Comma-separated regularizations.
        #[arg(long, default_value = "ks,disj,scholtes")]
        regs: String,
        #[command(flatten)]
        homotopy: HomotopyArgs,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        /// Output directory for report.csv and the plot scripts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Performance profile of a bench report.
    Profile {
        report: PathBuf,
        #[arg(long, default_value = "fbar")]
        metric: String,
        #[arg(long, default_value = "profile.csv")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct HomotopyArgs {
    #[arg(long, default_value_t = 1.0)]
    t0: f64,
    #[arg(long, default_value_t = 1e-15)]
    tmin: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Defaults to 1e-4 for scholtes and 1e-2 otherwise.
    #[arg(long)]
    shrink: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    #[arg(long, default_value = "enumerate")]
    mode: String,
}

impl HomotopyArgs {
    fn params(&self, kind: RegKind) -> anyhow::Result<HomotopyParams> {
        let mut p = HomotopyParams::new(kind);
        p.t0 = self.t0;
        p.t_min = self.tmin;
        p.eps = self.eps;
        p.shrink = self.shrink.unwrap_or(p.shrink);
        p.beta = self.beta;
        p.mode = self.mode.parse::<DisjMode>().map_err(anyhow::Error::msg)?;
        p.validate()?;
        Ok(p)
    }
}

fn load_problem(path: &Path) -> anyhow::Result<Arc<MpccProblem>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let problem = MpccProblem::from_text(&text).with_context(|| format!("{}", path.display()))?;
    Ok(Arc::new(problem))
}

fn fmt_point(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

fn solve(path: &Path, reg: &str, args: &HomotopyArgs, out: Option<&Path>, verbose: bool) -> anyhow::Result<u8> {
    let problem = load_problem(path)?;
    let kind: RegKind = reg.parse()?;
    let params = args.params(kind)?;
    let trace = run_homotopy(&problem, &params)?;
    if verbose {
        for r in &trace.rows {
            eprintln!(
                "k={} t={:e} maxvio={:e} status={} accepted={}",
                r.k,
                r.t,
                r.maxvio,
                r.status.as_str(),
                r.accepted
            );
        }
    }
    if let Some(out) = out {
        let file = fs::File::create(out).with_context(|| format!("cannot write {}", out.display()))?;
        trace.write_csv(file)?;
    }
    say!(
        "f={:e} maxvio={:e} termination={}",
        trace.objective,
        trace.maxvio,
        trace.termination.as_str()
    );
    say!("problem: {}", problem.name);
    say!("reg: {}", kind.as_str());
    say!("point: {}", fmt_point(&trace.point));
    say!("f: {:e}", trace.objective);
    say!("maxvio: {:e}", trace.maxvio);
    say!("termination: {}", trace.termination.as_str());
    say!("iterations: {}", trace.rows.len());
    let feasible = trace.feasible();
    say!("status: {}", if feasible { "feasible" } else { "infeasible" });
    Ok(if feasible { 0 } else { 2 })
}

fn analyze(path: &Path, point: &[f64], t: Option<f64>) -> anyhow::Result<u8> {
    let problem = load_problem(path)?;
    if point.len() != problem.n {
        bail!("point has {} entries, problem has {} variables", point.len(), problem.n);
    }
    let refused = |e: &AnalysisError| -> Option<u8> {
        if let AnalysisError::Infeasible { violation } = e {
            say!("classification refused: point is infeasible (violation {violation:e})");
            Some(2)
        } else {
            None
        }
    };
    match t {
        None => {
            let m = match recover_mpcc_multipliers(&problem, point, ACTIVE_TOL) {
                Ok(m) => m,
                Err(e) => return refused(&e).map_or_else(|| Err(e.into()), Ok),
            };
            let report = mpcc_c_index(&problem, point, &m, SIGN_TOL)?;
            say!("{}", report.summary());
            say!("{report}");
            say!("{m}");
        }
        Some(t) => {
            let disj = disjunctive(&problem, t)?;
            let m = match recover_disj_multipliers(&disj, point, ACTIVE_TOL) {
                Ok(m) => m,
                Err(e) => return refused(&e).map_or_else(|| Err(e.into()), Ok),
            };
            let report = disj_c_index(&disj, point, &m, SIGN_TOL)?;
            say!("{}", report.summary());
            say!("{report}");
            say!("{m}");
        }
    }
    Ok(0)
}

fn write_file(path: &Path, body: impl FnOnce(fs::File) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    body(file)
}

fn bench(corpus: &Path, regs: &str, args: &HomotopyArgs, repeats: usize, out: &Path) -> anyhow::Result<u8> {
    let kinds = regs
        .split(',')
        .map(|s| s.trim().parse::<RegKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let mode = args.mode.parse::<DisjMode>().map_err(anyhow::Error::msg)?;
    for &k in &kinds {
        args.params(k)?;
    }
    let entries = load_corpus_dir(corpus)?;
    if entries.is_empty() {
        bail!("no .mpcc files in {}", corpus.display());
    }
    let config = SuiteConfig {
        kinds,
        t0: args.t0,
        t_min: args.tmin,
        eps: args.eps,
        shrink: args.shrink,
        beta: args.beta,
        mode,
        repeats,
        ..SuiteConfig::default()
    };
    let report = run_suite(&entries, &config)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_file(&out.join("report.csv"), |f| Ok(report.write_csv(f)?))?;
    for (metric, name) in [(Metric::Fbar, "fbar"), (Metric::Taubar, "taubar")] {
        let csv_name = format!("profile_{name}.csv");
        write_file(&out.join(&csv_name), |f| {
            Ok(write_profile_csv(&report.profile(metric), f)?)
        })?;
        write_file(&out.join(format!("plot_{name}.py")), |mut f| {
            Ok(f.write_all(plot_script(&csv_name, name).as_bytes())?)
        })?;
    }
    for r in &report.rows {
        say!(
            "{} {} {} f={:e} maxvio={:e} time_ms={:.3}",
            r.problem,
            r.reg,
            r.status,
            r.f,
            r.maxvio,
            r.time_ms_avg
        );
    }
    Ok(0)
}

fn profile(report: &Path, metric: &str, out: &Path) -> anyhow::Result<u8> {
    let metric: Metric = metric.parse().map_err(anyhow::Error::msg)?;
    let file = fs::File::open(report).with_context(|| format!("cannot read {}", report.display()))?;
    let report = BenchReport::read_csv(file).context("malformed report")?;
    let points = report.profile(metric);
    write_file(out, |f| Ok(write_profile_csv(&points, f)?))?;
    say!("{} profile points written to {}", points.len(), out.display());
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Solve {
            problem,
            reg,
            homotopy,
            out,
        } => solve(&problem, &reg, &homotopy, out.as_deref(), cli.verbose),
        Command::Analyze { problem, point, t } => analyze(&problem, &point, t),
        Command::Bench {
            corpus,
            regs,
            homotopy,
            repeats,
            out,
        } => bench(&corpus, &regs, &homotopy, repeats, &out),
        Command::Profile { report, metric, out } => profile(&report, &metric, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
