//! Command-line front end: argument parsing, dispatch and artifact output.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lq::{reduced_gradient_solve, solve_lq, SegmentProblem};
use crate::model::{validate_problem, ProblemData};
use crate::rhc::{rho_statistic, Experiment, RhcConfig, RhcResult, SweepOptions, TerminalCostSpec};
use crate::turnpike::turnpike_check;

#[derive(Debug, Parser)]
#[command(name = "turnpike-rhc", version, about = "Turnpike-based receding-horizon control for LQ problems")]
pub struct Cli {
    /// Problem file (JSON); the built-in benchmark problem when omitted.
    #[arg(long, global = true)]
    pub problem: Option<PathBuf>,

    /// Time step, overriding the problem file.
    #[arg(long, global = true)]
    pub h: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the problem's invariants.
    Validate {
        /// Also write the resolved problem as JSON.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Solve the algebraic Riccati equation.
    Care {
        #[arg(long)]
        json: bool,
    },
    /// Solve the steady-state problem.
    Static,
    /// Solve the problem on its whole horizon.
    Solve {
        #[arg(long, value_enum, default_value_t = Method::Riccati)]
        method: Method,
        /// Gradient tolerance of the reduced-gradient method.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Compare the optimal trajectory with the turnpike envelope.
    TurnpikeCheck {
        /// JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-node deviations and envelope values.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// One finite-horizon receding-horizon run.
    Rhc {
        #[arg(long)]
        tau: f64,
        #[arg(long = "T")]
        horizon: f64,
        /// Iteration count; `floor((T_bar - 2T) / tau)` when omitted.
        #[arg(long = "N")]
        iterations: Option<usize>,
        #[command(flatten)]
        terminal: TerminalArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Receding-horizon runs over a grid of (tau, T).
    Sweep {
        /// `start:stop:step` (inclusive) or a comma-separated list.
        #[arg(long)]
        tau_list: String,
        #[arg(long = "T-list")]
        t_list: String,
        #[command(flatten)]
        terminal: TerminalArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "TURNPIKE_RHC_JOBS", default_value_t = 1)]
        jobs: usize,
        /// Also write the error and 100 rho matrices next to `--out`.
        #[arg(long)]
        figures: bool,
    },
    /// Infinite-horizon receding-horizon run against the overtaking solution.
    Infinite {
        #[arg(long)]
        tau: f64,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long = "N")]
        iterations: usize,
        /// End of the window the run must fit in; `N tau` when omitted.
        #[arg(long = "T-end")]
        t_end: Option<f64>,
        /// `pi` (default), `care`, `zero` or a JSON file with a matrix.
        #[arg(long, default_value = "pi")]
        pi_tilde: String,
        /// `pstar`, `zero` or a JSON file with a vector.
        #[arg(long, default_value = "pstar")]
        p_tilde: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Riccati,
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Zero,
    Constant,
    Exact,
}

#[derive(Debug, Args)]
pub struct TerminalArgs {
    #[arg(long, value_enum, default_value_t = Mode::Zero)]
    pub mode: Mode,
    /// `pstar`, `zero` or a JSON file with a vector.
    #[arg(long, default_value = "pstar")]
    pub p_tilde: String,
    /// Constant mode only: `pi` (stationary discrete solution), `care`,
    /// `zero` or a JSON file with a matrix.
    #[arg(long, default_value = "pi")]
    pub pi_tilde: String,
}

/// Parses `start:stop:step` with inclusive ends, or a comma-separated list.
/// Values are snapped to 1e-9.
pub fn parse_range(text: &str) -> std::result::Result<Vec<f64>, String> {
    let snap = |v: f64| (v * 1e9).round() / 1e9;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) {
                return Err(format!("step must be positive in `{text}`"));
            }
            if stop < start - 1e-9 {
                return Err(format!("empty range `{text}`"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=count).map(|i| snap(start + i as f64 * step)).collect()
        }
        [_] => text.split(',').map(|s| num(s).map(snap)).collect::<std::result::Result<Vec<_>, _>>()?,
        _ => return Err(format!("expected start:stop:step or a list, got `{text}`")),
    };
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(format!("values must be positive in `{text}`"));
    }
    Ok(values)
}

/// Writes to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(contents).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(io)
}

fn read_json(path: &str) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_string(),
        reason: e.to_string(),
    })
}

fn vector_file(path: &str) -> Result<DVector<f64>> {
    let v: Vec<f64> = serde_json::from_value(read_json(path)?).map_err(|e| Error::Parse {
        path: path.to_string(),
        reason: format!("expected an array of numbers: {e}"),
    })?;
    Ok(DVector::from_vec(v))
}

fn matrix_file(path: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(read_json(path)?).map_err(|e| Error::Parse {
        path: path.to_string(),
        reason: format!("expected an array of rows: {e}"),
    })?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse {
            path: path.to_string(),
            reason: "rows have unequal lengths".into(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<_>>())
}

fn mat_json(m: &DMatrix<f64>) -> Value {
    json!(m.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>())
}

/// JSON number, or null when not finite.
fn num_json(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn p_tilde(ex: &Experiment, choice: &str) -> Result<DVector<f64>> {
    match choice {
        "pstar" => Ok(ex.steady.p_star.clone()),
        "zero" => Ok(DVector::zeros(ex.data.n())),
        path => vector_file(path),
    }
}

fn pi_tilde(ex: &Experiment, choice: &str, h: f64) -> Result<DMatrix<f64>> {
    match choice {
        "pi" => Ok(ex.discrete_care(h)?.pi.clone()),
        "care" => Ok(ex.care.pi.clone()),
        "zero" => Ok(DMatrix::zeros(ex.data.n(), ex.data.n())),
        path => matrix_file(path),
    }
}

fn terminal_spec(ex: &Experiment, args: &TerminalArgs, h: f64) -> Result<TerminalCostSpec> {
    let n = ex.data.n();
    Ok(match args.mode {
        Mode::Zero => TerminalCostSpec::zero(p_tilde(ex, &args.p_tilde)?),
        Mode::Constant => TerminalCostSpec::constant(
            pi_tilde(ex, &args.pi_tilde, h)?,
            DMatrix::zeros(n, n),
            p_tilde(ex, &args.p_tilde)?,
        ),
        Mode::Exact => TerminalCostSpec::Exact,
    })
}

fn load_problem(cli: &Cli) -> Result<ProblemData> {
    let mut data = match &cli.problem {
        Some(path) => ProblemData::load(path)?,
        None => ProblemData::benchmark(),
    };
    if let Some(h) = cli.h {
        data.h = h;
    }
    if !(data.h > 0.0) || !data.h.is_finite() {
        return Err(Error::invalid("h", "h must be positive"));
    }
    data.check_dimensions()?;
    Ok(data)
}

fn rhc_summary(res: &RhcResult, cfg: &RhcConfig, mode: &str, rho: f64, bound: Option<f64>) -> Value {
    json!({
        "tau": cfg.tau,
        "T": cfg.T,
        "N": cfg.N,
        "h": cfg.h,
        "mode": mode,
        "error_u": res.error_u,
        "error_y": res.error_y,
        "cost_gap": res.cost_gap,
        "rho": num_json(rho),
        "predicted_bound": bound.map_or(Value::Null, num_json),
        "per_iter": res.per_iter.iter().map(|r| json!({
            "n": r.n,
            "handoff_error": r.handoff_error,
            "segment_error": r.segment_error,
        })).collect::<Vec<_>>(),
    })
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn csv_bytes(traj: &crate::model::Trajectory) -> Vec<u8> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).expect("writing to memory");
    buf
}

fn figure_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let data = load_problem(cli)?;
    let h = data.h;
    if let Command::Validate { emit: emit_path } = &cli.command {
        let report = validate_problem(&data)?;
        emit(out, None, &format!("{report}\n"))?;
        if let Some(p) = emit_path {
            write_atomic(p, data.to_json_string().as_bytes())?;
        }
        return Ok(if report.is_ok() { 0 } else { 1 });
    }
    let ex = Experiment::new(&data)?;
    match &cli.command {
        Command::Validate { .. } => unreachable!(),
        Command::Care { json } => {
            let care = &ex.care;
            if *json {
                let v = json!({
                    "Pi": mat_json(&care.pi),
                    "lambda": care.lambda,
                    "eig_A_pi": care.eig_a_pi.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
                    "residual": care.residual,
                });
                emit(out, None, &pretty(&v))?;
            } else {
                let text = format!(
                    "Pi = {}lambda = {}\neig(A_pi) = {:?}\nresidual = {:e}\n",
                    care.pi, care.lambda, care.eig_a_pi, care.residual
                );
                emit(out, None, &text)?;
            }
        }
        Command::Static => {
            let s = &ex.steady;
            let v = json!({
                "y_star": vec_json(&s.y_star),
                "u_star": vec_json(&s.u_star),
                "p_star": vec_json(&s.p_star),
                "v_star": s.v_star,
                "q_tilde": vec_json(&s.q_tilde),
                "kkt_residual": s.kkt_residual(&data),
            });
            emit(out, None, &pretty(&v))?;
        }
        Command::Solve {
            method,
            tol,
            out: traj_path,
            summary,
        } => {
            let seg = SegmentProblem::full_horizon(&data)?;
            let (sol, iterations) = match method {
                Method::Riccati => (solve_lq(&seg)?, None),
                Method::Gradient => {
                    let r = reduced_gradient_solve(&seg, *tol)?;
                    (r.solution, Some(r.iterations))
                }
            };
            if let Some(p) = traj_path {
                write_atomic(p, &csv_bytes(&sol.traj))?;
            }
            let mut v = json!({ "value": sol.value, "kkt_residual": sol.kkt_residual });
            if let Some(it) = iterations {
                v["iterations"] = json!(it);
            }
            emit(out, summary.as_deref(), &pretty(&v))?;
        }
        Command::TurnpikeCheck { out: report_path, csv } => {
            let sol = solve_lq(&SegmentProblem::full_horizon(&data)?)?;
            let report = turnpike_check(&sol.traj, &ex.steady, ex.care.lambda)?;
            let opt = |v: Option<f64>| v.map_or(Value::Null, num_json);
            let v = json!({
                "lambda": ex.care.lambda,
                "fitted_M": report.fitted_m,
                "left_rate": opt(report.left_rate),
                "right_rate": opt(report.right_rate),
                "left_fit_residual": opt(report.left_fit_residual),
                "right_fit_residual": opt(report.right_fit_residual),
                "max_mid_deviation": report.max_mid_deviation,
                "degenerate": report.degenerate,
            });
            if let Some(p) = csv {
                let mut text = String::from("t,deviation,envelope\n");
                for n in &report.nodes {
                    text.push_str(&format!(
                        "{},{},{}\n",
                        crate::model::fmt_f64(n.t),
                        crate::model::fmt_f64(n.deviation),
                        crate::model::fmt_f64(n.envelope)
                    ));
                }
                write_atomic(p, text.as_bytes())?;
            }
            emit(out, report_path.as_deref(), &pretty(&v))?;
        }
        Command::Rhc {
            tau,
            horizon,
            iterations,
            terminal,
            out: traj_path,
            summary,
        } => {
            let spec = terminal_spec(&ex, terminal, h)?;
            let cfg = match iterations {
                Some(n) => RhcConfig::new(*tau, *horizon, *n, spec, h),
                None => RhcConfig::with_default_n(*tau, *horizon, spec, h, data.T_bar),
            };
            let res = ex.run_finite(&cfg)?;
            if let Some(p) = traj_path {
                write_atomic(p, &csv_bytes(&res.traj))?;
            }
            let rho = rho_statistic(res.error_u, cfg.tau, cfg.T, ex.care.lambda).unwrap_or(f64::NAN);
            let bound = ex.predicted_bound(&cfg)?;
            let mode = format!("{}", cfg.terminal.mode());
            emit(out, summary.as_deref(), &pretty(&rhc_summary(&res, &cfg, &mode, rho, Some(bound))))?;
        }
        Command::Sweep {
            tau_list,
            t_list,
            terminal,
            out: table_path,
            jobs,
            figures,
        } => {
            let tau_list = parse_range(tau_list).map_err(|r| Error::invalid("tau-list", r))?;
            let t_list = parse_range(t_list).map_err(|r| Error::invalid("T-list", r))?;
            if *jobs == 0 {
                return Err(Error::invalid("jobs", "must be at least 1"));
            }
            let opts = SweepOptions {
                tau_list,
                t_list,
                terminal: terminal_spec(&ex, terminal, h)?,
                h,
                jobs: *jobs,
            };
            let table = ex.sweep(&opts)?;
            write_atomic(table_path, table.to_csv().as_bytes())?;
            if *figures {
                write_atomic(&figure_path(table_path, "error"), table.error_matrix_csv().as_bytes())?;
                write_atomic(&figure_path(table_path, "rho100"), table.rho_matrix_csv().as_bytes())?;
            }
            let failed = table.rows.iter().filter(|r| r.status != "ok").count();
            emit(
                out,
                None,
                &format!("{} cells, {} skipped -> {}\n", table.rows.len(), failed, table_path.display()),
            )?;
        }
        Command::Infinite {
            tau,
            horizon,
            iterations,
            t_end,
            pi_tilde: pi_choice,
            p_tilde: p_choice,
            out: traj_path,
            summary,
        } => {
            let n = data.n();
            let spec = TerminalCostSpec::constant(
                pi_tilde(&ex, pi_choice, h)?,
                DMatrix::zeros(n, n),
                p_tilde(&ex, p_choice)?,
            );
            let cfg = RhcConfig::new(*tau, *horizon, *iterations, spec, h);
            let window = t_end.unwrap_or(*iterations as f64 * *tau);
            let res = ex.run_infinite(&cfg, window)?;
            if let Some(p) = traj_path {
                write_atomic(p, &csv_bytes(&res.traj))?;
            }
            emit(out, summary.as_deref(), &pretty(&rhc_summary(&res, &cfg, "constant", f64::NAN, None)))?;
        }
    }
    Ok(0)
}

/// Entry point of the binary: parses `args`, runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let v = parse_range("0.5:7.5:0.5").unwrap();
        assert_eq!(v.len(), 15);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[14], 7.5);
        assert_eq!(parse_range("0.1:0.3:0.1").unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(parse_range("1,2.5").unwrap(), vec![1.0, 2.5]);
        assert!(parse_range("1:2:0").is_err());
        assert!(parse_range("2:1:0.5").is_err());
        assert!(parse_range("a:b").is_err());
        assert!(parse_range("0:1:0.5").is_err());
    }

    #[test]
    fn h_must_be_positive() {
        let cli = Cli::try_parse_from(["turnpike-rhc", "--h", "0", "care"]).unwrap();
        let err = run(&cli, &mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("h must be positive"), "{err}");
    }

    #[test]
    fn missing_problem_names_the_path() {
        let cli = Cli::try_parse_from(["turnpike-rhc", "--problem", "/nonexistent/p.json", "care"]).unwrap();
        let err = run(&cli, &mut Vec::new()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/p.json"), "{err}");
    }

    #[test]
    fn unknown_flag_is_rejected() {
        assert!(Cli::try_parse_from(["turnpike-rhc", "care", "--bogus"]).is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
