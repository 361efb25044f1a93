//! Problem data, time grids, trajectories and the discrete cost functionals.
//!
//! Time is discretized by implicit Euler on a uniform grid `t_k = t0 + k h`.
//! States live on all `K + 1` nodes, controls on the right endpoints
//! `t_1..t_K`, and integrals use the matching right-endpoint rectangle rule,
//! so the discrete optimality system is the exact KKT system of the discrete
//! cost.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default time step.
pub const DEFAULT_STEP: f64 = 5e-3;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const HAUTUS_TOL: f64 = 1e-9;

/// All data defining the linear-quadratic problem on `[0, T_bar]`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    pub A: DMatrix<f64>,
    pub B: DMatrix<f64>,
    pub C: DMatrix<f64>,
    pub alpha: f64,
    pub f_star: DVector<f64>,
    pub g_star: DVector<f64>,
    pub h_star: DVector<f64>,
    pub Q: DMatrix<f64>,
    pub q: DVector<f64>,
    pub y0: DVector<f64>,
    pub T_bar: f64,
    /// Time step used when the problem is discretized.
    pub h: f64,
}

impl ProblemData {
    pub fn n(&self) -> usize {
        self.A.nrows()
    }

    pub fn m(&self) -> usize {
        self.B.ncols()
    }

    /// Two-state, single-input benchmark with an unstable but stabilizable
    /// `A`, horizon 30 and step 5e-3. The drift is set to `f = (1, 1)` so the
    /// steady state is nontrivial; `g`, `h`, `Q`, `q` and `y0` vanish.
    pub fn benchmark() -> Self {
        ProblemData {
            A: DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.1, -0.5]),
            B: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            C: DMatrix::identity(2, 2),
            alpha: 0.25,
            f_star: DVector::from_element(2, 1.0),
            g_star: DVector::zeros(2),
            h_star: DVector::zeros(1),
            Q: DMatrix::zeros(2, 2),
            q: DVector::zeros(2),
            y0: DVector::zeros(2),
            T_bar: 30.0,
            h: DEFAULT_STEP,
        }
    }

    /// Copy with the affine data `f`, `g`, `h` cleared.
    pub fn homogeneous(&self) -> Self {
        ProblemData {
            f_star: DVector::zeros(self.n()),
            g_star: DVector::zeros(self.n()),
            h_star: DVector::zeros(self.m()),
            ..self.clone()
        }
    }

    /// Grid on `[0, T_bar]` with the problem's step.
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(0.0, self.T_bar, self.h)
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.A.nrows();
        let mut bad = Vec::new();
        if self.A.ncols() != n {
            bad.push(format!("A is {}x{}, expected square", n, self.A.ncols()));
        }
        if self.B.nrows() != n {
            bad.push(format!("B has {} rows, expected {n}", self.B.nrows()));
        }
        if self.C.ncols() != n {
            bad.push(format!("C has {} columns, expected {n}", self.C.ncols()));
        }
        if self.Q.shape() != (n, n) {
            bad.push(format!("Q is {}x{}, expected {n}x{n}", self.Q.nrows(), self.Q.ncols()));
        }
        for (name, v) in [("f_star", &self.f_star), ("g_star", &self.g_star), ("q", &self.q), ("y0", &self.y0)] {
            if v.len() != n {
                bad.push(format!("{name} has length {}, expected {n}", v.len()));
            }
        }
        if self.h_star.len() != self.m() {
            bad.push(format!("h_star has length {}, expected {}", self.h_star.len(), self.m()));
        }
        if n == 0 || self.m() == 0 || self.C.nrows() == 0 {
            bad.push("state, input and output dimensions must be positive".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Dimension(bad.join("; ")))
        }
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, String> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        file.into_data()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|reason| Error::Parse {
            path: path.display().to_string(),
            reason,
        })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ProblemFile::from_data(self)).expect("problem data serializes")
    }
}

/// On-disk JSON layout of a problem (row-major matrices).
#[allow(non_snake_case)]
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    A: Vec<Vec<f64>>,
    B: Vec<Vec<f64>>,
    C: Vec<Vec<f64>>,
    alpha: f64,
    f_star: Vec<f64>,
    g_star: Vec<f64>,
    h_star: Vec<f64>,
    Q: Vec<Vec<f64>>,
    q: Vec<f64>,
    y0: Vec<f64>,
    T_bar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("field `{name}`: rows have unequal lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ProblemFile {
    fn into_data(self) -> std::result::Result<ProblemData, String> {
        Ok(ProblemData {
            A: matrix_from_rows("A", &self.A)?,
            B: matrix_from_rows("B", &self.B)?,
            C: matrix_from_rows("C", &self.C)?,
            alpha: self.alpha,
            f_star: DVector::from_vec(self.f_star),
            g_star: DVector::from_vec(self.g_star),
            h_star: DVector::from_vec(self.h_star),
            Q: matrix_from_rows("Q", &self.Q)?,
            q: DVector::from_vec(self.q),
            y0: DVector::from_vec(self.y0),
            T_bar: self.T_bar,
            h: self.h.unwrap_or(DEFAULT_STEP),
        })
    }

    fn from_data(d: &ProblemData) -> Self {
        ProblemFile {
            A: matrix_to_rows(&d.A),
            B: matrix_to_rows(&d.B),
            C: matrix_to_rows(&d.C),
            alpha: d.alpha,
            f_star: d.f_star.iter().copied().collect(),
            g_star: d.g_star.iter().copied().collect(),
            h_star: d.h_star.iter().copied().collect(),
            Q: matrix_to_rows(&d.Q),
            q: d.q.iter().copied().collect(),
            y0: d.y0.iter().copied().collect(),
            T_bar: d.T_bar,
            h: Some(d.h),
        }
    }
}

/// A failed problem invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, invariant: &str) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "violation \"{}\": {}", v.invariant, v.detail)?;
        }
        Ok(())
    }
}

/// Checks every problem invariant. Structural (shape) problems are returned
/// as `Err`; invariant failures are listed in the report.
pub fn validate_problem(data: &ProblemData) -> Result<ValidationReport> {
    data.check_dimensions()?;
    let mut violations = Vec::new();
    let mut fail = |invariant: &'static str, detail: String| violations.push(Violation { invariant, detail });

    if !(data.alpha > 0.0) {
        fail("alpha > 0", format!("alpha = {}", data.alpha));
    }
    if !(data.T_bar > 0.0) {
        fail("T_bar > 0", format!("T_bar = {}", data.T_bar));
    }
    if !(data.h > 0.0) {
        fail("h > 0", format!("h = {}", data.h));
    }
    let asym = linalg::asymmetry(&data.Q);
    if asym > SYMMETRY_TOL {
        fail("Q symmetric", format!("max |Q - Q^T| = {asym:e}"));
    }
    let min_eig = linalg::min_sym_eigenvalue(&data.Q);
    if min_eig < -PSD_TOL {
        fail("Q positive semi-definite", format!("min eigenvalue {min_eig:e}"));
    }
    let unc = linalg::hautus_uncontrollable(&data.A, &data.B, HAUTUS_TOL);
    if !unc.is_empty() {
        fail("stabilizability", format!("uncontrollable modes with Re >= 0: {unc:?}"));
    }
    let und = linalg::hautus_undetectable(&data.A, &data.C, HAUTUS_TOL);
    if !und.is_empty() {
        fail("detectability", format!("unobservable modes with Re >= 0: {und:?}"));
    }
    Ok(ValidationReport { violations })
}

/// Uniform grid on `[t0, t1]` with `steps` intervals of length `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub t0: f64,
    pub t1: f64,
    pub h: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(t0: f64, t1: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("h", "h must be positive"));
        }
        let len = t1 - t0;
        if !(len >= 0.0) {
            return Err(Error::invalid("grid", format!("end {t1} precedes start {t0}")));
        }
        let steps = (len / h).round();
        if (len - steps * h).abs() > 1e-10 * len.abs().max(1.0) {
            return Err(Error::invalid(
                "grid",
                format!("length {len} is not an integer multiple of h = {h}"),
            ));
        }
        Ok(Grid {
            t0,
            t1,
            h,
            steps: steps as usize,
        })
    }

    /// Grid with `steps` intervals starting at `t0`.
    pub fn with_steps(t0: f64, h: f64, steps: usize) -> Self {
        Grid {
            t0,
            t1: t0 + steps as f64 * h,
            h,
            steps,
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|k| self.time(k))
    }

    /// Number of steps corresponding to a duration that must be a multiple of `h`.
    pub fn steps_for(&self, duration: f64, what: &'static str) -> Result<usize> {
        steps_for(duration, self.h, what)
    }
}

pub(crate) fn steps_for(duration: f64, h: f64, what: &'static str) -> Result<usize> {
    let k = (duration / h).round();
    if !(duration >= 0.0) || (duration - k * h).abs() > 1e-10 * duration.abs().max(1.0) {
        return Err(Error::invalid(what, format!("{duration} is not a nonnegative multiple of h = {h}")));
    }
    Ok(k as usize)
}

/// States on all nodes, controls on right endpoints, optional costates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub costates: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn new(
        grid: Grid,
        states: Vec<DVector<f64>>,
        controls: Vec<DVector<f64>>,
        costates: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        let k = grid.steps;
        if states.len() != k + 1 || controls.len() != k || costates.as_ref().is_some_and(|p| p.len() != k + 1) {
            return Err(Error::Dimension(format!(
                "trajectory lengths ({}, {}, {:?}) do not match grid with {k} steps",
                states.len(),
                controls.len(),
                costates.as_ref().map(Vec::len)
            )));
        }
        Ok(Trajectory {
            grid,
            states,
            controls,
            costates,
        })
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one node")
    }

    /// Writes `t,y_1..y_n,u_1..u_m,p_1..p_n`, one row per node; the control
    /// is blank at the first node and costates are blank when absent.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.states[0].len();
        let m = self.controls.first().map_or(0, |u| u.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("y_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.extend((1..=n).map(|i| format!("p_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..=self.grid.steps {
            let mut row = vec![fmt_f64(self.grid.time(k))];
            row.extend(self.states[k].iter().map(|&v| fmt_f64(v)));
            if k == 0 {
                row.extend(std::iter::repeat_n(String::new(), m));
            } else {
                row.extend(self.controls[k - 1].iter().map(|&v| fmt_f64(v)));
            }
            match &self.costates {
                Some(p) => row.extend(p[k].iter().map(|&v| fmt_f64(v))),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Float formatting with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub running: f64,
    pub terminal: f64,
    pub total: f64,
}

/// `l(y,u) = |Cy|^2/2 + <g,y> + alpha |u|^2/2 + <h,u>`.
pub fn running_cost(data: &ProblemData, y: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
    if y.len() != data.n() || u.len() != data.m() || data.C.ncols() != data.n() {
        return Err(Error::Dimension(format!(
            "running cost expects y in R^{} and u in R^{}",
            data.n(),
            data.m()
        )));
    }
    Ok(stage_cost(data, y, u))
}

pub(crate) fn stage_cost(data: &ProblemData, y: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * (&data.C * y).norm_squared() + data.g_star.dot(y) + 0.5 * data.alpha * u.norm_squared() + data.h_star.dot(u)
}

/// Right-endpoint rectangle rule for the running cost plus the quadratic
/// terminal cost `<y_K, Q y_K>/2 + <q, y_K>`.
#[allow(non_snake_case)]
pub fn total_cost(data: &ProblemData, traj: &Trajectory, Qterm: &DMatrix<f64>, qterm: &DVector<f64>) -> CostReport {
    let running = traj.grid.h
        * traj.states[1..]
            .iter()
            .zip(&traj.controls)
            .map(|(y, u)| stage_cost(data, y, u))
            .sum::<f64>();
    let yk = traj.final_state();
    let terminal = 0.5 * yk.dot(&(Qterm * yk)) + qterm.dot(yk);
    CostReport {
        running,
        terminal,
        total: running + terminal,
    }
}

/// Discrete L2 distance `(h sum |a_k - b_k|^2)^{1/2}`.
pub fn l2_distance(a: &[DVector<f64>], b: &[DVector<f64>], grid: &Grid) -> Result<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::Dimension(format!(
            "cannot compare sample sequences of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok((grid.h * a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>()).sqrt())
}
