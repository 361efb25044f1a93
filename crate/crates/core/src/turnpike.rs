//! Steady-state problem, turnpike diagnostics, value-function identities and
//! the infinite-horizon (overtaking optimal) solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lq::{solve_lq, SegmentProblem};
use crate::model::{stage_cost, total_cost, Grid, ProblemData, Trajectory};
use crate::riccati::{CareSolution, DiscreteCare};

/// Solution `(y*, u*)` of the static problem, its multiplier `p*`, the
/// static value `v* = l(y*, u*)` and the terminal mismatch
/// `q_tilde = q - p* + Q y*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub y_star: DVector<f64>,
    pub u_star: DVector<f64>,
    pub p_star: DVector<f64>,
    pub v_star: f64,
    pub q_tilde: DVector<f64>,
}

/// Maximum violation of the static optimality conditions
/// `A y + B u + f = 0`, `-A^T p - C^T C y = g`, `alpha u + B^T p = -h`.
pub fn static_kkt_residual(data: &ProblemData, y: &DVector<f64>, u: &DVector<f64>, p: &DVector<f64>) -> f64 {
    let (rf, rg, rh) = static_residuals(data, y, u, p);
    rf.amax().max(rg.amax()).max(rh.amax())
}

fn static_residuals(
    data: &ProblemData,
    y: &DVector<f64>,
    u: &DVector<f64>,
    p: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let rf = &data.A * y + &data.B * u + &data.f_star;
    let rg = -(data.A.transpose() * p) - data.C.transpose() * (&data.C * y) - &data.g_star;
    let rh = u * data.alpha + data.B.transpose() * p + &data.h_star;
    (rf, rg, rh)
}

struct StaticMap<'a> {
    data: &'a ProblemData,
    pi: &'a DMatrix<f64>,
    a_pi_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    a_pi_t_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl StaticMap<'_> {
    /// Solves the static optimality system with right-hand side `(f, g, h)`
    /// through the decoupling `r = p - Pi y`.
    fn apply(&self, f: &DVector<f64>, g: &DVector<f64>, h: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let d = self.data;
        let inv_alpha = 1.0 / d.alpha;
        let singular = || Error::Turnpike("closed-loop matrix A_pi is singular".into());
        let r_rhs = self.pi * f - self.pi * (&d.B * h) * inv_alpha + g;
        let r = -self.a_pi_t_lu.solve(&r_rhs).ok_or_else(singular)?;
        let y_rhs = &d.B * h * inv_alpha - f + &d.B * (d.B.transpose() * &r) * inv_alpha;
        let y = self.a_pi_lu.solve(&y_rhs).ok_or_else(singular)?;
        let p = self.pi * &y + r;
        let u = -(h + d.B.transpose() * &p) * inv_alpha;
        Ok((y, u, p))
    }
}

/// Steady state from the CARE solution, with one step of iterative
/// refinement on the static optimality system.
pub fn solve_static(data: &ProblemData, care: &CareSolution) -> Result<SteadyState> {
    data.check_dimensions()?;
    let map = StaticMap {
        data,
        pi: &care.pi,
        a_pi_lu: care.a_pi.clone().lu(),
        a_pi_t_lu: care.a_pi.transpose().lu(),
    };
    if map.a_pi_lu.determinant().abs() <= f64::EPSILON * care.a_pi.amax().powi(data.n() as i32) {
        return Err(Error::Turnpike("closed-loop matrix A_pi is numerically singular".into()));
    }
    let (mut y, mut u, mut p) = map.apply(&data.f_star, &data.g_star, &data.h_star)?;
    let (rf, rg, rh) = static_residuals(data, &y, &u, &p);
    // residuals of the system in the form solved by `apply`: f -> -rf, g -> rg, h -> rh
    let (dy, du, dp) = map.apply(&rf, &(-rg), &rh)?;
    let refined = (&y + &dy, &u + &du, &p + &dp);
    if static_kkt_residual(data, &refined.0, &refined.1, &refined.2) < static_kkt_residual(data, &y, &u, &p) {
        (y, u, p) = refined;
    }
    let v_star = stage_cost(data, &y, &u);
    let q_tilde = &data.q - &p + &data.Q * &y;
    Ok(SteadyState {
        y_star: y,
        u_star: u,
        p_star: p,
        v_star,
        q_tilde,
    })
}

impl SteadyState {
    pub fn kkt_residual(&self, data: &ProblemData) -> f64 {
        static_kkt_residual(data, &self.y_star, &self.u_star, &self.p_star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnpikeNode {
    pub t: f64,
    /// `max(|y(t) - y*|, |p(t) - p*|)`
    pub deviation: f64,
    /// `e^{-lambda t} |y0 - y*| + e^{-lambda (T - t)} |q_tilde|`
    pub envelope: f64,
}

#[derive(Debug, Clone)]
pub struct TurnpikeReport {
    /// Smallest `M` with `deviation <= M * envelope` at every node.
    pub fitted_m: f64,
    /// Decay rate of the deviation fitted on `[L/20, L/4]` from the start,
    /// `L` the horizon length.
    pub left_rate: Option<f64>,
    /// Growth rate of the deviation fitted on the mirrored window at the end.
    pub right_rate: Option<f64>,
    pub left_fit_residual: Option<f64>,
    pub right_fit_residual: Option<f64>,
    /// Largest deviation over the middle third of the horizon.
    pub max_mid_deviation: f64,
    /// Set when the deviation vanishes (or the envelope does) everywhere.
    pub degenerate: bool,
    pub nodes: Vec<TurnpikeNode>,
}

const DEGENERATE_LEVEL: f64 = 1e-12;
const FIT_START: f64 = 0.05;
const FIT_END: f64 = 0.25;
const MIN_FIT_NODES: usize = 4;

/// Compares an optimal trajectory with the turnpike envelope.
pub fn turnpike_check(traj: &Trajectory, steady: &SteadyState, lambda: f64) -> Result<TurnpikeReport> {
    let costates = traj
        .costates
        .as_ref()
        .ok_or_else(|| Error::Turnpike("turnpike check needs costates".into()))?;
    let grid = traj.grid;
    let y_gap = (&traj.states[0] - &steady.y_star).norm();
    let q_gap = steady.q_tilde.norm();
    let nodes: Vec<TurnpikeNode> = (0..=grid.steps)
        .map(|k| {
            let t = grid.time(k);
            let deviation = (&traj.states[k] - &steady.y_star)
                .norm()
                .max((&costates[k] - &steady.p_star).norm());
            let envelope = (-lambda * (t - grid.t0)).exp() * y_gap + (-lambda * (grid.t1 - t)).exp() * q_gap;
            TurnpikeNode { t, deviation, envelope }
        })
        .collect();

    let k = grid.steps;
    let max_mid_deviation = nodes[k / 3..=(2 * k) / 3]
        .iter()
        .map(|n| n.deviation)
        .fold(0.0, f64::max);
    let all_small = nodes.iter().all(|n| n.deviation < DEGENERATE_LEVEL);
    let ratios: Vec<f64> = nodes
        .iter()
        .filter(|n| n.envelope >= DEGENERATE_LEVEL)
        .map(|n| n.deviation / n.envelope)
        .collect();
    if all_small || ratios.is_empty() {
        return Ok(TurnpikeReport {
            fitted_m: 0.0,
            left_rate: None,
            right_rate: None,
            left_fit_residual: None,
            right_fit_residual: None,
            max_mid_deviation,
            degenerate: true,
            nodes,
        });
    }
    let fitted_m = ratios.into_iter().fold(0.0, f64::max);

    // windows away from the fast transients at both ends and from the
    // opposite boundary layer
    let len = grid.t1 - grid.t0;
    let fit = |from: f64, to: f64| {
        let sel: Vec<&TurnpikeNode> = nodes.iter().filter(|n| n.t >= from && n.t <= to).collect();
        if sel.len() < MIN_FIT_NODES {
            return None;
        }
        let ts: Vec<f64> = sel.iter().map(|n| n.t).collect();
        let vs: Vec<f64> = sel.iter().map(|n| n.deviation).collect();
        linalg::log_linear_fit(&ts, &vs)
    };
    let left = fit(grid.t0 + len * FIT_START, grid.t0 + len * FIT_END);
    let right = fit(grid.t1 - len * FIT_END, grid.t1 - len * FIT_START);
    Ok(TurnpikeReport {
        fitted_m,
        left_rate: left.map(|f| -f.0),
        right_rate: right.map(|f| f.0),
        left_fit_residual: left.map(|f| f.2),
        right_fit_residual: right.map(|f| f.2),
        max_mid_deviation,
        degenerate: false,
        nodes,
    })
}

/// Both sides of the value-function relation at one initial time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRelation {
    pub theta: f64,
    pub value: f64,
    pub shifted: f64,
}

impl ValueRelation {
    pub fn mismatch(&self) -> f64 {
        (self.value - self.shifted).abs()
    }
}

/// Evaluates `V(theta, y_theta)` against
/// `V0_{T - theta, Q, q_tilde}(y_theta - y*) + <p*, y_theta> + (T - theta) v*
/// + <y*, Q y*>/2 + <q - p*, y*>` along the optimal trajectory, at
/// `theta = 0` and at the grid node nearest `T_bar / 2`.
pub fn value_relation(data: &ProblemData, steady: &SteadyState) -> Result<Vec<ValueRelation>> {
    let full = solve_lq(&SegmentProblem::full_horizon(data)?)?;
    let grid = data.grid()?;
    let homogeneous = data.homogeneous();
    [0, grid.steps / 2]
        .into_iter()
        .map(|k| {
            let theta = grid.time(k);
            let y_theta = &full.traj.states[k];
            let sub = Grid::with_steps(theta, grid.h, grid.steps - k);
            let value = solve_lq(&SegmentProblem::new(data, y_theta.clone(), data.Q.clone(), data.q.clone(), sub)?)?.value;
            let v0 = solve_lq(&SegmentProblem::new(
                &homogeneous,
                y_theta - &steady.y_star,
                data.Q.clone(),
                steady.q_tilde.clone(),
                sub,
            )?)?
            .value;
            let shifted = v0
                + steady.p_star.dot(y_theta)
                + (data.T_bar - theta) * steady.v_star
                + 0.5 * steady.y_star.dot(&(&data.Q * &steady.y_star))
                + (&data.q - &steady.p_star).dot(&steady.y_star);
            Ok(ValueRelation { theta, value, shifted })
        })
        .collect()
}

/// Largest mismatch of [`value_relation`].
pub fn value_relation_check(data: &ProblemData, steady: &SteadyState) -> Result<f64> {
    Ok(value_relation(data, steady)?
        .iter()
        .map(ValueRelation::mismatch)
        .fold(0.0, f64::max))
}

/// Overtaking optimal solution `(y*, u*, p*) + (y~, u~, p~)` on `grid`,
/// where `y~` follows the discrete closed loop of the stationary Riccati
/// solution, `p~_k = Pi y~_k` and `u~_k = -(1/alpha) B^T p~_{k-1}`.
pub fn overtaking_solution(
    data: &ProblemData,
    steady: &SteadyState,
    discrete: &DiscreteCare,
    grid: &Grid,
) -> Result<Trajectory> {
    if (grid.h - discrete.h).abs() > 1e-15 * grid.h {
        return Err(Error::Turnpike(format!(
            "grid step {} differs from the step {} of the discrete Riccati solution",
            grid.h, discrete.h
        )));
    }
    let mut dev = &data.y0 - &steady.y_star;
    let mut states = Vec::with_capacity(grid.steps + 1);
    let mut controls = Vec::with_capacity(grid.steps);
    let mut costates = Vec::with_capacity(grid.steps + 1);
    states.push(&steady.y_star + &dev);
    costates.push(&steady.p_star + &discrete.pi * &dev);
    for _ in 0..grid.steps {
        controls.push(&steady.u_star - &discrete.feedback * &dev);
        dev = discrete.step_closed_loop(&dev);
        states.push(&steady.y_star + &dev);
        costates.push(&steady.p_star + &discrete.pi * &dev);
    }
    let mut traj = Trajectory::new(*grid, states, controls, Some(costates))?;
    traj.grid = *grid;
    Ok(traj)
}

/// Cost of the overtaking solution on `[0, T]` next to the closed form
/// `T v* + <y0 - y*, Pi (y0 - y*)>/2 + <p*, y0 - y*> - <p*, y(T) - y*>
///  - <y(T) - y*, Pi (y(T) - y*)>/2`.
///
/// The term `<p*, y0 - y*>` comes from integrating
/// `l(y, u) - v* - l0(y - y*, u - u*) = -<p*, d/dt (y - y*)>`; it vanishes
/// only when the trajectory starts on the turnpike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticCost {
    pub horizon: f64,
    pub cost: f64,
    /// Closed form with the discrete stationary Riccati solution.
    pub formula: f64,
    /// Closed form with the CARE solution.
    pub formula_care: f64,
}

impl AsymptoticCost {
    pub fn mismatch(&self) -> f64 {
        (self.cost - self.formula).abs()
    }

    pub fn mismatch_care(&self) -> f64 {
        (self.cost - self.formula_care).abs()
    }
}

pub fn asymptotic_cost_check(
    data: &ProblemData,
    steady: &SteadyState,
    care: &CareSolution,
    discrete: &DiscreteCare,
    horizon: f64,
) -> Result<AsymptoticCost> {
    let grid = Grid::new(0.0, horizon, discrete.h)?;
    let traj = overtaking_solution(data, steady, discrete, &grid)?;
    let n = data.n();
    let cost = total_cost(data, &traj, &DMatrix::zeros(n, n), &DVector::zeros(n)).total;
    let start = &data.y0 - &steady.y_star;
    let end = traj.final_state() - &steady.y_star;
    let formula = |pi: &DMatrix<f64>| {
        horizon * steady.v_star + 0.5 * start.dot(&(pi * &start)) + steady.p_star.dot(&start)
            - steady.p_star.dot(&end)
            - 0.5 * end.dot(&(pi * &end))
    };
    Ok(AsymptoticCost {
        horizon,
        cost,
        formula: formula(&discrete.pi),
        formula_care: formula(&care.pi),
    })
}
