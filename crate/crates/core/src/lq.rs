//! Finite-horizon linear-quadratic solves on one segment.
//!
//! The discrete problem is
//!
//! ```text
//! min  h sum_{k=1..K} l(y_k, u_k) + <y_K, Q y_K>/2 + <q, y_K>
//! s.t. y_k = y_{k-1} + h (A y_k + B u_k + f),   y_0 = y_init
//! ```
//!
//! and its exact KKT system, with the costate `p_k` the gradient of the
//! cost-to-go at node `k`, reads
//!
//! ```text
//! (p_{k-1} - p_k) / h = A^T p_{k-1} + C^T C y_k + g
//! alpha u_k + B^T p_{k-1} = -h
//! p_K - Q y_K = q
//! ```
//!
//! [`solve_lq`] solves it with an affine Riccati sweep `p_k = P_k y_k + s_k`;
//! [`reduced_gradient_solve`] minimizes the reduced cost over the controls
//! with L-BFGS, the gradient coming from the same adjoint recursion.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{total_cost, Grid, ProblemData, Trajectory};
use crate::riccati::ImplicitEuler;

type Path = Vec<DVector<f64>>;

/// One finite-horizon problem: dynamics and running cost from `data`
/// (its `Q`, `q`, `y0`, `T_bar` are ignored), plus initial state, terminal
/// pair and grid.
#[derive(Debug, Clone)]
pub struct SegmentProblem {
    pub data: ProblemData,
    pub y_init: DVector<f64>,
    pub terminal_weight: DMatrix<f64>,
    pub terminal_linear: DVector<f64>,
    pub grid: Grid,
}

impl SegmentProblem {
    pub fn new(
        data: &ProblemData,
        y_init: DVector<f64>,
        terminal_weight: DMatrix<f64>,
        terminal_linear: DVector<f64>,
        grid: Grid,
    ) -> Result<Self> {
        let seg = SegmentProblem {
            data: data.clone(),
            y_init,
            terminal_weight,
            terminal_linear,
            grid,
        };
        seg.validate()?;
        Ok(seg)
    }

    /// The whole problem `(P)` on `[0, T_bar]`.
    pub fn full_horizon(data: &ProblemData) -> Result<Self> {
        Self::new(data, data.y0.clone(), data.Q.clone(), data.q.clone(), data.grid()?)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.check_dimensions()?;
        let n = self.data.n();
        if self.y_init.len() != n || self.terminal_linear.len() != n || self.terminal_weight.shape() != (n, n) {
            return Err(Error::Dimension("segment initial state or terminal pair has wrong size".into()));
        }
        if !(self.data.alpha > 0.0) {
            return Err(Error::Lq(format!("ill-posed segment: alpha = {}", self.data.alpha)));
        }
        if linalg::asymmetry(&self.terminal_weight) > 1e-12 || linalg::min_sym_eigenvalue(&self.terminal_weight) < -1e-10 {
            return Err(Error::Lq("terminal weight must be symmetric positive semi-definite".into()));
        }
        if self.grid.steps == 0 {
            return Err(Error::Lq("segment grid has no steps".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LqSolution {
    pub traj: Trajectory,
    pub value: f64,
    pub kkt_residual: f64,
}

impl LqSolution {
    pub fn controls(&self) -> &[DVector<f64>] {
        &self.traj.controls
    }

    pub fn costates(&self) -> &[DVector<f64>] {
        self.traj.costates.as_deref().expect("LQ solutions carry costates")
    }
}

/// Backward sweep of one segment: feedback `u_k = -K_k y_{k-1} + v_k` and
/// costate representation `p_k = P_k y_k + s_k`.
///
/// The sweep does not depend on the initial state, so one policy serves any
/// number of rollouts with the same terminal data.
#[derive(Debug, Clone)]
pub struct LqPolicy {
    scheme: ImplicitEuler,
    h_mf: DVector<f64>,
    feedback: Vec<DMatrix<f64>>,
    feedforward: Vec<DVector<f64>>,
    pub p_seq: Vec<DMatrix<f64>>,
    pub s_seq: Vec<DVector<f64>>,
}

impl LqPolicy {
    pub fn new(
        data: &ProblemData,
        terminal_weight: &DMatrix<f64>,
        terminal_linear: &DVector<f64>,
        steps: usize,
        h: f64,
    ) -> Result<Self> {
        let scheme = ImplicitEuler::new(data, h)?;
        let h_mf = &scheme.m * &data.f_star * h;
        let h_g = &data.g_star * h;
        let h_hs = &data.h_star * h;

        let mut p_seq = vec![terminal_weight.clone(); steps + 1];
        let mut s_seq = vec![terminal_linear.clone(); steps + 1];
        let mut feedback = Vec::with_capacity(steps);
        let mut feedforward = Vec::with_capacity(steps);
        for k in (1..=steps).rev() {
            let gains = scheme.step(&p_seq[k]);
            let w = &scheme.h_ctc + &p_seq[k];
            let w_lin = &h_g + &s_seq[k];
            let l_hmf = &gains.l * &h_mf;
            let wc_hmf = &w * &h_mf - &w * &scheme.e * &l_hmf;
            let s_prev = scheme.m.transpose() * (wc_hmf - gains.l.transpose() * &h_hs) + &gains.adjoint * &w_lin;
            let v = -(l_hmf + &gains.r_inv * (scheme.e.transpose() * &w_lin + &h_hs));
            feedback.push(&gains.l * &scheme.m);
            feedforward.push(v);
            p_seq[k - 1] = gains.p_prev;
            s_seq[k - 1] = s_prev;
        }
        feedback.reverse();
        feedforward.reverse();
        Ok(LqPolicy {
            scheme,
            h_mf,
            feedback,
            feedforward,
            p_seq,
            s_seq,
        })
    }

    pub fn steps(&self) -> usize {
        self.feedback.len()
    }

    /// Closed-loop trajectory from `y_init` on a grid starting at `t0`.
    pub fn rollout(&self, y_init: &DVector<f64>, t0: f64) -> Trajectory {
        self.rollout_prefix(y_init, t0, self.steps())
    }

    /// The first `steps` steps of [`LqPolicy::rollout`].
    pub fn rollout_prefix(&self, y_init: &DVector<f64>, t0: f64, steps: usize) -> Trajectory {
        let steps = steps.min(self.steps());
        let mut states = Vec::with_capacity(steps + 1);
        let mut controls = Vec::with_capacity(steps);
        states.push(y_init.clone());
        for k in 0..steps {
            let y = &states[k];
            let u = &self.feedforward[k] - &self.feedback[k] * y;
            let next = &self.scheme.m * y + &self.scheme.e * &u + &self.h_mf;
            controls.push(u);
            states.push(next);
        }
        let costates = states
            .iter()
            .zip(self.p_seq.iter().zip(&self.s_seq))
            .map(|(y, (p, s))| p * y + s)
            .collect();
        Trajectory {
            grid: Grid::with_steps(t0, self.scheme.h, steps),
            states,
            controls,
            costates: Some(costates),
        }
    }
}

/// Maximum violation of the discrete optimality system.
#[allow(non_snake_case)]
pub fn kkt_residual(
    data: &ProblemData,
    traj: &Trajectory,
    Qterm: &DMatrix<f64>,
    qterm: &DVector<f64>,
    y_init: &DVector<f64>,
) -> f64 {
    let Some(p) = traj.costates.as_ref() else {
        return f64::INFINITY;
    };
    let h = traj.grid.h;
    let y = &traj.states;
    let u = &traj.controls;
    let ctc = data.C.transpose() * &data.C;
    let at = data.A.transpose();
    let bt = data.B.transpose();
    let mut worst = (&y[0] - y_init).amax();
    for k in 1..=traj.grid.steps {
        let state = (&y[k] - &y[k - 1]) / h - (&data.A * &y[k] + &data.B * &u[k - 1] + &data.f_star);
        let adjoint = (&p[k - 1] - &p[k]) / h - (&at * &p[k - 1] + &ctc * &y[k] + &data.g_star);
        let control = &u[k - 1] * data.alpha + &bt * &p[k - 1] + &data.h_star;
        worst = worst.max(state.amax()).max(adjoint.amax()).max(control.amax());
    }
    let terminal = &p[traj.grid.steps] - Qterm * &y[traj.grid.steps] - qterm;
    worst.max(terminal.amax())
}

/// Magnitude of the data and solution, for relative residual checks.
pub fn kkt_scale(seg: &SegmentProblem, traj: &Trajectory) -> f64 {
    let d = &seg.data;
    let mut s = [
        d.A.amax(),
        d.B.amax(),
        d.C.amax().powi(2),
        d.alpha,
        d.f_star.amax(),
        d.g_star.amax(),
        d.h_star.amax(),
        seg.terminal_weight.amax(),
        seg.terminal_linear.amax(),
        seg.y_init.amax(),
    ]
    .into_iter()
    .fold(0.0_f64, f64::max);
    for v in traj.states.iter().chain(traj.costates.iter().flatten()) {
        s = s.max(v.amax());
    }
    s
}

/// Solves the segment through the affine Riccati sweep.
pub fn solve_lq(seg: &SegmentProblem) -> Result<LqSolution> {
    seg.validate()?;
    let policy = LqPolicy::new(&seg.data, &seg.terminal_weight, &seg.terminal_linear, seg.grid.steps, seg.grid.h)?;
    Ok(finish(seg, policy.rollout(&seg.y_init, seg.grid.t0)))
}

fn finish(seg: &SegmentProblem, traj: Trajectory) -> LqSolution {
    let value = total_cost(&seg.data, &traj, &seg.terminal_weight, &seg.terminal_linear).total;
    let kkt_residual = kkt_residual(&seg.data, &traj, &seg.terminal_weight, &seg.terminal_linear, &seg.y_init);
    LqSolution {
        traj,
        value,
        kkt_residual,
    }
}

/// Optimal value and its gradient with respect to the initial state, which
/// is the initial costate.
pub fn value_and_gradient(seg: &SegmentProblem) -> Result<(f64, DVector<f64>)> {
    let sol = solve_lq(seg)?;
    let grad = sol.costates()[0].clone();
    Ok((sol.value, grad))
}

/// Forward implicit-Euler rollout of a given control sequence.
pub fn rollout_controls(data: &ProblemData, y_init: &DVector<f64>, controls: &[DVector<f64>], grid: Grid) -> Result<Trajectory> {
    let scheme = ImplicitEuler::new(data, grid.h)?;
    let h_mf = &scheme.m * &data.f_star * grid.h;
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(y_init.clone());
    for u in controls {
        let y = states.last().unwrap();
        states.push(&scheme.m * y + &scheme.e * u + &h_mf);
    }
    Trajectory::new(grid, states, controls.to_vec(), None)
}

struct ReducedCost<'a> {
    seg: &'a SegmentProblem,
    scheme: ImplicitEuler,
    h_mf: DVector<f64>,
    ctc: DMatrix<f64>,
}

impl<'a> ReducedCost<'a> {
    fn new(seg: &'a SegmentProblem) -> Result<Self> {
        let scheme = ImplicitEuler::new(&seg.data, seg.grid.h)?;
        let h_mf = &scheme.m * &seg.data.f_star * seg.grid.h;
        let ctc = seg.data.C.transpose() * &seg.data.C;
        Ok(ReducedCost { seg, scheme, h_mf, ctc })
    }

    /// States, costates and the L2 gradient `alpha u_k + h + B^T p_{k-1}`.
    /// With `affine = false` the data `y_init, f, g, h, q` are dropped, which
    /// turns the gradient into a Hessian-vector product.
    fn evaluate(&self, u: &[DVector<f64>], affine: bool) -> (Path, Path, Path) {
        let d = &self.seg.data;
        let n = d.n();
        let k_max = u.len();
        let mut y = Vec::with_capacity(k_max + 1);
        y.push(if affine { self.seg.y_init.clone() } else { DVector::zeros(n) });
        for uk in u {
            let mut next = &self.scheme.m * y.last().unwrap() + &self.scheme.e * uk;
            if affine {
                next += &self.h_mf;
            }
            y.push(next);
        }
        let mut p = vec![DVector::zeros(n); k_max + 1];
        p[k_max] = &self.seg.terminal_weight * &y[k_max];
        if affine {
            p[k_max] += &self.seg.terminal_linear;
        }
        let h = self.seg.grid.h;
        for k in (1..=k_max).rev() {
            let mut src = &p[k] + &self.ctc * &y[k] * h;
            if affine {
                src += &d.g_star * h;
            }
            p[k - 1] = self.scheme.m.transpose() * src;
        }
        let bt = d.B.transpose();
        let grad = u
            .iter()
            .enumerate()
            .map(|(k, uk)| {
                let mut g = uk * d.alpha + &bt * &p[k];
                if affine {
                    g += &d.h_star;
                }
                g
            })
            .collect();
        (y, p, grad)
    }
}

fn inner(h: f64, a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    h * a.iter().zip(b).map(|(x, y)| x.dot(y)).sum::<f64>()
}

fn axpy(a: f64, x: &[DVector<f64>], y: &mut [DVector<f64>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.axpy(a, xi, 1.0);
    }
}

/// L2 norm of the reduced gradient at the given controls.
pub fn reduced_gradient_norm(seg: &SegmentProblem, controls: &[DVector<f64>]) -> Result<f64> {
    let cost = ReducedCost::new(seg)?;
    let (_, _, g) = cost.evaluate(controls, true);
    Ok(inner(seg.grid.h, &g, &g).sqrt())
}

#[derive(Debug, Clone)]
pub struct ReducedGradientSolution {
    pub solution: LqSolution,
    pub iterations: usize,
    pub gradient_norm: f64,
}

const LBFGS_MEMORY: usize = 20;

/// Minimizes the reduced cost with L-BFGS in the discrete L2 inner product,
/// stopping once the L2 norm of the gradient is at most `tol`.
///
/// The reduced cost is quadratic, so the step length along each search
/// direction is computed exactly from one Hessian-vector product.
pub fn reduced_gradient_solve(seg: &SegmentProblem, tol: f64) -> Result<ReducedGradientSolution> {
    seg.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "tolerance must be positive"));
    }
    let cost = ReducedCost::new(seg)?;
    let h = seg.grid.h;
    let steps = seg.grid.steps;
    let m = seg.data.m();
    let max_iter = 10 * steps * m;

    let mut u = vec![DVector::zeros(m); steps];
    let (_, _, mut g) = cost.evaluate(&u, true);
    let mut gnorm = inner(h, &g, &g).sqrt();
    let mut history: std::collections::VecDeque<(Path, Path, f64)> = Default::default();
    let mut iterations = 0;

    while gnorm > tol {
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
        iterations += 1;

        // two-loop recursion
        let mut d: Vec<DVector<f64>> = g.iter().map(|x| -x).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * inner(h, s, &d);
            axpy(-a, y, &mut d);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = inner(h, s, y) / inner(h, y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * inner(h, y, &d);
            axpy(a - b, s, &mut d);
        }

        let (_, _, hd) = cost.evaluate(&d, false);
        let curvature = inner(h, &d, &hd);
        let slope = inner(h, &g, &d);
        if !(curvature > 0.0) || !(slope < 0.0) {
            // lost descent; restart from steepest descent
            history.clear();
            continue;
        }
        let t = -slope / curvature;
        axpy(t, &d, &mut u);
        let (_, _, g_new) = cost.evaluate(&u, true);
        let s: Vec<DVector<f64>> = d.iter().map(|x| x * t).collect();
        let y: Vec<DVector<f64>> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = inner(h, &s, &y);
        if sy > 0.0 {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        g = g_new;
        gnorm = inner(h, &g, &g).sqrt();
    }

    let (states, costates, _) = cost.evaluate(&u, true);
    let traj = Trajectory::new(seg.grid, states, u, Some(costates))?;
    Ok(ReducedGradientSolution {
        solution: finish(seg, traj),
        iterations,
        gradient_norm: gnorm,
    })
}
