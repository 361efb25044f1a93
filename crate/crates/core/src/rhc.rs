//! Receding-horizon control: the finite-horizon algorithm (sub-problems on
//! `(n tau, n tau + T)` with a turnpike-based terminal cost, then one final
//! solve with the true terminal pair), its infinite-horizon counterpart, and
//! the error / rho / sweep harness around them.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::lq::{solve_lq, LqPolicy, LqSolution, SegmentProblem};
use crate::model::{fmt_f64, l2_distance, total_cost, Grid, ProblemData, Trajectory};
use crate::riccati::{solve_care, CareSolution, DiscreteCare, FlowCache, RiccatiFlow};
use crate::turnpike::{overtaking_solution, solve_static, SteadyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminalMode {
    Zero,
    Constant,
    Exact,
}

impl std::fmt::Display for TerminalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TerminalMode::Zero => "zero",
            TerminalMode::Constant => "constant",
            TerminalMode::Exact => "exact",
        })
    }
}

/// Terminal cost of the sub-problems,
/// `phi(t, y) = <y - y*, Pi~ (y - y*)>/2 + <G~ q~, y> + <p~, y>`.
///
/// `Zero` is `Pi~ = G~ = 0`; `Exact` uses `Pi~ = Pi(T_bar - t, Q)`,
/// `G~ = G(T_bar - t, Q)` and `p~ = p*`, which makes `phi` the exact
/// cost-to-go.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCostSpec {
    Zero {
        p_tilde: DVector<f64>,
    },
    Constant {
        pi_tilde: DMatrix<f64>,
        g_tilde: DMatrix<f64>,
        p_tilde: DVector<f64>,
    },
    Exact,
}

impl TerminalCostSpec {
    pub fn zero(p_tilde: DVector<f64>) -> Self {
        TerminalCostSpec::Zero { p_tilde }
    }

    pub fn constant(pi_tilde: DMatrix<f64>, g_tilde: DMatrix<f64>, p_tilde: DVector<f64>) -> Self {
        TerminalCostSpec::Constant {
            pi_tilde,
            g_tilde,
            p_tilde,
        }
    }

    pub fn mode(&self) -> TerminalMode {
        match self {
            TerminalCostSpec::Zero { .. } => TerminalMode::Zero,
            TerminalCostSpec::Constant { .. } => TerminalMode::Constant,
            TerminalCostSpec::Exact => TerminalMode::Exact,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            TerminalCostSpec::Zero { p_tilde } => check_len(p_tilde, n),
            TerminalCostSpec::Constant {
                pi_tilde,
                g_tilde,
                p_tilde,
            } => {
                check_len(p_tilde, n)?;
                if pi_tilde.shape() != (n, n) || g_tilde.shape() != (n, n) {
                    return Err(Error::Dimension(format!("terminal matrices must be {n}x{n}")));
                }
                let scale = pi_tilde.amax().max(1.0);
                if linalg::asymmetry(pi_tilde) > 1e-12 * scale {
                    return Err(Error::invalid("pi_tilde", "must be symmetric"));
                }
                if linalg::min_sym_eigenvalue(pi_tilde) < -1e-10 * scale {
                    return Err(Error::invalid("pi_tilde", "must be positive semi-definite"));
                }
                Ok(())
            }
            TerminalCostSpec::Exact => Ok(()),
        }
    }
}

fn check_len(v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!("p_tilde has length {}, expected {n}", v.len())));
    }
    Ok(())
}

/// Evaluable terminal cost.
#[derive(Debug, Clone)]
pub struct TerminalCost {
    spec: TerminalCostSpec,
    y_star: DVector<f64>,
    p_star: DVector<f64>,
    q_tilde: DVector<f64>,
    t_bar: f64,
    flow: Option<Arc<RiccatiFlow>>,
}

/// `phi(t, y) = <y, weight y>/2 + <linear, y> + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPair {
    pub weight: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

/// The flow must start at `Q` and reach `T_bar` (as time-to-go) for the
/// `Exact` mode; other modes ignore it.
pub fn build_terminal_cost(
    spec: &TerminalCostSpec,
    steady: &SteadyState,
    t_bar: f64,
    flow: Option<Arc<RiccatiFlow>>,
) -> Result<TerminalCost> {
    spec.validate(steady.y_star.len())?;
    if spec.mode() == TerminalMode::Exact && flow.is_none() {
        return Err(Error::Rhc("exact terminal mode needs a Riccati flow".into()));
    }
    Ok(TerminalCost {
        spec: spec.clone(),
        y_star: steady.y_star.clone(),
        p_star: steady.p_star.clone(),
        q_tilde: steady.q_tilde.clone(),
        t_bar,
        flow,
    })
}

impl TerminalCost {
    pub fn spec(&self) -> &TerminalCostSpec {
        &self.spec
    }

    /// Whether `phi` does not depend on `t`.
    pub fn is_stationary(&self) -> bool {
        self.spec.mode() != TerminalMode::Exact
    }

    pub fn quadratic_pair(&self, t: f64) -> Result<QuadraticPair> {
        let n = self.y_star.len();
        let (pi, gq, p) = match &self.spec {
            TerminalCostSpec::Zero { p_tilde } => (DMatrix::zeros(n, n), DVector::zeros(n), p_tilde.clone()),
            TerminalCostSpec::Constant {
                pi_tilde,
                g_tilde,
                p_tilde,
            } => (pi_tilde.clone(), g_tilde * &self.q_tilde, p_tilde.clone()),
            TerminalCostSpec::Exact => {
                let flow = self.flow.as_ref().expect("checked at construction");
                let ttg = self.t_bar - t;
                let reach = flow.steps() as f64 * flow.h;
                if ttg < -1e-10 * self.t_bar.max(1.0) || ttg > reach * (1.0 + 1e-12) + 1e-12 {
                    return Err(Error::Rhc(format!(
                        "time-to-go {ttg} outside the Riccati flow (computed up to {reach})"
                    )));
                }
                let ttg = ttg.max(0.0);
                (flow.pi_at(ttg).clone(), flow.g_at(ttg) * &self.q_tilde, self.p_star.clone())
            }
        };
        let linear = gq + p - &pi * &self.y_star;
        let constant = 0.5 * self.y_star.dot(&(&pi * &self.y_star));
        Ok(QuadraticPair {
            weight: pi,
            linear,
            constant,
        })
    }

    pub fn value(&self, t: f64, y: &DVector<f64>) -> Result<f64> {
        let pair = self.quadratic_pair(t)?;
        Ok(0.5 * y.dot(&(&pair.weight * y)) + pair.linear.dot(y) + pair.constant)
    }

    pub fn gradient(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let pair = self.quadratic_pair(t)?;
        Ok(&pair.weight * y + pair.linear)
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct RhcConfig {
    pub tau: f64,
    pub T: f64,
    pub N: usize,
    pub terminal: TerminalCostSpec,
    pub h: f64,
}

/// `N = floor((T_bar - 2T) / tau)`, clamped at zero.
#[allow(non_snake_case)]
pub fn default_iterations(tau: f64, T: f64, T_bar: f64) -> usize {
    let n = ((T_bar - 2.0 * T) / tau + 1e-9).floor();
    if n > 0.0 {
        n as usize
    } else {
        0
    }
}

/// Step counts of a validated configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Steps {
    tau: usize,
    horizon: usize,
    total: usize,
}

impl RhcConfig {
    #[allow(non_snake_case)]
    pub fn new(tau: f64, T: f64, N: usize, terminal: TerminalCostSpec, h: f64) -> Self {
        RhcConfig { tau, T, N, terminal, h }
    }

    /// Configuration with the default iteration count for horizon `T_bar`.
    #[allow(non_snake_case)]
    pub fn with_default_n(tau: f64, T: f64, terminal: TerminalCostSpec, h: f64, T_bar: f64) -> Self {
        Self::new(tau, T, default_iterations(tau, T, T_bar), terminal, h)
    }

    /// Checks `0 < tau <= T`, grid alignment and, for a finite horizon
    /// `T_bar`, `N tau + T <= T_bar`.
    #[allow(non_snake_case)]
    pub fn validate(&self, T_bar: Option<f64>) -> Result<()> {
        self.steps(T_bar).map(|_| ())
    }

    #[allow(non_snake_case)]
    fn steps(&self, T_bar: Option<f64>) -> Result<Steps> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::invalid("h", "h must be positive"));
        }
        if !(self.tau > 0.0) {
            return Err(Error::invalid("tau", format!("must be positive, got {}", self.tau)));
        }
        if !(self.tau <= self.T) {
            return Err(Error::invalid("tau", format!("tau = {} exceeds T = {}", self.tau, self.T)));
        }
        let tau = crate::model::steps_for(self.tau, self.h, "tau")?;
        let horizon = crate::model::steps_for(self.T, self.h, "T")?;
        let total = match T_bar {
            Some(t_bar) => {
                let total = crate::model::steps_for(t_bar, self.h, "T_bar")?;
                if self.N * tau + horizon > total {
                    return Err(Error::invalid(
                        "N",
                        format!("N tau + T = {} exceeds T_bar = {t_bar}", self.N as f64 * self.tau + self.T),
                    ));
                }
                total
            }
            None => self.N * tau,
        };
        Ok(Steps { tau, horizon, total })
    }
}

/// Errors of one receding-horizon iteration against the reference solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    /// `|y_RH(n tau) - y(n tau)|`
    pub handoff_error: f64,
    /// L2 error of the control on `(n tau, (n + 1) tau)`.
    pub segment_error: f64,
}

#[derive(Debug, Clone)]
pub struct RhcResult {
    pub traj: Trajectory,
    pub error_u: f64,
    pub error_y: f64,
    pub cost_gap: f64,
    pub per_iter: Vec<IterationRecord>,
}

/// `ln(error_u) + 2 lambda T - lambda tau`.
#[allow(non_snake_case)]
pub fn rho_statistic(error_u: f64, tau: f64, T: f64, lambda: f64) -> Result<f64> {
    if !(error_u > 0.0) {
        return Err(Error::Rhc(format!("rho is undefined for error {error_u}")));
    }
    Ok(error_u.ln() + 2.0 * lambda * T - lambda * tau)
}

/// Terminal-cost dependent factors of the error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// `|Pi~ - Pi(., Q)|_inf |y0 - y*|`
    pub k1: f64,
    /// `(|Pi~ - Pi(., Q)|_inf + |G~ - G(., Q)|_{inf, lambda}) |q~|`
    pub k2: f64,
    /// `|p~ - p*|`
    pub p_gap: f64,
}

/// Shared state of a family of runs on one problem: CARE and steady-state
/// solutions, cached Riccati flows and cached reference solutions.
pub struct Experiment {
    pub data: ProblemData,
    pub care: CareSolution,
    pub steady: SteadyState,
    flows: FlowCache,
    references: Mutex<HashMap<u64, Arc<LqSolution>>>,
    discrete: Mutex<HashMap<u64, Arc<DiscreteCare>>>,
}

impl Experiment {
    pub fn new(data: &ProblemData) -> Result<Self> {
        let care = solve_care(data)?;
        let steady = solve_static(data, &care)?;
        Ok(Self::from_parts(data, care, steady))
    }

    pub fn from_parts(data: &ProblemData, care: CareSolution, steady: SteadyState) -> Self {
        Experiment {
            data: data.clone(),
            care,
            steady,
            flows: FlowCache::new(data),
            references: Mutex::new(HashMap::new()),
            discrete: Mutex::new(HashMap::new()),
        }
    }

    fn data_at(&self, h: f64) -> ProblemData {
        ProblemData { h, ..self.data.clone() }
    }

    /// Optimal solution of the whole problem on the grid of step `h`.
    pub fn reference(&self, h: f64) -> Result<Arc<LqSolution>> {
        if let Some(r) = self.references.lock().unwrap().get(&h.to_bits()) {
            return Ok(Arc::clone(r));
        }
        let sol = Arc::new(solve_lq(&SegmentProblem::full_horizon(&self.data_at(h))?)?);
        Ok(Arc::clone(self.references.lock().unwrap().entry(h.to_bits()).or_insert(sol)))
    }

    /// Stationary discrete Riccati solution for step `h`.
    pub fn discrete_care(&self, h: f64) -> Result<Arc<DiscreteCare>> {
        if let Some(r) = self.discrete.lock().unwrap().get(&h.to_bits()) {
            return Ok(Arc::clone(r));
        }
        let disc = Arc::new(DiscreteCare::new(&self.data, &self.care, h)?);
        Ok(Arc::clone(self.discrete.lock().unwrap().entry(h.to_bits()).or_insert(disc)))
    }

    /// Riccati flow started at `Q` covering the whole horizon.
    pub fn flow(&self, h: f64) -> Result<Arc<RiccatiFlow>> {
        self.flows.get(&self.data.Q, self.data.T_bar, h)
    }

    pub fn terminal_cost(&self, spec: &TerminalCostSpec, h: f64) -> Result<TerminalCost> {
        let flow = match spec.mode() {
            TerminalMode::Exact => Some(self.flow(h)?),
            _ => None,
        };
        build_terminal_cost(spec, &self.steady, self.data.T_bar, flow)
    }

    /// Finite-horizon receding-horizon run, compared with the optimal
    /// solution on `[0, T_bar]`.
    pub fn run_finite(&self, cfg: &RhcConfig) -> Result<RhcResult> {
        let steps = cfg.steps(Some(self.data.T_bar))?;
        let data = self.data_at(cfg.h);
        let grid = data.grid()?;
        let phi = self.terminal_cost(&cfg.terminal, cfg.h)?;
        let reference = self.reference(cfg.h)?;

        let mut states = vec![data.y0.clone()];
        let mut controls = Vec::with_capacity(grid.steps);
        let mut stationary: Option<LqPolicy> = None;
        for n in 0..cfg.N {
            let k0 = n * steps.tau;
            let t_end = grid.time(k0 + steps.horizon);
            let owned;
            let policy = if phi.is_stationary() {
                if stationary.is_none() {
                    stationary = Some(policy_for(&data, &phi.quadratic_pair(t_end)?, steps.horizon, cfg.h)?);
                }
                stationary.as_ref().unwrap()
            } else {
                owned = policy_for(&data, &phi.quadratic_pair(t_end)?, steps.horizon, cfg.h)?;
                &owned
            };
            let piece = policy.rollout_prefix(states.last().unwrap(), grid.time(k0), steps.tau);
            states.extend(piece.states.into_iter().skip(1));
            controls.extend(piece.controls);
        }
        let k0 = cfg.N * steps.tau;
        let last = SegmentProblem::new(
            &data,
            states.last().unwrap().clone(),
            data.Q.clone(),
            data.q.clone(),
            Grid::with_steps(grid.time(k0), cfg.h, grid.steps - k0),
        )?;
        let tail = solve_lq(&last)?;
        states.extend(tail.traj.states.into_iter().skip(1));
        controls.extend(tail.traj.controls);

        let traj = Trajectory::new(grid, states, controls, None)?;
        let cost = total_cost(&data, &traj, &data.Q, &data.q).total;
        let mut result = compare(traj, &reference.traj, steps.tau, cfg.N)?;
        result.cost_gap = cost - reference.value;
        Ok(result)
    }

    /// Infinite-horizon receding-horizon run on `(0, N tau)` with a
    /// time-independent terminal cost, compared with the overtaking optimal
    /// solution on the same window.
    ///
    /// `cost_gap` compares the costs on the window completed by the exact
    /// cost-to-go `<y - y*, Pi_h (y - y*)>/2 + <p*, y - y*>`, so it is
    /// nonnegative.
    #[allow(non_snake_case)]
    pub fn run_infinite(&self, cfg: &RhcConfig, T_end: f64) -> Result<RhcResult> {
        let steps = cfg.steps(None)?;
        if let TerminalCostSpec::Constant { g_tilde, .. } = &cfg.terminal {
            if g_tilde.amax() != 0.0 {
                return Err(Error::Rhc("infinite-horizon terminal cost must have G~ = 0".into()));
            }
        }
        if cfg.terminal.mode() == TerminalMode::Exact {
            return Err(Error::Rhc("the infinite-horizon algorithm needs a time-independent terminal cost".into()));
        }
        let window = cfg.N as f64 * cfg.tau;
        if window > T_end * (1.0 + 1e-12) {
            return Err(Error::invalid("N", format!("N tau = {window} exceeds T_end = {T_end}")));
        }
        let data = self.data_at(cfg.h);
        let grid = Grid::with_steps(0.0, cfg.h, steps.total);
        let phi = self.terminal_cost(&cfg.terminal, cfg.h)?;
        let disc = self.discrete_care(cfg.h)?;
        let reference = overtaking_solution(&data, &self.steady, &disc, &grid)?;

        let policy = policy_for(&data, &phi.quadratic_pair(0.0)?, steps.horizon, cfg.h)?;
        let mut states = vec![data.y0.clone()];
        let mut controls = Vec::with_capacity(grid.steps);
        for n in 0..cfg.N {
            let piece = policy.rollout_prefix(states.last().unwrap(), grid.time(n * steps.tau), steps.tau);
            states.extend(piece.states.into_iter().skip(1));
            controls.extend(piece.controls);
        }
        let traj = Trajectory::new(grid, states, controls, None)?;
        let n = data.n();
        let zero = (DMatrix::zeros(n, n), DVector::zeros(n));
        let tail = |y: &DVector<f64>| {
            let d = y - &self.steady.y_star;
            0.5 * d.dot(&(&disc.pi * &d)) + self.steady.p_star.dot(&d)
        };
        let cost = total_cost(&data, &traj, &zero.0, &zero.1).total + tail(traj.final_state());
        let best = total_cost(&data, &reference, &zero.0, &zero.1).total + tail(reference.final_state());
        let mut result = compare(traj, &reference, steps.tau, cfg.N)?;
        result.cost_gap = cost - best;
        Ok(result)
    }

    /// `K1`, `K2` and `|p~ - p*|` for a terminal cost, with the suprema over
    /// time-to-go replaced by maxima over the grid nodes of `[0, T_bar]`.
    pub fn bound_constants(&self, spec: &TerminalCostSpec, h: f64) -> Result<BoundConstants> {
        spec.validate(self.data.n())?;
        let n = self.data.n();
        let (pi_tilde, g_tilde, p_tilde) = match spec {
            TerminalCostSpec::Exact => {
                return Ok(BoundConstants {
                    k1: 0.0,
                    k2: 0.0,
                    p_gap: 0.0,
                })
            }
            TerminalCostSpec::Zero { p_tilde } => (DMatrix::zeros(n, n), DMatrix::zeros(n, n), p_tilde),
            TerminalCostSpec::Constant {
                pi_tilde,
                g_tilde,
                p_tilde,
            } => (pi_tilde.clone(), g_tilde.clone(), p_tilde),
        };
        let flow = self.flow(h)?;
        let lambda = self.care.lambda;
        let mut pi_gap: f64 = 0.0;
        let mut g_gap: f64 = 0.0;
        for k in 0..=flow.steps() {
            let s = k as f64 * h;
            pi_gap = pi_gap.max(linalg::spectral_norm(&(&pi_tilde - &flow.p_seq[k])));
            g_gap = g_gap.max((lambda * s).exp() * linalg::spectral_norm(&(&g_tilde - &flow.g_seq[k])));
        }
        Ok(BoundConstants {
            k1: pi_gap * (&self.data.y0 - &self.steady.y_star).norm(),
            k2: (pi_gap + g_gap) * self.steady.q_tilde.norm(),
            p_gap: (p_tilde - &self.steady.p_star).norm(),
        })
    }

    /// `e^{-lambda (T - tau)} (e^{-lambda T} K1 + e^{-lambda (T_bar - (N tau + T))} K2 + N |p~ - p*|)`,
    /// the error bound with its constant set to one.
    pub fn predicted_bound(&self, cfg: &RhcConfig) -> Result<f64> {
        let k = self.bound_constants(&cfg.terminal, cfg.h)?;
        Ok(bound_from(&k, cfg, self.care.lambda, self.data.T_bar))
    }

    /// Runs every cell `tau <= T` of the grid, `tau`-major, on a pool of
    /// `jobs` threads. The output does not depend on `jobs`.
    pub fn sweep(&self, opts: &SweepOptions) -> Result<SweepTable> {
        let bound = self.bound_constants(&opts.terminal, opts.h)?;
        self.reference(opts.h)?;
        if opts.terminal.mode() == TerminalMode::Exact {
            self.flow(opts.h)?;
        }
        let cells: Vec<(f64, f64)> = opts
            .tau_list
            .iter()
            .flat_map(|&tau| opts.t_list.iter().filter(move |&&t| tau <= t).map(move |&t| (tau, t)))
            .collect();
        let run = |&(tau, t): &(f64, f64)| self.sweep_cell(tau, t, opts, &bound);
        let rows = if opts.jobs <= 1 {
            cells.iter().map(run).collect()
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.jobs)
                .build()
                .map_err(|e| Error::Rhc(format!("cannot start worker pool: {e}")))?
                .install(|| cells.par_iter().map(run).collect())
        };
        Ok(SweepTable {
            tau_list: opts.tau_list.clone(),
            t_list: opts.t_list.clone(),
            rows,
        })
    }

    #[allow(non_snake_case)]
    fn sweep_cell(&self, tau: f64, T: f64, opts: &SweepOptions, bound: &BoundConstants) -> SweepRow {
        let cfg = RhcConfig::with_default_n(tau, T, opts.terminal.clone(), opts.h, self.data.T_bar);
        let mut row = SweepRow {
            tau,
            T,
            N: cfg.N,
            error_u: f64::NAN,
            error_y: f64::NAN,
            cost_gap: f64::NAN,
            rho: f64::NAN,
            predicted_bound: f64::NAN,
            status: "ok".into(),
        };
        match self.run_finite(&cfg) {
            Ok(res) => {
                row.error_u = res.error_u;
                row.error_y = res.error_y;
                row.cost_gap = res.cost_gap;
                row.rho = rho_statistic(res.error_u, tau, T, self.care.lambda).unwrap_or(f64::NAN);
                row.predicted_bound = bound_from(bound, &cfg, self.care.lambda, self.data.T_bar);
            }
            Err(e) => row.status = format!("skipped: {e}"),
        }
        row
    }
}

#[allow(non_snake_case)]
fn bound_from(k: &BoundConstants, cfg: &RhcConfig, lambda: f64, T_bar: f64) -> f64 {
    let n = cfg.N as f64;
    (-lambda * (cfg.T - cfg.tau)).exp()
        * ((-lambda * cfg.T).exp() * k.k1 + (-lambda * (T_bar - (n * cfg.tau + cfg.T))).exp() * k.k2 + n * k.p_gap)
}

fn policy_for(data: &ProblemData, pair: &QuadraticPair, steps: usize, h: f64) -> Result<LqPolicy> {
    LqPolicy::new(data, &pair.weight, &pair.linear, steps, h)
}

/// Errors of `traj` against `reference` on the same grid.
fn compare(traj: Trajectory, reference: &Trajectory, tau_steps: usize, iterations: usize) -> Result<RhcResult> {
    let grid = traj.grid;
    let error_u = l2_distance(&traj.controls, &reference.controls, &grid)?;
    let error_y = l2_distance(&traj.states[1..], &reference.states[1..], &grid)?;
    let per_iter = (0..iterations)
        .map(|n| {
            let (a, b) = (n * tau_steps, (n + 1) * tau_steps);
            Ok(IterationRecord {
                n,
                handoff_error: (&traj.states[a] - &reference.states[a]).norm(),
                segment_error: l2_distance(&traj.controls[a..b], &reference.controls[a..b], &grid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RhcResult {
        traj,
        error_u,
        error_y,
        cost_gap: 0.0,
        per_iter,
    })
}

/// [`Experiment::run_finite`] without shared caches.
pub fn run_rhc_finite(data: &ProblemData, steady: &SteadyState, care: &CareSolution, cfg: &RhcConfig) -> Result<RhcResult> {
    Experiment::from_parts(data, care.clone(), steady.clone()).run_finite(cfg)
}

/// [`Experiment::run_infinite`] without shared caches.
#[allow(non_snake_case)]
pub fn run_rhc_infinite(
    data: &ProblemData,
    steady: &SteadyState,
    care: &CareSolution,
    cfg: &RhcConfig,
    T_end: f64,
) -> Result<RhcResult> {
    Experiment::from_parts(data, care.clone(), steady.clone()).run_infinite(cfg, T_end)
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub tau_list: Vec<f64>,
    pub t_list: Vec<f64>,
    pub terminal: TerminalCostSpec,
    pub h: f64,
    pub jobs: usize,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub T: f64,
    pub N: usize,
    pub error_u: f64,
    pub error_y: f64,
    pub cost_gap: f64,
    pub rho: f64,
    pub predicted_bound: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub tau_list: Vec<f64>,
    pub t_list: Vec<f64>,
    pub rows: Vec<SweepRow>,
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        fmt_f64(v)
    } else {
        String::new()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SweepTable {
    pub fn get(&self, tau: f64, t: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.tau == tau && r.T == t)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,T,N,error_u,error_y,cost_gap,rho,predicted_bound,status\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_f64(r.tau),
                fmt_f64(r.T),
                r.N,
                cell(r.error_u),
                cell(r.error_y),
                cell(r.cost_gap),
                cell(r.rho),
                cell(r.predicted_bound),
                csv_field(&r.status)
            );
        }
        out
    }

    fn matrix_csv(&self, value: impl Fn(&SweepRow) -> String) -> String {
        let mut out = String::from("tau\\T");
        for t in &self.t_list {
            let _ = write!(out, ",{}", fmt_f64(*t));
        }
        out.push('\n');
        for tau in &self.tau_list {
            out.push_str(&fmt_f64(*tau));
            for t in &self.t_list {
                out.push(',');
                if let Some(r) = self.get(*tau, *t) {
                    out.push_str(&value(r));
                }
            }
            out.push('\n');
        }
        out
    }

    /// `error_u` with `tau` rows and `T` columns; cells with `tau > T` blank.
    pub fn error_matrix_csv(&self) -> String {
        self.matrix_csv(|r| cell(r.error_u))
    }

    /// `100 rho` rounded to integers, laid out as [`SweepTable::error_matrix_csv`].
    pub fn rho_matrix_csv(&self) -> String {
        self.matrix_csv(|r| {
            if r.rho.is_finite() {
                format!("{}", (100.0 * r.rho).round() as i64)
            } else {
                String::new()
            }
        })
    }
}
