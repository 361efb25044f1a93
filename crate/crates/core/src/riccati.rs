//! Algebraic and discrete Riccati machinery.
//!
//! [`solve_care`] returns the stabilizing solution `Pi` of the continuous
//! algebraic Riccati equation
//! `A^T Pi + Pi A + C^T C - (1/alpha) Pi B B^T Pi = 0`, the closed-loop
//! matrix `A_pi = A - (1/alpha) B B^T Pi` and the decay rate `lambda`
//! (the negated spectral abscissa of `A_pi`).
//!
//! The finite-horizon operators `Pi(T, Q)` and `G(T, Q)` are produced by the
//! backward sweep of the implicit-Euler discretization ([`ImplicitEuler`]),
//! which is the same recursion the LQ solver uses. Its fixed point
//! ([`DiscreteCare`]) is the discrete counterpart of `Pi`; it differs from the
//! CARE solution by `O(h)` and is the matrix for which the discrete identities
//! (`Pi(T, Pi) = Pi`, exactness of receding horizon with the true value
//! function) hold to round-off.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ProblemData;

#[derive(Debug, Clone)]
pub struct CareSolution {
    pub pi: DMatrix<f64>,
    pub a_pi: DMatrix<f64>,
    pub lambda: f64,
    /// `(1/alpha) B^T Pi`.
    pub gain: DMatrix<f64>,
    pub eig_a_pi: Vec<Complex<f64>>,
    /// Frobenius norm of the CARE residual at `pi`.
    pub residual: f64,
}

/// Frobenius norm of `A^T X + X A + C^T C - (1/alpha) X B B^T X`.
pub fn care_residual(data: &ProblemData, x: &DMatrix<f64>) -> f64 {
    let s = &data.B * data.B.transpose() / data.alpha;
    let r = data.A.transpose() * x + x * &data.A + data.C.transpose() * &data.C - x * s * x;
    r.norm()
}

/// Stabilizing solution of the CARE via the ordered real Schur form of the
/// Hamiltonian, refined by Newton-Kleinman iterations.
pub fn solve_care(data: &ProblemData) -> Result<CareSolution> {
    data.check_dimensions()?;
    if !(data.alpha > 0.0) {
        return Err(Error::invalid("alpha", "alpha must be positive"));
    }
    let n = data.n();
    let s = &data.B * data.B.transpose() / data.alpha;
    let ctc = data.C.transpose() * &data.C;

    let mut ham = DMatrix::<f64>::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(&data.A);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&s));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-&ctc));
    ham.view_mut((n, n), (n, n)).copy_from(&(-data.A.transpose()));

    let scale = 1.0 + ham.amax();
    if let Some(z) = linalg::eigenvalues(&ham).iter().find(|z| z.re.abs() <= 1e-10 * scale) {
        return Err(Error::Riccati(format!(
            "Hamiltonian has an eigenvalue on the imaginary axis ({z}); no stabilizing solution"
        )));
    }
    let (u, _t, k) = linalg::ordered_real_schur(&ham, |re| re < 0.0)?;
    if k != n {
        return Err(Error::Riccati(format!(
            "stable invariant subspace has dimension {k}, expected {n}"
        )));
    }
    let u11 = u.view((0, 0), (n, n)).clone_owned();
    let u21 = u.view((n, 0), (n, n)).clone_owned();
    let pi_t = u11
        .transpose()
        .lu()
        .solve(&u21.transpose())
        .ok_or_else(|| Error::Riccati("stable subspace basis is singular".into()))?;
    let mut pi = linalg::symmetrize(&pi_t.transpose());
    let mut residual = care_residual(data, &pi);

    for _ in 0..20 {
        if residual <= 1e-13 * (1.0 + pi.norm_squared()) {
            break;
        }
        let ak = &data.A - &s * &pi;
        let rhs = &ctc + &pi * &s * &pi;
        let next = match linalg::solve_lyapunov(&ak, &rhs) {
            Ok(x) => linalg::symmetrize(&x),
            Err(_) => break,
        };
        let next_res = care_residual(data, &next);
        if !(next_res < residual) {
            break;
        }
        pi = next;
        residual = next_res;
    }

    if linalg::min_sym_eigenvalue(&pi) < -1e-10 {
        return Err(Error::Riccati("CARE solution is not positive semi-definite".into()));
    }
    let a_pi = &data.A - &s * &pi;
    let eig_a_pi = linalg::eigenvalues(&a_pi);
    let lambda = -eig_a_pi.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if !(lambda > 0.0) {
        return Err(Error::Riccati(format!("closed loop is not stable (lambda = {lambda})")));
    }
    let gain = data.B.transpose() * &pi / data.alpha;
    Ok(CareSolution {
        pi,
        a_pi,
        lambda,
        gain,
        eig_a_pi,
        residual,
    })
}

/// `-max Re(sigma(A_pi))`, required to be positive.
pub fn decay_rate(care: &CareSolution) -> Result<f64> {
    let lambda = -linalg::spectral_abscissa(&care.a_pi);
    if lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(Error::Riccati(format!("nonpositive decay rate {lambda}; CARE solution is not stabilizing")))
    }
}

/// One-step operators of the implicit-Euler transcription
/// `y_k = M (y_{k-1} + h B u_k + h f)`, `M = (I - h A)^{-1}`.
#[derive(Debug, Clone)]
pub struct ImplicitEuler {
    pub h: f64,
    pub alpha: f64,
    /// `(I - h A)^{-1}`
    pub m: DMatrix<f64>,
    /// `h M B`
    pub e: DMatrix<f64>,
    /// `h C^T C`
    pub h_ctc: DMatrix<f64>,
}

/// Quantities of one backward Riccati step from node `k` to node `k - 1`.
#[derive(Debug, Clone)]
pub struct StepGains {
    /// Cost-to-go Hessian at node `k - 1`.
    pub p_prev: DMatrix<f64>,
    /// `R^{-1} E^T W`, with `W = h C^T C + P_k`, `R = h alpha I + E^T W E`.
    pub l: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    /// `M^T (I - L^T E^T)`: maps the linear cost-to-go term backward.
    pub adjoint: DMatrix<f64>,
}

impl ImplicitEuler {
    pub fn new(data: &ProblemData, h: f64) -> Result<Self> {
        let n = data.n();
        let m = (DMatrix::<f64>::identity(n, n) - &data.A * h)
            .try_inverse()
            .ok_or_else(|| Error::invalid("h", format!("I - h A is singular for h = {h}")))?;
        let e = &m * &data.B * h;
        Ok(ImplicitEuler {
            h,
            alpha: data.alpha,
            m,
            e,
            h_ctc: data.C.transpose() * &data.C * h,
        })
    }

    pub fn step(&self, p: &DMatrix<f64>) -> StepGains {
        let nu = self.e.ncols();
        let w = &self.h_ctc + p;
        let we = &w * &self.e;
        let r = DMatrix::<f64>::identity(nu, nu) * (self.h * self.alpha) + self.e.transpose() * &we;
        let r_inv = linalg::symmetrize(&r.try_inverse().expect("h alpha I + E^T W E is positive definite"));
        let l = &r_inv * we.transpose();
        let wc = &w - &we * &l;
        let p_prev = linalg::symmetrize(&(self.m.transpose() * wc * &self.m));
        let n = w.nrows();
        let adjoint = self.m.transpose() * (DMatrix::<f64>::identity(n, n) - l.transpose() * self.e.transpose());
        StepGains {
            p_prev,
            l,
            r_inv,
            adjoint,
        }
    }
}

/// `Pi(k h, Q_T)` and `G(k h, Q_T)` for `k = 0..=K`, indexed by time-to-go.
#[derive(Debug, Clone)]
pub struct RiccatiFlow {
    pub q_t: DMatrix<f64>,
    pub h: f64,
    pub p_seq: Vec<DMatrix<f64>>,
    pub g_seq: Vec<DMatrix<f64>>,
}

impl RiccatiFlow {
    pub fn steps(&self) -> usize {
        self.p_seq.len() - 1
    }

    fn index(&self, time_to_go: f64) -> usize {
        let k = (time_to_go / self.h).round();
        assert!(
            k >= 0.0 && (k as usize) <= self.steps(),
            "time-to-go {time_to_go} outside the computed flow"
        );
        k as usize
    }

    /// `Pi(s, Q_T)`; `s` is rounded to the nearest grid multiple.
    pub fn pi_at(&self, time_to_go: f64) -> &DMatrix<f64> {
        &self.p_seq[self.index(time_to_go)]
    }

    pub fn g_at(&self, time_to_go: f64) -> &DMatrix<f64> {
        &self.g_seq[self.index(time_to_go)]
    }

    fn extend(&mut self, scheme: &ImplicitEuler, steps: usize) {
        while self.steps() < steps {
            let gains = scheme.step(self.p_seq.last().unwrap());
            let g = &gains.adjoint * self.g_seq.last().unwrap();
            self.p_seq.push(gains.p_prev);
            self.g_seq.push(g);
        }
    }
}

/// Backward sweep of the discrete Riccati recursion started at `Q_T`.
///
/// `horizon` must be an integer multiple of `h`.
#[allow(non_snake_case)]
pub fn riccati_flow(data: &ProblemData, Q_T: &DMatrix<f64>, horizon: f64, h: f64) -> Result<RiccatiFlow> {
    let steps = crate::model::steps_for(horizon, h, "horizon")?;
    let scheme = ImplicitEuler::new(data, h)?;
    Ok(flow_with_scheme(&scheme, Q_T, steps))
}

pub(crate) fn flow_with_scheme(scheme: &ImplicitEuler, q_t: &DMatrix<f64>, steps: usize) -> RiccatiFlow {
    let n = q_t.nrows();
    let mut flow = RiccatiFlow {
        q_t: q_t.clone(),
        h: scheme.h,
        p_seq: vec![q_t.clone()],
        g_seq: vec![DMatrix::identity(n, n)],
    };
    flow.extend(scheme, steps);
    flow
}

type FlowKey = (Vec<u64>, u64);

/// Flows of one problem keyed by terminal weight and step; a cached flow is
/// extended in place when a longer horizon is requested.
pub struct FlowCache {
    data: ProblemData,
    flows: RwLock<HashMap<FlowKey, Arc<RiccatiFlow>>>,
}

impl FlowCache {
    pub fn new(data: &ProblemData) -> Self {
        FlowCache {
            data: data.clone(),
            flows: RwLock::new(HashMap::new()),
        }
    }

    #[allow(non_snake_case)]
    pub fn get(&self, Q_T: &DMatrix<f64>, horizon: f64, h: f64) -> Result<Arc<RiccatiFlow>> {
        let steps = crate::model::steps_for(horizon, h, "horizon")?;
        let key = (Q_T.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), h.to_bits());
        if let Some(flow) = self.flows.read().unwrap().get(&key) {
            if flow.steps() >= steps {
                return Ok(Arc::clone(flow));
            }
        }
        let scheme = ImplicitEuler::new(&self.data, h)?;
        let mut map = self.flows.write().unwrap();
        let entry = map
            .entry(key)
            .or_insert_with(|| Arc::new(flow_with_scheme(&scheme, Q_T, 0)));
        if entry.steps() < steps {
            Arc::make_mut(entry).extend(&scheme, steps);
        }
        Ok(Arc::clone(entry))
    }

    pub fn len(&self) -> usize {
        self.flows.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed point of the discrete Riccati recursion for step `h`.
#[derive(Debug, Clone)]
pub struct DiscreteCare {
    pub h: f64,
    pub pi: DMatrix<f64>,
    /// Closed-loop one-step map `y_k = F y_{k-1}` of the homogeneous system.
    pub closed_loop: DMatrix<f64>,
    /// `u_k = -K y_{k-1}` in the homogeneous system.
    pub feedback: DMatrix<f64>,
    /// `-ln(spectral radius of F) / h`.
    pub lambda: f64,
}

impl DiscreteCare {
    /// Iterates the recursion from the CARE solution until it is stationary.
    pub fn new(data: &ProblemData, care: &CareSolution, h: f64) -> Result<Self> {
        let scheme = ImplicitEuler::new(data, h)?;
        let mut p = care.pi.clone();
        let mut converged = false;
        for _ in 0..5_000_000 {
            let next = scheme.step(&p).p_prev;
            let delta = (&next - &p).amax();
            p = next;
            if delta <= 4.0 * f64::EPSILON * (1.0 + p.amax()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Riccati("discrete Riccati recursion did not become stationary".into()));
        }
        let gains = scheme.step(&p);
        let feedback = &gains.l * &scheme.m;
        let closed_loop = &scheme.m - &scheme.e * &feedback;
        let radius = linalg::eigenvalues(&closed_loop)
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max);
        Ok(DiscreteCare {
            h,
            pi: p,
            closed_loop,
            feedback,
            lambda: -radius.ln() / h,
        })
    }

    pub fn step_closed_loop(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.closed_loop * y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(a: f64, b: f64, c: f64, alpha: f64) -> ProblemData {
        ProblemData {
            A: DMatrix::from_element(1, 1, a),
            B: DMatrix::from_element(1, 1, b),
            C: DMatrix::from_element(1, 1, c),
            alpha,
            f_star: DVector::zeros(1),
            g_star: DVector::zeros(1),
            h_star: DVector::zeros(1),
            Q: DMatrix::zeros(1, 1),
            q: DVector::zeros(1),
            y0: DVector::from_element(1, 1.0),
            T_bar: 10.0,
            h: 5e-3,
        }
    }

    #[test]
    fn scalar_integrator() {
        let care = solve_care(&scalar(0.0, 1.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(care.pi[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(care.a_pi[(0, 0)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(care.lambda, 1.0, epsilon = 1e-12);
        assert_relative_eq!(decay_rate(&care).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_lyapunov_case() {
        let care = solve_care(&scalar(-1.0, 0.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(care.pi[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(care.lambda, 1.0, epsilon = 1e-12);
        let care = solve_care(&scalar(-2.0, 0.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(care.pi[(0, 0)], 0.25, epsilon = 1e-12);
        assert_relative_eq!(decay_rate(&care).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn benchmark_rate() {
        let care = solve_care(&ProblemData::benchmark()).unwrap();
        assert!((care.lambda - 0.36).abs() <= 0.01, "lambda = {}", care.lambda);
        assert!(care.residual <= 1e-10);
        assert!(linalg::asymmetry(&care.pi) <= 1e-10);
    }

    #[test]
    fn imaginary_axis_mode_is_rejected() {
        // undetectable, uncontrollable oscillator
        let d = ProblemData {
            A: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            B: DMatrix::zeros(2, 1),
            C: DMatrix::zeros(1, 2),
            alpha: 1.0,
            f_star: DVector::zeros(2),
            g_star: DVector::zeros(2),
            h_star: DVector::zeros(1),
            Q: DMatrix::zeros(2, 2),
            q: DVector::zeros(2),
            y0: DVector::zeros(2),
            T_bar: 1.0,
            h: 0.01,
        };
        assert!(matches!(solve_care(&d), Err(Error::Riccati(_))));
    }

    #[test]
    fn flow_terminal_condition() {
        let d = ProblemData::benchmark();
        let q_t = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let flow = riccati_flow(&d, &q_t, 0.0, d.h).unwrap();
        assert_eq!(flow.p_seq, vec![q_t.clone()]);
        assert_eq!(flow.g_seq, vec![DMatrix::identity(2, 2)]);
        assert!(riccati_flow(&d, &q_t, 0.0123, d.h).is_err());
    }

    #[test]
    fn discrete_fixed_point_is_stationary_and_close_to_care() {
        let d = ProblemData::benchmark();
        let care = solve_care(&d).unwrap();
        let disc = DiscreteCare::new(&d, &care, d.h).unwrap();
        let flow = riccati_flow(&d, &disc.pi, 2.0, d.h).unwrap();
        for p in &flow.p_seq {
            assert!((p - &disc.pi).amax() <= 1e-8);
        }
        let gap = (&disc.pi - &care.pi).amax();
        assert!(gap < 0.05 && gap > 0.0, "gap {gap}");
        assert!((disc.lambda - care.lambda).abs() < 0.01);
    }

    #[test]
    fn cache_reuses_and_extends() {
        let d = ProblemData::benchmark();
        let cache = FlowCache::new(&d);
        let q_t = DMatrix::zeros(2, 2);
        let short = cache.get(&q_t, 1.0, d.h).unwrap();
        let long = cache.get(&q_t, 2.0, d.h).unwrap();
        assert_eq!(cache.len(), 1);
        assert_eq!(long.steps(), 400);
        assert_eq!(short.p_seq[..], long.p_seq[..=200]);
        let again = cache.get(&q_t, 1.5, d.h).unwrap();
        assert!(Arc::ptr_eq(&again, &long));
    }
}
