#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use turnpike_rhc::lq::SegmentProblem;
use turnpike_rhc::model::ProblemData;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn matrix(rng: &mut StdRng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| uniform(rng, -scale, scale))
}

fn vector(rng: &mut StdRng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| uniform(rng, -scale, scale))
}

/// Random 2-state problem with `steps` time steps of length `h`.
pub fn random_problem(rng: &mut StdRng, m: usize, steps: usize, h: f64) -> ProblemData {
    let n = 2;
    let l = matrix(rng, n, n, 1.0);
    ProblemData {
        A: matrix(rng, n, n, 1.0),
        B: matrix(rng, n, m, 1.0),
        C: matrix(rng, n, n, 1.0),
        alpha: uniform(rng, 0.1, 2.0),
        f_star: vector(rng, n, 1.0),
        g_star: vector(rng, n, 1.0),
        h_star: vector(rng, m, 1.0),
        Q: &l * l.transpose(),
        q: vector(rng, n, 1.0),
        y0: vector(rng, n, 2.0),
        T_bar: steps as f64 * h,
        h,
    }
}

pub struct DenseSolution {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    /// `p_0 .. p_{K-1}` recovered from the constraint multipliers.
    pub costates: Vec<DVector<f64>>,
}

/// Solves the discrete problem as one equality-constrained QP over
/// `z = (y_1..y_K, u_1..u_K)` through its dense KKT matrix.
pub fn dense_kkt_oracle(seg: &SegmentProblem) -> DenseSolution {
    let d = &seg.data;
    let (n, m, k, h) = (d.n(), d.m(), seg.grid.steps, seg.grid.h);
    let (ny, nz) = (n * k, (n + m) * k);
    let size = nz + n * k;
    let yi = |j: usize| (j - 1) * n;
    let ui = |j: usize| ny + (j - 1) * m;
    let ci = |j: usize| nz + (j - 1) * n;
    let mut kkt = DMatrix::zeros(size, size);
    let mut rhs = DVector::zeros(size);
    let ctc = d.C.transpose() * &d.C;
    let lhs = DMatrix::identity(n, n) - &d.A * h;
    for j in 1..=k {
        let mut hy = &ctc * h;
        let mut gy = &d.g_star * h;
        if j == k {
            hy += &seg.terminal_weight;
            gy += &seg.terminal_linear;
        }
        kkt.view_mut((yi(j), yi(j)), (n, n)).copy_from(&hy);
        kkt.view_mut((ui(j), ui(j)), (m, m)).fill_diagonal(h * d.alpha);
        rhs.rows_mut(yi(j), n).copy_from(&-gy);
        rhs.rows_mut(ui(j), m).copy_from(&(-&d.h_star * h));
        // (I - hA) y_j - y_{j-1} - h B u_j = h f
        kkt.view_mut((ci(j), yi(j)), (n, n)).copy_from(&lhs);
        kkt.view_mut((yi(j), ci(j)), (n, n)).copy_from(&lhs.transpose());
        let hb = &d.B * -h;
        kkt.view_mut((ci(j), ui(j)), (n, m)).copy_from(&hb);
        kkt.view_mut((ui(j), ci(j)), (m, n)).copy_from(&hb.transpose());
        let mut c = &d.f_star * h;
        if j == 1 {
            c += &seg.y_init;
        } else {
            let minus = -DMatrix::<f64>::identity(n, n);
            kkt.view_mut((ci(j), yi(j - 1)), (n, n)).copy_from(&minus);
            kkt.view_mut((yi(j - 1), ci(j)), (n, n)).copy_from(&minus);
        }
        rhs.rows_mut(ci(j), n).copy_from(&c);
    }
    let sol = kkt.lu().solve(&rhs).expect("KKT matrix is nonsingular");
    let mut states = vec![seg.y_init.clone()];
    states.extend((1..=k).map(|j| sol.rows(yi(j), n).into_owned()));
    DenseSolution {
        states,
        controls: (1..=k).map(|j| sol.rows(ui(j), m).into_owned()).collect(),
        costates: (1..=k).map(|j| -sol.rows(ci(j), n).into_owned()).collect(),
    }
}

/// Matrix exponential by scaling and squaring of a Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = a.abs().row_sum().max();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let n = a.nrows();
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Slope of the least-squares line through `(x, y)`.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}
