//! Small dense linear-algebra helpers shared by the solvers.
//!
//! Everything here works on `nalgebra` dynamic matrices and targets the
//! desk-scale systems this crate is meant for (a handful of states).

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Maximum absolute entry of `m - m^T`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part over the spectrum of `m`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solves `a^T x + x a + q = 0` by Kronecker vectorization.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Riccati("singular Lyapunov operator".into()))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

/// Ordinary least squares of `ln(values)` against `ts`.
///
/// Returns `(slope, intercept, rms_residual)`; nonpositive samples are skipped.
pub fn log_linear_fit(ts: &[f64], values: &[f64]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(values)
        .filter(|(_, &v)| v > 0.0 && v.is_finite())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_v = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let stv: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_v)).sum();
    let slope = stv / stt;
    let intercept = mean_v - slope * mean_t;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Some((slope, intercept, (rss / n).sqrt()))
}

/// Numerical rank test used by the Hautus checks: true when the smallest of
/// the first `k` singular values falls below `rel_tol` times the largest.
fn rank_deficient(m: &DMatrix<Complex<f64>>, k: usize, rel_tol: f64) -> bool {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sv.len() < k {
        return true;
    }
    let largest = sv.first().copied().unwrap_or(0.0);
    largest == 0.0 || sv[k - 1] <= rel_tol * largest
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|x| Complex::new(x, 0.0))
}

/// Eigenvalues of `a` with nonnegative real part for which `[a - mu I, b]`
/// loses rank.
pub fn hautus_uncontrollable(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> Vec<Complex<f64>> {
    let n = a.nrows();
    let ac = complexify(a);
    let bc = complexify(b);
    eigenvalues(a)
        .into_iter()
        .filter(|mu| mu.re >= 0.0)
        .filter(|&mu| {
            let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * mu;
            let mut pencil = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
            pencil.view_mut((0, 0), (n, n)).copy_from(&shifted);
            pencil.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
            rank_deficient(&pencil, n, rel_tol)
        })
        .collect()
}

/// Eigenvalues of `a` with nonnegative real part for which `[a - mu I; c]`
/// loses rank.
pub fn hautus_undetectable(a: &DMatrix<f64>, c: &DMatrix<f64>, rel_tol: f64) -> Vec<Complex<f64>> {
    hautus_uncontrollable(&a.transpose(), &c.transpose(), rel_tol)
}

/// Real Schur form `m = u t u^T` whose leading diagonal blocks hold exactly
/// the eigenvalues accepted by `select` (judged on the real part).
///
/// Returns `(u, t, k)` where `k` is the dimension of the selected invariant
/// subspace spanned by the first `k` columns of `u`.
pub fn ordered_real_schur(
    m: &DMatrix<f64>,
    select: impl Fn(f64) -> bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>, usize)> {
    let n = m.nrows();
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Riccati("real Schur decomposition did not converge".into()))?;
    let (mut u, mut t) = schur.unpack();

    for i in 0..n.saturating_sub(1) {
        let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        if t[(i + 1, i)].abs() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
            t[(i + 1, i)] = 0.0;
        }
    }
    let mut i = 0;
    while i + 1 < n {
        if t[(i + 1, i)] != 0.0 {
            split_real_pair(&mut t, &mut u, i);
            i += 2;
        } else {
            i += 1;
        }
    }

    loop {
        let blocks = schur_blocks(&t);
        let pos = blocks
            .windows(2)
            .position(|w| !select(block_real_part(&t, w[0])) && select(block_real_part(&t, w[1])));
        match pos {
            Some(j) => swap_blocks(&mut t, &mut u, blocks[j].0, blocks[j].1, blocks[j + 1].1)?,
            None => break,
        }
    }

    let k = schur_blocks(&t)
        .iter()
        .take_while(|&&b| select(block_real_part(&t, b)))
        .map(|b| b.1)
        .sum();
    Ok((u, t, k))
}

fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

fn block_real_part(t: &DMatrix<f64>, (i, size): (usize, usize)) -> f64 {
    if size == 1 {
        t[(i, i)]
    } else {
        0.5 * (t[(i, i)] + t[(i + 1, i + 1)])
    }
}

/// Applies the orthogonal similarity `g` (k x k) to rows/columns `i..i+k`.
fn rotate(t: &mut DMatrix<f64>, u: &mut DMatrix<f64>, i: usize, g: &DMatrix<f64>) {
    let n = t.nrows();
    let k = g.nrows();
    let rows = g.transpose() * t.view((i, 0), (k, n));
    t.view_mut((i, 0), (k, n)).copy_from(&rows);
    let cols = t.view((0, i), (n, k)) * g;
    t.view_mut((0, i), (n, k)).copy_from(&cols);
    let ucols = u.view((0, i), (n, k)) * g;
    u.view_mut((0, i), (n, k)).copy_from(&ucols);
}

/// Triangularizes a 2x2 diagonal block whose eigenvalues are real.
fn split_real_pair(t: &mut DMatrix<f64>, u: &mut DMatrix<f64>, i: usize) {
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let half_tr = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc < 0.0 {
        return;
    }
    let mu = half_tr + disc.sqrt().copysign(half_tr);
    let v1 = (b, mu - a);
    let v2 = (mu - d, c);
    let (x, y) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) { v1 } else { v2 };
    let r = x.hypot(y);
    if r == 0.0 {
        return;
    }
    let (cs, sn) = (x / r, y / r);
    let g = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
    rotate(t, u, i, &g);
    t[(i + 1, i)] = 0.0;
}

/// Exchanges the adjacent diagonal blocks starting at `i` (sizes `p`, `q`).
fn swap_blocks(t: &mut DMatrix<f64>, u: &mut DMatrix<f64>, i: usize, p: usize, q: usize) -> Result<()> {
    let t11 = t.view((i, i), (p, p)).clone_owned();
    let t12 = t.view((i, i + p), (p, q)).clone_owned();
    let t22 = t.view((i + p, i + p), (q, q)).clone_owned();

    // t11 x - x t22 = t12, column-major vec(x)
    let mut op = DMatrix::<f64>::zeros(p * q, p * q);
    for c in 0..q {
        for r in 0..p {
            let row = r + c * p;
            for k in 0..p {
                op[(row, k + c * p)] += t11[(r, k)];
            }
            for k in 0..q {
                op[(row, r + k * p)] -= t22[(k, c)];
            }
        }
    }
    let rhs = DVector::from_column_slice(t12.as_slice());
    let x = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Riccati("cannot reorder Schur blocks with equal eigenvalues".into()))?;

    let k = p + q;
    let mut basis = DMatrix::<f64>::zeros(k, q + k);
    for c in 0..q {
        for r in 0..p {
            basis[(r, c)] = -x[r + c * p];
        }
        basis[(p + c, c)] = 1.0;
    }
    basis.view_mut((0, q), (k, k)).fill_with_identity();
    let g = basis.qr().q();
    rotate(t, u, i, &g);
    for r in q..k {
        for c in 0..q {
            t[(i + r, i + c)] = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, -1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let x = solve_lyapunov(&a, &q).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -2.0]);
        let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.3, 0.0, 0.3, 4.0]);
        let x = solve_lyapunov(&a, &q).unwrap();
        let res = a.transpose() * &x + &x * &a + &q;
        assert!(res.amax() < 1e-12);
    }

    #[test]
    fn ordered_schur_moves_stable_block_first() {
        // eigenvalues 3, -1 +- 2i, -4, 0.5
        let m = DMatrix::from_row_slice(
            5,
            5,
            &[
                3.0, 1.0, 0.0, 2.0, 0.0, //
                0.0, -1.0, 2.0, 0.0, 1.0, //
                0.0, -2.0, -1.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, -4.0, 3.0, //
                0.0, 0.0, 0.0, 0.0, 0.5,
            ],
        );
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.7, 1.1);
        let mut q = DMatrix::<f64>::identity(5, 5);
        q.view_mut((1, 1), (3, 3)).copy_from(rot.matrix());
        let m = &q * m * q.transpose();
        let (u, t, k) = ordered_real_schur(&m, |re| re < 0.0).unwrap();
        assert_eq!(k, 3);
        assert!((&u * &t * u.transpose() - &m).amax() < 1e-12);
        assert!((u.transpose() * &u - DMatrix::<f64>::identity(5, 5)).amax() < 1e-13);
        let lead = t.view((0, 0), (3, 3)).clone_owned();
        assert!(spectral_abscissa(&lead) < 0.0);
        for c in 0..3 {
            for r in 3..5 {
                assert_eq!(t[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn hautus_flags_uncontrollable_unstable_mode() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 0.0);
        assert_eq!(hautus_uncontrollable(&a, &b, 1e-9).len(), 1);
        let b = DMatrix::from_element(1, 1, 1.0);
        assert!(hautus_uncontrollable(&a, &b, 1e-9).is_empty());
    }

    #[test]
    fn log_fit_recovers_rate() {
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let vs: Vec<f64> = ts.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let (slope, intercept, rms) = log_linear_fit(&ts, &vs).unwrap();
        assert_relative_eq!(slope, -0.7, epsilon = 1e-12);
        assert_relative_eq!(intercept, 3.0_f64.ln(), epsilon = 1e-12);
        assert!(rms < 1e-12);
    }
}
