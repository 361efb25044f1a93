//! Optimal control of the benchmark problem on its whole horizon by the
//! affine Riccati sweep, plus a short segment with a terminal cost.

use nalgebra::{DMatrix, DVector};
use turnpike_rhc::lq::{solve_lq, SegmentProblem};
use turnpike_rhc::model::{Grid, ProblemData};

pub fn run_example() -> turnpike_rhc::Result<()> {
    let data = ProblemData::benchmark();
    let full = solve_lq(&SegmentProblem::full_horizon(&data)?)?;
    println!(
        "[0, {}]: value = {:.10}, KKT residual = {:.1e}",
        data.T_bar, full.value, full.kkt_residual
    );
    let u = full.controls();
    println!("u(h) = {:.4}, u(T/2) = {:.4}", u[0][0], u[u.len() / 2][0]);

    let seg = SegmentProblem::new(
        &data,
        DVector::from_vec(vec![1.0, -1.0]),
        DMatrix::identity(2, 2) * 2.0,
        DVector::from_vec(vec![0.1, 0.0]),
        Grid::new(5.0, 7.0, data.h)?,
    )?;
    let sol = solve_lq(&seg)?;
    println!(
        "[5, 7] from (1, -1): value = {:.10}, p(5) = ({:.4}, {:.4})",
        sol.value,
        sol.costates()[0][0],
        sol.costates()[0][1]
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> turnpike_rhc::Result<()> {
    run_example()
}
