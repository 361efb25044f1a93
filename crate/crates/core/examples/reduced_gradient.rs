//! The reduced-gradient (L-BFGS) solver next to the Riccati sweep.

use turnpike_rhc::lq::{reduced_gradient_solve, solve_lq, SegmentProblem};
use turnpike_rhc::model::{l2_distance, ProblemData};

pub fn run_example() -> turnpike_rhc::Result<()> {
    let mut data = ProblemData::benchmark();
    data.T_bar = 5.0;
    data.h = 0.01;
    let seg = SegmentProblem::full_horizon(&data)?;
    let direct = solve_lq(&seg)?;
    let lbfgs = reduced_gradient_solve(&seg, 1e-10)?;
    let gap = l2_distance(direct.controls(), lbfgs.solution.controls(), &seg.grid)?;
    println!(
        "{} iterations, gradient {:.1e}, |u_lbfgs - u_riccati| = {:.1e}, values {:.12} / {:.12}",
        lbfgs.iterations, lbfgs.gradient_norm, gap, lbfgs.solution.value, direct.value
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> turnpike_rhc::Result<()> {
    run_example()
}
