//! Steady state of the benchmark problem and the turnpike behaviour of the
//! optimal trajectory for several horizons.

use turnpike_rhc::lq::{solve_lq, SegmentProblem};
use turnpike_rhc::model::ProblemData;
use turnpike_rhc::riccati::solve_care;
use turnpike_rhc::turnpike::{solve_static, turnpike_check, value_relation};

pub fn run_example() -> turnpike_rhc::Result<()> {
    let mut data = ProblemData::benchmark();
    let care = solve_care(&data)?;
    let steady = solve_static(&data, &care)?;
    println!(
        "y* = ({:.4}, {:.4}), u* = {:.4}, v* = {:.6}",
        steady.y_star[0], steady.y_star[1], steady.u_star[0], steady.v_star
    );

    for t_bar in [10.0, 20.0, 30.0] {
        data.T_bar = t_bar;
        let sol = solve_lq(&SegmentProblem::full_horizon(&data)?)?;
        let report = turnpike_check(&sol.traj, &steady, care.lambda)?;
        println!(
            "T_bar = {t_bar:>4}: M = {:.3}, rates {:.3} / {:.3}, mid deviation {:.2e}",
            report.fitted_m,
            report.left_rate.unwrap_or(f64::NAN),
            report.right_rate.unwrap_or(f64::NAN),
            report.max_mid_deviation
        );
    }

    for r in value_relation(&data, &steady)? {
        println!("V at theta = {:>4}: {:.10} vs {:.10}", r.theta, r.value, r.shifted);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> turnpike_rhc::Result<()> {
    run_example()
}
