//! Stabilizing solution of the algebraic Riccati equation for the benchmark
//! system and the decay rate of its closed loop.

use turnpike_rhc::model::ProblemData;
use turnpike_rhc::riccati::{solve_care, DiscreteCare};

pub fn run_example() -> turnpike_rhc::Result<()> {
    let data = ProblemData::benchmark();
    let care = solve_care(&data)?;
    println!("Pi = {}", care.pi);
    println!("eig(A_pi) = {:?}", care.eig_a_pi);
    println!("lambda = {:.4}, residual = {:.2e}", care.lambda, care.residual);

    // the fixed point of the time-stepping scheme differs from Pi by O(h)
    let disc = DiscreteCare::new(&data, &care, data.h)?;
    println!(
        "discrete: lambda_h = {:.4}, |Pi_h - Pi| = {:.2e}",
        disc.lambda,
        (&disc.pi - &care.pi).amax()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> turnpike_rhc::Result<()> {
    run_example()
}
