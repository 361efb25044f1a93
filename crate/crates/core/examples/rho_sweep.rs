//! Sweep of the receding-horizon error over sampling times and prediction
//! horizons, printed as the `100 rho` matrix.

use turnpike_rhc::model::ProblemData;
use turnpike_rhc::rhc::{Experiment, SweepOptions, TerminalCostSpec};

pub fn run_example() -> turnpike_rhc::Result<()> {
    let data = ProblemData::benchmark();
    let ex = Experiment::new(&data)?;
    let grid: Vec<f64> = (1..=8).map(|i| i as f64).collect();
    let table = ex.sweep(&SweepOptions {
        tau_list: grid.clone(),
        t_list: grid,
        terminal: TerminalCostSpec::zero(ex.steady.p_star.clone()),
        h: data.h,
        jobs: 4,
    })?;
    print!("{}", table.rho_matrix_csv());
    let rho: Vec<f64> = table.rows.iter().map(|r| r.rho).collect();
    let spread = rho.iter().cloned().fold(f64::MIN, f64::max) - rho.iter().cloned().fold(f64::MAX, f64::min);
    println!("{} cells, rho spread {spread:.3}", table.rows.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> turnpike_rhc::Result<()> {
    run_example()
}
