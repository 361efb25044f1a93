//! Infinite-horizon receding-horizon control against the overtaking optimal
//! solution, with an exact and a perturbed linear terminal term.

use nalgebra::{DMatrix, DVector};
use turnpike_rhc::model::ProblemData;
use turnpike_rhc::rhc::{Experiment, RhcConfig, TerminalCostSpec};

pub fn run_example() -> turnpike_rhc::Result<()> {
    let data = ProblemData::benchmark();
    let ex = Experiment::new(&data)?;
    let pi_h = ex.discrete_care(data.h)?.pi.clone();
    let delta = DVector::from_vec(vec![0.05, -0.02]);
    for n in [4, 8, 16] {
        let exact = TerminalCostSpec::constant(pi_h.clone(), DMatrix::zeros(2, 2), ex.steady.p_star.clone());
        let perturbed = TerminalCostSpec::constant(pi_h.clone(), DMatrix::zeros(2, 2), &ex.steady.p_star + &delta);
        let a = ex.run_infinite(&RhcConfig::new(1.0, 3.0, n, exact, data.h), n as f64)?;
        let b = ex.run_infinite(&RhcConfig::new(1.0, 3.0, n, perturbed, data.h), n as f64)?;
        println!(
            "N = {n:>2}: error {:.2e} (p^ = p*), {:.3e} (p^ = p* + d), gap {:.3e}",
            a.error_u, b.error_u, b.cost_gap
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> turnpike_rhc::Result<()> {
    run_example()
}
