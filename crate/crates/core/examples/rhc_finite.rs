//! Finite-horizon receding-horizon control with the three terminal costs.

use nalgebra::DMatrix;
use turnpike_rhc::model::ProblemData;
use turnpike_rhc::rhc::{Experiment, RhcConfig, TerminalCostSpec};

pub fn run_example() -> turnpike_rhc::Result<()> {
    let data = ProblemData::benchmark();
    let ex = Experiment::new(&data)?;
    let p_star = ex.steady.p_star.clone();
    let specs = [
        ("zero, p~ = 0", TerminalCostSpec::zero(p_star.map(|_| 0.0))),
        ("zero, p~ = p*", TerminalCostSpec::zero(p_star.clone())),
        (
            "constant Pi",
            TerminalCostSpec::constant(ex.discrete_care(data.h)?.pi.clone(), DMatrix::zeros(2, 2), p_star),
        ),
        ("exact", TerminalCostSpec::Exact),
    ];
    for (name, spec) in specs {
        let cfg = RhcConfig::with_default_n(1.0, 3.0, spec, data.h, data.T_bar);
        let res = ex.run_finite(&cfg)?;
        println!(
            "{name:<14} N = {}: |u_RH - u| = {:.3e}, cost gap = {:.3e}, bound = {:.3e}",
            cfg.N,
            res.error_u,
            res.cost_gap,
            ex.predicted_bound(&cfg)?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> turnpike_rhc::Result<()> {
    run_example()
}
