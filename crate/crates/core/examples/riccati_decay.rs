//! Convergence of the Riccati flow `Pi(T, 0)` and decay of `G(T, 0)` as the
//! horizon grows.

use nalgebra::DMatrix;
use turnpike_rhc::linalg::{log_linear_fit, spectral_norm};
use turnpike_rhc::model::ProblemData;
use turnpike_rhc::riccati::{riccati_flow, solve_care, DiscreteCare};

pub fn run_example() -> turnpike_rhc::Result<()> {
    let data = ProblemData::benchmark();
    let care = solve_care(&data)?;
    let disc = DiscreteCare::new(&data, &care, data.h)?;
    let flow = riccati_flow(&data, &DMatrix::zeros(2, 2), 10.0, data.h)?;

    println!("{:>5} {:>12} {:>12}", "T", "|Pi(T)-Pi|", "|G(T)|");
    let (mut ts, mut pi_gap, mut g) = (Vec::new(), Vec::new(), Vec::new());
    for k in (0..=flow.steps()).step_by(200) {
        let t = k as f64 * data.h;
        let gap = spectral_norm(&(&flow.p_seq[k] - &disc.pi));
        let gn = spectral_norm(&flow.g_seq[k]);
        println!("{t:>5.1} {gap:>12.3e} {gn:>12.3e}");
        if t >= 2.0 {
            ts.push(t);
            pi_gap.push(gap);
            g.push(gn);
        }
    }
    let rate = |v: &[f64]| log_linear_fit(&ts, v).map_or(f64::NAN, |f| -f.0);
    println!(
        "lambda = {:.3}: fitted rates {:.3} (Pi) and {:.3} (G)",
        care.lambda,
        rate(&pi_gap),
        rate(&g)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> turnpike_rhc::Result<()> {
    run_example()
}
