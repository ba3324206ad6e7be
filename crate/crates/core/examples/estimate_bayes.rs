//! Grid posterior over the Rabi frequency with the rates held at truth.

use qdot::estimation::{bayes_omega, uniform_grid, BayesOptions};
use qdot::model::ModelParams;
use qdot::sensor::synthesize_counts;
use qdot::trajectory::simulate_trajectory;

fn main() -> qdot::Result<()> {
    let params = ModelParams::default();
    let traj = simulate_trajectory(&params, 200.0, 21)?;
    let record = synthesize_counts(&traj, &params, 22)?;
    let grid = uniform_grid(3.5, 6.5, 31)?;
    let result = bayes_omega(&record, &grid, &params, &BayesOptions::default())?;
    for (w, p) in result.omegas.iter().zip(result.posterior()) {
        println!("Ω {w:.2}  {p:.4}  {}", "#".repeat((p * 200.0) as usize));
    }
    println!("Ω̂ = {:.2} (true {}), width {:?}", result.omega_hat(), params.omega, result.curvature_width(2));
    Ok(())
}
