//! Joint estimate of Ω, γ↓ and γ↑ by alternating rate sweeps and a grid search.

use qdot::estimation::{hybrid_estimate, uniform_grid, HybridOptions};
use qdot::model::ModelParams;
use qdot::sensor::synthesize_counts;
use qdot::trajectory::simulate_trajectory;

fn main() -> qdot::Result<()> {
    let truth = ModelParams::default();
    let traj = simulate_trajectory(&truth, 100.0, 41)?;
    let record = synthesize_counts(&traj, &truth, 42)?;
    let guess = truth.with_omega(4.0).with_rates(2.0, 4.0);
    let grid = uniform_grid(3.5, 6.5, 16)?;
    let opts = HybridOptions { n_inner: 2, n_outer: 3, ..Default::default() };
    let est = hybrid_estimate(&record, &grid, &guess, &opts)?;
    for step in &est.history {
        println!(
            "outer {}  Ω {:.2}  γ↓ {:.3}  γ↑ {:.3}  log L {:.2}",
            step.outer, step.omega, step.gamma_down, step.gamma_up, step.log_likelihood
        );
    }
    println!("selected iterate {}, converged: {}", est.selected, est.converged);
    Ok(())
}
