//! Rate re-estimation from a wrong starting guess.

use qdot::estimation::{baum_welch, BaumWelchOptions};
use qdot::model::ModelParams;
use qdot::sensor::synthesize_counts;
use qdot::trajectory::simulate_trajectory;

fn main() -> qdot::Result<()> {
    let truth = ModelParams::default();
    let traj = simulate_trajectory(&truth, 200.0, 31)?;
    let record = synthesize_counts(&traj, &truth, 32)?;
    let guess = truth.with_rates(2.0, 4.0);
    for est in baum_welch(&record, &guess, 5, &BaumWelchOptions::default())? {
        println!(
            "iteration {}  γ↓ {:.3}  γ↑ {:.3}  log L {:.2}",
            est.iteration, est.gamma_down, est.gamma_up, est.log_likelihood
        );
    }
    Ok(())
}
