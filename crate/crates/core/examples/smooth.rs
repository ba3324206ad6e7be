//! Filter versus past-quantum-state occupation on a noisy record.

use qdot::model::ModelParams;
use qdot::sensor::synthesize_counts;
use qdot::smoother::{bin_truth, filter_forward, misassignment_fraction, smooth, DEFAULT_THRESHOLD};
use qdot::trajectory::simulate_trajectory;

fn main() -> qdot::Result<()> {
    let params = ModelParams::default();
    let traj = simulate_trajectory(&params, 100.0, 11)?;
    let record = synthesize_counts(&traj, &params, 12)?;
    let filtered = filter_forward(&record, &params)?;
    let smoothed = smooth(&record, &params)?;
    let truth = bin_truth(&traj.occupied, params.steps_per_bin()?);
    let f = misassignment_fraction(&filtered.occupation(), &truth, DEFAULT_THRESHOLD);
    let s = misassignment_fraction(&smoothed.pqs, &truth, DEFAULT_THRESHOLD);
    println!("log-likelihood {:.2}", smoothed.log_likelihood);
    println!("misassigned bins: filter {:.2}%, smoothed {:.2}%", 100.0 * f, 100.0 * s);
    Ok(())
}
