//! Occupied-interval histogram from the smoothed record and its dwell-law fit.

use qdot::estimation::{extract_dwells, fit_dwell_histogram};
use qdot::model::ModelParams;
use qdot::sensor::synthesize_counts;
use qdot::smoother::{smooth, DEFAULT_THRESHOLD};
use qdot::trajectory::simulate_trajectory;

fn main() -> qdot::Result<()> {
    let params = ModelParams::default();
    let traj = simulate_trajectory(&params, 400.0, 51)?;
    let record = synthesize_counts(&traj, &params, 52)?;
    let hist = extract_dwells(&smooth(&record, &params)?, DEFAULT_THRESHOLD)?;
    let peak = hist.counts.iter().copied().max().unwrap_or(1).max(1);
    for (w, c) in hist.edges.windows(2).zip(&hist.counts).take(30) {
        println!("{:>5.2}–{:<5.2} {:>4} {}", w[0], w[1], c, "#".repeat((40 * c / peak) as usize));
    }
    let fit = fit_dwell_histogram(&hist)?;
    println!(
        "{} occupied, {} empty intervals: Ω̂ {:.2}, γ̂ {:.2}, γ↓ from empty intervals {:?}",
        fit.n_occupied, fit.n_empty, fit.omega, fit.occupied.gamma, fit.gamma_down_empty
    );
    Ok(())
}
