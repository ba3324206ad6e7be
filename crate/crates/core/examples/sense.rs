//! Sensor counts and currents for a simulated trajectory.

use qdot::model::ModelParams;
use qdot::sensor::{completeness_defect, synthesize_counts};
use qdot::trajectory::simulate_trajectory;

fn main() -> qdot::Result<()> {
    let params = ModelParams::default();
    let traj = simulate_trajectory(&params, 20.0, 2)?;
    let record = synthesize_counts(&traj, &params, 3)?;
    let (mu0, mu1) = params.mean_counts();
    println!("mean counts per bin: empty {mu0:.1}, occupied {mu1:.1}");
    println!("POVM completeness defect {:.1e}", completeness_defect(mu0, mu1));
    let per_bin = params.steps_per_bin()?;
    for (k, (m, i)) in record.counts.iter().zip(record.currents()).enumerate().take(12) {
        let n = traj.occupied[k * per_bin] as u8;
        println!("bin {k:>3}  n={n}  {m:>4} counts  {i:.3} nA");
    }
    Ok(())
}
