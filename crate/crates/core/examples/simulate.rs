//! Quantum-jump trajectory of the driven dot: jump log and occupied fraction.

use qdot::model::ModelParams;
use qdot::trajectory::simulate_trajectory;

fn main() -> qdot::Result<()> {
    let params = ModelParams::default();
    let traj = simulate_trajectory(&params, 50.0, 1)?;
    traj.check_invariants()?;
    for ev in traj.events.iter().take(10) {
        println!("{:>9.3} µs  {:?}", ev.time, ev.kind);
    }
    let occupied = traj.occupied.iter().filter(|&&o| o).count() as f64 / traj.n_steps() as f64;
    println!("{} jumps, occupied {:.1}% of {} µs", traj.events.len(), 100.0 * occupied, traj.duration);
    Ok(())
}
