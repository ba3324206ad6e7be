//! Writes and reads back a trajectory, count record and timeline in a bundle directory.

use qdot::io::{read_counts, read_timeline, write_counts, write_timeline, write_trajectory, ExperimentBundle};
use qdot::model::ModelParams;
use qdot::sensor::synthesize_counts;
use qdot::smoother::{smooth, DEFAULT_THRESHOLD};
use qdot::trajectory::simulate_trajectory;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("qdot-example-bundle");
    std::fs::create_dir_all(&dir)?;
    let bundle = ExperimentBundle::new(&dir);
    let params = ModelParams::default();
    let traj = simulate_trajectory(&params, 10.0, 61)?;
    write_trajectory(&bundle.trajectory(), &traj)?;
    let record = synthesize_counts(&traj, &params, 62)?;
    write_counts(&bundle.counts(), &record, Default::default())?;
    let (loaded, header) = read_counts(&bundle.counts())?;
    let timeline = smooth(&loaded, &params)?;
    write_timeline(&bundle.timeline(), &timeline, &params, DEFAULT_THRESHOLD, Default::default())?;
    let (back, _) = read_timeline(&bundle.timeline())?;
    println!("{}: {} bins, format {}", dir.display(), back.len(), header.format_version);
    Ok(())
}
