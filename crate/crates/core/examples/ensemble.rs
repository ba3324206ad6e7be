//! Ensemble-averaged occupancy against the master-equation solution.

use qdot::model::{make_propagator, BasisIndex, DensityMatrix, ModelParams};
use qdot::trajectory::ensemble_occupation;

fn main() -> qdot::Result<()> {
    let params = ModelParams::default();
    let ens = ensemble_occupation(&params, 1.0, 1000, 5)?;
    let mut rho = DensityMatrix::pure(BasisIndex::Empty);
    let step = make_propagator(&params, 0.1)?;
    println!("   t    ensemble     ±SE     master eq.");
    for k in 1..=10 {
        rho = step.evolve(&rho)?;
        let i = k * 100 - 1;
        println!("{:>5.1}   {:.4}    {:.4}    {:.4}", 0.1 * k as f64, ens.mean[i], ens.std_error[i], rho.occupation());
    }
    Ok(())
}
