//! Grid posterior over the Rabi frequency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DensityMatrix, ModelParams};
use crate::sensor::CountRecord;
use crate::smoother::{ForwardFilter, InferenceModel};

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    match n {
        0 => Err(Error::InvalidInput("grid needs at least one candidate".into())),
        1 => Ok(vec![lo]),
        _ if !(hi > lo) => Err(Error::InvalidInput(format!("grid bounds must increase, got [{lo}, {hi}]"))),
        _ => Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSnapshot {
    /// End of the last bin included [µs].
    pub time: f64,
    pub log_likelihood: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LikelihoodGrid {
    pub omegas: Vec<f64>,
    /// Final log-likelihood per candidate; `-inf` where the candidate could not explain a count.
    pub log_likelihood: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<Option<DensityMatrix>>,
    pub snapshots: Vec<LikelihoodSnapshot>,
    pub argmax: usize,
    /// Another candidate shared the maximum; the smallest Ω among them was chosen.
    pub tie: bool,
}

impl LikelihoodGrid {
    pub fn omega_hat(&self) -> f64 {
        self.omegas[self.argmax]
    }

    pub fn max_log_likelihood(&self) -> f64 {
        self.log_likelihood[self.argmax]
    }

    /// Normalized posterior under a uniform prior.
    pub fn posterior(&self) -> Vec<f64> {
        let m = self.max_log_likelihood();
        let w: Vec<f64> = self.log_likelihood.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    /// Standard deviation implied by the curvature of a parabola fitted to the
    /// log-likelihood within `half_width` cells of the maximum. `None` when the
    /// grid is too short or the fit is not concave.
    pub fn curvature_width(&self, half_width: usize) -> Option<f64> {
        let lo = self.argmax.saturating_sub(half_width);
        let hi = (self.argmax + half_width).min(self.omegas.len() - 1);
        if hi - lo < 2 {
            return None;
        }
        let x0 = self.omega_hat();
        let pts: Vec<(f64, f64)> =
            (lo..=hi).map(|i| (self.omegas[i] - x0, self.log_likelihood[i])).collect();
        if pts.iter().any(|p| !p.1.is_finite()) {
            return None;
        }
        let c = quadratic_coefficient(&pts)?;
        (c < 0.0).then(|| (-2.0 * c).sqrt().recip())
    }
}

/// Leading coefficient of the least-squares parabola through `pts`.
fn quadratic_coefficient(pts: &[(f64, f64)]) -> Option<f64> {
    let mut a = nalgebra::Matrix3::<f64>::zeros();
    let mut b = nalgebra::Vector3::<f64>::zeros();
    for &(x, y) in pts {
        let row = nalgebra::Vector3::new(1.0, x, x * x);
        a += row * row.transpose();
        b += row * y;
    }
    a.lu().solve(&b).map(|s| s[2])
}

#[derive(Clone, Copy, Debug, Default)]
pub struct BayesOptions {
    /// Record the running log-likelihoods every this many bins; 0 disables.
    pub snapshot_every: usize,
}

struct CandidateRun {
    log_likelihood: f64,
    state: Option<DensityMatrix>,
    trace: Vec<f64>,
}

fn run_candidate(params: &ModelParams, record: &CountRecord, every: usize) -> Result<CandidateRun> {
    let model = InferenceModel::from_params(params)?;
    let meas = model.measurements(record)?;
    let mut filter = ForwardFilter::new(&model);
    let mut trace = Vec::new();
    for (k, m) in meas.iter().enumerate() {
        match filter.step(m) {
            Ok(_) => {}
            Err(Error::LikelihoodUnderflow { .. }) => {
                let n_snap = if every > 0 { meas.len() / every } else { 0 };
                trace.resize(n_snap, f64::NEG_INFINITY);
                return Ok(CandidateRun {
                    log_likelihood: f64::NEG_INFINITY,
                    state: None,
                    trace,
                });
            }
            Err(e) => return Err(e),
        }
        if every > 0 && (k + 1) % every == 0 {
            trace.push(filter.log_likelihood());
        }
    }
    Ok(CandidateRun {
        log_likelihood: filter.log_likelihood(),
        state: Some(*filter.state()),
        trace,
    })
}

/// Runs one filter per candidate Ω with the rates and sensor of `params`
/// (its `omega` is ignored) and a uniform prior over the grid.
pub fn bayes_omega(record: &CountRecord, grid: &[f64], params: &ModelParams, opts: &BayesOptions) -> Result<LikelihoodGrid> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty Ω grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("Ω grid must be strictly increasing".into()));
    }
    let runs = grid
        .par_iter()
        .map(|&omega| run_candidate(&params.with_omega(omega), record, opts.snapshot_every))
        .collect::<Result<Vec<_>>>()?;

    let log_likelihood: Vec<f64> = runs.iter().map(|r| r.log_likelihood).collect();
    let mut argmax = 0;
    for (i, &l) in log_likelihood.iter().enumerate() {
        if l > log_likelihood[argmax] {
            argmax = i;
        }
    }
    let best = log_likelihood[argmax];
    if best == f64::NEG_INFINITY {
        return Err(Error::Degenerate(format!(
            "every one of the {} Ω candidates assigns zero probability to the record",
            grid.len()
        )));
    }
    let tie = log_likelihood.iter().filter(|&&l| l == best).count() > 1;
    let n_snap = runs[0].trace.len();
    let snapshots = (0..n_snap)
        .map(|s| LikelihoodSnapshot {
            time: ((s + 1) * opts.snapshot_every) as f64 * record.bin_dt,
            log_likelihood: runs.iter().map(|r| r.trace[s]).collect(),
        })
        .collect();
    Ok(LikelihoodGrid {
        omegas: grid.to_vec(),
        log_likelihood,
        states: runs.into_iter().map(|r| r.state).collect(),
        snapshots,
        argmax,
        tie,
    })
}
