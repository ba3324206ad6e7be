//! Rate re-estimation from smoothed two-time joint probabilities.
//!
//! For consecutive sample times `t_k`, `t_k + τ` the joint probability of
//! projective outcomes `i` then `j` is
//!
//! ```text
//! C_k(i, j) ∝ tr(Π_j e^{Lτ}(Π_i ρ_k Π_i) Π_j Ẽ_{k+1}),   Ẽ_{k+1} = M_{k+1}† E_{k+1} M_{k+1}
//! ```
//!
//! normalized over `(i, j)` at each `k`. The transition probability per step
//! is `Σ_k C_k(i, j) / Σ_k Σ_j C_k(i, j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BasisIndex, DensityMatrix, EffectMatrix, Mat3, ModelParams, Propagator};
use crate::sensor::CountRecord;
use crate::smoother::{backward_measurements, filter_measurements, pre_measurement_effect, InferenceModel};

/// Literal two-time joint weight: project onto `i`, propagate, project onto
/// `j`, contract with the effect matrix at the later time.
pub fn bw_joint(rho: &DensityMatrix, effect_next: &EffectMatrix, propagator: &Propagator, i: BasisIndex, j: BasisIndex) -> f64 {
    let pi = i.projector();
    let pj = j.projector();
    let projected = pi * rho.matrix() * pi;
    let moved = pj * propagator.apply(&projected) * pj;
    (moved * effect_next.matrix()).trace().re.max(0.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    /// `Σ_k C_k(i, j)` with rows and columns in basis order.
    pub joint: [[f64; 3]; 3],
    pub log_likelihood: f64,
    pub step: f64,
}

impl TransitionTable {
    /// `Σ_k C_k(i, j) / Σ_k Σ_j C_k(i, j)`.
    pub fn transition_probability(&self, i: BasisIndex, j: BasisIndex) -> Result<f64> {
        let row = &self.joint[i.index()];
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Degenerate(format!("state {i:?} is never populated in the record")));
        }
        Ok(row[j.index()] / total)
    }

    pub fn rate(&self, i: BasisIndex, j: BasisIndex) -> Result<f64> {
        Ok(self.transition_probability(i, j)? / self.step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BaumWelchOptions {
    /// Include the Hamiltonian in the two-time propagator. Without it only the
    /// jump channels connect the projected states.
    pub coherent_transfer: bool,
}

impl Default for BaumWelchOptions {
    fn default() -> Self {
        Self { coherent_transfer: true }
    }
}

/// Accumulates the joint table over a record with the inter-sample step equal to one bin.
pub fn transition_table(model: &InferenceModel, record: &CountRecord, opts: &BaumWelchOptions) -> Result<TransitionTable> {
    let meas = model.measurements(record)?;
    let filtered = filter_measurements(model, &meas)?;
    let effects = backward_measurements(model, &meas)?;
    let two_time = if opts.coherent_transfer {
        model.propagator().clone()
    } else {
        Propagator::new(&model.lindbladian().incoherent(), model.bin_dt())?
    };
    // e^{Lτ}(|i⟩⟨i|) diagonals: the projected state is a multiple of |i⟩⟨i|.
    let moved: Vec<[f64; 3]> = BasisIndex::ALL
        .iter()
        .map(|b| {
            let m: Mat3 = two_time.apply(&b.projector());
            [m[(0, 0)].re.max(0.0), m[(1, 1)].re.max(0.0), m[(2, 2)].re.max(0.0)]
        })
        .collect();

    let mut joint = [[0.0; 3]; 3];
    for k in 0..meas.len().saturating_sub(1) {
        let rho = filtered.states[k].matrix();
        let next = pre_measurement_effect(&effects[k + 1], &meas[k + 1])?;
        let e = next.matrix();
        let mut c = [[0.0; 3]; 3];
        let mut total = 0.0;
        for i in 0..3 {
            let p = rho[(i, i)].re.max(0.0);
            for j in 0..3 {
                c[i][j] = p * moved[i][j] * e[(j, j)].re.max(0.0);
                total += c[i][j];
            }
        }
        if !(total > 0.0) {
            return Err(Error::Degenerate(format!("joint table vanishes at bin {k}")));
        }
        for i in 0..3 {
            for j in 0..3 {
                joint[i][j] += c[i][j] / total;
            }
        }
    }
    Ok(TransitionTable {
        joint,
        log_likelihood: filtered.total_log_likelihood(),
        step: model.bin_dt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub gamma_down: f64,
    pub gamma_up: f64,
    pub iteration: usize,
    /// Log-likelihood of the record under the parameters that produced this estimate.
    pub log_likelihood: f64,
}

/// One re-estimation sweep for the dot model.
pub fn bw_reestimate(record: &CountRecord, params: &ModelParams, opts: &BaumWelchOptions) -> Result<RateEstimate> {
    let table = transition_table(&InferenceModel::from_params(params)?, record, opts)?;
    Ok(RateEstimate {
        gamma_down: table.rate(BasisIndex::Empty, BasisIndex::Down)?,
        gamma_up: table.rate(BasisIndex::Up, BasisIndex::Empty)?,
        iteration: 1,
        log_likelihood: table.log_likelihood,
    })
}

/// `iterations` sweeps starting from the rates in `params`, each feeding the
/// next. The history excludes the starting guess.
pub fn baum_welch(record: &CountRecord, params: &ModelParams, iterations: usize, opts: &BaumWelchOptions) -> Result<Vec<RateEstimate>> {
    let mut current = *params;
    let mut history = Vec::with_capacity(iterations);
    for n in 1..=iterations {
        let mut est = bw_reestimate(record, &current, opts)?;
        est.iteration = n;
        current = current.with_rates(est.gamma_down, est.gamma_up);
        history.push(est);
    }
    Ok(history)
}
