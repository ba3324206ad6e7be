//! Alternating rate re-estimation and Rabi-frequency selection.

use serde::{Deserialize, Serialize};

use super::baum_welch::{baum_welch, BaumWelchOptions, RateEstimate};
use super::bayes::{bayes_omega, BayesOptions};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::sensor::CountRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridOptions {
    /// Re-estimation sweeps per outer iteration.
    pub n_inner: usize,
    /// Outer iterations.
    pub n_outer: usize,
    /// Stop once every parameter changes by less than this fraction.
    pub tolerance: f64,
    pub baum_welch: BaumWelchOptions,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self {
            n_inner: 5,
            n_outer: 5,
            tolerance: 1e-3,
            baum_welch: BaumWelchOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridStep {
    pub outer: usize,
    pub omega: f64,
    pub gamma_down: f64,
    pub gamma_up: f64,
    /// Record log-likelihood at `(omega, gamma_down, gamma_up)`.
    pub log_likelihood: f64,
    pub rates: Vec<RateEstimate>,
    pub grid_log_likelihood: Vec<f64>,
    pub tie: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridEstimate {
    pub omega: f64,
    pub gamma_down: f64,
    pub gamma_up: f64,
    pub converged: bool,
    /// Index into `history` of the reported parameters.
    pub selected: usize,
    pub history: Vec<HybridStep>,
}

fn max_relative_change(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Starting from the Ω, γ↓ and γ↑ in `guess`, alternates `n_inner` rate
/// sweeps at fixed Ω with a grid search for Ω at fixed rates. Without
/// convergence the iterate with the highest likelihood is reported.
pub fn hybrid_estimate(record: &CountRecord, omega_grid: &[f64], guess: &ModelParams, opts: &HybridOptions) -> Result<HybridEstimate> {
    if opts.n_outer == 0 {
        return Err(Error::InvalidInput("at least one outer iteration is required".into()));
    }
    let mut current = *guess;
    let mut history: Vec<HybridStep> = Vec::with_capacity(opts.n_outer);
    let mut converged = false;
    for outer in 1..=opts.n_outer {
        let before = [current.omega, current.gamma_down, current.gamma_up];
        let rates = baum_welch(record, &current, opts.n_inner, &opts.baum_welch)?;
        if let Some(last) = rates.last() {
            current = current.with_rates(last.gamma_down, last.gamma_up);
        }
        let grid = bayes_omega(record, omega_grid, &current, &BayesOptions::default())?;
        current = current.with_omega(grid.omega_hat());
        let change = max_relative_change(before, [current.omega, current.gamma_down, current.gamma_up]);
        history.push(HybridStep {
            outer,
            omega: current.omega,
            gamma_down: current.gamma_down,
            gamma_up: current.gamma_up,
            log_likelihood: grid.max_log_likelihood(),
            rates,
            grid_log_likelihood: grid.log_likelihood,
            tie: grid.tie,
        });
        log::info!(
            "outer {outer}: Ω = {:.4}, γ↓ = {:.4}, γ↑ = {:.4}, change {change:.2e}",
            current.omega,
            current.gamma_down,
            current.gamma_up
        );
        if change < opts.tolerance {
            converged = true;
            break;
        }
    }
    let selected = if converged {
        history.len() - 1
    } else {
        log::warn!("no convergence after {} outer iterations; reporting the most likely iterate", opts.n_outer);
        (0..history.len())
            .max_by(|&a, &b| history[a].log_likelihood.total_cmp(&history[b].log_likelihood))
            .unwrap()
    };
    let s = &history[selected];
    Ok(HybridEstimate {
        omega: s.omega,
        gamma_down: s.gamma_down,
        gamma_up: s.gamma_up,
        converged,
        selected,
        history,
    })
}
