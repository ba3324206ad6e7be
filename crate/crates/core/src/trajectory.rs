//! Ground-truth quantum trajectories under perfect detection of tunneling events.
//!
//! Each step of length `dt_sim` applies the no-jump evolution, then fires at most
//! one jump with first-order probabilities `p_in = γ↓ρ₀₀dt` and `p_out = γ↑ρ↑↑dt`
//! evaluated on the state at the start of the step. Jumps take effect at the end
//! of the step in which they fire.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BasisIndex, DensityMatrix, Lindbladian, Mat3, ModelParams, C64};
use crate::seeding::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpKind {
    /// A spin-down electron tunnels onto the dot.
    ChargeIn,
    /// A spin-up electron tunnels off the dot.
    ChargeOut,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    /// µs
    pub time: f64,
    pub kind: JumpKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpProbabilities {
    pub p_in: f64,
    pub p_out: f64,
}

impl JumpProbabilities {
    pub fn total(&self) -> f64 {
        self.p_in + self.p_out
    }
}

/// Post-jump state. Both jump maps collapse onto a basis state regardless of
/// the state before the jump.
pub fn apply_jump(kind: JumpKind) -> DensityMatrix {
    match kind {
        JumpKind::ChargeIn => DensityMatrix::pure(BasisIndex::Down),
        JumpKind::ChargeOut => DensityMatrix::pure(BasisIndex::Empty),
    }
}

/// No-jump evolution over one simulation step, cached for a parameter set.
///
/// The no-jump equation is `dρ/dt = -i(H_eff ρ - ρ H_eff†)`, solved exactly by
/// `ρ → K ρ K†` with `K = exp(-i H_eff dt)`.
#[derive(Clone, Debug)]
pub struct NoJumpStepper {
    kraus: Mat3,
    gamma_down_dt: f64,
    gamma_up_dt: f64,
}

impl NoJumpStepper {
    pub fn new(params: &ModelParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(format!("step must be > 0, got {dt}")));
        }
        let (gd, gu) = (params.gamma_down * dt, params.gamma_up * dt);
        if gd >= 0.1 || gu >= 0.1 {
            return Err(Error::InvalidParams(format!(
                "rate*dt must be < 0.1 (got γ↓dt = {gd}, γ↑dt = {gu})"
            )));
        }
        let h_eff = Lindbladian::from_params(params).effective_hamiltonian();
        let mut kraus = (h_eff * C64::new(0.0, -dt)).exp();
        // H_eff is block diagonal in {|0⟩} ⊕ {|↓⟩, |↑⟩}; keep the zeros exact so
        // an occupied state never acquires empty-dot population.
        for k in 1..3 {
            kraus[(0, k)] = C64::new(0.0, 0.0);
            kraus[(k, 0)] = C64::new(0.0, 0.0);
        }
        Ok(Self {
            kraus,
            gamma_down_dt: gd,
            gamma_up_dt: gu,
        })
    }

    pub fn jump_probabilities(&self, rho: &DensityMatrix) -> JumpProbabilities {
        JumpProbabilities {
            p_in: rho.population(BasisIndex::Empty) * self.gamma_down_dt,
            p_out: rho.population(BasisIndex::Up) * self.gamma_up_dt,
        }
    }

    /// Renormalized no-jump state and the jump probabilities of the input state.
    pub fn step(&self, rho: &DensityMatrix) -> Result<(DensityMatrix, JumpProbabilities)> {
        let probs = self.jump_probabilities(rho);
        let evolved = self.kraus * rho.matrix() * self.kraus.adjoint();
        let (next, _) = DensityMatrix::from_unnormalized(&evolved)?;
        Ok((next, probs))
    }
}

/// One no-jump step. Builds the step operator on every call; use
/// [`NoJumpStepper`] in loops.
pub fn step_no_jump(
    rho: &DensityMatrix,
    params: &ModelParams,
    dt_sim: f64,
) -> Result<(DensityMatrix, JumpProbabilities)> {
    NoJumpStepper::new(params, dt_sim)?.step(rho)
}

/// Simulated ground truth: charge occupancy and spin-up population on the
/// `dt_sim` grid, plus the jump list.
///
/// Sample `i` describes the interval `[i·dt_sim, (i+1)·dt_sim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub params: ModelParams,
    pub seed: u64,
    /// µs
    pub duration: f64,
    pub events: Vec<JumpEvent>,
    pub p_up: Vec<f64>,
    pub occupied: Vec<bool>,
}

impl TrajectoryRecord {
    pub fn n_steps(&self) -> usize {
        self.occupied.len()
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.params.dt_sim
    }

    /// Maximal runs of equal occupancy as `(occupied, first_step, len)`.
    pub fn runs(&self) -> Vec<(bool, usize, usize)> {
        run_lengths(&self.occupied)
    }

    /// Durations of the complete (not boundary-truncated) intervals with the
    /// given occupancy [µs].
    pub fn complete_intervals(&self, occupied: bool) -> Vec<f64> {
        let runs = self.runs();
        let n = runs.len();
        runs.into_iter()
            .enumerate()
            .filter(|&(k, (occ, _, _))| occ == occupied && k > 0 && k + 1 < n)
            .map(|(_, (_, _, len))| len as f64 * self.params.dt_sim)
            .collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidState(m));
        if self.p_up.len() != self.occupied.len() {
            return bad("sample columns differ in length".into());
        }
        for w in self.events.windows(2) {
            if !(w[1].time > w[0].time) {
                return bad(format!("event times not increasing at {}", w[1].time));
            }
            if w[0].kind == w[1].kind {
                return bad(format!("consecutive {:?} events at {}", w[1].kind, w[1].time));
            }
        }
        for (i, (&p, &n)) in self.p_up.iter().zip(&self.occupied).enumerate() {
            if !(0.0..=1.0).contains(&p) || (!n && p != 0.0) {
                return bad(format!("sample {i}: p_up = {p}, occupied = {n}"));
            }
        }
        Ok(())
    }
}

pub(crate) fn run_lengths<T: PartialEq + Copy>(xs: &[T]) -> Vec<(T, usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=xs.len() {
        if i == xs.len() || xs[i] != xs[start] {
            if i > start {
                runs.push((xs[start], start, i - start));
            }
            start = i;
        }
    }
    runs
}

/// Simulates a trajectory starting from the empty dot.
pub fn simulate_trajectory(params: &ModelParams, duration: f64, seed: u64) -> Result<TrajectoryRecord> {
    params.validate()?;
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidParams(format!("duration must be >= 0, got {duration}")));
    }
    let n_steps = (duration / params.dt_sim).round() as usize;
    let stepper = NoJumpStepper::new(params, params.dt_sim)?;
    let mut rng = seeding::rng(seed);

    let mut rho = DensityMatrix::pure(BasisIndex::Empty);
    let mut occupied = false;
    let mut events = Vec::new();
    let mut p_up = Vec::with_capacity(n_steps);
    let mut occ = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        p_up.push(rho.population(BasisIndex::Up).clamp(0.0, 1.0));
        occ.push(occupied);
        let (next, probs) = stepper.step(&rho)?;
        let u: f64 = rng.gen();
        if u < probs.total() {
            let kind = if u < probs.p_in {
                JumpKind::ChargeIn
            } else {
                JumpKind::ChargeOut
            };
            rho = apply_jump(kind);
            occupied = kind == JumpKind::ChargeIn;
            events.push(JumpEvent {
                time: (i + 1) as f64 * params.dt_sim,
                kind,
            });
        } else {
            rho = next;
        }
    }
    Ok(TrajectoryRecord {
        params: *params,
        seed,
        duration: n_steps as f64 * params.dt_sim,
        events,
        p_up,
        occupied: occ,
    })
}

/// Pointwise mean and standard error of the occupancy over an ensemble.
#[derive(Clone, Debug)]
pub struct EnsembleOccupation {
    pub n_trajectories: usize,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Runs `n` trajectories with seeds derived from `root_seed` and averages the
/// occupancy on the `dt_sim` grid.
pub fn ensemble_occupation(
    params: &ModelParams,
    duration: f64,
    n: usize,
    root_seed: u64,
) -> Result<EnsembleOccupation> {
    use rayon::prelude::*;
    let sums = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let traj = simulate_trajectory(params, duration, seeding::derive_seed(root_seed, Stream::Trajectory, k))?;
            Ok(traj.occupied.iter().map(|&o| o as u32).collect::<Vec<u32>>())
        })
        .try_reduce(Vec::new, |mut a, b| {
            if a.is_empty() {
                return Ok(b);
            }
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            Ok(a)
        })?;
    let nf = n as f64;
    let mean: Vec<f64> = sums.iter().map(|&s| s as f64 / nf).collect();
    // Bernoulli samples: the sample variance is p(1-p)·n/(n-1).
    let std_error = mean
        .iter()
        .map(|&p| (p * (1.0 - p) / (nf - 1.0).max(1.0)).sqrt())
        .collect();
    Ok(EnsembleOccupation {
        n_trajectories: n,
        mean,
        std_error,
    })
}
