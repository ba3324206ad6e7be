//! Charge-sensor (QPC) model: synthetic count records and measurement operators.
//!
//! Electrons pass the sensor at rate `r₀` while the dot is empty and `r₁` while
//! it is occupied. Per electron-sized step `dt` the sensor acts through the
//! click/no-click pair
//!
//! ```text
//! M_c  = √(r₀dt) Π₀ + √(r₁dt) Π₁
//! M_nc = √(1-r₀dt) Π₀ + √(1-r₁dt) Π₁
//! ```
//!
//! and over a bin of length τ with `m` counts through
//! `M_m = √Poisson(m; r₀τ) Π₀ + √Poisson(m; r₁τ) Π₁`.

use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{empty_projector, occupied_projector, DensityMatrix, Mat3, ModelParams, C64};
use crate::seeding;
use crate::trajectory::TrajectoryRecord;

/// Elementary charge [C].
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Per-bin likelihoods below this are reported as underflowed.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Binned sensor output, the only data available to inference.
#[derive(Clone, Debug, PartialEq)]
pub struct CountRecord {
    /// τ [µs]
    pub bin_dt: f64,
    pub counts: Vec<u64>,
    /// counts/µs
    pub r0: f64,
    /// counts/µs
    pub r1: f64,
    pub seed: u64,
}

impl CountRecord {
    pub fn new(bin_dt: f64, counts: Vec<u64>, r0: f64, r1: f64, seed: u64) -> Self {
        Self {
            bin_dt,
            counts,
            r0,
            r1,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// µs
    pub fn duration(&self) -> f64 {
        self.counts.len() as f64 * self.bin_dt
    }

    /// First `n` bins.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.counts.truncate(n);
        out
    }

    /// Sensor current per bin [nA].
    pub fn currents(&self) -> Vec<f64> {
        self.counts.iter().map(|&m| current_from_counts(m, self.bin_dt)).collect()
    }
}

/// `I = m e / τ` in nA for `m` counts in a bin of `tau_us` µs.
pub fn current_from_counts(m: u64, tau_us: f64) -> f64 {
    m as f64 * ELEMENTARY_CHARGE / (tau_us * 1e-6) * 1e9
}

/// Draws a count for every bin with mean `r₀·(time empty) + r₁·(time occupied)`.
pub fn synthesize_counts(traj: &TrajectoryRecord, params: &ModelParams, seed: u64) -> Result<CountRecord> {
    params.validate()?;
    if (traj.params.dt_sim - params.dt_sim).abs() > 1e-12 * params.dt_sim {
        return Err(Error::InvalidInput(format!(
            "trajectory step {} differs from configured dt_sim {}",
            traj.params.dt_sim, params.dt_sim
        )));
    }
    let per_bin = params.steps_per_bin()?;
    if traj.n_steps() % per_bin != 0 {
        return Err(Error::InvalidInput(format!(
            "trajectory of {} steps does not split into bins of {per_bin} steps",
            traj.n_steps()
        )));
    }
    let mut rng = seeding::rng(seed);
    let mut counts = Vec::with_capacity(traj.n_steps() / per_bin);
    for chunk in traj.occupied.chunks(per_bin) {
        let occupied_steps = chunk.iter().filter(|&&o| o).count();
        let t_occ = occupied_steps as f64 * params.dt_sim;
        let t_empty = (chunk.len() - occupied_steps) as f64 * params.dt_sim;
        let mean = params.r0 * t_empty + params.r1 * t_occ;
        counts.push(sample_poisson(mean, &mut rng));
    }
    Ok(CountRecord::new(params.bin_dt, counts, params.r0, params.r1, seed))
}

pub(crate) fn sample_poisson(mean: f64, rng: &mut seeding::Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Exact `ln n!` for `n ≤ 20`.
const LN_FACTORIAL_TABLE: [f64; 21] = {
    let mut t = [0.0; 21];
    let mut f = 1.0f64;
    let mut n = 1;
    while n <= 20 {
        f *= n as f64;
        t[n] = f;
        n += 1;
    }
    t
};

/// `ln m!`: exact table up to 20, Stirling series beyond (error < 1e-15 relative).
pub fn ln_factorial(m: u64) -> f64 {
    if m <= 20 {
        return if m < 2 { 0.0 } else { LN_FACTORIAL_TABLE[m as usize].ln() };
    }
    let n = m as f64;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    n * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI * n).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// `ln Poisson(m; mean)`; `-∞` for impossible outcomes.
pub fn log_poisson_pmf(m: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return if m == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    m as f64 * mean.ln() - mean - ln_factorial(m)
}

fn ln_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Measurement operator for `count` electrons in one bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinMeasurement {
    pub count: u64,
    /// `ln Poisson(m; r₀τ)`
    pub log_w0: f64,
    /// `ln Poisson(m; r₁τ)`
    pub log_w1: f64,
}

impl BinMeasurement {
    /// `mean0 = r₀τ`, `mean1 = r₁τ`.
    pub fn new(count: u64, mean0: f64, mean1: f64) -> Self {
        Self {
            count,
            log_w0: log_poisson_pmf(count, mean0),
            log_w1: log_poisson_pmf(count, mean1),
        }
    }

    pub fn from_params(count: u64, params: &ModelParams) -> Self {
        let (m0, m1) = params.mean_counts();
        Self::new(count, m0, m1)
    }

    /// Arbitrary count likelihoods, e.g. binomial weights of a finely sampled detector.
    pub fn from_log_weights(count: u64, log_w0: f64, log_w1: f64) -> Self {
        Self { count, log_w0, log_w1 }
    }

    pub fn weights(&self) -> (f64, f64) {
        (self.log_w0.exp(), self.log_w1.exp())
    }

    /// `M_m = √w₀ Π₀ + √w₁ Π₁`
    pub fn operator(&self) -> Mat3 {
        let (w0, w1) = self.weights();
        empty_projector() * C64::new(w0.sqrt(), 0.0) + occupied_projector() * C64::new(w1.sqrt(), 0.0)
    }

    /// `ln tr(M ρ M†)` for an unnormalized positive matrix.
    pub(crate) fn log_likelihood_of(&self, rho: &Mat3) -> f64 {
        let p0 = rho[(0, 0)].re.max(0.0);
        let p1 = (rho[(1, 1)].re + rho[(2, 2)].re).max(0.0);
        ln_add_exp(p0.ln() + self.log_w0, p1.ln() + self.log_w1)
    }

    /// `M X M†` up to a positive factor chosen to give the result roughly unit
    /// trace; returns the scaled matrix and the log of the factor divided out.
    pub(crate) fn sandwich_scaled(&self, x: &Mat3) -> (Mat3, f64) {
        let hi = self.log_likelihood_of(x);
        if hi == f64::NEG_INFINITY || hi.is_nan() {
            return (Mat3::zeros(), hi);
        }
        // Clamped so that a vanishing population times a huge factor stays finite.
        let s0 = (0.5 * (self.log_w0 - hi)).clamp(-745.0, 350.0).exp();
        let s1 = (0.5 * (self.log_w1 - hi)).clamp(-745.0, 350.0).exp();
        let s = [s0, s1, s1];
        let mut out = *x;
        for r in 0..3 {
            for c in 0..3 {
                out[(r, c)] *= s[r] * s[c];
            }
        }
        (out, hi)
    }
}

/// Deviation of the truncated `Σ_m M_m†M_m` from the identity, summing
/// `m ≤ r_max τ + 10√(r_max τ)`.
pub fn completeness_defect(mean0: f64, mean1: f64) -> f64 {
    let r_max = mean0.max(mean1);
    let m_max = (r_max + 10.0 * r_max.sqrt()).ceil() as u64;
    let mut sum = Mat3::zeros();
    for m in 0..=m_max {
        let op = BinMeasurement::new(m, mean0, mean1).operator();
        sum += op.adjoint() * op;
    }
    (sum - Mat3::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Outcome of one sensor update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinUpdate {
    pub state: DensityMatrix,
    pub log_likelihood: f64,
    /// Set when `exp(log_likelihood)` is below [`LIKELIHOOD_FLOOR`].
    pub underflow: bool,
}

impl BinUpdate {
    pub fn likelihood(&self) -> f64 {
        self.log_likelihood.exp()
    }
}

/// Elementary click/no-click update over a step with `r₀dt`, `r₁dt`. Returns
/// the conditioned state and the probability of the outcome.
pub fn elementary_povm(rho: &DensityMatrix, clicked: bool, r0_dt: f64, r1_dt: f64) -> Result<(DensityMatrix, f64)> {
    for p in [r0_dt, r1_dt] {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParams(format!("r*dt must lie in [0, 1), got {p}")));
        }
    }
    let (a0, a1) = if clicked {
        (r0_dt.sqrt(), r1_dt.sqrt())
    } else {
        ((1.0 - r0_dt).sqrt(), (1.0 - r1_dt).sqrt())
    };
    let m = empty_projector() * C64::new(a0, 0.0) + occupied_projector() * C64::new(a1, 0.0);
    let out = m * rho.matrix() * m.adjoint();
    let p = out.trace().re;
    if !(p > 0.0) {
        return Err(Error::Degenerate(format!("outcome has probability {p}")));
    }
    let (state, _) = DensityMatrix::from_unnormalized(&out)?;
    Ok((state, p))
}

/// Sensor update for a whole bin with `m` counts.
pub fn bin_povm(rho: &DensityMatrix, m: u64, params: &ModelParams) -> Result<BinUpdate> {
    apply_bin(rho, &BinMeasurement::from_params(m, params))
}

pub fn apply_bin(rho: &DensityMatrix, meas: &BinMeasurement) -> Result<BinUpdate> {
    let log_likelihood = meas.log_likelihood_of(rho.matrix());
    if log_likelihood == f64::NEG_INFINITY {
        return Err(Error::Degenerate(format!("count {} is impossible in this state", meas.count)));
    }
    let (scaled, _) = meas.sandwich_scaled(rho.matrix());
    let (state, _) = DensityMatrix::from_unnormalized(&scaled)?;
    Ok(BinUpdate {
        state,
        log_likelihood,
        underflow: log_likelihood < LIKELIHOOD_FLOOR.ln(),
    })
}
