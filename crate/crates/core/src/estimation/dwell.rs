//! Dwell-time statistics of the inferred occupation.
//!
//! An electron enters in `|↓⟩`, precesses to `|↑⟩` and leaves from there, so
//! occupied intervals follow a damped Rabi law
//!
//! ```text
//! w(t) = (2Ω²γ↑/κ²) · exp(−tγ↓/2) · (1 − cos(tκ/2)),   κ = √(4Ω² − γ↑²)
//! ```
//!
//! which is normalized when `γ↑ = γ↓`. Empty intervals are exponential with
//! rate `γ↓`.

use serde::{Deserialize, Serialize};

use super::optimize::NelderMead;
use crate::error::{Error, Result};
use crate::smoother::SmoothedTimeline;
use crate::trajectory::run_lengths;

/// Histogram bin width used for plotting output [µs].
pub const DEFAULT_HISTOGRAM_WIDTH: f64 = 0.05;

/// Fewer empty intervals than this and `γ↓` is taken from the occupied fit.
pub const MIN_EMPTY_INTERVALS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DwellShape {
    omega: f64,
    gamma_up: f64,
    gamma_down: f64,
    kappa: f64,
}

impl DwellShape {
    /// Requires the underdamped regime `2Ω > max(γ↑, γ↓)`.
    pub fn new(omega: f64, gamma_up: f64, gamma_down: f64) -> Result<Self> {
        if !(omega > 0.0 && gamma_up > 0.0 && gamma_down > 0.0) || !(omega.is_finite() && gamma_up.is_finite() && gamma_down.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "dwell law needs positive finite Ω, γ↑, γ↓ (got {omega}, {gamma_up}, {gamma_down})"
            )));
        }
        if 2.0 * omega <= gamma_up.max(gamma_down) {
            return Err(Error::InvalidParams(format!(
                "overdamped regime 2Ω = {} ≤ max(γ↑, γ↓) = {} is not supported",
                2.0 * omega,
                gamma_up.max(gamma_down)
            )));
        }
        Ok(Self {
            omega,
            gamma_up,
            gamma_down,
            kappa: (4.0 * omega * omega - gamma_up * gamma_up).sqrt(),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn amplitude(&self) -> f64 {
        2.0 * self.omega * self.omega * self.gamma_up / (self.kappa * self.kappa)
    }

    pub fn pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let a = 0.5 * self.gamma_down;
        let b = 0.5 * self.kappa;
        // 1 − cos x = 2 sin²(x/2) keeps small t accurate.
        let s = (0.5 * b * t).sin();
        self.amplitude() * (-a * t).exp() * 2.0 * s * s
    }

    /// `∫_c^∞ w(t) dt`.
    pub fn tail(&self, c: f64) -> f64 {
        let c = c.max(0.0);
        let a = 0.5 * self.gamma_down;
        let b = 0.5 * self.kappa;
        let osc = (a * (b * c).cos() - b * (b * c).sin()) / (a * a + b * b);
        self.amplitude() * (-a * c).exp() * (1.0 / a - osc)
    }
}

/// Occupied-interval density, evaluated as written (exponent `γ↓`, `κ` from `γ↑`).
pub fn dwell_pdf(t: f64, omega: f64, gamma_up: f64, gamma_down: f64) -> Result<f64> {
    Ok(DwellShape::new(omega, gamma_up, gamma_down)?.pdf(t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellHistogram {
    /// Time resolution of the durations [µs]; zero for continuous samples.
    pub resolution: f64,
    /// Complete occupied intervals [µs].
    pub occupied: Vec<f64>,
    /// Complete empty intervals [µs].
    pub empty: Vec<f64>,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl DwellHistogram {
    pub fn new(occupied: Vec<f64>, empty: Vec<f64>, resolution: f64, bin_width: f64) -> Result<Self> {
        if let Some(bad) = occupied.iter().chain(&empty).find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidInput(format!("interval durations must be positive, got {bad}")));
        }
        if !(bin_width > 0.0) {
            return Err(Error::InvalidInput(format!("histogram bin width must be positive, got {bin_width}")));
        }
        // Offset by half the resolution so quantized durations sit mid-bin.
        let origin = -0.5 * resolution;
        let longest = occupied.iter().copied().fold(0.0, f64::max);
        let n_bins = ((longest - origin) / bin_width).floor() as usize + 1;
        let edges = (0..=n_bins).map(|i| origin + i as f64 * bin_width).collect();
        let mut counts = vec![0; n_bins];
        for &d in &occupied {
            counts[((d - origin) / bin_width).floor() as usize] += 1;
        }
        Ok(Self {
            resolution,
            occupied,
            empty,
            edges,
            counts,
        })
    }
}

/// Durations of complete occupied and empty runs of `probabilities > threshold`.
/// Runs touching either end of the record are discarded.
pub fn extract_dwells_from(probabilities: &[f64], bin_dt: f64, threshold: f64) -> Result<DwellHistogram> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidInput(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let assigned: Vec<bool> = probabilities.iter().map(|&p| p > threshold).collect();
    let runs = run_lengths(&assigned);
    let (mut occupied, mut empty) = (Vec::new(), Vec::new());
    if runs.len() > 2 {
        for &(state, _, len) in &runs[1..runs.len() - 1] {
            let d = len as f64 * bin_dt;
            if state {
                occupied.push(d);
            } else {
                empty.push(d);
            }
        }
    }
    DwellHistogram::new(occupied, empty, bin_dt, DEFAULT_HISTOGRAM_WIDTH.max(bin_dt))
}

pub fn extract_dwells(timeline: &SmoothedTimeline, threshold: f64) -> Result<DwellHistogram> {
    extract_dwells_from(&timeline.pqs, timeline.bin_dt, threshold)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupiedFit {
    pub omega: f64,
    /// Single tunneling rate used in both slots of the dwell law.
    pub gamma: f64,
    pub log_likelihood: f64,
    /// Durations below this were treated as unobservable [µs].
    pub cutoff: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellFit {
    pub omega: f64,
    pub gamma_up: f64,
    pub gamma_down: f64,
    pub occupied: OccupiedFit,
    /// `γ↓` from the empty intervals, when there were enough of them.
    pub gamma_down_empty: Option<f64>,
    pub n_occupied: usize,
    pub n_empty: usize,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `(ln Ω, logit(γ / 2Ω))` keeps every trial point underdamped.
fn unpack(x: &[f64]) -> (f64, f64) {
    let omega = x[0].exp();
    (omega, 2.0 * omega * sigmoid(x[1]))
}

fn distinct_count(xs: &[f64], resolution: f64) -> usize {
    let tol = (0.25 * resolution).max(1e-12);
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= tol);
    v.len()
}

/// Maximum-likelihood fit of `(Ω, γ)` with `γ↑ = γ↓ = γ` to occupied durations.
/// With a finite `resolution`, durations are conditioned on exceeding the
/// shortest observed one minus half a resolution step.
pub fn fit_occupied(durations: &[f64], resolution: f64) -> Result<OccupiedFit> {
    if durations.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
        return Err(Error::InvalidInput("interval durations must be positive and finite".into()));
    }
    if distinct_count(durations, resolution) < 3 {
        return Err(Error::InvalidInput(format!(
            "{} intervals with fewer than three distinct durations cannot identify Ω and γ",
            durations.len()
        )));
    }
    let shortest = durations.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = if resolution > 0.0 { (shortest - 0.5 * resolution).max(0.0) } else { 0.0 };
    let n = durations.len() as f64;
    let nll = |x: &[f64]| -> f64 {
        let (omega, gamma) = unpack(x);
        let Ok(shape) = DwellShape::new(omega, gamma, gamma) else {
            return f64::INFINITY;
        };
        let norm = shape.tail(cutoff);
        if !(norm > 0.0) {
            return f64::INFINITY;
        }
        let ll: f64 = durations.iter().map(|&t| shape.pdf(t).ln()).sum();
        -(ll - n * norm.ln())
    };

    let mut sorted = durations.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut omega_hi = 30.0 / median;
    if resolution > 0.0 {
        omega_hi = omega_hi.min(0.5 * std::f64::consts::PI / resolution);
    }
    let omega_lo = (0.1 / median).min(0.5 * omega_hi);
    let steps = 60;
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for i in 0..steps {
        let ln_omega = omega_lo.ln() + (omega_hi / omega_lo).ln() * i as f64 / (steps - 1) as f64;
        for j in 0..10 {
            let frac: f64 = 0.05 + 0.1 * j as f64;
            let x = vec![ln_omega, (frac / (1.0 - frac)).ln()];
            let v = nll(&x);
            if v < best.0 {
                best = (v, x);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(Error::NoConvergence("no finite likelihood on the starting grid".into()));
    }
    let min = NelderMead::default().minimize(nll, &best.1)?;
    let (omega, gamma) = unpack(&min.x);
    Ok(OccupiedFit {
        omega,
        gamma,
        log_likelihood: -min.value,
        cutoff,
        iterations: min.iterations,
    })
}

/// Rate of exponentially distributed durations. Quantized durations
/// (`resolution > 0`) are treated as geometric run lengths above the shortest
/// observed one.
pub fn empty_rate_mle(durations: &[f64], resolution: f64) -> Result<f64> {
    if durations.is_empty() {
        return Err(Error::InvalidInput("no empty intervals".into()));
    }
    if resolution > 0.0 {
        let bins: Vec<u64> = durations.iter().map(|d| (d / resolution).round() as u64).collect();
        let k_min = *bins.iter().min().unwrap();
        let excess: u64 = bins.iter().map(|k| k - k_min).sum();
        if excess == 0 {
            return Err(Error::InvalidInput("all empty intervals have the same length".into()));
        }
        let p = excess as f64 / (bins.len() as f64 + excess as f64);
        Ok(-p.ln() / resolution)
    } else {
        Ok(durations.len() as f64 / durations.iter().sum::<f64>())
    }
}

/// Fit of the occupied-interval law, with `γ↓` taken from the empty intervals
/// when at least [`MIN_EMPTY_INTERVALS`] are available.
pub fn fit_dwell_histogram(hist: &DwellHistogram) -> Result<DwellFit> {
    let occupied = fit_occupied(&hist.occupied, hist.resolution)?;
    let gamma_down_empty = if hist.empty.len() >= MIN_EMPTY_INTERVALS {
        Some(empty_rate_mle(&hist.empty, hist.resolution)?)
    } else {
        None
    };
    Ok(DwellFit {
        omega: occupied.omega,
        gamma_up: occupied.gamma,
        gamma_down: gamma_down_empty.unwrap_or(occupied.gamma),
        occupied,
        gamma_down_empty,
        n_occupied: hist.occupied.len(),
        n_empty: hist.empty.len(),
    })
}
