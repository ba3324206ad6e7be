//! Occupation inference from a count record.
//!
//! Bins are indexed `k = 0..K`; bin `k` covers `[kτ, (k+1)τ)`. The forward
//! filter propagates over the bin with `exp(Lτ)` and then applies the bin's
//! measurement operator, so `ρ_k` is the state at `(k+1)τ` given counts
//! `m_0..=m_k`. The effect matrix `E_k` at the same instant summarizes counts
//! `m_{k+1}..`: `E_{K-1} = I` and `E_{k-1} = exp(L†τ)(M_{m_k}† E_k M_{m_k})`.
//! Effects are rescaled to unit trace after every bin; the past-quantum-state
//! probabilities are invariant under that rescaling.

use crate::error::{Error, Result};
use crate::model::{DensityMatrix, EffectMatrix, Lindbladian, ModelParams, Propagator};
use crate::sensor::{BinMeasurement, CountRecord};

/// Default decision threshold on the occupation probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Everything the filter needs: dynamics over one bin, prior and sensor rates.
#[derive(Clone, Debug)]
pub struct InferenceModel {
    lindbladian: Lindbladian,
    propagator: Propagator,
    prior: DensityMatrix,
    bin_dt: f64,
    mean_counts: (f64, f64),
}

impl InferenceModel {
    /// The dot model started from its stationary state.
    pub fn from_params(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let lindbladian = Lindbladian::from_params(params);
        let prior = lindbladian.steady_state()?;
        Self::new(lindbladian, params.bin_dt, params.r0, params.r1, prior)
    }

    /// Arbitrary three-level dynamics with the dot's sensor model.
    pub fn new(lindbladian: Lindbladian, bin_dt: f64, r0: f64, r1: f64, prior: DensityMatrix) -> Result<Self> {
        let propagator = Propagator::new(&lindbladian, bin_dt)?;
        Ok(Self {
            lindbladian,
            propagator,
            prior,
            bin_dt,
            mean_counts: (r0 * bin_dt, r1 * bin_dt),
        })
    }

    pub fn with_prior(mut self, prior: DensityMatrix) -> Self {
        self.prior = prior;
        self
    }

    pub fn lindbladian(&self) -> &Lindbladian {
        &self.lindbladian
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn prior(&self) -> &DensityMatrix {
        &self.prior
    }

    pub fn bin_dt(&self) -> f64 {
        self.bin_dt
    }

    /// Measurement operators for every bin of a record with a matching τ.
    pub fn measurements(&self, record: &CountRecord) -> Result<Vec<BinMeasurement>> {
        if (record.bin_dt - self.bin_dt).abs() > 1e-12 * self.bin_dt {
            return Err(Error::InvalidInput(format!(
                "record bin duration {} µs does not match model bin duration {} µs",
                record.bin_dt, self.bin_dt
            )));
        }
        let (m0, m1) = self.mean_counts;
        Ok(record.counts.iter().map(|&m| BinMeasurement::new(m, m0, m1)).collect())
    }
}

/// Incremental forward filter.
#[derive(Clone, Debug)]
pub struct ForwardFilter<'a> {
    model: &'a InferenceModel,
    state: DensityMatrix,
    log_likelihood: f64,
    bins: usize,
}

impl<'a> ForwardFilter<'a> {
    pub fn new(model: &'a InferenceModel) -> Self {
        Self {
            model,
            state: model.prior,
            log_likelihood: 0.0,
            bins: 0,
        }
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Advances over one bin; returns the log-likelihood of its count.
    pub fn step(&mut self, meas: &BinMeasurement) -> Result<f64> {
        let predicted = self.model.propagator.apply(self.state.matrix());
        let trace = predicted.trace().re;
        let ll = meas.log_likelihood_of(&predicted) - trace.ln();
        // Log-space keeps tiny likelihoods usable; only an impossible count aborts.
        if !ll.is_finite() {
            return Err(Error::LikelihoodUnderflow {
                bin: self.bins,
                log_likelihood: ll,
            });
        }
        let (scaled, _) = meas.sandwich_scaled(&predicted);
        self.state = DensityMatrix::from_unnormalized(&scaled)?.0;
        self.log_likelihood += ll;
        self.bins += 1;
        Ok(ll)
    }
}

/// Conditioned states after each bin's update.
#[derive(Clone, Debug)]
pub struct FilterTimeline {
    pub bin_dt: f64,
    pub states: Vec<DensityMatrix>,
    pub log_likelihood_increments: Vec<f64>,
}

impl FilterTimeline {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `P_occ(t_k) = ρ↓↓ + ρ↑↑`
    pub fn occupation(&self) -> Vec<f64> {
        self.states.iter().map(DensityMatrix::occupation).collect()
    }

    pub fn total_log_likelihood(&self) -> f64 {
        self.log_likelihood_increments.iter().sum()
    }

    /// End time of each bin [µs].
    pub fn times(&self) -> Vec<f64> {
        bin_end_times(self.bin_dt, self.len())
    }
}

pub(crate) fn bin_end_times(bin_dt: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 * bin_dt).collect()
}

pub fn filter_with(model: &InferenceModel, record: &CountRecord) -> Result<FilterTimeline> {
    let meas = model.measurements(record)?;
    filter_measurements(model, &meas)
}

pub(crate) fn filter_measurements(model: &InferenceModel, meas: &[BinMeasurement]) -> Result<FilterTimeline> {
    let mut filter = ForwardFilter::new(model);
    let mut states = Vec::with_capacity(meas.len());
    let mut increments = Vec::with_capacity(meas.len());
    for m in meas {
        increments.push(filter.step(m)?);
        states.push(filter.state);
    }
    Ok(FilterTimeline {
        bin_dt: model.bin_dt,
        states,
        log_likelihood_increments: increments,
    })
}

/// Forward filter from the stationary state of the master equation.
pub fn filter_forward(record: &CountRecord, params: &ModelParams) -> Result<FilterTimeline> {
    filter_with(&InferenceModel::from_params(params)?, record)
}

/// One backward step: `E_{k-1} ∝ exp(L†τ)(M_k† E_k M_k)`.
pub(crate) fn backward_step(model: &InferenceModel, effect: &EffectMatrix, meas: &BinMeasurement) -> Result<EffectMatrix> {
    let pre = pre_measurement_effect(effect, meas)?;
    let back = model.propagator.apply_adjoint(pre.matrix());
    Ok(EffectMatrix::normalized(&back)?.0)
}

/// `M_k† E_k M_k`, rescaled: the effect just before bin `k`'s count is registered.
pub(crate) fn pre_measurement_effect(effect: &EffectMatrix, meas: &BinMeasurement) -> Result<EffectMatrix> {
    let (scaled, _) = meas.sandwich_scaled(effect.matrix());
    Ok(EffectMatrix::normalized(&scaled)?.0)
}

pub(crate) fn backward_measurements(model: &InferenceModel, meas: &[BinMeasurement]) -> Result<Vec<EffectMatrix>> {
    if meas.is_empty() {
        return Ok(vec![EffectMatrix::identity()]);
    }
    let mut effects = vec![EffectMatrix::identity(); meas.len()];
    for k in (1..meas.len()).rev() {
        effects[k - 1] = backward_step(model, &effects[k], &meas[k])?;
    }
    Ok(effects)
}

pub fn effect_backward_with(model: &InferenceModel, record: &CountRecord) -> Result<Vec<EffectMatrix>> {
    backward_measurements(model, &model.measurements(record)?)
}

/// Effect matrices `E_k` for every bin (a single identity for an empty record).
pub fn effect_backward(record: &CountRecord, params: &ModelParams) -> Result<Vec<EffectMatrix>> {
    effect_backward_with(&InferenceModel::from_params(params)?, record)
}

/// Past-quantum-state probability that the dot is occupied, for the
/// projective charge measurement `{Π₀, Π₁}`.
pub fn pqs_occupation(rho: &DensityMatrix, effect: &EffectMatrix) -> Result<f64> {
    let r = rho.matrix();
    let e = effect.matrix();
    // tr(Π ρ Π E) = Σ_{i,j ∈ Π} ρ_ij E_ji
    let empty = (r[(0, 0)] * e[(0, 0)]).re;
    let mut occupied = 0.0;
    for i in 1..3 {
        for j in 1..3 {
            occupied += (r[(i, j)] * e[(j, i)]).re;
        }
    }
    let empty = empty.max(0.0);
    let occupied = occupied.max(0.0);
    let norm = empty + occupied;
    if !(norm >= 1e-300) {
        return Err(Error::Degenerate(format!(
            "state and effect are inconsistent (normalization {norm:e})"
        )));
    }
    Ok(occupied / norm)
}

/// Filter and smoothed occupation per bin.
#[derive(Clone, Debug)]
pub struct SmoothedTimeline {
    pub bin_dt: f64,
    pub filter: Vec<f64>,
    pub pqs: Vec<f64>,
    /// Stored only when the record fits the in-memory limit.
    pub effects: Option<Vec<EffectMatrix>>,
    pub log_likelihood: f64,
}

impl SmoothedTimeline {
    pub fn len(&self) -> usize {
        self.pqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pqs.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        bin_end_times(self.bin_dt, self.len())
    }

    /// Occupied (`true`) where the smoothed probability exceeds `threshold`.
    pub fn assigned(&self, threshold: f64) -> Vec<bool> {
        self.pqs.iter().map(|&p| p > threshold).collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SmoothOptions {
    /// Records up to this many bins keep every effect matrix in memory.
    pub max_stored_bins: usize,
    /// Filter checkpoint spacing for longer records.
    pub checkpoint_interval: usize,
}

impl Default for SmoothOptions {
    fn default() -> Self {
        Self {
            max_stored_bins: 1_000_000,
            checkpoint_interval: 1_000,
        }
    }
}

pub fn smooth_with(model: &InferenceModel, record: &CountRecord, opts: &SmoothOptions) -> Result<SmoothedTimeline> {
    let meas = model.measurements(record)?;
    if meas.len() <= opts.max_stored_bins {
        let filtered = filter_measurements(model, &meas)?;
        let effects = backward_measurements(model, &meas)?;
        let pqs = filtered
            .states
            .iter()
            .zip(&effects)
            .map(|(r, e)| pqs_occupation(r, e))
            .collect::<Result<Vec<_>>>()?;
        return Ok(SmoothedTimeline {
            bin_dt: model.bin_dt,
            filter: filtered.occupation(),
            pqs,
            log_likelihood: filtered.total_log_likelihood(),
            effects: Some(effects),
        });
    }
    smooth_checkpointed(model, &meas, opts.checkpoint_interval.max(1))
}

/// Two-pass smoothing that keeps one filter state per block and recomputes
/// each block's states during the backward sweep.
fn smooth_checkpointed(model: &InferenceModel, meas: &[BinMeasurement], block: usize) -> Result<SmoothedTimeline> {
    let n = meas.len();
    let mut filter = ForwardFilter::new(model);
    let mut checkpoints = Vec::with_capacity(n / block + 1);
    let mut occupation = Vec::with_capacity(n);
    for (k, m) in meas.iter().enumerate() {
        if k % block == 0 {
            checkpoints.push(filter.clone());
        }
        filter.step(m)?;
        occupation.push(filter.state.occupation());
    }
    let log_likelihood = filter.log_likelihood;

    let mut pqs = vec![0.0; n];
    let mut effect = EffectMatrix::identity();
    for (b, start_filter) in checkpoints.into_iter().enumerate().rev() {
        let start = b * block;
        let end = (start + block).min(n);
        let mut f = start_filter;
        let mut states = Vec::with_capacity(end - start);
        for m in &meas[start..end] {
            f.step(m)?;
            states.push(f.state);
        }
        for k in (start..end).rev() {
            pqs[k] = pqs_occupation(&states[k - start], &effect)?;
            if k > 0 {
                effect = backward_step(model, &effect, &meas[k])?;
            }
        }
    }
    Ok(SmoothedTimeline {
        bin_dt: model.bin_dt,
        filter: occupation,
        pqs,
        effects: None,
        log_likelihood,
    })
}

/// Forward filter and past-quantum-state smoother combined.
pub fn smooth(record: &CountRecord, params: &ModelParams) -> Result<SmoothedTimeline> {
    smooth_with(&InferenceModel::from_params(params)?, record, &SmoothOptions::default())
}

/// Fraction of bins whose assignment (`p > threshold`) disagrees with the truth.
pub fn misassignment_fraction(probabilities: &[f64], truth: &[bool], threshold: f64) -> f64 {
    assert_eq!(probabilities.len(), truth.len(), "timeline and truth differ in length");
    if truth.is_empty() {
        return 0.0;
    }
    let wrong = probabilities
        .iter()
        .zip(truth)
        .filter(|(&p, &t)| (p > threshold) != t)
        .count();
    wrong as f64 / truth.len() as f64
}

/// Majority occupancy of each bin of a ground-truth occupancy series sampled
/// `per_bin` times per bin. Ties count as occupied.
pub fn bin_truth(occupied: &[bool], per_bin: usize) -> Vec<bool> {
    occupied
        .chunks(per_bin)
        .map(|c| 2 * c.iter().filter(|&&o| o).count() >= c.len())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BasisIndex, JumpChannel, Mat3, C64};
    use crate::sensor::{synthesize_counts, LIKELIHOOD_FLOOR};
    use crate::trajectory::simulate_trajectory;
    use approx::assert_abs_diff_eq;

    fn default_record(duration: f64, seed: u64) -> (crate::trajectory::TrajectoryRecord, CountRecord) {
        let p = ModelParams::default();
        let traj = simulate_trajectory(&p, duration, seed).unwrap();
        let rec = synthesize_counts(&traj, &p, seed ^ 0xabc).unwrap();
        (traj, rec)
    }

    #[test]
    fn pqs_examples() {
        let rho = DensityMatrix::diagonal([0.3, 0.4, 0.3]).unwrap();
        let p = pqs_occupation(&rho, &EffectMatrix::identity()).unwrap();
        assert_abs_diff_eq!(p, rho.occupation(), epsilon = 1e-15);

        let occ = DensityMatrix::diagonal([0.0, 0.5, 0.5]).unwrap();
        let e = EffectMatrix::new(Mat3::from_diagonal(&nalgebra::Vector3::new(
            C64::new(0.7, 0.0),
            C64::new(0.2, 0.0),
            C64::new(0.1, 0.0),
        )))
        .unwrap();
        assert_eq!(pqs_occupation(&occ, &e).unwrap(), 1.0);

        let rho = DensityMatrix::diagonal([0.5, 0.5, 0.0]).unwrap();
        let e = EffectMatrix::new(Mat3::from_diagonal(&nalgebra::Vector3::new(
            C64::new(0.1, 0.0),
            C64::new(0.9, 0.0),
            C64::new(0.9, 0.0),
        )))
        .unwrap();
        assert_abs_diff_eq!(pqs_occupation(&rho, &e).unwrap(), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn pqs_degenerate_pair_is_an_error() {
        let rho = DensityMatrix::pure(BasisIndex::Empty);
        let e = EffectMatrix::new(BasisIndex::Up.projector()).unwrap();
        assert!(pqs_occupation(&rho, &e).is_err());
    }

    #[test]
    fn effect_scale_invariance_is_exact() {
        let (_, rec) = default_record(20.0, 5);
        let p = ModelParams::default();
        let filtered = filter_forward(&rec, &p).unwrap();
        let effects = effect_backward(&rec, &p).unwrap();
        for (r, e) in filtered.states.iter().zip(&effects).step_by(37) {
            let base = pqs_occupation(r, e).unwrap();
            for s in [0.25, 2.0, 1024.0, 2f64.powi(-40)] {
                assert_eq!(pqs_occupation(r, &e.scaled(s)).unwrap(), base);
            }
            assert_abs_diff_eq!(pqs_occupation(r, &e.scaled(3.7)).unwrap(), base, epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_record() {
        let rec = CountRecord::new(0.01, vec![], 31210.0, 24970.0, 0);
        let effects = effect_backward(&rec, &ModelParams::default()).unwrap();
        assert_eq!(effects, vec![EffectMatrix::identity()]);
        let s = smooth(&rec, &ModelParams::default()).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn uninformative_sensor_keeps_stationary_state() {
        let p = ModelParams::default().with_sensor(28000.0, 28000.0);
        let traj = simulate_trajectory(&p, 20.0, 9).unwrap();
        let rec = synthesize_counts(&traj, &p, 10).unwrap();
        let ss = Lindbladian::from_params(&p).steady_state().unwrap().occupation();
        let f = filter_forward(&rec, &p).unwrap();
        for occ in f.occupation() {
            assert_abs_diff_eq!(occ, ss, epsilon = 1e-9);
        }
    }

    #[test]
    fn uninformative_static_effects_stay_identity() {
        let p = ModelParams::default().with_omega(0.0).with_rates(0.0, 0.0).with_sensor(300.0, 300.0);
        let model = InferenceModel::new(
            Lindbladian::from_params(&p),
            p.bin_dt,
            p.r0,
            p.r1,
            DensityMatrix::diagonal([0.5, 0.25, 0.25]).unwrap(),
        )
        .unwrap();
        let rec = CountRecord::new(p.bin_dt, vec![3, 0, 7, 2, 4, 1], p.r0, p.r1, 0);
        let third = C64::new(1.0 / 3.0, 0.0);
        for e in effect_backward_with(&model, &rec).unwrap() {
            let diff = e.matrix() * C64::new(1.0 / e.matrix().trace().re, 0.0) - Mat3::identity() * third;
            assert!(diff.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
        }
    }

    #[test]
    fn final_bin_matches_filter_exactly() {
        let (_, rec) = default_record(30.0, 21);
        let s = smooth(&rec, &ModelParams::default()).unwrap();
        assert_eq!(s.pqs.last(), s.filter.last());
        assert!(s.pqs.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn checkpointed_matches_in_memory() {
        let (_, rec) = default_record(40.0, 4);
        let model = InferenceModel::from_params(&ModelParams::default()).unwrap();
        let full = smooth_with(&model, &rec, &SmoothOptions::default()).unwrap();
        let opts = SmoothOptions {
            max_stored_bins: 10,
            checkpoint_interval: 333,
        };
        let chk = smooth_with(&model, &rec, &opts).unwrap();
        assert!(chk.effects.is_none());
        assert_eq!(full.filter, chk.filter);
        for (a, b) in full.pqs.iter().zip(&chk.pqs) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(full.log_likelihood, chk.log_likelihood);
    }

    #[test]
    fn mismatched_bin_duration_rejected() {
        let rec = CountRecord::new(0.02, vec![1, 2, 3], 31210.0, 24970.0, 0);
        assert!(matches!(smooth(&rec, &ModelParams::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn impossible_count_aborts() {
        // A frozen occupied dot with a silent sensor cannot produce counts.
        let p = ModelParams::default().with_omega(0.0).with_rates(0.0, 0.0).with_sensor(300.0, 0.0);
        let model = InferenceModel::new(
            Lindbladian::from_params(&p),
            p.bin_dt,
            p.r0,
            p.r1,
            DensityMatrix::pure(BasisIndex::Down),
        )
        .unwrap();
        let rec = CountRecord::new(p.bin_dt, vec![0, 0, 2, 0], p.r0, p.r1, 0);
        let err = filter_with(&model, &rec).unwrap_err();
        assert!(matches!(err, Error::LikelihoodUnderflow { bin: 2, .. }));
    }

    #[test]
    fn tiny_likelihoods_survive_in_log_space() {
        let rec = CountRecord::new(0.01, vec![312, 20_000, 311], 31210.0, 24970.0, 0);
        let f = filter_forward(&rec, &ModelParams::default()).unwrap();
        assert!(f.log_likelihood_increments[1] < LIKELIHOOD_FLOOR.ln());
        assert!(f.total_log_likelihood().is_finite());
    }

    #[test]
    fn extreme_separation_tracks_truth() {
        // r₀τ = 10⁴, r₁τ = 10²
        let p = ModelParams::default().with_sensor(1e6, 1e4);
        let traj = simulate_trajectory(&p, 200.0, 77).unwrap();
        let rec = synthesize_counts(&traj, &p, 78).unwrap();
        let f = filter_forward(&rec, &p).unwrap();
        let per_bin = p.steps_per_bin().unwrap();
        let truth = bin_truth(&traj.occupied, per_bin);
        // A bin containing a jump has a count between the two hypotheses and no
        // well-defined state, so it is scored separately.
        let clean: Vec<bool> =
            traj.occupied.chunks(per_bin).map(|c| c.iter().all(|&o| o == c[0])).collect();
        let occ = f.occupation();
        let pick = |keep: bool| -> (Vec<f64>, Vec<bool>) {
            (0..truth.len()).filter(|&k| clean[k] == keep).map(|k| (occ[k], truth[k])).unzip()
        };
        let (p_clean, t_clean) = pick(true);
        let err = misassignment_fraction(&p_clean, &t_clean, DEFAULT_THRESHOLD);
        assert!(err < 1e-3, "misassignment {err}");
        let (p_mixed, t_mixed) = pick(false);
        let wrong = misassignment_fraction(&p_mixed, &t_mixed, DEFAULT_THRESHOLD) * p_mixed.len() as f64;
        assert!(wrong <= 0.5 * p_mixed.len() as f64);
    }

    #[test]
    fn generic_model_accepts_custom_channels() {
        let l = Lindbladian::new(
            Mat3::zeros(),
            vec![
                JumpChannel::new(2.0, crate::model::ket_bra(BasisIndex::Down, BasisIndex::Empty)),
                JumpChannel::new(1.0, crate::model::ket_bra(BasisIndex::Empty, BasisIndex::Down)),
            ],
        );
        let model = InferenceModel::new(l, 0.01, 300.0, 100.0, DensityMatrix::diagonal([0.5, 0.5, 0.0]).unwrap()).unwrap();
        let rec = CountRecord::new(0.01, vec![3, 1, 0, 2], 300.0, 100.0, 0);
        let s = smooth_with(&model, &rec, &SmoothOptions::default()).unwrap();
        assert_eq!(s.len(), 4);
    }
}
