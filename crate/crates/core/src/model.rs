//! Three-level dot model.
//!
//! The Hilbert space is spanned by the empty dot `|0⟩` and the two singly
//! occupied spin states `|↓⟩`, `|↑⟩`, always in that order. A spin-down
//! electron tunnels in at rate `γ↓`, a spin-up electron tunnels out at rate
//! `γ↑`, and a resonant drive rotates `|↓⟩ ↔ |↑⟩` at angular Rabi frequency
//! `Ω`.
//!
//! Units: times in µs, `Ω` and the tunneling rates in rad/µs (equivalently
//! µs⁻¹), sensor count rates in counts/µs. See [`units`] for conversions.
//!
//! Superoperators act on column-stacked density matrices: `vec(ρ)[i + 3j] = ρ[i, j]`.

use nalgebra::{Matrix3, SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat3 = Matrix3<C64>;
pub type SuperOp = SMatrix<C64, 9, 9>;
pub(crate) type Vec9 = SVector<C64, 9>;

/// Entrywise tolerance on `M - M†`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on `tr ρ - 1` for normalized states.
pub const TRACE_TOL: f64 = 1e-9;
/// Most negative eigenvalue tolerated (and repaired) in a normalized state.
pub const EIGEN_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Basis states of the dot in matrix order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BasisIndex {
    Empty = 0,
    Down = 1,
    Up = 2,
}

impl BasisIndex {
    pub const ALL: [BasisIndex; 3] = [BasisIndex::Empty, BasisIndex::Down, BasisIndex::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_occupied(self) -> bool {
        self != BasisIndex::Empty
    }

    /// `|self⟩⟨self|`
    pub fn projector(self) -> Mat3 {
        ket_bra(self, self)
    }
}

/// `|a⟩⟨b|`
pub fn ket_bra(a: BasisIndex, b: BasisIndex) -> Mat3 {
    let mut m = Mat3::zeros();
    m[(a.index(), b.index())] = ONE;
    m
}

/// Π₀, the projector on the empty dot.
pub fn empty_projector() -> Mat3 {
    BasisIndex::Empty.projector()
}

/// Π₁, the projector on the charged dot (either spin).
pub fn occupied_projector() -> Mat3 {
    BasisIndex::Down.projector() + BasisIndex::Up.projector()
}

/// Physical configuration of the dot, the sensor and the time grids.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Rabi angular frequency Ω [rad/µs].
    pub omega: f64,
    /// Tunneling-in rate of a spin-down electron γ↓ [µs⁻¹].
    pub gamma_down: f64,
    /// Tunneling-out rate of a spin-up electron γ↑ [µs⁻¹].
    pub gamma_up: f64,
    /// Sensor count rate with the dot empty [counts/µs].
    pub r0: f64,
    /// Sensor count rate with the dot occupied [counts/µs].
    pub r1: f64,
    /// Trajectory simulation step [µs].
    pub dt_sim: f64,
    /// Measurement bin duration τ [µs].
    pub bin_dt: f64,
}

impl Default for ModelParams {
    /// Ω = 5, γ↓ = γ↑ = 3, r₀ = 31.21 GHz, r₁ = 24.97 GHz, 1 ns steps, 10 ns bins.
    fn default() -> Self {
        Self {
            omega: 5.0,
            gamma_down: 3.0,
            gamma_up: 3.0,
            r0: units::counts_per_us_from_ghz(31.21),
            r1: units::counts_per_us_from_ghz(24.97),
            dt_sim: 0.001,
            bin_dt: 0.01,
        }
    }
}

impl ModelParams {
    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn with_rates(mut self, gamma_down: f64, gamma_up: f64) -> Self {
        self.gamma_down = gamma_down;
        self.gamma_up = gamma_up;
        self
    }

    pub fn with_sensor(mut self, r0: f64, r1: f64) -> Self {
        self.r0 = r0;
        self.r1 = r1;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("omega", self.omega),
            ("gamma_down", self.gamma_down),
            ("gamma_up", self.gamma_up),
            ("r0", self.r0),
            ("r1", self.r1),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("dt_sim", self.dt_sim), ("bin_dt", self.bin_dt)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        self.steps_per_bin()?;
        for (name, g) in [("gamma_down", self.gamma_down), ("gamma_up", self.gamma_up)] {
            if g * self.dt_sim >= 0.1 {
                return Err(Error::InvalidParams(format!(
                    "{name}*dt_sim = {} must be < 0.1",
                    g * self.dt_sim
                )));
            }
        }
        if !self.is_informative() {
            log::warn!("r0 == r1: the sensor record carries no information about the charge");
        }
        Ok(())
    }

    /// Whether the two sensor rates differ.
    pub fn is_informative(&self) -> bool {
        self.r0 != self.r1
    }

    /// Number of simulation steps per measurement bin.
    pub fn steps_per_bin(&self) -> Result<usize> {
        let ratio = self.bin_dt / self.dt_sim;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParams(format!(
                "bin_dt ({}) must be an integer multiple of dt_sim ({})",
                self.bin_dt, self.dt_sim
            )));
        }
        Ok(n as usize)
    }

    /// Expected counts per bin for the empty and the occupied dot.
    pub fn mean_counts(&self) -> (f64, f64) {
        (self.r0 * self.bin_dt, self.r1 * self.bin_dt)
    }
}

/// Unit conversions. Frequencies quoted in MHz are read as angular rates in
/// rad/µs (1 MHz ↦ 1 rad/µs) so that occupied dwell times cluster at odd
/// multiples of π/Ω.
pub mod units {
    /// Angular rate [rad/µs] for a value quoted in MHz. The factor is one.
    pub fn angular_from_mhz(mhz: f64) -> f64 {
        mhz
    }

    /// Counts per µs for a sensor rate quoted in GHz (1 GHz = 1000 counts/µs).
    pub fn counts_per_us_from_ghz(ghz: f64) -> f64 {
        ghz * 1e3
    }
}

/// `H = Ω/2 (|↑⟩⟨↓| + |↓⟩⟨↑|)`
pub fn build_hamiltonian(omega: f64) -> Mat3 {
    let half = C64::new(omega / 2.0, 0.0);
    (ket_bra(BasisIndex::Up, BasisIndex::Down) + ket_bra(BasisIndex::Down, BasisIndex::Up)) * half
}

/// `c↓ = |0⟩⟨↓|`; the charging jump operator is its adjoint.
pub fn c_down() -> Mat3 {
    ket_bra(BasisIndex::Empty, BasisIndex::Down)
}

/// `c↑ = |0⟩⟨↑|`, the discharging jump operator.
pub fn c_up() -> Mat3 {
    ket_bra(BasisIndex::Empty, BasisIndex::Up)
}

fn commutator(a: &Mat3, b: &Mat3) -> Mat3 {
    a * b - b * a
}

fn anticommutator(a: &Mat3, b: &Mat3) -> Mat3 {
    a * b + b * a
}

/// A single Lindblad dissipation channel `rate · D[operator]`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpChannel {
    pub rate: f64,
    pub operator: Mat3,
}

impl JumpChannel {
    pub fn new(rate: f64, operator: Mat3) -> Self {
        Self { rate, operator }
    }

    /// `rate · L†L`
    fn decay(&self) -> Mat3 {
        self.operator.adjoint() * self.operator * C64::new(self.rate, 0.0)
    }

    /// `rate · L ρ L†`
    pub fn feed(&self, rho: &Mat3) -> Mat3 {
        self.operator * rho * self.operator.adjoint() * C64::new(self.rate, 0.0)
    }
}

/// Generator `L ρ = -i[H, ρ] + Σ γ_k (L_k ρ L_k† - ½{L_k†L_k, ρ})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lindbladian {
    pub hamiltonian: Mat3,
    pub channels: Vec<JumpChannel>,
}

impl Lindbladian {
    pub fn new(hamiltonian: Mat3, channels: Vec<JumpChannel>) -> Self {
        Self {
            hamiltonian,
            channels,
        }
    }

    /// The dot model: charging through `c↓†` at `γ↓`, discharging through `c↑` at `γ↑`.
    pub fn from_params(params: &ModelParams) -> Self {
        Self::new(
            build_hamiltonian(params.omega),
            vec![
                JumpChannel::new(params.gamma_down, c_down().adjoint()),
                JumpChannel::new(params.gamma_up, c_up()),
            ],
        )
    }

    /// Same dissipators, Hamiltonian removed.
    pub fn incoherent(&self) -> Self {
        Self::new(Mat3::zeros(), self.channels.clone())
    }

    /// `H_eff = H - (i/2) Σ γ_k L_k†L_k`
    pub fn effective_hamiltonian(&self) -> Mat3 {
        let decay: Mat3 = self.channels.iter().map(JumpChannel::decay).sum();
        self.hamiltonian - decay * C64::new(0.0, 0.5)
    }

    /// `dρ/dt` of the unconditioned master equation.
    pub fn rhs(&self, rho: &Mat3) -> Mat3 {
        let feed: Mat3 = self.channels.iter().map(|c| c.feed(rho)).sum();
        self.no_jump_rhs(rho) + feed
    }

    /// `dρ/dt` of the no-jump evolution: the master equation without the feed terms.
    pub fn no_jump_rhs(&self, rho: &Mat3) -> Mat3 {
        let mut out = commutator(&self.hamiltonian, rho) * -I;
        for c in &self.channels {
            out -= anticommutator(&c.decay(), rho) * C64::new(0.5, 0.0);
        }
        out
    }

    /// `dE/dt` of the adjoint generator `L†`, so that `tr(E L ρ) = tr((L† E) ρ)`.
    pub fn adjoint_rhs(&self, effect: &Mat3) -> Mat3 {
        let mut out = commutator(&self.hamiltonian, effect) * I;
        for c in &self.channels {
            let l = &c.operator;
            out += (l.adjoint() * effect * l) * C64::new(c.rate, 0.0)
                - anticommutator(&c.decay(), effect) * C64::new(0.5, 0.0);
        }
        out
    }

    /// The generator as a 9×9 matrix acting on `vec(ρ)`.
    pub fn superoperator(&self) -> SuperOp {
        let id = Mat3::identity();
        let h = &self.hamiltonian;
        let mut s = (kron(&id, h) - kron(&h.transpose(), &id)) * -I;
        for c in &self.channels {
            let l = &c.operator;
            let ldl = l.adjoint() * l;
            let rate = C64::new(c.rate, 0.0);
            s += (kron(&l.conjugate(), l)
                - kron(&id, &ldl) * C64::new(0.5, 0.0)
                - kron(&ldl.transpose(), &id) * C64::new(0.5, 0.0))
                * rate;
        }
        s
    }

    /// Stationary state of the master equation.
    ///
    /// Fails when the stationary state is not unique.
    pub fn steady_state(&self) -> Result<DensityMatrix> {
        let mut a = self.superoperator();
        let mut b = Vec9::zeros();
        for col in 0..9 {
            a[(0, col)] = ZERO;
        }
        for k in 0..3 {
            a[(0, k * 4)] = ONE;
        }
        b[0] = ONE;
        let lu = a.lu();
        if !lu.is_invertible() {
            return Err(Error::Degenerate("stationary state is not unique".into()));
        }
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Degenerate("stationary state is not unique".into()))?;
        DensityMatrix::from_unnormalized(&unvec(&x)).map(|(rho, _)| rho)
    }
}

/// `a ⊗ b` with `vec(B X A^T) = (A ⊗ B) vec(X)`.
pub(crate) fn kron(a: &Mat3, b: &Mat3) -> SuperOp {
    let mut out = SuperOp::zeros();
    for (ar, ac) in pairs(3, 3) {
        let s = a[(ar, ac)];
        if s == ZERO {
            continue;
        }
        for (br, bc) in pairs(3, 3) {
            out[(ar * 3 + br, ac * 3 + bc)] = s * b[(br, bc)];
        }
    }
    out
}

fn pairs(n: usize, m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..m).map(move |j| (i, j)))
}

pub(crate) fn vec(m: &Mat3) -> Vec9 {
    Vec9::from_column_slice(m.as_slice())
}

pub(crate) fn unvec(v: &Vec9) -> Mat3 {
    Mat3::from_column_slice(v.as_slice())
}

/// `dρ/dt` of the master equation for the dot model.
pub fn lindblad_rhs(rho: &DensityMatrix, params: &ModelParams) -> Mat3 {
    Lindbladian::from_params(params).rhs(rho.matrix())
}

/// `dρ/dt` of the no-jump evolution for the dot model. The trace decays at
/// `γ↓ρ₀₀ + γ↑ρ↑↑`.
pub fn no_jump_rhs(rho: &DensityMatrix, params: &ModelParams) -> Mat3 {
    Lindbladian::from_params(params).no_jump_rhs(rho.matrix())
}

/// Exact fixed-duration propagator `exp(Lτ)` together with its adjoint `exp(L†τ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagator {
    tau: f64,
    forward: SuperOp,
    adjoint: SuperOp,
}

impl Propagator {
    pub fn new(generator: &Lindbladian, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidParams(format!("propagator duration must be > 0, got {tau}")));
        }
        // nalgebra's exp is a Padé scaling-and-squaring scheme.
        let forward = (generator.superoperator() * C64::new(tau, 0.0)).exp();
        // Hilbert-Schmidt adjoint: tr(E† X) = vec(E)† vec(X).
        let adjoint = forward.adjoint();
        Ok(Self {
            tau,
            forward,
            adjoint,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn forward(&self) -> &SuperOp {
        &self.forward
    }

    pub fn adjoint(&self) -> &SuperOp {
        &self.adjoint
    }

    /// `exp(Lτ) X` on an arbitrary matrix.
    pub fn apply(&self, m: &Mat3) -> Mat3 {
        unvec(&(self.forward * vec(m)))
    }

    /// `exp(L†τ) X` on an arbitrary matrix.
    pub fn apply_adjoint(&self, m: &Mat3) -> Mat3 {
        unvec(&(self.adjoint * vec(m)))
    }

    /// Propagates a state and renormalizes it.
    pub fn evolve(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        DensityMatrix::from_unnormalized(&self.apply(rho.matrix())).map(|(r, _)| r)
    }
}

pub fn make_propagator(params: &ModelParams, tau: f64) -> Result<Propagator> {
    Propagator::new(&Lindbladian::from_params(params), tau)
}

fn hermitian_defect(m: &Mat3) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitize(m: &Mat3) -> Mat3 {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn real_trace(m: &Mat3) -> f64 {
    m[(0, 0)].re + m[(1, 1)].re + m[(2, 2)].re
}

/// Sum of principal 2×2 minors and determinant of a Hermitian matrix; together
/// with the trace these are non-negative iff the matrix is PSD.
fn char_poly(m: &Mat3) -> (f64, f64) {
    let d = [m[(0, 0)].re, m[(1, 1)].re, m[(2, 2)].re];
    let c2 = d[0] * d[1] - m[(0, 1)].norm_sqr() + d[0] * d[2] - m[(0, 2)].norm_sqr() + d[1] * d[2]
        - m[(1, 2)].norm_sqr();
    let c3 = m.determinant().re;
    (c2, c3)
}

/// Hermitian, unit-trace, PSD repair. Eigenvalues in `[-EIGEN_TOL, 0)` are
/// clipped; anything more negative is an error.
fn normalize_psd(m: &Mat3, what: &str) -> Result<(Mat3, f64)> {
    let trace = real_trace(m);
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::InvalidState(format!("{what} has non-positive trace {trace}")));
    }
    let mut out = hermitize(m) * C64::new(1.0 / trace, 0.0);
    let (c2, c3) = char_poly(&out);
    if c2 >= 0.0 && c3 >= 0.0 && (0..3).all(|k| out[(k, k)].re >= 0.0) {
        return Ok((out, trace));
    }
    let eig = out.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min < -EIGEN_TOL {
        return Err(Error::InvalidState(format!("{what} has eigenvalue {min:e}")));
    }
    let clipped = eig.eigenvalues.map(|l| C64::new(l.max(0.0), 0.0));
    let v = eig.eigenvectors;
    out = v * Mat3::from_diagonal(&clipped) * v.adjoint();
    let t = real_trace(&out);
    out = hermitize(&out) * C64::new(1.0 / t, 0.0);
    Ok((out, trace))
}

fn check_valid(m: &Mat3, what: &str, check_trace: bool) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidState(format!("{what} has non-finite entries")));
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(Error::InvalidState(format!("{what} is not Hermitian (defect {defect:e})")));
    }
    let trace = real_trace(m);
    if check_trace && (trace - 1.0).abs() > TRACE_TOL {
        return Err(Error::InvalidState(format!("{what} has trace {trace}")));
    }
    let min = hermitize(m).symmetric_eigen().eigenvalues.min();
    if min < -EIGEN_TOL * trace.abs().max(1.0) {
        return Err(Error::InvalidState(format!("{what} has eigenvalue {min:e}")));
    }
    Ok(())
}

/// Normalized dot state ρ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix(Mat3);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: Mat3) -> Result<Self> {
        check_valid(&m, "density matrix", true)?;
        Ok(Self(m))
    }

    pub fn pure(b: BasisIndex) -> Self {
        Self(b.projector())
    }

    pub fn diagonal(populations: [f64; 3]) -> Result<Self> {
        let d = nalgebra::Vector3::from_iterator(populations.iter().map(|&p| C64::new(p, 0.0)));
        Self::new(Mat3::from_diagonal(&d))
    }

    /// Normalizes an unnormalized positive matrix, returning the state and the
    /// trace that was divided out.
    pub fn from_unnormalized(m: &Mat3) -> Result<(Self, f64)> {
        normalize_psd(m, "density matrix").map(|(m, t)| (Self(m), t))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn population(&self, b: BasisIndex) -> f64 {
        self.0[(b.index(), b.index())].re
    }

    /// `(ρ↓↓ + ρ↑↑) / tr ρ`. Dividing by the summed diagonal makes this agree
    /// bit for bit with the smoothed probability under a unit effect matrix.
    pub fn occupation(&self) -> f64 {
        let occupied = (self.population(BasisIndex::Down) + self.population(BasisIndex::Up)).max(0.0);
        occupied / (self.population(BasisIndex::Empty).max(0.0) + occupied)
    }
}

/// Retrodictive effect matrix E. Carries no trace constraint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectMatrix(Mat3);

impl EffectMatrix {
    /// Validates Hermiticity and positivity.
    pub fn new(m: Mat3) -> Result<Self> {
        check_valid(&m, "effect matrix", false)?;
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Rescales to unit trace (with PSD repair), returning the scale divided out.
    pub fn normalized(m: &Mat3) -> Result<(Self, f64)> {
        normalize_psd(m, "effect matrix").map(|(m, t)| (Self(m), t))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0 * C64::new(s, 0.0))
    }
}
