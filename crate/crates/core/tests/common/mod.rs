//! Independent reference implementations shared by the integration tests.
//!
//! The oracles avoid the library's numerics: the master equation is
//! integrated with explicit matrix products, the two-state chain is solved in
//! closed form, and integrals use their own quadrature. Only the telegraph
//! fixture builds library models, as the system under test.
#![allow(dead_code)]

use nalgebra::Matrix3;
use num_complex::Complex64;
use qdot::model::{DensityMatrix, JumpChannel, Lindbladian, Mat3};
use qdot::sensor::CountRecord;
use qdot::smoother::InferenceModel;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Poisson};

pub type M3 = Matrix3<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn max_abs(m: &M3) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn diag(p: [f64; 3]) -> M3 {
    M3::from_diagonal(&nalgebra::Vector3::new(c(p[0]), c(p[1]), c(p[2])))
}

pub fn unit(r: usize, col: usize) -> M3 {
    let mut m = M3::zeros();
    m[(r, col)] = c(1.0);
    m
}

// ---------------------------------------------------------------------------
// Master equation by RK4

/// `dρ/dt = −i[H, ρ] + Σ γ (L ρ L† − ½ L†L ρ − ½ ρ L†L)`
pub fn lindblad_rate(h: &M3, channels: &[(f64, M3)], rho: &M3) -> M3 {
    let i = Complex64::new(0.0, 1.0);
    let mut out = (h * rho - rho * h) * (-i);
    for (g, l) in channels {
        let ld = l.adjoint();
        out += (l * rho * ld - (ld * l * rho) * c(0.5) - (rho * ld * l) * c(0.5)) * c(*g);
    }
    out
}

/// Fourth-order Runge-Kutta for `n_steps` equal steps over `t`.
pub fn rk4<F: Fn(&M3) -> M3>(f: F, y0: &M3, t: f64, n_steps: usize) -> M3 {
    let h = c(t / n_steps as f64);
    let half = c(0.5);
    let mut y = *y0;
    for _ in 0..n_steps {
        let k1 = f(&y);
        let k2 = f(&(y + k1 * h * half));
        let k3 = f(&(y + k2 * h * half));
        let k4 = f(&(y + k3 * h));
        y += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * h * c(1.0 / 6.0);
    }
    y
}

/// The dot: `H = Ω/2 (|↑⟩⟨↓| + h.c.)`, charging `|↓⟩⟨0|` at γ↓, discharging `|0⟩⟨↑|` at γ↑.
pub fn dot_generator(omega: f64, gamma_down: f64, gamma_up: f64) -> (M3, Vec<(f64, M3)>) {
    let h = (unit(2, 1) + unit(1, 2)) * c(omega / 2.0);
    (h, vec![(gamma_down, unit(1, 0)), (gamma_up, unit(0, 2))])
}

/// Occupation `ρ↓↓ + ρ↑↑` of the master equation from the empty dot, sampled
/// every `dt` for `n` points with `substeps` RK4 steps in between.
pub fn occupation_curve(omega: f64, gamma_down: f64, gamma_up: f64, dt: f64, n: usize, substeps: usize) -> Vec<f64> {
    let (h, ch) = dot_generator(omega, gamma_down, gamma_up);
    let mut rho = diag([1.0, 0.0, 0.0]);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(rho[(1, 1)].re + rho[(2, 2)].re);
        rho = rk4(|r| lindblad_rate(&h, &ch, r), &rho, dt, substeps);
    }
    out
}

// ---------------------------------------------------------------------------
// Classical two-state hidden Markov model

/// `ln Poisson(m; μ)` by direct summation of `ln k`.
pub fn ln_poisson(m: u64, mu: f64) -> f64 {
    let ln_fact: f64 = (2..=m).map(|k| (k as f64).ln()).sum();
    m as f64 * mu.ln() - mu - ln_fact
}

/// Continuous-time chain `0 → 1` at `a`, `1 → 0` at `b`, over `t`.
pub fn two_state_transition(a: f64, b: f64, t: f64) -> [[f64; 2]; 2] {
    let s = a + b;
    let e = (-s * t).exp();
    [[(b + a * e) / s, a * (1.0 - e) / s], [b * (1.0 - e) / s, (a + b * e) / s]]
}

pub struct Hmm {
    pub transition: [[f64; 2]; 2],
    pub prior: [f64; 2],
    /// Per-bin log emission probabilities of the two states.
    pub log_emission: Vec<[f64; 2]>,
}

pub struct HmmPass {
    /// Filtered state probabilities after each observation.
    pub alpha: Vec<[f64; 2]>,
    /// Smoothed state probabilities.
    pub gamma: Vec<[f64; 2]>,
    /// Σ_k of the normalized two-slice marginals ξ_k(s, s').
    pub xi_sum: [[f64; 2]; 2],
    pub log_likelihood: f64,
}

impl Hmm {
    fn emission(&self, k: usize) -> ([f64; 2], f64) {
        let le = self.log_emission[k];
        let hi = le[0].max(le[1]);
        ([(le[0] - hi).exp(), (le[1] - hi).exp()], hi)
    }

    pub fn forward_backward(&self) -> HmmPass {
        let n = self.log_emission.len();
        let t = &self.transition;
        let mut alpha = Vec::with_capacity(n);
        let mut prev = self.prior;
        let mut ll = 0.0;
        for k in 0..n {
            let (e, shift) = self.emission(k);
            let mut a = [0.0; 2];
            for s in 0..2 {
                a[s] = (prev[0] * t[0][s] + prev[1] * t[1][s]) * e[s];
            }
            let z = a[0] + a[1];
            ll += z.ln() + shift;
            a = [a[0] / z, a[1] / z];
            alpha.push(a);
            prev = a;
        }
        let mut beta = vec![[1.0; 2]; n];
        for k in (1..n).rev() {
            let (e, _) = self.emission(k);
            let mut b = [0.0; 2];
            for s in 0..2 {
                b[s] = t[s][0] * e[0] * beta[k][0] + t[s][1] * e[1] * beta[k][1];
            }
            let z = b[0] + b[1];
            beta[k - 1] = [b[0] / z, b[1] / z];
        }
        let gamma = (0..n)
            .map(|k| {
                let g = [alpha[k][0] * beta[k][0], alpha[k][1] * beta[k][1]];
                let z = g[0] + g[1];
                [g[0] / z, g[1] / z]
            })
            .collect();
        let mut xi_sum = [[0.0; 2]; 2];
        for k in 0..n.saturating_sub(1) {
            let (e, _) = self.emission(k + 1);
            let mut xi = [[0.0; 2]; 2];
            let mut z = 0.0;
            for s in 0..2 {
                for u in 0..2 {
                    xi[s][u] = alpha[k][s] * t[s][u] * e[u] * beta[k + 1][u];
                    z += xi[s][u];
                }
            }
            for s in 0..2 {
                for u in 0..2 {
                    xi_sum[s][u] += xi[s][u] / z;
                }
            }
        }
        HmmPass {
            alpha,
            gamma,
            xi_sum,
            log_likelihood: ll,
        }
    }
}

// ---------------------------------------------------------------------------
// Quadrature

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
/// Gauss weights on the odd-indexed Kronrod nodes (and the centre).
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut kronrod = K15_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = half * GK_NODES[i];
        let pair = f(mid - x) + f(mid + x);
        kronrod += K15_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod on `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(&f, a, b, tol, 40)
}

// ---------------------------------------------------------------------------
// Goodness of fit

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    (2.0 * q).clamp(0.0, 1.0)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

// ---------------------------------------------------------------------------
// Undriven dot as a classical chain

/// Undriven dot reduced to a classical telegraph process between the empty
/// dot and `|↓⟩`, observed through Poisson counts.
pub struct Telegraph {
    pub charge: f64,
    pub discharge: f64,
    pub tau: f64,
    pub r0: f64,
    pub r1: f64,
    pub prior_occupied: f64,
}

impl Telegraph {
    pub fn record(&self, n: usize, seed: u64) -> CountRecord {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = two_state_transition(self.charge, self.discharge, self.tau);
        let mut occupied = rng.gen::<f64>() < self.prior_occupied;
        let counts = (0..n)
            .map(|_| {
                let row = t[occupied as usize];
                occupied = rng.gen::<f64>() < row[1];
                let mean = if occupied { self.r1 } else { self.r0 } * self.tau;
                Poisson::new(mean).unwrap().sample(&mut rng) as u64
            })
            .collect();
        CountRecord::new(self.tau, counts, self.r0, self.r1, seed)
    }

    pub fn model(&self) -> InferenceModel {
        let l = Lindbladian::new(
            Mat3::zeros(),
            vec![JumpChannel::new(self.charge, unit(1, 0)), JumpChannel::new(self.discharge, unit(0, 1))],
        );
        let prior = DensityMatrix::diagonal([1.0 - self.prior_occupied, self.prior_occupied, 0.0]).unwrap();
        InferenceModel::new(l, self.tau, self.r0, self.r1, prior).unwrap()
    }

    pub fn hmm(&self, record: &CountRecord) -> Hmm {
        Hmm {
            transition: two_state_transition(self.charge, self.discharge, self.tau),
            prior: [1.0 - self.prior_occupied, self.prior_occupied],
            log_emission: record
                .counts
                .iter()
                .map(|&m| [ln_poisson(m, self.r0 * self.tau), ln_poisson(m, self.r1 * self.tau)])
                .collect(),
        }
    }
}

pub const TELEGRAPHS: [Telegraph; 3] = [
    Telegraph { charge: 3.0, discharge: 2.0, tau: 0.05, r0: 240.0, r1: 160.0, prior_occupied: 0.4 },
    Telegraph { charge: 0.5, discharge: 4.0, tau: 0.2, r0: 10.0, r1: 15.0, prior_occupied: 0.1 },
    Telegraph { charge: 3.0, discharge: 3.0, tau: 0.01, r0: 31_210.0, r1: 24_970.0, prior_occupied: 0.5 },
];
