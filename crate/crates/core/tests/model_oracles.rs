mod common;

use common::{c, diag, dot_generator, lindblad_rate, max_abs, rk4, M3};
use nalgebra::Matrix3;
use num_complex::Complex64;
use proptest::prelude::*;
use qdot::model::{BasisIndex, DensityMatrix, EffectMatrix, Lindbladian, ModelParams, Propagator};

fn params(omega: f64, gd: f64, gu: f64) -> ModelParams {
    ModelParams::default().with_omega(omega).with_rates(gd, gu)
}

fn random_state(entries: &[f64]) -> M3 {
    let a = Matrix3::from_fn(|r, col| Complex64::new(entries[3 * r + col], entries[9 + 3 * r + col]));
    let m = a * a.adjoint();
    let tr = m.trace();
    m / tr
}

fn hermitian(entries: &[f64]) -> M3 {
    let a = Matrix3::from_fn(|r, col| Complex64::new(entries[3 * r + col], entries[9 + 3 * r + col]));
    (a + a.adjoint()) * c(0.5)
}

fn min_eigenvalue(m: &M3) -> f64 {
    let h = (m + m.adjoint()) * c(0.5);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[test]
fn propagator_matches_rk4_integration() {
    for (omega, gd, gu, tau) in [(5.0, 3.0, 3.0, 0.01), (5.0, 3.0, 3.0, 0.7), (2.0, 0.5, 4.0, 1.3), (0.0, 1.0, 1.0, 0.2)] {
        let p = params(omega, gd, gu);
        let prop = Propagator::new(&Lindbladian::from_params(&p), tau).unwrap();
        let (h, ch) = dot_generator(omega, gd, gu);
        for rho0 in [diag([1.0, 0.0, 0.0]), diag([0.2, 0.5, 0.3]), random_state(&[0.3, -0.1, 0.7, 0.2, 0.9, -0.4, 0.5, 0.1, 0.6, 0.2, 0.0, -0.3, 0.4, 0.1, 0.2, -0.5, 0.3, 0.8])] {
            let reference = rk4(|r| lindblad_rate(&h, &ch, r), &rho0, tau, 4000);
            let err = max_abs(&(prop.apply(&rho0) - reference));
            assert!(err < 1e-10, "Ω={omega} γ↓={gd} γ↑={gu} τ={tau}: {err:e}");
        }
    }
}

#[test]
fn generator_matches_explicit_form() {
    let p = params(3.7, 1.2, 2.9);
    let l = Lindbladian::from_params(&p);
    let (h, ch) = dot_generator(3.7, 1.2, 2.9);
    let rho = random_state(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, -0.1, 0.2, -0.3, 0.4, -0.5, 0.6, -0.7, 0.8, -0.9]);
    assert!(max_abs(&(l.rhs(&rho) - lindblad_rate(&h, &ch, &rho))) < 1e-13);
}

#[test]
fn steady_state_is_long_time_limit() {
    for (omega, gd, gu) in [(5.0, 3.0, 3.0), (1.0, 4.0, 0.5), (8.0, 0.3, 6.0)] {
        let ss = Lindbladian::from_params(&params(omega, gd, gu)).steady_state().unwrap();
        let (h, ch) = dot_generator(omega, gd, gu);
        let late = rk4(|r| lindblad_rate(&h, &ch, r), &diag([1.0, 0.0, 0.0]), 40.0 / gd.min(gu), 200_000);
        let err = max_abs(&(ss.matrix() - late));
        assert!(err < 1e-8, "Ω={omega}: {err:e}");
        assert!(max_abs(&lindblad_rate(&h, &ch, ss.matrix())) < 1e-12);
    }
}

#[test]
fn adjoint_propagator_is_dual() {
    let p = params(5.0, 3.0, 3.0);
    let prop = Propagator::new(&Lindbladian::from_params(&p), 0.37).unwrap();
    let seeds = [
        [0.3, -0.1, 0.7, 0.2, 0.9, -0.4, 0.5, 0.1, 0.6, 0.2, 0.0, -0.3, 0.4, 0.1, 0.2, -0.5, 0.3, 0.8],
        [-0.6, 0.4, 0.1, 0.0, 0.3, 0.2, -0.9, 0.5, 0.7, 0.1, -0.2, 0.3, 0.6, -0.4, 0.8, 0.2, 0.1, -0.7],
    ];
    for s in &seeds {
        let rho = random_state(s);
        let a = hermitian(&seeds[1]);
        let lhs = (a * prop.apply(&rho)).trace();
        let rhs = (prop.apply_adjoint(&a) * rho).trace();
        assert!((lhs - rhs).norm() < 1e-12, "{lhs} vs {rhs}");
    }
    // The adjoint generator satisfies the same duality infinitesimally.
    let l = Lindbladian::from_params(&p);
    let rho = random_state(&seeds[0]);
    let a = hermitian(&seeds[1]);
    assert!(((a * l.rhs(&rho)).trace() - (l.adjoint_rhs(&a) * rho).trace()).norm() < 1e-12);
}

#[test]
fn adjoint_preserves_identity() {
    let prop = Propagator::new(&Lindbladian::from_params(&ModelParams::default()), 0.01).unwrap();
    assert!(max_abs(&(prop.apply_adjoint(&M3::identity()) - M3::identity())) < 1e-13);
}

#[test]
fn zero_drive_keeps_populations_classical() {
    let p = params(0.0, 2.0, 1.0);
    let prop = Propagator::new(&Lindbladian::from_params(&p), 0.4).unwrap();
    let out = prop.apply(&diag([0.3, 0.7, 0.0]));
    // No drive: |↓⟩ is stable, the empty dot charges at γ↓.
    let e = (-2.0f64 * 0.4).exp();
    assert!((out[(0, 0)].re - 0.3 * e).abs() < 1e-13);
    assert!((out[(1, 1)].re - (0.7 + 0.3 * (1.0 - e))).abs() < 1e-13);
    assert!(out[(2, 2)].norm() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagation_preserves_trace_and_positivity(
        omega in 0.0f64..20.0,
        gd in 0.01f64..10.0,
        gu in 0.01f64..10.0,
        tau in 1e-3f64..3.0,
        entries in prop::collection::vec(-1.0f64..1.0, 18),
    ) {
        let prop = Propagator::new(&Lindbladian::from_params(&params(omega, gd, gu)), tau).unwrap();
        let rho = random_state(&entries);
        let out = prop.apply(&rho);
        prop_assert!((out.trace().re - 1.0).abs() < 1e-12);
        prop_assert!(out.trace().im.abs() < 1e-12);
        prop_assert!(max_abs(&(out - out.adjoint())) < 1e-12);
        prop_assert!(min_eigenvalue(&out) > -1e-12);
        prop_assert!(DensityMatrix::new(out).is_ok());
    }

    #[test]
    fn adjoint_propagation_keeps_effects_positive(
        omega in 0.0f64..20.0,
        gd in 0.01f64..10.0,
        gu in 0.01f64..10.0,
        tau in 1e-3f64..3.0,
        entries in prop::collection::vec(-1.0f64..1.0, 18),
    ) {
        let prop = Propagator::new(&Lindbladian::from_params(&params(omega, gd, gu)), tau).unwrap();
        let e = random_state(&entries);
        let out = prop.apply_adjoint(&e);
        prop_assert!(min_eigenvalue(&out) > -1e-12);
        prop_assert!(EffectMatrix::normalized(&out).is_ok());
    }

    #[test]
    fn basis_projectors_resolve_identity(b in 0usize..3) {
        let sum: M3 = BasisIndex::ALL.iter().map(|x| x.projector()).sum();
        prop_assert_eq!(sum, M3::identity());
        prop_assert_eq!(BasisIndex::ALL[b].index(), b);
    }
}
