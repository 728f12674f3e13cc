//! Randomized invariants: statements that must hold for every seed, every
//! temperature in range, and every admissible coefficient vector, not just
//! the pinned cases in the other suites.

use std::sync::Arc;

use gap_thermal_core::{
    build_circle_model, evaluate, evolve_coefficients, read_wave_function, sample_ga, sample_gap,
    thermalize, velocity, wave_function_csv, CutoffPolicy, Provenance, RandomSeed, ThermalSpectrum,
    WaveFunction,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn circle_spectrum(beta: f64) -> Arc<ThermalSpectrum> {
    let model = build_circle_model(1.0, 1.0, CutoffPolicy::TailMass(1e-12)).unwrap();
    Arc::new(thermalize(&model, beta).unwrap())
}

/// Coefficient vectors with every entry well inside f64 range; the vector
/// is rejected when it is numerically null.
fn coefficient_vectors(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    proptest::collection::vec(
        (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(re, im)| Complex64::new(re, im)),
        len,
    )
    .prop_filter("needs a usable norm", |v| {
        v.iter().map(|c| c.norm_sqr()).sum::<f64>() > 1e-6
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thermal_weights_are_a_gibbs_distribution(beta in 0.5f64..4.0) {
        let spectrum = circle_spectrum(beta);
        let modes = spectrum.modes();
        let total: f64 = modes.iter().map(|m| m.weight).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        // One partition function normalizes every mode.
        let z0 = (-beta * modes[0].energy).exp() / modes[0].weight;
        for m in modes {
            prop_assert!(m.weight > 0.0);
            let z = (-beta * m.energy).exp() / m.weight;
            prop_assert!((z - z0).abs() < 1e-10 * z0);
        }
    }

    #[test]
    fn gap_samples_are_normalized_for_every_seed(
        seed in any::<u64>(),
        stream in any::<u64>(),
        beta in 0.5f64..4.0,
    ) {
        let spectrum = circle_spectrum(beta);
        let psi = sample_gap(&spectrum, RandomSeed::new(seed, stream)).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_a_pure_function_of_the_seed(seed in any::<u64>(), stream in any::<u64>()) {
        let spectrum = circle_spectrum(2.0);
        let rs = RandomSeed::new(seed, stream);
        let (a, mode_a) = sample_ga(&spectrum, rs);
        let (b, mode_b) = sample_ga(&spectrum, rs);
        prop_assert_eq!(a.coefficients(), b.coefficients());
        prop_assert_eq!(mode_a, mode_b);
    }

    #[test]
    fn evolution_is_unitary_and_composes(
        seed in any::<u64>(),
        t1 in -20.0f64..20.0,
        t2 in -20.0f64..20.0,
    ) {
        let spectrum = circle_spectrum(2.0);
        let psi = sample_gap(&spectrum, RandomSeed::new(seed, 0)).unwrap();
        let once = evolve_coefficients(&psi, t1 + t2).unwrap();
        let twice = evolve_coefficients(&evolve_coefficients(&psi, t1).unwrap(), t2).unwrap();
        prop_assert!((once.norm() - 1.0).abs() < 1e-12);
        for (a, b) in once.coefficients().iter().zip(twice.coefficients()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn velocity_ignores_phase_and_scale(
        seed in any::<u64>(),
        theta in 0.0f64..std::f64::consts::TAU,
        scale in 0.1f64..10.0,
        q in 0.0f64..std::f64::consts::TAU,
    ) {
        let spectrum = circle_spectrum(2.0);
        let psi = sample_gap(&spectrum, RandomSeed::new(seed, 1)).unwrap();
        let factor = Complex64::from_polar(scale, theta);
        let rotated = WaveFunction::new(
            Arc::clone(psi.spectrum()),
            psi.coefficients().iter().map(|c| c * factor).collect(),
            Provenance::Derived,
            None,
        ).unwrap();
        match (velocity(&psi, &[q], None), velocity(&rotated, &[q], None)) {
            (Ok(a), Ok(b)) => prop_assert!((a[0] - b[0]).abs() <= 1e-9 * (1.0 + a[0].abs())),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "gauge changed node detection: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn coefficient_files_round_trip_bitwise(
        raw in coefficient_vectors(11),
        seed in any::<u64>(),
    ) {
        let spectrum = circle_spectrum(2.0);
        let psi = WaveFunction::new(
            Arc::clone(&spectrum),
            raw,
            Provenance::Derived,
            Some(RandomSeed::new(seed, 3)),
        ).unwrap();
        let text = wave_function_csv(&psi, None).unwrap();
        let (back, header) = read_wave_function(&text, &spectrum).unwrap();
        prop_assert_eq!(psi.coefficients(), back.coefficients());
        prop_assert_eq!(header.seed, psi.seed());
        prop_assert_eq!(back.provenance(), Provenance::Derived);
    }

    #[test]
    fn pointwise_evaluation_is_linear(
        seed in any::<u64>(),
        q in 0.0f64..std::f64::consts::TAU,
    ) {
        let spectrum = circle_spectrum(2.0);
        let a = sample_gap(&spectrum, RandomSeed::new(seed, 4)).unwrap();
        let b = sample_gap(&spectrum, RandomSeed::new(seed, 5)).unwrap();
        let sum = WaveFunction::new(
            Arc::clone(&spectrum),
            a.coefficients()
                .iter()
                .zip(b.coefficients())
                .map(|(x, y)| x + y)
                .collect(),
            Provenance::Derived,
            None,
        ).unwrap();
        let lhs = evaluate(&sum, &[q]).unwrap();
        let rhs = evaluate(&a, &[q]).unwrap() + evaluate(&b, &[q]).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }
}
