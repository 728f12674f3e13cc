mod common;

use std::sync::Arc;

use common::{assert_close, assert_rel};
use gap_thermal_core::{
    build_circle_model, build_custom_model, sample_g, sample_ga, sample_gap, thermalize,
    estimate_covariance, CustomEigenfunctions, CutoffPolicy, GapError, ModeIndex, Provenance,
    RandomSeed, SamplerKind, ThermalSpectrum, WaveFunction,
};
use num_complex::Complex64;

fn circle_spectrum(beta: f64) -> Arc<ThermalSpectrum> {
    let model = build_circle_model(1.0, 1.0, CutoffPolicy::TailMass(1e-12)).unwrap();
    Arc::new(thermalize(&model, beta).unwrap())
}

#[test]
fn samplers_are_pure_functions_of_seed() {
    let spectrum = circle_spectrum(2.0);
    let seed = RandomSeed::new(42, 7);
    assert_eq!(
        sample_g(&spectrum, seed).coefficients(),
        sample_g(&spectrum, seed).coefficients()
    );
    let (a, ka) = sample_ga(&spectrum, seed);
    let (b, kb) = sample_ga(&spectrum, seed);
    assert_eq!(a.coefficients(), b.coefficients());
    assert_eq!(ka, kb);
    assert_eq!(
        sample_gap(&spectrum, seed).unwrap().coefficients(),
        sample_gap(&spectrum, seed).unwrap().coefficients()
    );
    assert_ne!(
        sample_g(&spectrum, seed).coefficients(),
        sample_g(&spectrum, seed.substream(1)).coefficients()
    );
}

#[test]
fn provenance_and_seed_are_recorded() {
    let spectrum = circle_spectrum(2.0);
    let seed = RandomSeed::new(3, 0);
    let g = sample_g(&spectrum, seed);
    assert_eq!(g.provenance(), Provenance::G);
    assert_eq!(g.seed(), Some(seed));
    let (ga, _) = sample_ga(&spectrum, seed);
    assert_eq!(ga.provenance(), Provenance::Ga);
    let gap = sample_gap(&spectrum, seed).unwrap();
    assert_eq!(gap.provenance(), Provenance::Gap);
    assert_eq!(gap.seed(), Some(seed));
}

#[test]
fn g_reproduces_diagonal_and_kills_off_diagonal() {
    let spectrum = circle_spectrum(2.0);
    let pairs = vec![
        (ModeIndex::scalar(1), ModeIndex::scalar(-1)),
        (ModeIndex::scalar(0), ModeIndex::scalar(2)),
    ];
    let est = estimate_covariance(
        SamplerKind::G,
        &spectrum,
        20_000,
        RandomSeed::new(11, 0),
        &pairs,
    )
    .unwrap();
    for d in &est.diagonal {
        assert!(
            (d.estimate - d.expected).abs() <= 5.0 * d.stderr,
            "mode {}: {} vs {} (se {})",
            d.index,
            d.estimate,
            d.expected,
            d.stderr
        );
    }
    for o in &est.off_diagonal {
        assert!(
            o.estimate.norm() <= 5.0 * o.stderr,
            "pair ({}, {}): {} (se {})",
            o.row,
            o.col,
            o.estimate,
            o.stderr
        );
    }
}

#[test]
fn g_fourth_moment_matches_complex_gaussian() {
    // E|c|^4 = 2 p^2 for a circular complex Gaussian with E|c|^2 = p.
    let spectrum = circle_spectrum(2.0);
    let m = 20_000usize;
    let seed = RandomSeed::new(5, 0);
    let p0 = spectrum.modes()[0].weight;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for s in 0..m {
        let wf = sample_g(&spectrum, seed.substream(s as u64));
        let x = wf.coefficients()[0].norm_sqr();
        sum += x * x;
        sum_sq += x * x * x * x;
    }
    let mean = sum / m as f64;
    let var = ((sum_sq - m as f64 * mean * mean) / (m as f64 - 1.0)).max(0.0);
    let se = (var / m as f64).sqrt();
    assert!(
        (mean - 2.0 * p0 * p0).abs() <= 5.0 * se,
        "fourth moment {mean} vs {} (se {se})",
        2.0 * p0 * p0
    );
}

#[test]
fn ga_norm_and_moments_follow_size_biasing() {
    let spectrum = circle_spectrum(2.0);
    let m = 20_000usize;
    let seed = RandomSeed::new(17, 0);
    // E_GA ||psi||^2 = 1 + sum p_n^2; frozen for the beta = 2 circle.
    let expected_norm_sq = 1.4045968627435836;
    let mut norm_sum = 0.0;
    let mut norm_sum_sq = 0.0;
    let mut per_mode = vec![0.0f64; spectrum.len()];
    for s in 0..m {
        let (wf, _) = sample_ga(&spectrum, seed.substream(s as u64));
        let n2 = wf.norm_sq();
        norm_sum += n2;
        norm_sum_sq += n2 * n2;
        for (slot, c) in per_mode.iter_mut().zip(wf.coefficients()) {
            *slot += c.norm_sqr();
        }
    }
    let mf = m as f64;
    let mean = norm_sum / mf;
    let var = ((norm_sum_sq - mf * mean * mean) / (mf - 1.0)).max(0.0);
    let se = (var / mf).sqrt();
    assert!(
        (mean - expected_norm_sq).abs() <= 5.0 * se,
        "GA mean norm^2 {mean} vs {expected_norm_sq} (se {se})"
    );
    // E_GA |c_n|^2 = p_n (1 + p_n).
    for (mode, slot) in spectrum.modes().iter().zip(&per_mode) {
        let est = slot / mf;
        let expected = mode.weight * (1.0 + mode.weight);
        // Conservative scale bound: Var <= E|c|^4 <= 6 p^2 (1 + p)^2.
        let se = (6.0f64.sqrt()) * expected / mf.sqrt();
        assert!(
            (est - expected).abs() <= 5.0 * se,
            "GA second moment at {}: {est} vs {expected}",
            mode.index
        );
    }
}

#[test]
fn ga_single_mode_is_gamma_size_biased() {
    let (_, spectrum) = build_custom_model(&[(0, 1.0)], CustomEigenfunctions::None).unwrap();
    let spectrum = Arc::new(spectrum);
    let m = 20_000usize;
    let seed = RandomSeed::new(23, 0);
    let mut sum = 0.0;
    for s in 0..m {
        let (wf, chosen) = sample_ga(&spectrum, seed.substream(s as u64));
        assert_eq!(chosen, ModeIndex::scalar(0));
        sum += wf.norm_sq();
    }
    // |c|^2 ~ Gamma(2, 1): mean 2, variance 2.
    let mean = sum / m as f64;
    let se = (2.0f64 / m as f64).sqrt();
    assert!(
        (mean - 2.0).abs() <= 5.0 * se,
        "size-biased single-mode mean {mean}"
    );
}

#[test]
fn gap_samples_sit_on_the_unit_sphere() {
    let spectrum = circle_spectrum(2.0);
    for s in 0..200 {
        let wf = sample_gap(&spectrum, RandomSeed::new(29, s)).unwrap();
        assert_close(wf.norm_sq(), 1.0, 1e-13, "GAP norm^2");
    }
}

#[test]
fn gap_on_rho0_is_a_pure_random_phase() {
    let (_, spectrum) =
        build_custom_model(&[(0, 1.0)], CustomEigenfunctions::CircleHarmonics).unwrap();
    let spectrum = Arc::new(spectrum);
    let mut phases = Vec::new();
    for s in 0..64 {
        let wf = sample_gap(&spectrum, RandomSeed::new(31, s)).unwrap();
        let c = wf.coefficients()[0];
        assert_close(c.norm(), 1.0, 1e-14, "rho0 GAP modulus");
        phases.push(c.arg());
    }
    phases.sort_by(f64::total_cmp);
    phases.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    assert!(phases.len() > 32, "phases should vary across seeds");
}

#[test]
fn gap_covariance_matches_g_covariance() {
    let spectrum = circle_spectrum(2.0);
    let est = estimate_covariance(
        SamplerKind::Gap,
        &spectrum,
        20_000,
        RandomSeed::new(37, 0),
        &[],
    )
    .unwrap();
    for d in &est.diagonal {
        assert!(
            (d.estimate - d.expected).abs() <= 5.0 * d.stderr,
            "GAP mode {}: {} vs {} (se {})",
            d.index,
            d.estimate,
            d.expected,
            d.stderr
        );
    }
    // GAP lives on the sphere, so the diagonal sums to 1 exactly in
    // expectation and nearly so empirically.
    let total: f64 = est.diagonal.iter().map(|d| d.estimate).sum();
    assert_rel(total, 1.0, 1e-10, "GAP diagonal total");
}

#[test]
fn covariance_estimation_is_deterministic_and_guarded() {
    let spectrum = circle_spectrum(2.0);
    let seed = RandomSeed::new(41, 0);
    let pairs = vec![(ModeIndex::scalar(0), ModeIndex::scalar(1))];
    let a = estimate_covariance(SamplerKind::Ga, &spectrum, 1500, seed, &pairs).unwrap();
    let b = estimate_covariance(SamplerKind::Ga, &spectrum, 1500, seed, &pairs).unwrap();
    assert_eq!(a, b);

    assert!(matches!(
        estimate_covariance(SamplerKind::G, &spectrum, 99, seed, &[]),
        Err(GapError::InvalidParameter(_))
    ));
    let missing = vec![(ModeIndex::scalar(0), ModeIndex::scalar(99))];
    assert!(matches!(
        estimate_covariance(SamplerKind::G, &spectrum, 500, seed, &missing),
        Err(GapError::InvalidParameter(_))
    ));
}

#[test]
fn wave_function_constructor_enforces_contracts() {
    let spectrum = circle_spectrum(2.0);
    let short = WaveFunction::new(
        Arc::clone(&spectrum),
        vec![Complex64::new(1.0, 0.0); 3],
        Provenance::Derived,
        None,
    );
    assert!(matches!(short, Err(GapError::InvalidParameter(_))));

    let mut coeffs = vec![Complex64::new(0.0, 0.0); spectrum.len()];
    coeffs[0] = Complex64::new(f64::NAN, 0.0);
    let bad = WaveFunction::new(Arc::clone(&spectrum), coeffs, Provenance::Derived, None);
    assert!(matches!(bad, Err(GapError::InvalidParameter(_))));

    let mut coeffs = vec![Complex64::new(0.0, 0.0); spectrum.len()];
    coeffs[0] = Complex64::new(2.0, 0.0);
    let off_sphere = WaveFunction::new(Arc::clone(&spectrum), coeffs, Provenance::Gap, None);
    assert!(matches!(off_sphere, Err(GapError::InvalidParameter(_))));

    let mut coeffs = vec![Complex64::new(0.0, 0.0); spectrum.len()];
    coeffs[2] = Complex64::new(0.6, 0.8);
    let ok = WaveFunction::new(Arc::clone(&spectrum), coeffs, Provenance::Gap, None).unwrap();
    let idx = ok.spectrum().modes()[2].index.clone();
    assert_eq!(ok.coefficient(&idx), Some(Complex64::new(0.6, 0.8)));
    assert_eq!(ok.coefficient(&ModeIndex::scalar(99)), None);
}
