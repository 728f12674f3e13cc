//! One test per release criterion. Each prints a single
//! `criterion NN (<name>): PASS|FAIL` line (visible under
//! `cargo test --test acceptance -- --nocapture`) and fails the build on
//! any violation. Monte Carlo checks use pinned seeds, so every run either
//! always passes or always fails.

use std::sync::{Arc, OnceLock};

use gap_thermal_core::{
    analytic_vector_expectation, analytic_vector_sum, build_box_model, build_circle_model,
    domain_power_sum, estimate_covariance, evaluate, evaluate_complex, evolve_coefficients,
    exp_weighted_sum, expected_sum, gaussian_modulus_mc, holder_fit, increment_variance,
    integrate_trajectories, integrate_trajectory, project_to_sector, sample_g, sample_ga,
    sample_gap, sobolev_sum, spectrum_hash, symmetrize, theorem1_condition,
    theorem1_condition_analytic, thermalize, trajectory_csv, velocity, wave_function_csv,
    CutoffPolicy, IntegrationTolerances, ModeIndex, Provenance, RandomSeed, SamplerKind, Symmetry,
    ThermalSpectrum, TrajectoryStatus, WaveFunction,
};
use num_complex::Complex64;

const TAU: f64 = std::f64::consts::TAU;
/// 95th percentile of chi^2 with 19 degrees of freedom.
const CHI2_95_19: f64 = 30.1435;

struct Criterion {
    number: u32,
    name: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    fn new(number: u32, name: &'static str) -> Self {
        Criterion {
            number,
            name,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(detail());
        }
    }

    fn check_close(&mut self, label: &str, actual: f64, expected: f64, tol: f64) {
        self.check((actual - expected).abs() <= tol, || {
            format!("{label}: {actual} vs {expected} (tolerance {tol:.3e})")
        });
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("criterion {:02} ({}): PASS", self.number, self.name);
        } else {
            println!("criterion {:02} ({}): FAIL", self.number, self.name);
            for f in &self.failures {
                println!("  - {f}");
            }
            panic!(
                "criterion {:02} ({}): {}",
                self.number,
                self.name,
                self.failures.join("; ")
            );
        }
    }
}

fn circle(beta: f64, cutoff: CutoffPolicy) -> Arc<ThermalSpectrum> {
    let model = build_circle_model(1.0, 1.0, cutoff).unwrap();
    Arc::new(thermalize(&model, beta).unwrap())
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// The size-bias oracle. Runs once; every test that relies on the GA
/// mixture construction (and therefore on GAP) consults the cached verdict
/// before trusting its own sampler output.
static GA_GATE: OnceLock<Result<String, String>> = OnceLock::new();

fn ga_gate() -> &'static Result<String, String> {
    GA_GATE.get_or_init(|| {
        const M: usize = 100_000;
        let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));
        let closed_form = 1.0 + spectrum.modes().iter().map(|m| m.weight * m.weight).sum::<f64>();

        let seed = RandomSeed::new(0xA3, 0);
        let mut mixture = Vec::with_capacity(M);
        for s in 0..M {
            let (psi, _) = sample_ga(&spectrum, seed.substream(s as u64));
            mixture.push(psi.norm_sq());
        }
        let (mix_mean, mix_se) = mean_se(&mixture);

        // Independent route: reweight plain Gaussian samples by ||psi||^2,
        // so E_GA ||psi||^2 = E_G ||psi||^4 / E_G ||psi||^2.
        let g_seed = RandomSeed::new(0xA3, 1);
        let mut x = Vec::with_capacity(M);
        let mut y = Vec::with_capacity(M);
        for s in 0..M {
            let n2 = sample_g(&spectrum, g_seed.substream(s as u64)).norm_sq();
            x.push(n2);
            y.push(n2 * n2);
        }
        let x_mean = x.iter().sum::<f64>() / M as f64;
        let ratio = y.iter().sum::<f64>() / M as f64 / x_mean;
        let resid_var = x
            .iter()
            .zip(&y)
            .map(|(&xi, &yi)| (yi - ratio * xi).powi(2))
            .sum::<f64>()
            / (M as f64 - 1.0);
        let ratio_se = resid_var.sqrt() / ((M as f64).sqrt() * x_mean);

        let combined = (mix_se * mix_se + ratio_se * ratio_se).sqrt();
        let detail = format!(
            "mixture {mix_mean:.6} (se {mix_se:.1e}), reweighted {ratio:.6} (se {ratio_se:.1e}), closed form {closed_form:.6}"
        );
        if (mix_mean - closed_form).abs() > 5.0 * mix_se {
            return Err(format!("mixture mean off closed form: {detail}"));
        }
        if (ratio - closed_form).abs() > 5.0 * ratio_se {
            return Err(format!("reweighted mean off closed form: {detail}"));
        }
        if (mix_mean - ratio).abs() > 5.0 * combined {
            return Err(format!("mixture and reweighted means disagree: {detail}"));
        }
        Ok(detail)
    })
}

fn require_gate(c: &mut Criterion) -> bool {
    match ga_gate() {
        Ok(_) => true,
        Err(e) => {
            c.check(false, || format!("size-bias oracle gate failed: {e}"));
            false
        }
    }
}

#[test]
fn criterion_01_gaussian_modulus_moment() {
    let mut c = Criterion::new(1, "Gaussian modulus moment");
    const M: usize = 1_000_000;
    let (mean, _se) = gaussian_modulus_mc(1.0, M, RandomSeed::new(0xA1, 0)).unwrap();
    let expected = 0.5 * std::f64::consts::PI.sqrt();
    let tol = 5.0 * ((4.0 - std::f64::consts::PI) / std::f64::consts::PI).sqrt()
        / (M as f64).sqrt();
    c.check_close("E|Z| at sigma = 1", mean, expected, tol);
    c.finish();
}

#[test]
fn criterion_02_gap_covariance_reproduction() {
    let mut c = Criterion::new(2, "GAP covariance reproduction");
    if require_gate(&mut c) {
        const M: usize = 100_000;
        let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));
        let mut pairs = Vec::new();
        for i in 0..spectrum.len() {
            for j in (i + 1)..spectrum.len() {
                pairs.push((
                    spectrum.modes()[i].index.clone(),
                    spectrum.modes()[j].index.clone(),
                ));
            }
        }
        let estimate = estimate_covariance(
            SamplerKind::Gap,
            &spectrum,
            M,
            RandomSeed::new(0xA2, 0),
            &pairs,
        )
        .unwrap();
        for diag in &estimate.diagonal {
            c.check(
                (diag.estimate - diag.expected).abs() <= 5.0 * diag.stderr,
                || {
                    format!(
                        "diagonal at {}: {} vs {} (se {:.2e})",
                        diag.index, diag.estimate, diag.expected, diag.stderr
                    )
                },
            );
        }
        let off_tol = 5.0 / (M as f64).sqrt();
        for off in &estimate.off_diagonal {
            c.check(off.estimate.norm() <= off_tol, || {
                format!(
                    "off-diagonal ({}, {}): |{}| > {off_tol:.2e}",
                    off.row,
                    off.col,
                    off.estimate.norm()
                )
            });
        }
    }
    c.finish();
}

#[test]
fn criterion_03_ga_size_bias_oracle() {
    let mut c = Criterion::new(3, "GA size-bias oracle");
    match ga_gate() {
        Ok(_) => {}
        Err(e) => c.check(false, || e.clone()),
    }
    c.finish();
}

#[test]
fn criterion_04_sobolev_expectations() {
    let mut c = Criterion::new(4, "Sobolev coefficient sums");
    const M: usize = 10_000;
    let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));
    let seed = RandomSeed::new(0xA4, 0);
    let samples: Vec<WaveFunction> = (0..M)
        .map(|s| sample_g(&spectrum, seed.substream(s as u64)))
        .collect();
    for ell in 1..=3u32 {
        let values: Vec<f64> = samples.iter().map(|psi| sobolev_sum(psi, ell)).collect();
        let (mean, se) = mean_se(&values);
        let expected =
            expected_sum(&spectrum, |m| m.index.norm_sq().powi(ell as i32)).unwrap();
        c.check_close(&format!("Sobolev sum, ell = {ell}"), mean, expected, 5.0 * se);
    }
    c.finish();
}

#[test]
fn criterion_05_exponential_weight_expectations() {
    let mut c = Criterion::new(5, "exponentially weighted sums");
    const M: usize = 10_000;
    let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));
    let seed = RandomSeed::new(0xA5, 0);
    let samples: Vec<WaveFunction> = (0..M)
        .map(|s| sample_g(&spectrum, seed.substream(s as u64)))
        .collect();
    for &alpha in &[0.25, 0.5] {
        let values: Vec<f64> = samples
            .iter()
            .map(|psi| exp_weighted_sum(psi, alpha).unwrap())
            .collect();
        let (mean, se) = mean_se(&values);
        let expected =
            expected_sum(&spectrum, |m| (2.0 * alpha * m.index.norm()).exp()).unwrap();
        c.check_close(
            &format!("exponential sum, alpha = {alpha}"),
            mean,
            expected,
            5.0 * se,
        );
    }
    c.finish();
}

#[test]
fn criterion_06_increment_variance() {
    let mut c = Criterion::new(6, "increment variance");
    const M: usize = 10_000;
    let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));
    let seed = RandomSeed::new(0xA6, 0);
    let q = 1.0;
    let samples: Vec<WaveFunction> = (0..M)
        .map(|s| sample_g(&spectrum, seed.substream(s as u64)))
        .collect();
    for &dq in &[1e-1, 1e-2, 1e-3] {
        let values: Vec<f64> = samples
            .iter()
            .map(|psi| {
                let a = evaluate(psi, &[q + dq]).unwrap();
                let b = evaluate(psi, &[q]).unwrap();
                (a - b).norm_sqr()
            })
            .collect();
        let (mean, se) = mean_se(&values);
        let kernel = increment_variance(&spectrum, &[q], dq).unwrap();
        c.check_close(
            &format!("increment variance, dq = {dq}"),
            mean,
            kernel,
            5.0 * se,
        );
    }
    // The kernel variance itself scales as dq^2 with the documented slope.
    let slope = expected_sum(&spectrum, |m| m.index.norm_sq()).unwrap() / TAU;
    let ratio = increment_variance(&spectrum, &[q], 1e-3).unwrap() / 1e-6;
    c.check((ratio - slope).abs() <= 0.02 * slope, || {
        format!("variance/dq^2 at dq = 1e-3: {ratio} vs {slope} (2% band)")
    });
    c.finish();
}

#[test]
fn criterion_07_holder_exponent() {
    let mut c = Criterion::new(7, "Holder exponent of RMS increments");
    let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));
    let fit = holder_fit(
        &spectrum,
        &[1.0],
        &[1e-2, 1e-3, 1e-4],
        10_000,
        RandomSeed::new(0xA7, 0),
    )
    .unwrap();
    match fit.exponent {
        Some(h) => c.check((0.9..=1.1).contains(&h), || {
            format!("fitted exponent {h} outside [0.9, 1.1]")
        }),
        None => c.check(false, || format!("degenerate fit: {:?}", fit.note)),
    }
    c.finish();
}

#[test]
fn criterion_08_domain_and_analytic_vector_sums() {
    let mut c = Criterion::new(8, "domain and analytic-vector sums");
    const M: usize = 10_000;
    let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));
    let seed = RandomSeed::new(0xA8, 0);
    let samples: Vec<WaveFunction> = (0..M)
        .map(|s| sample_g(&spectrum, seed.substream(s as u64)))
        .collect();
    for ell in 1..=2u32 {
        let values: Vec<f64> = samples
            .iter()
            .map(|psi| domain_power_sum(psi, ell).unwrap())
            .collect();
        let (mean, se) = mean_se(&values);
        let expected =
            expected_sum(&spectrum, |m| m.energy.powi(2 * ell as i32)).unwrap();
        c.check_close(&format!("domain sum, ell = {ell}"), mean, expected, 5.0 * se);
    }
    let epsilon = 0.5; // beta/4
    let values: Vec<f64> = samples
        .iter()
        .map(|psi| analytic_vector_sum(psi, epsilon).unwrap().value)
        .collect();
    let (mean, se) = mean_se(&values);
    let expected = analytic_vector_expectation(&spectrum, epsilon).unwrap();
    c.check_close("analytic-vector sum", mean, expected, 5.0 * se);
    c.finish();
}

#[test]
fn criterion_09_smoothness_condition_sums() {
    let mut c = Criterion::new(9, "smoothness condition sums under refinement");
    let base = circle(2.0, CutoffPolicy::MaxNorm(8));
    let refined = circle(2.0, CutoffPolicy::MaxNorm(16));
    for ell in 0..=4u32 {
        let a = theorem1_condition(&base, ell).unwrap();
        let b = theorem1_condition(&refined, ell).unwrap();
        c.check((a - b).abs() <= 1e-8 * b.abs(), || {
            format!("derivative sum, ell = {ell}: {a} vs {b} under cutoff doubling")
        });
    }
    let a = theorem1_condition_analytic(&base, 0.5).unwrap();
    let b = theorem1_condition_analytic(&refined, 0.5).unwrap();
    c.check((a - b).abs() <= 1e-8 * b.abs(), || {
        format!("analytic sum, alpha = 0.5: {a} vs {b} under cutoff doubling")
    });
    c.finish();
}

#[test]
fn criterion_10_analytic_continuation() {
    let mut c = Criterion::new(10, "analytic continuation on the strip");
    if require_gate(&mut c) {
        let small = circle(2.0, CutoffPolicy::TailMass(1e-12));
        let big = circle(2.0, CutoffPolicy::MaxNorm(10));
        let seed = RandomSeed::new(0xAA, 0);
        let xs = [0.3, 1.7, 3.1, 4.9, 6.0];
        for s in 0..20u64 {
            let psi_big = sample_gap(&big, seed.substream(s)).unwrap();
            // The same random function truncated at the documented cutoff.
            let coeffs: Vec<Complex64> = small
                .modes()
                .iter()
                .map(|m| psi_big.coefficient(&m.index).unwrap())
                .collect();
            let psi_small =
                WaveFunction::new(Arc::clone(&small), coeffs, Provenance::Derived, None).unwrap();
            for &x in &xs {
                let z = [Complex64::new(x, 0.1)];
                let full = evaluate_complex(&psi_big, &z, 1e-3).unwrap().value;
                let truncated = evaluate_complex(&psi_small, &z, 1e-3).unwrap().value;
                c.check((full - truncated).norm() < 1e-6, || {
                    format!(
                        "sample {s} at x = {x}: cutoff difference {:.2e}",
                        (full - truncated).norm()
                    )
                });
            }
            // Cauchy-Riemann residual from central differences.
            let z0 = Complex64::new(2.0, 0.1);
            let h = 1e-5;
            let at = |w: Complex64| evaluate_complex(&psi_big, &[w], 1e-3).unwrap().value;
            let dx = (at(z0 + h) - at(z0 - h)) / (2.0 * h);
            let dy = (at(z0 + Complex64::new(0.0, h)) - at(z0 - Complex64::new(0.0, h)))
                / Complex64::new(0.0, 2.0 * h);
            c.check((dx - dy).norm() <= 1e-5 * dx.norm(), || {
                format!(
                    "sample {s}: Cauchy-Riemann residual {:.2e} relative",
                    (dx - dy).norm() / dx.norm()
                )
            });
        }
    }
    c.finish();
}

#[test]
fn criterion_11_symmetrization() {
    let mut c = Criterion::new(11, "symmetrization projector");
    // Idempotence and exact fermionic exclusion on random vectors.
    for n in [2usize, 3] {
        let model =
            build_box_model(n, 1, 1.0, 1.0, CutoffPolicy::MaxNorm(4), Symmetry::None).unwrap();
        let spectrum = Arc::new(thermalize(&model, 2.0).unwrap());
        let psi = sample_g(&spectrum, RandomSeed::new(0xAB, 100 + n as u64));
        for sector in [Symmetry::Symmetric, Symmetry::Antisymmetric] {
            let once = symmetrize(&psi, sector).unwrap();
            let twice = symmetrize(&once, sector).unwrap();
            for (a, b) in once.coefficients().iter().zip(twice.coefficients()) {
                c.check((a - b).norm() <= 1e-15 * (1.0 + a.norm()), || {
                    format!("projector not idempotent for N = {n}, {sector:?}")
                });
            }
        }
        let anti = symmetrize(&psi, Symmetry::Antisymmetric).unwrap();
        for (mode, coeff) in spectrum.modes().iter().zip(anti.coefficients()) {
            let components = mode.index.components();
            if components.windows(2).any(|w| w[0] == w[1]) {
                c.check(coeff.re == 0.0 && coeff.im == 0.0, || {
                    format!("repeated index {} kept weight {coeff}", mode.index)
                });
            }
        }
    }

    // Direct sector sampling against projecting the full ensemble. The
    // projected Gaussian second moments are renormalized by their total
    // mass, which equals the sector's share of the full partition sum.
    if require_gate(&mut c) {
        const M: usize = 10_000;
        let full_model =
            build_box_model(2, 1, 1.0, 1.0, CutoffPolicy::MaxNorm(4), Symmetry::None).unwrap();
        let full = Arc::new(thermalize(&full_model, 2.0).unwrap());
        let sector_model =
            build_box_model(2, 1, 1.0, 1.0, CutoffPolicy::MaxNorm(4), Symmetry::Symmetric)
                .unwrap();
        let sector = Arc::new(thermalize(&sector_model, 2.0).unwrap());

        let direct_seed = RandomSeed::new(0xAB, 0);
        let mut direct: Vec<Vec<f64>> = vec![Vec::with_capacity(M); sector.len()];
        for s in 0..M {
            let psi = sample_gap(&sector, direct_seed.substream(s as u64)).unwrap();
            for (k, coeff) in psi.coefficients().iter().enumerate() {
                direct[k].push(coeff.norm_sqr());
            }
        }

        let proj_seed = RandomSeed::new(0xAB, 1);
        let mut projected: Vec<Vec<f64>> = vec![Vec::with_capacity(M); sector.len()];
        for s in 0..M {
            let psi = sample_g(&full, proj_seed.substream(s as u64));
            let p = project_to_sector(&psi, &sector).unwrap();
            for (k, coeff) in p.coefficients().iter().enumerate() {
                projected[k].push(coeff.norm_sqr());
            }
        }
        let total: f64 = projected
            .iter()
            .map(|vals| vals.iter().sum::<f64>() / M as f64)
            .sum();
        for k in 0..sector.len() {
            let (d_mean, d_se) = mean_se(&direct[k]);
            let (p_mean, p_se) = mean_se(&projected[k]);
            let (p_mean, p_se) = (p_mean / total, p_se / total);
            let tol = 5.0 * (d_se * d_se + p_se * p_se).sqrt();
            c.check((d_mean - p_mean).abs() <= tol, || {
                format!(
                    "second moment at {}: direct {d_mean} vs projected {p_mean} (tolerance {tol:.2e})",
                    sector.modes()[k].index
                )
            });
        }
    }
    c.finish();
}

#[test]
fn criterion_12_bohmian_trajectories() {
    let mut c = Criterion::new(12, "Bohmian velocity fields and equivariance");
    let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));

    // Plane wave: q(t) = q0 + (hbar n / m) t around the circle.
    let mut coeffs = vec![Complex64::new(0.0, 0.0); spectrum.len()];
    coeffs[spectrum.position(&ModeIndex::scalar(2)).unwrap()] = Complex64::new(1.0, 0.0);
    let plane =
        WaveFunction::new(Arc::clone(&spectrum), coeffs, Provenance::Derived, None).unwrap();
    let grid: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
    let traj = integrate_trajectory(&plane, &[1.0], &grid, None, IntegrationTolerances::default())
        .unwrap();
    c.check(traj.status == TrajectoryStatus::Completed, || {
        format!("plane-wave trajectory did not complete: {:?}", traj.status)
    });
    for (state, &t) in traj.states.iter().zip(&grid) {
        let expected = (1.0 + 2.0 * t).rem_euclid(TAU);
        c.check((state.q[0] - expected).abs() <= 1e-8, || {
            format!(
                "plane wave at t = {t}: {} vs {expected}",
                state.q[0]
            )
        });
    }

    // A real eigenstate generates the zero velocity field forever.
    let box_model =
        build_box_model(1, 1, 1.0, 1.0, CutoffPolicy::MaxNorm(5), Symmetry::None).unwrap();
    let box_spectrum = Arc::new(thermalize(&box_model, 2.0).unwrap());
    let mut coeffs = vec![Complex64::new(0.0, 0.0); box_spectrum.len()];
    coeffs[box_spectrum.position(&ModeIndex::scalar(1)).unwrap()] = Complex64::new(1.0, 0.0);
    let eigen =
        WaveFunction::new(Arc::clone(&box_spectrum), coeffs, Provenance::Derived, None).unwrap();
    let fixed = integrate_trajectory(
        &eigen,
        &[1.2],
        &[0.0, 5.0, 10.0],
        None,
        IntegrationTolerances::default(),
    )
    .unwrap();
    for state in &fixed.states {
        c.check(state.q[0] == 1.2, || {
            format!("eigenstate drifted to {}", state.q[0])
        });
    }

    // Global phases and positive rescalings leave the velocity unchanged.
    if require_gate(&mut c) {
        let psi = sample_gap(&spectrum, RandomSeed::new(0xAC, 2)).unwrap();
        let q = [2.3];
        let base = velocity(&psi, &q, None).unwrap();
        let phase = Complex64::from_polar(1.0, 0.777);
        for factor in [phase, Complex64::new(2.5, 0.0)] {
            let mapped: Vec<Complex64> =
                psi.coefficients().iter().map(|c| c * factor).collect();
            let other = psi.with_coefficients(mapped, Provenance::Derived).unwrap();
            let v = velocity(&other, &q, None).unwrap();
            c.check(
                (v[0] - base[0]).abs() <= 1e-13 * base[0].abs().max(1.0),
                || format!("velocity moved under gauge factor {factor}: {} vs {}", v[0], base[0]),
            );
        }

        // Equivariance: transport 10^4 points drawn from |psi(., 0)|^2 and
        // compare the endpoint histogram with |psi(., T)|^2.
        const M: usize = 10_000;
        const PANELS: usize = 8_000;
        const BINS: usize = 20;
        let psi = Arc::new(sample_gap(&spectrum, RandomSeed::new(0xAC, 0)).unwrap());
        let width = TAU / PANELS as f64;
        let mut cumulative = Vec::with_capacity(PANELS);
        let mut total = 0.0;
        for j in 0..PANELS {
            let q = (j as f64 + 0.5) * width;
            total += evaluate(&psi, &[q]).unwrap().norm_sqr();
            cumulative.push(total);
        }
        let mut rng = RandomSeed::new(0xAC, 1).rng();
        let starts: Vec<Vec<f64>> = (0..M)
            .map(|_| {
                let u = rand::Rng::random::<f64>(&mut rng) * total;
                let j = cumulative.partition_point(|&c| c < u);
                let below = if j == 0 { 0.0 } else { cumulative[j - 1] };
                let mass = cumulative[j] - below;
                vec![(j as f64 + (u - below) / mass) * width]
            })
            .collect();
        let t_final = 0.5;
        let trajectories = integrate_trajectories(
            &psi,
            &starts,
            &[0.0, t_final],
            None,
            IntegrationTolerances::default(),
        )
        .unwrap();

        let evolved = evolve_coefficients(&psi, t_final).unwrap();
        let mut expected_mass = [0.0f64; BINS];
        for j in 0..PANELS {
            let q = (j as f64 + 0.5) * width;
            expected_mass[j * BINS / PANELS] += evaluate(&evolved, &[q]).unwrap().norm_sqr();
        }
        let total_mass: f64 = expected_mass.iter().sum();

        let mut counts = [0usize; BINS];
        let mut completed = 0usize;
        for traj in &trajectories {
            if traj.status == TrajectoryStatus::Completed {
                completed += 1;
                let q = traj.states.last().unwrap().q[0];
                counts[((q / TAU * BINS as f64) as usize).min(BINS - 1)] += 1;
            }
        }
        c.check(completed == M, || {
            format!("{} of {M} trajectories aborted", M - completed)
        });
        if completed == M {
            let mut chi2 = 0.0;
            let mut min_expected = f64::INFINITY;
            for b in 0..BINS {
                let expected = M as f64 * expected_mass[b] / total_mass;
                min_expected = min_expected.min(expected);
                chi2 += (counts[b] as f64 - expected).powi(2) / expected;
            }
            c.check(min_expected >= 5.0, || {
                format!("sparsest bin expects only {min_expected:.1} hits")
            });
            c.check(chi2 <= CHI2_95_19, || {
                format!("equivariance chi^2 = {chi2:.2} over {BINS} bins (5% bound {CHI2_95_19})")
            });
        }
    }
    c.finish();
}

#[test]
fn criterion_13_deterministic_artifacts() {
    let mut c = Criterion::new(13, "byte-identical artifacts under fixed seeds");
    if require_gate(&mut c) {
        let make = || {
            let spectrum = circle(2.0, CutoffPolicy::TailMass(1e-12));
            let psi = sample_gap(&spectrum, RandomSeed::new(0xAD, 0)).unwrap();
            let hash = spectrum_hash(&spectrum).unwrap();
            let coeff_file = wave_function_csv(&psi, Some(&hash)).unwrap();
            let traj = integrate_trajectory(
                &psi,
                &[1.0],
                &[0.0, 0.5, 1.0],
                None,
                IntegrationTolerances::default(),
            )
            .unwrap();
            let traj_file =
                trajectory_csv(&traj, psi.seed(), &hash, None).unwrap();
            (coeff_file, traj_file)
        };
        let (coeff_a, traj_a) = make();
        let (coeff_b, traj_b) = make();
        c.check(coeff_a == coeff_b, || {
            "coefficient files differ between identical runs".to_string()
        });
        c.check(traj_a == traj_b, || {
            "trajectory files differ between identical runs".to_string()
        });
    }
    c.finish();
}
