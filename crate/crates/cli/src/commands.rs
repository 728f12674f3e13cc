//! The four subcommands. Each builds the spectrum from the config, runs,
//! writes its artifacts under the output directory, and leaves a
//! manifest.json recording what was produced. The manifest timestamp is
//! the single non-reproducible field across identical runs.

use std::collections::BTreeMap;
use std::sync::Arc;

use gap_thermal_core::{
    analytic_vector_expectation, analytic_vector_sum, domain_power_sum, evaluate,
    evolve_coefficients, exp_weighted_sum, expected_sum, gaussian_modulus_mc,
    gaussian_modulus_moment, holder_fit, increment_variance, integrate_trajectories, sample_ga,
    sobolev_sum, spectrum_document, spectrum_hash, theorem1_condition,
    theorem1_condition_analytic, thermalize_with, trajectory_csv, velocity, wave_function_csv,
    CutoffPolicy, DiagnosticEntry, DiagnosticsReport, GapError, RandomSeed, Result, SamplerKind,
    SpectralModel, ThermalSpectrum, Trajectory, TrajectoryState, TrajectoryStatus, WaveFunction,
};
use serde_json::{json, Map, Value};

use crate::config::Experiment;

/// Disjoint substream bases so different diagnostics never reuse draws.
const STREAM_SAMPLES: u64 = 0;
const STREAM_GAUSSIAN: u64 = 1 << 32;
const STREAM_HOLDER: u64 = 2 << 32;

/// Stdout is a courtesy echo; the files are the record. Pipes that close
/// early (`| head`) must not turn a successful run into a panic.
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn write_manifest(exp: &Experiment, command: &str, extra: Map<String, Value>) -> Result<()> {
    let mut doc = Map::new();
    doc.insert("command".to_string(), command.into());
    doc.insert(
        "timestamp".to_string(),
        chrono::Utc::now().to_rfc3339().into(),
    );
    doc.insert("config_sha256".to_string(), exp.config_sha256.clone().into());
    let config: Value = serde_json::from_str(&exp.config_json)
        .map_err(|e| GapError::Internal(format!("config echo failed: {e}")))?;
    doc.insert("config".to_string(), config);
    doc.extend(extra);
    let text = serde_json::to_string_pretty(&Value::Object(doc))
        .map_err(|e| GapError::Internal(format!("manifest serialization failed: {e}")))?;
    std::fs::write(exp.config.out.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Evaluates a spectrum-level sum under repeated cutoff doubling until two
/// consecutive values agree to 1e-8 relative. Returns (value, value at half
/// the final radius, converged, final radius). The iteration cap keeps a
/// genuinely divergent sum from looping; it reports converged = false.
fn certified_sum(
    model: &Arc<SpectralModel>,
    beta: f64,
    start_radius: u32,
    eval: impl Fn(&ThermalSpectrum) -> Result<f64>,
) -> Result<(f64, f64, bool, u32)> {
    let mut radius = start_radius.max(1);
    let mut previous = eval(&thermalize_with(model, beta, CutoffPolicy::MaxNorm(radius))?)?;
    for _ in 0..8 {
        radius *= 2;
        let value = eval(&thermalize_with(model, beta, CutoffPolicy::MaxNorm(radius))?)?;
        if (value - previous).abs() <= 1e-8 * value.abs() {
            return Ok((value, previous, true, radius));
        }
        previous = value;
    }
    Ok((previous, previous, false, radius))
}

pub fn model(exp: &Experiment) -> Result<()> {
    let (_, spectrum) = exp.spectrum()?;
    let doc = json!({
        "config_sha256": exp.config_sha256,
        "spectrum_sha256": spectrum_hash(&spectrum)?,
        "spectrum": spectrum_document(&spectrum),
    });
    let pretty = serde_json::to_string_pretty(&doc)
        .map_err(|e| GapError::Internal(format!("spectrum serialization failed: {e}")))?;
    emit(&pretty);
    std::fs::create_dir_all(&exp.config.out)?;
    std::fs::write(exp.config.out.join("spectrum.json"), pretty + "\n")?;
    let mut extra = Map::new();
    extra.insert("outputs".to_string(), json!(["spectrum.json"]));
    write_manifest(exp, "model", extra)
}

pub fn sample(exp: &Experiment) -> Result<()> {
    let (_, spectrum) = exp.spectrum()?;
    std::fs::create_dir_all(&exp.config.out)?;
    let base = RandomSeed::new(exp.config.seed, STREAM_SAMPLES);
    let mut files = Vec::with_capacity(exp.config.samples);
    let mut chosen_modes = Vec::new();
    for s in 0..exp.config.samples {
        let seed = base.substream(s as u64);
        let psi = match exp.config.sampler {
            SamplerKind::Ga => {
                let (psi, mode) = sample_ga(&spectrum, seed);
                chosen_modes.push(mode.components().to_vec());
                psi
            }
            kind => gap_thermal_core::draw_sample(kind, &spectrum, seed)?,
        };
        let name = format!("sample_{s:05}.csv");
        let text = wave_function_csv(&psi, Some(&exp.config_sha256))?;
        std::fs::write(exp.config.out.join(&name), text)?;
        files.push(name);
    }
    let mut extra = Map::new();
    extra.insert("sampler".to_string(), json!(exp.config.sampler));
    extra.insert(
        "spectrum_sha256".to_string(),
        spectrum_hash(&spectrum)?.into(),
    );
    extra.insert("files".to_string(), json!(files));
    if exp.config.sampler == SamplerKind::Ga {
        extra.insert("chosen_modes".to_string(), json!(chosen_modes));
    }
    write_manifest(exp, "sample", extra)?;
    emit(&format!(
        "wrote {} coefficient file(s) to {}",
        exp.config.samples,
        exp.config.out.display()
    ));
    Ok(())
}

const KNOWN_DIAGNOSTICS: [&str; 8] = [
    "gaussian-modulus",
    "sobolev",
    "exp-weight",
    "domain",
    "analytic-vector",
    "increment",
    "holder",
    "theorem1",
];

fn entry(
    value: f64,
    expectation: Option<f64>,
    stderr: Option<f64>,
    pass: Option<bool>,
    parameters: &[(&str, f64)],
) -> DiagnosticEntry {
    DiagnosticEntry {
        value,
        expectation,
        stderr,
        pass,
        parameters: parameters
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
    }
}

fn five_se(value: f64, expectation: f64, se: f64) -> bool {
    (value - expectation).abs() <= 5.0 * se
}

pub fn diagnose(exp: &Experiment) -> Result<()> {
    let d = &exp.config.diagnostics;
    let (model, spectrum) = exp.spectrum()?;
    // An explicit set is honored verbatim and fails loudly on a diagnostic
    // the model cannot support; the default set adapts to the model
    // (increments need a one-dimensional configuration space).
    let set: Vec<String> = match &d.set {
        Some(names) => {
            for name in names {
                if !KNOWN_DIAGNOSTICS.contains(&name.as_str()) {
                    return Err(GapError::InvalidParameter(format!(
                        "unknown diagnostic {name:?}; known: {}",
                        KNOWN_DIAGNOSTICS.join(", ")
                    )));
                }
            }
            names.clone()
        }
        None => KNOWN_DIAGNOSTICS
            .iter()
            .filter(|n| model.config_dim() == 1 || !matches!(**n, "increment" | "holder"))
            .map(|n| n.to_string())
            .collect(),
    };
    let wants = |name: &str| set.iter().any(|s| s == name);
    let needs_samples = ["sobolev", "exp-weight", "domain", "analytic-vector", "increment"]
        .iter()
        .any(|n| wants(n));
    let samples: Vec<WaveFunction> = if needs_samples {
        let base = RandomSeed::new(exp.config.seed, STREAM_SAMPLES);
        (0..d.samples)
            .map(|s| gap_thermal_core::draw_sample(exp.config.sampler, &spectrum, base.substream(s as u64)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut entries = BTreeMap::new();
    if wants("gaussian-modulus") {
        let (mean, se) =
            gaussian_modulus_mc(d.sigma, d.samples, RandomSeed::new(exp.config.seed, STREAM_GAUSSIAN))?;
        let expected = gaussian_modulus_moment(d.sigma)?;
        entries.insert(
            "gaussian-modulus".to_string(),
            entry(
                mean,
                Some(expected),
                Some(se),
                Some(five_se(mean, expected, se)),
                &[("sigma", d.sigma)],
            ),
        );
    }
    if wants("sobolev") {
        for &ell in &d.ell {
            let values: Vec<f64> = samples.iter().map(|psi| sobolev_sum(psi, ell)).collect();
            let (mean, se) = mean_se(&values);
            let expected = expected_sum(&spectrum, |m| m.index.norm_sq().powi(ell as i32))?;
            entries.insert(
                format!("sobolev_ell_{ell}"),
                entry(
                    mean,
                    Some(expected),
                    Some(se),
                    Some(five_se(mean, expected, se)),
                    &[("ell", ell as f64)],
                ),
            );
        }
    }
    if wants("exp-weight") {
        for &alpha in &d.alpha {
            let values: Vec<f64> = samples
                .iter()
                .map(|psi| exp_weighted_sum(psi, alpha))
                .collect::<Result<_>>()?;
            let (mean, se) = mean_se(&values);
            let expected = expected_sum(&spectrum, |m| (2.0 * alpha * m.index.norm()).exp())?;
            entries.insert(
                format!("exp-weight_alpha_{alpha}"),
                entry(
                    mean,
                    Some(expected),
                    Some(se),
                    Some(five_se(mean, expected, se)),
                    &[("alpha", alpha)],
                ),
            );
        }
    }
    if wants("domain") {
        for &ell in d.ell.iter().filter(|&&ell| ell >= 1) {
            let values: Vec<f64> = samples
                .iter()
                .map(|psi| domain_power_sum(psi, ell))
                .collect::<Result<_>>()?;
            let (mean, se) = mean_se(&values);
            let expected = expected_sum(&spectrum, |m| m.energy.powi(2 * ell as i32))?;
            entries.insert(
                format!("domain_ell_{ell}"),
                entry(
                    mean,
                    Some(expected),
                    Some(se),
                    Some(five_se(mean, expected, se)),
                    &[("ell", ell as f64)],
                ),
            );
        }
    }
    if wants("analytic-vector") {
        let epsilon = d.epsilon.unwrap_or(exp.config.beta / 4.0);
        let mut outside = false;
        let values: Vec<f64> = samples
            .iter()
            .map(|psi| {
                analytic_vector_sum(psi, epsilon).map(|r| {
                    outside |= r.outside_regime;
                    r.value
                })
            })
            .collect::<Result<_>>()?;
        let (mean, se) = mean_se(&values);
        let expected = analytic_vector_expectation(&spectrum, epsilon)?;
        entries.insert(
            "analytic-vector".to_string(),
            entry(
                mean,
                Some(expected),
                Some(se),
                Some(five_se(mean, expected, se)),
                &[
                    ("epsilon", epsilon),
                    ("regime_limit", exp.config.beta / 2.0),
                    ("outside_regime", if outside { 1.0 } else { 0.0 }),
                ],
            ),
        );
    }
    if wants("increment") {
        for &dq in &d.dq_grid {
            let expected = increment_variance(&spectrum, &d.q, dq)?;
            let values: Vec<f64> = samples
                .iter()
                .map(|psi| {
                    let far = evaluate(psi, &[d.q[0] + dq])?;
                    let near = evaluate(psi, &d.q)?;
                    Ok((far - near).norm_sqr())
                })
                .collect::<Result<_>>()?;
            let (mean, se) = mean_se(&values);
            entries.insert(
                format!("increment_dq_{dq}"),
                entry(
                    mean,
                    Some(expected),
                    Some(se),
                    Some(five_se(mean, expected, se)),
                    &[("dq", dq), ("q", d.q[0])],
                ),
            );
        }
    }
    let mut holder_curve = None;
    if wants("holder") {
        let fit = holder_fit(
            &spectrum,
            &d.q,
            &d.dq_grid,
            d.samples,
            RandomSeed::new(exp.config.seed, STREAM_HOLDER),
        )?;
        let pass = fit.exponent.map(|h| (0.9..=1.1).contains(&h));
        entries.insert(
            "holder".to_string(),
            entry(
                fit.exponent.unwrap_or(0.0),
                Some(1.0),
                None,
                Some(pass == Some(true)),
                &[
                    ("samples", fit.samples as f64),
                    ("degenerate", if fit.degenerate { 1.0 } else { 0.0 }),
                ],
            ),
        );
        holder_curve = Some((fit.dq_grid, fit.rms));
    }
    if wants("theorem1") {
        // These sums weight modes by sqrt(p_n), which decays at half the
        // rate of the tail mass controlling the config cutoff, so they are
        // refined by repeated cutoff doubling until they stabilize. The
        // reported value is the converged sum.
        for &ell in &d.ell {
            let (value, at_half, converged, radius) = certified_sum(
                &model,
                exp.config.beta,
                spectrum.cutoff_radius(),
                |s| theorem1_condition(s, ell),
            )?;
            entries.insert(
                format!("theorem1_ell_{ell}"),
                entry(
                    value,
                    Some(at_half),
                    None,
                    Some(converged),
                    &[("ell", ell as f64), ("radius", radius as f64)],
                ),
            );
        }
        for &alpha in &d.alpha {
            let (value, at_half, converged, radius) = certified_sum(
                &model,
                exp.config.beta,
                spectrum.cutoff_radius(),
                |s| theorem1_condition_analytic(s, alpha),
            )?;
            entries.insert(
                format!("theorem1_alpha_{alpha}"),
                entry(
                    value,
                    Some(at_half),
                    None,
                    Some(converged),
                    &[("alpha", alpha), ("radius", radius as f64)],
                ),
            );
        }
    }

    let report = DiagnosticsReport { entries };
    let doc = json!({
        "config_sha256": exp.config_sha256,
        "spectrum_sha256": spectrum_hash(&spectrum)?,
        "sampler": exp.config.sampler,
        "samples": d.samples,
        "set": set,
        "all_passing": report.all_passing(),
        "report": report,
    });
    let pretty = serde_json::to_string_pretty(&doc)
        .map_err(|e| GapError::Internal(format!("report serialization failed: {e}")))?;
    emit(&pretty);
    std::fs::create_dir_all(&exp.config.out)?;
    std::fs::write(exp.config.out.join("diagnostics.json"), pretty + "\n")?;
    let mut outputs = vec!["diagnostics.json"];
    if let Some((dq_grid, rms)) = holder_curve {
        let mut csv = format!(
            "# {}\ndq,rms\n",
            json!({"config_sha256": exp.config_sha256})
        );
        for (dq, r) in dq_grid.iter().zip(&rms) {
            csv.push_str(&format!("{dq},{r}\n"));
        }
        std::fs::write(exp.config.out.join("holder.csv"), csv)?;
        outputs.push("holder.csv");
    }
    let mut extra = Map::new();
    extra.insert("outputs".to_string(), json!(outputs));
    write_manifest(exp, "diagnose", extra)
}

pub fn bohm(exp: &Experiment) -> Result<()> {
    let (_, spectrum) = exp.spectrum()?;
    let b = &exp.config.bohm;
    let psi = match &b.coefficients_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| GapError::Io(format!("{}: {e}", path.display())))?;
            gap_thermal_core::read_wave_function(&text, &spectrum)?.0
        }
        None => gap_thermal_core::draw_sample(
            exp.config.sampler,
            &spectrum,
            RandomSeed::new(exp.config.seed, STREAM_SAMPLES),
        )?,
    };
    let psi = Arc::new(psi);
    let dim = spectrum.model().config_dim();
    let starts = b
        .starts
        .clone()
        .unwrap_or_else(|| vec![vec![1.0; dim]]);
    let t0 = *b.t_grid.first().ok_or_else(|| {
        GapError::InvalidParameter("bohm time grid must not be empty".to_string())
    })?;
    // Starts sitting on a node at t0 become single-state abort records
    // rather than failing the whole run; any other precondition failure is
    // a config error.
    let probe = if t0 == 0.0 {
        Arc::clone(&psi)
    } else {
        Arc::new(evolve_coefficients(&psi, t0)?)
    };
    let masses = b.masses.as_deref();
    let mut results: Vec<Option<Trajectory>> = Vec::with_capacity(starts.len());
    let mut live = Vec::new();
    for q0 in &starts {
        match velocity(&probe, q0, masses) {
            Ok(_) => {
                live.push(q0.clone());
                results.push(None);
            }
            Err(GapError::Node { location, psi_sq, .. }) => {
                results.push(Some(Trajectory {
                    states: vec![TrajectoryState {
                        t: t0,
                        q: q0.clone(),
                        psi_sq,
                        step: 0.0,
                    }],
                    status: TrajectoryStatus::NodeAbort { t: t0, location },
                    min_psi_sq: psi_sq,
                    rejected_steps: 0,
                }));
            }
            Err(e) => return Err(e),
        }
    }
    let integrated = if live.is_empty() {
        Vec::new()
    } else {
        integrate_trajectories(&psi, &live, &b.t_grid, masses, b.tolerances())?
    };
    let mut integrated = integrated.into_iter();
    let trajectories: Vec<Trajectory> = results
        .into_iter()
        .map(|slot| slot.unwrap_or_else(|| integrated.next().expect("one result per live start")))
        .collect();

    std::fs::create_dir_all(&exp.config.out)?;
    let hash = spectrum_hash(&spectrum)?;
    let mut files = Vec::with_capacity(trajectories.len());
    let mut statuses = Vec::with_capacity(trajectories.len());
    for (i, traj) in trajectories.iter().enumerate() {
        let name = format!("trajectory_{i:05}.csv");
        let text = trajectory_csv(traj, psi.seed(), &hash, Some(&exp.config_sha256))?;
        std::fs::write(exp.config.out.join(&name), text)?;
        match &traj.status {
            TrajectoryStatus::Completed => {
                emit(&format!("{name}: completed ({} states)", traj.states.len()));
            }
            TrajectoryStatus::NodeAbort { t, .. } => {
                emit(&format!("{name}: node abort at t = {t}"));
            }
            TrajectoryStatus::StepFloorAbort { t } => {
                emit(&format!("{name}: step floor abort at t = {t}"));
            }
        }
        statuses.push(serde_json::to_value(&traj.status).map_err(|e| {
            GapError::Internal(format!("status serialization failed: {e}"))
        })?);
        files.push(name);
    }
    let mut extra = Map::new();
    extra.insert("spectrum_sha256".to_string(), hash.into());
    extra.insert("files".to_string(), json!(files));
    extra.insert("statuses".to_string(), Value::Array(statuses));
    write_manifest(exp, "bohm", extra)
}
