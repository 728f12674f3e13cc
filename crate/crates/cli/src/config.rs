//! Experiment configuration: one JSON document per run, with flag
//! overrides folded in before anything is hashed or executed.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use gap_thermal_core::{
    build_box_model, build_circle_model, build_custom_model, sha256_hex, thermalize,
    CustomEigenfunctions, CutoffPolicy, GapError, IntegrationTolerances, Result, SamplerKind,
    SpectralModel, Symmetry, ThermalSpectrum,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub beta: f64,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub bohm: BohmConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "circle", "box" or "custom".
    pub kind: String,
    #[serde(rename = "N", default = "default_one")]
    pub n_particles: usize,
    #[serde(default = "default_one")]
    pub d: usize,
    #[serde(default = "default_one_f")]
    pub m: f64,
    #[serde(default = "default_one_f")]
    pub hbar: f64,
    #[serde(default = "default_symmetry")]
    pub symmetry: Symmetry,
    #[serde(default = "default_cutoff")]
    pub cutoff: CutoffPolicy,
    /// Custom models only: (label, weight) rows of the density matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<(i64, f64)>>,
    /// Custom models only: "none" or "circle-harmonics".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenfunctions: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Explicit diagnostic set; when absent, every diagnostic the model
    /// supports runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<Vec<String>>,
    pub ell: Vec<u32>,
    pub alpha: Vec<f64>,
    /// Analytic-vector epsilon; defaults to beta/4 at run time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub dq_grid: Vec<f64>,
    pub q: Vec<f64>,
    pub sigma: f64,
    pub samples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            set: None,
            ell: vec![1, 2, 3],
            alpha: vec![0.25, 0.5],
            epsilon: None,
            dq_grid: vec![1e-2, 1e-3, 1e-4],
            q: vec![1.0],
            sigma: 1.0,
            samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BohmConfig {
    /// Starting configurations; defaults to a single point at 1.0 in every
    /// coordinate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<Vec<Vec<f64>>>,
    pub t_grid: Vec<f64>,
    /// Per-particle masses overriding the model mass.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    pub per_step: f64,
    pub min_step: f64,
    pub node_threshold_factor: f64,
    /// Integrate a previously saved wave function instead of sampling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients_file: Option<PathBuf>,
}

impl Default for BohmConfig {
    fn default() -> Self {
        let tolerances = IntegrationTolerances::default();
        BohmConfig {
            starts: None,
            t_grid: (0..=10).map(|k| k as f64 / 10.0).collect(),
            masses: None,
            per_step: tolerances.per_step,
            min_step: tolerances.min_step,
            node_threshold_factor: tolerances.node_threshold_factor,
            coefficients_file: None,
        }
    }
}

impl BohmConfig {
    pub fn tolerances(&self) -> IntegrationTolerances {
        IntegrationTolerances {
            per_step: self.per_step,
            min_step: self.min_step,
            node_threshold_factor: self.node_threshold_factor,
        }
    }
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Gap
}
fn default_samples() -> usize {
    1
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_one() -> usize {
    1
}
fn default_one_f() -> f64 {
    1.0
}
fn default_symmetry() -> Symmetry {
    Symmetry::None
}
fn default_cutoff() -> CutoffPolicy {
    CutoffPolicy::TailMass(1e-12)
}

#[derive(Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub out: Option<PathBuf>,
    pub beta: Option<f64>,
}

/// A loaded config with overrides applied. `config_json` is the canonical
/// serialization whose hash every artifact embeds.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_json: String,
    pub config_sha256: String,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GapError::Io(format!("{}: {e}", path.display())))?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| GapError::Format(format!("{}: {e}", path.display())))?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(samples) = overrides.samples {
        config.samples = samples;
        config.diagnostics.samples = samples;
    }
    if let Some(beta) = overrides.beta {
        config.beta = beta;
    }
    if let Some(out) = &overrides.out {
        config.out = out.clone();
    }
    let config_json = serde_json::to_string(&config)
        .map_err(|e| GapError::Internal(format!("config serialization failed: {e}")))?;
    let config_sha256 = sha256_hex(config_json.as_bytes());
    Ok(Experiment {
        config,
        config_json,
        config_sha256,
    })
}

impl Experiment {
    pub fn spectrum(&self) -> Result<(Arc<SpectralModel>, Arc<ThermalSpectrum>)> {
        let m = &self.config.model;
        let invalid = |msg: &str| Err(GapError::InvalidParameter(msg.to_string()));
        let model = match m.kind.as_str() {
            "circle" => {
                if m.n_particles != 1 || m.d != 1 {
                    return invalid("the circle model is one particle on one ring");
                }
                if m.symmetry != Symmetry::None {
                    return invalid("the circle model has no permutation sectors");
                }
                if m.weights.is_some() || m.eigenfunctions.is_some() {
                    return invalid("weight tables belong to custom models");
                }
                build_circle_model(m.m, m.hbar, m.cutoff)?
            }
            "box" => {
                if m.weights.is_some() || m.eigenfunctions.is_some() {
                    return invalid("weight tables belong to custom models");
                }
                build_box_model(m.n_particles, m.d, m.m, m.hbar, m.cutoff, m.symmetry)?
            }
            "custom" => {
                let Some(weights) = m.weights.as_ref() else {
                    return invalid("custom models need a weight table");
                };
                let eigen = match m.eigenfunctions.as_deref() {
                    None | Some("none") => CustomEigenfunctions::None,
                    Some("circle-harmonics") => CustomEigenfunctions::CircleHarmonics,
                    Some(other) => {
                        return Err(GapError::InvalidParameter(format!(
                            "unknown eigenfunction table {other:?}"
                        )))
                    }
                };
                build_custom_model(weights, eigen)?.0
            }
            other => {
                return Err(GapError::InvalidParameter(format!(
                    "unknown model kind {other:?} (circle, box or custom)"
                )))
            }
        };
        // Custom tables are stated at beta = 1; this rescales them when the
        // config asks for a different temperature.
        let spectrum = Arc::new(thermalize(&model, self.config.beta)?);
        Ok((model, spectrum))
    }
}
