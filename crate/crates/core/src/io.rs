//! Artifact formats: spectrum JSON documents, coefficient CSV files,
//! trajectory CSV files.
//!
//! All files are UTF-8 with LF line endings and `.` as decimal separator.
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every bit and repeated runs with the same
//! seed produce byte-identical files. Coefficient and trajectory files
//! embed a SHA-256 hash of the spectrum document they were drawn from;
//! reading verifies the hash against the spectrum supplied by the caller.

use std::fmt::Write as _;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bohmian::{Trajectory, TrajectoryState, TrajectoryStatus};
use crate::error::{GapError, Result};
use crate::rng::{RandomSeed, RNG_ALGORITHM};
use crate::sampler::{Provenance, WaveFunction};
use crate::spectral::{ModeIndex, Symmetry, ThermalSpectrum};

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// One retained mode of a serialized spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub index: Vec<i64>,
    pub energy: f64,
    pub weight: f64,
}

/// The on-disk description of a thermal spectrum. Mode order in the file
/// is the canonical order used everywhere downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDocument {
    pub kind: String,
    #[serde(rename = "N")]
    pub n_particles: usize,
    pub d: usize,
    pub m: f64,
    pub hbar: f64,
    pub beta: f64,
    pub tail_mass: f64,
    pub symmetry: Symmetry,
    pub modes: Vec<ModeRecord>,
}

/// Build the serializable document for a spectrum.
pub fn spectrum_document(spectrum: &ThermalSpectrum) -> SpectrumDocument {
    let model = spectrum.model();
    SpectrumDocument {
        kind: model.kind().to_string(),
        n_particles: model.n_particles(),
        d: model.dim(),
        m: model.mass(),
        hbar: model.hbar(),
        beta: spectrum.beta(),
        tail_mass: spectrum.tail_mass_bound(),
        symmetry: model.symmetry(),
        modes: spectrum
            .modes()
            .iter()
            .map(|m| ModeRecord {
                index: m.index.components().to_vec(),
                energy: m.energy,
                weight: m.weight,
            })
            .collect(),
    }
}

/// Compact canonical JSON of the spectrum document. This is the hashing
/// pre-image; field order is fixed by the struct declaration.
pub fn spectrum_json(spectrum: &ThermalSpectrum) -> Result<String> {
    serde_json::to_string(&spectrum_document(spectrum))
        .map_err(|e| GapError::Internal(format!("spectrum serialization failed: {e}")))
}

/// SHA-256 (lowercase hex) of the canonical spectrum JSON.
pub fn spectrum_hash(spectrum: &ThermalSpectrum) -> Result<String> {
    Ok(sha256_hex(spectrum_json(spectrum)?.as_bytes()))
}

/// JSON metadata line at the top of a coefficient CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveFunctionHeader {
    pub provenance: Provenance,
    pub rng: String,
    pub seed: Option<RandomSeed>,
    pub spectrum_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
}

/// Render a wave function as CSV: a `# {json}` metadata line, a column
/// header, then one row per mode in canonical order.
pub fn wave_function_csv(psi: &WaveFunction, config_sha256: Option<&str>) -> Result<String> {
    let header = WaveFunctionHeader {
        provenance: psi.provenance(),
        rng: RNG_ALGORITHM.to_string(),
        seed: psi.seed(),
        spectrum_sha256: spectrum_hash(psi.spectrum())?,
        config_sha256: config_sha256.map(str::to_string),
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| GapError::Internal(format!("header serialization failed: {e}")))?;
    let dim = psi.spectrum().model().config_dim();
    let mut out = String::new();
    let _ = writeln!(out, "# {header_json}");
    for j in 0..dim {
        let _ = write!(out, "index_{j},");
    }
    let _ = writeln!(out, "energy,re,im");
    for (mode, c) in psi.spectrum().modes().iter().zip(psi.coefficients()) {
        for component in mode.index.components() {
            let _ = write!(out, "{component},");
        }
        let _ = writeln!(out, "{},{},{}", mode.energy, c.re, c.im);
    }
    Ok(out)
}

/// Parse a coefficient CSV produced by [`wave_function_csv`] against the
/// spectrum it claims to describe. The spectrum hash, mode order and
/// stored energies must all match.
pub fn read_wave_function(
    text: &str,
    spectrum: &Arc<ThermalSpectrum>,
) -> Result<(WaveFunction, WaveFunctionHeader)> {
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| GapError::Format("empty coefficient file".to_string()))?;
    let header_json = header_line
        .strip_prefix("# ")
        .ok_or_else(|| GapError::Format("missing metadata line".to_string()))?;
    let header: WaveFunctionHeader = serde_json::from_str(header_json)
        .map_err(|e| GapError::Format(format!("bad metadata line: {e}")))?;
    let expected_hash = spectrum_hash(spectrum)?;
    if header.spectrum_sha256 != expected_hash {
        return Err(GapError::Format(format!(
            "spectrum hash mismatch: file has {}, spectrum is {expected_hash}",
            header.spectrum_sha256
        )));
    }
    let dim = spectrum.model().config_dim();
    let mut expected_columns = String::new();
    for j in 0..dim {
        let _ = write!(expected_columns, "index_{j},");
    }
    expected_columns.push_str("energy,re,im");
    match lines.next() {
        Some(cols) if cols == expected_columns => {}
        other => {
            return Err(GapError::Format(format!(
                "expected column header {expected_columns:?}, got {other:?}"
            )))
        }
    }
    let mut coefficients = Vec::with_capacity(spectrum.len());
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(GapError::Format(format!(
                "row {row}: expected {} fields, got {}",
                dim + 3,
                fields.len()
            )));
        }
        let mode = spectrum.modes().get(row).ok_or_else(|| {
            GapError::Format(format!(
                "more rows than the {} retained modes",
                spectrum.len()
            ))
        })?;
        let mut components = Vec::with_capacity(dim);
        for field in &fields[..dim] {
            components.push(field.parse::<i64>().map_err(|e| {
                GapError::Format(format!("row {row}: bad index component {field:?}: {e}"))
            })?);
        }
        if ModeIndex(components) != mode.index {
            return Err(GapError::Format(format!(
                "row {row}: mode index does not follow canonical order"
            )));
        }
        let parse = |field: &str, name: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .map_err(|e| GapError::Format(format!("row {row}: bad {name} {field:?}: {e}")))
        };
        let energy = parse(fields[dim], "energy")?;
        if energy != mode.energy {
            return Err(GapError::Format(format!(
                "row {row}: stored energy {energy} disagrees with spectrum energy {}",
                mode.energy
            )));
        }
        let re = parse(fields[dim + 1], "re")?;
        let im = parse(fields[dim + 2], "im")?;
        coefficients.push(Complex64::new(re, im));
    }
    if coefficients.len() != spectrum.len() {
        return Err(GapError::Format(format!(
            "file has {} rows, spectrum retains {} modes",
            coefficients.len(),
            spectrum.len()
        )));
    }
    let psi = WaveFunction::new(
        Arc::clone(spectrum),
        coefficients,
        header.provenance,
        header.seed,
    )?;
    Ok((psi, header))
}

/// JSON metadata line at the bottom of a trajectory CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFooter {
    pub status: TrajectoryStatus,
    pub min_psi_sq: f64,
    pub rejected_steps: usize,
    pub seed: Option<RandomSeed>,
    pub spectrum_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
}

/// Render a trajectory as CSV: a column header, one row per recorded
/// state, then a `# {json}` footer carrying the abort status and
/// provenance hashes.
pub fn trajectory_csv(
    trajectory: &Trajectory,
    seed: Option<RandomSeed>,
    spectrum_sha256: &str,
    config_sha256: Option<&str>,
) -> Result<String> {
    let dim = trajectory
        .states
        .first()
        .map(|s| s.q.len())
        .ok_or_else(|| GapError::InvalidParameter("trajectory has no states".to_string()))?;
    let mut out = String::new();
    let _ = write!(out, "t,");
    for j in 0..dim {
        let _ = write!(out, "q_{j},");
    }
    let _ = writeln!(out, "psi_sq,step");
    for state in &trajectory.states {
        let _ = write!(out, "{},", state.t);
        for x in &state.q {
            let _ = write!(out, "{x},");
        }
        let _ = writeln!(out, "{},{}", state.psi_sq, state.step);
    }
    let footer = TrajectoryFooter {
        status: trajectory.status.clone(),
        min_psi_sq: trajectory.min_psi_sq,
        rejected_steps: trajectory.rejected_steps,
        seed,
        spectrum_sha256: spectrum_sha256.to_string(),
        config_sha256: config_sha256.map(str::to_string),
    };
    let footer_json = serde_json::to_string(&footer)
        .map_err(|e| GapError::Internal(format!("footer serialization failed: {e}")))?;
    let _ = writeln!(out, "# {footer_json}");
    Ok(out)
}

/// Parse a trajectory CSV produced by [`trajectory_csv`].
pub fn read_trajectory(text: &str) -> Result<(Trajectory, TrajectoryFooter)> {
    let mut lines: Vec<&str> = text.lines().collect();
    let footer_line = lines
        .pop()
        .ok_or_else(|| GapError::Format("empty trajectory file".to_string()))?;
    let footer_json = footer_line
        .strip_prefix("# ")
        .ok_or_else(|| GapError::Format("missing trajectory footer".to_string()))?;
    let footer: TrajectoryFooter = serde_json::from_str(footer_json)
        .map_err(|e| GapError::Format(format!("bad trajectory footer: {e}")))?;
    if lines.is_empty() {
        return Err(GapError::Format("trajectory file has no header".to_string()));
    }
    let columns = lines.remove(0);
    let dim = columns
        .split(',')
        .filter(|c| c.starts_with("q_"))
        .count();
    if dim == 0 {
        return Err(GapError::Format(format!(
            "bad trajectory column header {columns:?}"
        )));
    }
    let mut states = Vec::with_capacity(lines.len());
    for (row, line) in lines.iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(GapError::Format(format!(
                "trajectory row {row}: expected {} fields, got {}",
                dim + 3,
                fields.len()
            )));
        }
        let mut values = Vec::with_capacity(fields.len());
        for field in &fields {
            values.push(field.parse::<f64>().map_err(|e| {
                GapError::Format(format!("trajectory row {row}: bad field {field:?}: {e}"))
            })?);
        }
        states.push(TrajectoryState {
            t: values[0],
            q: values[1..=dim].to_vec(),
            psi_sq: values[dim + 1],
            step: values[dim + 2],
        });
    }
    let trajectory = Trajectory {
        states,
        status: footer.status.clone(),
        min_psi_sq: footer.min_psi_sq,
        rejected_steps: footer.rejected_steps,
    };
    Ok((trajectory, footer))
}
