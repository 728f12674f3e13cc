//! Samplers for the Gaussian, adjusted, and projected thermal measures.
//!
//! G(rho): the coefficients in rho's eigenbasis are independent mean-zero
//! complex Gaussians with E|c_n|^2 = p_n. GA(rho): G reweighted by the
//! squared norm. GAP(rho): a GA draw pushed to the unit sphere; its density
//! matrix is exactly rho, which makes it the canonical distribution of wave
//! functions in thermal equilibrium.
//!
//! GA is sampled exactly through a mixture decomposition rather than
//! rejection (the density ||psi||^2 is unbounded). Since E_G ||psi||^2 = 1,
//! the GA density splits as sum_K |c_K|^2 = sum_K p_K (|c_K|^2 / p_K):
//! choose a coordinate K with probability p_K, size-bias that single
//! coordinate, and leave the rest Gaussian. The size-biased squared modulus
//! of a complex Gaussian is Gamma(shape 2, scale p_K), and the phase stays
//! uniform. The construction is gated by a reweighted-G oracle in the
//! acceptance suite before any GA/GAP-dependent test runs.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::rng::RandomSeed;
use crate::spectral::{ModeIndex, ThermalSpectrum};

const TWO_PI: f64 = std::f64::consts::TAU;

/// Which measure a wave function was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    G,
    Ga,
    Gap,
    Derived,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::G => write!(f, "g"),
            Provenance::Ga => write!(f, "ga"),
            Provenance::Gap => write!(f, "gap"),
            Provenance::Derived => write!(f, "derived"),
        }
    }
}

/// A finite coefficient vector over the retained modes of a thermal
/// spectrum, aligned with the spectrum's canonical mode order. Immutable
/// after creation.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    spectrum: Arc<ThermalSpectrum>,
    coefficients: Vec<Complex64>,
    provenance: Provenance,
    seed: Option<RandomSeed>,
}

impl WaveFunction {
    /// Wrap an explicit coefficient vector. GAP provenance requires unit
    /// norm within 1e-12.
    pub fn new(
        spectrum: Arc<ThermalSpectrum>,
        coefficients: Vec<Complex64>,
        provenance: Provenance,
        seed: Option<RandomSeed>,
    ) -> Result<Self> {
        if coefficients.len() != spectrum.len() {
            return Err(GapError::InvalidParameter(format!(
                "coefficient count {} does not match retained mode count {}",
                coefficients.len(),
                spectrum.len()
            )));
        }
        if !coefficients.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(GapError::InvalidParameter(
                "coefficients must be finite".to_string(),
            ));
        }
        let wf = Self {
            spectrum,
            coefficients,
            provenance,
            seed,
        };
        if provenance == Provenance::Gap && (wf.norm_sq() - 1.0).abs() > 1e-12 {
            return Err(GapError::InvalidParameter(
                "GAP wave functions must have unit norm within 1e-12".to_string(),
            ));
        }
        Ok(wf)
    }

    pub fn spectrum(&self) -> &Arc<ThermalSpectrum> {
        &self.spectrum
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Seed of the originating draw, when there was one.
    pub fn seed(&self) -> Option<RandomSeed> {
        self.seed
    }

    pub fn norm_sq(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Coefficient of a mode label, if retained.
    pub fn coefficient(&self, index: &ModeIndex) -> Option<Complex64> {
        self.spectrum.position(index).map(|i| self.coefficients[i])
    }

    /// Same spectrum and seed, new coefficients.
    pub fn with_coefficients(
        &self,
        coefficients: Vec<Complex64>,
        provenance: Provenance,
    ) -> Result<Self> {
        Self::new(
            Arc::clone(&self.spectrum),
            coefficients,
            provenance,
            self.seed,
        )
    }
}

fn gaussian_coefficient(weight: f64, rng: &mut impl Rng) -> Complex64 {
    let s = (0.5 * weight).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draw from G(rho): independent complex Gaussian coefficients with
/// variances p_n, in canonical mode order.
pub fn sample_g(spectrum: &Arc<ThermalSpectrum>, seed: RandomSeed) -> WaveFunction {
    let mut rng = seed.rng();
    let coefficients = spectrum
        .modes()
        .iter()
        .map(|m| gaussian_coefficient(m.weight, &mut rng))
        .collect();
    WaveFunction {
        spectrum: Arc::clone(spectrum),
        coefficients,
        provenance: Provenance::G,
        seed: Some(seed),
    }
}

/// Draw from GA(rho) by the exact size-biased mixture; also returns the
/// mixture-chosen mode so downstream oracles can condition on it.
///
/// Draw order is fixed: one uniform for the choice of K, then per mode in
/// canonical order either two normals (Gaussian modes) or two uniforms and
/// a phase (the size-biased mode).
pub fn sample_ga(spectrum: &Arc<ThermalSpectrum>, seed: RandomSeed) -> (WaveFunction, ModeIndex) {
    let mut rng = seed.rng();
    let modes = spectrum.modes();
    let u: f64 = rng.random();
    let mut chosen = modes.len() - 1;
    let mut acc = 0.0;
    for (i, m) in modes.iter().enumerate() {
        acc += m.weight;
        if u < acc {
            chosen = i;
            break;
        }
    }
    let coefficients = modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if i == chosen {
                // |c_K|^2 ~ Gamma(2, p_K) sampled as -p_K ln(u1 u2); the
                // uniforms are reflected into (0, 1] so the logs are finite.
                let u1 = 1.0 - rng.random::<f64>();
                let u2 = 1.0 - rng.random::<f64>();
                let x = -m.weight * (u1 * u2).ln();
                let theta = TWO_PI * rng.random::<f64>();
                Complex64::from_polar(x.sqrt(), theta)
            } else {
                gaussian_coefficient(m.weight, &mut rng)
            }
        })
        .collect();
    (
        WaveFunction {
            spectrum: Arc::clone(spectrum),
            coefficients,
            provenance: Provenance::Ga,
            seed: Some(seed),
        },
        modes[chosen].index.clone(),
    )
}

/// Draw from GAP(rho): a GA draw normalized to the unit sphere.
pub fn sample_gap(spectrum: &Arc<ThermalSpectrum>, seed: RandomSeed) -> Result<WaveFunction> {
    let (mut wf, _) = sample_ga(spectrum, seed);
    let mut norm_sq = wf.norm_sq();
    if norm_sq == 0.0 {
        // Probability-zero degenerate draw; retry once on a decorrelated
        // key so neighbouring substreams are not disturbed.
        let retry = RandomSeed::new(seed.seed ^ 0x9e37_79b9_7f4a_7c15, seed.stream);
        wf = sample_ga(spectrum, retry).0;
        norm_sq = wf.norm_sq();
        if norm_sq == 0.0 {
            return Err(GapError::Internal(
                "GA draw had zero norm twice in a row".to_string(),
            ));
        }
    }
    let inv = 1.0 / norm_sq.sqrt();
    for c in &mut wf.coefficients {
        *c *= inv;
    }
    wf.provenance = Provenance::Gap;
    Ok(wf)
}

/// Sampler selector used by covariance estimation and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    G,
    Ga,
    Gap,
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplerKind::G => write!(f, "g"),
            SamplerKind::Ga => write!(f, "ga"),
            SamplerKind::Gap => write!(f, "gap"),
        }
    }
}

/// One draw from the selected sampler.
pub fn draw_sample(
    kind: SamplerKind,
    spectrum: &Arc<ThermalSpectrum>,
    seed: RandomSeed,
) -> Result<WaveFunction> {
    match kind {
        SamplerKind::G => Ok(sample_g(spectrum, seed)),
        SamplerKind::Ga => Ok(sample_ga(spectrum, seed).0),
        SamplerKind::Gap => sample_gap(spectrum, seed),
    }
}

/// Monte Carlo estimate of one diagonal entry of the density matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalEstimate {
    pub index: ModeIndex,
    /// The spectrum weight p_n this estimate should reproduce.
    pub expected: f64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of E c_j c_k^* for one requested off-diagonal pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonalEstimate {
    pub row: ModeIndex,
    pub col: ModeIndex,
    pub estimate: Complex64,
    pub stderr: f64,
}

/// Empirical density matrix of a sampler over M independent draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub sampler: SamplerKind,
    pub samples: usize,
    pub diagonal: Vec<DiagonalEstimate>,
    pub off_diagonal: Vec<OffDiagonalEstimate>,
}

struct CovarianceAccumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    off: Vec<Complex64>,
    off_sq: Vec<f64>,
}

impl CovarianceAccumulator {
    fn new(modes: usize, pairs: usize) -> Self {
        Self {
            sum: vec![0.0; modes],
            sum_sq: vec![0.0; modes],
            off: vec![Complex64::new(0.0, 0.0); pairs],
            off_sq: vec![0.0; pairs],
        }
    }

    fn absorb(&mut self, wf: &WaveFunction, pairs: &[(usize, usize)]) {
        for (i, c) in wf.coefficients().iter().enumerate() {
            let x = c.norm_sqr();
            self.sum[i] += x;
            self.sum_sq[i] += x * x;
        }
        for (p, &(j, k)) in pairs.iter().enumerate() {
            let v = wf.coefficients()[j] * wf.coefficients()[k].conj();
            self.off[p] += v;
            self.off_sq[p] += v.norm_sqr();
        }
    }

    fn merge(&mut self, other: &Self) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        for (a, b) in self.off.iter_mut().zip(&other.off) {
            *a += b;
        }
        for (a, b) in self.off_sq.iter_mut().zip(&other.off_sq) {
            *a += b;
        }
    }
}

/// Estimate p-hat_n = (1/M) sum |c_n|^2 with empirical standard errors,
/// plus E c_j c_k^* for any requested off-diagonal pairs. Sample s uses
/// stream `seed.substream(s)`, so the estimate is independent of thread
/// count; chunks are reduced in fixed order to keep the floating-point
/// result reproducible as well.
pub fn estimate_covariance(
    sampler: SamplerKind,
    spectrum: &Arc<ThermalSpectrum>,
    samples: usize,
    seed: RandomSeed,
    off_diagonal_pairs: &[(ModeIndex, ModeIndex)],
) -> Result<CovarianceEstimate> {
    if samples < 100 {
        return Err(GapError::InvalidParameter(
            "covariance estimation needs at least 100 samples".to_string(),
        ));
    }
    let mut pairs = Vec::with_capacity(off_diagonal_pairs.len());
    for (a, b) in off_diagonal_pairs {
        let ja = spectrum.position(a).ok_or_else(|| {
            GapError::InvalidParameter(format!("mode {a} is not retained by the spectrum"))
        })?;
        let jb = spectrum.position(b).ok_or_else(|| {
            GapError::InvalidParameter(format!("mode {b} is not retained by the spectrum"))
        })?;
        pairs.push((ja, jb));
    }

    const CHUNK: usize = 1024;
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<CovarianceAccumulator> = (0..chunks)
        .into_par_iter()
        .map(|chunk| -> Result<CovarianceAccumulator> {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(samples);
            let mut acc = CovarianceAccumulator::new(spectrum.len(), pairs.len());
            for s in lo..hi {
                let wf = draw_sample(sampler, spectrum, seed.substream(s as u64))?;
                acc.absorb(&wf, &pairs);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = CovarianceAccumulator::new(spectrum.len(), pairs.len());
    for p in &partials {
        total.merge(p);
    }

    let m = samples as f64;
    let diagonal = spectrum
        .modes()
        .iter()
        .enumerate()
        .map(|(i, mode)| {
            let mean = total.sum[i] / m;
            let var = ((total.sum_sq[i] - m * mean * mean) / (m - 1.0)).max(0.0);
            DiagonalEstimate {
                index: mode.index.clone(),
                expected: mode.weight,
                estimate: mean,
                stderr: (var / m).sqrt(),
            }
        })
        .collect();
    let off_diagonal = pairs
        .iter()
        .enumerate()
        .map(|(p, &(j, k))| {
            let mean = total.off[p] / m;
            let scatter = ((total.off_sq[p] / m - mean.norm_sqr()) / m).max(0.0);
            OffDiagonalEstimate {
                row: spectrum.modes()[j].index.clone(),
                col: spectrum.modes()[k].index.clone(),
                estimate: mean,
                stderr: scatter.sqrt(),
            }
        })
        .collect();
    Ok(CovarianceEstimate {
        sampler,
        samples,
        diagonal,
        off_diagonal,
    })
}
