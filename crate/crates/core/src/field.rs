//! Pointwise field evaluation: values, term-wise derivatives, analytic
//! continuation into complex strips, the Fourier/energy coefficient map
//! for the box, and permutation (anti)symmetrization.
//!
//! Everything here is linear in the coefficients and works on the
//! truncated expansion psi(q) = sum_n c_n phi_n(q). Continuation is exact
//! term by term (harmonics and sine products are entire); what a finite
//! sample cannot certify is the discarded tail, so complex evaluation
//! returns a growth estimate built from the outermost retained shell and
//! refuses strips where that estimate exceeds the caller's tolerance.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::sampler::{Provenance, WaveFunction};
use crate::spectral::{permutations_with_sign, ModeIndex, ModelKind, Symmetry, ThermalSpectrum};

const TWO_PI: f64 = std::f64::consts::TAU;

/// psi(q) = sum_n c_n phi_n(q) at a real configuration point.
pub fn evaluate(psi: &WaveFunction, q: &[f64]) -> Result<Complex64> {
    let spectrum = psi.spectrum();
    let model = spectrum.model();
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, c) in spectrum.modes().iter().zip(psi.coefficients()) {
        acc += c * model.eval(&m.index, q)?;
    }
    Ok(acc)
}

/// Term-wise derivative of the truncated expansion. `orders` assigns a
/// derivative order to every configuration coordinate; all zeros
/// reproduces `evaluate` exactly.
pub fn evaluate_derivative(psi: &WaveFunction, q: &[f64], orders: &[u32]) -> Result<Complex64> {
    let spectrum = psi.spectrum();
    let model = spectrum.model();
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, c) in spectrum.modes().iter().zip(psi.coefficients()) {
        acc += c * model.eval_derivative(&m.index, q, orders)?;
    }
    Ok(acc)
}

/// A continuation value together with the growth estimate of the
/// truncated tail on the strip where it was computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripEvaluation {
    pub value: Complex64,
    /// Outer-shell contribution bound: (number of retained modes in the
    /// outermost norm shell) times the largest |c_n| sup|phi_n| on the
    /// strip among them. A proxy for the first discarded shell.
    pub tail_estimate: f64,
}

/// Analytic continuation of the truncated expansion to a complex
/// configuration point. Fails with a strip-divergence error when the
/// tail estimate exceeds `tail_tolerance`; pass infinity to always get
/// the value and judge the estimate yourself.
pub fn evaluate_complex(
    psi: &WaveFunction,
    z: &[Complex64],
    tail_tolerance: f64,
) -> Result<StripEvaluation> {
    let spectrum = psi.spectrum();
    let model = spectrum.model();
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, c) in spectrum.modes().iter().zip(psi.coefficients()) {
        acc += c * model.eval_complex(&m.index, z)?;
    }
    let alpha = z.iter().map(|w| w.im.abs()).fold(0.0, f64::max);
    let mut tail = 0.0;
    if alpha > 0.0 {
        let outer = spectrum.cutoff_radius() as f64 - 1.0;
        let mut shell_count = 0usize;
        let mut worst: f64 = 0.0;
        for (m, c) in spectrum.modes().iter().zip(psi.coefficients()) {
            if m.index.norm() > outer {
                shell_count += 1;
                worst = worst.max(c.norm() * model.analytic_sup_bound(&m.index, alpha)?);
            }
        }
        tail = worst * shell_count as f64;
    }
    if tail > tail_tolerance {
        return Err(GapError::StripDivergence {
            tail_estimate: tail,
            tolerance: tail_tolerance,
        });
    }
    Ok(StripEvaluation {
        value: acc,
        tail_estimate: tail,
    })
}

/// A batch of real evaluation points with an optional derivative
/// multi-index applied to all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub orders: Option<Vec<u32>>,
}

/// Evaluate a batch of points in order.
pub fn evaluate_request(psi: &WaveFunction, request: &EvaluationRequest) -> Result<Vec<Complex64>> {
    request
        .points
        .iter()
        .map(|q| match &request.orders {
            Some(orders) => evaluate_derivative(psi, q, orders),
            None => evaluate(psi, q),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Fourier image of box wave functions
// ---------------------------------------------------------------------------

/// Fourier coefficients of the odd 2pi-periodic extension of a box wave
/// function: psi(q) = sum_k c_k e^{ik.q} with k ranging over the signed
/// images of the retained energy modes. Keys with any zero component are
/// absent, which encodes c_k = 0 there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierImage {
    coords: usize,
    map: BTreeMap<Vec<i64>, Complex64>,
}

impl FourierImage {
    pub fn coords(&self) -> usize {
        self.coords
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// c_k, zero for absent keys (including every k with a zero component).
    pub fn coefficient(&self, k: &[i64]) -> Complex64 {
        self.map
            .get(k)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.map.iter()
    }

    /// sum_k ||k||^{2 ell} |c_k|^2 over the stored image.
    pub fn weighted_power_sum(&self, ell: u32) -> f64 {
        self.map
            .iter()
            .map(|(k, c)| {
                let norm_sq: f64 = k.iter().map(|&j| (j * j) as f64).sum();
                norm_sq.powi(ell as i32) * c.norm_sqr()
            })
            .sum()
    }
}

fn fourier_factor(coords: usize) -> Complex64 {
    // c_k = (-i)^{Nd} (prod sign k_j) a_{|k|} / (2pi)^{Nd/2}, the expansion
    // of each sine into exponentials; with this normalization the plain
    // series sum_k c_k e^{ik.q} reproduces pointwise values.
    Complex64::new(0.0, -1.0).powu(coords as u32) / TWO_PI.powf(0.5 * coords as f64)
}

fn require_plain_box(psi: &WaveFunction) -> Result<()> {
    let model = psi.spectrum().model();
    if model.kind() != ModelKind::Box || model.symmetry() != Symmetry::None {
        return Err(GapError::UnsupportedModel(
            "Fourier image is defined for unsymmetrized box models".to_string(),
        ));
    }
    Ok(())
}

/// Map energy coefficients a_n (n in the positive lattice) to the Fourier
/// image over the signed lattice.
pub fn fourier_from_energy(psi: &WaveFunction) -> Result<FourierImage> {
    require_plain_box(psi)?;
    let coords = psi.spectrum().model().config_dim();
    let factor = fourier_factor(coords);
    let mut map = BTreeMap::new();
    for (m, a) in psi.spectrum().modes().iter().zip(psi.coefficients()) {
        for mask in 0u32..(1 << coords) {
            let mut k = Vec::with_capacity(coords);
            let mut sign = 1.0;
            for (j, &n) in m.index.components().iter().enumerate() {
                if mask & (1 << j) != 0 {
                    k.push(-n);
                    sign = -sign;
                } else {
                    k.push(n);
                }
            }
            map.insert(k, factor * sign * a);
        }
    }
    Ok(FourierImage { coords, map })
}

/// Invert the Fourier map back onto a spectrum's retained modes by reading
/// the all-positive representative of each mode.
pub fn energy_from_fourier(
    image: &FourierImage,
    spectrum: &Arc<ThermalSpectrum>,
) -> Result<WaveFunction> {
    let model = spectrum.model();
    if model.kind() != ModelKind::Box || model.symmetry() != Symmetry::None {
        return Err(GapError::UnsupportedModel(
            "Fourier image is defined for unsymmetrized box models".to_string(),
        ));
    }
    if image.coords != model.config_dim() {
        return Err(GapError::InvalidParameter(
            "Fourier image dimension does not match the spectrum".to_string(),
        ));
    }
    let factor = fourier_factor(image.coords);
    let coefficients = spectrum
        .modes()
        .iter()
        .map(|m| image.coefficient(m.index.components()) / factor)
        .collect();
    WaveFunction::new(
        Arc::clone(spectrum),
        coefficients,
        Provenance::Derived,
        None,
    )
}

// ---------------------------------------------------------------------------
// Symmetrization
// ---------------------------------------------------------------------------

/// Sort a mode's particle blocks into the canonical representative,
/// returning the permutation parity and whether any block repeats.
fn canonicalize_blocks(index: &ModeIndex, dim: usize) -> (ModeIndex, f64, bool) {
    let mut blocks: Vec<&[i64]> = index.components().chunks(dim).collect();
    // Insertion sort, counting transpositions for the parity.
    let mut swaps = 0usize;
    for i in 1..blocks.len() {
        let mut j = i;
        while j > 0 && blocks[j - 1] > blocks[j] {
            blocks.swap(j - 1, j);
            swaps += 1;
            j -= 1;
        }
    }
    let repeats = blocks.windows(2).any(|w| w[0] == w[1]);
    let mut flat = Vec::with_capacity(index.len());
    for b in &blocks {
        flat.extend_from_slice(b);
    }
    let sign = if swaps.is_multiple_of(2) { 1.0 } else { -1.0 };
    (ModeIndex(flat), sign, repeats)
}

/// Apply the (anti)symmetrization projector P in coefficient space:
/// (P psi)_n = (1/N!) sum_sigma (sign sigma) c_{sigma n}, computed as one
/// signed average per permutation orbit so the output is exactly
/// permutation-(anti)symmetric. P is a projection, not an isometry, so
/// the output is not renormalized.
pub fn symmetrize(psi: &WaveFunction, sector: Symmetry) -> Result<WaveFunction> {
    if sector == Symmetry::None {
        return Err(GapError::InvalidParameter(
            "symmetrize needs a symmetric or antisymmetric sector".to_string(),
        ));
    }
    let spectrum = psi.spectrum();
    let model = spectrum.model();
    if model.kind() != ModelKind::Box || model.symmetry() != Symmetry::None {
        return Err(GapError::UnsupportedModel(
            "symmetrization acts on unsymmetrized box wave functions".to_string(),
        ));
    }
    if model.n_particles() == 1 {
        return psi.with_coefficients(psi.coefficients().to_vec(), Provenance::Derived);
    }
    let dim = model.dim();
    let antisymmetric = sector == Symmetry::Antisymmetric;

    // Orbit accumulation pass: representative -> (signed sum, member count).
    let mut orbits: BTreeMap<ModeIndex, (Complex64, usize)> = BTreeMap::new();
    let mut canonical = Vec::with_capacity(spectrum.len());
    for (m, c) in spectrum.modes().iter().zip(psi.coefficients()) {
        let (rep, sign, repeats) = canonicalize_blocks(&m.index, dim);
        let s = if antisymmetric { sign } else { 1.0 };
        canonical.push((rep.clone(), s, repeats));
        let entry = orbits
            .entry(rep)
            .or_insert((Complex64::new(0.0, 0.0), 0));
        entry.0 += c * s;
        entry.1 += 1;
    }

    let coefficients = canonical
        .iter()
        .map(|(rep, sign, repeats)| {
            if antisymmetric && *repeats {
                return Complex64::new(0.0, 0.0);
            }
            let (sum, count) = orbits[rep];
            sum / count as f64 * *sign
        })
        .collect();
    psi.with_coefficients(coefficients, Provenance::Derived)
}

/// Inner products of an unsymmetrized box wave function with the
/// normalized sector eigenfunctions of a sector spectrum: c^S_mu =
/// <phi^S_mu | psi>, the coordinates of the projected function in the
/// sector basis. The unsymmetrized spectrum must retain every orbit of
/// every sector mode.
pub fn project_to_sector(
    psi: &WaveFunction,
    sector_spectrum: &Arc<ThermalSpectrum>,
) -> Result<WaveFunction> {
    let full = psi.spectrum().model();
    let sector_model = sector_spectrum.model();
    if full.kind() != ModelKind::Box || full.symmetry() != Symmetry::None {
        return Err(GapError::UnsupportedModel(
            "sector projection starts from an unsymmetrized box wave function".to_string(),
        ));
    }
    let sector = sector_model.symmetry();
    if sector_model.kind() != ModelKind::Box || sector == Symmetry::None {
        return Err(GapError::InvalidParameter(
            "target spectrum must carry a symmetry sector".to_string(),
        ));
    }
    if sector_model.n_particles() != full.n_particles() || sector_model.dim() != full.dim() {
        return Err(GapError::InvalidParameter(
            "sector and full models must share particle count and dimension".to_string(),
        ));
    }
    let n = full.n_particles();
    let dim = full.dim();
    let antisymmetric = sector == Symmetry::Antisymmetric;
    let perms = permutations_with_sign(n);

    let mut coefficients = Vec::with_capacity(sector_spectrum.len());
    for mode in sector_spectrum.modes() {
        let blocks: Vec<&[i64]> = mode.index.components().chunks(dim).collect();
        // Distinct orbit members with the parity of the permutation that
        // produced them.
        let mut members: BTreeMap<ModeIndex, f64> = BTreeMap::new();
        for (perm, sign) in &perms {
            let mut flat = Vec::with_capacity(n * dim);
            for i in 0..n {
                flat.extend_from_slice(blocks[perm[i]]);
            }
            members.insert(ModeIndex(flat), *sign);
        }
        let orbit_size = members.len();
        let mut sum = Complex64::new(0.0, 0.0);
        for (member, sign) in &members {
            let pos = psi.spectrum().position(member).ok_or_else(|| {
                GapError::InvalidParameter(format!(
                    "full spectrum does not retain orbit member {member}"
                ))
            })?;
            let s = if antisymmetric { *sign } else { 1.0 };
            sum += psi.coefficients()[pos] * s;
        }
        // <phi^S|psi> = sum over distinct orderings / sqrt(orbit size);
        // for antisymmetric modes the orbit is the full N! set.
        coefficients.push(sum / (orbit_size as f64).sqrt());
    }
    WaveFunction::new(
        Arc::clone(sector_spectrum),
        coefficients,
        Provenance::Derived,
        psi.seed(),
    )
}
