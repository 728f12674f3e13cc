//! Exactly diagonalizable model Hamiltonians and their thermal spectra.
//!
//! Three families are supported: a free particle on the circle
//! (H = -(hbar^2/2m) d^2/dq^2 with eigenfunctions (2pi)^{-1/2} e^{inq},
//! n ranging over all integers), N particles in a d-dimensional Dirichlet
//! box [0,pi]^{Nd} (products of sines indexed by positive integer tuples),
//! and finite custom spectra given directly by their weights.
//!
//! Thermalizing a model at inverse temperature beta produces truncated
//! Boltzmann weights p_n = e^{-beta E_n}/Z together with an analytic bound
//! on the discarded tail, so every downstream sum is a controlled
//! approximation of its infinite counterpart. Weights are renormalized
//! after truncation; the spectrum is therefore always a true probability
//! mixture over the retained modes.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};

/// Hard cap on retained modes; enumeration beyond this aborts with a
/// resource-limit error instead of exhausting memory.
pub const MODE_LIMIT: usize = 2_000_000;

/// Largest particle count for which permutation sectors are enumerated.
/// Sector evaluation cost grows as N!.
pub const SECTOR_PARTICLE_LIMIT: usize = 6;

const TWO_PI: f64 = std::f64::consts::TAU;

// ---------------------------------------------------------------------------
// Mode labels
// ---------------------------------------------------------------------------

/// Integer mode label. Circle modes are length-1 tuples over the signed
/// integers, box modes are length-Nd tuples with every entry >= 1, custom
/// modes are length-1 labels. In a permutation sector the label is the
/// canonical representative whose particle blocks are sorted
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeIndex(pub Vec<i64>);

impl ModeIndex {
    pub fn scalar(n: i64) -> Self {
        Self(vec![n])
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Squared Euclidean norm of the tuple.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&k| (k * k) as f64).sum()
    }

    /// Euclidean norm of the tuple.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

// ---------------------------------------------------------------------------
// Model description
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Circle,
    #[serde(rename = "box")]
    Box,
    #[serde(rename = "custom-finite")]
    Custom,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Circle => write!(f, "circle"),
            ModelKind::Box => write!(f, "box"),
            ModelKind::Custom => write!(f, "custom-finite"),
        }
    }
}

/// Permutation sector for identical particles in the box model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    None,
    Symmetric,
    Antisymmetric,
}

/// Spectral truncation policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffPolicy {
    /// Keep modes with Euclidean index norm at most this radius.
    MaxNorm(u32),
    /// Choose the smallest radius whose analytic Gaussian tail bound,
    /// relative to the truncated partition sum, is at most this mass.
    TailMass(f64),
}

/// Eigenfunction table for custom finite spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomEigenfunctions {
    /// Weights only; pointwise evaluation is unsupported.
    None,
    /// Label k evaluates as the circle harmonic (2pi)^{-1/2} e^{ikq}.
    CircleHarmonics,
}

#[derive(Debug, Clone)]
struct CustomEntry {
    label: i64,
    energy: f64,
}

#[derive(Debug, Clone)]
enum Detail {
    Circle,
    Box,
    Custom {
        entries: Vec<CustomEntry>,
        eigen: CustomEigenfunctions,
    },
}

/// An exactly diagonalized Hamiltonian: mode enumeration, energies, and
/// eigenfunction evaluation. Immutable after construction; shared freely
/// across threads.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    kind: ModelKind,
    n_particles: usize,
    dim: usize,
    mass: f64,
    hbar: f64,
    symmetry: Symmetry,
    cutoff: CutoffPolicy,
    detail: Detail,
    /// Particle permutations with parity sign; identity only outside sectors.
    permutations: Vec<(Vec<usize>, f64)>,
}

fn require(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(GapError::InvalidParameter(msg.to_string()))
    }
}

fn check_physical(mass: f64, hbar: f64) -> Result<()> {
    require(mass.is_finite() && mass > 0.0, "mass must be positive")?;
    require(hbar.is_finite() && hbar > 0.0, "hbar must be positive")
}

/// All permutations of 0..n with parity, in a deterministic order.
pub(crate) fn permutations_with_sign(n: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    permute_rec(&mut items, 0, 1.0, &mut out);
    out
}

fn permute_rec(items: &mut Vec<usize>, k: usize, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
    let n = items.len();
    if k == n {
        out.push((items.clone(), sign));
        return;
    }
    for i in k..n {
        // Placing items[i] at slot k is one transposition unless i == k.
        let s = if i == k { sign } else { -sign };
        items.swap(k, i);
        permute_rec(items, k + 1, s, out);
        items.swap(k, i);
    }
}

/// d^k/dx^k sin(x): the cycle sin, cos, -sin, -cos.
fn sin_derivative(k: u32, x: f64) -> f64 {
    match k % 4 {
        0 => x.sin(),
        1 => x.cos(),
        2 => -x.sin(),
        _ => -x.cos(),
    }
}

/// d^k/dq^k sin(n q) = n^k sin^{(k)}(n q).
fn box_axis(n: i64, q: f64, order: u32) -> f64 {
    let nf = n as f64;
    nf.powi(order as i32) * sin_derivative(order, nf * q)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl SpectralModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn cutoff(&self) -> CutoffPolicy {
        self.cutoff
    }

    /// Number of configuration-space coordinates (1 for circle and custom
    /// harmonics, N*d for the box).
    pub fn config_dim(&self) -> usize {
        match self.detail {
            Detail::Circle => 1,
            Detail::Box => self.n_particles * self.dim,
            Detail::Custom { .. } => 1,
        }
    }

    /// Volume of the configuration space, when pointwise evaluation exists.
    pub fn volume(&self) -> Option<f64> {
        match &self.detail {
            Detail::Circle => Some(TWO_PI),
            Detail::Box => Some(std::f64::consts::PI.powi(self.config_dim() as i32)),
            Detail::Custom { eigen, .. } => match eigen {
                CustomEigenfunctions::CircleHarmonics => Some(TWO_PI),
                CustomEigenfunctions::None => None,
            },
        }
    }

    /// Whether eigenfunctions can be evaluated pointwise.
    pub fn supports_pointwise(&self) -> bool {
        self.volume().is_some()
    }

    fn energy_coefficient(&self) -> f64 {
        self.hbar * self.hbar / (2.0 * self.mass)
    }

    /// E_n for a mode label.
    pub fn energy(&self, index: &ModeIndex) -> Result<f64> {
        self.check_index(index)?;
        match &self.detail {
            Detail::Circle | Detail::Box => Ok(self.energy_coefficient() * index.norm_sq()),
            Detail::Custom { entries, .. } => entries
                .iter()
                .find(|e| e.label == index.0[0])
                .map(|e| e.energy)
                .ok_or_else(|| {
                    GapError::InvalidParameter(format!("unknown custom mode label {}", index))
                }),
        }
    }

    fn check_index(&self, index: &ModeIndex) -> Result<()> {
        require(
            index.len() == self.config_dim(),
            "mode index length does not match the model dimension",
        )?;
        if matches!(self.detail, Detail::Box) {
            require(
                index.0.iter().all(|&k| k >= 1),
                "box mode indices must be >= 1",
            )?;
        }
        Ok(())
    }

    /// Reject configuration points outside the model's domain. Circle
    /// coordinates are periodic, so any finite value is accepted.
    pub fn validate_point(&self, q: &[f64]) -> Result<()> {
        require(
            q.len() == self.config_dim(),
            "configuration point has the wrong number of coordinates",
        )?;
        require(
            q.iter().all(|x| x.is_finite()),
            "configuration point must be finite",
        )?;
        if matches!(self.detail, Detail::Box) {
            require(
                q.iter().all(|&x| (0.0..=std::f64::consts::PI).contains(&x)),
                "box coordinates must lie in [0, pi]",
            )?;
        }
        Ok(())
    }

    fn box_norm_const(&self) -> f64 {
        (2.0 / std::f64::consts::PI).powf(0.5 * self.config_dim() as f64)
    }

    /// 1/sqrt(N! * prod m_j!) for a canonical sector representative with
    /// block multiplicities m_j.
    fn sector_norm_factor(&self, index: &ModeIndex) -> f64 {
        let d = self.dim;
        let blocks: Vec<&[i64]> = index.0.chunks(d).collect();
        let mut repeat_product = 1.0;
        let mut run = 1usize;
        for w in blocks.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                repeat_product *= factorial(run);
                run = 1;
            }
        }
        repeat_product *= factorial(run);
        1.0 / (factorial(self.n_particles) * repeat_product).sqrt()
    }

    /// Eigenfunction value at a real configuration point.
    pub fn eval(&self, index: &ModeIndex, q: &[f64]) -> Result<Complex64> {
        self.check_index(index)?;
        self.validate_point(q)?;
        match &self.detail {
            Detail::Circle => Ok(circle_harmonic(index.0[0], q[0], 0)),
            Detail::Box => {
                if self.symmetry == Symmetry::None {
                    let mut prod = self.box_norm_const();
                    for (j, &n) in index.0.iter().enumerate() {
                        prod *= (n as f64 * q[j]).sin();
                    }
                    Ok(Complex64::new(prod, 0.0))
                } else {
                    Ok(self.sector_eval(index, q, None))
                }
            }
            Detail::Custom { eigen, .. } => match eigen {
                CustomEigenfunctions::CircleHarmonics => Ok(circle_harmonic(index.0[0], q[0], 0)),
                CustomEigenfunctions::None => Err(GapError::UnsupportedModel(
                    "custom spectrum has no eigenfunction table".to_string(),
                )),
            },
        }
    }

    /// Term-wise analytic derivative. `orders` holds one nonnegative
    /// derivative order per configuration coordinate.
    pub fn eval_derivative(&self, index: &ModeIndex, q: &[f64], orders: &[u32]) -> Result<Complex64> {
        self.check_index(index)?;
        self.validate_point(q)?;
        require(
            orders.len() == self.config_dim(),
            "derivative multi-index length does not match the model dimension",
        )?;
        match &self.detail {
            Detail::Circle => Ok(circle_harmonic(index.0[0], q[0], orders[0])),
            Detail::Box => {
                if self.symmetry == Symmetry::None {
                    let mut prod = self.box_norm_const();
                    for (j, &n) in index.0.iter().enumerate() {
                        prod *= box_axis(n, q[j], orders[j]);
                    }
                    Ok(Complex64::new(prod, 0.0))
                } else {
                    Ok(self.sector_eval(index, q, Some(orders)))
                }
            }
            Detail::Custom { eigen, .. } => match eigen {
                CustomEigenfunctions::CircleHarmonics => {
                    Ok(circle_harmonic(index.0[0], q[0], orders[0]))
                }
                CustomEigenfunctions::None => Err(GapError::UnsupportedModel(
                    "custom spectrum has no eigenfunction table".to_string(),
                )),
            },
        }
    }

    /// Eigenfunction value at a complex configuration point. Circle
    /// harmonics and sine products are entire, so this is the analytic
    /// continuation; the box continuation is the odd 2pi-periodic
    /// extension of the sine series.
    pub fn eval_complex(&self, index: &ModeIndex, z: &[Complex64]) -> Result<Complex64> {
        self.check_index(index)?;
        require(
            z.len() == self.config_dim(),
            "configuration point has the wrong number of coordinates",
        )?;
        match &self.detail {
            Detail::Circle => Ok(circle_harmonic_c(index.0[0], z[0])),
            Detail::Box => {
                if self.symmetry == Symmetry::None {
                    let mut prod = Complex64::new(self.box_norm_const(), 0.0);
                    for (j, &n) in index.0.iter().enumerate() {
                        prod *= (z[j] * n as f64).sin();
                    }
                    Ok(prod)
                } else {
                    Ok(self.sector_eval_c(index, z))
                }
            }
            Detail::Custom { eigen, .. } => match eigen {
                CustomEigenfunctions::CircleHarmonics => Ok(circle_harmonic_c(index.0[0], z[0])),
                CustomEigenfunctions::None => Err(GapError::UnsupportedModel(
                    "custom spectrum has no eigenfunction table".to_string(),
                )),
            },
        }
    }

    /// Permutation-sector evaluation: a signed sum of block products over
    /// the stored particle permutations.
    fn sector_eval(&self, index: &ModeIndex, q: &[f64], orders: Option<&[u32]>) -> Complex64 {
        let n = self.n_particles;
        let d = self.dim;
        let blocks: Vec<&[i64]> = index.0.chunks(d).collect();
        // u[i*n + j] = (derivative of) block j evaluated on particle i's coordinates.
        let mut u = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut prod = 1.0;
                for a in 0..d {
                    let ord = orders.map_or(0, |o| o[i * d + a]);
                    prod *= box_axis(blocks[j][a], q[i * d + a], ord);
                }
                u[i * n + j] = prod;
            }
        }
        let antisymmetric = self.symmetry == Symmetry::Antisymmetric;
        let mut sum = 0.0;
        for (perm, sign) in &self.permutations {
            let mut prod = if antisymmetric { *sign } else { 1.0 };
            for i in 0..n {
                prod *= u[i * n + perm[i]];
            }
            sum += prod;
        }
        Complex64::new(sum * self.box_norm_const() * self.sector_norm_factor(index), 0.0)
    }

    fn sector_eval_c(&self, index: &ModeIndex, z: &[Complex64]) -> Complex64 {
        let n = self.n_particles;
        let d = self.dim;
        let blocks: Vec<&[i64]> = index.0.chunks(d).collect();
        let mut u = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut prod = Complex64::new(1.0, 0.0);
                for a in 0..d {
                    prod *= (z[i * d + a] * blocks[j][a] as f64).sin();
                }
                u[i * n + j] = prod;
            }
        }
        let antisymmetric = self.symmetry == Symmetry::Antisymmetric;
        let mut sum = Complex64::new(0.0, 0.0);
        for (perm, sign) in &self.permutations {
            let mut prod = Complex64::new(if antisymmetric { *sign } else { 1.0 }, 0.0);
            for i in 0..n {
                prod *= u[i * n + perm[i]];
            }
            sum += prod;
        }
        sum * self.box_norm_const() * self.sector_norm_factor(index)
    }

    /// Sup-norm bound for the order-ell derivative tensor of an
    /// eigenfunction: |n|^ell/sqrt(2pi) on the circle, Frobenius bound
    /// (2/pi)^{Nd/2} ||n||^ell for box sine products, with the triangle
    /// inequality over permutations in a sector.
    pub fn derivative_sup_bound(&self, index: &ModeIndex, ell: u32) -> Result<f64> {
        self.check_index(index)?;
        match &self.detail {
            Detail::Circle => Ok(index.norm().powi(ell as i32) / TWO_PI.sqrt()),
            Detail::Box => {
                let base = self.box_norm_const() * index.norm().powi(ell as i32);
                Ok(base * self.sector_amplification(index))
            }
            Detail::Custom { eigen, .. } => match eigen {
                CustomEigenfunctions::CircleHarmonics => {
                    Ok(index.norm().powi(ell as i32) / TWO_PI.sqrt())
                }
                CustomEigenfunctions::None => Err(GapError::UnsupportedModel(
                    "custom spectrum has no derivative bounds".to_string(),
                )),
            },
        }
    }

    /// Sup-norm bound on the strip/annulus of half-width alpha used by the
    /// analytic smoothness condition: e^{alpha |n|}/sqrt(2pi) on the circle,
    /// product of cosh factors for the box extension.
    pub fn analytic_sup_bound(&self, index: &ModeIndex, alpha: f64) -> Result<f64> {
        self.check_index(index)?;
        require(alpha.is_finite() && alpha > 0.0, "alpha must be positive")?;
        match &self.detail {
            Detail::Circle => Ok((alpha * index.norm()).exp() / TWO_PI.sqrt()),
            Detail::Box => {
                let mut prod = self.box_norm_const();
                for &k in &index.0 {
                    prod *= (alpha * k as f64).cosh();
                }
                Ok(prod * self.sector_amplification(index))
            }
            Detail::Custom { eigen, .. } => match eigen {
                CustomEigenfunctions::CircleHarmonics => {
                    Ok((alpha * index.norm()).exp() / TWO_PI.sqrt())
                }
                CustomEigenfunctions::None => Err(GapError::UnsupportedModel(
                    "custom spectrum has no eigenfunction table".to_string(),
                )),
            },
        }
    }

    /// N! * norm_factor = sqrt(N!/prod m_j!), the triangle-inequality
    /// growth of sup bounds under (anti)symmetrization.
    fn sector_amplification(&self, index: &ModeIndex) -> f64 {
        if self.symmetry == Symmetry::None {
            1.0
        } else {
            factorial(self.n_particles) * self.sector_norm_factor(index)
        }
    }

    /// All retained mode labels for truncation radius `nstar`, in no
    /// particular order. Custom spectra ignore the radius.
    fn enumerate_modes(&self, nstar: u32) -> Result<Vec<ModeIndex>> {
        match &self.detail {
            Detail::Circle => {
                let r = nstar as i64;
                if 2 * r + 1 > MODE_LIMIT as i64 {
                    return Err(GapError::ResourceLimit(format!(
                        "mode enumeration exceeds {MODE_LIMIT} modes"
                    )));
                }
                Ok((-r..=r).map(ModeIndex::scalar).collect())
            }
            Detail::Box => match self.symmetry {
                Symmetry::None => lattice_ball(self.config_dim(), nstar),
                Symmetry::Symmetric => self.sector_modes(nstar, false),
                Symmetry::Antisymmetric => self.sector_modes(nstar, true),
            },
            Detail::Custom { entries, .. } => Ok(entries
                .iter()
                .map(|e| ModeIndex::scalar(e.label))
                .collect()),
        }
    }

    /// Canonical sector representatives: N blocks from the d-dimensional
    /// ball, nondecreasing (symmetric) or strictly increasing
    /// (antisymmetric) in block order, total squared norm <= nstar^2.
    fn sector_modes(&self, nstar: u32, strict: bool) -> Result<Vec<ModeIndex>> {
        let blocks = lattice_ball(self.dim, nstar)?;
        // Sort blocks by (norm, lex) so the budget prune below is valid.
        let mut order: Vec<usize> = (0..blocks.len()).collect();
        order.sort_by(|&a, &b| {
            blocks[a]
                .norm_sq()
                .total_cmp(&blocks[b].norm_sq())
                .then_with(|| blocks[a].cmp(&blocks[b]))
        });
        let sorted: Vec<&ModeIndex> = order.iter().map(|&i| &blocks[i]).collect();
        let budget = (nstar as f64) * (nstar as f64);
        let mut out = Vec::new();
        let mut chosen: Vec<usize> = Vec::with_capacity(self.n_particles);
        self.pick_blocks(&sorted, strict, budget, 0, 0.0, &mut chosen, &mut out)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn pick_blocks(
        &self,
        blocks: &[&ModeIndex],
        strict: bool,
        budget: f64,
        start: usize,
        used: f64,
        chosen: &mut Vec<usize>,
        out: &mut Vec<ModeIndex>,
    ) -> Result<()> {
        if chosen.len() == self.n_particles {
            let mut picked: Vec<&[i64]> = chosen.iter().map(|&i| blocks[i].components()).collect();
            picked.sort();
            let mut flat = Vec::with_capacity(self.config_dim());
            for b in picked {
                flat.extend_from_slice(b);
            }
            out.push(ModeIndex(flat));
            if out.len() > MODE_LIMIT {
                return Err(GapError::ResourceLimit(format!(
                    "sector enumeration exceeds {MODE_LIMIT} modes"
                )));
            }
            return Ok(());
        }
        let remaining = self.n_particles - chosen.len();
        for i in start..blocks.len() {
            let cost = blocks[i].norm_sq();
            // Blocks are norm-sorted, so every completion from here costs
            // at least `remaining * cost`.
            if used + cost * remaining as f64 > budget {
                break;
            }
            chosen.push(i);
            let next = if strict { i + 1 } else { i };
            self.pick_blocks(blocks, strict, budget, next, used + cost, chosen, out)?;
            chosen.pop();
        }
        Ok(())
    }

    /// Analytic bound on the Boltzmann mass of all discarded modes
    /// (unnormalized, same scale as the truncated partition sum).
    fn tail_bound(&self, nstar: u32, beta: f64) -> f64 {
        let c = beta * self.energy_coefficient();
        match &self.detail {
            // Sum_{|n|>N*} e^{-c n^2} <= e^{-c N*^2} r/(1-r) per sign,
            // with ratio r = e^{-c(2N*+1)} dominating successive terms.
            Detail::Circle => {
                let r = (-c * (2.0 * nstar as f64 + 1.0)).exp();
                2.0 * (-c * (nstar as f64).powi(2)).exp() * r / (1.0 - r)
            }
            // e^{-c ||n||^2} <= e^{-c N*^2/2} e^{-c ||n||^2 / 2} summed over
            // the whole positive lattice factorizes into 1-D half sums.
            // Sector spectra are subsets of the full lattice, so the same
            // bound applies.
            Detail::Box => {
                let mut s_half = 0.0;
                let mut nu = 1.0f64;
                loop {
                    let term = (-0.5 * c * nu * nu).exp();
                    s_half += term;
                    if term < 1e-300 || term < s_half * 1e-18 {
                        break;
                    }
                    nu += 1.0;
                }
                (-0.5 * c * (nstar as f64).powi(2)).exp() * s_half.powi(self.config_dim() as i32)
            }
            Detail::Custom { .. } => 0.0,
        }
    }
}

/// (2pi)^{-1/2} (in)^order e^{inq}.
fn circle_harmonic(n: i64, q: f64, order: u32) -> Complex64 {
    let nf = n as f64;
    let base = Complex64::new(0.0, nf * q).exp() / TWO_PI.sqrt();
    base * Complex64::new(0.0, nf).powu(order)
}

fn circle_harmonic_c(n: i64, z: Complex64) -> Complex64 {
    (Complex64::new(0.0, 1.0) * z * n as f64).exp() / TWO_PI.sqrt()
}

/// All tuples in {1,2,...}^dim with Euclidean norm <= nstar, lexicographic.
fn lattice_ball(dim: usize, nstar: u32) -> Result<Vec<ModeIndex>> {
    let budget = (nstar as f64) * (nstar as f64);
    if (nstar as f64) < (dim as f64).sqrt() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut partial = Vec::with_capacity(dim);
    lattice_walk(dim, budget, &mut partial, &mut out)?;
    Ok(out)
}

fn lattice_walk(
    dim: usize,
    budget: f64,
    partial: &mut Vec<i64>,
    out: &mut Vec<ModeIndex>,
) -> Result<()> {
    if partial.len() == dim {
        out.push(ModeIndex(partial.clone()));
        if out.len() > MODE_LIMIT {
            return Err(GapError::ResourceLimit(format!(
                "mode enumeration exceeds {MODE_LIMIT} modes"
            )));
        }
        return Ok(());
    }
    let used: f64 = partial.iter().map(|&k| (k * k) as f64).sum();
    let slots_left = (dim - partial.len() - 1) as f64;
    let mut k = 1i64;
    // Remaining coordinates each cost at least 1.
    while used + (k * k) as f64 + slots_left <= budget {
        partial.push(k);
        lattice_walk(dim, budget, partial, out)?;
        partial.pop();
        k += 1;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Free particle on the circle: H = -(hbar^2/2m) d^2/dq^2 on [0, 2pi),
/// eigenfunctions (2pi)^{-1/2} e^{inq}, energies (hbar^2/2m) n^2. Modes n
/// and -n are energy-degenerate but kept distinct: the thermal coefficients
/// are independent per basis vector, not per energy level.
pub fn build_circle_model(mass: f64, hbar: f64, cutoff: CutoffPolicy) -> Result<Arc<SpectralModel>> {
    check_physical(mass, hbar)?;
    Ok(Arc::new(SpectralModel {
        kind: ModelKind::Circle,
        n_particles: 1,
        dim: 1,
        mass,
        hbar,
        symmetry: Symmetry::None,
        cutoff,
        detail: Detail::Circle,
        permutations: vec![(vec![0], 1.0)],
    }))
}

/// N particles in the d-dimensional Dirichlet box [0,pi]^{Nd}:
/// eigenfunctions (2/pi)^{Nd/2} prod sin(n_{i,a} q_{i,a}) with all
/// n_{i,a} >= 1, energies (hbar^2/2m) ||n||^2. A symmetry sector restricts
/// to the normalized (anti)symmetrized combinations; antisymmetric modes
/// with repeated particle blocks are excluded by construction.
pub fn build_box_model(
    n_particles: usize,
    dim: usize,
    mass: f64,
    hbar: f64,
    cutoff: CutoffPolicy,
    symmetry: Symmetry,
) -> Result<Arc<SpectralModel>> {
    check_physical(mass, hbar)?;
    require(n_particles >= 1, "particle count must be >= 1")?;
    require(dim >= 1, "spatial dimension must be >= 1")?;
    if symmetry != Symmetry::None && n_particles > SECTOR_PARTICLE_LIMIT {
        return Err(GapError::ResourceLimit(format!(
            "permutation sectors support at most {SECTOR_PARTICLE_LIMIT} particles"
        )));
    }
    let effective = if n_particles == 1 { Symmetry::None } else { symmetry };
    let permutations = if effective == Symmetry::None {
        vec![((0..n_particles).collect(), 1.0)]
    } else {
        permutations_with_sign(n_particles)
    };
    Ok(Arc::new(SpectralModel {
        kind: ModelKind::Box,
        n_particles,
        dim,
        mass,
        hbar,
        symmetry: effective,
        cutoff,
        detail: Detail::Box,
        permutations,
    }))
}

/// Finite spectrum given directly by its weights. Labels with zero weight
/// are dropped; the rest must sum to 1 within 1e-12 and are renormalized.
/// Energies follow the convention E_n = -ln p_n (beta = 1, Z = 1), which
/// makes the weight/energy consistency p_n = e^{-beta E_n}/Z exact and
/// keeps spectral-function identities available. With the harmonic table,
/// label k evaluates as the circle harmonic of frequency k, so a single
/// label-0 entry is the constant function on the circle.
pub fn build_custom_model(
    weights: &[(i64, f64)],
    eigen: CustomEigenfunctions,
) -> Result<(Arc<SpectralModel>, ThermalSpectrum)> {
    require(!weights.is_empty(), "custom spectrum needs at least one weight")?;
    let mut seen = std::collections::HashSet::new();
    for &(label, w) in weights {
        require(w.is_finite() && w >= 0.0, "weights must be nonnegative")?;
        require(seen.insert(label), "duplicate custom mode label")?;
    }
    let total: f64 = weights.iter().map(|&(_, w)| w).sum();
    require(
        (total - 1.0).abs() <= 1e-12,
        "custom weights must sum to 1 within 1e-12",
    )?;
    let mut entries: Vec<CustomEntry> = weights
        .iter()
        .filter(|&&(_, w)| w > 0.0)
        .map(|&(label, w)| CustomEntry {
            label,
            energy: -(w / total).ln(),
        })
        .collect();
    require(!entries.is_empty(), "custom spectrum has no positive weight")?;
    entries.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.label.cmp(&b.label)));
    let model = Arc::new(SpectralModel {
        kind: ModelKind::Custom,
        n_particles: 1,
        dim: 1,
        mass: 1.0,
        hbar: 1.0,
        symmetry: Symmetry::None,
        cutoff: CutoffPolicy::MaxNorm(0),
        detail: Detail::Custom {
            entries,
            eigen,
        },
        permutations: vec![(vec![0], 1.0)],
    });
    let spectrum = thermalize_with(&model, 1.0, CutoffPolicy::MaxNorm(0))?;
    Ok((model, spectrum))
}

// ---------------------------------------------------------------------------
// Thermal spectra
// ---------------------------------------------------------------------------

/// One retained mode of a thermal spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalMode {
    pub index: ModeIndex,
    pub energy: f64,
    pub weight: f64,
}

/// Truncated Boltzmann weights p_n = e^{-beta E_n}/Z over the retained
/// modes of a model, sorted by nondecreasing energy (ties broken by index).
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct ThermalSpectrum {
    model: Arc<SpectralModel>,
    beta: f64,
    modes: Vec<ThermalMode>,
    z_trunc: f64,
    tail_mass_bound: f64,
    energy_offset: f64,
    cutoff_radius: u32,
    index_of: HashMap<ModeIndex, usize>,
}

impl ThermalSpectrum {
    pub fn model(&self) -> &Arc<SpectralModel> {
        &self.model
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn modes(&self) -> &[ThermalMode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Truncated partition sum before renormalization.
    pub fn z_trunc(&self) -> f64 {
        self.z_trunc
    }

    /// Analytic bound on discarded Boltzmann mass, relative to z_trunc.
    pub fn tail_mass_bound(&self) -> f64 {
        self.tail_mass_bound
    }

    /// The constant E0 with -(1/beta) ln p_n + E0 = E_n for every retained
    /// mode, namely -(ln Z_trunc)/beta. Spectral-function sums use it to
    /// reconstruct energies from weights.
    pub fn energy_offset(&self) -> f64 {
        self.energy_offset
    }

    /// Realized truncation radius N* (0 for custom spectra).
    pub fn cutoff_radius(&self) -> u32 {
        self.cutoff_radius
    }

    /// Position of a mode label in the canonical order.
    pub fn position(&self, index: &ModeIndex) -> Option<usize> {
        self.index_of.get(index).copied()
    }

    /// Two-point kernel rho(q, q') = sum_n p_n phi_n(q) phi_n(q')*.
    pub fn kernel(&self, q: &[f64], q_prime: &[f64]) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in &self.modes {
            let a = self.model.eval(&m.index, q)?;
            let b = self.model.eval(&m.index, q_prime)?;
            acc += b.conj() * a * m.weight;
        }
        Ok(acc)
    }

    /// sum_n p_n |phi_n'(q)|^2, the mixed second derivative of the kernel
    /// on the diagonal. One-dimensional models only.
    pub fn kernel_mixed_derivative(&self, q: &[f64]) -> Result<f64> {
        if self.model.config_dim() != 1 {
            return Err(GapError::UnsupportedModel(
                "kernel mixed derivative is defined for one-dimensional models".to_string(),
            ));
        }
        let mut acc = 0.0;
        for m in &self.modes {
            let d = self.model.eval_derivative(&m.index, q, &[1])?;
            acc += m.weight * d.norm_sqr();
        }
        Ok(acc)
    }

    /// Kernel value bundled with its arguments.
    pub fn kernel_at(&self, q: &[f64], q_prime: &[f64]) -> Result<KernelValue> {
        Ok(KernelValue {
            q: q.to_vec(),
            q_prime: q_prime.to_vec(),
            value: self.kernel(q, q_prime)?,
        })
    }
}

/// A kernel evaluation rho(q, q') with its arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub q: Vec<f64>,
    pub q_prime: Vec<f64>,
    pub value: Complex64,
}

/// Thermalize with the model's stored cutoff policy.
pub fn thermalize(model: &Arc<SpectralModel>, beta: f64) -> Result<ThermalSpectrum> {
    thermalize_with(model, beta, model.cutoff())
}

/// Thermalize with an explicit cutoff policy.
pub fn thermalize_with(
    model: &Arc<SpectralModel>,
    beta: f64,
    policy: CutoffPolicy,
) -> Result<ThermalSpectrum> {
    require(beta.is_finite() && beta > 0.0, "beta must be positive")?;
    match policy {
        CutoffPolicy::MaxNorm(radius) => assemble(model, beta, radius)?.ok_or_else(|| {
            GapError::InvalidParameter("cutoff retains no modes".to_string())
        }),
        CutoffPolicy::TailMass(eps) => {
            require(eps.is_finite() && eps > 0.0, "tail mass must be positive")?;
            let mut radius = 1u32;
            loop {
                if let Some(spectrum) = assemble(model, beta, radius)? {
                    if spectrum.tail_mass_bound <= eps {
                        return Ok(spectrum);
                    }
                }
                radius += 1;
                if radius > 100_000 {
                    return Err(GapError::ResourceLimit(
                        "tail-mass target not reached within radius 100000".to_string(),
                    ));
                }
            }
        }
    }
}

/// Enumerate, weigh, sort, and renormalize. Returns None when no modes
/// survive the cutoff (sector thresholds can exceed small radii).
fn assemble(model: &Arc<SpectralModel>, beta: f64, radius: u32) -> Result<Option<ThermalSpectrum>> {
    let indices = model.enumerate_modes(radius)?;
    if indices.is_empty() {
        return Ok(None);
    }
    let mut modes = Vec::with_capacity(indices.len());
    for index in indices {
        let energy = model.energy(&index)?;
        modes.push(ThermalMode {
            index,
            energy,
            weight: (-beta * energy).exp(),
        });
    }
    modes.sort_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.index.cmp(&b.index)));
    let z_trunc: f64 = modes.iter().map(|m| m.weight).sum();
    if z_trunc <= 0.0 || !z_trunc.is_finite() {
        return Err(GapError::InvalidParameter(
            "partition sum vanished under the requested cutoff".to_string(),
        ));
    }
    for m in &mut modes {
        m.weight /= z_trunc;
    }
    let tail = model.tail_bound(radius, beta) / z_trunc;
    let index_of = modes
        .iter()
        .enumerate()
        .map(|(i, m)| (m.index.clone(), i))
        .collect();
    Ok(Some(ThermalSpectrum {
        model: Arc::clone(model),
        beta,
        modes,
        z_trunc,
        tail_mass_bound: tail,
        energy_offset: -z_trunc.ln() / beta,
        cutoff_radius: radius,
        index_of,
    }))
}
