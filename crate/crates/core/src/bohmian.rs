//! Bohmian velocity fields and trajectory integration.
//!
//! The guidance law v_{i,a} = (hbar/m_i) Im(psi* d_{i,a} psi)/|psi|^2 is
//! defined away from the nodes of psi. Node proximity is detected against
//! a threshold proportional to the spatial mean of |psi|^2; the integrator
//! halves its step when a stage lands near a node and reports an abort
//! status when the step floor is reached, because the dynamics at a node
//! crossing is genuinely undefined rather than merely stiff.
//!
//! Free time evolution of the coefficients (c_n -> e^{-i E_n t/hbar} c_n)
//! is plumbing added so trajectories can be integrated at all; the sampled
//! ensembles themselves are stationary in time.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::sampler::{Provenance, WaveFunction};

const TWO_PI: f64 = std::f64::consts::TAU;

/// Step control for trajectory integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationTolerances {
    /// Per-step absolute error target on the configuration coordinates.
    pub per_step: f64,
    /// Hard floor for the step size; reaching it aborts the trajectory.
    pub min_step: f64,
    /// Node threshold as a fraction of the spatial mean of |psi|^2.
    pub node_threshold_factor: f64,
}

impl Default for IntegrationTolerances {
    fn default() -> Self {
        Self {
            per_step: 1e-8,
            min_step: 1e-12,
            node_threshold_factor: 1e-10,
        }
    }
}

/// A velocity evaluation bundled with its evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub psi_sq: f64,
}

/// Shared machinery: psi and its gradient at (t, q) under free evolution,
/// with node detection. The node threshold is fixed from the t = 0 norm;
/// the diagonal evolution preserves it.
struct Integrand<'a> {
    psi: &'a WaveFunction,
    /// hbar/m for each configuration coordinate.
    hbar_over_mass: Vec<f64>,
    inv_hbar: f64,
    threshold: f64,
    /// Unit derivative multi-indices, one per coordinate.
    unit_orders: Vec<Vec<u32>>,
}

impl<'a> Integrand<'a> {
    fn new(
        psi: &'a WaveFunction,
        masses: Option<&[f64]>,
        node_threshold_factor: f64,
    ) -> Result<Self> {
        let spectrum = psi.spectrum();
        let model = spectrum.model();
        let volume = model.volume().ok_or_else(|| {
            GapError::UnsupportedModel(
                "velocity fields need pointwise eigenfunction evaluation".to_string(),
            )
        })?;
        if !(node_threshold_factor.is_finite() && node_threshold_factor > 0.0) {
            return Err(GapError::InvalidParameter(
                "node threshold factor must be positive".to_string(),
            ));
        }
        let dim = model.config_dim();
        let per_particle = model.dim();
        let n_particles = model.n_particles();
        let mass_of = |i: usize| -> Result<f64> {
            match masses {
                None => Ok(model.mass()),
                Some(ms) => {
                    if ms.len() != n_particles {
                        return Err(GapError::InvalidParameter(format!(
                            "expected {n_particles} masses, got {}",
                            ms.len()
                        )));
                    }
                    let m = ms[i];
                    if !(m.is_finite() && m > 0.0) {
                        return Err(GapError::InvalidParameter(
                            "masses must be positive".to_string(),
                        ));
                    }
                    Ok(m)
                }
            }
        };
        let mut hbar_over_mass = Vec::with_capacity(dim);
        for j in 0..dim {
            hbar_over_mass.push(model.hbar() / mass_of(j / per_particle)?);
        }
        let unit_orders = (0..dim)
            .map(|j| {
                let mut o = vec![0u32; dim];
                o[j] = 1;
                o
            })
            .collect();
        // Spatial mean of |psi|^2 = ||psi||^2 / volume by orthonormality.
        let threshold = node_threshold_factor * psi.norm_sq() / volume;
        Ok(Self {
            psi,
            hbar_over_mass,
            inv_hbar: 1.0 / model.hbar(),
            threshold,
            unit_orders,
        })
    }

    /// Velocity at configuration q and time t; returns |psi(q, t)|^2.
    fn velocity_at(&self, t: f64, q: &[f64], v: &mut [f64]) -> Result<f64> {
        let spectrum = self.psi.spectrum();
        let model = spectrum.model();
        let dim = v.len();
        let mut value = Complex64::new(0.0, 0.0);
        let mut grad = vec![Complex64::new(0.0, 0.0); dim];
        for (m, c) in spectrum.modes().iter().zip(self.psi.coefficients()) {
            let phase = Complex64::from_polar(1.0, -m.energy * t * self.inv_hbar);
            let ct = c * phase;
            value += ct * model.eval(&m.index, q)?;
            for (j, g) in grad.iter_mut().enumerate() {
                *g += ct * model.eval_derivative(&m.index, q, &self.unit_orders[j])?;
            }
        }
        let psi_sq = value.norm_sqr();
        if psi_sq < self.threshold {
            return Err(GapError::Node {
                location: q.to_vec(),
                psi_sq,
                threshold: self.threshold,
            });
        }
        let conj = value.conj();
        for j in 0..dim {
            v[j] = self.hbar_over_mass[j] * (conj * grad[j]).im / psi_sq;
        }
        Ok(psi_sq)
    }
}

/// The guidance velocity at a single point for psi as given (t = 0).
/// `masses` overrides the model mass per particle.
pub fn velocity(psi: &WaveFunction, q: &[f64], masses: Option<&[f64]>) -> Result<Vec<f64>> {
    Ok(velocity_sample(psi, q, masses)?.v)
}

/// Velocity plus the |psi|^2 evidence backing it.
pub fn velocity_sample(
    psi: &WaveFunction,
    q: &[f64],
    masses: Option<&[f64]>,
) -> Result<VelocitySample> {
    let integrand = Integrand::new(psi, masses, IntegrationTolerances::default().node_threshold_factor)?;
    psi.spectrum().model().validate_point(q)?;
    let mut v = vec![0.0; q.len()];
    let psi_sq = integrand.velocity_at(0.0, q, &mut v)?;
    Ok(VelocitySample {
        q: q.to_vec(),
        v,
        psi_sq,
    })
}

/// Free evolution in the energy eigenbasis: c_n -> e^{-i E_n t/hbar} c_n.
/// Moduli are unchanged, so norms and all modulus-based diagnostics are
/// preserved.
pub fn evolve_coefficients(psi: &WaveFunction, t: f64) -> Result<WaveFunction> {
    if !t.is_finite() {
        return Err(GapError::InvalidParameter(
            "evolution time must be finite".to_string(),
        ));
    }
    let inv_hbar = 1.0 / psi.spectrum().model().hbar();
    let coefficients = psi
        .spectrum()
        .modes()
        .iter()
        .zip(psi.coefficients())
        .map(|(m, c)| c * Complex64::from_polar(1.0, -m.energy * t * inv_hbar))
        .collect();
    psi.with_coefficients(coefficients, Provenance::Derived)
}

/// Why a trajectory ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    /// Step halving hit the floor while a stage sat below the node
    /// threshold (or outside the domain walls, where psi vanishes).
    NodeAbort { t: f64, location: Vec<f64> },
    /// Error control alone pushed the step below the floor.
    StepFloorAbort { t: f64 },
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub t: f64,
    pub q: Vec<f64>,
    pub psi_sq: f64,
    /// Last accepted step size (0 for the initial state).
    pub step: f64,
}

/// An integrated trajectory with its step diagnostics. A non-Completed
/// status is a result, not an error: the states up to the abort stand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<TrajectoryState>,
    pub status: TrajectoryStatus,
    pub min_psi_sq: f64,
    pub rejected_steps: usize,
}

// Fehlberg 4(5) tableau.
const A2: [f64; 1] = [0.25];
const A3: [f64; 2] = [3.0 / 32.0, 9.0 / 32.0];
const A4: [f64; 3] = [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0];
const A5: [f64; 4] = [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0];
const A6: [f64; 5] = [
    -8.0 / 27.0,
    2.0,
    -3544.0 / 2565.0,
    1859.0 / 4104.0,
    -11.0 / 40.0,
];
const C: [f64; 6] = [0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5];
const B5: [f64; 6] = [
    16.0 / 135.0,
    0.0,
    6656.0 / 12825.0,
    28561.0 / 56430.0,
    -9.0 / 50.0,
    2.0 / 55.0,
];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];

/// Integrate dQ/dt = v^{psi(t)}(Q) through the time grid with an adaptive
/// embedded 4(5) pair, recording one state per grid time. psi is the
/// t = 0 wave function; stages evolve it by phase rotation.
pub fn integrate_trajectory(
    psi: &WaveFunction,
    q0: &[f64],
    t_grid: &[f64],
    masses: Option<&[f64]>,
    tolerances: IntegrationTolerances,
) -> Result<Trajectory> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(GapError::InvalidParameter(
            "time grid must be nonempty and finite".to_string(),
        ));
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GapError::InvalidParameter(
            "time grid must be strictly increasing".to_string(),
        ));
    }
    if !(tolerances.per_step.is_finite() && tolerances.per_step > 0.0)
        || !(tolerances.min_step.is_finite() && tolerances.min_step > 0.0)
    {
        return Err(GapError::InvalidParameter(
            "integration tolerances must be positive".to_string(),
        ));
    }
    let model = psi.spectrum().model();
    model.validate_point(q0)?;
    let integrand = Integrand::new(psi, masses, tolerances.node_threshold_factor)?;
    let dim = model.config_dim();
    let wrap = model.kind() == crate::spectral::ModelKind::Circle;

    let mut q = q0.to_vec();
    if wrap {
        wrap_circle(&mut q);
    }
    let mut scratch = vec![0.0; dim];
    // The starting point must be off the nodes; that is the caller's
    // contract, so a violation is an error rather than an abort status.
    let mut psi_sq = integrand.velocity_at(t_grid[0], &q, &mut scratch)?;
    let mut min_psi_sq = psi_sq;
    let mut rejected = 0usize;
    let mut states = vec![TrajectoryState {
        t: t_grid[0],
        q: q.clone(),
        psi_sq,
        step: 0.0,
    }];

    let mut h = ((t_grid[t_grid.len() - 1] - t_grid[0]) / 100.0).min(0.1);
    let mut k = vec![vec![0.0f64; dim]; 6];
    let mut stage_q = vec![0.0f64; dim];
    let mut err_buf = vec![0.0f64; dim];

    for window in t_grid.windows(2) {
        let (start, end) = (window[0], window[1]);
        let mut t = start;
        let mut last_accepted = h;
        while t < end {
            let h_try = h.min(end - t);
            // Six stages; any node/domain failure rejects the step.
            let mut stage_failed = false;
            'stages: for stage in 0..6 {
                for j in 0..dim {
                    let mut acc = 0.0;
                    let weights: &[f64] = match stage {
                        0 => &[],
                        1 => &A2,
                        2 => &A3,
                        3 => &A4,
                        4 => &A5,
                        _ => &A6,
                    };
                    for (s, w) in weights.iter().enumerate() {
                        acc += w * k[s][j];
                    }
                    stage_q[j] = q[j] + h_try * acc;
                }
                if wrap {
                    wrap_circle(&mut stage_q);
                }
                match integrand.velocity_at(t + C[stage] * h_try, &stage_q, &mut k[stage]) {
                    Ok(p) => min_psi_sq = min_psi_sq.min(p),
                    Err(GapError::Node { .. }) | Err(GapError::InvalidParameter(_)) => {
                        stage_failed = true;
                        break 'stages;
                    }
                    Err(e) => return Err(e),
                }
            }
            if stage_failed {
                rejected += 1;
                h = 0.5 * h_try;
                if h < tolerances.min_step {
                    return Ok(Trajectory {
                        states,
                        status: TrajectoryStatus::NodeAbort {
                            t,
                            location: stage_q.clone(),
                        },
                        min_psi_sq,
                        rejected_steps: rejected,
                    });
                }
                continue;
            }

            err_buf.iter_mut().for_each(|e| *e = 0.0);
            for (s, ks) in k.iter().enumerate() {
                let w = B5[s] - B4[s];
                for (e, kv) in err_buf.iter_mut().zip(ks) {
                    *e += w * kv;
                }
            }
            let err = err_buf
                .iter()
                .fold(0.0f64, |m, e| m.max((h_try * e).abs()));
            if err <= tolerances.per_step {
                for j in 0..dim {
                    let mut adv = 0.0;
                    for s in 0..6 {
                        adv += B5[s] * k[s][j];
                    }
                    q[j] += h_try * adv;
                }
                if wrap {
                    wrap_circle(&mut q);
                }
                t += h_try;
                last_accepted = h_try;
                let growth = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * (tolerances.per_step / err).powf(0.2)).clamp(0.2, 5.0)
                };
                h = h_try * growth;
            } else {
                rejected += 1;
                h = h_try * (0.9 * (tolerances.per_step / err).powf(0.2)).clamp(0.1, 0.9);
                if h < tolerances.min_step {
                    return Ok(Trajectory {
                        states,
                        status: TrajectoryStatus::StepFloorAbort { t },
                        min_psi_sq,
                        rejected_steps: rejected,
                    });
                }
            }
        }
        psi_sq = match integrand.velocity_at(end, &q, &mut scratch) {
            Ok(p) => p,
            // The endpoint itself can sit below threshold even though
            // every step succeeded; report it as a node abort there.
            Err(GapError::Node { location, psi_sq, .. }) => {
                min_psi_sq = min_psi_sq.min(psi_sq);
                return Ok(Trajectory {
                    states,
                    status: TrajectoryStatus::NodeAbort { t: end, location },
                    min_psi_sq,
                    rejected_steps: rejected,
                });
            }
            Err(e) => return Err(e),
        };
        min_psi_sq = min_psi_sq.min(psi_sq);
        states.push(TrajectoryState {
            t: end,
            q: q.clone(),
            psi_sq,
            step: last_accepted,
        });
    }
    Ok(Trajectory {
        states,
        status: TrajectoryStatus::Completed,
        min_psi_sq,
        rejected_steps: rejected,
    })
}

/// Independent trajectories from many starting points, in input order.
pub fn integrate_trajectories(
    psi: &Arc<WaveFunction>,
    starts: &[Vec<f64>],
    t_grid: &[f64],
    masses: Option<&[f64]>,
    tolerances: IntegrationTolerances,
) -> Result<Vec<Trajectory>> {
    starts
        .par_iter()
        .map(|q0| integrate_trajectory(psi, q0, t_grid, masses, tolerances))
        .collect()
}

fn wrap_circle(q: &mut [f64]) {
    for x in q.iter_mut() {
        *x = x.rem_euclid(TWO_PI);
    }
}
